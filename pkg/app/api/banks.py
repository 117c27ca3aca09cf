import asyncio

from flask import Blueprint, Response, jsonify, request

from app.services import filterbank_service

banks_bp = Blueprint("banks", __name__)

DEFAULT_IDENTITY_GRID = 64
MAX_IDENTITY_GRID = 512


@banks_bp.route("/banks/<name>", methods=["GET"])
async def describe_bank_route(name: str):
    """Plain-text listing of the bank's filters and parameters."""
    bank = filterbank_service.resolve_bank(name)
    return Response(filterbank_service.describe_bank(bank), mimetype="text/plain")


@banks_bp.route("/banks/<name>/identities", methods=["GET"])
async def bank_identities_route(name: str):
    size = request.args.get("n", DEFAULT_IDENTITY_GRID, type=int)
    if size is None or size > MAX_IDENTITY_GRID:
        return jsonify({"error": f"n must be an even integer up to {MAX_IDENTITY_GRID}"}), 400

    bank = filterbank_service.resolve_bank(name)
    sampled = await asyncio.to_thread(filterbank_service.sample_bank, bank, size)
    report = filterbank_service.verify_bank_identities(sampled)
    return jsonify(
        {
            "bank": bank.key,
            "n": size,
            "deviations": report.deviations,
            "max_deviation": report.max_deviation,
            "passed": report.passed(),
        }
    )
