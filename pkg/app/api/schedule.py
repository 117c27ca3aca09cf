from flask import Blueprint, jsonify, request

from app.services import inpaint_service

schedule_bp = Blueprint("schedule", __name__)


@schedule_bp.route("/schedule", methods=["GET"])
async def schedule_route():
    """Threshold schedule for a noise level and missing ratio."""
    sigma = request.args.get("sigma", 0.0, type=float)
    r = request.args.get("r", type=float)
    if r is None:
        return jsonify({"error": "query parameter r (missing ratio) is required"}), 400

    schedule = inpaint_service.make_schedule(sigma, r)
    payload = schedule.model_dump()
    payload["thresholds"] = schedule.thresholds
    return jsonify(payload)
