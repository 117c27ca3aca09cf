import asyncio

from flask import Blueprint, jsonify, request

from app.services import balanced_service

verify_bp = Blueprint("verify", __name__)

MAX_GROUPING_INSTANCES = 50


def _grouping_reports(seed: int, count: int) -> list[balanced_service.GroupingReport]:
    return [
        balanced_service.verify_grouping(problem, seed=instance_seed)
        for instance_seed, problem in balanced_service.grouping_corpus(seed, count)
    ]


@verify_bp.route("/verify/grouping", methods=["GET"])
async def verify_grouping_route():
    seed = request.args.get("seed", 0, type=int)
    count = request.args.get("count", 10, type=int)
    if count is None or not 1 <= count <= MAX_GROUPING_INSTANCES:
        return jsonify({"error": f"count must lie in 1..{MAX_GROUPING_INSTANCES}"}), 400

    reports = await asyncio.to_thread(_grouping_reports, seed, count)
    return jsonify(
        {
            "seed": seed,
            "count": count,
            "violations": sum(report.violations for report in reports),
            "passed": all(report.passed for report in reports),
            "instances": [
                {
                    "seed": report.seed,
                    "d": report.d,
                    "n": report.n,
                    "kappa": report.kappa,
                    "worst_margin": report.worst_margin,
                    "kkt": report.kkt,
                    "converged": report.converged,
                    "passed": report.passed,
                }
                for report in reports
            ],
        }
    )
