import asyncio
import math

import numpy as np
from flask import Blueprint, Response, jsonify, request

from app.clients import pgm_client
from app.services import experiment_service
from app.utils.calculations import psnr

inpaint_bp = Blueprint("inpaint", __name__)

PGM_MIMETYPE = "image/x-portable-graymap"


def _uploaded_pgm(field: str):
    upload = request.files.get(field)
    if upload is None:
        return None
    return pgm_client.parse_pgm(upload.read())


@inpaint_bp.route("/inpaint", methods=["POST"])
async def inpaint_route():
    """Inpaint an uploaded PGM; the mask is uploaded or drawn from rate and seed."""
    image = _uploaded_pgm("image")
    if image is None:
        return jsonify({"error": "multipart field 'image' is required"}), 400

    form = request.form
    mask_pixels = _uploaded_pgm("mask")
    if mask_pixels is not None:
        mask = pgm_client.mask_from_pixels(mask_pixels)
    else:
        rate = form.get("rate", type=float)
        if rate is None:
            return jsonify({"error": "upload a mask or give a missing rate"}), 400
        height, width = image.shape
        mask = experiment_service.gen_random_mask(width, height, rate, form.get("seed", 0, type=int))

    y = np.where(mask.observed, image, 0.0)
    result = await asyncio.to_thread(
        experiment_service.run_algorithm,
        form.get("algorithm", "tpctf6"),
        y,
        mask,
        form.get("sigma", 0.0, type=float),
        form.get("levels", type=int),
        form.get("paste_observed", type=lambda value: value.lower() in {"1", "true", "yes", "on"}),
    )
    return Response(
        pgm_client.encode_pgm(np.clip(result.image, 0.0, 255.0)),
        mimetype=PGM_MIMETYPE,
        headers={
            "X-Iterations": str(result.iterations),
            "X-Converged": "true" if result.converged else "false",
        },
    )


@inpaint_bp.route("/psnr", methods=["POST"])
async def psnr_route():
    reference = _uploaded_pgm("ref")
    candidate = _uploaded_pgm("test")
    if reference is None or candidate is None:
        return jsonify({"error": "multipart fields 'ref' and 'test' are required"}), 400
    value = psnr(reference, candidate)
    return jsonify({"psnr": "inf" if math.isinf(value) else value})
