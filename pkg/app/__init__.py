import logging
import os
import secrets
import time
from typing import Optional

from flask import Flask, jsonify, request
from flask_cors import CORS
from flask_limiter import Limiter
from flask_limiter.util import get_remote_address
from werkzeug.middleware.proxy_fix import ProxyFix

from cache import BANK_CACHE

from .api.banks import banks_bp
from .api.inpaint import inpaint_bp
from .api.schedule import schedule_bp
from .api.verify import verify_bp
from .cli import cli as inpainting_cli
from .config import config_by_name
from .errors import InpaintingError

LOOPBACK_ADDRS = frozenset({"127.0.0.1", "::1", "::ffff:127.0.0.1"})


def _request_api_key() -> Optional[str]:
    """Key from X-API-Key, falling back to an Authorization bearer token."""
    header_key = request.headers.get("X-API-Key", "").strip()
    if header_key:
        return header_key
    scheme, _, token = request.headers.get("Authorization", "").partition(" ")
    if scheme == "Bearer" and token.strip():
        return token.strip()
    return None


def _configure_logging(app: Flask) -> None:
    level = getattr(logging, str(app.config["LOG_LEVEL"]).upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    app.logger.setLevel(level)


def create_app(config_name="default"):
    """Flask application factory pattern."""
    app = Flask(__name__.split(".")[0])
    app.url_map.strict_slashes = False

    flask_config_name = os.getenv("FLASK_CONFIG") or config_name
    app.config.from_object(config_by_name[flask_config_name])
    _configure_logging(app)
    BANK_CACHE.resize(app.config["BANK_CACHE_SIZE"])

    app.wsgi_app = ProxyFix(app.wsgi_app, x_for=1, x_proto=1, x_host=1, x_port=1)

    Limiter(
        get_remote_address,
        app=app,
        default_limits=app.config["RATE_LIMITS"],
        storage_uri="memory://",
    )

    CORS(
        app,
        resources={
            r"/*": {
                "origins": app.config["CORS_ORIGINS"],
                "methods": ["GET", "POST", "OPTIONS"],
                "allow_headers": ["Content-Type", "X-API-Key", "Authorization"],
                "supports_credentials": True,
                # clients read the solver outcome from these
                "expose_headers": ["Content-Type", "X-Iterations", "X-Converged", "X-Elapsed-Seconds"],
                "max_age": 3600,
            }
        },
    )

    @app.before_request
    def require_api_key():
        request.start_time = time.time()
        if request.method == "OPTIONS" or request.path in app.config["PUBLIC_PATHS"]:
            return None
        if app.config["DEBUG"] and request.remote_addr in LOOPBACK_ADDRS:
            return None
        if not app.config.get("API_KEY_REQUIRED", True):
            return None

        expected = os.environ.get("API_KEY")
        if not expected:
            app.logger.error("[require_api_key] API_KEY_REQUIRED is set but API_KEY is empty")
            return jsonify({"error": "Server authentication is not configured"}), 500

        provided = _request_api_key()
        if provided is None or not secrets.compare_digest(provided, expected):
            return jsonify({"error": "Unauthorized access"}), 401
        return None

    @app.after_request
    def add_response_headers(response):
        response.headers["X-Content-Type-Options"] = "nosniff"
        response.headers["X-Frame-Options"] = "DENY"
        response.headers["Strict-Transport-Security"] = "max-age=31536000; includeSubDomains"
        started = getattr(request, "start_time", None)
        if started is not None:
            response.headers["X-Elapsed-Seconds"] = f"{time.time() - started:.3f}"
        return response

    @app.errorhandler(InpaintingError)
    def handle_inpainting_error(error):
        app.logger.info("[%s] %s", request.path, error)
        return jsonify({"error": str(error)}), 400

    for blueprint in (banks_bp, schedule_bp, inpaint_bp, verify_bp):
        app.register_blueprint(blueprint)
    app.cli.add_command(inpainting_cli)

    @app.route("/")
    def index():
        return "API is running!"

    return app
