import asyncio
import logging
import os

from asgiref.wsgi import WsgiToAsgi

from app import create_app
from app.errors import InpaintingError
from app.services import filterbank_service
from cache import clear_all

logger = logging.getLogger(__name__)

config_name = os.getenv("FLASK_CONFIG", "prod")
flask_app = create_app(config_name)

_application = WsgiToAsgi(flask_app.wsgi_app)


def warm_banks(names, size: int) -> int:
    """Sample the named banks at size x size so the first request skips the build."""
    for name in names:
        filterbank_service.sample_bank(filterbank_service.resolve_bank(name), size)
    return len(names)


async def _startup() -> None:
    names = flask_app.config["WARM_BANKS"]
    if names:
        count = await asyncio.to_thread(warm_banks, names, flask_app.config["WARM_BANK_SIZE"])
        logger.info("[startup] sampled %d bank(s) at %d", count, flask_app.config["WARM_BANK_SIZE"])


async def application(scope, receive, send):
    if scope["type"] != "lifespan":
        await _application(scope, receive, send)
        return
    while True:
        message = await receive()
        if message["type"] == "lifespan.startup":
            try:
                await _startup()
            except InpaintingError as error:
                await send({"type": "lifespan.startup.failed", "message": str(error)})
                return
            await send({"type": "lifespan.startup.complete"})
        elif message["type"] == "lifespan.shutdown":
            clear_all()
            await send({"type": "lifespan.shutdown.complete"})
            return
