# backend/app/main.py
import logging
import os
import sys

# Add the backend directory to Python path for imports
BACKEND_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if BACKEND_ROOT not in sys.path:
    sys.path.insert(0, BACKEND_ROOT)

from fastapi import FastAPI, Request, status
from fastapi.responses import JSONResponse

from app import config
from app.exceptions import QdrtError, SampleSizeError, SceneParseError, SceneValidationError
from app.routes.simulation import router as simulation_router

config.configure_logging()
logger = logging.getLogger(__name__)

app = FastAPI(title="qdrt - street-canyon ray tracing", version=config.TOOL_VERSION)

app.include_router(simulation_router)

# problems with the request content itself
_UNPROCESSABLE = (SceneParseError, SceneValidationError, SampleSizeError)


@app.exception_handler(QdrtError)
async def qdrt_error_handler(request: Request, exc: QdrtError):
    if isinstance(exc, _UNPROCESSABLE):
        code = status.HTTP_422_UNPROCESSABLE_ENTITY
    else:
        code = status.HTTP_400_BAD_REQUEST
    logger.warning("%s %s -> %d: %s", request.method, request.url.path, code, exc)
    body = {"detail": str(exc), "error": type(exc).__name__}
    field = getattr(exc, "field", None) or getattr(exc, "constraint", None)
    if field:
        body["field"] = field
    return JSONResponse(status_code=code, content=body)


@app.get("/health")
async def health():
    return {"status": "ok", "version": config.TOOL_VERSION}
