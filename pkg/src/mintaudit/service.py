"""HTTP demonstrator: upload an image, receive a membership-likelihood report.

The registry is loaded once and shared read-only; requests never mutate it.
Uploads are processed in memory and discarded unless the operator opts into
retention — a privacy-audit tool that silently kept user images would defeat
its own purpose.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import io
import logging
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from PIL import Image
from starlette.concurrency import run_in_threadpool

from .registry import AuditError, AuditRegistry, audit_sample

logger = logging.getLogger(__name__)

# Published schema for the report returned by POST /api/audit.
MEMBERSHIP_REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["sample_id", "per_config", "aggregate_likelihood", "disclaimer"],
    "properties": {
        "sample_id": {"type": "string"},
        "aggregate_likelihood": {"type": "number", "minimum": 0, "maximum": 1},
        "disclaimer": {"type": "string"},
        "per_config": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["model_id", "auditable_data", "architecture"],
                "properties": {
                    "model_id": {"type": "string"},
                    "auditable_data": {"type": "string"},
                    "architecture": {"enum": ["vanilla", "cnn"]},
                    "score": {"type": "number", "minimum": 0, "maximum": 1},
                    "decision": {"enum": ["member", "external"]},
                    "error": {"type": "string"},
                },
                "anyOf": [
                    {"required": ["score", "decision"]},
                    {"required": ["error"]},
                ],
            },
        },
    },
}


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"error_code": code, "message": message}, status_code=status)


def create_app(registry: AuditRegistry, *, retain_uploads: bool = False,
               upload_dir=None, max_concurrent: int = 4,
               static_dir=None) -> FastAPI:
    app = FastAPI(title="mintaudit demonstrator")
    gate = asyncio.Semaphore(max_concurrent)

    @app.get("/api/health")
    def health():
        return {"status": "ok", "models": len(registry.entries)}

    @app.get("/api/models")
    def models():
        return registry.configs()

    @app.post("/api/audit")
    async def audit(request: Request):
        content_type = request.headers.get("content-type", "")
        model_id = None
        filename = "upload"
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("image")
            if upload is None or isinstance(upload, str):
                return _error(400, "missing_image", "multipart field 'image' is required")
            data = await upload.read()
            filename = upload.filename or filename
            model_id = form.get("model_id") or None
        elif content_type.startswith("application/json"):
            try:
                body = await request.json()
            except Exception:
                return _error(400, "invalid_json", "request body is not valid JSON")
            encoded = body.get("image_b64")
            if not encoded:
                return _error(400, "empty_payload", "JSON field 'image_b64' is required")
            try:
                data = base64.b64decode(encoded, validate=True)
            except (binascii.Error, ValueError):
                return _error(400, "invalid_image", "image_b64 is not valid base64")
            model_id = body.get("model_id")
        else:
            data = await request.body()
            if not data:
                return _error(400, "empty_payload", "request body is empty")
            return _error(415, "unsupported_media_type",
                          "send multipart/form-data with an 'image' field or JSON "
                          "with 'image_b64'")

        if not data:
            return _error(400, "empty_payload", "uploaded image is empty")
        if model_id is not None and model_id not in registry.model_ids():
            return _error(404, "unknown_model", f"no model with id {model_id!r}")
        try:
            image = Image.open(io.BytesIO(data))
            image.load()
        except Exception:
            return _error(400, "invalid_image", "payload is not a decodable PNG/PGM image")

        if retain_uploads and upload_dir is not None:
            out = Path(upload_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / Path(filename).name).write_bytes(data)

        async with gate:
            try:
                report = await run_in_threadpool(
                    audit_sample, registry, image, "", model_id)
            except AuditError as exc:
                return _error(500, "audit_failed", str(exc))
        return report.to_dict()

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="webui")

    return app


def serve_audit(registry: AuditRegistry, host: str = "127.0.0.1", port: int = 8000,
                **app_options) -> None:
    """Validate the registry, then serve until interrupted."""
    import uvicorn
    app = create_app(registry, **app_options)
    logger.info("serving %d models on %s:%d", len(registry.entries), host, port)
    uvicorn.run(app, host=host, port=port, log_level="info")
