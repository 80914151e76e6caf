"""The HTTP service: POST /detect and GET /health.

Responses use the engine's detection-record schema. One inference runs
at a time per worker; concurrent requests queue on a lock. The service
is stateless across requests.
"""

from __future__ import annotations

import io
import json
import logging
import threading

import numpy as np
from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError

from .backends import BackendError, build_backend
from .config import BridgeConfig
from .foveation import foveate

log = logging.getLogger("detector_bridge")


def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail})


def create_app(config: BridgeConfig | None = None, load_immediately: bool = True) -> FastAPI:
    config = config or BridgeConfig.from_env()
    app = FastAPI(title="detector-bridge")
    app.state.config = config
    app.state.backend = None
    app.state.load_error = None
    app.state.lock = threading.Lock()

    def load_backend():
        try:
            app.state.backend = build_backend(config.model, config.num_classes)
        except BackendError as exc:
            app.state.load_error = str(exc)
            log.error("backend load failed: %s", exc)

    if load_immediately:
        load_backend()
    app.state.load_backend = load_backend

    @app.get("/health")
    def health(classes: int | None = None):
        if app.state.backend is None:
            detail = app.state.load_error or "model still loading"
            return _error(503, detail)
        if classes is not None and classes != config.num_classes:
            return _error(409, f"service runs {config.num_classes} classes, caller expects {classes}")
        return {"status": "ok", "classes": config.num_classes, "model": app.state.backend.name}

    @app.post("/detect")
    def detect(image: UploadFile | None = File(None), meta: str | None = Form(None)):
        if app.state.backend is None:
            return _error(503, app.state.load_error or "model still loading")
        if image is None:
            return _error(400, "missing multipart part 'image'")
        if meta is None:
            return _error(400, "missing multipart part 'meta'")
        try:
            meta_obj = json.loads(meta)
        except json.JSONDecodeError as exc:
            return _error(400, f"meta part is not valid JSON: {exc}")
        if not isinstance(meta_obj, dict) or "fixation" not in meta_obj:
            return _error(400, "meta must be an object with a 'fixation' field")
        fixation = meta_obj["fixation"]
        if not isinstance(fixation, (list, tuple)) or len(fixation) != 2:
            return _error(422, f"fixation must have exactly 2 coordinates, got {fixation!r}")
        try:
            fx, fy = float(fixation[0]), float(fixation[1])
        except (TypeError, ValueError):
            return _error(422, f"fixation coordinates must be numbers, got {fixation!r}")

        try:
            with Image.open(io.BytesIO(image.file.read())) as im:
                frame = np.asarray(im.convert("RGB"))
        except (UnidentifiedImageError, OSError) as exc:
            return _error(400, f"image part is not a decodable image: {exc}")
        if not (0 <= fx < frame.shape[1] and 0 <= fy < frame.shape[0]):
            return _error(422, f"fixation {(fx, fy)} outside the {frame.shape[1]}x{frame.shape[0]} image")

        if bool(meta_obj.get("foveate", False)):
            frame = foveate(frame, (fx, fy))

        try:
            with app.state.lock:
                boxes, object_scores = app.state.backend.detect(frame)
        except Exception as exc:  # noqa: BLE001 - detector failures map to 500
            log.exception("detector failure")
            return _error(500, f"detector failure: {exc}")

        scores = []
        for vec in object_scores:
            vec = np.asarray(vec, dtype=float)
            padded = np.concatenate([[max(0.0, 1.0 - vec.sum())], vec])
            scores.append((padded / padded.sum()).tolist())
        record = {
            "image_id": (image.filename or "upload").rsplit(".", 1)[0],
            "fixation": [fx, fy],
            "boxes": boxes,
            "scores": scores,
        }
        return JSONResponse(status_code=200, content=record)

    return app
