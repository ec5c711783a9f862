"""Local HTTP service for interactive knob exploration.

Loads checkpoints and raw images from an allow-listed asset directory,
keeps one packed-raw cache per session, and renders previews/exports on
demand. This is a localhost tool: no auth, loopback binding by default,
and no training; loaded model weights are immutable for the lifetime of
the process.
"""

from __future__ import annotations

import io
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from .checkpoint import load_checkpoint
from .dataio import read_raw
from .errors import FormatError, KnobRangeError, LuxtuneError, ShapeError
from .experiments import brightness_only_baseline
from .network import EnhancerModel
from .rawproc import (
    ALPHA2_EXTENDED_RANGE,
    ALPHA2_RANGE,
    MAX_BRIGHTNESS_RATIO,
    PackedRaw,
    TuningKnobs,
    pack_bayer,
)

DEFAULT_PREVIEW_SCALE = 0.5


@dataclass
class Session:
    """One interactive tuning session: model + packed image + render lock."""

    session_id: str
    checkpoint_name: str
    image_name: str
    model: EnhancerModel
    packed: PackedRaw
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_knobs: Optional[Tuple[float, float]] = None


def _encode_png(image: np.ndarray) -> bytes:
    from PIL import Image

    arr = (np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _downscale_packed(packed: PackedRaw, scale: float, depth: int) -> PackedRaw:
    """Nearest subsampling plus a center crop to a 2^depth-divisible size."""
    if not 0.0 < scale <= 1.0:
        raise KnobRangeError(f"scale={scale} outside legal range (0, 1]", 0.0, 1.0)
    stride = max(1, int(round(1.0 / scale)))
    data = packed.data[:, ::stride, ::stride]
    div = 2**depth
    h, w = data.shape[1], data.shape[2]
    ch, cw = (h // div) * div, (w // div) * div
    if ch < div or cw < div:
        raise ShapeError(
            f"preview at scale {scale} would be {h}x{w}, smaller than 2^depth={div}"
        )
    y0, x0 = (h - ch) // 2, (w - cw) // 2
    return PackedRaw(data=np.ascontiguousarray(data[:, y0 : y0 + ch, x0 : x0 + cw]))


class SessionCreate(BaseModel):
    checkpoint: str
    image: str


def create_app(
    checkpoint_dir: Path,
    extrapolate: bool = False,
    preview_scale: float = DEFAULT_PREVIEW_SCALE,
    ui_dir: Optional[Path] = None,
) -> FastAPI:
    """Build the service app around one allow-listed asset directory."""
    assets = Path(checkpoint_dir)
    app = FastAPI(title="luxtune tuning service")
    sessions: Dict[str, Session] = {}
    sessions_lock = threading.Lock()
    model_cache: Dict[str, EnhancerModel] = {}

    def resolve_asset(name: str, suffix: str) -> Path:
        if "/" in name or "\\" in name or name.startswith(".") or not name:
            raise HTTPException(status_code=404, detail=f"unknown asset {name!r}")
        path = assets / name
        if path.suffix != suffix or not path.exists():
            raise HTTPException(
                status_code=404, detail=f"asset {name!r} not found in {assets}"
            )
        return path

    def get_session(session_id: str) -> Session:
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    def knobs_or_400(alpha1: float, alpha2: float) -> TuningKnobs:
        try:
            return TuningKnobs(alpha1=alpha1, alpha2=alpha2, extended=extrapolate).validate()
        except KnobRangeError as e:
            raise HTTPException(
                status_code=400,
                detail={"error": str(e), "legal_range": [e.lo, e.hi]},
            )

    def render_png(session: Session, knobs: TuningKnobs, scale: Optional[float]) -> Response:
        started = time.perf_counter()
        with session.lock:
            packed = session.packed
            if scale is not None and scale < 1.0:
                packed = _downscale_packed(packed, scale, session.model.config.depth)
            srgb = session.model.enhance(packed, knobs)
            session.last_knobs = (knobs.alpha1, knobs.alpha2)
        png = _encode_png(srgb)
        millis = (time.perf_counter() - started) * 1000.0
        return Response(
            content=png,
            media_type="image/png",
            headers={
                "X-Render-Millis": f"{millis:.2f}",
                "Cache-Control": "no-store",
            },
        )

    @app.get("/healthz")
    def healthz():
        with sessions_lock:
            n = len(sessions)
        return {"status": "ok", "sessions": n, "models_loaded": len(model_cache)}

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionCreate):
        ckpt_path = resolve_asset(body.checkpoint, ".lxck")
        image_path = resolve_asset(body.image, ".lxrw")
        try:
            if body.checkpoint not in model_cache:
                model_cache[body.checkpoint] = load_checkpoint(ckpt_path)
            model = model_cache[body.checkpoint]
            raw = read_raw(image_path)
            packed = pack_bayer(raw)
            div = 2**model.config.depth
            if packed.height % div or packed.width % div:
                raise ShapeError(
                    f"packed image {packed.height}x{packed.width} is not divisible "
                    f"by 2^depth={div}"
                )
        except (ShapeError, FormatError) as e:
            raise HTTPException(status_code=422, detail=str(e))

        session = Session(
            session_id=uuid.uuid4().hex[:12],
            checkpoint_name=body.checkpoint,
            image_name=body.image,
            model=model,
            packed=packed,
        )
        with sessions_lock:
            sessions[session.session_id] = session
        lo, hi = ALPHA2_EXTENDED_RANGE if extrapolate else ALPHA2_RANGE
        return {
            "session_id": session.session_id,
            "trained_anchors": [list(a) for a in model.anchors],
            "knob_bounds": {
                "alpha1": [1.0, MAX_BRIGHTNESS_RATIO],
                "alpha2": [lo, hi],
            },
            "image_size": {
                "packed": [packed.height, packed.width],
                "output": list(packed.mosaic_shape),
            },
        }

    @app.get("/sessions/{session_id}/preview")
    def preview(session_id: str, alpha1: float, alpha2: float, scale: Optional[float] = None):
        session = get_session(session_id)
        knobs = knobs_or_400(alpha1, alpha2)
        try:
            return render_png(session, knobs, scale if scale is not None else preview_scale)
        except KnobRangeError as e:
            raise HTTPException(status_code=400, detail={"error": str(e)})
        except LuxtuneError as e:
            raise HTTPException(status_code=422, detail=str(e))

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str, alpha1: float, alpha2: float):
        session = get_session(session_id)
        knobs = knobs_or_400(alpha1, alpha2)
        try:
            return render_png(session, knobs, scale=None)
        except LuxtuneError as e:
            raise HTTPException(status_code=422, detail=str(e))

    @app.get("/sessions/{session_id}/baseline")
    def baseline(session_id: str, alpha1: float, scale: Optional[float] = None):
        """Brightness-only rendition for the UI's compare mode."""
        session = get_session(session_id)
        knobs = knobs_or_400(alpha1, 0.0)
        started = time.perf_counter()
        with session.lock:
            packed = session.packed
            s = scale if scale is not None else preview_scale
            if s < 1.0:
                packed = _downscale_packed(packed, s, session.model.config.depth)
            srgb = brightness_only_baseline(packed, knobs.alpha1)
        png = _encode_png(srgb)
        millis = (time.perf_counter() - started) * 1000.0
        return Response(
            content=png,
            media_type="image/png",
            headers={"X-Render-Millis": f"{millis:.2f}", "Cache-Control": "no-store"},
        )

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
