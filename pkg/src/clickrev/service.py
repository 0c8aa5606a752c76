"""Real-time revision service: hold per-image sessions, accept boundary
clicks, run the revision model, and return updated contours.

JSON over HTTP; every schema carries an explicit ``"v": 1``.  Images are
uploaded once per session; per-click traffic is a click in and an RLE mask
plus contour polygons out, keeping payloads small enough for interactive use.

Endpoints::

    POST /sessions                 create a session (image + initial mask)
    POST /sessions/{id}/clicks     apply one click, get the revised contour
    POST /sessions/{id}/undo       pop the last revision
    GET  /sessions/{id}            full session snapshot
    GET  /healthz                  liveness + loaded checkpoint
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel, Field

from .checkpoint import load_checkpoint
from .clicks import Click, encode_clicks
from .geometry import contour_polygons, mask_to_rle, rle_to_mask
from .network import NetworkConfig, RevisionInput, RevisionUNet, to_mask

DEFAULT_SESSION_TTL_S = 3600.0
MAX_BODY_BYTES = 32 * 1024 * 1024


class SessionPayload(BaseModel):
    v: int
    image: list[list[float]]
    initial_mask: dict
    display: dict | None = None


class ClickPayload(BaseModel):
    v: int
    click: dict


class UndoPayload(BaseModel):
    v: int = 1


@dataclass
class Session:
    id: str
    image: np.ndarray
    display: dict
    current_mask: np.ndarray
    clicks: list[Click] = dataclass_field(default_factory=list)
    history: list[np.ndarray] = dataclass_field(default_factory=list)
    created: float = dataclass_field(default_factory=time.time)
    updated: float = dataclass_field(default_factory=time.time)
    lock: threading.Lock = dataclass_field(default_factory=threading.Lock)


class SessionStore:
    """In-memory sessions with lazy TTL eviction; lookups hand out the
    per-session lock that serializes clicks in arrival order."""

    def __init__(self, ttl_s: float = DEFAULT_SESSION_TTL_S):
        self.ttl_s = ttl_s
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def _evict_expired(self, now: float) -> None:
        dead = [sid for sid, s in self._sessions.items() if now - s.updated > self.ttl_s]
        for sid in dead:
            del self._sessions[sid]

    def create(self, image: np.ndarray, mask: np.ndarray, display: dict) -> Session:
        session = Session(
            id=uuid.uuid4().hex, image=image, display=display, current_mask=mask
        )
        with self._lock:
            self._evict_expired(time.time())
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            self._evict_expired(time.time())
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    def __len__(self) -> int:
        return len(self._sessions)


class ModelHolder:
    """Atomic pointer to the served model; swap only between requests."""

    def __init__(self, model: RevisionUNet, checkpoint_id: str = ""):
        model.eval()
        self.model = model
        self.checkpoint_id = checkpoint_id

    def swap(self, checkpoint_path) -> None:
        ckpt = load_checkpoint(checkpoint_path)
        model = ckpt.build_model()
        self.checkpoint_id = f"{Path(checkpoint_path).name}@{ckpt.iteration}"
        self.model = model  # attribute assignment is atomic; in-flight requests finish on the old one


def _decode_image(payload: SessionPayload, size: int) -> np.ndarray:
    rows = payload.image
    if len(rows) != size or any(len(r) != size for r in rows):
        raise HTTPException(
            status_code=400,
            detail=f"image must be {size}x{size}, got {len(rows)}x{len(rows[0]) if rows else 0}",
        )
    image = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(image).all() or image.min() < 0.0 or image.max() > 1.0:
        raise HTTPException(status_code=400, detail="image values must be finite and in [0, 1]")
    return image


def _decode_mask(rle: dict, size: int) -> np.ndarray:
    try:
        mask = rle_to_mask(rle)
    except (KeyError, TypeError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=f"bad mask RLE: {exc}") from exc
    if mask.shape != (size, size):
        raise HTTPException(
            status_code=400, detail=f"mask must be {size}x{size}, got {mask.shape}"
        )
    return mask


def _revision_body(session: Session, model_ms: float, started: float) -> dict:
    return {
        "v": 1,
        "session_id": session.id,
        "contours": [[list(p) for p in poly] for poly in contour_polygons(session.current_mask)],
        "mask_rle": mask_to_rle(session.current_mask),
        "empty_mask": not bool(session.current_mask.any()),
        "clicks": [c.to_json() for c in session.clicks],
        "latency_ms": {
            "model": round(model_ms, 3),
            "total": round((time.perf_counter() - started) * 1000.0, 3),
        },
    }


def create_app(
    checkpoint_path=None,
    model: RevisionUNet | None = None,
    checkpoint_id: str = "",
    session_ttl_s: float = DEFAULT_SESSION_TTL_S,
) -> FastAPI:
    """Build the service around a loaded model or a checkpoint file."""
    if model is None:
        if checkpoint_path is None:
            raise ValueError("need a model or a checkpoint_path")
        ckpt = load_checkpoint(checkpoint_path)
        model = ckpt.build_model()
        checkpoint_id = checkpoint_id or f"{Path(checkpoint_path).name}@{ckpt.iteration}"
    holder = ModelHolder(model, checkpoint_id)
    store = SessionStore(ttl_s=session_ttl_s)
    app = FastAPI(title="clickrev revision service")
    app.state.holder = holder
    app.state.store = store

    def input_size() -> int:
        return holder.model.config.input_size

    @app.get("/healthz")
    def healthz() -> dict:
        return {
            "v": 1,
            "status": "ok",
            "checkpoint": holder.checkpoint_id,
            "input_size": input_size(),
            "sessions": len(store),
        }

    @app.post("/sessions", status_code=201)
    async def create_session(payload: SessionPayload, request: Request) -> dict:
        length = request.headers.get("content-length")
        if length and int(length) > MAX_BODY_BYTES:
            raise HTTPException(status_code=413, detail="payload too large")
        if payload.v != 1:
            raise HTTPException(status_code=400, detail=f"unsupported schema version {payload.v}")
        size = input_size()
        image = _decode_image(payload, size)
        mask = _decode_mask(payload.initial_mask, size)
        session = store.create(image, mask, payload.display or {})
        return {
            "v": 1,
            "session_id": session.id,
            "contours": [[list(p) for p in poly] for poly in contour_polygons(mask)],
            "mask_rle": mask_to_rle(mask),
            "empty_mask": not bool(mask.any()),
        }

    @app.post("/sessions/{session_id}/clicks")
    def apply_click(session_id: str, payload: ClickPayload) -> dict:
        if payload.v != 1:
            raise HTTPException(status_code=400, detail=f"unsupported schema version {payload.v}")
        started = time.perf_counter()
        session = store.get(session_id)
        try:
            row, col = int(payload.click["row"]), int(payload.click["col"])
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad click payload: {exc}") from exc
        size = input_size()
        if not (0 <= row < size and 0 <= col < size):
            raise HTTPException(
                status_code=422, detail=f"click ({row}, {col}) outside the {size}x{size} grid"
            )
        with session.lock:
            click = Click(row=row, col=col, ordinal=len(session.clicks) + 1)
            session.clicks.append(click)
            click_map = encode_clicks(session.clicks, session.image.shape)
            rev = RevisionInput(session.image, session.current_mask, click_map)
            model_start = time.perf_counter()
            prob = holder.model.predict(rev)
            model_ms = (time.perf_counter() - model_start) * 1000.0
            session.history.append(session.current_mask)
            session.current_mask = to_mask(prob)
            session.updated = time.time()
            return _revision_body(session, model_ms, started)

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str, payload: UndoPayload | None = None) -> dict:
        started = time.perf_counter()
        session = store.get(session_id)
        with session.lock:
            if not session.history:
                raise HTTPException(status_code=409, detail="nothing to undo")
            session.current_mask = session.history.pop()
            session.clicks.pop()
            session.updated = time.time()
            return _revision_body(session, 0.0, started)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        session = store.get(session_id)
        with session.lock:
            return {
                "v": 1,
                "session_id": session.id,
                "clicks": [c.to_json() for c in session.clicks],
                "history_length": len(session.history),
                "mask_rle": mask_to_rle(session.current_mask),
                "contours": [
                    [list(p) for p in poly] for poly in contour_polygons(session.current_mask)
                ],
                "empty_mask": not bool(session.current_mask.any()),
                "display": session.display,
                "created": session.created,
                "updated": session.updated,
            }

    return app


def serve(checkpoint_path, port: int = 8008, session_ttl_s: float = DEFAULT_SESSION_TTL_S) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    app = create_app(checkpoint_path=checkpoint_path, session_ttl_s=session_ttl_s)
    uvicorn.run(app, host="0.0.0.0", port=port)
