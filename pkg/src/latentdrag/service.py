"""HTTP service exposing generation and drag-editing sessions."""
from __future__ import annotations

import threading
import time
import uuid

import torch
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .common import derive_rng
from .correspondence import PointPair
from .errors import NoCorrespondenceError, ParameterError
from .imaging import to_png_base64, to_png_bytes
from .inference import EditRequest, edit
from .persistence import DragModels

DEFAULT_TTL_SECONDS = 3600.0


class SessionRequest(BaseModel):
    seed: int | None = None


class WirePair(BaseModel):
    hx: float
    hy: float
    tx: float
    ty: float


class WireEditRequest(BaseModel):
    pairs: list[WirePair] = Field(min_length=1)
    n_steps: int | None = None
    rounds: int | None = None


class _Session:
    def __init__(self, session_id: str, seed: int, w0: torch.Tensor, image):
        self.id = session_id
        self.seed = seed
        self.w0 = w0
        self.image = image
        self.created_at = time.time()
        self.last_touched = self.created_at
        self.last_result = None


def create_app(
    models: DragModels, checkpoint_hash: str = "", ttl_seconds: float = DEFAULT_TTL_SECONDS
) -> FastAPI:
    app = FastAPI(title="latentdrag", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    gen = models.generator
    sessions: dict[str, _Session] = {}
    lock = threading.Lock()

    def _evict() -> None:
        now = time.time()
        with lock:
            for sid in [s for s, sess in sessions.items() if now - sess.last_touched > ttl_seconds]:
                del sessions[sid]

    def _get(session_id: str) -> _Session:
        with lock:
            sess = sessions.get(session_id)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        sess.last_touched = time.time()
        return sess

    @app.get("/health")
    def health():
        return {"status": "ok", "checkpoint_hash": checkpoint_hash}

    @app.post("/session")
    def create_session(body: SessionRequest):
        _evict()
        seed = body.seed if body.seed is not None else int(uuid.uuid4().int % (1 << 31))
        w0 = gen.sample_latent(derive_rng(seed, "session"))
        with torch.no_grad():
            image = gen.render_image(w0)
        session = _Session(uuid.uuid4().hex, seed, w0, image)
        with lock:
            sessions[session.id] = session
        return {
            "session_id": session.id,
            "seed": seed,
            "image": to_png_base64(image),
            "resolution": gen.config.image_resolution,
        }

    @app.get("/session/{session_id}")
    def session_info(session_id: str):
        sess = _get(session_id)
        return {
            "session_id": sess.id,
            "seed": sess.seed,
            "created_at": sess.created_at,
            "has_result": sess.last_result is not None,
        }

    @app.get("/image/{session_id}")
    def session_image(session_id: str):
        sess = _get(session_id)
        return Response(content=to_png_bytes(sess.image), media_type="image/png")

    @app.post("/session/{session_id}/edit")
    def run_edit(session_id: str, body: WireEditRequest):
        sess = _get(session_id)
        pairs = [PointPair.from_points((p.hx, p.hy), (p.tx, p.ty)) for p in body.pairs]
        try:
            request = EditRequest(
                w0=sess.w0,
                pairs=pairs,
                n_steps=body.n_steps or models.default_steps,
                rounds=body.rounds or 1,
            )
            result = edit(models, gen, request)
        except (ParameterError, NoCorrespondenceError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        sess.image = result.images[-1]
        sess.last_result = result
        return {
            "image": to_png_base64(result.images[-1]),
            "mdd_curve": result.mdd_curve,
            "md_curve": result.md_curve,
            "wall_time_ms": result.wall_time * 1000.0,
            "step_count": len(result.mdd_curve) - 1,
            "synthesis_calls": result.synthesis_calls,
        }

    return app
