"""Local HTTP API over one session, consumed by the web UI and external tools.

Reads run concurrently; edits and undos hold the writer side of a
readers-writer lock, so they serialize in arrival order and readers always
see a pre- or post-edit snapshot, never a partial mutation.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse
from pydantic import BaseModel

from .errors import SplatEditError
from .session import Session

SPLATS_CHUNK_ROWS = 65536


class RWLock:
    """Writer-preferring readers-writer lock."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False
        self._writers_waiting = 0

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer or self._writers_waiting:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if self._readers == 0:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            self._writers_waiting += 1
            while self._writer or self._readers:
                self._cond.wait()
            self._writers_waiting -= 1
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


class PromptBody(BaseModel):
    prompt: str


class EditBody(BaseModel):
    prompt: str
    kappa: float | None = None
    step_ratio: float | None = None
    max_move_ratio: float | None = None
    inpaint: bool | None = None
    keep_sh_rest: bool | None = None
    knn_k: int | None = None


def create_app(session: Session) -> FastAPI:
    app = FastAPI(title="splatedit", version="0.1.0")
    lock = RWLock()

    @app.exception_handler(SplatEditError)
    async def _splatedit_error(_request: Request, exc: SplatEditError):
        payload = {"error": str(exc), "stage": exc.stage, "type": type(exc).__name__}
        trace = getattr(exc, "trace", None)
        if trace is not None:
            payload["trace"] = trace.to_json()
        return JSONResponse(status_code=400, content=payload)

    @app.get("/scene/meta")
    def scene_meta():
        with lock.read():
            return session.meta()

    @app.get("/scene/splats")
    def scene_splats():
        with lock.read():
            # snapshot under the lock; stream outside it
            records = np.ascontiguousarray(session.scene.records(), dtype="<f4")
            count = len(session.scene)

        def chunks():
            for start in range(0, count, SPLATS_CHUNK_ROWS):
                yield records[start:start + SPLATS_CHUNK_ROWS].tobytes()

        headers = {"X-Splat-Count": str(count)}
        return StreamingResponse(chunks(), media_type="application/octet-stream",
                                 headers=headers)

    @app.post("/ground")
    def ground_endpoint(body: PromptBody):
        with lock.read():
            bundle, cache_hit, _ = session.ground_prompt(body.prompt)
            return {"cache_hit": cache_hit, **bundle.to_json()}

    @app.post("/edit")
    def edit_endpoint(body: EditBody):
        overrides = body.model_dump(exclude_none=True)
        prompt = overrides.pop("prompt")
        with lock.write():
            outcome = session.edit(prompt, **overrides)
            return {
                "journal_id": outcome.journal_id,
                "timings": outcome.timings,
                "entry": outcome.entry.describe(),
                "grounding": outcome.bundle.to_json(),
            }

    @app.post("/undo")
    def undo_endpoint():
        with lock.write():
            entry = session.undo()
            return {"undone": entry.describe(), "journal_length": len(session.journal)}

    @app.get("/history")
    def history_endpoint():
        with lock.read():
            return session.history()

    @app.get("/preview.png")
    def preview_endpoint(
        azimuth: float = Query(45.0),
        elevation: float = Query(30.0),
        width: int = Query(512, ge=16, le=2048),
        height: int = Query(512, ge=16, le=2048),
        crop_id: int | None = Query(None),
        highlight_id: int | None = Query(None),
    ):
        with lock.read():
            image = session.preview(
                azimuth=azimuth, elevation=elevation, width=width, height=height,
                crop_id=crop_id, highlight_id=highlight_id,
            )
        return Response(content=image.to_png(), media_type="image/png")

    return app


def serve(session: Session, host: str = "127.0.0.1", port: int = 7331) -> None:
    import uvicorn

    uvicorn.run(create_app(session), host=host, port=port, log_level="info")
