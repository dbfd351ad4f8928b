"""Application state and the HTTP API surface.

Endpoints (JSON bodies unless noted):

    POST /api/images                 raw PNG body -> {"image_id": ...}
    GET  /api/recommendations/{id}?k=K -> [{reference_id, score, thumb}]
    POST /api/colorize               {target_id, reference_id} -> {job_id}
    GET  /api/jobs/{job_id}          -> {state, result_id?, error?}
    GET  /api/images/{id}.png        -> PNG bytes
    GET  /                           -> UI assets

Recommendation queries run on request threads and never wait on the
colorization workers.
"""

from __future__ import annotations

import io
import json
import os
import threading
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse, Response
from PIL import Image

from ..bundle import bundle_digest
from ..colornet import colorize
from ..correspondence import MatchConfig
from ..imagecolor import lab_to_rgb, rgb_to_lab
from ..retrieval import ReferenceIndex, load_index, recommend, save_index
from .jobs import DONE, FAILED, RUNNING, JobTable, WorkerPool
from .store import CorruptionError, ImageStore, NotFoundError, content_id

THUMB_SHORT_EDGE = 128


def make_thumbnail(data: bytes, short_edge: int = THUMB_SHORT_EDGE) -> bytes:
    with Image.open(io.BytesIO(data)) as img:
        img = img.convert("RGB")
        scale = short_edge / min(img.width, img.height)
        if scale < 1.0:
            img = img.resize((max(1, round(img.width * scale)),
                              max(1, round(img.height * scale))))
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()


def _png_bytes(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _luminance_of(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return rgb_to_lab(np.asarray(img.convert("RGB"))).L


class AppState:
    """Everything the handlers share. The store and job table are safe
    for concurrent use; index and weights are immutable once set."""

    def __init__(self, store: Optional[ImageStore] = None,
                 index: Optional[ReferenceIndex] = None, encoder=None,
                 net=None, match_config: MatchConfig = MatchConfig(),
                 worker_count: int = 2, queue_depth: int = 64,
                 state_dir: Optional[str] = None):
        self.store = store or ImageStore(state_dir)
        self.index = index
        self.encoder = encoder
        self.net = net
        self.match_config = match_config
        self.jobs = JobTable()
        self.pool = WorkerPool(worker_count, queue_depth)
        self.state_dir = state_dir
        self.thumbs = {}          # index entry id -> thumbnail blob id
        self._cache_lock = threading.Lock()
        self.result_cache = {}    # cache key -> result blob id

    # -- persistence ----------------------------------------------------------

    def _path(self, name):
        return os.path.join(self.state_dir, name)

    def persist(self) -> None:
        if not self.state_dir:
            raise ValueError("no state directory configured")
        os.makedirs(self.state_dir, exist_ok=True)
        with open(self._path("jobs.json"), "w", encoding="utf-8") as fh:
            fh.write(self.jobs.to_json())
        with open(self._path("cache.json"), "w", encoding="utf-8") as fh:
            json.dump({"|".join(k): v for k, v in self.result_cache.items()},
                      fh, sort_keys=True)
        with open(self._path("thumbs.json"), "w", encoding="utf-8") as fh:
            json.dump(self.thumbs, fh, sort_keys=True)
        if self.index is not None:
            save_index(self.index, self._path("index.cidx"))

    def restore(self) -> None:
        """Load persisted state and verify every blob hash."""
        if not self.state_dir:
            return
        self.store.verify()
        if os.path.exists(self._path("jobs.json")):
            with open(self._path("jobs.json"), "r", encoding="utf-8") as fh:
                self.jobs = JobTable.from_json(fh.read())
        if os.path.exists(self._path("cache.json")):
            with open(self._path("cache.json"), "r", encoding="utf-8") as fh:
                self.result_cache = {tuple(k.split("|")): v
                                     for k, v in json.load(fh).items()}
        if os.path.exists(self._path("thumbs.json")):
            with open(self._path("thumbs.json"), "r", encoding="utf-8") as fh:
                self.thumbs = json.load(fh)
        if self.index is None and os.path.exists(self._path("index.cidx")):
            self.index = load_index(self._path("index.cidx"))

    # -- thumbnails ------------------------------------------------------------

    def ingest_index_images(self) -> None:
        """Pull index source images into the store and build thumbnails.
        Sources whose locator no longer resolves are skipped."""
        if self.index is None:
            return
        for entry in self.index.entries:
            if entry.id in self.thumbs:
                continue
            if not os.path.exists(entry.locator):
                continue
            with open(entry.locator, "rb") as fh:
                data = fh.read()
            stored = self.store.put(data, kind="reference")
            thumb_id = self.store.put(make_thumbnail(data), kind="thumbnail")
            self.thumbs[stored] = thumb_id

    # -- operations -------------------------------------------------------------

    def put_image(self, data: bytes) -> str:
        return self.store.put(data)

    def weights_key(self) -> str:
        if self.encoder is None or self.net is None:
            return "unconfigured"
        return bundle_digest(self.encoder, self.net)

    def _cache_key(self, target_id, reference_id):
        return (target_id, reference_id, self.weights_key(),
                content_id(repr(self.match_config).encode()))

    def submit_colorization(self, target_id: str, reference_id: str) -> str:
        """Enqueue a job; cache hits complete immediately with the cached
        result id."""
        for image_id in (target_id, reference_id):
            if not self.store.exists(image_id):
                raise NotFoundError(image_id)
        if self.encoder is None or self.net is None:
            raise ServiceUnavailable("no model weights loaded")
        job = self.jobs.create(target_id, reference_id)
        key = self._cache_key(target_id, reference_id)
        with self._cache_lock:
            cached = self.result_cache.get(key)
        if cached is not None and self.store.exists(cached):
            self.jobs.transition(job.job_id, DONE, result_id=cached)
            return job.job_id
        self.pool.submit(lambda: self._run_job(job.job_id, key))
        return job.job_id

    def _run_job(self, job_id: str, key) -> None:
        job = self.jobs.get(job_id)
        try:
            self.jobs.transition(job_id, RUNNING)
            t_l = _luminance_of(self.store.get(job.target_id))
            with Image.open(io.BytesIO(self.store.get(job.reference_id))) as img:
                ref = rgb_to_lab(np.asarray(img.convert("RGB")))
            result = colorize(t_l, ref, self.encoder, self.net,
                              self.match_config)
            result_id = self.store.put(_png_bytes(lab_to_rgb(result)),
                                       kind="result")
            with self._cache_lock:
                self.result_cache[key] = result_id
            self.jobs.transition(job_id, DONE, result_id=result_id)
        except Exception as e:  # failure lands in the record, not the worker
            self.jobs.transition(job_id, FAILED, error=str(e))

    def recommendations(self, image_id: str, k: int):
        if self.index is None or self.encoder is None:
            raise ServiceUnavailable("no reference index loaded")
        if not self.store.exists(image_id):
            raise NotFoundError(image_id)
        t_l = _luminance_of(self.store.get(image_id))
        ranked = recommend(t_l, self.index, self.encoder, k=k)
        out = []
        for rid, score in ranked:
            thumb = self.thumbs.get(rid)
            out.append({
                "reference_id": rid,
                "score": score,
                "thumb": f"/api/images/{thumb}.png" if thumb else None,
            })
        return out

    def shutdown(self):
        self.pool.shutdown()


class ServiceUnavailable(RuntimeError):
    pass


def make_app(state: AppState, ui_dir: Optional[str] = None):
    """FastAPI application over one AppState."""
    app = FastAPI(title="chromatix", docs_url=None, redoc_url=None)
    app.state.chromatix = state

    def error(status, message):
        return JSONResponse({"error": message}, status_code=status)

    @app.post("/api/images")
    async def post_image(request: Request):
        data = await request.body()
        try:
            image_id = state.put_image(data)
        except Exception:
            return error(400, "body must be a decodable PNG image")
        return {"image_id": image_id}

    @app.get("/api/recommendations/{image_id}")
    def get_recommendations(image_id: str, k: int = 5):
        try:
            return state.recommendations(image_id, k)
        except ServiceUnavailable as e:
            return error(503, str(e))
        except NotFoundError:
            return error(404, f"unknown image {image_id}")

    @app.post("/api/colorize")
    async def post_colorize(request: Request):
        body = await request.json()
        target_id = body.get("target_id")
        reference_id = body.get("reference_id")
        if not target_id or not reference_id:
            return error(400, "target_id and reference_id are required")
        try:
            job_id = state.submit_colorization(target_id, reference_id)
        except NotFoundError as e:
            return error(404, f"unknown image {e.args[0]}")
        except ServiceUnavailable as e:
            return error(503, str(e))
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            job = state.jobs.get(job_id)
        except NotFoundError:
            return error(404, f"unknown job {job_id}")
        payload = {"state": job.state}
        if job.result_id is not None:
            payload["result_id"] = job.result_id
        if job.error is not None:
            payload["error"] = job.error
        return payload

    @app.get("/api/images/{image_id}.png")
    def get_image(image_id: str):
        try:
            data = state.store.get(image_id)
        except NotFoundError:
            return error(404, f"unknown image {image_id}")
        return Response(content=data, media_type="image/png")

    @app.get("/")
    def root():
        if ui_dir:
            index_path = os.path.join(ui_dir, "index.html")
            if os.path.exists(index_path):
                with open(index_path, "r", encoding="utf-8") as fh:
                    return HTMLResponse(fh.read())
        return HTMLResponse(
            "<html><body><h1>chromatix</h1><p>API is up; no UI bundle "
            "installed.</p></body></html>")

    if ui_dir and os.path.isdir(ui_dir):
        from fastapi.staticfiles import StaticFiles

        # a vite build keeps hashed files under <dist>/assets
        asset_root = os.path.join(ui_dir, "assets")
        if not os.path.isdir(asset_root):
            asset_root = ui_dir
        app.mount("/assets", StaticFiles(directory=asset_root), name="assets")

    return app
