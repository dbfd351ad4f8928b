"""Service layer: content-addressed storage, job management, and the
HTTP API binding the colorization pipeline together."""

from .jobs import DONE, FAILED, QUEUED, RUNNING, JobRecord, JobTable, WorkerPool
from .service import AppState, ServiceUnavailable, make_app, make_thumbnail
from .store import CorruptionError, ImageStore, NotFoundError, content_id

__all__ = [
    "AppState",
    "CorruptionError",
    "DONE",
    "FAILED",
    "ImageStore",
    "JobRecord",
    "JobTable",
    "NotFoundError",
    "QUEUED",
    "RUNNING",
    "ServiceUnavailable",
    "WorkerPool",
    "content_id",
    "make_app",
    "make_thumbnail",
]
