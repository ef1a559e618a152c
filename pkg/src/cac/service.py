"""HTTP service for the inspector UI: browse, probe retrieval, re-run, diff.

Read endpoints always see committed KB revisions (the file is reloaded when
its bytes change, and compile appends are commit-then-rename-free whole-file
writes). Run submission is asynchronous: POST /api/runs returns a run id,
GET /api/runs/{id} is polled for the result. Every non-2xx body is exactly
one ApiError object.
"""

from __future__ import annotations

import threading
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .config import BackendProfile, CacConfig, load_backend_profile
from .embedder import build_embedder
from .errors import BackendError, ConfigurationError, ConflictError, StoreError, ValidationError
from .kb import KnowledgeBase, preview_hits
from .runs import execute_ablate, execute_solve
from .store import is_locked, load_kb, load_manifest, load_problems, load_trace

API_ERROR_CODES = ("not_found", "validation", "conflict", "backend_unavailable")


def api_error(code: str, message: str, detail: dict | None = None) -> dict:
    assert code in API_ERROR_CODES
    return {"code": code, "message": message, "detail": detail or {}}


_STATUS_FOR_CODE = {
    "not_found": 404,
    "validation": 400,
    "conflict": 409,
    "backend_unavailable": 502,
}


class ApiFailure(Exception):
    def __init__(self, code: str, message: str, detail: dict | None = None):
        super().__init__(message)
        self.body = api_error(code, message, detail)
        self.status = _STATUS_FOR_CODE[code]


class RunRequest(BaseModel):
    problem_id: str
    removed_dm_ids: list[str] = []
    backend_profile: str | None = None


@dataclass
class RunRecord:
    run_id: str
    mode: str
    problem_id: str
    status: str = "queued"  # queued | running | completed | failed
    result: dict | None = None
    report: dict | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "mode": self.mode,
            "problem_id": self.problem_id,
            "status": self.status,
            "result": self.result,
            "report": self.report,
            "error": self.error,
        }


@dataclass
class ServiceState:
    config: CacConfig
    base_dir: Path
    kb_cache: tuple[tuple[int, int], KnowledgeBase] | None = None
    runs: dict[str, RunRecord] = field(default_factory=dict)
    profile_locks: dict[str, threading.Semaphore] = field(default_factory=dict)
    registry_lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def kb_path(self) -> Path:
        return self.base_dir / self.config.service.kb

    @property
    def runs_dir(self) -> Path:
        return self.base_dir / self.config.service.runs_dir

    def load_kb(self) -> KnowledgeBase:
        path = self.kb_path
        if not path.exists():
            return KnowledgeBase(embedder_config=self.config.embedder)
        stat = path.stat()
        stamp = (stat.st_mtime_ns, stat.st_size)
        if self.kb_cache and self.kb_cache[0] == stamp:
            return self.kb_cache[1]
        kb = load_kb(path)
        self.kb_cache = (stamp, kb)
        return kb

    def load_problems(self) -> list:
        path = self.base_dir / self.config.service.problems
        if not path.exists():
            return []
        return load_problems(path)

    def resolve_profile(self, name: str | None) -> BackendProfile:
        ref = name or self.config.service.backend_profile
        if not ref:
            raise ApiFailure("backend_unavailable", "no backend profile configured")
        path = self.base_dir / ref
        try:
            return load_backend_profile(path)
        except (ConfigurationError, StoreError) as exc:
            raise ApiFailure("backend_unavailable", f"backend profile {ref!r} unusable: {exc}")

    def profile_gate(self, profile_name: str) -> threading.Semaphore:
        with self.registry_lock:
            if profile_name not in self.profile_locks:
                cap = max(1, self.config.service.max_runs_per_profile)
                self.profile_locks[profile_name] = threading.Semaphore(cap)
            return self.profile_locks[profile_name]


def create_app(config: CacConfig, base_dir: str | Path = ".") -> FastAPI:
    state = ServiceState(config=config, base_dir=Path(base_dir).resolve())
    app = FastAPI(title="cac inspector api", docs_url=None, redoc_url=None)
    app.state.cac = state

    app.add_middleware(
        CORSMiddleware,
        allow_origins=[config.service.cors_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ApiFailure)
    async def _api_failure(_req: Request, exc: ApiFailure):
        return JSONResponse(status_code=exc.status, content=exc.body)

    @app.exception_handler(ValidationError)
    async def _validation(_req: Request, exc: ValidationError):
        return JSONResponse(status_code=400, content=api_error("validation", str(exc)))

    @app.exception_handler(ConflictError)
    async def _conflict(_req: Request, exc: ConflictError):
        return JSONResponse(status_code=409, content=api_error("conflict", str(exc)))

    @app.exception_handler(BackendError)
    async def _backend(_req: Request, exc: BackendError):
        return JSONResponse(status_code=502, content=api_error("backend_unavailable", str(exc)))

    @app.exception_handler(RequestValidationError)
    async def _request_validation(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content=api_error("validation", "malformed request", {"errors": exc.errors()}),
        )

    @app.exception_handler(StoreError)
    async def _store(_req: Request, exc: StoreError):
        return JSONResponse(status_code=404, content=api_error("not_found", str(exc)))

    @app.get("/api/kb")
    def get_kb(limit: int = 50, offset: int = 0) -> dict:
        if limit < 1 or offset < 0:
            raise ApiFailure("validation", "limit must be >= 1 and offset >= 0")
        kb = state.load_kb()
        items = [_dm_payload(dm) for dm in kb.dms[offset : offset + limit]]
        return {"items": items, "total": len(kb.dms), "revision": kb.revision}

    @app.get("/api/kb/{dm_id}")
    def get_dm(dm_id: str) -> dict:
        kb = state.load_kb()
        try:
            dm = kb.get(dm_id)
        except ValidationError:
            raise ApiFailure("not_found", f"no DM with id {dm_id!r}")
        return _dm_payload(dm)

    @app.get("/api/problems")
    def get_problems() -> dict:
        return {"items": [p.to_dict() for p in state.load_problems()]}

    @app.get("/api/retrieve")
    def get_retrieve(goal: str, wm: str = "", k: int = 5) -> dict:
        if not goal.strip():
            raise ApiFailure("validation", "goal must be non-empty")
        if k < 1:
            raise ApiFailure("validation", "k must be >= 1")
        kb = state.load_kb()
        embedder = build_embedder(kb.embedder_config)
        items = preview_hits(kb, goal, wm, k, embedder=embedder, weights=state.config.agent.weights)
        return {"items": items, "revision": kb.revision}

    @app.get("/api/traces")
    def get_traces() -> dict:
        items = []
        runs_dir = state.runs_dir
        if runs_dir.exists():
            for run_dir in sorted(runs_dir.iterdir()):
                manifest_path = run_dir / "manifest.json"
                if not manifest_path.exists():
                    continue
                try:
                    manifest = load_manifest(run_dir)
                except StoreError:
                    continue
                items.append(
                    {
                        "run_id": manifest.run_id,
                        "mode": manifest.mode,
                        "problem_id": manifest.problem_id,
                        "status": manifest.status,
                        "created_at": manifest.created_at,
                        "artifacts": manifest.artifacts,
                    }
                )
        return {"items": items}

    @app.get("/api/traces/{run_id}/{problem_id}")
    def get_trace(run_id: str, problem_id: str, variant: str | None = None) -> dict:
        run_dir = state.runs_dir / run_id
        if not run_dir.exists():
            raise ApiFailure("not_found", f"no run {run_id!r}")
        name = problem_id if variant is None else f"{problem_id}.{variant}"
        trace_path = run_dir / "traces" / f"{name}.jsonl"
        if not trace_path.exists():
            raise ApiFailure("not_found", f"no trace for {name!r} in run {run_id!r}")
        return load_trace(trace_path).to_dict()

    @app.post("/api/runs", status_code=202)
    def post_run(body: RunRequest) -> dict:
        if is_locked(state.kb_path):
            raise ApiFailure(
                "conflict", "a compile run holds the KB writer lock; try again later"
            )
        problems = {p.id: p for p in state.load_problems()}
        if body.problem_id not in problems:
            raise ApiFailure("not_found", f"unknown problem id {body.problem_id!r}")
        kb = state.load_kb()
        unknown = sorted(set(body.removed_dm_ids) - set(kb.ids()))
        if unknown:
            raise ApiFailure("validation", f"unknown DM ids: {unknown}")
        profile = state.resolve_profile(body.backend_profile)
        mode = "ablate" if body.removed_dm_ids else "solve"
        from .store import new_run_id

        run_id = new_run_id(mode)
        record = RunRecord(run_id=run_id, mode=mode, problem_id=body.problem_id)
        with state.registry_lock:
            state.runs[run_id] = record

        problem = problems[body.problem_id]
        removed = list(body.removed_dm_ids)

        def work() -> None:
            gate = state.profile_gate(profile.name)
            with gate:
                record.status = "running"
                try:
                    if mode == "ablate":
                        _, report = execute_ablate(
                            problem, kb, removed, profile, state.config,
                            state.runs_dir, run_id=run_id,
                        )
                        record.report = report.to_dict()
                        record.result = report.base_result.to_dict()
                    else:
                        _, result = execute_solve(
                            problem, kb, profile, state.config, state.runs_dir, run_id=run_id
                        )
                        record.result = result.to_dict()
                    record.status = "completed"
                except Exception as exc:  # recorded, surfaced via polling
                    record.status = "failed"
                    record.error = f"{type(exc).__name__}: {exc}"
                    traceback.print_exc()

        threading.Thread(target=work, daemon=True).start()
        return {"run_id": run_id}

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str) -> dict:
        with state.registry_lock:
            record = state.runs.get(run_id)
        if record is not None:
            return record.to_dict()
        # Fall back to a completed run directory from an earlier process.
        run_dir = state.runs_dir / run_id
        if not run_dir.exists():
            raise ApiFailure("not_found", f"no run {run_id!r}")
        manifest = load_manifest(run_dir)
        payload: dict[str, Any] = {
            "run_id": run_id,
            "mode": manifest.mode,
            "problem_id": manifest.problem_id,
            "status": manifest.status,
            "result": None,
            "report": None,
            "error": None,
        }
        report_path = run_dir / "report.json"
        if report_path.exists():
            import json

            payload["report"] = json.loads(report_path.read_text(encoding="utf-8"))
            payload["result"] = payload["report"].get("base_result")
        elif manifest.problem_id and "trace" in manifest.artifacts:
            payload["result"] = load_trace(run_dir / manifest.artifacts["trace"]).to_dict()
        return payload

    static_dir = config.service.static_dir
    if static_dir:
        static_path = (Path(base_dir) / static_dir).resolve()
        if static_path.exists():
            app.mount("/", StaticFiles(directory=static_path, html=True), name="ui")

    return app


def _dm_payload(dm) -> dict:
    return {
        "id": dm.id,
        "seq": dm.seq,
        "kind": dm.kind,
        "description": dm.description,
        "goal_condition": dm.goal_condition,
        "wm_condition": dm.wm_condition,
        "provenance": dm.provenance.to_dict(),
    }


def serve(config: CacConfig, base_dir: str | Path = ".") -> None:
    import uvicorn

    app = create_app(config, base_dir)
    uvicorn.run(app, host=config.service.host, port=config.service.port, log_level="info")
