"""HTTP front end: synchronous solves plus background jobs with a live trace."""

from __future__ import annotations

import threading
import uuid
from contextlib import asynccontextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

from fastapi import FastAPI, HTTPException

from dwmap import __version__
from dwmap.baselines import StateSpaceTooLarge
from dwmap.decomposition import DWConfig, DWState
from dwmap.formats import ModelFormatError, model_from_dict
from dwmap.model import GraphError
from dwmap.relaxation import RelaxationError
from dwmap.rounding import RoundingError
from dwmap.runtime import ThreadPricer
from dwmap.service.schemas import JobStatus, SolveOptions, SolveRequest, SolveResponse, TraceItem
from dwmap.sideconstraints import SideConstraintError
from dwmap.solve import SolveError, SolveResult, solve

BAD_INPUT = (GraphError, ModelFormatError, SideConstraintError, ValueError)
BAD_BACKEND = (SolveError, StateSpaceTooLarge, RelaxationError, RoundingError)


def _config(opts: SolveOptions) -> DWConfig:
    return DWConfig(
        max_iters=opts.max_iters,
        columns_per_iter=opts.columns_per_iter,
        purge_after_seconds=opts.purge_after_seconds,
        tie_rule=opts.tie_rule,
        tol=opts.tol,
        round_eps=opts.round_eps,
    )


def _response(result: SolveResult) -> SolveResponse:
    record = result.record()
    return SolveResponse(**record, trace=[TraceItem(**asdict(t)) for t in result.trace])


def run_request(req: SolveRequest, callback=None) -> SolveResponse:
    g, constraints = model_from_dict(req.model.model_dump())
    opts = req.options
    factory = (lambda subs: ThreadPricer(subs, opts.workers)) if opts.workers > 1 else None
    result = solve(g, opts.backend, constraints, _config(opts), factory, callback, damping=opts.damping)
    return _response(result)


class JobStore:
    def __init__(self, max_workers: int = 2):
        self._jobs: dict[str, JobStatus] = {}
        self._lock = threading.Lock()
        self._executor = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="dwmap-job")

    def submit(self, req: SolveRequest) -> JobStatus:
        job = JobStatus(id=uuid.uuid4().hex, state="queued")
        with self._lock:
            self._jobs[job.id] = job
        self._executor.submit(self._run, job.id, req)
        return job.model_copy()

    def _update(self, job_id: str, **changes) -> None:
        with self._lock:
            job = self._jobs[job_id]
            self._jobs[job_id] = job.model_copy(update=changes)

    def _run(self, job_id: str, req: SolveRequest) -> None:
        self._update(job_id, state="running")

        def on_iteration(state: DWState) -> None:
            self._update(job_id, trace=[TraceItem(**asdict(t)) for t in state.trace])

        try:
            result = run_request(req, on_iteration)
        except Exception as exc:  # reported through the job record
            self._update(job_id, state="failed", error=f"{type(exc).__name__}: {exc}")
            return
        self._update(job_id, state="done", result=result, trace=result.trace)

    def get(self, job_id: str) -> JobStatus | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return None if job is None else job.model_copy()

    def shutdown(self) -> None:
        self._executor.shutdown(wait=True)


def create_app() -> FastAPI:
    jobs = JobStore()

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        jobs.shutdown()

    app = FastAPI(title="dwmap", version=__version__, lifespan=lifespan)
    app.state.jobs = jobs

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/solve", response_model=SolveResponse)
    def solve_now(req: SolveRequest) -> SolveResponse:
        try:
            return run_request(req)
        except BAD_BACKEND as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except BAD_INPUT as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/jobs", response_model=JobStatus, status_code=202)
    def create_job(req: SolveRequest) -> JobStatus:
        try:
            model_from_dict(req.model.model_dump())
        except BAD_INPUT as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return jobs.submit(req)

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def job_status(job_id: str) -> JobStatus:
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        return job

    return app


app = create_app()
