"""HTTP annotation service: exposes a live active-learning session.

The AL loop runs on a background thread with a human-backed oracle; the
oracle blocks until every sentence of the batch has a validated submission.
Task state is persisted on every mutation so a restarted server can pick a
batch back up (the loop itself is resumed from its iteration snapshots).
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .corpus import BioValidationError, Dataset, repair_bio, validate_bio
from .loop import ExperimentConfig, ExperimentLog, LoopRunner, run_single

DEFAULT_LEASE_SECONDS = 600.0


class SessionClosed(Exception):
    pass


@dataclass
class AnnotationTask:
    task_id: str
    sentence_id: int
    tokens: list[str]
    proposed_tags: list[str]
    token_probs: list[float] | None = None
    status: str = "open"  # open | leased | submitted
    lease_expiry: float = 0.0
    submitted_tags: list[str] | None = None

    def view(self) -> dict:
        return {
            "task_id": self.task_id,
            "sentence_id": self.sentence_id,
            "tokens": self.tokens,
            "proposed_tags": self.proposed_tags,
            "token_probs": self.token_probs,
            "status": self.status,
        }


@dataclass
class _Rejection(Exception):
    status_code: int
    reason: str
    position: int | None = None

    def body(self) -> dict:
        out = {"accepted": False, "reason": self.reason}
        if self.position is not None:
            out["position"] = self.position
        return out


class SessionManager:
    """Single active AL session served to human annotators."""

    def __init__(
        self,
        dataset: Dataset,
        cfg: ExperimentConfig,
        out_dir: str,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
        clock=time.monotonic,
    ):
        if cfg.n_seeds != 1:
            cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "n_seeds": 1})
        self.dataset = dataset
        self.cfg = cfg
        self.out_dir = out_dir
        self.lease_seconds = lease_seconds
        self.clock = clock
        self.lock = threading.Lock()
        self.batch_done = threading.Condition(self.lock)
        self.tasks: dict[str, AnnotationTask] = {}
        self.runner: LoopRunner | None = None
        self.iteration = 0
        self.n_labeled = 0
        self.n_pool = 0
        self.latest_metrics: dict | None = None
        self.closed = False
        self.finished = False
        self.error: str | None = None
        self.history = None
        self._responses: dict[str, tuple[int, dict]] = {}
        self._tasks_path = os.path.join(out_dir, "pending_tasks.json")
        self._thread: threading.Thread | None = None
        os.makedirs(out_dir, exist_ok=True)

    # -- loop thread --------------------------------------------------------

    def start(self, resume: bool = False) -> None:
        self._resume = resume
        self._thread = threading.Thread(target=self._run_loop, daemon=True)
        self._thread.start()

    def _run_loop(self) -> None:
        try:
            history = run_single(
                self.dataset,
                self.cfg,
                run_seed=0,
                oracle_factory=lambda d: _HumanOracle(self),
                out_dir=self.out_dir,
                resume=self._resume,
            )
            with self.lock:
                self.history = history
                self.finished = True
                rec = history[-1]
                self.iteration = rec.iteration
                self.latest_metrics = {
                    "token_f1": rec.token_f1,
                    "entity_f1": rec.entity_f1,
                    "sentence_accuracy": rec.sentence_accuracy,
                }
            log = ExperimentLog(self.cfg, self.dataset.schema, {0: history})
            log.write(self.out_dir, self.cfg.strategy)
            if os.path.exists(self._tasks_path):
                os.remove(self._tasks_path)
        except SessionClosed:
            pass
        except Exception as e:  # surfaces in /session/status
            with self.lock:
                self.error = f"{type(e).__name__}: {e}"

    def close(self) -> None:
        with self.lock:
            self.closed = True
            self.batch_done.notify_all()
        if self._thread:
            self._thread.join(timeout=10)

    # -- oracle side ----------------------------------------------------------

    def open_batch(self, ids: list[int], runner_state: dict) -> list[tuple[str, ...]]:
        """Create tasks for a batch and block until all are submitted."""
        with self.lock:
            if self.closed:
                raise SessionClosed()
            self.iteration = runner_state["iteration"]
            self.n_labeled = runner_state["n_labeled"]
            self.n_pool = runner_state["n_pool"]
            self.latest_metrics = runner_state.get("metrics")
            self.tasks = {}
            persisted = self._load_persisted_submissions()
            for sid in ids:
                task = AnnotationTask(
                    task_id=f"{self.iteration}-{sid}",
                    sentence_id=sid,
                    tokens=list(runner_state["tokens"][sid]),
                    proposed_tags=repair_bio(runner_state["proposals"][sid]),
                    token_probs=runner_state.get("token_probs", {}).get(sid),
                )
                prev = persisted.get(task.task_id)
                if prev is not None:
                    task.status = "submitted"
                    task.submitted_tags = prev
                self.tasks[task.task_id] = task
            self._persist_tasks()
            while not self._batch_complete():
                if self.closed:
                    raise SessionClosed()
                self.batch_done.wait(timeout=0.2)
            out = []
            for sid in ids:
                out.append(tuple(self.tasks[f"{self.iteration}-{sid}"].submitted_tags))
            return out

    def _batch_complete(self) -> bool:
        return all(t.status == "submitted" for t in self.tasks.values())

    def _persist_tasks(self) -> None:
        payload = {
            "iteration": self.iteration,
            "submissions": {
                t.task_id: t.submitted_tags
                for t in self.tasks.values()
                if t.status == "submitted"
            },
        }
        tmp = self._tasks_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload, f, sort_keys=True)
        os.replace(tmp, self._tasks_path)

    def _load_persisted_submissions(self) -> dict:
        if not os.path.exists(self._tasks_path):
            return {}
        with open(self._tasks_path, encoding="utf-8") as f:
            payload = json.load(f)
        return payload.get("submissions", {}) or {}

    # -- HTTP side --------------------------------------------------------

    def status(self) -> dict:
        with self.lock:
            open_tasks = sum(1 for t in self.tasks.values() if t.status != "submitted")
            return {
                "iteration": self.iteration,
                "n_labeled": self.n_labeled,
                "n_pool": self.n_pool,
                "open_tasks": open_tasks,
                "strategy": self.cfg.strategy,
                "latest_metrics": self.latest_metrics,
                "finished": self.finished,
                "error": self.error,
            }

    def next_task(self) -> dict | None:
        with self.lock:
            now = self.clock()
            for task in sorted(self.tasks.values(), key=lambda t: t.task_id):
                if task.status == "leased" and task.lease_expiry <= now:
                    task.status = "open"
                if task.status == "open":
                    task.status = "leased"
                    task.lease_expiry = now + self.lease_seconds
                    return task.view()
            return None

    def submit(self, task_id: str, tags: list[str]) -> dict:
        with self.lock:
            task = self.tasks.get(task_id)
            if task is None:
                raise _Rejection(404, f"unknown task {task_id!r}")
            if task.status == "submitted":
                raise _Rejection(409, "task already submitted")
            if len(tags) != len(task.tokens):
                raise _Rejection(
                    422, f"{len(tags)} tags for {len(task.tokens)} tokens"
                )
            try:
                validate_bio(list(tags))
            except BioValidationError as e:
                raise _Rejection(422, str(e), position=e.position) from None
            task.status = "submitted"
            task.submitted_tags = list(tags)
            self._persist_tasks()
            self.batch_done.notify_all()
            return {"accepted": True, "task_id": task_id}


class _HumanOracle:
    """Bridges the loop's oracle interface onto the session's task queue."""

    def __init__(self, manager: SessionManager):
        self.manager = manager
        self.runner: LoopRunner | None = None

    def attach_runner(self, runner: LoopRunner) -> None:
        self.runner = runner
        self.manager.runner = runner

    def labels(self, ids: list[int]) -> list[tuple[str, ...]]:
        runner = self.runner
        assert runner is not None, "runner must be attached before the loop starts"
        ctx = dict(runner.last_context)
        ctx["tokens"] = runner.tokens
        ctx["proposals"] = runner.last_proposals
        ctx["token_probs"] = runner.last_token_probs
        return self.manager.open_batch(ids, ctx)


def create_app(dataset: Dataset, out_dir: str, lease_seconds: float = DEFAULT_LEASE_SECONDS,
               clock=time.monotonic) -> FastAPI:
    app = FastAPI(title="alcrf annotation service")
    app.state.manager = None
    app.state.dataset = dataset
    app.state.out_dir = out_dir
    app.state.idempotent = {}

    def _cached(request: Request):
        rid = request.headers.get("x-request-id")
        if rid and rid in app.state.idempotent:
            code, body = app.state.idempotent[rid]
            return rid, JSONResponse(body, status_code=code)
        return rid, None

    def _remember(rid, code, body):
        if rid:
            app.state.idempotent[rid] = (code, body)

    @app.post("/session/start")
    async def session_start(request: Request):
        rid, hit = _cached(request)
        if hit:
            return hit
        if app.state.manager is not None and not app.state.manager.finished:
            return JSONResponse({"error": "session already active"}, status_code=409)
        raw = await request.json()
        resume = bool(raw.pop("resume", False))
        try:
            cfg = ExperimentConfig.from_dict(raw)
        except Exception as e:
            return JSONResponse({"error": str(e)}, status_code=422)
        manager = SessionManager(
            app.state.dataset, cfg, app.state.out_dir, lease_seconds, clock
        )
        app.state.manager = manager
        manager.start(resume=resume)
        # wait briefly for the first batch to open so start is observable
        deadline = time.monotonic() + 30
        while time.monotonic() < deadline:
            st = manager.status()
            if st["open_tasks"] > 0 or st["finished"] or st["error"]:
                break
            time.sleep(0.01)
        body = manager.status()
        _remember(rid, 200, body)
        return JSONResponse(body)

    @app.get("/session/status")
    async def session_status():
        if app.state.manager is None:
            return JSONResponse({"error": "no session"}, status_code=404)
        return JSONResponse(app.state.manager.status())

    @app.post("/session/advance")
    async def session_advance():
        if app.state.manager is None:
            return JSONResponse({"error": "no session"}, status_code=404)
        st = app.state.manager.status()
        if st["open_tasks"] > 0:
            return JSONResponse({"error": "open tasks remain"}, status_code=409)
        return JSONResponse(st)  # auto-advance is on: nothing to do

    @app.get("/tasks/next")
    async def tasks_next():
        if app.state.manager is None:
            return JSONResponse({"error": "no session"}, status_code=404)
        task = app.state.manager.next_task()
        if task is None:
            return Response(status_code=204)
        return JSONResponse(task)

    @app.post("/tasks/{task_id}/labels")
    async def tasks_submit(task_id: str, request: Request):
        if app.state.manager is None:
            return JSONResponse({"error": "no session"}, status_code=404)
        rid, hit = _cached(request)
        if hit:
            return hit
        raw = await request.json()
        tags = raw.get("tags")
        if not isinstance(tags, list):
            return JSONResponse({"error": "body must contain a 'tags' list"},
                                status_code=422)
        try:
            body = app.state.manager.submit(task_id, [str(t) for t in tags])
        except _Rejection as rej:
            _remember(rid, rej.status_code, rej.body())
            return JSONResponse(rej.body(), status_code=rej.status_code)
        _remember(rid, 200, body)
        return JSONResponse(body)

    return app
