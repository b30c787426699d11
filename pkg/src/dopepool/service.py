"""HTTP session service for live screening rounds.

A session embodies the sequential loop with a human in place of the
simulator: the service proposes pools, an operator runs the tests and
enters results, the service updates marginals and either proposes the next
round or returns the classification.

Persistence is an append-only JSONL event log per session (created /
proposed / results / stopped / aborted records). State is a pure fold over
the log; because every sampling stream is derived from the session seed
and round index, a restarted service reproduces marginals bit for bit. A
log whose last record is an unprocessed ``results`` event (a crash during
computation) is completed deterministically on load.

Round computations can take minutes for large populations, so
``submit_results`` runs them on a worker pool and waits up to
``DOPE_SYNC_WAIT_S`` seconds (default 30): fast sessions get the full
response inline, slow ones get ``{"status": "computing"}`` and the client
polls ``GET /v1/sessions/{id}``.

Environment: ``DOPE_DATA_DIR`` (log directory), ``DOPE_BIND_ADDR``
(serve address, host:port), ``DOPE_WORKERS`` (compute threads).
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeoutError
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .design import HillClimbConfig
from .errors import InvalidArgumentError, PoolingError
from .model import (
    Design,
    Pool,
    PopulationSpec,
    PriorParams,
    TestData,
    TestErrorParams,
    model_config_from_dict,
)
from .posterior import GibbsConfig
from .sequential import (
    DecisionInterval,
    DopeConfig,
    SessionState,
    classify,
    ingest,
    propose,
)

DEFAULT_SYNC_WAIT_S = 30.0


class SessionNotFound(PoolingError):
    pass


class SessionConflict(PoolingError):
    pass


def parse_session_payload(
    payload: dict,
) -> tuple[PopulationSpec, PriorParams, TestErrorParams, DopeConfig]:
    """Validate a create-session payload (model config + loop parameters)."""
    spec, prior, err = model_config_from_dict(payload)
    gibbs_raw = payload.get("gibbs", {})
    if not isinstance(gibbs_raw, dict):
        raise InvalidArgumentError("gibbs must be an object", field="gibbs")
    hc_raw = payload.get("hill_climb", {})
    if not isinstance(hc_raw, dict):
        raise InvalidArgumentError("hill_climb must be an object", field="hill_climb")
    interval = DecisionInterval.from_json(payload.get("interval"))
    config = DopeConfig(
        k_pools_per_step=int(payload.get("k_pools_per_step", 1)),
        interval=interval,
        gibbs=GibbsConfig(
            n_samples=int(gibbs_raw.get("n_samples", 2000)),
            burn_in=int(gibbs_raw.get("burn_in", 500)),
            max_thinning=int(gibbs_raw.get("max_thinning", 50)),
        ),
        hill_climb=HillClimbConfig(
            n_restarts=int(hc_raw.get("n_restarts", 2)),
            n_perturbations=int(hc_raw.get("n_perturbations", 8)),
            max_steps=int(hc_raw.get("max_steps", 12)),
        ),
        max_rounds=payload.get("max_rounds"),
        seed=int(payload.get("seed", 0)),
    )
    return spec, prior, err, config


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class SessionRecord:
    session_id: str
    raw_config: dict
    spec: PopulationSpec
    prior: PriorParams
    err: TestErrorParams
    config: DopeConfig
    state: SessionState
    events: list[dict]
    log_path: Path
    pending: dict | None = None  # {"round": int, "pools": [[int, ...], ...]}
    computing: bool = False
    created_at: str = ""
    updated_at: str = ""
    lock: threading.Lock = field(default_factory=threading.Lock)


def _copy_state(state: SessionState) -> SessionState:
    return SessionState(
        design=state.design,
        data=state.data,
        marginals=None if state.marginals is None else np.array(state.marginals),
        round=state.round,
        stopped=state.stopped,
        classification=state.classification,
        samples=state.samples,
    )


class SessionStore:
    """Event-sourced session registry over a directory of JSONL logs."""

    def __init__(self, data_dir: str | Path, workers: int = 2, sync_wait: float = DEFAULT_SYNC_WAIT_S):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.sync_wait = sync_wait
        self._sessions: dict[str, SessionRecord] = {}
        self._registry_lock = threading.Lock()
        self._executor = ThreadPoolExecutor(max_workers=max(1, workers))

    # -- event log ----------------------------------------------------------

    def _append_event(self, rec: SessionRecord, event: dict) -> None:
        event = {"ts": _now(), **event}
        rec.events.append(event)
        with rec.log_path.open("a") as fh:
            fh.write(json.dumps(event, sort_keys=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        rec.updated_at = event["ts"]

    # -- lifecycle ----------------------------------------------------------

    def create(self, payload: dict) -> SessionRecord:
        spec, prior, err, config = parse_session_payload(payload)
        session_id = uuid.uuid4().hex
        rec = SessionRecord(
            session_id=session_id,
            raw_config=payload,
            spec=spec,
            prior=prior,
            err=err,
            config=config,
            state=SessionState(),
            events=[],
            log_path=self.data_dir / f"{session_id}.jsonl",
            created_at=_now(),
        )
        self._append_event(rec, {"type": "created", "config": payload})
        proposal = propose(rec.state, config, spec, prior, err)
        self._publish_proposal(rec, proposal)
        with self._registry_lock:
            self._sessions[session_id] = rec
        return rec

    def _publish_proposal(self, rec: SessionRecord, proposal: Design) -> None:
        pools = [sorted(p.members) for p in proposal.pools]
        next_round = rec.state.round + 1
        rec.pending = {"round": next_round, "pools": pools}
        self._append_event(
            rec,
            {
                "type": "proposed",
                "round": next_round,
                "pools": pools,
                "marginals": [float(m) for m in rec.state.marginals],
            },
        )

    def _get(self, session_id: str) -> SessionRecord:
        with self._registry_lock:
            rec = self._sessions.get(session_id)
        if rec is None:
            rec = self._load(session_id)
        if rec is None:
            raise SessionNotFound(f"no session {session_id!r}")
        return rec

    def submit_results(self, session_id: str, results: list) -> dict:
        rec = self._get(session_id)
        with rec.lock:
            if rec.state.stopped:
                raise SessionConflict("session already stopped")
            if rec.computing:
                raise SessionConflict("a round computation is already in progress")
            if rec.pending is None:
                raise SessionConflict("no pending design awaits results")
            if not isinstance(results, list) or any(r not in (0, 1) for r in results):
                raise InvalidArgumentError("results must be a list of 0/1", field="results")
            if len(results) != len(rec.pending["pools"]):
                raise InvalidArgumentError(
                    f"{len(results)} results supplied for {len(rec.pending['pools'])} "
                    "pending pools",
                    field="results",
                )
            pending = rec.pending
            rec.pending = None
            rec.computing = True
            self._append_event(
                rec, {"type": "results", "round": pending["round"], "results": list(results)}
            )
        future = self._executor.submit(self._complete_round, rec, pending, list(results))
        try:
            future.result(timeout=self.sync_wait)
        except FutureTimeoutError:
            pass
        return self.view(session_id)

    def _complete_round(self, rec: SessionRecord, pending: dict, results: list) -> None:
        try:
            work = _copy_state(rec.state)
            new_design = Design(tuple(Pool(frozenset(ms)) for ms in pending["pools"]))
            ingest(
                work,
                new_design,
                TestData(tuple(results)),
                rec.config,
                rec.spec,
                rec.prior,
                rec.err,
            )
            truncated = False
            if not work.stopped and work.round >= rec.config.effective_max_rounds(rec.spec):
                work.stopped = True
                work.classification = classify(work.marginals)
                truncated = True
            proposal = None
            if not work.stopped:
                proposal = propose(work, rec.config, rec.spec, rec.prior, rec.err)
            with rec.lock:
                rec.state = work
                if work.stopped:
                    self._append_event(
                        rec,
                        {
                            "type": "stopped",
                            "round": work.round,
                            "classification": list(work.classification),
                            "marginals": [float(m) for m in work.marginals],
                            "truncated": truncated,
                        },
                    )
                else:
                    self._publish_proposal(rec, proposal)
                rec.computing = False
        except Exception:
            with rec.lock:
                rec.computing = False
            raise

    def abort(self, session_id: str) -> dict:
        rec = self._get(session_id)
        with rec.lock:
            if rec.state.stopped:
                raise SessionConflict("session already stopped")
            if rec.computing:
                raise SessionConflict("a round computation is in progress")
            if rec.state.marginals is None:
                raise SessionConflict("session has no marginals to classify from")
            rec.state.stopped = True
            rec.state.classification = classify(rec.state.marginals)
            rec.pending = None
            self._append_event(
                rec,
                {
                    "type": "aborted",
                    "round": rec.state.round,
                    "classification": list(rec.state.classification),
                    "marginals": [float(m) for m in rec.state.marginals],
                },
            )
        return self.view(session_id)

    # -- views ---------------------------------------------------------------

    def view(self, session_id: str) -> dict:
        rec = self._get(session_id)
        with rec.lock:
            state = rec.state
            samples = state.samples
            diagnostics = (
                None if samples is None else samples.diagnostics.report()
            )
            return {
                "session_id": rec.session_id,
                "created_at": rec.created_at,
                "updated_at": rec.updated_at,
                "n_individuals": rec.spec.n_individuals,
                "interval": rec.config.interval.to_json(),
                "chain_diagnostics": diagnostics,
                "round": state.round,
                "tests_used": state.tests_used,
                "marginals": None
                if state.marginals is None
                else [float(m) for m in state.marginals],
                "stopped": state.stopped,
                "classification": None
                if state.classification is None
                else list(state.classification),
                "computing": rec.computing,
                "pending_design": None if rec.pending is None else dict(rec.pending),
                "transcript": [dict(e) for e in rec.events],
                "config": rec.raw_config,
            }

    def transcript_text(self, session_id: str) -> str:
        rec = self._get(session_id)
        with rec.lock:
            return rec.log_path.read_text()

    def list_sessions(self) -> list[dict]:
        infos = []
        for path in sorted(self.data_dir.glob("*.jsonl")):
            session_id = path.stem
            with self._registry_lock:
                rec = self._sessions.get(session_id)
            if rec is not None:
                with rec.lock:
                    infos.append(
                        {
                            "session_id": session_id,
                            "created_at": rec.created_at,
                            "updated_at": rec.updated_at,
                            "round": rec.state.round,
                            "stopped": rec.state.stopped,
                            "computing": rec.computing,
                        }
                    )
                continue
            infos.append(self._peek(path))
        return infos

    def _peek(self, path: Path) -> dict:
        """Shallow listing info read straight from a log, no recompute."""
        events = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        round_no = 0
        stopped = False
        for event in events:
            if event["type"] == "results":
                round_no = event["round"]
            elif event["type"] in ("stopped", "aborted"):
                stopped = True
        return {
            "session_id": path.stem,
            "created_at": events[0]["ts"] if events else "",
            "updated_at": events[-1]["ts"] if events else "",
            "round": round_no,
            "stopped": stopped,
            "computing": False,
        }

    # -- replay ---------------------------------------------------------------

    def _load(self, session_id: str) -> SessionRecord | None:
        path = self.data_dir / f"{session_id}.jsonl"
        if not path.exists():
            return None
        events = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        if not events or events[0]["type"] != "created":
            raise PoolingError(f"corrupt session log {path}")
        payload = events[0]["config"]
        spec, prior, err, config = parse_session_payload(payload)
        state = SessionState()
        pending: dict | None = None
        unprocessed: tuple[dict, list] | None = None
        for event in events:
            kind = event["type"]
            if kind == "created":
                continue
            if kind == "proposed":
                pending = {"round": event["round"], "pools": event["pools"]}
                state.marginals = np.array(event["marginals"], dtype=np.float64)
                unprocessed = None
            elif kind == "results":
                new_design = Design(
                    tuple(Pool(frozenset(ms)) for ms in pending["pools"])
                )
                state.design = state.design.concat(new_design)
                state.data = state.data.concat(TestData(tuple(event["results"])))
                state.round += 1
                unprocessed = (pending, event["results"])
                pending = None
            elif kind == "stopped":
                state.stopped = True
                state.classification = tuple(event["classification"])
                state.marginals = np.array(event["marginals"], dtype=np.float64)
                unprocessed = None
            elif kind == "aborted":
                state.stopped = True
                state.classification = tuple(event["classification"])
                state.marginals = np.array(event["marginals"], dtype=np.float64)
                pending = None
                unprocessed = None
        rec = SessionRecord(
            session_id=session_id,
            raw_config=payload,
            spec=spec,
            prior=prior,
            err=err,
            config=config,
            state=state,
            events=events,
            log_path=path,
            pending=pending,
            created_at=events[0]["ts"],
            updated_at=events[-1]["ts"],
        )
        if unprocessed is not None:
            # Crash mid-round: the results were logged but never processed.
            # Recompute deterministically and append the missing events.
            self._resume(rec, unprocessed[0], unprocessed[1])
        with self._registry_lock:
            self._sessions[session_id] = rec
        return rec

    def _resume(self, rec: SessionRecord, pending: dict, results: list) -> None:
        # Roll the fold back to just before the unprocessed results, then
        # run the normal round completion; seeds make it land on exactly the
        # state the crashed process would have reached.
        n_pools = len(pending["pools"])
        rec.state = SessionState(
            design=Design(rec.state.design.pools[: len(rec.state.design.pools) - n_pools]),
            data=TestData(rec.state.data.results[: len(rec.state.data.results) - len(results)]),
            round=rec.state.round - 1,
        )
        self._complete_round(rec, pending, results)

    def replay_marginals(self, session_id: str) -> np.ndarray | None:
        """Recompute the current marginals from (design, data, seeds) alone.

        Ignores every logged marginal value; used to audit that the chain of
        computations is reproducible.
        """
        rec = self._get(session_id)
        with rec.lock:
            design, data, round_no = rec.state.design, rec.state.data, rec.state.round
        fresh = SessionState(design=design, data=data, round=round_no)
        if len(design) == 0:
            propose(fresh, rec.config, rec.spec, rec.prior, rec.err)
            return fresh.marginals
        from .sequential import _condition_samples
        from .posterior import posterior_marginals

        samples = _condition_samples(fresh, rec.config, rec.spec, rec.prior, rec.err)
        return posterior_marginals(samples)


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


def create_app(
    data_dir: str | Path | None = None,
    workers: int | None = None,
    sync_wait: float | None = None,
) -> FastAPI:
    data_dir = data_dir or os.environ.get("DOPE_DATA_DIR", "./dope-sessions")
    workers = workers if workers is not None else int(os.environ.get("DOPE_WORKERS", "2"))
    if sync_wait is None:
        sync_wait = float(os.environ.get("DOPE_SYNC_WAIT_S", str(DEFAULT_SYNC_WAIT_S)))
    store = SessionStore(data_dir, workers=workers, sync_wait=sync_wait)
    app = FastAPI(title="dopepool session service", version="1")
    app.state.store = store
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(SessionNotFound)
    async def _not_found(_req: Request, exc: SessionNotFound):
        return JSONResponse(status_code=404, content={"code": "not_found", "message": str(exc)})

    @app.exception_handler(SessionConflict)
    async def _conflict(_req: Request, exc: SessionConflict):
        return JSONResponse(status_code=409, content={"code": "conflict", "message": str(exc)})

    @app.exception_handler(InvalidArgumentError)
    async def _invalid(_req: Request, exc: InvalidArgumentError):
        content = {"code": "validation_error", "message": str(exc)}
        if exc.field:
            content["field"] = exc.field
        return JSONResponse(status_code=422, content=content)

    @app.post("/v1/sessions", status_code=201)
    def create_session(payload: dict):
        rec = store.create(payload)
        return store.view(rec.session_id)

    @app.get("/v1/sessions")
    def list_sessions():
        return {"sessions": store.list_sessions()}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        return store.view(session_id)

    @app.post("/v1/sessions/{session_id}/results")
    def submit_results(session_id: str, payload: dict):
        if "results" not in payload:
            raise InvalidArgumentError("payload must contain 'results'", field="results")
        return store.submit_results(session_id, payload["results"])

    @app.post("/v1/sessions/{session_id}/abort")
    def abort_session(session_id: str):
        return store.abort(session_id)

    @app.get("/v1/sessions/{session_id}/transcript")
    def get_transcript(session_id: str):
        return PlainTextResponse(store.transcript_text(session_id))

    return app


def main() -> None:  # pragma: no cover - thin uvicorn wrapper
    import uvicorn

    bind = os.environ.get("DOPE_BIND_ADDR", "127.0.0.1:8000")
    host, _, port = bind.rpartition(":")
    uvicorn.run(create_app(), host=host or "127.0.0.1", port=int(port or 8000))


if __name__ == "__main__":  # pragma: no cover
    main()
