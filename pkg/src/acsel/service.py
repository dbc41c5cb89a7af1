"""HTTP session service for human-steered screening runs.

Each session wraps one screening state plus its current ordering policy.
Mutations (advance, policy change, label injection, finalize) are serialised
per session and appended to an event log; replaying that log against the same
seed reproduces the final selection bit for bit.  State payloads are built
from the engine's filtration view, so the wire never carries outcomes or
membership for anonymous pool entries.  Finalisation is only legal once the
stop rule has fired or the pool is exhausted: a client cannot force an early
selection.
"""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import engine
from .data import CsvSchema, DataError, Dataset, SimConfig, generate, ingest_csv_text
from .diversity import DivoptError
from .learners import SpecError
from .policies import PolicyError, make_policy, parse_policy
from .results import SelectionResult

__all__ = ["create_app", "replay_events", "SessionRecord"]

AUDIT_TAIL = 20


class CreateSession(BaseModel):
    sim: dict | None = None
    csv: str | None = None
    csv_covariates: list[str] | None = None
    csv_outcome: str = "y"
    csv_fingerprint: str | None = None
    csv_group: str | None = None
    k: int
    alpha: float
    seed: int
    policy: str


class AdvanceRequest(BaseModel):
    steps: int = Field(default=1, ge=1, le=100_000)


class PolicyChange(BaseModel):
    spec: str | None = None
    lam: float | None = Field(default=None, ge=0.0, le=1.0)


class LabelInjection(BaseModel):
    handle: str
    y: float


class WhatIfRequest(BaseModel):
    lambdas: list[float] = Field(min_length=1, max_length=20)


@dataclass
class SessionRecord:
    id: str
    state: engine.ScreeningState
    policy: object
    policy_spec: str
    events: list[dict] = field(default_factory=list)
    policy_changes: int = 0
    result: dict | None = None
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def status(self) -> str:
        if self.state.stopped:
            return "stopped"
        if self.state.exhausted:
            return "exhausted"
        return "running"

    def log_event(self, kind: str, payload: dict) -> None:
        self.events.append({"kind": kind, "payload": payload, "step": len(self.state.order)})
        self.updated_at = time.time()


def _policy_seed(seed: int, change_index: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, 0x90C, change_index]).generate_state(1)[0])


def _build_dataset(req: CreateSession) -> Dataset:
    if (req.sim is None) == (req.csv is None):
        raise HTTPException(422, "provide exactly one of sim or csv")
    if req.sim is not None:
        try:
            cfg = SimConfig(**req.sim)
        except (TypeError, DataError) as exc:
            raise HTTPException(422, f"bad sim config: {exc}") from None
        return generate(cfg)
    schema = CsvSchema(
        covariates=tuple(req.csv_covariates) if req.csv_covariates else None,
        outcome=req.csv_outcome,
        fingerprint=req.csv_fingerprint,
        meta_columns=(req.csv_group,) if req.csv_group else (),
    )
    try:
        return ingest_csv_text(req.csv, schema)
    except DataError as exc:
        raise HTTPException(422, f"bad csv: {exc}") from None


def _make_session(req: CreateSession) -> SessionRecord:
    dataset = _build_dataset(req)
    try:
        config = parse_policy(req.policy).with_seed(_policy_seed(req.seed, 0))
        policy = make_policy(config)
        if getattr(policy, "requires_reserve", False) and req.k == 0:
            raise PolicyError("static policy needs a nonempty training reserve (k > 0)")
        state = engine.init(dataset, req.k, req.alpha, req.seed)
    except (PolicyError, SpecError, engine.EngineError, DataError) as exc:
        raise HTTPException(422, str(exc)) from None
    record = SessionRecord(secrets.token_hex(16), state, policy, req.policy)
    record.log_event("created", req.model_dump())
    return record


def _advance(record: SessionRecord, steps: int) -> int:
    performed = 0
    for _ in range(steps):
        outcome = engine.step(record.state, record.policy)
        if outcome != "screened":
            break
        performed += 1
    return performed


def _state_payload(record: SessionRecord) -> dict:
    state = record.state
    payload = {
        "id": record.id,
        "status": record.status,
        "step": len(state.order),
        "alpha": state.alpha,
        "k": state.k,
        "n": state.n,
        "m": state.m,
        "policy": record.policy_spec,
        "fdp_estimate": engine.fdp_estimate(state),
        "count_null_labeled": state.count_null_labeled,
        "count_test": state.count_test,
        "trajectory": [[s, v] for s, v in state.fdp_trajectory],
        "audit_tail": [e.to_dict() for e in state.audit[-AUDIT_TAIL:]],
    }
    if record.status == "running":
        payload["view"] = engine.visible(state).to_payload()
    else:
        payload["selection"] = sorted(state.selection or ())
    return payload


def _whatif_payload(record: SessionRecord, lambdas: list[float]) -> dict:
    from .data import SimilarityKernel

    state = record.state
    view = engine.visible(state)
    base_config = parse_policy(record.policy_spec)
    learner = base_config.learners[0]
    kernel = base_config.kernel if base_config.kind == "diversity" else SimilarityKernel("rbf", 5.0)
    previews = []
    for lam in lambdas:
        from .policies import PolicyConfig

        config = PolicyConfig(
            "diversity", (learner,), lam=float(lam), kernel=kernel,
            seed=_policy_seed(state.seed, 1_000_000 + record.policy_changes),
        )
        probe = make_policy(config)
        try:
            probe.update(view)
        except (PolicyError, DivoptError, SpecError) as exc:
            raise HTTPException(422, f"what-if failed: {exc}") from None
        order = sorted(view.pool_handles, key=lambda h: probe._scores[h])
        previews.append({"lambda": float(lam), "order": order})
    return {"step": len(state.order), "previews": previews}


def create_app(store: dict | None = None) -> FastAPI:
    app = FastAPI(title="screening session service", version="1")
    sessions: dict[str, SessionRecord] = store if store is not None else {}

    def get_session(session_id: str) -> SessionRecord:
        record = sessions.get(session_id)
        if record is None:
            raise HTTPException(404, "unknown session")
        return record

    def mutate(record: SessionRecord):
        if not record.lock.acquire(blocking=False):
            raise HTTPException(409, "concurrent mutation in progress")
        return record.lock

    @app.post("/v1/sessions", status_code=201)
    def create(req: CreateSession):
        record = _make_session(req)
        sessions[record.id] = record
        return {"id": record.id, "status": record.status, "step": len(record.state.order)}

    @app.get("/v1/sessions/{session_id}/state")
    def state(session_id: str):
        record = get_session(session_id)
        with record.lock:
            return _state_payload(record)

    @app.post("/v1/sessions/{session_id}/advance")
    def advance(session_id: str, req: AdvanceRequest):
        record = get_session(session_id)
        lock = mutate(record)
        try:
            if record.status != "running":
                raise HTTPException(409, f"session is {record.status}")
            performed = _advance(record, req.steps)
            record.log_event("step", {"requested": req.steps, "performed": performed})
            return {
                "status": record.status,
                "step": len(record.state.order),
                "performed": performed,
                "fdp_estimate": engine.fdp_estimate(record.state),
            }
        finally:
            lock.release()

    @app.post("/v1/sessions/{session_id}/policy")
    def change_policy(session_id: str, req: PolicyChange):
        record = get_session(session_id)
        lock = mutate(record)
        try:
            if record.status != "running":
                raise HTTPException(409, f"session is {record.status}")
            if (req.spec is None) == (req.lam is None):
                raise HTTPException(422, "provide exactly one of spec or lam")
            if req.spec is not None:
                spec_text = req.spec
            else:
                base = parse_policy(record.policy_spec)
                if base.kind != "diversity":
                    raise HTTPException(422, "lam applies only to a diversity policy")
                spec_text = _respec_lambda(record.policy_spec, req.lam)
            record.policy_changes += 1
            seed = _policy_seed(record.state.seed, record.policy_changes)
            try:
                config = parse_policy(spec_text).with_seed(seed)
                policy = make_policy(config)
                if getattr(policy, "requires_reserve", False) and record.state.k == 0:
                    raise PolicyError("static policy needs a nonempty training reserve")
            except (PolicyError, SpecError) as exc:
                record.policy_changes -= 1
                raise HTTPException(422, str(exc)) from None
            record.policy = policy
            record.policy_spec = spec_text
            record.state._log("policy_change", {"spec": spec_text})
            record.log_event("policy_change", {"spec": spec_text, "seed": seed})
            return {"status": record.status, "policy": spec_text}
        finally:
            lock.release()

    @app.post("/v1/sessions/{session_id}/labels")
    def inject_label(session_id: str, req: LabelInjection):
        record = get_session(session_id)
        lock = mutate(record)
        try:
            if record.status != "running":
                raise HTTPException(409, f"session is {record.status}")
            try:
                engine.reveal_label(record.state, req.handle, req.y)
            except engine.EngineError as exc:
                raise HTTPException(422, str(exc)) from None
            record.log_event("label_injected", {"handle": req.handle, "y": req.y})
            return {"status": "ok", "handle": req.handle}
        finally:
            lock.release()

    @app.post("/v1/sessions/{session_id}/whatif")
    def whatif(session_id: str, req: WhatIfRequest):
        record = get_session(session_id)
        with record.lock:
            if record.status != "running":
                raise HTTPException(409, f"session is {record.status}")
            return _whatif_payload(record, req.lambdas)

    @app.post("/v1/sessions/{session_id}/finalize")
    def finalize(session_id: str):
        record = get_session(session_id)
        lock = mutate(record)
        try:
            if record.status == "running":
                raise HTTPException(409, "not stopped: the estimate has not reached alpha")
            if record.result is None:
                record.result = engine.result_of(record.state).to_dict()
                record.log_event("finalize", {})
            return record.result
        finally:
            lock.release()

    @app.get("/v1/sessions/{session_id}/events")
    def events(session_id: str):
        record = get_session(session_id)
        with record.lock:
            return {"id": record.id, "events": list(record.events)}

    return app


def _respec_lambda(spec_text: str, lam: float) -> str:
    """Rewrite the lambda parameter inside a diversity policy spec."""
    import re

    if re.search(r"lambda=[^,\]]+", spec_text):
        return re.sub(r"lambda=[^,\]]+", f"lambda={lam}", spec_text)
    if "[" in spec_text:
        return spec_text.replace("[", f"[lambda={lam},", 1)
    return f"{spec_text}[lambda={lam}]"


def replay_events(events: list[dict]) -> SelectionResult:
    """Reconstruct a session headlessly from its event log.

    With the same seed, dataset and decision sequence the engine is
    deterministic, so the replayed selection matches the live one exactly.
    """
    if not events or events[0]["kind"] != "created":
        raise DataError("event log must start with a created event")
    req = CreateSession(**events[0]["payload"])
    dataset = _build_dataset(req)
    state = engine.init(dataset, req.k, req.alpha, req.seed)
    policy = make_policy(parse_policy(req.policy).with_seed(_policy_seed(req.seed, 0)))
    for event in events[1:]:
        kind, payload = event["kind"], event["payload"]
        if kind == "step":
            for _ in range(payload["requested"]):
                if engine.step(state, policy) != "screened":
                    break
        elif kind == "policy_change":
            policy = make_policy(parse_policy(payload["spec"]).with_seed(payload["seed"]))
            state._log("policy_change", {"spec": payload["spec"]})
        elif kind == "label_injected":
            engine.reveal_label(state, payload["handle"], payload["y"])
        elif kind == "finalize":
            break
        else:
            raise DataError(f"unknown event kind {kind!r}")
    return engine.result_of(state)
