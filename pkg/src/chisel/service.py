"""HTTP session service: the protocol boundary around live sessions.

Commands arrive as JSON, are applied under a per-session lock (one mailbox
per session; commands run strictly in acquisition order), and are echoed to
an append-only event log carrying the resulting state digest and the
cumulative count of RNG draws.  Replaying that log against the same dataset
and seed reproduces the session bit for bit; the `replay` command does so
server-side and reports any divergence.

Every response body is analyst-safe: redaction matches `analyst_view`, and
non-finite floats are sent as the strings "inf"/"-inf"/"nan" so bodies stay
inside strict JSON.  The analyst-facing log endpoint strips the dataset
payload from the create event; the full payload is written only to the
operator's on-disk JSONL file (one per session, when a log directory is
configured), which is what `chisel replay` consumes.

Views never take the session lock: a view is assembled, then retried if the
state digest moved underneath it.
"""

from __future__ import annotations

import json
import math
import os
import threading
import uuid
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .core import (
    ChiselSession,
    Dataset,
    _redact_record,
    analyst_view,
    chisel_step,
    load_dataset,
    reveal_random,
)
from .scorers import ScorerSpec, fit_on_session
from .simbench import DgpSpec, sample_dgp
from .strategies import Report, report_from_session
from .testing import (
    BudgetError,
    ConstraintViolation,
    EmptySupportError,
    ModeConfig,
    propose_alpha,
    run_test,
)

INF = float("inf")

STATE_COMMANDS = ("chisel", "reveal_random", "test", "finalize")
PURE_COMMANDS = ("view", "propose_alpha", "replay")


# ---------------------------------------------------------------------------
# Wire format


def jsonable(obj):
    """Recursively make obj strict-JSON safe.

    Finite floats pass through untouched (json.dumps already emits the
    shortest round-trip decimal); non-finite floats become the strings
    "inf"/"-inf"/"nan", numpy scalars and arrays their Python counterparts.
    """
    if isinstance(obj, float):
        if math.isfinite(obj):
            return obj
        if math.isnan(obj):
            return "nan"
        return "inf" if obj > 0 else "-inf"
    if isinstance(obj, (np.floating,)):
        return jsonable(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    return obj


def parse_cap(raw: Union[float, int, str, None]) -> float:
    """Shrink caps must be real or +/-inf; JSON cannot carry inf, so the
    strings "inf"/"+inf"/"-inf" (and "infinity" variants) stand in."""
    if raw is None:
        return INF
    if isinstance(raw, str):
        token = raw.strip().lower()
        signed = {"inf": INF, "+inf": INF, "infinity": INF,
                  "+infinity": INF, "-inf": -INF, "-infinity": -INF}
        if token in signed:
            return signed[token]
        try:
            raw = float(token)
        except ValueError:
            raise CommandError(f"cap {raw!r} is not a number or inf")
    value = float(raw)
    if math.isnan(value):
        raise CommandError("cap must be a real number or +/-inf, not nan")
    return value


class WireJSON(JSONResponse):
    # starlette's default renderer has allow_nan=False and would raise on
    # inf thresholds; sanitize first so that strictness becomes a guarantee
    def render(self, content) -> bytes:
        return json.dumps(
            jsonable(content), ensure_ascii=False, allow_nan=False,
            separators=(",", ":"),
        ).encode("utf-8")


def _event_line(event: dict) -> str:
    return json.dumps(jsonable(event), ensure_ascii=False, allow_nan=False,
                      separators=(",", ":"))


# ---------------------------------------------------------------------------
# Requests


class DgpCreate(BaseModel):
    family: str
    n: int
    cutoff: Optional[float] = None
    params: dict = Field(default_factory=dict)


class CreateSessionRequest(BaseModel):
    """Dataset plus session configuration.

    Exactly one of `csv` (header + rows, schema naming the outcome and the
    optional treatment/propensity columns) or `dgp` (a generating family;
    the server draws the data). `seed` fixes the dataset draw and the
    auxiliary uniforms; `session_seed` the session's own test randomness.
    """

    model_config = ConfigDict(populate_by_name=True)

    csv: Optional[str] = None
    dgp: Optional[DgpCreate] = None
    data_schema: Optional[dict] = Field(default=None, alias="schema")
    mode: dict = Field(default_factory=dict)
    alpha: float = 0.05
    seed: int = 0
    session_seed: Optional[int] = None


class CommandRequest(BaseModel):
    kind: str
    scorer: Optional[dict] = None
    scorer_id: Optional[str] = None
    cap: Optional[Union[float, str]] = None
    k: Optional[int] = None
    alpha: Optional[float] = None


class CommandError(ValueError):
    """Malformed or inapplicable command payload."""


# ---------------------------------------------------------------------------
# Store


@dataclass
class SessionEntry:
    id: str
    session: ChiselSession
    create_payload: dict           # full dataset payload, operator-side only
    cfg: ModeConfig
    alpha: float
    session_seed: Optional[int]
    events: List[dict] = field(default_factory=list)
    seq: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)
    log_path: Optional[str] = None

    def append_event(self, command_echo: dict) -> dict:
        self.seq += 1
        event = {
            "seq": self.seq,
            "command": command_echo,
            "digest": self.session.state_digest(),
            "rng_draws": self.session.rng_draws,
        }
        self.events.append(event)
        if self.log_path is not None:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(_event_line(event) + "\n")
        return event


class SessionStore:
    """In-memory session registry; survives nothing."""

    def __init__(self, log_dir: Optional[str] = None) -> None:
        self._sessions: dict = {}
        self._lock = threading.Lock()
        self.log_dir = log_dir
        if log_dir is not None:
            os.makedirs(log_dir, exist_ok=True)

    def add(self, entry: SessionEntry) -> None:
        with self._lock:
            self._sessions[entry.id] = entry

    def get(self, sid: str) -> SessionEntry:
        try:
            return self._sessions[sid]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no session {sid!r}")

    def __len__(self) -> int:
        return len(self._sessions)


# ---------------------------------------------------------------------------
# Dataset construction and replay


def dataset_from_payload(payload: dict) -> Dataset:
    """Rebuild the dataset a create event described.  Deterministic: the
    payload carries the seed, and dgp draws derive everything from it."""
    kind = payload.get("kind")
    if kind == "csv":
        return load_dataset(payload["csv"], schema=payload.get("schema"),
                            seed=int(payload["seed"]))
    if kind == "dgp":
        spec = DgpSpec(family=payload["family"], cutoff=payload.get("cutoff"),
                       params=dict(payload.get("params", {})))
        rng = np.random.default_rng(
            np.random.SeedSequence((int(payload["seed"]), 4)))
        dataset, _ = sample_dgp(spec, int(payload["n"]), rng)
        return dataset
    raise CommandError(f"unknown dataset payload kind {kind!r}")


def build_session(payload: dict, cfg: ModeConfig, alpha: float,
                  session_seed: Optional[int]) -> ChiselSession:
    dataset = dataset_from_payload(payload)
    return ChiselSession(dataset, cfg, alpha, seed=session_seed)


def apply_state_command(session: ChiselSession, cmd: dict) -> dict:
    """Apply one state-changing command.  Shared verbatim between the live
    path and replay so the two cannot drift."""
    kind = cmd["kind"]
    if kind == "chisel":
        spec_dict = cmd.get("scorer")
        sid = cmd.get("scorer_id")
        if (spec_dict is None) == (sid is None):
            raise CommandError("chisel takes exactly one of scorer, scorer_id")
        if spec_dict is not None:
            scorer = fit_on_session(ScorerSpec.from_dict(spec_dict), session)
            session.scorers[scorer.scorer_id] = scorer
        else:
            if sid not in session.scorers:
                raise CommandError(f"unknown scorer_id {sid!r}")
            scorer = session.scorers[sid]
        cap = parse_cap(cmd.get("cap"))
        res = chisel_step(session, scorer, cap=cap)
        return {"scorer_id": scorer.scorer_id, **res.to_dict(),
                "n_masked": session.n_masked}
    if kind == "reveal_random":
        k = cmd.get("k")
        if k is None:
            raise CommandError("reveal_random needs k")
        res = reveal_random(session, int(k))
        return {**res.to_dict(), "n_masked": session.n_masked}
    if kind == "test":
        alpha = cmd.get("alpha")
        if alpha is None:
            raise CommandError("test needs alpha")
        record = run_test(session, float(alpha))
        out = _redact_record(record, session.rejected_record is not None)
        out["finalized"] = session.finalized
        out["remaining"] = session.ledger.remaining()
        return out
    if kind == "finalize":
        session.finalize()
        return {"finalized": True, "rejected": session.rejected_record is not None}
    raise CommandError(f"unknown command kind {cmd['kind']!r}")


def redact_report(report: Report) -> dict:
    """Report serialization under analyst_view's rules: full record for the
    rejecting test, redacted records otherwise."""
    out = report.to_dict()
    out["tests"] = [_redact_record(r, report.rejected) for r in report.tests]
    return out


def replay_events(create_payload: dict, cfg: ModeConfig, alpha: float,
                  session_seed: Optional[int], events: List[dict]) -> dict:
    """Re-run logged commands on a fresh session and hold every event's
    digest and draw count to what the log recorded."""
    session = build_session(create_payload, cfg, alpha, session_seed)
    mismatches = []
    applied = 0
    for event in events:
        cmd = event["command"]
        if cmd["kind"] == "create" or cmd["kind"] in PURE_COMMANDS:
            pass  # no state to rebuild; digest must still agree
        else:
            try:
                apply_state_command(session, _uncap(cmd))
                applied += 1
            except Exception as exc:  # divergence, not transport failure
                mismatches.append({"seq": event["seq"], "error": str(exc)})
                continue
        if (session.state_digest() != event["digest"]
                or session.rng_draws != event["rng_draws"]):
            mismatches.append({"seq": event["seq"],
                               "digest": session.state_digest(),
                               "expected": event["digest"]})
    report = report_from_session(session)
    return {
        "match": not mismatches,
        "mismatches": mismatches,
        "events": len(events),
        "applied": applied,
        "digest": session.state_digest(),
        "report": redact_report(report),
        "_session": session,  # stripped before serialization
    }


def _uncap(cmd: dict) -> dict:
    # logged caps may have been serialized to "inf"; normalize on the way in
    if cmd.get("kind") == "chisel" and isinstance(cmd.get("cap"), str):
        out = dict(cmd)
        out["cap"] = parse_cap(cmd["cap"])
        return out
    return cmd


# ---------------------------------------------------------------------------
# Analyst-facing redaction


def redact_event(event: dict) -> dict:
    """The analyst's copy of a log event: the create echo keeps only the
    dataset's shape and id, never its content or generating law."""
    cmd = event["command"]
    if cmd.get("kind") != "create":
        return event
    safe = {
        "kind": "create",
        "dataset": {k: cmd["dataset"].get(k) for k in ("kind", "n", "d", "dataset_id")},
        "cfg": cmd.get("cfg"),
        "alpha": cmd.get("alpha"),
    }
    return {**event, "command": safe}


def snapshot_view(session: ChiselSession) -> dict:
    # lock-free: retry while a command lands mid-assembly
    for _ in range(4):
        before = session.state_digest()
        view = analyst_view(session)
        if view["digest"] == before:
            break
    return view


# ---------------------------------------------------------------------------
# App


def create_app(log_dir: Optional[str] = None,
               store: Optional[SessionStore] = None) -> FastAPI:
    """Build the service; sessions live in `store` (fresh one by default).

    With `log_dir` set, each session appends a full-fidelity JSONL file
    `<log_dir>/<id>.jsonl` usable by `chisel replay`.
    """
    store = store if store is not None else SessionStore(log_dir)
    app = FastAPI(title="chisel sessions", default_response_class=WireJSON)
    app.state.store = store

    def _fail(status: int, message: str):
        raise HTTPException(status_code=status, detail=message)

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        if (req.csv is None) == (req.dgp is None):
            _fail(400, "provide exactly one of csv, dgp")
        unknown = set(req.mode) - set(ModeConfig().to_dict())
        if unknown:
            _fail(400, f"unknown mode fields {sorted(unknown)}")
        try:
            if req.csv is not None:
                payload = {"kind": "csv", "csv": req.csv,
                           "schema": req.data_schema, "seed": req.seed}
            else:
                payload = {"kind": "dgp", "family": req.dgp.family,
                           "cutoff": req.dgp.cutoff, "params": req.dgp.params,
                           "n": req.dgp.n, "seed": req.seed}
                if "cutoff" not in req.mode:
                    # default the test cutoff to the family's own
                    spec = DgpSpec(req.dgp.family, req.dgp.cutoff, req.dgp.params)
                    probe = np.random.default_rng(np.random.SeedSequence((0, 0)))
                    _, oracle = sample_dgp(spec, 1, probe)
                    req.mode["cutoff"] = oracle.cutoff
            cfg = ModeConfig.from_dict(req.mode)
            session = build_session(payload, cfg, req.alpha, req.session_seed)
        except HTTPException:
            raise
        except Exception as exc:
            _fail(400, str(exc))
        ds = session.dataset
        payload["n"] = ds.n
        payload["d"] = ds.d
        payload["dataset_id"] = ds.dataset_id
        entry = SessionEntry(
            id=uuid.uuid4().hex[:16], session=session, create_payload=payload,
            cfg=cfg, alpha=req.alpha, session_seed=req.session_seed,
        )
        if store.log_dir is not None:
            entry.log_path = os.path.join(store.log_dir, f"{entry.id}.jsonl")
        entry.append_event({
            "kind": "create", "dataset": payload, "cfg": cfg.to_dict(),
            "alpha": req.alpha, "session_seed": req.session_seed,
        })
        store.add(entry)
        return {
            "id": entry.id, "n": ds.n, "d": ds.d, "dataset_id": ds.dataset_id,
            "alpha": req.alpha, "mode": cfg.to_dict(),
            "digest": session.state_digest(),
        }

    @app.get("/sessions/{sid}")
    def view_session(sid: str):
        entry = store.get(sid)
        return {"id": sid, **snapshot_view(entry.session)}

    @app.post("/sessions/{sid}/commands")
    def run_command(sid: str, req: CommandRequest):
        entry = store.get(sid)
        cmd = {k: v for k, v in req.model_dump().items() if v is not None}
        kind = cmd["kind"]
        if kind == "create":
            _fail(400, "sessions are created with POST /sessions")
        if kind not in STATE_COMMANDS and kind not in PURE_COMMANDS:
            _fail(400, f"unknown command kind {kind!r}")
        with entry.lock:
            session = entry.session
            if session.finalized and kind not in ("view", "replay"):
                _fail(409, "session is finalized; only view and replay remain")
            try:
                if kind == "view":
                    result = analyst_view(session)
                elif kind == "propose_alpha":
                    if req.alpha is None:
                        _fail(400, "propose_alpha needs alpha")
                    granted = propose_alpha(session.ledger, float(req.alpha))
                    result = {"requested": req.alpha, "granted": granted,
                              "remaining": session.ledger.remaining()}
                elif kind == "replay":
                    result = replay_events(entry.create_payload, entry.cfg,
                                           entry.alpha, entry.session_seed,
                                           entry.events)
                    result.pop("_session")
                else:
                    result = apply_state_command(session, cmd)
            except HTTPException:
                raise
            except (CommandError, BudgetError, ConstraintViolation,
                    EmptySupportError, ValueError) as exc:
                _fail(400, str(exc))
            except RuntimeError as exc:
                _fail(409, str(exc))
            event = entry.append_event(cmd)
        return {"kind": kind, "seq": event["seq"], "digest": event["digest"],
                "rng_draws": event["rng_draws"], "result": result}

    @app.get("/sessions/{sid}/log")
    def session_log(sid: str):
        entry = store.get(sid)
        with entry.lock:
            events = list(entry.events)
        body = "".join(_event_line(redact_event(e)) + "\n" for e in events)
        return Response(content=body, media_type="application/x-ndjson")

    return app
