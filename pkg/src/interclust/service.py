"""HTTP session layer for the interactive clustering loop.

A thin adapter over :class:`interclust.feedback.ClusteringSession`: every
endpoint maps 1:1 onto a core operation, solves run in a background thread
(clients poll ``/status``), and all request/response bodies are JSON. The
feedback wire format is exactly the one used by the feedback module.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import replace

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .assignment import ContradictionError, InfeasibleError
from .features import SceneContext, build_dataset, load_trajectories, parse_latent_tag
from .feedback import ClusteringSession, FeedbackBatch, InconsistentFeedbackError
from .harness import ConfigError, ExperimentConfig, load_config
from .synth import generate_synthetic
from .model import Sample

__all__ = ["create_app"]


class _Session:
    """One live clustering session plus its solver thread bookkeeping."""

    def __init__(self, sid: str, config: ExperimentConfig):
        self.id = sid
        self.config = config
        self.lock = threading.Lock()
        self.status = "solving"
        self.error: str | None = None
        self.core: ClusteringSession | None = None
        self.contexts: dict[int, SceneContext] = {}
        self.labels: dict[int, object] = {}

    def start_round0(self) -> None:
        threading.Thread(target=self._solve_round0, daemon=True).start()

    def _solve_round0(self) -> None:
        try:
            seed = self.config.seeds[0]
            if "synthetic" in self.config.data:
                from .harness import _parse_synthetic

                synth_spec = replace(_parse_synthetic(self.config.data["synthetic"]), seed=seed)
                content, _ = generate_synthetic(synth_spec)
                trajectories, _ = load_trajectories(content)
            else:
                trajectories, _ = load_trajectories(self.config.data["trajectory_file"])
            samples, labels, _, contexts = build_dataset(trajectories, self.config.variant_spec)
            solve = replace(self.config.solve, seed=seed)
            core = ClusteringSession(samples, solve, labels=labels or None)
            with self.lock:
                self.core = core
                self.labels = labels
                self.contexts = {ctx.focal.id: ctx for ctx in contexts}
                self.status = "idle"
        except Exception as exc:  # surfaced via /status
            with self.lock:
                self.status = "error"
                self.error = f"{type(exc).__name__}: {exc}"

    def start_iterate(self) -> None:
        threading.Thread(target=self._solve_iterate, daemon=True).start()

    def _solve_iterate(self) -> None:
        try:
            assert self.core is not None
            self.core.iterate()
            with self.lock:
                self.status = "idle"
        except Exception as exc:
            with self.lock:
                self.status = "error"
                self.error = f"{type(exc).__name__}: {exc}"


def _polyline(ctx: SceneContext | None) -> dict:
    if ctx is None:
        return {}

    def pts(traj):
        return [[float(t), float(x), float(y)] for t, x, y in traj.points]

    out = {"focal": pts(ctx.focal)}
    if ctx.nearest_person is not None:
        out["nearest_person"] = pts(ctx.nearest_person)
    if ctx.nearest_vehicle is not None:
        out["nearest_vehicle"] = pts(ctx.nearest_vehicle)
    return out


def _sample_summary(session: _Session, sample: Sample, with_polyline: bool = True) -> dict:
    core = session.core
    sid = sample.id
    chosen = core.assignment.latent_choice.get(sid, 0)
    tag = sample.variants[chosen].latent_tag
    doc = {
        "id": sid,
        "latent_tag": tag,
        "latent_window": parse_latent_tag(tag) if tag else None,
    }
    if session.labels:
        doc["label"] = session.labels.get(sid)
    if with_polyline:
        doc["polyline"] = _polyline(session.contexts.get(sid))
    return doc


def create_app(
    default_config: ExperimentConfig | None = None,
    static_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="interclust", version="0.1.0")
    sessions: dict[str, _Session] = {}
    app.state.sessions = sessions

    def get_session(sid: str) -> _Session:
        session = sessions.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return session

    def require_idle(session: _Session) -> ClusteringSession:
        if session.status == "solving":
            raise HTTPException(status_code=409, detail="a solve is in flight")
        if session.status == "error":
            raise HTTPException(status_code=500, detail=session.error)
        assert session.core is not None
        return session.core

    @app.post("/sessions", status_code=201)
    def create_session(body: dict | None = None):
        body = body or {}
        if "config" in body:
            try:
                config = load_config(body["config"])
            except ConfigError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        elif default_config is not None:
            config = default_config
        else:
            raise HTTPException(status_code=422, detail="no config supplied")
        sid = uuid.uuid4().hex[:12]
        session = _Session(sid, config)
        sessions[sid] = session
        session.start_round0()
        return {"id": sid, "status": session.status}

    @app.get("/sessions/{sid}/status")
    def get_status(sid: str):
        session = get_session(sid)
        with session.lock:
            doc = {"id": sid, "status": session.status}
            if session.error:
                doc["error"] = session.error
            if session.core is not None:
                doc["round"] = session.core.round
                doc["n_samples"] = len(session.core.samples)
                last = session.core.rounds[-1]
                doc["last_round"] = {
                    "round": last.round,
                    "objective": last.objective,
                    "method_purity": last.method_purity,
                    "converged": last.converged,
                }
        return doc

    @app.get("/sessions/{sid}/clusters")
    def get_clusters(sid: str):
        session = get_session(sid)
        core = require_idle(session)
        by_id = {s.id: s for s in core.samples}
        members = core.assignment.cluster_members(core.spec.k)
        clusters = [
            {
                "index": t,
                "size": len(ids),
                "samples": [_sample_summary(session, by_id[i]) for i in ids],
            }
            for t, ids in enumerate(members)
        ]
        return {"round": core.round, "k": core.spec.k, "clusters": clusters}

    @app.get("/sessions/{sid}/samples/{sample_id}")
    def get_sample(sid: str, sample_id: int):
        session = get_session(sid)
        core = require_idle(session)
        sample = next((s for s in core.samples if s.id == sample_id), None)
        if sample is None:
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id}")
        doc = _sample_summary(session, sample)
        doc["cluster"] = core.assignment.sample_cluster[sample_id]
        doc["variants"] = [
            {"index": i, "latent_tag": v.latent_tag} for i, v in enumerate(sample.variants)
        ]
        doc["chosen_variant"] = core.assignment.latent_choice.get(sample_id, 0)
        return doc

    @app.post("/sessions/{sid}/feedback")
    def post_feedback(sid: str, body: dict):
        session = get_session(sid)
        core = require_idle(session)
        try:
            batch = FeedbackBatch.from_json(body)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"malformed feedback: {exc}")
        try:
            with session.lock:
                constraints = core.submit_feedback(batch)
        except ContradictionError as exc:
            return JSONResponse(
                status_code=422,
                content={"accepted": False, "error": str(exc), "ids": list(exc.ids)},
            )
        except InconsistentFeedbackError as exc:
            return JSONResponse(
                status_code=422,
                content={"accepted": False, "error": str(exc), "ids": [exc.sample_id]},
            )
        must, cannot = constraints.counts()
        return {"accepted": True, "constraints": {"must_groups": must, "cannot_pairs": cannot}}

    @app.post("/sessions/{sid}/iterate")
    def iterate(sid: str, wait: bool = False):
        session = get_session(sid)
        core = require_idle(session)
        with session.lock:
            if session.status == "solving":  # lost a race with another request
                raise HTTPException(status_code=409, detail="a solve is in flight")
            session.status = "solving"
        if wait:
            try:
                record = core.iterate()
                with session.lock:
                    session.status = "idle"
            except (InfeasibleError, RuntimeError) as exc:
                with session.lock:
                    session.status = "error"
                    session.error = str(exc)
                raise HTTPException(status_code=500, detail=str(exc))
            return {
                "status": "idle",
                "round": record.round,
                "objective": record.objective,
                "method_purity": record.method_purity,
                "converged": record.converged,
            }
        session.start_iterate()
        return {"status": "solving", "round": core.round}

    @app.get("/sessions/{sid}/curve")
    def get_curve(sid: str):
        session = get_session(sid)
        core = require_idle(session)
        if not session.labels:
            raise HTTPException(
                status_code=400, detail="purity curves need ground-truth labels (simulation mode)"
            )
        return {
            "rounds": [
                {
                    "round": r.round,
                    "method_purity": r.method_purity,
                    "manual_purity": r.manual_purity,
                    "moved_count": r.moved_count,
                    "constraint_must": r.constraint_must,
                    "constraint_cannot": r.constraint_cannot,
                }
                for r in core.rounds
            ]
        }

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        # API routes above take precedence; everything else is the UI bundle
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
