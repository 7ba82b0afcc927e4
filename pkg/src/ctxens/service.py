"""HTTP labeling service: one live query loop per session.

The service wraps :class:`~ctxens.active.ActiveSession` without adding any
logic of its own -- selection, weighting and importance updates happen in
the exact code the in-process simulated-oracle path uses, so replaying the
same labels over HTTP reproduces an in-process run bit for bit.

Sessions are pickled to disk after creation and after every accepted label;
a restarted server transparently reloads them. Every 4xx leaves the session
untouched.
"""
from __future__ import annotations

import pickle
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .active import ActiveSession, QueryStrategy, _selection_weights
from .data import ContextSet, Dataset, ScoreMatrix
from .datagen import BUILTIN_DATASETS, builtin_dataset, load_csv
from .ensemble import combine, prune
from .errors import (
    ConfigError,
    CtxensError,
    DataError,
    LabelDomainError,
    QueryMismatchError,
    SessionNotFoundError,
    SessionStateError,
)
from .evaluation import ExperimentConfig, auc_pr, auc_roc, fit_pipeline

__all__ = ["create_app", "SessionStore", "StoredSession"]


class StrategyBody(BaseModel):
    kind: str = "lca"
    lam: float = Field(default=0.96, alias="lambda")
    threshold: float = 0.9

    model_config = {"populate_by_name": True}


class CreateSessionBody(BaseModel):
    dataset: str
    data_seed: int = 0
    seed: int = 0
    budget: int = Field(default=20, ge=1)
    strategy: StrategyBody = Field(default_factory=StrategyBody)
    combiner: str = "weighted"
    train_fraction: float = 0.7
    max_clusters: int = 10
    pca_k: int = 10


class LabelBody(BaseModel):
    index: int
    label: int


@dataclass
class StoredSession:
    """Everything a session needs to answer queries and produce results."""

    session_id: str
    dataset_id: str
    config: ExperimentConfig
    session: ActiveSession
    train_features: np.ndarray
    feature_names: tuple[str, ...]
    contexts: ContextSet
    train_matrix: ScoreMatrix
    test_matrix: ScoreMatrix
    test_labels: np.ndarray | None
    true_context_index: int | None

    @property
    def status(self) -> str:
        return "complete" if self.session.done else "awaiting_label"

    @property
    def context_masks(self) -> tuple[int, ...]:
        return tuple(c.mask for c in self.contexts.contexts)


class SessionStore:
    """In-memory registry with pickle-per-write persistence."""

    def __init__(self, state_dir: str | Path):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, StoredSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _path(self, session_id: str) -> Path:
        return self.state_dir / f"{session_id}.pkl"

    def add(self, stored: StoredSession) -> None:
        with self._registry_lock:
            self._sessions[stored.session_id] = stored
            self._locks[stored.session_id] = threading.Lock()
        self.persist(stored)

    def persist(self, stored: StoredSession) -> None:
        tmp = self._path(stored.session_id).with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            pickle.dump(stored, fh)
        tmp.replace(self._path(stored.session_id))

    def get(self, session_id: str) -> StoredSession:
        with self._registry_lock:
            if session_id in self._sessions:
                return self._sessions[session_id]
        path = self._path(session_id)
        if path.exists():
            with open(path, "rb") as fh:
                stored = pickle.load(fh)
            with self._registry_lock:
                self._sessions.setdefault(session_id, stored)
                self._locks.setdefault(session_id, threading.Lock())
            return self._sessions[session_id]
        raise SessionNotFoundError(f"no session {session_id!r}")

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            if session_id not in self._locks:
                self._locks[session_id] = threading.Lock()
            return self._locks[session_id]


def _resolve_dataset(name: str, data_seed: int, data_dir: Path, preloaded: dict) -> tuple[str, Dataset]:
    if name in preloaded:
        return name, preloaded[name]
    if name in BUILTIN_DATASETS:
        ds, _ = builtin_dataset(name, data_seed)
        return name, ds
    path = Path(name)
    if not path.is_absolute():
        path = data_dir / path
    if path.exists():
        return path.stem, load_csv(path)
    raise DataError(f"unknown dataset {name!r}: not a bundled name and no such file")


def _query_payload(stored: StoredSession) -> dict:
    q = stored.session.pending
    if q is None:
        raise SessionStateError("session is complete; no query is pending")
    state = stored.session.state
    weights = _selection_weights(state.importances)
    order = np.argsort(-state.importances)[:5]
    return {
        "session_id": stored.session_id,
        "iteration": q.iteration,
        "budget": stored.session.budget,
        "sample_index": q.index,
        "features": {
            name: float(v)
            for name, v in zip(stored.feature_names, stored.train_features[q.index])
        },
        "margin": q.margin,
        "vote_fraction": q.vote_fraction,
        "predictions": [int(p) for p in q.predictions],
        "selection_weights": [float(w) for w in weights],
        "top_contexts": [
            {
                "context_index": int(i),
                "bitmask": int(stored.context_masks[int(i)]),
                "importance": float(state.importances[int(i)]),
                "epsilon": float(state.epsilons[int(i)]),
            }
            for i in order
        ],
    }


def _state_payload(stored: StoredSession) -> dict:
    state = stored.session.state
    order = np.argsort(-np.abs(state.importances))[:10]
    return {
        "session_id": stored.session_id,
        "dataset": stored.dataset_id,
        "status": stored.status,
        "budget": stored.session.budget,
        "labels_used": len(state.pool),
        "strategy": stored.config.strategy.kind,
        "n_contexts": int(state.importances.shape[0]),
        "history": [
            {
                "iteration": r.iteration,
                "sample_index": r.index,
                "label": r.label,
                "margin": round(r.margin, 9),
                "weight": round(r.weight, 9),
            }
            for r in stored.session.audit
        ],
        "top_contexts": [
            {
                "context_index": int(i),
                "bitmask": int(stored.context_masks[int(i)]),
                "importance": float(state.importances[int(i)]),
                "epsilon": float(state.epsilons[int(i)]),
            }
            for i in order
        ],
    }


def create_app(
    state_dir: str | Path = "sessions",
    data_dir: str | Path = ".",
    preloaded: dict[str, Dataset] | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    """Build the service; ``preloaded`` maps dataset names to in-memory data."""
    app = FastAPI(title="ctxens labeling service")
    store = SessionStore(state_dir)
    data_dir = Path(data_dir)
    preloaded = dict(preloaded or {})

    @app.exception_handler(CtxensError)
    def _domain_error(_, exc: CtxensError):
        status = 500
        if isinstance(exc, SessionNotFoundError):
            status = 404
        elif isinstance(exc, (SessionStateError, QueryMismatchError)):
            status = 409
        elif isinstance(exc, LabelDomainError) or isinstance(exc, ConfigError):
            status = 422
        elif isinstance(exc, DataError):
            status = 400
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "message": str(exc)},
        )

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        strategy = QueryStrategy(
            kind=body.strategy.kind,
            lam=body.strategy.lam,
            threshold=body.strategy.threshold,
        )
        config = ExperimentConfig(
            strategy=strategy,
            budget=body.budget,
            combiner=body.combiner,
            seeds=(body.seed,),
            train_fraction=body.train_fraction,
            pca_components=body.pca_k,
        )
        dataset_id, dataset = _resolve_dataset(
            body.dataset, body.data_seed, data_dir, preloaded
        )
        dataset.require_labels()
        fitted = fit_pipeline(dataset, body.seed, config)
        session = ActiveSession(fitted.train_matrix, strategy, body.budget, body.seed)
        stored = StoredSession(
            session_id=uuid.uuid4().hex[:12],
            dataset_id=dataset_id,
            config=config,
            session=session,
            train_features=np.asarray(fitted.train.features),
            feature_names=fitted.train.feature_names
            or tuple(f"f{i}" for i in range(fitted.train.d)),
            contexts=fitted.contexts,
            train_matrix=fitted.train_matrix,
            test_matrix=fitted.test_matrix,
            test_labels=None
            if fitted.test.labels is None
            else np.asarray(fitted.test.labels),
            true_context_index=fitted.true_context_index,
        )
        store.add(stored)
        return {
            "session_id": stored.session_id,
            "status": stored.status,
            "dataset": dataset_id,
            "n_contexts": len(stored.context_masks),
            "n_train": int(stored.train_features.shape[0]),
            "query": _query_payload(stored),
        }

    @app.get("/sessions/{session_id}/query")
    def get_query(session_id: str) -> dict:
        stored = store.get(session_id)
        return _query_payload(stored)

    @app.post("/sessions/{session_id}/label")
    def submit_label(session_id: str, body: LabelBody) -> dict:
        stored = store.get(session_id)
        with store.lock(session_id):
            before = stored.session.state.importances.copy()
            record = stored.session.submit(body.index, body.label)
            store.persist(stored)
            delta = record.importances_after - before
            out = {
                "session_id": session_id,
                "status": stored.status,
                "labels_used": len(stored.session.state.pool),
                "budget": stored.session.budget,
                "applied": {
                    "iteration": record.iteration,
                    "sample_index": record.index,
                    "label": record.label,
                    "margin": round(record.margin, 9),
                    "weight": round(record.weight, 9),
                },
                "importance_delta": [round(float(v), 9) for v in delta],
            }
            if not stored.session.done:
                out["query"] = _query_payload(stored)
            return out

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str) -> dict:
        return _state_payload(store.get(session_id))

    @app.get("/sessions/{session_id}/result")
    def get_result(session_id: str) -> dict:
        stored = store.get(session_id)
        if not stored.session.done:
            raise SessionStateError(
                f"{len(stored.session.state.pool)}/{stored.session.budget} labels "
                "applied; the result is available once the budget is spent"
            )
        state = stored.session.state
        kind = stored.config.combiner
        train_scores = combine(
            stored.train_matrix,
            kind,
            importances=state.importances,
            true_context_index=stored.true_context_index,
        )
        kept = prune(state.importances)
        payload = {
            "session_id": session_id,
            "combiner": kind,
            "kept_contexts": [
                {
                    "context_index": int(i),
                    "bitmask": int(stored.context_masks[int(i)]),
                    "importance": float(state.importances[int(i)]),
                }
                for i in kept
            ],
            "importances": [float(v) for v in state.importances],
            "epsilons": [float(v) for v in state.epsilons],
            "train_scores": [float(s) for s in train_scores],
            "history": _state_payload(stored)["history"],
        }
        test_final = combine(
            stored.test_matrix,
            kind,
            importances=state.importances,
            true_context_index=stored.true_context_index,
        )
        payload["test_scores"] = [float(s) for s in test_final]
        if stored.test_labels is not None and 0 < int(stored.test_labels.sum()) < len(
            stored.test_labels
        ):
            payload["test_metrics"] = {
                "auc_pr": auc_pr(test_final, stored.test_labels),
                "auc_roc": auc_roc(test_final, stored.test_labels),
            }
        return payload

    if ui_dir is not None and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    app.state.store = store
    return app
