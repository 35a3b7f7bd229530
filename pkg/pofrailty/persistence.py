"""SQLite store for simulation runs and their replicate results."""

from __future__ import annotations

import json
import math
import sqlite3
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from uuid import uuid4

from pofrailty.config import resolve_db_path
from pofrailty.simulation import RepResult, ScenarioConfig

STATUS_RUNNING = "RUNNING"
STATUS_DONE = "DONE"
STATUS_FLAGGED = "FLAGGED"
STATUS_FAILED = "FAILED"
_STATUSES = {STATUS_RUNNING, STATUS_DONE, STATUS_FLAGGED, STATUS_FAILED}


@dataclass(frozen=True)
class SavedRun:
    """Saved run metadata."""

    run_id: str
    created_at: str
    label: str


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _connect(db_path: str | None = None) -> sqlite3.Connection:
    db_file = Path(db_path or resolve_db_path())
    db_file.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(db_file)
    conn.execute("PRAGMA foreign_keys = ON")
    return conn


def _nullable(value: float) -> float | None:
    return None if math.isnan(value) else value


def _nan(value: float | None) -> float:
    return math.nan if value is None else float(value)


def bootstrap_schema(db_path: str | None = None) -> None:
    """Create persistence schema if it does not already exist."""
    with _connect(db_path) as conn:
        conn.executescript(
            """
            CREATE TABLE IF NOT EXISTS scenario_runs (
                id TEXT PRIMARY KEY,
                created_at TEXT NOT NULL,
                label TEXT NOT NULL,
                config_json TEXT NOT NULL,
                status TEXT NOT NULL
            );

            CREATE TABLE IF NOT EXISTS replicates (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id TEXT NOT NULL,
                rep_index INTEGER NOT NULL,
                estimates_json TEXT NOT NULL,
                ses_json TEXT NOT NULL,
                covers_json TEXT NOT NULL,
                censoring REAL,
                n_outer_iters INTEGER NOT NULL,
                converged INTEGER NOT NULL,
                message TEXT NOT NULL DEFAULT '',
                FOREIGN KEY(run_id) REFERENCES scenario_runs(id) ON DELETE CASCADE,
                UNIQUE(run_id, rep_index)
            );

            CREATE INDEX IF NOT EXISTS idx_replicates_run_rep
                ON replicates(run_id, rep_index);
            """
        )


def save_run(cfg: ScenarioConfig, db_path: str | None = None) -> SavedRun:
    """Register a scenario run in RUNNING state."""
    run_id = uuid4().hex
    created_at = _utc_now_iso()
    config = asdict(cfg)
    config["corr_kind"] = cfg.corr_kind.value
    with _connect(db_path) as conn:
        with conn:
            conn.execute(
                "INSERT INTO scenario_runs (id, created_at, label, config_json, status) VALUES (?, ?, ?, ?, ?)",
                (run_id, created_at, cfg.label, json.dumps(config, sort_keys=True), STATUS_RUNNING),
            )
    return SavedRun(run_id=run_id, created_at=created_at, label=cfg.label)


def save_replicate(run_id: str, result: RepResult, db_path: str | None = None) -> None:
    with _connect(db_path) as conn:
        with conn:
            conn.execute(
                """
                INSERT OR REPLACE INTO replicates (
                    run_id, rep_index, estimates_json, ses_json, covers_json,
                    censoring, n_outer_iters, converged, message
                ) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
                """,
                (
                    run_id,
                    result.rep_index,
                    json.dumps([_nullable(x) for x in result.beta_hat + (result.rho_hat,)]),
                    json.dumps([_nullable(x) for x in result.se_beta + (result.se_rho,)]),
                    json.dumps(list(result.ci_covers)),
                    _nullable(result.censoring),
                    result.n_outer_iters,
                    int(result.converged),
                    result.message,
                ),
            )


def update_run_status(run_id: str, status: str, db_path: str | None = None) -> None:
    """Update status for a persisted scenario run."""
    if status not in _STATUSES:
        raise ValueError(f"unknown run status {status!r}")
    with _connect(db_path) as conn:
        with conn:
            conn.execute("UPDATE scenario_runs SET status = ? WHERE id = ?", (status, run_id))


def load_run_status(run_id: str, db_path: str | None = None) -> str | None:
    with _connect(db_path) as conn:
        row = conn.execute("SELECT status FROM scenario_runs WHERE id = ?", (run_id,)).fetchone()
    return None if row is None else str(row[0])


def load_replicates(run_id: str, db_path: str | None = None) -> list[RepResult]:
    """Replicates of one run ordered by rep_index."""
    with _connect(db_path) as conn:
        rows = conn.execute(
            """
            SELECT rep_index, estimates_json, ses_json, covers_json, censoring, n_outer_iters, converged, message
            FROM replicates WHERE run_id = ? ORDER BY rep_index
            """,
            (run_id,),
        ).fetchall()
    results = []
    for rep_index, estimates_json, ses_json, covers_json, censoring, n_outer, converged, message in rows:
        estimates = [_nan(x) for x in json.loads(estimates_json)]
        ses = [_nan(x) for x in json.loads(ses_json)]
        results.append(
            RepResult(
                rep_index=int(rep_index),
                beta_hat=tuple(estimates[:-1]),
                rho_hat=estimates[-1],
                se_beta=tuple(ses[:-1]),
                se_rho=ses[-1],
                ci_covers=tuple(bool(c) for c in json.loads(covers_json)),
                converged=bool(converged),
                censoring=_nan(censoring),
                n_outer_iters=int(n_outer),
                message=str(message),
            )
        )
    return results
