"""Leave-one-participant-out evaluation and projection-mode comparison."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import PipelineConfig
from .evaluation import ImprovementReport, SubsetAccuracy, _report, improvement_from_reports
from .pipeline import ProcessedSession, process_session
from .selection import (
    SUITABLE,
    ForestConfig,
    LabeledSaccade,
    downsample_majority,
    label_by_loso,
    train,
)
from .warpfield import ProjectionMode

CONDITIONS = ("n50", "n100", "all", "selected")


@dataclass
class SessionOutcome:
    session_id: str
    participant_id: str
    reports: dict  # condition -> ImprovementReport
    retained: dict  # condition -> number of saccades used
    n_saccades: int
    errors: dict = field(repr=False, default_factory=dict)  # "before" / condition -> per-point errors
    cells: Optional[np.ndarray] = field(repr=False, default=None)


@dataclass
class HarnessResult:
    mode: str
    sessions: list  # SessionOutcome
    participants: dict  # pid -> condition -> ImprovementReport
    pooled: dict  # condition -> ImprovementReport

    def improvement_table(self) -> dict:
        """condition -> {pid: pct, ..., "pooled": pct}"""
        out = {}
        for c in CONDITIONS:
            row = {pid: rep[c].improvement_pct for pid, rep in self.participants.items()}
            row["pooled"] = self.pooled[c].improvement_pct
            out[c] = row
        return out

    def fraction_improved(self, condition: str = "selected") -> float:
        vals = [rep[condition].improvement_pct for rep in self.participants.values()]
        return float(np.mean(np.array(vals) > 0))

    def to_dict(self) -> dict:
        return {
            "schema_version": "1.0",
            "mode": self.mode,
            "pooled": {c: r.to_dict() for c, r in self.pooled.items()},
            "participants": {pid: {c: r.to_dict() for c, r in reps.items()}
                             for pid, reps in self.participants.items()},
            "sessions": [
                {"session_id": s.session_id, "participant_id": s.participant_id,
                 "n_saccades": s.n_saccades, "retained": s.retained,
                 "improvement_pct": {c: r.improvement_pct for c, r in s.reports.items()}}
                for s in self.sessions
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self) -> list[list]:
        rows = [["session_id", "participant_id", "condition", "retained", "before_deg", "after_deg", "improvement_pct"]]
        for s in self.sessions:
            for c in CONDITIONS:
                r = s.reports[c]
                rows.append([s.session_id, s.participant_id, c, s.retained[c],
                             f"{r.before.mean_error_deg:.6f}", f"{r.after.mean_error_deg:.6f}",
                             f"{r.improvement_pct:.6f}"])
        return rows


def _group(sessions) -> dict:
    if isinstance(sessions, Mapping):
        return {pid: list(v) for pid, v in sessions.items()}
    groups: dict = {}
    for s in sessions:
        groups.setdefault(s.participant_id, []).append(s)
    return groups


def _pooled(outcomes: Sequence[SessionOutcome], condition: str) -> ImprovementReport:
    cells = np.concatenate([o.cells for o in outcomes])
    n_fix = sum(o.reports[condition].before.n_fixations for o in outcomes)
    before = _report(np.concatenate([o.errors["before"] for o in outcomes]), cells, n_fix)
    after = _report(np.concatenate([o.errors[condition] for o in outcomes]), cells, n_fix)
    return improvement_from_reports(before, after)


class _Prepared:
    """Processed session plus its subset evaluator and LOSO labels."""

    def __init__(self, ps: ProcessedSession, mode, pcfg: PipelineConfig, seed: int):
        self.ps = ps
        self.evaluator = SubsetAccuracy(ps.saccades, ps.fixation_points, ps.session.geom,
                                        mode, pcfg.quad_px, pcfg.kernel)
        self.labels: list[LabeledSaccade] = (
            label_by_loso(ps.saccades, ps.session, self.evaluator, seed) if len(ps.saccades) >= 2 else [])


def prepare(sessions, mode=ProjectionMode.MIDDLE, pcfg: PipelineConfig = PipelineConfig(),
            seed: int = 0) -> dict:
    """Process and LOSO-label every session once; pid -> list of prepared sessions."""
    mode = ProjectionMode.parse(mode)
    out = {}
    for pid, group in sorted(_group(sessions).items()):
        out[pid] = [_Prepared(s if isinstance(s, ProcessedSession) else process_session(s, pcfg), mode, pcfg, seed)
                    for s in group]
    return out


def _evaluate_session(prep: _Prepared, forest, rng: np.random.Generator) -> SessionOutcome:
    ps = prep.ps
    n = len(ps.saccades)
    masks = {}
    for c, k in (("n50", 50), ("n100", 100)):
        m = np.zeros(n, dtype=bool)
        m[rng.choice(n, min(k, n), replace=False)] = True
        masks[c] = m
    masks["all"] = np.ones(n, dtype=bool)
    masks["selected"] = forest.predict(ps.X) == 1 if n else np.zeros(0, dtype=bool)
    errors = {"before": prep.evaluator.errors(np.zeros(n, dtype=bool))}
    cells = ps.fixation_points.cells
    n_fix = ps.fixation_points.n_fixations
    before = _report(errors["before"], cells, n_fix)
    reports = {}
    for c in CONDITIONS:
        errors[c] = prep.evaluator.errors(masks[c])
        reports[c] = improvement_from_reports(before, _report(errors[c], cells, n_fix))
    return SessionOutcome(ps.session.session_id, ps.session.participant_id, reports,
                          {c: int(masks[c].sum()) for c in CONDITIONS}, n, errors, cells)


class _ConstantSelector:
    def __init__(self, value: int):
        self.value = value

    def predict(self, X):
        return np.full(len(X), self.value)


def _fit_selector(data, cfg: ForestConfig):
    labels = {lab.label for lab in data}
    if len(labels) < 2:
        # nothing to learn: every saccade got the same label
        return _ConstantSelector(int(labels == {SUITABLE}))
    return train(downsample_majority(data, cfg.rng_seed), cfg)


def loso_harness(sessions, cfg: ForestConfig = ForestConfig(), mode=ProjectionMode.MIDDLE,
                 pcfg: PipelineConfig = PipelineConfig(), prepared: Optional[dict] = None) -> HarnessResult:
    """Leave-one-participant-out: train on the others' labels, correct the held-out sessions.

    ``sessions`` is a mapping pid -> sessions or a flat list grouped by
    participant_id. Each fold reports four conditions: 50 and 100 random
    saccades, all saccades, and the forest-selected ones.
    """
    mode = ProjectionMode.parse(mode)
    prepared = prepared if prepared is not None else prepare(sessions, mode, pcfg, cfg.rng_seed)
    pids = sorted(prepared)
    if len(pids) < 2:
        raise ValueError("need at least two participants")
    outcomes = []
    participants = {}
    for pid in pids:
        data = [lab for other in pids if other != pid for p in prepared[other] for lab in p.labels]
        forest = _fit_selector(data, cfg)
        fold_out = [_evaluate_session(p, forest, np.random.default_rng([cfg.rng_seed, j]))
                    for j, p in enumerate(prepared[pid])]
        outcomes.extend(fold_out)
        participants[pid] = {c: _pooled(fold_out, c) for c in CONDITIONS}
    pooled = {c: _pooled(outcomes, c) for c in CONDITIONS}
    return HarnessResult(mode.value, outcomes, participants, pooled)


def projection_comparison(sessions, cfg: ForestConfig = ForestConfig(),
                          pcfg: PipelineConfig = PipelineConfig()) -> dict:
    """Pooled improvement percent per projection mode for all and selected saccades."""
    processed = {pid: [s if isinstance(s, ProcessedSession) else process_session(s, pcfg) for s in group]
                 for pid, group in sorted(_group(sessions).items())}
    table = {}
    for mode in ProjectionMode:
        res = loso_harness(processed, cfg, mode, pcfg)
        table[mode.value] = {"all": res.pooled["all"].improvement_pct,
                             "selected": res.pooled["selected"].improvement_pct}
    return table


def labels_suitable_fraction(prepared: dict) -> float:
    labs = [lab for group in prepared.values() for p in group for lab in p.labels]
    return float(np.mean([lab.label == SUITABLE for lab in labs])) if labs else float("nan")
