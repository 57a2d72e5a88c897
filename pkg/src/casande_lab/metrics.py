"""Evaluation metrics for diagnosis trajectories.

Set-valued metrics work on thresholded differentials (mass > 0.01 by
default).  Rates whose denominator is empty count as 1.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .environment import Trajectory
from .knowledge import DIFFERENTIAL_THRESHOLD, KnowledgeBase, PatientRecord, threshold_differential
from .shaping import kl

NUM_RESAMPLED = 21
METRIC_NAMES = ("IL", "PER", "DDR", "DDP", "DDF1", "DSHM", "rule_in", "rule_out", "GTPA", "GTPA@1", "GTPA@3",
                "GTPA@5")
SERIES_NAMES = ("exploration", "confirmation", "rule_in", "rule_out", "dshm")


class EmptyInput(ValueError):
    pass


class EmptyExperiencedSet(ValueError):
    pass


class EmptyGroundTruthSet(ValueError):
    pass


def interaction_length(trajectories) -> float:
    lengths = [len(t.inquired) if isinstance(t, Trajectory) else len(t) for t in trajectories]
    if not lengths:
        raise EmptyInput("no trajectories")
    return float(np.mean(lengths))


def positive_evidence_recall(patient: PatientRecord, inquired) -> float:
    """Share of the experienced evidences (chief complaint excluded) that were asked."""
    relevant = patient.experienced - {patient.chief_complaint}
    if not relevant:
        raise EmptyExperiencedSet("patient experiences nothing beyond the chief complaint")
    return len(relevant & set(inquired)) / len(relevant)


def _f1(a: float, b: float) -> float:
    return 0.0 if a + b == 0 else 2.0 * a * b / (a + b)


def differential_recall_precision(pred, gt, tau: float = DIFFERENTIAL_THRESHOLD) -> tuple[float, float]:
    P = threshold_differential(pred, tau)
    G = threshold_differential(gt, tau)
    if not G:
        raise EmptyGroundTruthSet("ground-truth differential is empty after thresholding")
    hit = len(P & G)
    return hit / len(G), (hit / len(P) if P else 0.0)


def ddf1(pred, gt, tau: float = DIFFERENTIAL_THRESHOLD) -> float:
    r, p = differential_recall_precision(pred, gt, tau)
    return _f1(r, p)


def severe_rates(pred, gt, severe, tau: float = DIFFERENTIAL_THRESHOLD) -> tuple[float | None, float | None]:
    """(rule-in, rule-out); ``None`` when the denominator is empty."""
    S = frozenset(severe)
    P = threshold_differential(pred, tau)
    G = threshold_differential(gt, tau)
    in_den = G & S
    out_den = S - G
    rule_in = len(P & in_den) / len(in_den) if in_den else None
    rule_out = len(out_den - P) / len(out_den) if out_den else None
    return rule_in, rule_out


def dshm(pred, gt, severe, tau: float = DIFFERENTIAL_THRESHOLD) -> float:
    rule_in, rule_out = severe_rates(pred, gt, severe, tau)
    defined = [r for r in (rule_in, rule_out) if r is not None]
    if not defined:
        return 1.0
    if len(defined) == 1:
        return defined[0]
    return _f1(rule_in, rule_out)


def gtpa(pred, gt_pathology: int, tau: float = DIFFERENTIAL_THRESHOLD) -> int:
    return int(gt_pathology in threshold_differential(pred, tau))


def top_k(pred, k: int) -> list[int]:
    """Indices of the k largest entries, ties to the lower id."""
    pred = np.asarray(pred, dtype=float)
    order = np.lexsort((np.arange(pred.size), -pred))
    return order[:k].tolist()


def gtpa_at_k(pred, gt_pathology: int, k: int) -> int:
    return int(gt_pathology in top_k(pred, k))


def exploration_score(bel_prev, bel) -> float:
    return 1.0 - math.exp(-kl(bel_prev, bel))


def confirmation_score(bel, y) -> float:
    return math.exp(-kl(y, bel))


def resample_indices(L: int, n: int = NUM_RESAMPLED) -> list[int]:
    """round(f * (L - 1)) for f = 0, 1/(n-1), ..., 1 with halves rounded up, in exact integer arithmetic."""
    if L < 1:
        raise EmptyInput("cannot resample an empty series")
    m = n - 1
    return [(2 * k * (L - 1) + m) // (2 * m) for k in range(n)]


def resample_21(series) -> list:
    series = list(series)
    return [series[i] for i in resample_indices(len(series))]


# --------------------------------------------------------------------------
# per-patient evaluation and reports
# --------------------------------------------------------------------------

def trajectory_series(traj: Trajectory, patient: PatientRecord, severe, tau: float = DIFFERENTIAL_THRESHOLD) -> dict:
    """Per-turn scores over the beliefs that follow each inquiry."""
    beliefs = traj.beliefs
    y = patient.gt_differential
    if len(beliefs) > 1:
        pairs = list(zip(beliefs[:-1], beliefs[1:]))
        seq = beliefs[1:]
        expl = [exploration_score(a, b) for a, b in pairs]
    else:
        seq = beliefs
        expl = [0.0]
    rin, rout, dsh = [], [], []
    for b in seq:
        ri, ro = severe_rates(b, y, severe, tau)
        rin.append(1.0 if ri is None else ri)
        rout.append(1.0 if ro is None else ro)
        dsh.append(dshm(b, y, severe, tau))
    return {
        "exploration": expl,
        "confirmation": [confirmation_score(b, y) for b in seq],
        "rule_in": rin,
        "rule_out": rout,
        "dshm": dsh,
    }


def evaluate_patient(traj: Trajectory, patient: PatientRecord, kb: KnowledgeBase,
                     tau: float = DIFFERENTIAL_THRESHOLD) -> dict:
    pred = traj.final_belief
    y = patient.gt_differential
    severe = kb.severe
    try:
        per = positive_evidence_recall(patient, traj.inquired)
    except EmptyExperiencedSet:
        per = None
    ddr, ddp = differential_recall_precision(pred, y, tau)
    rule_in, rule_out = severe_rates(pred, y, severe, tau)
    rec = {
        "IL": float(len(traj.inquired)),
        "PER": per,
        "DDR": ddr,
        "DDP": ddp,
        "DDF1": _f1(ddr, ddp),
        "DSHM": dshm(pred, y, severe, tau),
        "rule_in": 1.0 if rule_in is None else rule_in,
        "rule_out": 1.0 if rule_out is None else rule_out,
        "GTPA": float(gtpa(pred, patient.gt_pathology, tau)),
    }
    for k in (1, 3, 5):
        rec[f"GTPA@{k}"] = float(gtpa_at_k(pred, patient.gt_pathology, k))
    rec["series"] = {k: resample_21(v) for k, v in trajectory_series(traj, patient, severe, tau).items()}
    return rec


@dataclass
class EvaluationReport:
    method: str
    per_patient: list[dict]
    means: dict
    series: dict
    ci: dict = field(default_factory=dict)
    n_runs: int = 1


def build_report(method: str, records: list[dict]) -> EvaluationReport:
    if not records:
        raise EmptyInput("no patients evaluated")
    means = {}
    for name in METRIC_NAMES:
        vals = [r[name] for r in records if r[name] is not None]
        means[name] = float(np.mean(vals)) if vals else float("nan")
    series = {
        name: np.mean([r["series"][name] for r in records], axis=0).tolist() for name in SERIES_NAMES
    }
    return EvaluationReport(method, records, means, series)


def t_quantile_975(df: int) -> float:
    from scipy.stats import t

    return float(t.ppf(0.975, df))


def aggregate(reports: list[EvaluationReport]) -> EvaluationReport:
    """Mean over runs; 95% t-interval half-widths when there are at least two runs."""
    if not reports:
        raise EmptyInput("no runs to aggregate")
    n = len(reports)
    means, ci = {}, {}
    for name in METRIC_NAMES:
        vals = np.array([r.means[name] for r in reports])
        same = bool(np.all(vals == vals[0]))  # nan-valued metrics fall through to nan
        # identical runs stay exact instead of picking up rounding from re-averaging
        means[name] = float(vals[0]) if same else float(np.mean(vals))
        if n >= 2:
            half = 0.0 if same else t_quantile_975(n - 1) * float(np.std(vals, ddof=1)) / math.sqrt(n)
            ci[name] = (means[name] - half, means[name] + half)
    series = {name: np.mean([r.series[name] for r in reports], axis=0).tolist() for name in SERIES_NAMES}
    out = EvaluationReport(reports[0].method, [rec for r in reports for rec in r.per_patient], means, series, ci, n)
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def write_report_csv(reports: list[EvaluationReport], path, metrics=METRIC_NAMES) -> None:
    """One row per (metric, method)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "method", "n_runs", "mean", "ci95_low", "ci95_high"])
        for name in metrics:
            for rep in reports:
                lo, hi = rep.ci.get(name, (None, None))
                w.writerow([name, rep.method, rep.n_runs, _fmt(rep.means[name]), _fmt(lo), _fmt(hi)])


def write_series_csv(report: EvaluationReport, path) -> None:
    """21 rows of averaged per-turn trajectory scores."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "fraction", *SERIES_NAMES])
        for k in range(NUM_RESAMPLED):
            w.writerow([k, repr(k / (NUM_RESAMPLED - 1)), *(repr(report.series[s][k]) for s in SERIES_NAMES)])
