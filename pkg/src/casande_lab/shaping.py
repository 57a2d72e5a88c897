"""Auxiliary rewards built on the classifier's beliefs.

All logarithms are natural; probabilities are clamped to ``[EPS, 1]`` before
any log is taken.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .knowledge import DIFFERENTIAL_THRESHOLD, threshold_differential

EPS = 1e-12


class DimensionMismatch(ValueError):
    pass


@dataclass
class SchedulerConfig:
    x_min: float = -13.0
    x_max: float = 13.0
    delta_ex: float = 9.0
    delta_co: float = 4.0
    T: int = 30

    def validate(self) -> None:
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be < x_max")
        if self.T < 1:
            raise ValueError("T must be >= 1")


@dataclass
class ShapingConfig:
    alpha_ex: float = 12.0
    alpha_co: float = 1.0
    alpha_sev: float = 0.75
    alpha_cl: float = 1.0
    w_si: float = 1.0
    tau_sev: float = DIFFERENTIAL_THRESHOLD
    gamma: float = 0.99
    # SevIn / Sev_y when the ground truth holds no severe pathology
    vacuous_inclusion: float = 1.0
    # "neither": a severe pathology counts as ruled out once both sets exclude it;
    # "not_both": it counts as soon as it is missing from at least one of them
    sev_out_mode: str = "neither"

    def validate(self) -> None:
        if self.tau_sev < 0:
            raise ValueError("tau_sev must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.sev_out_mode not in ("neither", "not_both"):
            raise ValueError(f"unknown sev_out_mode {self.sev_out_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def disabled(cls, **kw) -> "ShapingConfig":
        return cls(alpha_ex=0.0, alpha_co=0.0, alpha_sev=0.0, alpha_cl=0.0, **kw)


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def trans(t: float, sch: SchedulerConfig) -> float:
    return t * (sch.x_max - sch.x_min) / sch.T + sch.x_min


def w_ex(t: float, sch: SchedulerConfig) -> float:
    return sigmoid(-(trans(t, sch) + sch.delta_ex))


def w_co(t: float, sch: SchedulerConfig) -> float:
    return sigmoid(trans(t, sch) + sch.delta_co)


def _pair(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"shapes {p.shape} and {q.shape} differ")
    return p, q


def clamp(p) -> np.ndarray:
    return np.clip(np.asarray(p, dtype=float), EPS, 1.0)


def kl(p, q) -> float:
    """KL(p || q) in nats; terms with p == 0 contribute nothing."""
    p, q = _pair(p, q)
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(clamp(p[mask])) - np.log(clamp(q[mask])))))


def jsd(p, q) -> float:
    p, q = _pair(p, q)
    m = 0.5 * (p + q)
    return max(0.5 * kl(p, m) + 0.5 * kl(q, m), 0.0)


def cross_entropy(bel, y) -> float:
    """-sum_d y_d log bel_d with bel clamped below by EPS."""
    bel, y = _pair(bel, y)
    return float(-np.sum(y * np.log(clamp(bel))))


def reward_exploration(bel_t, bel_next, t: int, next_terminal: bool, sch: SchedulerConfig) -> float:
    if next_terminal:
        return 0.0
    return w_ex(t, sch) * jsd(bel_t, bel_next)


def reward_confirmation(bel_t, bel_next, y, t: int, next_terminal: bool, sch: SchedulerConfig,
                        gamma: float, weight: float | None = None) -> float:
    """Potential-based term ``-w_co(t) (gamma CE(bel_next, y) - CE(bel_t, y))``.

    ``weight`` overrides ``w_co(t)``; handy for checking the telescoping identity.
    """
    if next_terminal:
        return 0.0
    w = w_co(t, sch) if weight is None else weight
    return -w * (gamma * cross_entropy(bel_next, y) - cross_entropy(bel_t, y))


def sev_out_count(bel, y, severe, tau_sev: float = DIFFERENTIAL_THRESHOLD, mode: str = "neither") -> int:
    if not severe:
        return 0
    pred = threshold_differential(bel, tau_sev)
    gt = threshold_differential(y, tau_sev)
    if mode == "neither":
        return sum(1 for p in severe if p not in gt and p not in pred)
    return sum(1 for p in severe if not (p in gt and p in pred))


def reward_severity(bel_t, bel_next, y, severe, tau_sev: float, gamma: float, next_terminal: bool,
                    mode: str = "neither") -> float:
    if next_terminal:
        return 0.0
    before = sev_out_count(bel_t, y, severe, tau_sev, mode)
    after = sev_out_count(bel_next, y, severe, tau_sev, mode)
    if before == after:
        return 0.0
    return gamma * after - before


def severe_inclusion(bel, y, severe, tau_sev: float = DIFFERENTIAL_THRESHOLD, vacuous: float = 1.0) -> float:
    gt_severe = threshold_differential(y, tau_sev) & frozenset(severe)
    if not gt_severe:
        return vacuous
    return len(gt_severe & threshold_differential(bel, tau_sev)) / len(gt_severe)


def belief_quality(bel, y, severe, w_si: float = 1.0, tau_sev: float = DIFFERENTIAL_THRESHOLD,
                   vacuous: float = 1.0) -> float:
    """-CE(bel, y) + w_si * SevIn / Sev_y."""
    return -cross_entropy(bel, y) + w_si * severe_inclusion(bel, y, severe, tau_sev, vacuous)


def reward_classification(bel_t, y, severe, cfg: ShapingConfig, next_terminal: bool) -> float:
    if not next_terminal:
        return 0.0
    return belief_quality(bel_t, y, severe, cfg.w_si, cfg.tau_sev, cfg.vacuous_inclusion)


def combine(rex: float, rco: float, rsev: float, rcl: float, cfg: ShapingConfig) -> float:
    return cfg.alpha_ex * rex + cfg.alpha_co * rco + cfg.alpha_sev * rsev + cfg.alpha_cl * rcl


def shaping_components(bel_t, bel_next, y, severe, t: int, next_terminal: bool,
                       cfg: ShapingConfig, sch: SchedulerConfig) -> dict:
    """Every auxiliary reward of one transition plus their weighted sum ``F``."""
    rex = reward_exploration(bel_t, bel_next, t, next_terminal, sch)
    rco = reward_confirmation(bel_t, bel_next, y, t, next_terminal, sch, cfg.gamma)
    rsev = reward_severity(bel_t, bel_next, y, severe, cfg.tau_sev, cfg.gamma, next_terminal, cfg.sev_out_mode)
    rcl = reward_classification(bel_t, y, severe, cfg, next_terminal)
    return {
        "exploration": rex,
        "confirmation": rco,
        "severity": rsev,
        "classification": rcl,
        "total": combine(rex, rco, rsev, rcl, cfg),
    }


def belief_quality_batch(bel: np.ndarray, y: np.ndarray, severe, w_si: float = 1.0,
                         tau_sev: float = DIFFERENTIAL_THRESHOLD, vacuous: float = 1.0) -> np.ndarray:
    """Row-wise :func:`belief_quality` for (N, D) arrays."""
    ce = -np.sum(y * np.log(clamp(bel)), axis=1)
    sev = np.zeros(bel.shape[1], dtype=bool)
    sev[list(severe)] = True
    gt_sev = (y > tau_sev) & sev
    n_gt = gt_sev.sum(axis=1)
    n_in = (gt_sev & (bel > tau_sev)).sum(axis=1)
    ratio = np.where(n_gt == 0, vacuous, n_in / np.maximum(n_gt, 1))
    return -ce + w_si * ratio
