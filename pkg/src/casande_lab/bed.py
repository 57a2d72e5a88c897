"""Bayesian experimental design agent.

Picks the evidence with the largest expected KL divergence between the
updated and the current disease posterior, and stops once no remaining
evidence reaches the utility threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datagen import ZeroLikelihoodError
from .environment import Trajectory, Turn
from .knowledge import EvidenceKind, KnowledgeBase, PatientRecord
from .shaping import kl

DEFAULT_THRESHOLD = 1e-2


class AlreadyObserved(ValueError):
    pass


@dataclass
class EvidenceLedger:
    """Observed answers split by whether the patient experiences them."""

    positives: dict = field(default_factory=dict)
    negatives: dict = field(default_factory=dict)

    def observe(self, kb: KnowledgeBase, e: int, value) -> None:
        if e in self:
            raise AlreadyObserved(f"evidence {e} already observed")
        ev = kb.evidences[e]
        value = ev.coerce(value) if not isinstance(value, frozenset) else value
        (self.positives if ev.is_experienced(value) else self.negatives)[e] = value

    def observed(self) -> dict:
        return {**self.positives, **self.negatives}

    def __contains__(self, e) -> bool:
        return e in self.positives or e in self.negatives

    def copy(self) -> "EvidenceLedger":
        return EvidenceLedger(dict(self.positives), dict(self.negatives))


def _normalize(w: np.ndarray) -> np.ndarray:
    z = w.sum()
    if z <= 0.0:
        raise ZeroLikelihoodError("observed evidence rules out every pathology")
    return w / z


def posterior(kb: KnowledgeBase, ledger: EvidenceLedger) -> np.ndarray:
    w = np.array(kb.prior, dtype=float)
    for e, v in ledger.observed().items():
        w = w * kb.likelihood(e, v)
    return _normalize(w)


def _predictive_from(post: np.ndarray, table: np.ndarray) -> np.ndarray:
    return post @ table


def predictive(kb: KnowledgeBase, ledger: EvidenceLedger, e: int) -> np.ndarray:
    """Distribution of the answer to ``e``; for multi-choice, per-option probability of being present."""
    if e in ledger:
        raise AlreadyObserved(f"evidence {e} already observed")
    return _predictive_from(posterior(kb, ledger), kb.conditionals[e])


def _expected_kl(post: np.ndarray, table: np.ndarray) -> float:
    """sum_v p(v) KL(p(d | v) || p(d)) for a (D, V) table of p(v | d)."""
    total = 0.0
    pv = post @ table
    for v in range(table.shape[1]):
        col = table[:, v]
        if pv[v] <= 0.0 or np.all(col == col[0]):
            # an answer with the same likelihood under every pathology leaves the posterior unchanged
            continue
        updated = post * col / pv[v]
        total += pv[v] * kl(updated, post)
    return max(total, 0.0)


def _binary_table(p_yes: np.ndarray) -> np.ndarray:
    return np.stack([1.0 - p_yes, p_yes], axis=1)


def utility_binary(kb: KnowledgeBase, ledger: EvidenceLedger, e: int, post: np.ndarray | None = None) -> float:
    post = posterior(kb, ledger) if post is None else post
    return _expected_kl(post, kb.conditionals[e])


def utility_categorical(kb: KnowledgeBase, ledger: EvidenceLedger, e: int, post: np.ndarray | None = None) -> float:
    post = posterior(kb, ledger) if post is None else post
    return _expected_kl(post, kb.conditionals[e])


def option_utilities(kb: KnowledgeBase, ledger: EvidenceLedger, e: int, post: np.ndarray | None = None) -> list[float]:
    post = posterior(kb, ledger) if post is None else post
    table = kb.conditionals[e]
    return [_expected_kl(post, _binary_table(table[:, j])) for j in range(table.shape[1])]


def utility_multichoice(kb: KnowledgeBase, ledger: EvidenceLedger, e: int, post: np.ndarray | None = None) -> float:
    return max(option_utilities(kb, ledger, e, post))


def utility(kb: KnowledgeBase, ledger: EvidenceLedger, e: int, post: np.ndarray | None = None) -> float:
    if e in ledger:
        raise AlreadyObserved(f"evidence {e} already observed")
    kind = kb.evidences[e].kind
    if kind is EvidenceKind.BINARY:
        return utility_binary(kb, ledger, e, post)
    if kind is EvidenceKind.MULTI:
        return utility_multichoice(kb, ledger, e, post)
    return utility_categorical(kb, ledger, e, post)


def select_evidence(kb: KnowledgeBase, ledger: EvidenceLedger) -> tuple[int | None, float]:
    """Highest-utility unobserved evidence (lowest id on ties) and its utility."""
    post = posterior(kb, ledger)
    best, best_u = None, -np.inf
    for e in range(kb.num_evidences):
        if e in ledger:
            continue
        u = utility(kb, ledger, e, post)
        if u > best_u:
            best, best_u = e, u
    return best, best_u


def bed_run(kb: KnowledgeBase, patient: PatientRecord, threshold: float = DEFAULT_THRESHOLD, T: int = 30) -> Trajectory:
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    E = kb.num_evidences
    ledger = EvidenceLedger()
    cc = patient.chief_complaint
    ledger.observe(kb, cc, patient.values[cc])
    bel = posterior(kb, ledger)
    turns = [Turn(0, cc, kb.evidences[cc].question, kb.evidences[cc].describe(patient.values[cc]),
                  0.0, {}, bel.tolist(), False)]
    asked = 0
    while asked < T:
        e, u = select_evidence(kb, ledger)
        if e is None or u < threshold:
            turns.append(Turn(asked, E, "exit", None, 0.0, {}, bel.tolist(), True))
            break
        value = patient.values[e]
        ledger.observe(kb, e, value)
        bel = posterior(kb, ledger)
        asked += 1
        ev = kb.evidences[e]
        turns.append(Turn(asked, e, ev.question, ev.describe(value), 0.0, {"utility": u}, bel.tolist(), asked >= T))
    return Trajectory(turns, E)
