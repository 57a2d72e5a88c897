"""Simulated dialogue states for the supervised BASD baseline."""
from __future__ import annotations

import numpy as np

from ..environment import DialogueState, EncodingLayout, EnvConfig, encode_answer, reset
from ..knowledge import KnowledgeBase, PatientRecord


def basd_simulate_state(patient: PatientRecord, T: int, rng: np.random.Generator,
                        layout: EncodingLayout, kb: KnowledgeBase, p: int | None = None):
    """Returns ``(state, policy_target, classifier_target)``.

    ``p`` positives (the chief complaint always among them) and ``q < T - p``
    negatives are set.  The policy target is ``E`` ("stop") when every
    experienced evidence is set, otherwise one of the remaining experienced
    evidences.
    """
    E = kb.num_evidences
    cc = patient.chief_complaint
    positives = sorted(patient.experienced - {cc})
    negatives = sorted(set(range(E)) - patient.experienced)
    n = len(positives) + 1
    if p is None:
        p = int(rng.integers(1, n + 1))
    if not 1 <= p <= n:
        raise ValueError(f"p={p} outside [1, {n}]")
    picked = rng.choice(len(positives), size=p - 1, replace=False) if p > 1 else np.array([], dtype=int)
    chosen_pos = [positives[i] for i in sorted(picked)]
    q_max = min(max(T - p, 0), len(negatives) + 1)
    q = int(rng.integers(0, q_max)) if q_max > 0 else 0
    chosen_neg = [negatives[i] for i in sorted(rng.choice(len(negatives), size=q, replace=False))] if q else []

    state = reset(patient, EnvConfig(T=T), layout, kb)
    for e in chosen_pos + chosen_neg:
        state = encode_answer(state, e, patient.values[e], layout, kb)
    state = DialogueState(state.vector, state.inquired, len(chosen_pos) + len(chosen_neg), False)

    remaining = [e for e in positives if e not in chosen_pos]
    if p == n:
        policy_target = E
    else:
        policy_target = int(remaining[rng.integers(len(remaining))])
    return state, policy_target, patient.gt_pathology
