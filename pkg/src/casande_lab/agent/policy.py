"""Action selection and episode rollouts."""
from __future__ import annotations

import numpy as np

from ..environment import (
    EncodingLayout,
    EnvConfig,
    Trajectory,
    Turn,
    action_mask,
    reset,
    step,
)
from ..knowledge import KnowledgeBase, PatientRecord
from ..shaping import SchedulerConfig, ShapingConfig, shaping_components
from .network import NetworkParams, forward


class EmptyMask(ValueError):
    pass


def epsilon_greedy(q_values, mask, epsilon: float, rng: np.random.Generator) -> int:
    """Argmax of ``q_values`` over ``mask`` (lowest id on ties), or a uniform valid action with prob. epsilon."""
    mask = np.asarray(mask, dtype=bool)
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise EmptyMask("no valid action")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(valid[rng.integers(valid.size)])
    q = np.where(mask, np.asarray(q_values, dtype=float), -np.inf)
    # +inf on a masked-out action must not leak through
    return int(valid[np.argmax(q[valid])])


def linear_epsilon(step: int, start: float, end: float, decay_steps: int) -> float:
    if decay_steps <= 0 or step >= decay_steps:
        return end
    return start + (end - start) * step / decay_steps


def rollout(params: NetworkParams, kb: KnowledgeBase, patient: PatientRecord, env_cfg: EnvConfig,
            layout: EncodingLayout, policy: str = "greedy", rng: np.random.Generator | None = None,
            shaping: ShapingConfig | None = None, sch: SchedulerConfig | None = None) -> Trajectory:
    """Play one episode with the network's classifier and either its greedy Q policy or a uniform random one.

    The random policy draws uniformly among the valid actions, exit included.
    """
    E = kb.num_evidences
    severe = kb.severe
    y = patient.gt_differential
    state = reset(patient, env_cfg, layout, kb)
    q, bel = forward(params, state.vector)
    cc = patient.chief_complaint
    turns = [Turn(0, cc, kb.evidences[cc].question, kb.evidences[cc].describe(patient.values[cc]),
                  0.0, {}, bel.tolist(), False)]
    while not state.terminal:
        mask = action_mask(state, E)
        if policy == "greedy":
            a = epsilon_greedy(q, mask, 0.0, rng)
        elif policy == "random":
            a = epsilon_greedy(q, mask, 1.0, rng)
        else:
            raise ValueError(f"unknown policy {policy!r}")
        tr = step(state, a, patient, env_cfg, layout, kb)
        if tr.terminal and a == E:
            q_next, bel_next = q, bel
        else:
            q_next, bel_next = forward(params, tr.next_state.vector)
        comps = {}
        if shaping is not None:
            comps = shaping_components(bel, bel_next, y, severe, state.turn, tr.terminal, shaping, sch)
        if a == E:
            turns.append(Turn(state.turn, a, "exit", None, tr.base_reward, comps, bel.tolist(), True))
        else:
            ev = kb.evidences[a]
            turns.append(Turn(tr.next_state.turn, a, ev.question, ev.describe(patient.values[a]),
                              tr.base_reward, comps, bel_next.tolist(), tr.terminal))
        state, q, bel = tr.next_state, q_next, bel_next
    return Trajectory(turns, E)
