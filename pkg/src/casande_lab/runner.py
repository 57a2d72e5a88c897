"""Batch evaluation of an agent over a patient set."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .agent.network import NetworkParams
from .agent.policy import rollout
from .bed import DEFAULT_THRESHOLD, bed_run
from .environment import EnvConfig, Trajectory, build_layout
from .knowledge import DIFFERENTIAL_THRESHOLD, KnowledgeBase, PatientRecord
from .metrics import EvaluationReport, build_report, evaluate_patient
from .shaping import SchedulerConfig, ShapingConfig

AGENTS = ("casande", "random", "bed")


def run_agent(agent: str, kb: KnowledgeBase, patients: list[PatientRecord], env_cfg: EnvConfig,
              params: NetworkParams | None = None, seed: int = 0, bed_threshold: float = DEFAULT_THRESHOLD,
              shaping: ShapingConfig | None = None, workers: int = 1) -> list[Trajectory]:
    """One trajectory per patient, in patient order.

    ``random`` asks uniformly among the valid actions and predicts with the
    classifier of ``params``; each patient gets its own derived seed so the
    result does not depend on ``workers``.
    """
    if agent not in AGENTS:
        raise ValueError(f"unknown agent {agent!r}")
    if agent != "bed" and params is None:
        raise ValueError(f"agent {agent!r} needs network parameters")
    layout = build_layout(kb)
    sch = SchedulerConfig(T=env_cfg.T)
    seeds = np.random.SeedSequence(seed).spawn(len(patients))

    def one(i: int) -> Trajectory:
        p = patients[i]
        if agent == "bed":
            return bed_run(kb, p, bed_threshold, env_cfg.T)
        policy = "greedy" if agent == "casande" else "random"
        return rollout(params, kb, p, env_cfg, layout, policy, np.random.default_rng(seeds[i]), shaping, sch)

    if workers <= 1:
        return [one(i) for i in range(len(patients))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(len(patients))))


def evaluate_trajectories(method: str, trajectories, patients, kb: KnowledgeBase,
                          tau: float = DIFFERENTIAL_THRESHOLD) -> EvaluationReport:
    records = [evaluate_patient(t, p, kb, tau) for t, p in zip(trajectories, patients)]
    return build_report(method, records)
