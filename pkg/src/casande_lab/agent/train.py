"""Training loop: parallel environments, shared replay batch, alternating updates."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..environment import EnvConfig, action_mask, build_layout, reset, step
from ..knowledge import KnowledgeBase, PatientRecord
from ..shaping import SchedulerConfig, ShapingConfig, belief_quality_batch, shaping_components
from .losses import classifier_loss, q_loss, q_targets
from .network import NetworkParams, forward_batch, init_params, make_optimizer, soft_update, softmax
from .policy import epsilon_greedy, linear_epsilon
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "casande-lab-checkpoint"
CHECKPOINT_VERSION = 1
LOG_COLUMNS = ("step", "q_loss", "clf_loss", "epsilon", "mean_episode_return", "mean_IL")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    steps: int = 50_000
    env_count: int = 16
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    rho: float = 0.005
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int | None = None  # None: first half of training
    capacity: int = 50_000
    warmup: int = 1_000
    encoder: tuple[int, ...] = (64, 64)
    head: tuple[int, ...] = (32,)
    log_every: int = 1_000
    seed: int = 0

    def validate(self) -> None:
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError("rho must lie in (0, 1]")
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.env_count < 1 or self.batch_size < 1 or self.capacity < self.batch_size:
            raise ConfigError("need env_count >= 1 and capacity >= batch_size >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    @property
    def decay_steps(self) -> int:
        return self.steps // 2 if self.eps_decay_steps is None else self.eps_decay_steps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder"], d["head"] = list(self.encoder), list(self.head)
        return d


@dataclass
class TrainResult:
    params: NetworkParams
    target: NetworkParams
    log: list[dict] = field(default_factory=list)
    base_rewards: list[float] = field(default_factory=list)
    shaped_rewards: list[float] = field(default_factory=list)
    rng_state: dict | None = None
    optimizer_state: dict | None = None


def new_network(kb: KnowledgeBase, cfg: TrainConfig) -> NetworkParams:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    layout = build_layout(kb)
    return init_params(layout.dim, kb.num_evidences + 1, kb.num_pathologies, rng, cfg.encoder, cfg.head)


def train(kb: KnowledgeBase, patients: list[PatientRecord], env_cfg: EnvConfig, shaping_cfg: ShapingConfig,
          train_cfg: TrainConfig, sch: SchedulerConfig | None = None, record_rewards: bool = False) -> TrainResult:
    """Run the training loop for ``train_cfg.steps`` iterations.

    One iteration steps every environment once with the epsilon-greedy policy,
    stores the transitions, then updates the Q head and the classifier on the
    same replay batch and soft-updates the target network.
    """
    train_cfg.validate()
    env_cfg.validate()
    shaping_cfg.validate()
    if not patients:
        raise ConfigError("no training patients")
    sch = sch or SchedulerConfig(T=env_cfg.T)
    layout = build_layout(kb)
    E, D = kb.num_evidences, kb.num_pathologies
    severe = kb.severe

    params = new_network(kb, train_cfg)
    target = params.copy()
    rng = np.random.default_rng(np.random.SeedSequence(train_cfg.seed).spawn(2)[1])
    optimizer = make_optimizer(train_cfg.optimizer, train_cfg.lr)
    buffer = ReplayBuffer(train_cfg.capacity, layout.dim, E + 1, D)
    result = TrainResult(params, target)

    n_env = train_cfg.env_count
    env_patients = [patients[int(rng.integers(len(patients)))] for _ in range(n_env)]
    states = [reset(p, env_cfg, layout, kb) for p in env_patients]
    returns = [0.0] * n_env

    window = {"q": [], "clf": [], "ret": [], "il": []}
    for it in range(train_cfg.steps):
        eps = linear_epsilon(it, train_cfg.eps_start, train_cfg.eps_end, train_cfg.decay_steps)
        X = np.stack([s.vector for s in states])
        q, logits, _ = forward_batch(params, X)
        bel = softmax(logits)
        transitions = []
        for i, s in enumerate(states):
            a = epsilon_greedy(q[i], action_mask(s, E), eps, rng)
            transitions.append(step(s, a, env_patients[i], env_cfg, layout, kb))
        _, next_logits, _ = forward_batch(params, np.stack([tr.next_state.vector for tr in transitions]))
        bel_next = softmax(next_logits)

        for i, tr in enumerate(transitions):
            y = env_patients[i].gt_differential
            comps = shaping_components(bel[i], bel_next[i], y, severe, tr.state.turn, tr.terminal, shaping_cfg, sch)
            shaped = tr.base_reward + comps["total"]
            buffer.add(tr.state.vector, tr.action, shaped, tr.base_reward, tr.next_state.vector,
                       tr.terminal, action_mask(tr.next_state, E), y)
            if record_rewards:
                result.base_rewards.append(tr.base_reward)
                result.shaped_rewards.append(shaped)
            returns[i] += shaped
            if tr.terminal:
                window["ret"].append(returns[i])
                window["il"].append(len(tr.next_state.inquired) - 1)
                returns[i] = 0.0
                env_patients[i] = patients[int(rng.integers(len(patients)))]
                states[i] = reset(env_patients[i], env_cfg, layout, kb)
            else:
                states[i] = tr.next_state

        if len(buffer) >= max(train_cfg.batch_size, train_cfg.warmup):
            batch = buffer.sample(train_cfg.batch_size, rng)
            targets = q_targets(target, batch, train_cfg.gamma)
            fwd = forward_batch(params, batch.states)
            v = belief_quality_batch(softmax(fwd[1]), batch.y, severe, shaping_cfg.w_si,
                                     shaping_cfg.tau_sev, shaping_cfg.vacuous_inclusion)
            lq, grads = q_loss(params, batch, targets, v, forward_out=fwd)
            optimizer.step(params, grads)
            lc, grads = classifier_loss(params, batch)
            optimizer.step(params, grads)
            target = soft_update(params, target, train_cfg.rho)
            window["q"].append(lq)
            window["clf"].append(lc)

        if train_cfg.log_every and (it + 1) % train_cfg.log_every == 0:
            row = {
                "step": it + 1,
                "q_loss": _mean(window["q"]),
                "clf_loss": _mean(window["clf"]),
                "epsilon": eps,
                "mean_episode_return": _mean(window["ret"]),
                "mean_IL": _mean(window["il"]),
            }
            result.log.append(row)
            log.info("step %d q_loss %.4f clf_loss %.4f eps %.3f return %.3f IL %.2f", *row.values())
            window = {k: [] for k in window}

    result.params, result.target = params, target
    result.rng_state = rng.bit_generator.state
    result.optimizer_state = optimizer.state_dict()
    return result


def _mean(xs) -> float:
    return float(np.mean(xs)) if xs else float("nan")


def write_log(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def save_checkpoint(path, params: NetworkParams, configs: dict, rng_state=None, target=None,
                    optimizer_state=None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "params": params.to_dict(),
        "target": None if target is None else target.to_dict(),
        "configs": configs,
        "rng_state": rng_state,
        "optimizer_state": optimizer_state,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    return NetworkParams.from_dict(doc["params"]), doc
