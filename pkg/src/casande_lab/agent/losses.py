"""Policy and classifier losses with their exact gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import NetworkParams, backward, forward_batch, log_softmax


@dataclass
class Batch:
    states: np.ndarray        # (N, S)
    actions: np.ndarray       # (N,) int
    rewards: np.ndarray       # (N,) shaped reward r' = r + F
    next_states: np.ndarray   # (N, S)
    terminal: np.ndarray      # (N,) bool, next state is s_perp
    next_masks: np.ndarray    # (N, A) valid actions at the next state
    y: np.ndarray             # (N, D) ground-truth differentials

    def __len__(self):
        return len(self.actions)


def q_targets(target: NetworkParams, batch: Batch, gamma: float) -> np.ndarray:
    """r' + gamma * max over valid next actions of Q_phi, no bootstrap on terminal."""
    q_next, _, _ = forward_batch(target, batch.next_states)
    q_next = np.where(batch.next_masks, q_next, -np.inf)
    best = np.max(q_next, axis=1, initial=-np.inf)
    live = ~batch.terminal
    out = np.array(batch.rewards, dtype=float)
    out[live] += gamma * best[live]
    return out


def q_loss(params: NetworkParams, batch: Batch, targets: np.ndarray, exit_targets: np.ndarray,
           forward_out=None):
    """Mean of 1/2 [(Q_t - Q(s,a))^2 + 1{not terminal} (Q(s, exit) - V(s, y))^2].

    ``targets`` and ``exit_targets`` are constants: no gradient flows into them.
    Returns ``(loss, grads)``.
    """
    q, _, cache = forward_out if forward_out is not None else forward_batch(params, batch.states)
    n = len(batch)
    rows = np.arange(n)
    exit_id = q.shape[1] - 1
    live = (~batch.terminal).astype(float)
    td = q[rows, batch.actions] - targets
    ex = (q[:, exit_id] - exit_targets) * live
    loss = 0.5 * float(np.mean(td ** 2 + ex ** 2))
    dq = np.zeros_like(q)
    np.add.at(dq, (rows, batch.actions), td / n)
    dq[:, exit_id] += ex / n
    return loss, backward(params, cache, dq, None)


def classifier_loss(params: NetworkParams, batch: Batch, forward_out=None):
    """Mean of 1/2 1{terminal} CE(softmax(logits), y).  Returns ``(loss, grads)``."""
    _, logits, cache = forward_out if forward_out is not None else forward_batch(params, batch.states)
    n = len(batch)
    term = batch.terminal.astype(float)
    logp = log_softmax(logits)
    ce = -np.sum(batch.y * logp, axis=1)
    loss = 0.5 * float(np.mean(term * ce))
    p = np.exp(logp)
    dlogits = (0.5 / n) * term[:, None] * (p * batch.y.sum(axis=1, keepdims=True) - batch.y)
    return loss, backward(params, cache, None, dlogits)
