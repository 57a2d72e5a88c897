"""Finite-horizon evidence-acquisition MDP.

State vectors start with ``w = 3`` demographic slots (age / 100, then a sex
one-hot in (M, F) order) followed by one block per evidence.  Slots of an
evidence that has not been asked stay exactly 0.  Action ``E`` is the exit
action; actions ``0..E-1`` ask the corresponding evidence.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .knowledge import EvidenceKind, KnowledgeBase, PatientRecord

DEMOGRAPHIC_WIDTH = 3


class AlreadyInquired(ValueError):
    pass


class InvalidAction(ValueError):
    pass


@dataclass(frozen=True)
class EncodingLayout:
    w: int
    widths: tuple[int, ...]
    offsets: tuple[int, ...]
    dim: int

    def slots(self, e: int) -> slice:
        return slice(self.offsets[e], self.offsets[e] + self.widths[e])


def build_layout(kb: KnowledgeBase) -> EncodingLayout:
    widths = tuple(ev.width for ev in kb.evidences)
    offsets = tuple(int(x) for x in DEMOGRAPHIC_WIDTH + np.concatenate([[0], np.cumsum(widths)[:-1]]))
    return EncodingLayout(DEMOGRAPHIC_WIDTH, widths, offsets, DEMOGRAPHIC_WIDTH + sum(widths))


@dataclass
class EnvConfig:
    T: int = 30
    r_i: float = 0.5
    r_p: float = 2.0
    r_n: float = 0.0
    gamma: float = 0.99
    # charge r_i on answers the patient does not experience as well
    charge_cost_on_negative: bool = False

    def validate(self) -> None:
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class DialogueState:
    vector: np.ndarray
    inquired: frozenset[int]
    turn: int = 0
    terminal: bool = False

    def __post_init__(self):
        self.vector.setflags(write=False)


@dataclass(frozen=True, eq=False)
class Transition:
    state: DialogueState
    action: int
    base_reward: float
    next_state: DialogueState
    terminal: bool
    patient: PatientRecord


def encode_demographics(age: int, sex: str) -> np.ndarray:
    return np.array([age / 100.0, 1.0 if sex == "M" else 0.0, 1.0 if sex == "F" else 0.0])


def encode_slots(kind: EvidenceKind, value, width: int, max_value: int = 0) -> np.ndarray:
    """Encoded block of one answered evidence."""
    if kind is EvidenceKind.BINARY:
        return np.array([1.0 if value else -1.0])
    if kind is EvidenceKind.NUMERIC:
        return np.array([(value + 1.0) / (max_value + 1.0)])
    present = {value} if kind is EvidenceKind.CATEGORICAL else set(value)
    return np.array([1.0 if j in present else -1.0 for j in range(width)])


def encode_answer(state: DialogueState, e: int, value, layout: EncodingLayout, kb: KnowledgeBase) -> DialogueState:
    if e in state.inquired:
        raise AlreadyInquired(f"evidence {e} was already inquired")
    ev = kb.evidences[e]
    vec = state.vector.copy()
    vec[layout.slots(e)] = encode_slots(ev.kind, value, layout.widths[e], ev.max_value)
    return DialogueState(vec, state.inquired | {e}, state.turn, state.terminal)


def reset(patient: PatientRecord, cfg: EnvConfig, layout: EncodingLayout, kb: KnowledgeBase) -> DialogueState:
    vec = np.zeros(layout.dim)
    vec[: layout.w] = encode_demographics(patient.age, patient.sex)
    s = DialogueState(vec, frozenset(), 0, False)
    cc = patient.chief_complaint
    return encode_answer(s, cc, patient.values[cc], layout, kb)


def valid_actions(state: DialogueState, E: int) -> frozenset[int]:
    if state.terminal:
        return frozenset()
    return frozenset(a for a in range(E) if a not in state.inquired) | {E}


def action_mask(state: DialogueState, E: int) -> np.ndarray:
    """Boolean mask of length E+1 matching :func:`valid_actions`."""
    mask = np.zeros(E + 1, dtype=bool)
    if state.terminal:
        return mask
    mask[:E] = True
    mask[list(state.inquired)] = False
    mask[E] = True
    return mask


def base_reward(experienced: bool, cfg: EnvConfig) -> float:
    if experienced:
        return cfg.r_p - cfg.r_i
    return cfg.r_n - cfg.r_i if cfg.charge_cost_on_negative else cfg.r_n


def step(state: DialogueState, action: int, patient: PatientRecord, cfg: EnvConfig,
         layout: EncodingLayout, kb: KnowledgeBase) -> Transition:
    E = kb.num_evidences
    if state.terminal:
        raise InvalidAction("episode already terminated")
    if not 0 <= action <= E:
        raise InvalidAction(f"action {action} outside [0, {E}]")
    if action == E:
        nxt = DialogueState(state.vector.copy(), state.inquired, state.turn, True)
        return Transition(state, action, 0.0, nxt, True, patient)
    if action in state.inquired:
        raise InvalidAction(f"evidence {action} was already inquired")
    value = patient.values[action]
    answered = encode_answer(state, action, value, layout, kb)
    turn = state.turn + 1
    done = turn >= cfg.T
    # the terminal state keeps its vector so the last answer still informs the final prediction
    nxt = DialogueState(answered.vector, answered.inquired, turn, done)
    r = base_reward(kb.evidences[action].is_experienced(value), cfg)
    return Transition(state, action, r, nxt, done, patient)


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------

@dataclass
class Turn:
    turn: int
    action_id: int
    question: str
    answer: str | None
    base_reward: float
    shaped_components: dict = field(default_factory=dict)
    belief: list = field(default_factory=list)
    terminal: bool = False


@dataclass
class Trajectory:
    """Turn 0 is the chief complaint; an exit turn (action_id == E) may close it."""

    turns: list[Turn]
    num_evidences: int

    @property
    def inquired(self) -> list[int]:
        """Evidences asked by the agent, chief complaint excluded."""
        return [t.action_id for t in self.turns[1:] if t.action_id < self.num_evidences]

    @property
    def beliefs(self) -> list[np.ndarray]:
        """Belief after the chief complaint and after each inquiry."""
        return [np.asarray(t.belief) for t in self.turns if t.action_id < self.num_evidences]

    @property
    def final_belief(self) -> np.ndarray:
        return np.asarray(self.turns[-1].belief)

    @property
    def terminated_by(self) -> str:
        last = self.turns[-1]
        if last.action_id == self.num_evidences:
            return "exit"
        return "timeout" if last.terminal else "open"

    def to_json(self) -> list[dict]:
        return [asdict(t) for t in self.turns]

    @classmethod
    def from_json(cls, turns: list[dict], num_evidences: int) -> "Trajectory":
        return cls([Turn(**t) for t in turns], num_evidences)


def dump_trajectories(trajectories, path) -> None:
    with open(path, "w") as fh:
        for tr in trajectories:
            fh.write(json.dumps(tr.to_json()) + "\n")


def load_trajectories(path, num_evidences: int) -> list[Trajectory]:
    with open(path) as fh:
        return [Trajectory.from_json(json.loads(line), num_evidences) for line in fh if line.strip()]
