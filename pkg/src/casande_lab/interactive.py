"""Text REPL where a person answers the agent's questions as the patient."""
from __future__ import annotations

import json

import numpy as np

from .agent.network import NetworkParams, forward
from .agent.policy import epsilon_greedy
from .bed import DEFAULT_THRESHOLD, EvidenceLedger, posterior, select_evidence
from .environment import DialogueState, Trajectory, Turn, action_mask, build_layout, encode_answer, encode_demographics
from .knowledge import DIFFERENTIAL_THRESHOLD, EvidenceKind, EvidenceSpec, KnowledgeBase

QUIT_WORDS = {"quit", "q", "exit"}


class ParseError(ValueError):
    pass


class QuitSession(Exception):
    pass


def parse_answer(ev: EvidenceSpec, text: str):
    """Typed answer -> canonical value.  Option numbers are 1-based."""
    s = text.strip().lower()
    if ev.kind is EvidenceKind.BINARY:
        if s in ("y", "yes", "1", "true"):
            return True
        if s in ("n", "no", "0", "false"):
            return False
        raise ParseError("answer y or n")
    if ev.kind is EvidenceKind.NUMERIC:
        try:
            v = int(s)
        except ValueError:
            raise ParseError(f"answer an integer between 0 and {ev.max_value}") from None
        if not 0 <= v <= ev.max_value:
            raise ParseError(f"answer an integer between 0 and {ev.max_value}")
        return v
    if ev.kind is EvidenceKind.CATEGORICAL:
        return _option(ev, s)
    if s in ("", "none", "-"):
        return frozenset()
    return frozenset(_option(ev, part.strip()) for part in s.split(",") if part.strip())


def _option(ev: EvidenceSpec, s: str) -> int:
    lowered = [o.lower() for o in ev.options]
    if s in lowered:
        return lowered.index(s)
    try:
        k = int(s)
    except ValueError:
        raise ParseError(f"unknown option {s!r}") from None
    if not 1 <= k <= len(ev.options):
        raise ParseError(f"option number must be between 1 and {len(ev.options)}")
    return k - 1


def format_question(ev: EvidenceSpec) -> str:
    q = ev.question or ev.name
    if ev.kind is EvidenceKind.BINARY:
        return f"{q} [y/n]"
    if ev.kind is EvidenceKind.NUMERIC:
        return f"{q} [0-{ev.max_value}]"
    opts = "  ".join(f"{i + 1}) {o}" for i, o in enumerate(ev.options))
    hint = "pick one" if ev.kind is EvidenceKind.CATEGORICAL else "comma-separated numbers, or none"
    return f"{q}\n  {opts}\n  ({hint})"


class CasandeResponder:
    def __init__(self, params: NetworkParams, kb: KnowledgeBase):
        self.params, self.kb = params, kb
        self.layout = build_layout(kb)
        self.state: DialogueState | None = None

    def start(self, age: int, sex: str, chief: int, value) -> None:
        vec = np.zeros(self.layout.dim)
        vec[: self.layout.w] = encode_demographics(age, sex)
        self.state = encode_answer(DialogueState(vec, frozenset()), chief, value, self.layout, self.kb)

    def next_question(self) -> int | None:
        q, _ = forward(self.params, self.state.vector)
        a = epsilon_greedy(q, action_mask(self.state, self.kb.num_evidences), 0.0, None)
        return None if a == self.kb.num_evidences else a

    def observe(self, e: int, value) -> None:
        s = encode_answer(self.state, e, value, self.layout, self.kb)
        self.state = DialogueState(s.vector, s.inquired, self.state.turn + 1)

    def belief(self) -> np.ndarray:
        return forward(self.params, self.state.vector)[1]


class BedResponder:
    def __init__(self, kb: KnowledgeBase, threshold: float = DEFAULT_THRESHOLD):
        self.kb, self.threshold = kb, threshold
        self.ledger = EvidenceLedger()

    def start(self, age: int, sex: str, chief: int, value) -> None:
        self.ledger.observe(self.kb, chief, value)

    def next_question(self) -> int | None:
        e, u = select_evidence(self.kb, self.ledger)
        return None if e is None or u < self.threshold else e

    def observe(self, e: int, value) -> None:
        self.ledger.observe(self.kb, e, value)

    def belief(self) -> np.ndarray:
        return posterior(self.kb, self.ledger)


class InteractiveSession:
    def __init__(self, kb: KnowledgeBase, responder, T: int = 30, input_fn=input, output_fn=print,
                 tau: float = DIFFERENTIAL_THRESHOLD):
        self.kb, self.responder, self.T = kb, responder, T
        self.input, self.output, self.tau = input_fn, output_fn, tau

    def ask(self, prompt: str, parse):
        while True:
            text = self.input(prompt)
            if text is None or text.strip().lower() in QUIT_WORDS:
                raise QuitSession
            try:
                return parse(text)
            except (ParseError, ValueError) as exc:
                self.output(f"  could not parse answer: {exc}; try again")

    def show_differential(self, bel) -> None:
        names = [(self.kb.pathologies[d].name, bel[d]) for d in np.argsort(-bel, kind="stable") if bel[d] > self.tau]
        self.output("  differential: " + ", ".join(f"{n}: {p:.3f}" for n, p in names))

    def run(self) -> Trajectory:
        kb, E = self.kb, self.kb.num_evidences
        turns: list[Turn] = []
        try:
            age = self.ask("Age (years): ", _parse_age)
            sex = self.ask("Sex [M/F]: ", _parse_sex)
            for ev in kb.evidences:
                self.output(f"  {ev.id}) {ev.name}")
            chief = self.ask("Chief complaint (evidence number from the list): ", lambda s: _parse_evidence(s, E))
            ev = kb.evidences[chief]
            value = self.ask(format_question(ev) + "\n> ", lambda s: _parse_positive(ev, s))
            self.responder.start(age, sex, chief, value)
            bel = self.responder.belief()
            turns.append(Turn(0, chief, ev.question, ev.describe(value), 0.0, {}, bel.tolist(), False))
            self.show_differential(bel)
            asked = 0
            while asked < self.T:
                e = self.responder.next_question()
                if e is None:
                    turns.append(Turn(asked, E, "exit", None, 0.0, {}, bel.tolist(), True))
                    self.output("The agent has finished its inquiry.")
                    break
                ev = kb.evidences[e]
                value = self.ask(format_question(ev) + "\n> ", lambda s: parse_answer(ev, s))
                self.responder.observe(e, value)
                bel = self.responder.belief()
                asked += 1
                turns.append(Turn(asked, e, ev.question, ev.describe(value), 0.0, {}, bel.tolist(), asked >= self.T))
                self.show_differential(bel)
        except QuitSession:
            self.output("Session ended by user.")
            if turns:
                turns[-1].terminal = True
        return Trajectory(turns, E)


def _parse_age(s: str) -> int:
    try:
        age = int(s.strip())
    except ValueError:
        raise ParseError("age must be an integer") from None
    if not 0 <= age <= 130:
        raise ParseError("age out of range")
    return age


def _parse_sex(s: str) -> str:
    s = s.strip().upper()
    if s not in ("M", "F"):
        raise ParseError("answer M or F")
    return s


def _parse_evidence(s: str, E: int) -> int:
    try:
        e = int(s.strip())
    except ValueError:
        raise ParseError("enter an evidence number") from None
    if not 0 <= e < E:
        raise ParseError(f"evidence number must be in [0, {E})")
    return e


def _parse_positive(ev: EvidenceSpec, s: str):
    v = parse_answer(ev, s)
    if not ev.is_experienced(v):
        raise ParseError("the chief complaint must be something you experience")
    return v


def save_session(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        json.dump(traj.to_json(), fh, indent=1)
