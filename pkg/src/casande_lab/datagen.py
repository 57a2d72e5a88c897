"""Synthetic knowledge bases and patients under a naive-Bayes disease model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .knowledge import (
    EvidenceKind,
    EvidenceSpec,
    KnowledgeBase,
    PathologySpec,
    PatientRecord,
    make_patient,
)

KINDS = (EvidenceKind.BINARY, EvidenceKind.NUMERIC, EvidenceKind.CATEGORICAL, EvidenceKind.MULTI)
MIN_INFORMATIVE_TV = 0.2


class ConfigError(ValueError):
    pass


class DegenerateError(RuntimeError):
    pass


class ZeroLikelihoodError(ArithmeticError):
    pass


@dataclass
class GeneratorConfig:
    seed: int = 0
    num_pathologies: int = 6
    num_evidences: int = 12
    # fractions of binary, numeric, categorical, multi-choice evidences
    kind_mix: tuple[float, float, float, float] = (0.5, 0.15, 0.15, 0.2)
    severe_fraction: float = 0.34
    links_per_pathology: int = 3

    def validate(self) -> None:
        if self.num_pathologies < 2:
            raise ConfigError("num_pathologies must be >= 2")
        if self.num_evidences < 2:
            raise ConfigError("num_evidences must be >= 2")
        mix = np.asarray(self.kind_mix, dtype=float)
        if mix.shape != (4,) or np.any(mix < 0) or abs(mix.sum() - 1.0) > 1e-9:
            raise ConfigError(f"kind_mix must be 4 non-negative fractions summing to 1, got {self.kind_mix}")
        if not 0.0 <= self.severe_fraction <= 1.0:
            raise ConfigError("severe_fraction must lie in [0, 1]")
        if self.links_per_pathology < 1:
            raise ConfigError("links_per_pathology must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind_mix"] = list(self.kind_mix)
        return d


def kind_counts(E: int, mix) -> list[int]:
    """Split E evidences across kinds by largest remainder."""
    raw = np.asarray(mix, dtype=float) * E
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    for i in order[: E - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def _background(kind, rng, size):
    if kind is EvidenceKind.BINARY:
        p = rng.uniform(0.03, 0.15)
        return np.array([1.0 - p, p])
    if kind is EvidenceKind.MULTI:
        return rng.uniform(0.02, 0.10, size=size)
    # numeric / categorical: value 0 means "absent"
    absent = rng.uniform(0.85, 0.95)
    rest = rng.dirichlet(np.ones(size - 1)) * (1.0 - absent)
    row = np.concatenate([[absent], rest])
    return row / row.sum()


def _linked(kind, rng, size):
    if kind is EvidenceKind.BINARY:
        p = rng.uniform(0.75, 0.95)
        return np.array([1.0 - p, p])
    if kind is EvidenceKind.MULTI:
        row = rng.uniform(0.02, 0.10, size=size)
        hot = rng.choice(size, size=min(2, size), replace=False)
        row[hot] = rng.uniform(0.7, 0.95, size=hot.size)
        return row
    absent = rng.uniform(0.05, 0.15)
    peak = rng.integers(1, size)
    conc = np.full(size - 1, 0.3)
    conc[peak - 1] = 6.0
    rest = rng.dirichlet(conc) * (1.0 - absent)
    row = np.concatenate([[absent], rest])
    return row / row.sum()


def _total_variation(kind, a, b) -> float:
    if kind is EvidenceKind.MULTI:
        return float(np.max(np.abs(a - b)))
    return 0.5 * float(np.abs(a - b).sum())


def informative_links(kb: KnowledgeBase, min_tv: float = MIN_INFORMATIVE_TV) -> list[list[int]]:
    """For each pathology, evidences whose conditional departs from the marginal by >= min_tv."""
    out = []
    for d in range(kb.num_pathologies):
        links = []
        for ev, table in zip(kb.evidences, kb.conditionals):
            marginal = kb.prior @ table
            if _total_variation(ev.kind, table[d], marginal) >= min_tv:
                links.append(ev.id)
        out.append(links)
    return out


def generate_kb(cfg: GeneratorConfig, max_attempts: int = 50) -> KnowledgeBase:
    """Random naive-Bayes knowledge base; deterministic for a fixed ``cfg.seed``."""
    cfg.validate()
    seeds = np.random.SeedSequence(cfg.seed).spawn(max_attempts)
    for ss in seeds:
        kb = _generate_once(cfg, np.random.default_rng(ss))
        if all(informative_links(kb)):
            return kb
    raise ConfigError("could not generate a knowledge base where every pathology has an informative evidence")


def _generate_once(cfg: GeneratorConfig, rng: np.random.Generator) -> KnowledgeBase:
    D, E = cfg.num_pathologies, cfg.num_evidences
    kinds = [k for k, n in zip(KINDS, kind_counts(E, cfg.kind_mix)) for _ in range(n)]
    kinds = [kinds[i] for i in rng.permutation(E)]

    evidences = []
    for e, kind in enumerate(kinds):
        name = f"evidence_{e:03d}"
        if kind is EvidenceKind.BINARY:
            spec = EvidenceSpec(e, name, kind, f"Do you have {name}?")
        elif kind is EvidenceKind.NUMERIC:
            M = int(rng.integers(4, 11))
            spec = EvidenceSpec(e, name, kind, f"On a scale of 0 to {M}, how strong is {name}?", max_value=M)
        elif kind is EvidenceKind.CATEGORICAL:
            n = int(rng.integers(3, 6))
            opts = ("none",) + tuple(f"type_{j}" for j in range(1, n))
            spec = EvidenceSpec(e, name, kind, f"Which best describes your {name}?", options=opts)
        else:
            n = int(rng.integers(3, 6))
            opts = tuple(f"site_{j}" for j in range(n))
            spec = EvidenceSpec(e, name, kind, f"Where do you experience {name}?", options=opts)
        evidences.append(spec)

    n_severe = int(round(cfg.severe_fraction * D))
    if 0.0 < cfg.severe_fraction < 1.0:
        n_severe = min(max(n_severe, 1), D - 1)
    severe = set(rng.choice(D, size=n_severe, replace=False).tolist())
    pathologies = tuple(PathologySpec(d, f"pathology_{d:02d}", d in severe) for d in range(D))
    prior = rng.dirichlet(np.full(D, 4.0))

    backgrounds = [_background(ev.kind, rng, ev.domain_size) for ev in evidences]
    tables = [np.tile(bg, (D, 1)) for bg in backgrounds]
    # spread links over evidences: walk a random permutation cyclically
    order = rng.permutation(E)
    cursor = 0
    for d in range(D):
        for _ in range(min(cfg.links_per_pathology, cfg.num_evidences)):  # capped on tiny KBs
            e = int(order[cursor % E])
            cursor += 1
            tables[e][d] = _linked(evidences[e].kind, rng, evidences[e].domain_size)
    return KnowledgeBase(tuple(evidences), pathologies, prior, tuple(tables))


def exact_differential(kb: KnowledgeBase, assignment) -> np.ndarray:
    """p(d | all evidence values) by enumerating every pathology.

    ``assignment`` is either a full sequence of values indexed by evidence id
    or a mapping restricted to observed evidences.
    """
    items = assignment.items() if hasattr(assignment, "items") else enumerate(assignment)
    items = list(items)
    D = kb.num_pathologies
    joint = np.empty(D)
    for d in range(D):
        p = float(kb.prior[d])
        for e, value in items:
            p *= _single_likelihood(kb, d, e, value)
        joint[d] = p
    z = joint.sum()
    if z <= 0.0:
        raise ZeroLikelihoodError("every pathology has zero likelihood")
    return joint / z


def exact_differential_log(kb: KnowledgeBase, assignment) -> np.ndarray:
    """Log-domain twin of :func:`exact_differential`."""
    items = list(assignment.items() if hasattr(assignment, "items") else enumerate(assignment))
    D = kb.num_pathologies
    logj = np.empty(D)
    for d in range(D):
        prior = float(kb.prior[d])
        acc = math.log(prior) if prior > 0 else -math.inf
        for e, value in items:
            lik = _single_likelihood(kb, d, e, value)
            acc += math.log(lik) if lik > 0 else -math.inf
        logj[d] = acc
    m = logj.max()
    if not np.isfinite(m):
        raise ZeroLikelihoodError("every pathology has zero likelihood")
    w = np.exp(logj - m)
    return w / w.sum()


def _single_likelihood(kb, d, e, value) -> float:
    ev = kb.evidences[e]
    row = kb.conditionals[e][d]
    if ev.kind is EvidenceKind.MULTI:
        p = 1.0
        for j in range(ev.domain_size):
            p *= row[j] if j in value else 1.0 - row[j]
        return p
    return float(row[int(value)])


def _draw_value(ev: EvidenceSpec, row: np.ndarray, rng: np.random.Generator):
    if ev.kind is EvidenceKind.BINARY:
        return bool(rng.random() < row[1])
    if ev.kind is EvidenceKind.MULTI:
        hits = rng.random(ev.domain_size) < row
        return frozenset(np.flatnonzero(hits).tolist())
    return int(rng.choice(ev.domain_size, p=row))


def sample_patient(kb: KnowledgeBase, rng_seed: int, max_resample: int = 100) -> PatientRecord:
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_resample):
        d = int(rng.choice(kb.num_pathologies, p=kb.prior))
        values = [_draw_value(ev, kb.conditionals[ev.id][d], rng) for ev in kb.evidences]
        positives = [e for e, ev in enumerate(kb.evidences) if ev.is_experienced(values[e])]
        if positives:
            break
    else:
        raise DegenerateError(f"no patient with a positive evidence after {max_resample} draws")
    chief = int(positives[rng.integers(len(positives))])
    age = int(rng.integers(1, 91))
    sex = "M" if rng.random() < 0.5 else "F"
    diff = exact_differential(kb, values)
    if diff[d] <= 0:
        raise DegenerateError("sampled pathology has zero posterior mass")
    return make_patient(kb, age=age, sex=sex, chief_complaint=chief, values=values,
                        gt_pathology=d, gt_differential=diff)


def patient_seeds(seed: int, n: int) -> list[int]:
    return np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64).tolist()


def sample_patients(kb: KnowledgeBase, n: int, seed: int) -> list[PatientRecord]:
    """``n`` patients, each drawn from its own seed derived from ``seed``."""
    return [sample_patient(kb, s) for s in patient_seeds(seed, n)]
