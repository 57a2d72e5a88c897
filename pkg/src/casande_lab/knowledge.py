"""Domain schema: evidences, pathologies, knowledge bases and patients.

Evidence values use one Python representation per kind:

    binary     -> bool
    numeric    -> int in [0, max_value]
    categorical-> int option index (index 0 is the "absent" option)
    multi      -> frozenset of option indices

A knowledge base stores, for every evidence, an array ``conditionals[e]`` of
shape ``(D, K_e)``.  For binary evidences the rows are ``[p(no), p(yes)]``,
for numeric / categorical evidences they are distributions over the value
domain, and for multi-choice evidences every entry is an independent
Bernoulli parameter of one option.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

DIFFERENTIAL_THRESHOLD = 0.01
_SUM_TOL = 1e-9


class DataError(ValueError):
    """Base class for malformed knowledge-base or patient data."""


class SchemaError(DataError):
    pass


class NormalizationError(DataError):
    pass


class UnknownEvidence(DataError):
    pass


class UnknownPathology(DataError):
    pass


class ValueOutOfDomain(DataError):
    pass


class EvidenceKind(str, Enum):
    BINARY = "binary"
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    MULTI = "multi"


@dataclass(frozen=True)
class EvidenceSpec:
    id: int
    name: str
    kind: EvidenceKind
    question: str = ""
    options: tuple[str, ...] = ()
    max_value: int = 0

    def __post_init__(self):
        if self.kind in (EvidenceKind.CATEGORICAL, EvidenceKind.MULTI):
            if not self.options:
                raise SchemaError(f"evidence {self.id}: empty option list")
            if len(set(self.options)) != len(self.options):
                raise SchemaError(f"evidence {self.id}: duplicate options")
        if self.kind is EvidenceKind.NUMERIC and self.max_value < 1:
            raise SchemaError(f"evidence {self.id}: max_value must be >= 1")

    @property
    def width(self) -> int:
        """Number of state-vector slots this evidence occupies."""
        if self.kind in (EvidenceKind.BINARY, EvidenceKind.NUMERIC):
            return 1
        return len(self.options)

    @property
    def domain_size(self) -> int:
        """Columns of the conditional table."""
        if self.kind is EvidenceKind.BINARY:
            return 2
        if self.kind is EvidenceKind.NUMERIC:
            return self.max_value + 1
        return len(self.options)

    def default_value(self):
        if self.kind is EvidenceKind.BINARY:
            return False
        if self.kind is EvidenceKind.MULTI:
            return frozenset()
        return 0

    def is_experienced(self, value) -> bool:
        if self.kind is EvidenceKind.BINARY:
            return bool(value)
        if self.kind is EvidenceKind.MULTI:
            return len(value) > 0
        return int(value) > 0

    def coerce(self, raw) -> Any:
        """Turn a JSON value (or a python value) into the canonical representation."""
        kind = self.kind
        if kind is EvidenceKind.BINARY:
            if isinstance(raw, bool):
                return raw
            if raw in (0, 1):
                return bool(raw)
            raise ValueOutOfDomain(f"evidence {self.id}: {raw!r} is not a boolean")
        if kind is EvidenceKind.NUMERIC:
            if isinstance(raw, bool) or not isinstance(raw, (int, np.integer)):
                raise ValueOutOfDomain(f"evidence {self.id}: {raw!r} is not an integer")
            if not 0 <= raw <= self.max_value:
                raise ValueOutOfDomain(f"evidence {self.id}: {raw} outside [0, {self.max_value}]")
            return int(raw)
        if kind is EvidenceKind.CATEGORICAL:
            return self._option_index(raw)
        if isinstance(raw, (str, int, np.integer)):
            raw = [raw]
        return frozenset(self._option_index(r) for r in raw)

    def _option_index(self, raw) -> int:
        if isinstance(raw, str):
            try:
                return self.options.index(raw)
            except ValueError:
                raise ValueOutOfDomain(f"evidence {self.id}: unknown option {raw!r}") from None
        if isinstance(raw, bool) or not isinstance(raw, (int, np.integer)):
            raise ValueOutOfDomain(f"evidence {self.id}: bad option {raw!r}")
        if not 0 <= raw < len(self.options):
            raise ValueOutOfDomain(f"evidence {self.id}: option index {raw} out of range")
        return int(raw)

    def to_json_value(self, value):
        if self.kind is EvidenceKind.MULTI:
            return sorted(value)
        return value

    def describe(self, value) -> str:
        """Human readable rendering of an answer."""
        if self.kind is EvidenceKind.BINARY:
            return "Y" if value else "N"
        if self.kind is EvidenceKind.NUMERIC:
            return str(value)
        if self.kind is EvidenceKind.CATEGORICAL:
            return self.options[value]
        return ", ".join(self.options[i] for i in sorted(value)) or "(none)"


@dataclass(frozen=True)
class PathologySpec:
    id: int
    name: str
    severe: bool = False


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class KnowledgeBase:
    evidences: tuple[EvidenceSpec, ...]
    pathologies: tuple[PathologySpec, ...]
    prior: np.ndarray
    conditionals: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "prior", _frozen(self.prior))
        object.__setattr__(self, "conditionals", tuple(_frozen(c) for c in self.conditionals))
        self.validate()

    @property
    def num_evidences(self) -> int:
        return len(self.evidences)

    @property
    def num_pathologies(self) -> int:
        return len(self.pathologies)

    @property
    def severe(self) -> frozenset[int]:
        return frozenset(p.id for p in self.pathologies if p.severe)

    def validate(self, tol: float = _SUM_TOL) -> None:
        E, D = len(self.evidences), len(self.pathologies)
        if E == 0:
            raise SchemaError("knowledge base has no evidences")
        if D == 0:
            raise SchemaError("knowledge base has no pathologies")
        if [e.id for e in self.evidences] != list(range(E)):
            raise SchemaError("evidence ids must be dense and ordered 0..E-1")
        if [p.id for p in self.pathologies] != list(range(D)):
            raise SchemaError("pathology ids must be dense and ordered 0..D-1")
        if self.prior.shape != (D,):
            raise SchemaError(f"prior has shape {self.prior.shape}, expected ({D},)")
        if np.any(self.prior < 0) or abs(self.prior.sum() - 1.0) > tol:
            raise NormalizationError(f"prior sums to {self.prior.sum()!r}")
        if len(self.conditionals) != E:
            raise SchemaError("one conditional table per evidence is required")
        for ev, table in zip(self.evidences, self.conditionals):
            if table.shape != (D, ev.domain_size):
                raise SchemaError(
                    f"evidence {ev.id}: table shape {table.shape}, expected {(D, ev.domain_size)}"
                )
            if not np.all(np.isfinite(table)) or np.any(table < 0) or np.any(table > 1):
                raise NormalizationError(f"evidence {ev.id}: probabilities outside [0, 1]")
            if ev.kind is not EvidenceKind.MULTI:
                bad = np.abs(table.sum(axis=1) - 1.0) > tol
                if np.any(bad):
                    raise NormalizationError(
                        f"evidence {ev.id}: conditional of pathology {int(np.argmax(bad))} not normalized"
                    )

    def likelihood(self, e: int, value) -> np.ndarray:
        """p(e = value | d) for every pathology d."""
        ev = self.evidences[e]
        table = self.conditionals[e]
        if ev.kind is EvidenceKind.MULTI:
            mask = np.zeros(ev.domain_size, dtype=bool)
            mask[list(value)] = True
            return np.prod(np.where(mask, table, 1.0 - table), axis=1)
        return table[:, int(value)]


@dataclass(frozen=True, eq=False)
class PatientRecord:
    age: int
    sex: str
    chief_complaint: int
    values: tuple
    gt_pathology: int
    gt_differential: np.ndarray
    experienced: frozenset[int] = field(default=frozenset())

    def __post_init__(self):
        object.__setattr__(self, "gt_differential", _frozen(self.gt_differential))

    @property
    def assignment(self) -> dict[int, Any]:
        return dict(enumerate(self.values))

    def __eq__(self, other):
        if not isinstance(other, PatientRecord):
            return NotImplemented
        head = (self.age, self.sex, self.chief_complaint, self.values, self.gt_pathology, self.experienced)
        other_head = (other.age, other.sex, other.chief_complaint, other.values, other.gt_pathology, other.experienced)
        return head == other_head and np.array_equal(self.gt_differential, other.gt_differential)

    __hash__ = None


def make_patient(kb: KnowledgeBase, *, age, sex, chief_complaint, values: Mapping[int, Any] | Sequence,
                 gt_pathology, gt_differential) -> PatientRecord:
    """Validate raw fields against ``kb`` and build a patient record.

    ``values`` may be sparse (a mapping); evidences that are absent take the
    "not experienced" default of their kind.
    """
    E, D = kb.num_evidences, kb.num_pathologies
    if isinstance(age, bool) or not isinstance(age, (int, np.integer)):
        raise SchemaError(f"age must be an integer, got {age!r}")
    if sex not in ("M", "F"):
        raise SchemaError(f"sex must be 'M' or 'F', got {sex!r}")
    items = values.items() if isinstance(values, Mapping) else enumerate(values)
    full = [ev.default_value() for ev in kb.evidences]
    for key, raw in items:
        e = _evidence_id(key, E)
        full[e] = kb.evidences[e].coerce(raw)
    cc = _evidence_id(chief_complaint, E)
    experienced = frozenset(e for e, ev in enumerate(kb.evidences) if ev.is_experienced(full[e]))
    if cc not in experienced:
        raise SchemaError(f"chief complaint {cc} is not experienced by the patient")
    gt = _pathology_id(gt_pathology, kb)
    diff = np.asarray(gt_differential, dtype=float)
    if diff.shape != (D,):
        raise SchemaError(f"gt_differential must have length {D}")
    if np.any(diff < 0) or abs(diff.sum() - 1.0) > _SUM_TOL:
        raise NormalizationError(f"gt_differential sums to {diff.sum()!r}")
    if diff[gt] <= 0:
        raise SchemaError("gt_pathology has no mass in gt_differential")
    return PatientRecord(int(age), sex, cc, tuple(full), gt, diff, experienced)


def _evidence_id(key, E: int) -> int:
    try:
        e = int(key)
    except (TypeError, ValueError):
        raise UnknownEvidence(f"evidence id {key!r} is not an integer") from None
    if not 0 <= e < E:
        raise UnknownEvidence(f"evidence id {e} outside [0, {E})")
    return e


def _pathology_id(key, kb: KnowledgeBase) -> int:
    if isinstance(key, str) and not key.lstrip("-").isdigit():
        for p in kb.pathologies:
            if p.name == key:
                return p.id
        raise UnknownPathology(f"unknown pathology {key!r}")
    p = int(key)
    if not 0 <= p < kb.num_pathologies:
        raise UnknownPathology(f"pathology id {p} outside [0, {kb.num_pathologies})")
    return p


def threshold_differential(dist, tau: float = DIFFERENTIAL_THRESHOLD) -> frozenset[int]:
    """Pathologies whose mass is strictly greater than ``tau``."""
    dist = np.asarray(dist, dtype=float)
    return frozenset(int(i) for i in np.flatnonzero(dist > tau))


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def kb_to_dict(kb: KnowledgeBase) -> dict:
    evidences = []
    for ev in kb.evidences:
        d = {"id": ev.id, "name": ev.name, "kind": ev.kind.value, "question": ev.question}
        if ev.kind is EvidenceKind.NUMERIC:
            d["max_value"] = ev.max_value
        elif ev.kind in (EvidenceKind.CATEGORICAL, EvidenceKind.MULTI):
            d["options"] = list(ev.options)
        evidences.append(d)
    pathologies = [
        {"id": p.id, "name": p.name, "severe": p.severe, "prior": float(kb.prior[p.id])}
        for p in kb.pathologies
    ]
    conditionals = {
        str(p.id): {str(ev.id): kb.conditionals[ev.id][p.id].tolist() for ev in kb.evidences}
        for p in kb.pathologies
    }
    return {"pathologies": pathologies, "evidences": evidences, "conditionals": conditionals}


def kb_from_dict(data: Mapping) -> KnowledgeBase:
    try:
        raw_paths = sorted(data["pathologies"], key=lambda p: int(p["id"]))
        raw_evs = sorted(data["evidences"], key=lambda e: int(e["id"]))
        pathologies = tuple(
            PathologySpec(int(p["id"]), str(p["name"]), bool(p.get("severe", False))) for p in raw_paths
        )
        prior = [float(p["prior"]) for p in raw_paths]
        evidences = []
        for e in raw_evs:
            kind = EvidenceKind(e["kind"])
            evidences.append(EvidenceSpec(
                id=int(e["id"]),
                name=str(e["name"]),
                kind=kind,
                question=str(e.get("question", "")),
                options=tuple(e["options"]) if kind in (EvidenceKind.CATEGORICAL, EvidenceKind.MULTI) else (),
                max_value=int(e["max_value"]) if kind is EvidenceKind.NUMERIC else 0,
            ))
        cond = data["conditionals"]
        tables = []
        for ev in evidences:
            rows = [cond[str(p.id)][str(ev.id)] for p in pathologies]
            tables.append(np.array(rows, dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise SchemaError(f"malformed knowledge base: {exc!r}") from exc
    if any(t.ndim != 2 for t in tables):
        raise SchemaError("ragged conditional table")
    return KnowledgeBase(tuple(evidences), pathologies, np.array(prior), tuple(tables))


def dumps_kb(kb: KnowledgeBase) -> str:
    return json.dumps(kb_to_dict(kb), indent=1, sort_keys=True) + "\n"


def save_knowledge_base(kb: KnowledgeBase, path) -> None:
    Path(path).write_text(dumps_kb(kb))


def load_knowledge_base(path) -> KnowledgeBase:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return kb_from_dict(data)


def patient_to_dict(p: PatientRecord, kb: KnowledgeBase) -> dict:
    return {
        "age": p.age,
        "sex": p.sex,
        "chief_complaint": p.chief_complaint,
        "evidences": {str(e): kb.evidences[e].to_json_value(v) for e, v in enumerate(p.values)},
        "gt_pathology": p.gt_pathology,
        "gt_differential": p.gt_differential.tolist(),
    }


def patient_from_dict(d: Mapping, kb: KnowledgeBase) -> PatientRecord:
    try:
        return make_patient(
            kb,
            age=d["age"],
            sex=d["sex"],
            chief_complaint=d["chief_complaint"],
            values=d["evidences"],
            gt_pathology=d["gt_pathology"],
            gt_differential=d["gt_differential"],
        )
    except KeyError as exc:
        raise SchemaError(f"patient record missing field {exc}") from None


def save_patients(patients: Iterable[PatientRecord], kb: KnowledgeBase, path) -> None:
    with open(path, "w") as fh:
        for p in patients:
            fh.write(json.dumps(patient_to_dict(p, kb), sort_keys=True) + "\n")


def load_patients(path, kb: KnowledgeBase) -> list[PatientRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                out.append(patient_from_dict(d, kb))
            except DataError as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from None
    return out


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum()) if nz.size else 0.0
