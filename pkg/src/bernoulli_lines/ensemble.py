"""Paths, boundary data and the feasibility machinery for avoiding ensembles.

Times are integers; a path stores its absolute heights ``values[i] = L(t0 + i)``.
Barriers are either one of the two infinities or an explicit up-right path,
never a sentinel integer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .errors import (
    DimensionMismatchError,
    InfeasibleBoundaryError,
    StepViolationError,
)


@dataclass(frozen=True)
class UpRightPath:
    t0: int
    values: tuple[int, ...]

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        if not vals:
            raise ValueError("a path needs at least one value")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "t0", int(self.t0))
        for i in range(len(vals) - 1):
            step = vals[i + 1] - vals[i]
            if step not in (0, 1):
                raise StepViolationError(i, step)

    @property
    def t1(self) -> int:
        return self.t0 + len(self.values) - 1

    def __len__(self):
        return len(self.values)

    def __call__(self, t: int) -> int:
        if not self.t0 <= t <= self.t1:
            raise IndexError(f"time {t} outside [{self.t0}, {self.t1}]")
        return self.values[t - self.t0]

    def steps(self) -> tuple[int, ...]:
        v = self.values
        return tuple(v[i + 1] - v[i] for i in range(len(v) - 1))


def make_path(t0: int, values: Iterable[int]) -> UpRightPath:
    """Build an up-right path, raising ``StepViolationError`` on a bad step."""
    return UpRightPath(t0, tuple(values))


class BarrierKind(enum.Enum):
    PLUS_INF = "+inf"
    MINUS_INF = "-inf"
    PATH = "path"


@dataclass(frozen=True)
class Barrier:
    kind: BarrierKind
    path: UpRightPath | None = None

    def __post_init__(self):
        if (self.kind is BarrierKind.PATH) != (self.path is not None):
            raise ValueError("a path barrier carries a path, infinities do not")

    @classmethod
    def plus_inf(cls) -> "Barrier":
        return cls(BarrierKind.PLUS_INF)

    @classmethod
    def minus_inf(cls) -> "Barrier":
        return cls(BarrierKind.MINUS_INF)

    @classmethod
    def from_values(cls, t0: int, values: Sequence[int]) -> "Barrier":
        return cls(BarrierKind.PATH, make_path(t0, values))

    @property
    def is_path(self) -> bool:
        return self.kind is BarrierKind.PATH

    def __call__(self, t: int) -> float | int:
        if self.kind is BarrierKind.PLUS_INF:
            return float("inf")
        if self.kind is BarrierKind.MINUS_INF:
            return float("-inf")
        return self.path(t)


def _full_interval(T0, T1):
    return tuple(range(T0, T1 + 1))


@dataclass(frozen=True)
class EnsembleSpec:
    """Boundary data of an avoiding Bernoulli line ensemble.

    Construction only checks structure (sizes, barrier spans, ``S`` inside the
    interval). Whether the data are feasible is the job of
    :func:`boundary_feasible`, so infeasible specs can still be built and
    inspected.
    """

    T0: int
    T1: int
    x: tuple[int, ...]
    y: tuple[int, ...]
    top: Barrier = field(default_factory=Barrier.plus_inf)
    bottom: Barrier = field(default_factory=Barrier.minus_inf)
    S: tuple[int, ...] | None = None

    def __post_init__(self):
        T0, T1 = int(self.T0), int(self.T1)
        object.__setattr__(self, "T0", T0)
        object.__setattr__(self, "T1", T1)
        if T0 >= T1:
            raise ValueError(f"need T0 < T1, got {T0}, {T1}")
        x = tuple(int(v) for v in self.x)
        y = tuple(int(v) for v in self.y)
        if len(x) == 0 or len(x) != len(y):
            raise DimensionMismatchError("x and y must be non-empty and of equal length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.top.kind is BarrierKind.MINUS_INF:
            raise ValueError("top barrier cannot be -inf")
        if self.bottom.kind is BarrierKind.PLUS_INF:
            raise ValueError("bottom barrier cannot be +inf")
        for name, b in (("top", self.top), ("bottom", self.bottom)):
            if b.is_path and (b.path.t0 != T0 or b.path.t1 != T1):
                raise DimensionMismatchError(f"{name} barrier must span [{T0}, {T1}]")
        if self.S is None:
            S = _full_interval(T0, T1)
        else:
            S = tuple(sorted(set(int(s) for s in self.S)))
            if S and (S[0] < T0 or S[-1] > T1):
                raise ValueError("S must lie inside [T0, T1]")
        object.__setattr__(self, "S", S)

    @property
    def k(self) -> int:
        return len(self.x)

    @property
    def length(self) -> int:
        return self.T1 - self.T0

    @property
    def full_S(self) -> bool:
        return len(self.S) == self.T1 - self.T0 + 1

    @property
    def barrier_free(self) -> bool:
        return not self.top.is_path and not self.bottom.is_path

    def replace(self, **changes) -> "EnsembleSpec":
        data = dict(T0=self.T0, T1=self.T1, x=self.x, y=self.y,
                    top=self.top, bottom=self.bottom, S=self.S)
        data.update(changes)
        return EnsembleSpec(**data)


@dataclass(frozen=True)
class BernoulliLineEnsemble:
    paths: tuple[UpRightPath, ...]

    def __post_init__(self):
        paths = tuple(self.paths)
        if not paths:
            raise DimensionMismatchError("an ensemble needs at least one path")
        t0, n = paths[0].t0, len(paths[0])
        for p in paths[1:]:
            if p.t0 != t0 or len(p) != n:
                raise DimensionMismatchError("all paths must share t0 and length")
        object.__setattr__(self, "paths", paths)

    @property
    def k(self) -> int:
        return len(self.paths)

    @property
    def t0(self) -> int:
        return self.paths[0].t0

    @property
    def t1(self) -> int:
        return self.paths[0].t1

    def column(self, t: int) -> tuple[int, ...]:
        return tuple(p(t) for p in self.paths)

    def to_array(self) -> np.ndarray:
        return np.array([p.values for p in self.paths], dtype=np.int64)

    @classmethod
    def from_array(cls, t0: int, arr) -> "BernoulliLineEnsemble":
        arr = np.asarray(arr)
        return cls(tuple(make_path(t0, row.tolist()) for row in arr))

    @classmethod
    def from_values(cls, t0: int, rows: Sequence[Sequence[int]]) -> "BernoulliLineEnsemble":
        return cls(tuple(make_path(t0, r) for r in rows))


def is_admissible(spec: EnsembleSpec, ens: BernoulliLineEnsemble) -> bool:
    """Endpoints match and ``f >= L_1 >= ... >= L_k >= g`` at every time of S."""
    if ens.k != spec.k or ens.t0 != spec.T0 or ens.t1 != spec.T1:
        raise DimensionMismatchError(
            f"ensemble has {ens.k} paths on [{ens.t0}, {ens.t1}], "
            f"spec wants {spec.k} on [{spec.T0}, {spec.T1}]"
        )
    if ens.column(spec.T0) != spec.x or ens.column(spec.T1) != spec.y:
        return False
    for r in spec.S:
        col = ens.column(r)
        if col[0] > spec.top(r) or col[-1] < spec.bottom(r):
            return False
        for a, b in zip(col, col[1:]):
            if a < b:
                return False
    return True


@dataclass(frozen=True)
class FeasibilityReport:
    failed: tuple[int, ...]
    reasons: tuple[str, ...]

    def __bool__(self):
        return not self.failed


def check_feasibility(spec: EnsembleSpec) -> FeasibilityReport:
    """Check the three sufficient conditions for a non-empty avoiding set."""
    failed, reasons = [], []
    T = spec.length
    x, y = spec.x, spec.y

    def weakly_decreasing(v):
        return all(a >= b for a, b in zip(v, v[1:]))

    c1 = []
    if not weakly_decreasing(x):
        c1.append("x is not weakly decreasing")
    if not weakly_decreasing(y):
        c1.append("y is not weakly decreasing")
    for i, (a, b) in enumerate(zip(x, y)):
        if not 0 <= b - a <= T:
            c1.append(f"y[{i}] - x[{i}] = {b - a} outside [0, {T}]")
    if c1:
        failed.append(1)
        reasons.extend(c1)

    # barriers are UpRightPath objects, so their steps are checked on
    # construction; kept here so the report covers every condition
    c2 = [f"{name} barrier has a bad step"
          for name, b in (("top", spec.top), ("bottom", spec.bottom))
          if b.is_path and any(s not in (0, 1) for s in b.path.steps())]
    if c2:
        failed.append(2)
        reasons.extend(c2)

    c3 = []
    f, g = spec.top, spec.bottom
    if f(spec.T0) < x[0] or f(spec.T1) < y[0]:
        c3.append("top barrier below the first path's endpoints")
    if g(spec.T0) > x[-1] or g(spec.T1) > y[-1]:
        c3.append("bottom barrier above the last path's endpoints")
    if f.is_path and g.is_path:
        for t in range(spec.T0, spec.T1 + 1):
            if f(t) < g(t):
                c3.append(f"top barrier below bottom barrier at t={t}")
                break
    if c3:
        failed.append(3)
        reasons.extend(c3)
    return FeasibilityReport(tuple(failed), tuple(reasons))


def boundary_feasible(spec: EnsembleSpec) -> bool:
    return bool(check_feasibility(spec))


def maximal_ensemble(spec: EnsembleSpec) -> BernoulliLineEnsemble:
    """Greedy highest ensemble: each path steps up whenever the path above
    and its own exit value allow it.

    The result is admissible for the full interval, hence also for any S.
    """
    report = check_feasibility(spec)
    if not report:
        raise InfeasibleBoundaryError("; ".join(report.reasons), report.failed)
    T0, T1 = spec.T0, spec.T1
    above = None if not spec.top.is_path else list(spec.top.path.values)
    rows = []
    for j in range(spec.k):
        yj = spec.y[j]
        row = [spec.x[j]]
        for i in range(T1 - T0):
            cap = yj if above is None else min(above[i + 1], yj)
            cur = row[-1]
            row.append(cur + 1 if cur + 1 <= cap else cur)
        rows.append(row)
        above = row
    return BernoulliLineEnsemble.from_values(T0, rows)


# -- documents ----------------------------------------------------------------

def _barrier_from_doc(value, t0, default):
    if value is None:
        return default
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("+inf", "inf", "+infinity", "infinity"):
            return Barrier.plus_inf()
        if v in ("-inf", "-infinity"):
            return Barrier.minus_inf()
        raise ValueError(f"unrecognised barrier {value!r}")
    if isinstance(value, float) and np.isinf(value):
        return Barrier.plus_inf() if value > 0 else Barrier.minus_inf()
    return Barrier.from_values(t0, list(value))


def _barrier_to_doc(b: Barrier):
    if b.kind is BarrierKind.PATH:
        return list(b.path.values)
    return b.kind.value


def spec_from_dict(doc: dict) -> EnsembleSpec:
    T0 = int(doc.get("T0", 0))
    T1 = int(doc["T1"])
    x = [int(v) for v in doc["x"]]
    y = [int(v) for v in doc["y"]]
    if "k" in doc and int(doc["k"]) != len(x):
        raise DimensionMismatchError(f"k={doc['k']} but x has {len(x)} entries")
    return EnsembleSpec(
        T0=T0, T1=T1, x=x, y=y,
        top=_barrier_from_doc(doc.get("top"), T0, Barrier.plus_inf()),
        bottom=_barrier_from_doc(doc.get("bottom"), T0, Barrier.minus_inf()),
        S=doc.get("S"),
    )


def spec_to_dict(spec: EnsembleSpec) -> dict:
    doc = {
        "T0": spec.T0, "T1": spec.T1, "k": spec.k,
        "x": list(spec.x), "y": list(spec.y),
        "top": _barrier_to_doc(spec.top),
        "bottom": _barrier_to_doc(spec.bottom),
    }
    if not spec.full_S:
        doc["S"] = list(spec.S)
    return doc


def load_spec(path: str | Path) -> EnsembleSpec:
    with open(path) as fh:
        return spec_from_dict(yaml.safe_load(fh))


def dump_spec(spec: EnsembleSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False)
