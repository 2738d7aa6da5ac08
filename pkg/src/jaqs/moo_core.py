"""Multi-objective primitives: dominance, non-dominated sorting, crowding,
Pareto-front extraction, and 2-D hypervolume with prefix progressions.

All computations happen in canonical minimization space: objectives declared
as "maximize" are negated up front, so dominance is plain componentwise <=.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ObjectiveSpec:
    name: str
    direction: str  # "maximize" or "minimize"

    def __post_init__(self):
        if self.direction not in ("maximize", "minimize"):
            raise ValueError(f"direction must be maximize or minimize, got {self.direction!r}")
        if not self.name:
            raise ValueError("objective name must be non-empty")


@dataclass(frozen=True)
class CanonicalPoint:
    """Objective vector in minimization space plus the index it came from."""

    values: tuple[float, ...]
    source_index: int


@dataclass
class FrontDecomposition:
    ranks: np.ndarray          # rank per point, 0 = non-dominated
    fronts: list[list[int]]    # point indices per rank, ascending source order


def direction_signs(specs: Sequence[ObjectiveSpec]) -> np.ndarray:
    return np.array([-1.0 if s.direction == "maximize" else 1.0 for s in specs])


def canonicalize(
    points: Sequence[Sequence[float]], specs: Sequence[ObjectiveSpec]
) -> list[CanonicalPoint]:
    """Negate maximize dimensions; order preserved, non-finite values rejected."""
    signs = direction_signs(specs)
    out = []
    for i, vec in enumerate(points):
        if len(vec) != len(specs):
            raise ValueError(
                f"point {i} has {len(vec)} values for {len(specs)} objectives"
            )
        vals = tuple(float(s * v) for s, v in zip(signs, vec))
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"point {i} has a non-finite objective value")
        out.append(CanonicalPoint(values=vals, source_index=i))
    return out


def _as_matrix(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        mat = np.asarray(points, dtype=float)
    else:
        rows = [p.values if isinstance(p, CanonicalPoint) else p for p in points]
        mat = np.asarray(rows, dtype=float)
    if mat.ndim == 1:
        mat = mat.reshape(1, -1)
    return mat


def dominates(a, b) -> bool:
    """True iff a <= b componentwise with at least one strict improvement."""
    av = np.asarray(a.values if isinstance(a, CanonicalPoint) else a, dtype=float)
    bv = np.asarray(b.values if isinstance(b, CanonicalPoint) else b, dtype=float)
    if av.shape != bv.shape:
        raise ValueError(f"dimension mismatch: {av.shape} vs {bv.shape}")
    return bool(np.all(av <= bv) and np.any(av < bv))


def _domination_matrix(mat: np.ndarray) -> np.ndarray:
    le = np.all(mat[:, None, :] <= mat[None, :, :], axis=-1)
    lt = np.any(mat[:, None, :] < mat[None, :, :], axis=-1)
    return le & lt


def non_dominated_sort(points) -> FrontDecomposition:
    """Partition points into successive dominance ranks (fast peeling)."""
    mat = _as_matrix(points)
    n = mat.shape[0]
    if n == 0:
        raise ValueError("need at least one point")
    dom = _domination_matrix(mat)
    n_dominators = dom.sum(axis=0).astype(np.int64)
    ranks = np.full(n, -1, dtype=np.int64)
    fronts: list[list[int]] = []
    assigned = 0
    rank = 0
    while assigned < n:
        members = np.flatnonzero((n_dominators == 0) & (ranks < 0))
        ranks[members] = rank
        fronts.append([int(i) for i in members])
        n_dominators -= dom[members].sum(axis=0)
        assigned += len(members)
        rank += 1
    return FrontDecomposition(ranks=ranks, fronts=fronts)


def crowding_distance(points) -> np.ndarray:
    """Per-point diversity: normalized gap to neighbours, +inf on boundaries."""
    mat = _as_matrix(points)
    n, m = mat.shape
    dist = np.zeros(n)
    for j in range(m):
        order = np.argsort(mat[:, j], kind="stable")
        lo, hi = mat[order[0], j], mat[order[-1], j]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if hi > lo:
            gaps = (mat[order[2:], j] - mat[order[:-2], j]) / (hi - lo)
            dist[order[1:-1]] += gaps
    return dist


def pareto_front(records: Sequence, specs: Sequence[ObjectiveSpec]) -> list:
    """Rank-0 records; duplicate objective vectors collapse to the earliest one.

    Records only need an ``objectives`` mapping keyed by the spec names.
    """
    names = [s.name for s in specs]
    name_set = set(names)
    for i, rec in enumerate(records):
        if set(rec.objectives.keys()) != name_set:
            raise ValueError(
                f"record {i} has objectives {sorted(rec.objectives)} "
                f"but the run declares {sorted(name_set)}"
            )
    if not records:
        return []
    vectors = [[rec.objectives[n] for n in names] for rec in records]
    mat = _as_matrix([p.values for p in canonicalize(vectors, specs)])
    dom = _domination_matrix(mat)
    rank0 = np.flatnonzero(dom.sum(axis=0) == 0)
    out = []
    seen: set[tuple[float, ...]] = set()
    for i in rank0:
        key = tuple(mat[i])
        if key in seen:
            continue
        seen.add(key)
        out.append(records[int(i)])
    return out


def hypervolume_2d(points, reference) -> float:
    """Area dominated by the point set up to the reference, by x-sweep.

    Every point must weakly dominate the reference; use
    :func:`hypervolume_progression` when out-of-bound points should be
    clipped instead of rejected.
    """
    ref = np.asarray(
        reference.values if isinstance(reference, CanonicalPoint) else reference,
        dtype=float,
    )
    if ref.shape != (2,):
        raise ValueError(f"only 2 objectives are supported, got reference shape {ref.shape}")
    mat = _as_matrix(points) if len(points) else np.empty((0, 2))
    if mat.size and mat.shape[1] != 2:
        raise ValueError(f"only 2 objectives are supported, got {mat.shape[1]}")
    for i, p in enumerate(mat):
        if not np.all(p <= ref):
            raise ValueError(
                f"point {i} {tuple(p)} does not dominate the reference {tuple(ref)}"
            )
    if mat.shape[0] == 0:
        return 0.0
    order = np.lexsort((mat[:, 1], mat[:, 0]))
    area = 0.0
    prev_y = ref[1]
    for i in order:
        x, y = mat[i]
        if y >= prev_y:
            continue  # dominated by an earlier sweep point
        area += (ref[0] - x) * (prev_y - y)
        prev_y = y
    return float(area)


@dataclass(frozen=True)
class ProgressionResult:
    eval_counts: tuple[int, ...]
    hypervolumes: tuple[float, ...]
    clipped: int


def hypervolume_progression(
    ledger, specs: Sequence[ObjectiveSpec], reference, stride: int
) -> ProgressionResult:
    """Hypervolume of each prefix of the ledger, at multiples of `stride`.

    Points outside the reference bound are clipped out (and counted) rather
    than rejected, because early random evaluations can fall outside a
    reference chosen after the fact.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    records = ledger.records
    if not records:
        raise ValueError("empty ledger")
    ref = np.asarray(
        reference.values if isinstance(reference, CanonicalPoint) else reference,
        dtype=float,
    )
    names = [s.name for s in specs]
    vectors = [[rec.objectives[n] for n in names] for rec in records]
    mat = _as_matrix([p.values for p in canonicalize(vectors, specs)])
    valid = np.all(mat <= ref[None, :], axis=1)
    clipped = int((~valid).sum())

    n = len(records)
    counts = list(range(stride, n + 1, stride))
    if not counts or counts[-1] != n:
        counts.append(n)
    values = []
    for k in counts:
        sub = mat[:k][valid[:k]]
        values.append(hypervolume_2d(sub, ref))
    return ProgressionResult(
        eval_counts=tuple(counts), hypervolumes=tuple(values), clipped=clipped
    )


def reference_from_points(mat, inflation: float = 0.1) -> tuple[float, ...]:
    """Comparison reference: componentwise worst value plus 10% of the range."""
    mat = _as_matrix(mat)
    worst = mat.max(axis=0)
    span = worst - mat.min(axis=0)
    return tuple(float(v) for v in worst + inflation * span)
