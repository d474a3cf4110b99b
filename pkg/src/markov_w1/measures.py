"""Finitely supported probability measures on R^d."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Atoms ``points[i]`` (rows of an (n, dim) array) with masses ``weights[i]``."""

    points: np.ndarray
    weights: np.ndarray
    approximate: bool = False

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if points.ndim != 2 or len(points) == 0:
            raise ValueError("a measure needs at least one atom")
        if len(points) != len(weights):
            raise ValueError("points and weights differ in length")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, points, approximate: bool = False) -> EmpiricalMeasure:
        points = np.asarray(points, dtype=float)
        n = len(points)
        if n == 0:
            raise ValueError("a measure needs at least one atom")
        return cls(points, np.full(n, 1.0 / n), approximate)

    @classmethod
    def dirac(cls, x) -> EmpiricalMeasure:
        return cls(np.atleast_1d(np.asarray(x, dtype=float))[None, :], np.ones(1))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)

    def integrate(self, f) -> complex | float:
        """mu(f) for ``f`` mapping an (n, dim) array to n values."""
        return np.dot(self.weights, f(self.points))

    def merged(self) -> EmpiricalMeasure:
        """Same measure with coincident atoms combined (first-occurrence order)."""
        unique, first, inverse = np.unique(self.points, axis=0, return_index=True, return_inverse=True)
        if len(unique) == len(self.points):
            return self
        weights = np.bincount(inverse.reshape(-1), weights=self.weights, minlength=len(unique))
        order = np.argsort(first, kind="stable")
        return EmpiricalMeasure(unique[order], weights[order] / weights.sum(), self.approximate)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for x, w in zip(self.points, self.weights):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(w))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> EmpiricalMeasure:
        """Rows of coordinates followed by a weight; weights are renormalised."""
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
        if not rows:
            raise ValueError("empty measure file")
        widths = {len(r) for r in rows}
        if len(widths) != 1 or widths.pop() < 2:
            raise ValueError("every row needs the same number of coordinates plus a weight")
        data = np.array(rows, dtype=float)
        weights = data[:, -1]
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive total")
        return cls(data[:, :-1], weights / weights.sum())


def empirical_from(trajectory) -> EmpiricalMeasure:
    """Uniform measure (1/n) sum_i delta_{X_i}; repeated states stay separate atoms."""
    points = np.asarray(trajectory.points, dtype=float)
    if len(points) == 0:
        raise ValueError("empty trajectory")
    return EmpiricalMeasure.uniform(points)


def moment(measure: EmpiricalMeasure, q: float) -> float:
    """(sum_i w_i |x_i|^q)^(1/q)."""
    if q <= 0:
        raise ValueError("q must be positive")
    norms = np.linalg.norm(measure.points, axis=1)
    return float(np.dot(measure.weights, norms**q) ** (1.0 / q))


@dataclass(frozen=True)
class TailStats:
    mass_outside: float
    first_moment_outside: float


def tail_stats(measure: EmpiricalMeasure, r: float) -> TailStats:
    """Mass and first moment of the atoms outside the box [-r, r]^dim."""
    if r <= 0:
        raise ValueError("r must be positive")
    outside = np.any(np.abs(measure.points) > r, axis=1)
    w = measure.weights[outside]
    norms = np.linalg.norm(measure.points[outside], axis=1)
    return TailStats(float(w.sum()), float(np.dot(w, norms)))
