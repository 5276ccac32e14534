"""Finite metric measure spaces and measure utilities.

A space is a point set with a dense symmetric distance matrix, a strictly
positive probability weight vector, and a distinguished base point.  All
other modules consume these objects; everything here is pure and the
arrays are frozen after construction, so values are safe to share across
threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

PROB_TOL = 1e-12        # probability normalization tolerance, global
DENSITY_TOL = 1e-10     # density normalization tolerance
LENIENT_TRI_REL = 1e-12  # triangle slack per unit diameter in lenient mode


def _frozen(a, dtype=float):
    out = np.ascontiguousarray(np.asarray(a, dtype=dtype))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FiniteMMSpace:
    """A finite metric measure space with a base point.

    Parameters
    ----------
    labels : tuple of str
        Point identifiers, one per point.
    dist : (N, N) ndarray
        Dense symmetric distance matrix with zero diagonal.
    weight : (N,) ndarray
        Strictly positive weights summing to 1.
    base : int
        Index of the base point.
    coords : dict or None
        Optional generator metadata, e.g. ``{"kind": "interval",
        "data": [...]}``.  Kinds in use: ``interval``, ``sphere``,
        ``euclidean``.
    """

    labels: tuple
    dist: np.ndarray
    weight: np.ndarray
    base: int
    coords: dict | None = field(default=None)

    def __post_init__(self):
        d = _frozen(self.dist)
        w = _frozen(self.weight)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise DimensionError(f"distance matrix must be square, got {d.shape}")
        n = d.shape[0]
        if len(self.labels) != n:
            raise DimensionError(f"{len(self.labels)} labels for {n} points")
        if w.shape != (n,):
            raise DimensionError(f"weight shape {w.shape} does not match {n} points")
        if not 0 <= self.base < n:
            raise DimensionError(f"base index {self.base} out of range")
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "weight", w)

    @property
    def n_points(self) -> int:
        return self.dist.shape[0]

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    def __repr__(self):
        kind = self.coords.get("kind") if self.coords else None
        return f"FiniteMMSpace(n={self.n_points}, base={self.base}, coords={kind!r})"


@dataclass(frozen=True)
class Violation:
    """One axiom violation: which axiom, the worst offending indices, defect size."""

    axiom: str
    indices: tuple
    defect: float

    def __str__(self):
        return f"{self.axiom} at {self.indices} (defect {self.defect:.3e})"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple
    mode: str = "strict"

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0

    def to_json(self):
        return {
            "ok": self.ok,
            "mode": self.mode,
            "violations": [
                {"axiom": v.axiom, "indices": list(v.indices), "defect": v.defect}
                for v in self.violations
            ],
        }


def validate_space(space: FiniteMMSpace, lenient: bool = False) -> ValidationReport:
    """Check every metric measure axiom, reporting the worst offender per axiom.

    Strict mode checks the triangle inequality with zero tolerance; the
    generators in this package quantize distances so that this holds as an
    exact float statement.  Lenient mode allows a defect up to
    ``LENIENT_TRI_REL * diameter`` and stamps the report accordingly.
    """
    d = space.dist
    w = space.weight
    n = d.shape[0]
    bad = []

    diag = np.abs(np.diagonal(d))
    if diag.max(initial=0.0) > 0.0:
        i = int(np.argmax(diag))
        bad.append(Violation("nonzero_diagonal", (i, i), float(diag[i])))

    asym = np.abs(d - d.T)
    if asym.max(initial=0.0) > 0.0:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        bad.append(Violation("asymmetry", (int(i), int(j)), float(asym[i, j])))

    off = d + np.diag(np.full(n, np.inf))
    if off.min() <= 0.0:
        i, j = np.unravel_index(np.argmin(off), off.shape)
        bad.append(Violation("nonpositive_distance", (int(i), int(j)), float(-off[i, j])))

    tri_tol = LENIENT_TRI_REL * max(space.diameter, 1.0) if lenient else 0.0
    worst = 0.0
    worst_ijk = None
    # d[i,k] <= d[i,j] + d[j,k]: sweep the intermediate point to bound memory
    for j in range(n):
        defect = d - (d[:, j : j + 1] + d[j : j + 1, :])
        m = float(defect.max())
        if m > worst:
            i, k = np.unravel_index(np.argmax(defect), defect.shape)
            worst = m
            worst_ijk = (int(i), int(j), int(k))
    if worst > tri_tol:
        bad.append(Violation("triangle_inequality", worst_ijk, worst))

    if w.min() <= 0.0:
        i = int(np.argmin(w))
        bad.append(Violation("zero_mass", (i,), float(-w[i])))
    mass_defect = abs(float(w.sum()) - 1.0)
    if mass_defect > PROB_TOL:
        bad.append(Violation("not_normalized", (), mass_defect))

    return ValidationReport(tuple(bad), "lenient" if lenient else "strict")


def vg_integral(space: FiniteMMSpace, c: float) -> float:
    """Gaussian-weight volume integral sum_i w_i exp(-c^2 d(base, i)^2).

    Finite spaces always make this finite, so the growth condition it
    encodes holds automatically at this scale; the value is still a useful
    concentration summary.  Monotone non-increasing in ``c``.
    """
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    d = space.dist[space.base]
    return float(np.sum(space.weight * np.exp(-(c * c) * d * d)))


def relative_entropy(mu: np.ndarray, space: FiniteMMSpace) -> float:
    """Entropy of mu relative to the space weight, sum mu log(mu / w).

    Zero-mass atoms contribute nothing (0 log 0 = 0).  Non-negative for
    probability inputs, zero exactly when mu equals the weight vector.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != space.weight.shape:
        raise DimensionError(f"measure shape {mu.shape} vs {space.weight.shape}")
    pos = mu > 0.0
    return float(np.sum(mu[pos] * np.log(mu[pos] / space.weight[pos])))


def as_prob_vector(p, n: int | None = None, tol: float = PROB_TOL) -> np.ndarray:
    """Validate and freeze a probability vector: non-negative, sums to 1."""
    p = np.asarray(p, dtype=float)
    if n is not None and p.shape != (n,):
        raise DimensionError(f"expected length {n}, got shape {p.shape}")
    if p.min(initial=0.0) < 0.0:
        raise ValueError(f"negative mass {p.min()} at index {int(np.argmin(p))}")
    defect = abs(float(p.sum()) - 1.0)
    if defect > tol:
        raise ValueError(f"mass sums to {p.sum()}, off by {defect:.2e}")
    return _frozen(p)


def as_density(rho, space: FiniteMMSpace, tol: float = DENSITY_TOL) -> np.ndarray:
    """Validate a density against the space weight: rho >= 0, integral 1."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != space.weight.shape:
        raise DimensionError(f"density shape {rho.shape} vs {space.weight.shape}")
    if rho.min(initial=0.0) < 0.0:
        raise ValueError(f"negative density {rho.min()}")
    integral = float(rho @ space.weight)
    if abs(integral - 1.0) > tol:
        raise ValueError(f"density integrates to {integral}, off by {abs(integral-1.0):.2e}")
    return _frozen(rho)


def density_to_measure(rho, space: FiniteMMSpace) -> np.ndarray:
    return _frozen(np.asarray(rho, dtype=float) * space.weight)


def measure_to_density(mu, space: FiniteMMSpace) -> np.ndarray:
    return _frozen(np.asarray(mu, dtype=float) / space.weight)


def snap_distances(dist: np.ndarray, rel: float = 2.0 ** -40) -> np.ndarray:
    """Ceil-round distances onto a power-of-two grid.

    Every entry becomes an exact integer multiple of one quantum, so sums
    and comparisons of distances are exact in floats and the triangle
    inequality survives rounding: ceil(a) <= ceil(b) + ceil(c) whenever
    a <= b + c.  The quantum is about ``rel`` times the diameter, which is
    far below every tolerance used by the checks in this package.
    """
    dist = np.asarray(dist, dtype=float)
    scale = float(dist.max())
    if scale <= 0.0:
        return dist.copy()
    # power-of-two quantum: division and the final product are then exact,
    # so snapped values are exact integer multiples of the quantum
    quantum = 2.0 ** math.ceil(math.log2(scale * rel))
    out = np.ceil(dist / quantum) * quantum
    out = np.maximum(out, 0.0)
    np.fill_diagonal(out, 0.0)
    upper = np.triu(out, 1)
    return upper + upper.T


# ---------------------------------------------------------------------------
# JSON exchange format
# ---------------------------------------------------------------------------

def space_to_json(space: FiniteMMSpace) -> dict:
    doc = {
        "labels": list(space.labels),
        "dist": space.dist.tolist(),
        "weight": space.weight.tolist(),
        "base": int(space.base),
    }
    if space.coords is not None:
        doc["coords"] = {
            "kind": space.coords["kind"],
            "data": np.asarray(space.coords["data"]).tolist(),
            **{k: v for k, v in space.coords.items() if k not in ("kind", "data")},
        }
    return doc


def space_from_json(doc: dict) -> FiniteMMSpace:
    for key in ("labels", "dist", "weight", "base"):
        if key not in doc:
            raise DimensionError(f"space document missing field {key!r}")
    dist = np.asarray(doc["dist"], dtype=float)
    weight = np.asarray(doc["weight"], dtype=float)
    if not np.all(np.isfinite(dist)) or not np.all(np.isfinite(weight)):
        raise ValueError("space document contains NaN or Inf")
    coords = None
    if "coords" in doc and doc["coords"] is not None:
        coords = dict(doc["coords"])
        coords["data"] = np.asarray(coords["data"], dtype=float)
        if not np.all(np.isfinite(coords["data"])):
            raise ValueError("coords contain NaN or Inf")
    return FiniteMMSpace(tuple(doc["labels"]), dist, weight, int(doc["base"]), coords)


def dump_space(space: FiniteMMSpace, path) -> None:
    with open(path, "w") as fh:
        json.dump(space_to_json(space), fh)


def load_space(path) -> FiniteMMSpace:
    with open(path) as fh:
        return space_from_json(json.load(fh))
