"""Partitions, disintegration, quotient spaces, and the pullback calculus.

A partition of a finite space, together with the quotient it induces and
the disintegration of the weight over its classes, is held in a
:class:`FoliationBundle`.  Certification is a tolerance-stamped state: a
bundle may be checked as a metric foliation (every point of every class
realizes the class-to-class distance) and upgraded to a metric measure
foliation (fiber measures additionally couple at exactly the quotient
distance).  Checks return reports; passing the measure check returns a new
bundle value carrying the certificate, the original is never mutated.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, PartitionError
from .spaces import FiniteMMSpace, as_prob_vector, relative_entropy
from .transport import solve_ot


def _thread_count() -> int:
    env = os.environ.get("FOLIO_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


@dataclass(frozen=True)
class FoliationBundle:
    """A partitioned space, its quotient, and the fiber measures.

    Fields
    ------
    total : FiniteMMSpace
    partition : (N,) int ndarray mapping each point to its class
    quotient : FiniteMMSpace on the classes, weight = pushforward
    fibers : (n_classes, N) ndarray, row y = fiber measure of class y
    certification : None, ("metric_foliation", tol) or ("mm_foliation", tol)
    quotient_metric_ok : False when the quotient distance violates the
        triangle inequality, which happens exactly when the partition is
        not a metric foliation.  Kept as a flag, not an error, because
        demonstrating non-foliations is part of the job.
    """

    total: FiniteMMSpace
    partition: np.ndarray
    quotient: FiniteMMSpace
    fibers: np.ndarray
    certification: tuple | None = None
    quotient_metric_ok: bool = True
    quotient_metric_defect: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        part = np.ascontiguousarray(np.asarray(self.partition, dtype=int))
        part.setflags(write=False)
        fib = np.ascontiguousarray(np.asarray(self.fibers, dtype=float))
        fib.setflags(write=False)
        object.__setattr__(self, "partition", part)
        object.__setattr__(self, "fibers", fib)

    @property
    def n_classes(self) -> int:
        return self.quotient.n_points

    def members(self, y: int) -> np.ndarray:
        return np.flatnonzero(self.partition == y)

    def with_certification(self, cert: tuple) -> "FoliationBundle":
        return FoliationBundle(
            self.total, self.partition, self.quotient, self.fibers,
            certification=cert,
            quotient_metric_ok=self.quotient_metric_ok,
            quotient_metric_defect=self.quotient_metric_defect,
            meta=self.meta,
        )


def _check_partition(space: FiniteMMSpace, partition) -> np.ndarray:
    part = np.asarray(partition, dtype=int)
    if part.shape != (space.n_points,):
        raise PartitionError(f"partition length {part.shape} vs {space.n_points} points")
    if part.min(initial=0) < 0:
        raise PartitionError("negative class index")
    n_classes = int(part.max()) + 1
    counts = np.bincount(part, minlength=n_classes)
    if counts.min() == 0:
        raise PartitionError(f"empty class {int(np.argmin(counts))}")
    return part


def disintegrate(space: FiniteMMSpace, partition) -> np.ndarray:
    """Fiber measures of the weight over the classes.

    For finite spaces the disintegration is literally unique: the fiber of
    class y is the weight restricted to the class and renormalized.  Each
    row sums to one and vanishes off its class.
    """
    part = _check_partition(space, partition)
    n_classes = int(part.max()) + 1
    class_mass = np.bincount(part, weights=space.weight, minlength=n_classes)
    fibers = np.zeros((n_classes, space.n_points))
    fibers[part, np.arange(space.n_points)] = space.weight / class_mass[part]
    return fibers


def build_quotient(space: FiniteMMSpace, partition, labels=None) -> FoliationBundle:
    """Quotient space of a partition: min cross distance, summed weights.

    The quotient distance is d*(y, y') = min over fiber pairs of d.  If that
    fails the triangle inequality the bundle is still returned, flagged via
    ``quotient_metric_ok``; callers decide what failure means.
    """
    part = _check_partition(space, partition)
    n_classes = int(part.max()) + 1
    members = [np.flatnonzero(part == y) for y in range(n_classes)]
    dstar = np.zeros((n_classes, n_classes))
    for y in range(n_classes):
        rows = space.dist[members[y]]
        for z in range(y + 1, n_classes):
            val = float(rows[:, members[z]].min())
            dstar[y, z] = dstar[z, y] = val
    defect = 0.0
    for j in range(n_classes):
        gap = dstar - (dstar[:, j : j + 1] + dstar[j : j + 1, :])
        defect = max(defect, float(gap.max()))
    qweight = np.bincount(part, weights=space.weight, minlength=n_classes)
    if labels is None:
        labels = tuple(f"c{y}" for y in range(n_classes))
    quotient = FiniteMMSpace(labels, dstar, qweight, int(part[space.base]))
    return FoliationBundle(
        total=space,
        partition=part,
        quotient=quotient,
        fibers=disintegrate(space, part),
        certification=None,
        quotient_metric_ok=bool(defect <= 0.0),
        quotient_metric_defect=max(defect, 0.0),
    )


@dataclass(frozen=True)
class FoliationReport:
    """Per-pair worst offenders for a foliation check."""

    passed: bool
    tol: float
    worst_defect: float
    worst_location: tuple | None
    kind: str
    exhaustive: bool = True
    pair_defects: tuple = ()

    def to_json(self):
        return {
            "kind": self.kind,
            "passed": self.passed,
            "tol": self.tol,
            "worst_defect": self.worst_defect,
            "worst_location": list(self.worst_location) if self.worst_location else None,
            "exhaustive": self.exhaustive,
            "pair_defects": [list(row) for row in self.pair_defects],
        }


def check_metric_foliation(bundle: FoliationBundle, tol: float) -> FoliationReport:
    """Every point of every class must realize the class-to-class distance.

    Passes when |d(x, F') - d*(F, F')| <= tol for all classes F, F' and all
    x in F; the report carries the worst offending (point, class) pair.
    """
    space = bundle.total
    part = bundle.partition
    n_classes = bundle.n_classes
    members = [np.flatnonzero(part == y) for y in range(n_classes)]
    worst = 0.0
    where = None
    for y in range(n_classes):
        rows = space.dist[members[y]]
        for z in range(n_classes):
            if z == y:
                continue
            point_to_class = rows[:, members[z]].min(axis=1)
            defects = np.abs(point_to_class - bundle.quotient.dist[y, z])
            k = int(np.argmax(defects))
            if defects[k] > worst:
                worst = float(defects[k])
                where = (int(members[y][k]), z)
    return FoliationReport(
        passed=bool(worst <= tol),
        tol=tol,
        worst_defect=worst,
        worst_location=where,
        kind="metric_foliation",
    )


@dataclass(frozen=True)
class MMFoliationReport:
    """Result of the full metric measure foliation check.

    ``bundle`` is the input bundle, certification-upgraded when the check
    passed.  ``pair_defects`` rows are (y, y', q, d*, W_q, defect).
    """

    passed: bool
    tol: float
    metric_report: FoliationReport
    worst_defect: float
    worst_pair: tuple | None
    bundle: FoliationBundle
    exhaustive: bool
    pair_defects: tuple

    def to_json(self):
        return {
            "kind": "mm_foliation",
            "passed": self.passed,
            "tol": self.tol,
            "worst_defect": self.worst_defect,
            "worst_pair": list(self.worst_pair) if self.worst_pair else None,
            "exhaustive": self.exhaustive,
            "metric_check": self.metric_report.to_json(),
            "pair_defects": [list(row) for row in self.pair_defects],
        }


def _fiber_pair_defect(args):
    space, fibers, dstar, y, z, q = args
    sub = solve_ot(space, fibers[y], fibers[z], p=q)
    return y, z, q, sub.distance, abs(sub.distance - dstar)


def check_mm_foliation(bundle: FoliationBundle, tol: float,
                       q_values=(1.0, 2.0, 3.0),
                       pair_budget: int | None = None,
                       seed: int | None = None) -> MMFoliationReport:
    """Check the coupling condition W_q(mu_y, mu_y') = d*(y, y') on fibers.

    Runs the metric foliation check first, then solves one transport
    problem per class pair and exponent.  All pairs are scanned by default;
    for many classes pass ``pair_budget`` (with a seed) to sample, which is
    marked non-exhaustive in the report.  On a full pass the returned
    report carries a bundle certified at this tolerance.
    """
    metric_rep = check_metric_foliation(bundle, tol)
    n = bundle.n_classes
    pairs = [(y, z) for y in range(n) for z in range(y + 1, n)]
    exhaustive = True
    if pair_budget is not None and pair_budget < len(pairs):
        rng = np.random.default_rng(seed)
        keep = rng.choice(len(pairs), size=pair_budget, replace=False)
        pairs = [pairs[int(k)] for k in keep]
        exhaustive = False
    jobs = [
        (bundle.total, bundle.fibers, float(bundle.quotient.dist[y, z]), y, z, q)
        for (y, z) in pairs
        for q in q_values
    ]
    workers = _thread_count()
    if workers > 1 and len(jobs) > 4:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_fiber_pair_defect, jobs))
    else:
        rows = [_fiber_pair_defect(j) for j in jobs]
    worst = 0.0
    worst_pair = None
    table = []
    for y, z, q, wq, defect in rows:
        table.append((y, z, q, float(bundle.quotient.dist[y, z]), wq, defect))
        if defect > worst:
            worst = defect
            worst_pair = (y, z, q)
    passed = metric_rep.passed and worst <= tol
    out_bundle = bundle.with_certification(("mm_foliation", tol)) if passed else bundle
    return MMFoliationReport(
        passed=passed,
        tol=tol,
        metric_report=metric_rep,
        worst_defect=max(worst, metric_rep.worst_defect),
        worst_pair=worst_pair,
        bundle=out_bundle,
        exhaustive=exhaustive,
        pair_defects=tuple(table),
    )


# ---------------------------------------------------------------------------
# pullback calculus
# ---------------------------------------------------------------------------

def pullback_measure(bundle: FoliationBundle, nu) -> np.ndarray:
    """Mix the fiber measures by a quotient measure: (p* nu)[x] = nu(y) mu_y[x]."""
    nu = as_prob_vector(nu, bundle.n_classes)
    return nu @ bundle.fibers


def pullback_function(bundle: FoliationBundle, f) -> np.ndarray:
    """Compose a quotient function with the quotient map."""
    f = np.asarray(f, dtype=float)
    if f.shape != (bundle.n_classes,):
        raise DimensionError(f"expected length {bundle.n_classes}, got {f.shape}")
    return f[bundle.partition]


def fiber_average(bundle: FoliationBundle, f) -> np.ndarray:
    """Average a total-space function over each fiber measure.

    Left inverse of :func:`pullback_function`; contracts every L^q norm by
    the Jensen inequality.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (bundle.total.n_points,):
        raise DimensionError(f"expected length {bundle.total.n_points}, got {f.shape}")
    return bundle.fibers @ f


def pullback_entropy_gap(bundle: FoliationBundle, nu) -> float:
    """Ent_{m*}(nu) - Ent_m(p* nu); zero for every quotient measure."""
    nu = as_prob_vector(nu, bundle.n_classes)
    return relative_entropy(nu, bundle.quotient) - relative_entropy(
        pullback_measure(bundle, nu), bundle.total
    )


# ---------------------------------------------------------------------------
# partition exchange formats
# ---------------------------------------------------------------------------

def partition_to_json(partition) -> dict:
    part = np.asarray(partition, dtype=int)
    classes = [np.flatnonzero(part == y).tolist() for y in range(int(part.max()) + 1)]
    return {"classes": classes}


def partition_from_json(doc: dict, n_points: int | None = None) -> np.ndarray:
    if "classes" not in doc:
        raise PartitionError("partition document missing 'classes'")
    classes = doc["classes"]
    size = max((max(c) for c in classes if c), default=-1) + 1
    if n_points is not None:
        size = max(size, n_points)
    part = np.full(size, -1, dtype=int)
    for y, idxs in enumerate(classes):
        for i in idxs:
            if part[i] != -1:
                raise PartitionError(f"point {i} listed in two classes")
            part[i] = y
    if (part < 0).any():
        raise PartitionError(f"point {int(np.argmax(part < 0))} not covered")
    return part


def load_partition(path, n_points=None) -> np.ndarray:
    with open(path) as fh:
        return partition_from_json(json.load(fh), n_points)


def dump_partition(partition, path) -> None:
    with open(path, "w") as fh:
        json.dump(partition_to_json(partition), fh)


def pair_defects_to_csv(report: MMFoliationReport) -> str:
    lines = ["y,y2,q,dstar,Wq,defect"]
    for y, z, q, ds, wq, defect in report.pair_defects:
        lines.append(f"{y},{z},{q:.17g},{ds:.17g},{wq:.17g},{defect:.17g}")
    return "\n".join(lines) + "\n"
