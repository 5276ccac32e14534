"""Weighted graph Laplacians: Dirichlet energies, spectra, spectral gaps.

A :class:`GraphOperator` is a vertex measure plus symmetric non-negative
conductances.  The Laplacian is the generalized pencil (D - W) v = lam M v
with M the diagonal vertex measure; the q-Dirichlet energy aggregates the
local slope s_i = (sum_j (w_ij / m_i) (f_j - f_i)^2)^(1/2).  Two builder
families exist: explicit combinatorial graphs (chains, cycles, Kronecker
products) on which quotient identities hold to machine precision, and
kernel graphs from point clouds on which they hold to discretization order.

Note on normalization: the local slope gathers both endpoints of every
edge, so at q = 2 the energy equals the full quadratic form of the pencil.
Slope-based quantities (entropy slopes, variational spectral gaps) divide
by 2^(q/2) so their q = 2 specialization matches the eigensolver exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.optimize import minimize
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from scipy.sparse.linalg import eigsh

from .errors import (
    BandwidthError,
    ConvergenceError,
    DimensionError,
    FolioError,
    OptimizationError,
)
from .spaces import FiniteMMSpace

DENSE_LIMIT = 3000  # dense eigensolver below this size, Krylov above


@dataclass(frozen=True)
class GraphOperator:
    """Vertex measure + symmetric conductances defining a weighted Laplacian."""

    vertex_measure: np.ndarray
    conductance: sparse.csr_matrix
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.vertex_measure, dtype=float))
        m.setflags(write=False)
        object.__setattr__(self, "vertex_measure", m)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_measure)

    def edges(self):
        """COO triplets (rows, cols, weights) of the stored conductances."""
        coo = self.conductance.tocoo()
        return coo.row, coo.col, coo.data


def graph_operator(vertex_measure, conductance, provenance=None,
                   check_connected: bool = True) -> GraphOperator:
    """Validate and assemble a graph operator.

    Requires symmetry, non-negativity, zero diagonal, strictly positive
    vertex measure, and (by default) a connected graph so that zero is a
    simple eigenvalue.
    """
    m = np.asarray(vertex_measure, dtype=float)
    if len(m) == 0 or m.min() <= 0.0:
        raise FolioError("vertex measure must be strictly positive")
    W = sparse.csr_matrix(conductance)
    if W.shape != (len(m), len(m)):
        raise DimensionError(f"conductance shape {W.shape} vs {len(m)} vertices")
    if W.diagonal().any():
        raise FolioError("conductance diagonal must be zero")
    asym = abs(W - W.T)
    if asym.nnz and asym.max() > 0.0:
        raise FolioError("conductance must be symmetric")
    if W.nnz and W.data.min() < 0.0:
        raise FolioError("conductance must be non-negative")
    if check_connected:
        ncomp, _ = connected_components(W, directed=False)
        if ncomp != 1:
            raise FolioError(f"graph is disconnected ({ncomp} components)")
    return GraphOperator(m, W, provenance or {})


def build_kernel_graph(space: FiniteMMSpace, bandwidth: float) -> GraphOperator:
    """Gaussian kernel graph over a space, degree-normalized.

    Conductances start from w_ij = m_i m_j exp(-d_ij^2 / 4t) / (2t) and are
    rescaled by 2 / kappa, kappa being the mean kernel mass
    sum_ij m_i m_j exp(-d_ij^2 / 4t).  The rescaling removes the kernel
    volume factor so the pencil's eigenvalues estimate the weighted
    Laplacian of the sampled space directly; without it they shrink with
    the bandwidth.  Raises :class:`BandwidthError` suggesting the smallest
    usable bandwidth when underflow disconnects the graph.
    """
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    d = space.dist
    w = space.weight
    K = np.exp(-(d * d) / (4.0 * bandwidth))
    kappa = float(w @ K @ w)
    W = np.outer(w, w) * K / (2.0 * bandwidth) * (2.0 / kappa)
    np.fill_diagonal(W, 0.0)
    Ws = sparse.csr_matrix(W)
    ncomp, _ = connected_components(Ws, directed=False)
    if ncomp != 1:
        mst = minimum_spanning_tree(sparse.csr_matrix(d))
        bottleneck = float(mst.data.max())
        suggestion = bottleneck ** 2 / (4.0 * 700.0) * 1.05
        raise BandwidthError(
            f"kernel graph disconnected at bandwidth {bandwidth:.3e}; "
            f"smallest usable value is about {suggestion:.3e}",
            suggested=suggestion,
        )
    return GraphOperator(
        w, Ws, {"kind": "kernel", "bandwidth": bandwidth, "kernel_mass": kappa}
    )


def chain_graph(space: FiniteMMSpace) -> GraphOperator:
    """Nearest-neighbor chain on an interval-coordinate space.

    Conductance between grid neighbors is sqrt(m_i m_j) / gap^2, the
    discretization of the weighted second-difference operator; with the
    vertex measure as mass matrix the pencil converges to the weighted
    Sturm-Liouville operator of the profile.
    """
    from .transport import _interval_grid

    t = _interval_grid(space)
    m = space.weight
    gaps = np.diff(t)
    vals = np.sqrt(m[:-1] * m[1:]) / gaps ** 2
    n = space.n_points
    W = sparse.diags([vals, vals], [1, -1], shape=(n, n), format="csr")
    return graph_operator(m, W, {"kind": "chain"})


def cycle_graph(space: FiniteMMSpace) -> GraphOperator:
    """Ring graph on a circle space (1-sphere mesh), neighbors by angle."""
    if not space.coords or space.coords.get("kind") != "sphere":
        raise FolioError("cycle graph requires circle coordinates")
    pts = np.asarray(space.coords["data"], dtype=float)
    if pts.shape[1] != 2:
        raise FolioError("cycle graph requires a 1-sphere mesh")
    order = np.argsort(np.arctan2(pts[:, 1], pts[:, 0]))
    m = space.weight
    n = space.n_points
    W = sparse.lil_matrix((n, n))
    for k in range(n):
        i = order[k]
        j = order[(k + 1) % n]
        gap = space.dist[i, j]
        W[i, j] = W[j, i] = np.sqrt(m[i] * m[j]) / gap ** 2
    return graph_operator(m, W.tocsr(), {"kind": "cycle"})


def product_graph(gy: GraphOperator, gz: GraphOperator) -> GraphOperator:
    """Kronecker-sum product: L = L_Y x I + I x L_Z, spectra add pairwise.

    Vertex (y, z) maps to index y * n_Z + z, matching the point ordering of
    the metric product generator.
    """
    my = gy.vertex_measure
    mz = gz.vertex_measure
    W = sparse.kron(gy.conductance, sparse.diags(mz)) + sparse.kron(
        sparse.diags(my), gz.conductance
    )
    return graph_operator(
        np.kron(my, mz), sparse.csr_matrix(W),
        {"kind": "product", "factors": (gy.provenance, gz.provenance)},
    )


def quotient_graph(g: GraphOperator, partition) -> GraphOperator:
    """Aggregate conductances and masses over partition classes."""
    part = np.asarray(partition, dtype=int)
    if part.shape != (g.n_vertices,):
        raise DimensionError("partition length mismatch")
    n_classes = int(part.max()) + 1
    mstar = np.bincount(part, weights=g.vertex_measure, minlength=n_classes)
    rows, cols, vals = g.edges()
    W = sparse.coo_matrix(
        (vals, (part[rows], part[cols])), shape=(n_classes, n_classes)
    ).tocsr()
    W.setdiag(0.0)
    W.eliminate_zeros()
    return graph_operator(mstar, W, {"kind": "quotient", "parent": g.provenance})


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def local_slope(g: GraphOperator, f) -> np.ndarray:
    """Per-vertex slope s_i = sqrt(sum_j (w_ij / m_i) (f_j - f_i)^2)."""
    f = np.asarray(f, dtype=float)
    rows, cols, vals = g.edges()
    contrib = vals * (f[cols] - f[rows]) ** 2
    s2 = np.bincount(rows, weights=contrib, minlength=g.n_vertices) / g.vertex_measure
    return np.sqrt(s2)


def dirichlet_energy_q(g: GraphOperator, f, q: float) -> float:
    """q-Dirichlet energy (1/q) sum_i m_i s_i^q of the local slope.

    At q = 2 this equals the full quadratic form
    (1/2) sum_ij w_ij (f_i - f_j)^2 of the pencil, an identity asserted in
    the test suite.  Homogeneous of degree q; zero exactly on constants.
    """
    if q <= 1.0:
        raise ValueError(f"energy exponent must satisfy q > 1, got {q}")
    s = local_slope(g, f)
    return float(np.sum(g.vertex_measure * s ** q)) / q


def quadratic_form(g: GraphOperator, f) -> float:
    """Pencil quadratic form f^T (D - W) f = sum over edges w (f_i - f_j)^2."""
    f = np.asarray(f, dtype=float)
    rows, cols, vals = g.edges()
    return 0.5 * float(np.sum(vals * (f[cols] - f[rows]) ** 2))


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues with multiplicities of near-degenerate clusters."""

    eigenvalues: np.ndarray
    multiplicities: tuple
    eigenvectors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ev = np.ascontiguousarray(np.asarray(self.eigenvalues, dtype=float))
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)

    def to_csv(self) -> str:
        lines = ["index,eigenvalue,multiplicity"]
        k = 0
        for mult in self.multiplicities:
            for _ in range(mult):
                lines.append(f"{k},{self.eigenvalues[k]:.17g},{mult}")
                k += 1
        return "\n".join(lines) + "\n"


def _symmetrized(g: GraphOperator):
    m = g.vertex_measure
    half = np.sqrt(m)
    W = g.conductance
    deg = np.asarray(W.sum(axis=1)).ravel()
    S = -(W.multiply(1.0 / half[:, None])).multiply(1.0 / half[None, :])
    S = S.tolil()
    S.setdiag(deg / m)
    return S.tocsr(), half


def _cluster(ev: np.ndarray, tol: float) -> tuple:
    mults = []
    k = 0
    while k < len(ev):
        j = k
        while j + 1 < len(ev) and ev[j + 1] - ev[j] <= tol:
            j += 1
        mults.append(j - k + 1)
        k = j + 1
    return tuple(mults)


def laplacian_spectrum(g: GraphOperator, k: int | None = None,
                       eigenvectors: bool = False, seed: int = 0,
                       cluster_tol: float | None = None) -> Spectrum:
    """Eigenvalues of (D - W) v = lam M v, ascending, zero first.

    Dense solver below ``DENSE_LIMIT`` vertices; shift-inverted Lanczos with
    a seeded start vector above.  Eigenvalues within ``cluster_tol`` are
    reported as one multiplicity cluster.
    """
    n = g.n_vertices
    S, half = _symmetrized(g)
    want = n if k is None else min(k, n)
    if n <= DENSE_LIMIT:
        dense = S.toarray()
        if eigenvectors:
            ev, vecs = eigh(dense, subset_by_index=[0, want - 1])
        else:
            ev = eigh(dense, eigvals_only=True, subset_by_index=[0, want - 1])
            vecs = None
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        scale = float(abs(S).sum(axis=1).max())
        try:
            ev, vecs = eigsh(S, k=want, sigma=-1e-9 * scale, which="LM", v0=v0)
        except Exception as exc:  # pragma: no cover - solver-dependent
            raise ConvergenceError(f"sparse eigensolver failed: {exc}") from exc
        order = np.argsort(ev)
        ev = ev[order]
        vecs = vecs[:, order] if eigenvectors else None
    if ev[0] < -1e-10 * max(1.0, abs(ev[-1])):
        raise FolioError(f"operator not positive semi-definite: lam0 = {ev[0]:.3e}")
    ev = np.clip(ev, 0.0, None)
    if cluster_tol is None:
        cluster_tol = 1e-8 * max(1.0, float(ev[-1]))
    if vecs is not None:
        vecs = vecs / half[:, None]
    return Spectrum(ev, _cluster(ev, cluster_tol), vecs, {"n": n, "k": want})


# ---------------------------------------------------------------------------
# q-spectral gap
# ---------------------------------------------------------------------------

def _best_shift(f, m, q):
    """argmin_a sum m |f - a|^q by bisection on the monotone derivative."""
    lo = float(f.min())
    hi = float(f.max())
    if hi <= lo:
        return lo
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        d = f - mid
        grad = float(np.sum(m * np.sign(d) * np.abs(d) ** (q - 1.0)))
        if grad > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cq_deviation(f, m, q: float) -> float:
    """Best constant-shift L^q deviation: min_a (sum m |f - a|^q)^(1/q)."""
    f = np.asarray(f, dtype=float)
    a = _best_shift(f, m, q)
    return float(np.sum(m * np.abs(f - a) ** q)) ** (1.0 / q)


@dataclass(frozen=True)
class GapResult:
    value: float
    restart_values: tuple
    minimizer: np.ndarray | None
    method: str

    @property
    def spread(self) -> float:
        vals = [v for v in self.restart_values if np.isfinite(v)]
        return max(vals) - min(vals) if vals else float("nan")


def _gap_value_and_grad(fvec, g, q, delta):
    m = g.vertex_measure
    rows, cols, vals = g.edges()
    diff = fvec[cols] - fvec[rows]
    s2 = np.bincount(rows, weights=vals * diff * diff, minlength=len(m)) / m
    s2d = s2 + delta * delta
    energy = float(np.sum(m * s2d ** (q / 2.0))) / q
    sigma = s2d ** (q / 2.0 - 1.0)
    # d energy / d f_k = sum_j w_kj (sigma_k + sigma_j)(f_k - f_j)
    e_grad = np.bincount(
        rows, weights=vals * (sigma[rows] + sigma[cols]) * (-diff), minlength=len(m)
    )
    a = _best_shift(fvec, m, q)
    dev = fvec - a
    cq_q = float(np.sum(m * np.abs(dev) ** q))
    c_grad = q * m * np.sign(dev) * np.abs(dev) ** (q - 1.0)
    norm = 2.0 ** (q / 2.0)
    val = q * energy / (norm * cq_q)
    grad = q * (e_grad * cq_q - energy * c_grad) / (norm * cq_q * cq_q)
    return val, grad


def spectral_gap_q(g: GraphOperator, q: float, seed: int = 0,
                   restarts: int = 16) -> GapResult:
    """First q-spectral gap: inf over nonconstant f of the q-Rayleigh ratio.

    The ratio is q Ch_q(f) / c_q(f)^q with the slope normalized so the
    q = 2 case coincides with the pencil eigenvalue, which is what the
    eigensolver path returns directly.  Away from q = 2 the problem is
    non-convex: projected descent runs from the q = 2 eigenvector plus
    seeded random starts, and the best local value is reported together
    with the restart spread.  Never claimed globally optimal.
    """
    if q <= 1.0:
        raise ValueError(f"gap exponent must satisfy q > 1, got {q}")
    if q == 2.0:
        spec = laplacian_spectrum(g, k=2)
        return GapResult(float(spec.eigenvalues[1]), (float(spec.eigenvalues[1]),),
                         None, "eigensolver")
    spec = laplacian_spectrum(g, k=2, eigenvectors=True, seed=seed)
    fiedler = spec.eigenvectors[:, 1]
    m = g.vertex_measure
    rng = np.random.default_rng(seed)
    starts = [fiedler]
    for _ in range(max(0, restarts - 1)):
        v = rng.standard_normal(g.n_vertices)
        v -= float(v @ m)  # de-mean against the vertex measure
        starts.append(v)
    scale = float(np.abs(fiedler).max())
    delta = 1e-9 * max(scale, 1.0) if q < 2.0 else 0.0
    found = []
    best_val = np.inf
    best_f = None
    for v in starts:
        v0 = v / cq_deviation(v, m, q)
        try:
            res = minimize(
                _gap_value_and_grad, v0, args=(g, q, delta),
                jac=True, method="L-BFGS-B",
                options={"maxiter": 400, "ftol": 1e-14, "gtol": 1e-12},
            )
            val, _ = _gap_value_and_grad(res.x, g, q, 0.0)
        except Exception:
            val = np.nan
            res = None
        found.append(float(val))
        if res is not None and np.isfinite(val) and val < best_val:
            best_val = float(val)
            best_f = res.x
    if not np.isfinite(best_val):
        raise OptimizationError(
            f"all {len(starts)} restarts failed for q = {q}: values {found}"
        )
    return GapResult(best_val, tuple(found), best_f, "projected-descent")


# ---------------------------------------------------------------------------
# containment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContainmentReport:
    """Nearest-match table for quotient eigenvalues inside a total spectrum."""

    passed: bool
    tol: float
    gaps: np.ndarray
    matches: np.ndarray
    worst: float

    def to_json(self):
        return {
            "passed": self.passed,
            "tol": self.tol,
            "worst_gap": self.worst,
            "table": [
                {"quotient_index": int(i), "nearest_total_index": int(self.matches[i]),
                 "gap": float(self.gaps[i])}
                for i in range(len(self.gaps))
            ],
        }


def containment_check(spec_total: Spectrum, spec_quotient: Spectrum,
                      tol: float) -> ContainmentReport:
    """Check every quotient eigenvalue appears in the total spectrum.

    Both spectra must cover the same eigenvalue range; each quotient value
    is matched to its nearest total value and the largest gap decides.
    """
    tot = spec_total.eigenvalues
    quo = spec_quotient.eigenvalues
    pos = np.searchsorted(tot, quo)
    gaps = np.empty(len(quo))
    matches = np.empty(len(quo), dtype=int)
    for i, lam in enumerate(quo):
        cands = [c for c in (pos[i] - 1, pos[i]) if 0 <= c < len(tot)]
        best = min(cands, key=lambda c: abs(tot[c] - lam))
        matches[i] = best
        gaps[i] = abs(tot[best] - lam)
    worst = float(gaps.max()) if len(gaps) else 0.0
    return ContainmentReport(bool(worst <= tol), tol, gaps, matches, worst)
