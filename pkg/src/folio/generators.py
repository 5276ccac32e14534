"""Generators for the example spaces: spheres, weighted intervals, products.

Every generator emits distance matrices that satisfy the metric axioms as
exact float statements.  Grids use a step snapped to a power-of-two
quantum so differences and path sums are exact; curved metrics are
ceil-snapped onto a fine power-of-two lattice, which preserves the
triangle inequality (ceil(a) <= ceil(b) + ceil(c) whenever a <= b + c)
while perturbing distances by less than 1e-11 of the diameter.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .errors import DimensionError, GenerationError, UnsupportedGeometryError
from .spaces import FiniteMMSpace, snap_distances

# truncation policy for degenerate cosine-power weights: bound the absolute
# weight floor and the step-to-step weight ratio so the symmetrized pencil
# stays well-conditioned
_FLOOR_LOG = 120.0
_RATIO_BOUND = 20.0


def _pow2_step(raw: float, rel: float = 2.0 ** -30) -> float:
    """Snap a positive step onto a power-of-two quantum (relative error <= rel)."""
    quantum = 2.0 ** math.ceil(math.log2(raw * rel))
    return max(round(raw / quantum), 1) * quantum


def _exact_grid(half_width: float, B: int) -> np.ndarray:
    """Symmetric uniform grid whose pairwise differences are exact floats."""
    h = _pow2_step(2.0 * half_width / (B - 1))
    return (np.arange(B) - (B - 1) / 2.0) * h


def _interval_space(t: np.ndarray, weight: np.ndarray, base: int,
                    labels=None) -> FiniteMMSpace:
    dist = np.abs(t[:, None] - t[None, :])
    if labels is None:
        labels = tuple(f"t{i}" for i in range(len(t)))
    w = weight / weight.sum()
    return FiniteMMSpace(labels, dist, w, base, {"kind": "interval", "data": t})


# ---------------------------------------------------------------------------
# spheres
# ---------------------------------------------------------------------------

def _fibonacci_points(N: int, rng) -> np.ndarray:
    i = np.arange(N)
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    z = 1.0 - (2.0 * i + 1.0) / N
    theta = 2.0 * np.pi * i / golden
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    pts = np.stack([s * np.cos(theta), s * np.sin(theta), z], axis=1)
    Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
    Q *= np.sign(np.diag(R))
    return pts @ Q.T


def sphere_mesh(n: int, r: float, N: int, seed: int = 0) -> FiniteMMSpace:
    """N-point mesh of the n-sphere of radius r with geodesic distances.

    n = 1 is an exact regular polygon.  n = 2 uses a Fibonacci lattice
    under a seeded random rotation: the spectral targets at desk scale
    need quasi-uniform coverage, which independent sampling cannot deliver
    at a few thousand points.  Higher n falls back to seeded independent
    uniform points.  Weights are uniform, the base point is the first.
    """
    if n < 1 or r <= 0 or N < n + 2:
        raise ValueError(f"need n >= 1, r > 0, N >= n + 2; got {(n, r, N)}")
    rng = np.random.default_rng(seed)
    if n == 1:
        step = _pow2_step(2.0 * np.pi * r / N)
        k = np.arange(N)
        hops = np.minimum(np.abs(k[:, None] - k[None, :]),
                          N - np.abs(k[:, None] - k[None, :]))
        dist = hops * step
        ang = 2.0 * np.pi * k / N
        pts = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        if n == 2:
            pts = _fibonacci_points(N, rng)
        else:
            pts = rng.standard_normal((N, n + 1))
            pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        gram = pts @ pts.T
        gram = 0.5 * (gram + gram.T)
        dist = r * np.arccos(np.clip(gram, -1.0, 1.0))
        np.fill_diagonal(dist, 0.0)
        dist = snap_distances(dist)
    labels = tuple(f"s{i}" for i in range(N))
    weight = np.full(N, 1.0 / N)
    return FiniteMMSpace(labels, dist, weight, 0,
                         {"kind": "sphere", "data": pts, "radius": float(r), "dim": n})


def sphere_distance_partition(mesh: FiniteMMSpace, bands: int) -> np.ndarray:
    """Bin mesh points by distance to the base point into equal-width bands.

    The binning coordinate is d(base, x) - pi r / 2, spanning
    [-pi r / 2, pi r / 2]; empty bands are dropped and classes renumbered.
    """
    if bands < 1:
        raise ValueError("bands must be at least 1")
    if not mesh.coords or mesh.coords.get("kind") != "sphere":
        raise UnsupportedGeometryError("banded partition requires a sphere mesh")
    r = float(mesh.coords["radius"])
    half = 0.5 * np.pi * r
    p = mesh.dist[mesh.base] - half
    edges = np.linspace(-half, half, bands + 1)
    raw = np.clip(np.searchsorted(edges, p, side="right") - 1, 0, bands - 1)
    used = np.unique(raw)
    remap = np.zeros(bands, dtype=int)
    remap[used] = np.arange(len(used))
    return remap[raw]


# ---------------------------------------------------------------------------
# one-dimensional model spaces
# ---------------------------------------------------------------------------

def _cosine_half_angle(n: int, B: int) -> float:
    """Half-opening of the cosine-power grid, truncated for representability.

    The profile cos^(n-1) underflows near the endpoints for large n, and
    adjacent-node weight ratios blow up the conditioning of the
    symmetrized operator.  Both effects are bounded by capping the log
    weight at -_FLOOR_LOG and the per-step log ratio via _RATIO_BOUND; the
    truncated tail mass is far below every tolerance in use.
    """
    theta_floor = math.acos(math.exp(-_FLOOR_LOG / (n - 1)))
    theta_ratio = math.atan(_RATIO_BOUND * (B - 1) / (math.pi * (n - 1)))
    return min(math.pi / 2.0, theta_floor, theta_ratio)


def interval_quotient(n: int, r: float, B: int) -> FiniteMMSpace:
    """Discrete model of the distance-to-base quotient of the n-sphere.

    A uniform grid on (almost all of) [-pi r / 2, pi r / 2] weighted by
    cos^(n-1)(t / r), the pushforward profile of the uniform sphere
    measure.  With r = sqrt(n - 1) the weights approach the standard
    Gaussian as n grows.
    """
    if n < 2 or B < 3 or r <= 0:
        raise ValueError(f"need n >= 2, B >= 3, r > 0; got {(n, r, B)}")
    theta = _cosine_half_angle(n, B)
    t = _exact_grid(r * theta, B)
    logw = (n - 1) * np.log(np.cos(t / r))
    weight = np.exp(logw - logw.max())
    return _interval_space(t, weight, (B - 1) // 2)


def gaussian_line(variance: float, B: int, cutoff: float) -> FiniteMMSpace:
    """Uniform grid carrying a truncated centered Gaussian weight.

    The grid spans cutoff standard deviations each side (at least 4, so
    the discarded tail mass is below 1e-4 and at the default 6 below
    1e-8).
    """
    if variance <= 0 or B < 3:
        raise ValueError(f"need variance > 0 and B >= 3; got {(variance, B)}")
    if cutoff < 4:
        raise ValueError(f"cutoff must be at least 4 standard deviations, got {cutoff}")
    sigma = math.sqrt(variance)
    t = _exact_grid(cutoff * sigma, B)
    weight = np.exp(-(t * t) / (2.0 * variance))
    return _interval_space(t, weight, (B - 1) // 2)


def interval_grid(half_width: float, B: int, weight=None) -> FiniteMMSpace:
    """Uniform grid on [-half_width, half_width], Lebesgue weight by default."""
    if B < 2 or half_width <= 0:
        raise ValueError(f"need B >= 2 and half_width > 0; got {(B, half_width)}")
    t = _exact_grid(half_width, B)
    w = np.full(B, 1.0 / B) if weight is None else np.asarray(weight, dtype=float)
    return _interval_space(t, w, (B - 1) // 2)


def path_space(N: int, step: float = 1.0, weight=None) -> FiniteMMSpace:
    """Path metric space: N points in a row at a fixed step."""
    if N < 2:
        raise ValueError("path needs at least 2 points")
    h = _pow2_step(step)
    t = np.arange(N) * h
    w = np.full(N, 1.0 / N) if weight is None else np.asarray(weight, dtype=float)
    if w.shape != (N,):
        raise DimensionError("weight length mismatch")
    return _interval_space(t, w, 0, tuple(chr(ord("a") + i) if N <= 26 else f"p{i}"
                                          for i in range(N)))


def cycle_space(N: int, circumference: float = 2.0 * np.pi, seed: int = 0) -> FiniteMMSpace:
    """Regular N-gon with arc-length distances (alias of the 1-sphere mesh)."""
    return sphere_mesh(1, circumference / (2.0 * np.pi), N, seed)


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

def lq_product(Y: FiniteMMSpace, Z: FiniteMMSpace, q: float):
    """Metric product of two spaces with the l_q combination of distances.

    Returns the product space (points ordered Y-major, so (y, z) maps to
    index y * NZ + z) and the canonical partition by Y-fibers.  q may be
    numpy.inf for the max combination.
    """
    if q != np.inf and q < 1.0:
        raise ValueError(f"need q >= 1 or inf, got {q}")
    ny, nz = Y.n_points, Z.n_points
    dY = Y.dist[:, None, :, None]
    dZ = Z.dist[None, :, None, :]
    if q == np.inf:
        dist = np.maximum(dY, dZ).reshape(ny * nz, ny * nz)
    elif q == 1.0:
        dist = snap_distances((dY + dZ).reshape(ny * nz, ny * nz))
    elif q == 2.0:
        dist = snap_distances(np.sqrt(dY * dY + dZ * dZ).reshape(ny * nz, ny * nz))
    else:
        dist = snap_distances((dY ** q + dZ ** q).reshape(ny * nz, ny * nz) ** (1.0 / q))
    weight = np.kron(Y.weight, Z.weight)
    weight = weight / weight.sum()
    labels = tuple(f"{ly}|{lz}" for ly in Y.labels for lz in Z.labels)
    base = Y.base * nz + Z.base
    space = FiniteMMSpace(labels, dist, weight, base)
    partition = np.repeat(np.arange(ny), nz)
    return space, partition


def _neighbor_pairs(space: FiniteMMSpace):
    """Consecutive-node pairs of a 1-D grid or ring, from the coords."""
    if not space.coords:
        raise UnsupportedGeometryError("warped factors need interval or circle coords")
    kind = space.coords.get("kind")
    if kind == "interval":
        order = np.argsort(np.asarray(space.coords["data"], dtype=float))
        return [(int(order[k]), int(order[k + 1])) for k in range(len(order) - 1)]
    if kind == "sphere":
        pts = np.asarray(space.coords["data"], dtype=float)
        if pts.shape[1] != 2:
            raise UnsupportedGeometryError("only 1-sphere factors carry a ring structure")
        order = np.argsort(np.arctan2(pts[:, 1], pts[:, 0]))
        n = len(order)
        return [(int(order[k]), int(order[(k + 1) % n])) for k in range(n)]
    raise UnsupportedGeometryError(f"no neighbor structure for coords kind {kind!r}")


def warped_product(Y: FiniteMMSpace, Z: FiniteMMSpace, w_d, w_m,
                   collapse_tol: float = 1e-12):
    """Warped product of two gridded spaces with distance/measure profiles.

    Curve lengths sqrt(da^2 + w_d(a)^2 db^2) are discretized on the grid
    edges of Y x Z (axis moves plus cell diagonals) and completed to a
    metric by all-pairs shortest paths.  Vertices over w_m = 0 are dropped;
    fibers over w_d = 0 degenerate to points and are merged, realizing the
    pseudo-metric identification.  Returns the space and its partition by
    Y-fibers.
    """
    w_d = np.asarray(w_d, dtype=float)
    w_m = np.asarray(w_m, dtype=float)
    ny, nz = Y.n_points, Z.n_points
    if w_d.shape != (ny,) or w_m.shape != (ny,):
        raise DimensionError("profiles must be tables over the first factor")
    if w_m.max(initial=0.0) <= 0.0:
        raise GenerationError("measure profile must not vanish identically")
    keep_y = np.flatnonzero(w_m > 0.0)
    index = -np.ones((ny, nz), dtype=int)
    verts = []
    for iy in keep_y:
        for iz in range(nz):
            index[iy, iz] = len(verts)
            verts.append((iy, iz))
    nv = len(verts)
    y_pairs = [(a, b) for (a, b) in _neighbor_pairs(Y)
               if index[a, 0] >= 0 and index[b, 0] >= 0]
    z_pairs = _neighbor_pairs(Z)
    rows, cols, lens = [], [], []

    def add_edge(u, v, length):
        rows.append(u)
        cols.append(v)
        lens.append(length)

    for (ya, yb) in y_pairs:
        dy = Y.dist[ya, yb]
        wbar = 0.5 * (w_d[ya] + w_d[yb])
        for iz in range(nz):
            add_edge(index[ya, iz], index[yb, iz], dy)
        for (za, zb) in z_pairs:
            dz = Z.dist[za, zb]
            diag = math.sqrt(dy * dy + (wbar * dz) ** 2)
            add_edge(index[ya, za], index[yb, zb], diag)
            add_edge(index[ya, zb], index[yb, za], diag)
    for iy in keep_y:
        for (za, zb) in z_pairs:
            add_edge(index[iy, za], index[iy, zb], w_d[iy] * Z.dist[za, zb])

    lens = np.asarray(lens)
    scale = float(lens.max())
    quantum = 2.0 ** math.ceil(math.log2(scale * 2.0 ** -40))
    # floor at one quantum: sparse graphs drop explicit zeros, and degenerate
    # fibers are merged below anyway
    lens = np.maximum(np.ceil(lens / quantum), 1.0) * quantum
    graph = sparse.coo_matrix((lens, (rows, cols)), shape=(nv, nv)).tocsr()
    dist = dijkstra(graph, directed=False)
    if not np.all(np.isfinite(dist)):
        raise GenerationError("warped product support is disconnected")

    # merge identified vertices (zero warp collapses whole fibers)
    tol = max(collapse_tol * scale, 4.0 * (ny + nz) * quantum)
    rep = np.arange(nv)
    for u in range(nv):
        if rep[u] != u:
            continue
        close = np.flatnonzero(dist[u] <= tol)
        rep[close[close > u]] = u
    rep = rep[rep]  # collapse any two-step chains
    keep = np.flatnonzero(rep == np.arange(nv))
    lookup = {int(k): i for i, k in enumerate(keep)}
    raw_weight = np.array([w_m[verts[v][0]] * Y.weight[verts[v][0]] * Z.weight[verts[v][1]]
                           for v in range(nv)])
    weight = np.zeros(len(keep))
    for v in range(nv):
        weight[lookup[int(rep[v])]] += raw_weight[v]
    sub = dist[np.ix_(keep, keep)]
    np.fill_diagonal(sub, 0.0)
    y_of = np.array([verts[int(v)][0] for v in keep])
    y_used = np.unique(y_of)
    y_remap = {int(y): i for i, y in enumerate(y_used)}
    partition = np.array([y_remap[int(y)] for y in y_of])
    labels = tuple(f"{Y.labels[verts[int(v)][0]]}*{Z.labels[verts[int(v)][1]]}"
                   for v in keep)
    base_vertex = index[Y.base, Z.base]
    if base_vertex < 0:
        base_vertex = int(keep[0])
    base = lookup[int(rep[base_vertex])]
    space = FiniteMMSpace(labels, sub, weight / weight.sum(), base)
    return space, partition


# ---------------------------------------------------------------------------
# group actions
# ---------------------------------------------------------------------------

def group_quotient(space: FiniteMMSpace, generators) -> np.ndarray:
    """Orbit partition of an action by distance and weight preserving maps.

    Each generator must be a permutation of the points that reproduces the
    distance matrix and the weight vector exactly; anything else is
    rejected naming the first violated pair.  Orbits are closed off by
    union-find over all generators.
    """
    n = space.n_points
    gens = [np.asarray(g, dtype=int) for g in generators]
    for gi, g in enumerate(gens):
        if sorted(g.tolist()) != list(range(n)):
            raise GenerationError(f"generator {gi} is not a permutation of {n} points")
        moved = space.dist[np.ix_(g, g)]
        if not np.array_equal(moved, space.dist):
            bad = np.argwhere(moved != space.dist)[0]
            raise GenerationError(
                f"generator {gi} does not preserve the distance at pair "
                f"({int(bad[0])}, {int(bad[1])})"
            )
        if not np.array_equal(space.weight[g], space.weight):
            bad = int(np.argmax(space.weight[g] != space.weight))
            raise GenerationError(
                f"generator {gi} does not preserve the weight at point {bad}"
            )
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for g in gens:
        for i in range(n):
            a, b = find(i), find(int(g[i]))
            if a != b:
                parent[max(a, b)] = min(a, b)
    roots = np.array([find(i) for i in range(n)])
    _, partition = np.unique(roots, return_inverse=True)
    return partition


def rotation_permutation(N: int, shift: int) -> np.ndarray:
    """Index map of the rotation by ``shift`` steps on an N-gon."""
    return (np.arange(N) + shift) % N


def reflection_permutation(N: int) -> np.ndarray:
    """Index map of the mirror flip of a symmetric N-node grid."""
    return np.arange(N)[::-1].copy()


# ---------------------------------------------------------------------------
# config-driven generation (CLI entry)
# ---------------------------------------------------------------------------

def generate_from_config(cfg: dict):
    """Build (space, partition-or-None) from a JSON-style generator config."""
    kind = cfg.get("kind")
    if kind == "sphere_mesh":
        space = sphere_mesh(int(cfg["n"]), float(cfg["r"]), int(cfg["N"]),
                            int(cfg.get("seed", 0)))
        part = None
        if "bands" in cfg:
            part = sphere_distance_partition(space, int(cfg["bands"]))
        return space, part
    if kind == "interval_quotient":
        return interval_quotient(int(cfg["n"]), float(cfg["r"]), int(cfg["B"])), None
    if kind == "gaussian_line":
        return gaussian_line(float(cfg["variance"]), int(cfg["B"]),
                             float(cfg.get("cutoff", 6.0))), None
    if kind == "lq_product":
        Y, _ = generate_from_config(cfg["Y"])
        Z, _ = generate_from_config(cfg["Z"])
        q = np.inf if cfg["q"] in ("inf", "max") else float(cfg["q"])
        return lq_product(Y, Z, q)
    if kind == "warped_product":
        Y, _ = generate_from_config(cfg["Y"])
        Z, _ = generate_from_config(cfg["Z"])
        w_d = _profile(cfg["w_d"], Y)
        w_m = _profile(cfg["w_m"], Y)
        return warped_product(Y, Z, w_d, w_m)
    if kind == "group_quotient":
        space, _ = generate_from_config(cfg["space"])
        gens = []
        for g in cfg["generators"]:
            if g == "reflection":
                gens.append(reflection_permutation(space.n_points))
            elif isinstance(g, dict) and "rotation" in g:
                gens.append(rotation_permutation(space.n_points, int(g["rotation"])))
            else:
                gens.append(np.asarray(g, dtype=int))
        return space, group_quotient(space, gens)
    if kind == "cycle":
        return cycle_space(int(cfg["N"]), float(cfg.get("circumference", 2 * np.pi)),
                           int(cfg.get("seed", 0))), None
    if kind == "path":
        return path_space(int(cfg["N"]), float(cfg.get("step", 1.0)),
                          cfg.get("weight")), None
    raise GenerationError(f"unknown generator kind {kind!r}")


def _profile(spec, Y: FiniteMMSpace) -> np.ndarray:
    if isinstance(spec, (list, tuple, np.ndarray)):
        return np.asarray(spec, dtype=float)
    t = np.asarray(Y.coords["data"], dtype=float)
    name = spec["profile"]
    r = float(spec.get("r", 1.0))
    if name == "cos":
        return np.cos(t / r)
    if name == "cos_power":
        return np.cos(t / r) ** float(spec["power"])
    if name == "const":
        return np.full(len(t), float(spec.get("value", 1.0)))
    raise GenerationError(f"unknown profile {name!r}")
