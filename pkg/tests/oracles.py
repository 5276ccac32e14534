"""Independent oracles the test suite checks the library against.

Everything here is deliberately naive: enumeration, quadrature, and direct
formula evaluation, sharing no code path with the implementations under
test.
"""

import itertools

import numpy as np


def ot_cost_by_vertex_enumeration(cost, a, b, feas_tol=1e-12):
    """Exact transportation optimum by enumerating polytope vertices.

    Vertices of the transportation polytope are the basic feasible
    solutions: supports that form spanning trees of the complete bipartite
    graph.  Every (m + n - 1)-subset of cells is tested for spanning-tree
    structure, its unique flow solved by leaf elimination, infeasible trees
    discarded.  Exponential and only usable for m + n <= 9 or so.
    """
    m, n = cost.shape
    cells = [(i, j) for i in range(m) for j in range(n)]
    best = np.inf
    nodes = m + n
    for subset in itertools.combinations(cells, nodes - 1):
        parent = list(range(nodes))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        acyclic = True
        for (i, j) in subset:
            ri, cj = find(i), find(m + j)
            if ri == cj:
                acyclic = False
                break
            parent[max(ri, cj)] = min(ri, cj)
        if not acyclic:
            continue
        roots = {find(v) for v in range(nodes)}
        if len(roots) != 1:
            continue
        # leaf elimination for the unique flow on the tree
        adj = {v: [] for v in range(nodes)}
        for k, (i, j) in enumerate(subset):
            adj[i].append((m + j, k))
            adj[m + j].append((i, k))
        supply = [a[v] if v < m else -b[v - m] for v in range(nodes)]
        flows = [0.0] * len(subset)
        degree = {v: len(adj[v]) for v in range(nodes)}
        removed = [False] * nodes
        stack = [v for v in range(nodes) if degree[v] == 1]
        used = [False] * len(subset)
        while stack:
            v = stack.pop()
            if removed[v]:
                continue
            edge = next(((w, k) for (w, k) in adj[v] if not used[k]), None)
            if edge is None:
                removed[v] = True
                continue
            w, k = edge
            i, j = subset[k]
            f = supply[v] if v < m else -supply[v]
            flows[k] = f
            supply[w] += supply[v]
            supply[v] = 0.0
            used[k] = True
            removed[v] = True
            degree[w] -= 1
            if degree[w] == 1:
                stack.append(w)
        if min(flows) < -feas_tol:
            continue
        val = sum(max(f, 0.0) * cost[i, j] for f, (i, j) in zip(flows, subset))
        best = min(best, val)
    return best


def entropy_by_direct_sum(mu, weight):
    total = 0.0
    for m_i, w_i in zip(mu, weight):
        if m_i > 0:
            total += m_i * np.log(m_i / w_i)
    return total


def dirichlet_q_by_loops(m, w_dense, f, q):
    """Slope-based q-energy evaluated with explicit Python loops."""
    n = len(m)
    total = 0.0
    for i in range(n):
        s2 = 0.0
        for j in range(n):
            s2 += (w_dense[i, j] / m[i]) * (f[j] - f[i]) ** 2
        total += m[i] * s2 ** (q / 2.0)
    return total / q


def sphere_band_masses(n, r, edges):
    """Analytic pushforward masses of the uniform n-sphere measure per band.

    The distance-to-base coordinate p = d - pi r / 2 carries density
    proportional to cos^(n-1)(p / r); masses come from high-resolution
    trapezoid quadrature of the normalized profile.
    """
    grid = np.linspace(-np.pi * r / 2, np.pi * r / 2, 200001)
    density = np.cos(grid / r) ** (n - 1)
    z = np.trapezoid(density, grid)
    masses = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (grid >= lo) & (grid <= hi)
        masses.append(np.trapezoid(density[sel], grid[sel]) / z)
    return np.asarray(masses)


def gaussian_tail_mass(cutoff):
    """Two-sided standard normal tail beyond the cutoff, by erfc."""
    from math import erfc, sqrt

    return erfc(cutoff / sqrt(2.0))


def fisher_information_circle(amplitude, n_quad=200001):
    """Fisher information of rho = (1 + amplitude cos) / Z on the unit-speed circle."""
    theta = np.linspace(0.0, 2.0 * np.pi, n_quad)
    rho = 1.0 + amplitude * np.cos(theta)
    z = np.trapezoid(rho, theta) / (2.0 * np.pi)
    rho = rho / z
    drho = -amplitude * np.sin(theta) / z
    return np.trapezoid(drho ** 2 / rho, theta) / (2.0 * np.pi)
