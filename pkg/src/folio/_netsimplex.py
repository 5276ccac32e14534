"""Primal network simplex for the dense transportation problem.

Single jitted kernel; the tree is kept as parent / child-sibling links so a
pivot touches only the re-rooted subtree.  Flows are re-derived exactly from
the final tree by leaf elimination, which pins row and column sums to the
inputs at machine precision.  Releases the GIL, so fiber-pair sweeps can fan
out over threads.
"""

import numpy as np
from numba import njit

OPTIMAL = 0
PIVOT_LIMIT = 1


@njit(cache=True, nogil=True)
def transport_simplex(C, a, b, tol, max_pivots):
    """Minimize sum(P * C) over the transportation polytope with marginals a, b.

    Returns (plan, pivots, status).  ``tol`` is the reduced-cost threshold:
    the result is optimal up to ``tol`` times the shipped mass.
    """
    m, n = C.shape
    N = m + n
    parent = np.full(N, -1, np.int64)
    pflow = np.zeros(N)
    first_child = np.full(N, -1, np.int64)
    next_sib = np.full(N, -1, np.int64)
    prev_sib = np.full(N, -1, np.int64)
    depth = np.zeros(N, np.int64)
    u_pot = np.zeros(N)

    # northwest-corner start: each new arc attaches exactly one fresh node
    ra = a.copy()
    rb = b.copy()
    i = 0
    j = 0
    k = 0
    while k < m + n - 1:
        t = ra[i] if ra[i] < rb[j] else rb[j]
        ri = i
        cj = m + j
        if parent[cj] == -1 and cj != 0 and (parent[ri] != -1 or ri == 0):
            ch, pa = cj, ri
        else:
            ch, pa = ri, cj
        parent[ch] = pa
        pflow[ch] = t
        depth[ch] = depth[pa] + 1
        if ch >= m:
            u_pot[ch] = C[pa, ch - m] - u_pot[pa]
        else:
            u_pot[ch] = C[ch, pa - m] - u_pot[pa]
        fc = first_child[pa]
        next_sib[ch] = fc
        prev_sib[ch] = -1
        if fc != -1:
            prev_sib[fc] = ch
        first_child[pa] = ch
        ra[i] -= t
        rb[j] -= t
        k += 1
        if k == m + n - 1:
            break
        if ra[i] <= rb[j] and i < m - 1:
            i += 1
        else:
            j += 1

    mn = m * n
    block = mn // 64 + 1
    if block < 512:
        block = 512 if mn >= 512 else mn
    pos = 0
    pivots = 0
    status = OPTIMAL
    stall = 0
    bland = False
    path_a = np.empty(N, np.int64)
    path_b = np.empty(N, np.int64)
    stack = np.empty(N, np.int64)

    while True:
        # rolling-block pricing: most negative reduced cost within the block.
        # In Bland mode (after a long degenerate stall) take the first
        # negative arc in index order instead, which cannot cycle.
        best = -tol
        bi = -1
        bj = -1
        if bland:
            pos = 0
        scanned = 0
        while scanned < mn:
            hi = pos + block
            if hi > mn:
                hi = mn
            ii = pos // n
            row_end = (ii + 1) * n
            ui = u_pot[ii]
            for f in range(pos, hi):
                if f == row_end:
                    ii += 1
                    row_end += n
                    ui = u_pot[ii]
                jj = f - ii * n
                r = C[ii, jj] - ui - u_pot[m + jj]
                if r < best:
                    best = r
                    bi = ii
                    bj = jj
                    if bland:
                        break
            scanned += hi - pos
            pos = hi if hi < mn else 0
            if bi >= 0:
                break
        if bi < 0:
            break
        if pivots >= max_pivots:
            status = PIVOT_LIMIT
            break
        pivots += 1
        renter = best

        # cycle: depth-aligned walk from both endpoints to their meeting node
        x = bi
        y = m + bj
        la = 0
        lb = 0
        while depth[x] > depth[y]:
            path_a[la] = x
            la += 1
            x = parent[x]
        while depth[y] > depth[x]:
            path_b[lb] = y
            lb += 1
            y = parent[y]
        while x != y:
            path_a[la] = x
            la += 1
            x = parent[x]
            path_b[lb] = y
            lb += 1
            y = parent[y]
        # arcs at even positions run against the cycle direction and lose theta
        theta = 1.0e300
        leave_side = 0
        leave_k = -1
        if bland:
            # lowest node index among blocking arcs: Bland tie-break
            leave_node = -1
            for k2 in range(la):
                if (k2 & 1) == 0:
                    f_ = pflow[path_a[k2]]
                    v_ = path_a[k2]
                    if f_ < theta or (f_ == theta and (leave_node < 0 or v_ < leave_node)):
                        theta = f_
                        leave_side = 0
                        leave_k = k2
                        leave_node = v_
            for k2 in range(lb):
                if (k2 & 1) == 0:
                    f_ = pflow[path_b[k2]]
                    v_ = path_b[k2]
                    if f_ < theta or (f_ == theta and (leave_node < 0 or v_ < leave_node)):
                        theta = f_
                        leave_side = 1
                        leave_k = k2
                        leave_node = v_
        else:
            for k2 in range(la):
                if (k2 & 1) == 0:
                    f_ = pflow[path_a[k2]]
                    if f_ < theta:
                        theta = f_
                        leave_side = 0
                        leave_k = k2
            for k2 in range(lb):
                if (k2 & 1) == 0:
                    f_ = pflow[path_b[k2]]
                    if f_ <= theta:
                        theta = f_
                        leave_side = 1
                        leave_k = k2
        for k2 in range(la):
            if (k2 & 1) == 0:
                pflow[path_a[k2]] -= theta
            else:
                pflow[path_a[k2]] += theta
        for k2 in range(lb):
            if (k2 & 1) == 0:
                pflow[path_b[k2]] -= theta
            else:
                pflow[path_b[k2]] += theta
        w_ = path_a[leave_k] if leave_side == 0 else path_b[leave_k]
        if leave_side == 0:
            enter_sub = bi
            enter_out = m + bj
        else:
            enter_sub = m + bj
            enter_out = bi

        # reverse the parent chain enter_sub .. w_, maintaining child links
        prev = enter_out
        cur = enter_sub
        carry = theta
        while True:
            nxt = parent[cur]
            fsave = pflow[cur]
            if nxt != -1:
                ps = prev_sib[cur]
                ns = next_sib[cur]
                if ps != -1:
                    next_sib[ps] = ns
                else:
                    first_child[nxt] = ns
                if ns != -1:
                    prev_sib[ns] = ps
            parent[cur] = prev
            pflow[cur] = carry
            fc = first_child[prev]
            next_sib[cur] = fc
            prev_sib[cur] = -1
            if fc != -1:
                prev_sib[fc] = cur
            first_child[prev] = cur
            if cur == w_:
                break
            carry = fsave
            prev = cur
            cur = nxt

        # the re-rooted subtree shifts potential by the entering reduced cost,
        # with the sign alternating between the two bipartite sides
        sub_is_row = enter_sub < m
        sp = 0
        stack[sp] = enter_sub
        sp += 1
        depth[enter_sub] = depth[enter_out] + 1
        while sp > 0:
            sp -= 1
            v_ = stack[sp]
            if (v_ < m) == sub_is_row:
                u_pot[v_] += renter
            else:
                u_pot[v_] -= renter
            dv = depth[v_] + 1
            c_ = first_child[v_]
            while c_ != -1:
                depth[c_] = dv
                stack[sp] = c_
                sp += 1
                c_ = next_sib[c_]
        if theta <= 0.0:
            stall += 1
            if stall > 4000:
                bland = True
        else:
            stall = 0

    # exact flow repair: each tree arc carries the net supply of its subtree
    res = np.empty(N)
    for v_ in range(N):
        res[v_] = a[v_] if v_ < m else -b[v_ - m]
    order2 = np.argsort(depth)
    plan = np.zeros((m, n))
    for t_ in range(N - 1, -1, -1):
        v_ = order2[t_]
        p_ = parent[v_]
        if p_ < 0:
            continue
        fl = res[v_] if v_ < m else -res[v_]
        if fl < 0.0:
            fl = 0.0
        if v_ < m:
            plan[v_, p_ - m] = fl
        else:
            plan[p_, v_ - m] = fl
        res[p_] += res[v_]
    return plan, pivots, status
