"""Exact transportation-problem solver (primal network simplex on the bipartite graph).

Kept free of Python objects so numba can compile it; without numba the same
source runs as plain numpy/Python.

The basis is a spanning tree of ``m + n - 1`` cells over row nodes ``0..m-1``
and column nodes ``m..m+n-1``. Each iteration recomputes node potentials on
the tree, prices cells, and pivots a negative reduced cost in. Compiled code
prices by block search (scan blocks of about sqrt(mn) cells, take the best in
the first block holding a candidate); the numpy path prices every cell at
once and takes the most negative. After a run of degenerate pivots both
switch to Bland's smallest-index rule, which rules out cycling.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


@njit(cache=True)
def _northwest_corner(a, b, bi, bj, bx):
    m = a.shape[0]
    n = b.shape[0]
    s = a.copy()
    d = b.copy()
    i = 0
    j = 0
    for k in range(m + n - 1):
        ship = min(s[i], d[j])
        bi[k] = i
        bj[k] = j
        bx[k] = ship
        s[i] -= ship
        d[j] -= ship
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif s[i] < d[j]:
            i += 1
        else:
            j += 1


@njit(cache=True)
def _tree_potentials(m, n, bi, bj, cost, u, v, parent, parent_arc, depth):
    nn = m + n
    nb = nn - 1
    deg = np.zeros(nn + 1, np.int64)
    for k in range(nb):
        deg[bi[k] + 1] += 1
        deg[m + bj[k] + 1] += 1
    for x in range(nn):
        deg[x + 1] += deg[x]
    adj = np.empty(2 * nb, np.int64)
    fill = deg[:nn].copy()
    for k in range(nb):
        adj[fill[bi[k]]] = k
        fill[bi[k]] += 1
        adj[fill[m + bj[k]]] = k
        fill[m + bj[k]] += 1

    for x in range(nn):
        parent[x] = -2
    queue = np.empty(nn, np.int64)
    queue[0] = 0
    parent[0] = -1
    parent_arc[0] = -1
    depth[0] = 0
    u[0] = 0.0
    head = 0
    tail = 1
    while head < tail:
        x = queue[head]
        head += 1
        for p in range(deg[x], deg[x + 1]):
            k = adj[p]
            if x < m:
                y = m + bj[k]
            else:
                y = bi[k]
            if parent[y] != -2:
                continue
            parent[y] = x
            parent_arc[y] = k
            depth[y] = depth[x] + 1
            if y >= m:
                v[y - m] = cost[bi[k], bj[k]] - u[bi[k]]
            else:
                u[y] = cost[bi[k], bj[k]] - v[bj[k]]
            queue[tail] = y
            tail += 1
    return tail


@njit(cache=True)
def _price_first(cost, u, v, tol):
    m, n = cost.shape
    for i in range(m):
        for j in range(n):
            if cost[i, j] - u[i] - v[j] < -tol:
                return i * n + j
    return -1


@njit(cache=True)
def _price_block(cost, u, v, tol, start, block):
    m, n = cost.shape
    total = m * n
    best = -tol
    enter = -1
    c = start
    seen = 0
    in_block = 0
    while seen < total:
        i = c // n
        j = c - i * n
        r = cost[i, j] - u[i] - v[j]
        if r < best:
            best = r
            enter = c
        c += 1
        if c == total:
            c = 0
        seen += 1
        in_block += 1
        if in_block == block:
            if enter >= 0:
                return enter, c
            in_block = 0
    return enter, c


def _price_full(cost, u, v, tol, start, block):
    reduced = cost - u[:, None] - v[None, :]
    enter = int(np.argmin(reduced))
    if reduced.flat[enter] >= -tol:
        return -1, start
    return enter, start


_price = _price_block if USE_NUMBA else _price_full


@njit(cache=True)
def transport_kernel(a, b, cost, max_iter, tol):
    """Solve min <cost, X> s.t. X 1 = a, X^T 1 = b, X >= 0.

    Returns ``(bi, bj, bx, iterations, status)`` describing the optimal basis;
    ``status`` is 0 on optimality and 1 when ``max_iter`` was hit.
    """
    m = a.shape[0]
    n = b.shape[0]
    nn = m + n
    nb = nn - 1
    bi = np.empty(nb, np.int64)
    bj = np.empty(nb, np.int64)
    bx = np.empty(nb, np.float64)
    _northwest_corner(a, b, bi, bj, bx)

    u = np.zeros(m)
    v = np.zeros(n)
    parent = np.empty(nn, np.int64)
    parent_arc = np.empty(nn, np.int64)
    depth = np.empty(nn, np.int64)
    path_arcs = np.empty(nn, np.int64)
    up_q = np.empty(nn, np.int64)
    up_p = np.empty(nn, np.int64)

    degenerate_run = 0
    bland = False
    start = 0
    block = max(int(np.sqrt(m * n)), 16)
    status = 1
    it = 0
    while it < max_iter:
        it += 1
        _tree_potentials(m, n, bi, bj, cost, u, v, parent, parent_arc, depth)
        if bland:
            enter = _price_first(cost, u, v, tol)
        else:
            enter, start = _price(cost, u, v, tol, start, block)
        if enter < 0:
            status = 0
            break
        p = enter // n
        q = enter % n

        # Tree path from column node q to row node p through their common ancestor.
        x = m + q
        y = p
        nq = 0
        np_ = 0
        while depth[x] > depth[y]:
            up_q[nq] = parent_arc[x]
            nq += 1
            x = parent[x]
        while depth[y] > depth[x]:
            up_p[np_] = parent_arc[y]
            np_ += 1
            y = parent[y]
        while x != y:
            up_q[nq] = parent_arc[x]
            nq += 1
            x = parent[x]
            up_p[np_] = parent_arc[y]
            np_ += 1
            y = parent[y]
        length = 0
        for r in range(nq):
            path_arcs[length] = up_q[r]
            length += 1
        for r in range(np_ - 1, -1, -1):
            path_arcs[length] = up_p[r]
            length += 1

        # Arcs at even positions lose flow, odd positions gain it.
        theta = np.inf
        leave = -1
        leave_key = 0
        for r in range(0, length, 2):
            k = path_arcs[r]
            key = bi[k] * n + bj[k]
            if bx[k] < theta:
                theta = bx[k]
                leave = r
                leave_key = key
            elif bland and bx[k] == theta and key < leave_key:
                leave = r
                leave_key = key
        for r in range(length):
            k = path_arcs[r]
            if r % 2 == 0:
                bx[k] -= theta
            else:
                bx[k] += theta
        k = path_arcs[leave]
        bi[k] = p
        bj[k] = q
        bx[k] = theta

        if theta > 0.0:
            degenerate_run = 0
            bland = False
        else:
            degenerate_run += 1
            if degenerate_run > nn:
                bland = True
    return bi, bj, bx, it, status
