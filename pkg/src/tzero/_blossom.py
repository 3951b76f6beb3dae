"""Dense O(n^3) weighted blossom kernel (numba).

Maximum-weight matching on a complete graph given as a symmetric integer
weight matrix. Vertices are 1-based internally; indices ``n+1 .. 2n`` hold
contracted blossoms. All recursion of the textbook formulation is unrolled
into explicit stacks so the whole kernel compiles in nopython mode.

Edge weights must be strictly positive; a zero entry means "no edge".
"""

from __future__ import annotations

import numpy as np
from numba import njit

_INF = np.int64(1) << np.int64(62)

# slots of the scalar state vector
_N = 0
_NX = 1
_QH = 2
_QT = 3
_T = 4


@njit(cache=True)
def _e_delta(lab, gu, gv, gw, a, b):
    return lab[gu[a, b]] + lab[gv[a, b]] - gw[a, b] * 2


@njit(cache=True)
def _update_slack(lab, gu, gv, gw, slack, u, x):
    if slack[x] == 0 or _e_delta(lab, gu, gv, gw, u, x) < _e_delta(
        lab, gu, gv, gw, slack[x], x
    ):
        slack[x] = u


@njit(cache=True)
def _set_slack(sc, lab, gu, gv, gw, slack, st, S, x):
    slack[x] = 0
    n = sc[_N]
    for u in range(1, n + 1):
        if gw[u, x] > 0 and st[u] != x and S[st[u]] == 0:
            _update_slack(lab, gu, gv, gw, slack, u, x)


@njit(cache=True)
def _q_push(sc, queue, flower, flen, stack, x):
    n = sc[_N]
    size = queue.shape[0]
    top = 0
    stack[top] = x
    top += 1
    while top > 0:
        top -= 1
        y = stack[top]
        if y <= n:
            queue[sc[_QT] % size] = y
            sc[_QT] += 1
        else:
            for i in range(flen[y] - 1, -1, -1):
                stack[top] = flower[y, i]
                top += 1


@njit(cache=True)
def _set_st(sc, st, flower, flen, stack, x, b):
    n = sc[_N]
    top = 0
    stack[top] = x
    top += 1
    while top > 0:
        top -= 1
        y = stack[top]
        st[y] = b
        if y > n:
            for i in range(flen[y]):
                stack[top] = flower[y, i]
                top += 1


@njit(cache=True)
def _get_pr(flower, flen, b, xr):
    m = flen[b]
    pr = 0
    while flower[b, pr] != xr:
        pr += 1
    if pr % 2 == 1:
        i = 1
        j = m - 1
        while i < j:
            tmp = flower[b, i]
            flower[b, i] = flower[b, j]
            flower[b, j] = tmp
            i += 1
            j -= 1
        return m - pr
    return pr


@njit(cache=True)
def _set_match(sc, gu, gv, match, flower, flen, flower_from, pstack, buf, u0, v0):
    n = sc[_N]
    top = 0
    pstack[top, 0] = u0
    pstack[top, 1] = v0
    top += 1
    while top > 0:
        top -= 1
        u = pstack[top, 0]
        v = pstack[top, 1]
        match[u] = gv[u, v]
        if u > n:
            xr = flower_from[u, gu[u, v]]
            pr = _get_pr(flower, flen, u, xr)
            for i in range(pr):
                pstack[top, 0] = flower[u, i]
                pstack[top, 1] = flower[u, i ^ 1]
                top += 1
            pstack[top, 0] = xr
            pstack[top, 1] = v
            top += 1
            m = flen[u]
            for i in range(m):
                buf[i] = flower[u, (i + pr) % m]
            for i in range(m):
                flower[u, i] = buf[i]


@njit(cache=True)
def _augment(sc, gu, gv, match, pa, st, flower, flen, flower_from, pstack, buf, u, v):
    while True:
        xnv = st[match[u]]
        _set_match(sc, gu, gv, match, flower, flen, flower_from, pstack, buf, u, v)
        if xnv == 0:
            return
        _set_match(
            sc, gu, gv, match, flower, flen, flower_from, pstack, buf, xnv, st[pa[xnv]]
        )
        u = st[pa[xnv]]
        v = xnv


@njit(cache=True)
def _get_lca(sc, match, pa, st, vis, u, v):
    sc[_T] += 1
    t = sc[_T]
    while u != 0 or v != 0:
        if u != 0:
            if vis[u] == t:
                return u
            vis[u] = t
            u = st[match[u]]
            if u != 0:
                u = st[pa[u]]
        u, v = v, u
    return 0


@njit(cache=True)
def _add_blossom(
    sc, lab, gu, gv, gw, match, slack, st, pa, S, flower, flen, flower_from,
    queue, stack, u, lca, v,
):
    n = sc[_N]
    b = n + 1
    while b <= sc[_NX] and st[b] != 0:
        b += 1
    if b > sc[_NX]:
        sc[_NX] += 1
    n_x = sc[_NX]
    lab[b] = 0
    S[b] = 0
    match[b] = match[lca]
    flen[b] = 0
    flower[b, flen[b]] = lca
    flen[b] += 1
    x = u
    while x != lca:
        flower[b, flen[b]] = x
        flen[b] += 1
        y = st[match[x]]
        flower[b, flen[b]] = y
        flen[b] += 1
        _q_push(sc, queue, flower, flen, stack, y)
        x = st[pa[y]]
    i = 1
    j = flen[b] - 1
    while i < j:
        tmp = flower[b, i]
        flower[b, i] = flower[b, j]
        flower[b, j] = tmp
        i += 1
        j -= 1
    x = v
    while x != lca:
        flower[b, flen[b]] = x
        flen[b] += 1
        y = st[match[x]]
        flower[b, flen[b]] = y
        flen[b] += 1
        _q_push(sc, queue, flower, flen, stack, y)
        x = st[pa[y]]
    _set_st(sc, st, flower, flen, stack, b, b)
    for x in range(1, n_x + 1):
        gw[b, x] = 0
        gw[x, b] = 0
    for x in range(1, n + 1):
        flower_from[b, x] = 0
    for i in range(flen[b]):
        xs = flower[b, i]
        for x in range(1, n_x + 1):
            if gw[b, x] == 0 or _e_delta(lab, gu, gv, gw, xs, x) < _e_delta(
                lab, gu, gv, gw, b, x
            ):
                gu[b, x] = gu[xs, x]
                gv[b, x] = gv[xs, x]
                gw[b, x] = gw[xs, x]
                gu[x, b] = gu[x, xs]
                gv[x, b] = gv[x, xs]
                gw[x, b] = gw[x, xs]
        for x in range(1, n + 1):
            if flower_from[xs, x] != 0:
                flower_from[b, x] = xs
    _set_slack(sc, lab, gu, gv, gw, slack, st, S, b)


@njit(cache=True)
def _expand_blossom(
    sc, lab, gu, gv, gw, slack, st, pa, S, flower, flen, flower_from, queue, stack, b
):
    for i in range(flen[b]):
        _set_st(sc, st, flower, flen, stack, flower[b, i], flower[b, i])
    xr = flower_from[b, gu[b, pa[b]]]
    pr = _get_pr(flower, flen, b, xr)
    for i in range(0, pr, 2):
        xs = flower[b, i]
        xns = flower[b, i + 1]
        pa[xs] = gu[xns, xs]
        S[xs] = 1
        S[xns] = 0
        slack[xs] = 0
        _set_slack(sc, lab, gu, gv, gw, slack, st, S, xns)
        _q_push(sc, queue, flower, flen, stack, xns)
    S[xr] = 1
    pa[xr] = pa[b]
    for i in range(pr + 1, flen[b]):
        xs = flower[b, i]
        S[xs] = -1
        _set_slack(sc, lab, gu, gv, gw, slack, st, S, xs)
    st[b] = 0


@njit(cache=True)
def _on_found_edge(
    sc, lab, gu, gv, gw, match, slack, st, pa, S, vis, flower, flen, flower_from,
    queue, stack, pstack, buf, a, c,
):
    eu = gu[a, c]
    ev = gv[a, c]
    u = st[eu]
    v = st[ev]
    if S[v] == -1:
        pa[v] = eu
        S[v] = 1
        nu = st[match[v]]
        slack[v] = 0
        slack[nu] = 0
        S[nu] = 0
        _q_push(sc, queue, flower, flen, stack, nu)
    elif S[v] == 0:
        lca = _get_lca(sc, match, pa, st, vis, u, v)
        if lca == 0:
            _augment(sc, gu, gv, match, pa, st, flower, flen, flower_from, pstack, buf, u, v)
            _augment(sc, gu, gv, match, pa, st, flower, flen, flower_from, pstack, buf, v, u)
            return True
        _add_blossom(
            sc, lab, gu, gv, gw, match, slack, st, pa, S, flower, flen, flower_from,
            queue, stack, u, lca, v,
        )
    return False


@njit(cache=True)
def _stage(
    sc, lab, gu, gv, gw, match, slack, st, pa, S, vis, flower, flen, flower_from,
    queue, stack, pstack, buf,
):
    """One augmentation stage; False once no augmenting path improves weight."""
    n = sc[_N]
    size = queue.shape[0]
    for x in range(1, sc[_NX] + 1):
        S[x] = -1
        slack[x] = 0
    sc[_QH] = 0
    sc[_QT] = 0
    for x in range(1, sc[_NX] + 1):
        if st[x] == x and match[x] == 0:
            pa[x] = 0
            S[x] = 0
            _q_push(sc, queue, flower, flen, stack, x)
    if sc[_QH] == sc[_QT]:
        return False
    while True:
        while sc[_QH] < sc[_QT]:
            u = queue[sc[_QH] % size]
            sc[_QH] += 1
            if S[st[u]] == 1:
                continue
            for v in range(1, n + 1):
                if gw[u, v] > 0 and st[u] != st[v]:
                    if _e_delta(lab, gu, gv, gw, u, v) == 0:
                        if _on_found_edge(
                            sc, lab, gu, gv, gw, match, slack, st, pa, S, vis, flower,
                            flen, flower_from, queue, stack, pstack, buf, u, v,
                        ):
                            return True
                    else:
                        _update_slack(lab, gu, gv, gw, slack, u, st[v])
        n_x = sc[_NX]
        d = _INF
        for b in range(n + 1, n_x + 1):
            if st[b] == b and S[b] == 1:
                d = min(d, lab[b] // 2)
        for x in range(1, n_x + 1):
            if st[x] == x and slack[x] != 0:
                if S[x] == -1:
                    d = min(d, _e_delta(lab, gu, gv, gw, slack[x], x))
                elif S[x] == 0:
                    d = min(d, _e_delta(lab, gu, gv, gw, slack[x], x) // 2)
        for u in range(1, n + 1):
            s = S[st[u]]
            if s == 0:
                if lab[u] <= d:
                    return False
                lab[u] -= d
            elif s == 1:
                lab[u] += d
        for b in range(n + 1, n_x + 1):
            if st[b] == b:
                if S[st[b]] == 0:
                    lab[b] += d * 2
                elif S[st[b]] == 1:
                    lab[b] -= d * 2
        sc[_QH] = 0
        sc[_QT] = 0
        for x in range(1, n_x + 1):
            if (
                st[x] == x
                and slack[x] != 0
                and st[slack[x]] != x
                and _e_delta(lab, gu, gv, gw, slack[x], x) == 0
            ):
                if _on_found_edge(
                    sc, lab, gu, gv, gw, match, slack, st, pa, S, vis, flower, flen,
                    flower_from, queue, stack, pstack, buf, slack[x], x,
                ):
                    return True
        for b in range(n + 1, n_x + 1):
            if st[b] == b and S[b] == 1 and lab[b] == 0:
                _expand_blossom(
                    sc, lab, gu, gv, gw, slack, st, pa, S, flower, flen, flower_from,
                    queue, stack, b,
                )


@njit(cache=True)
def max_weight_matching_dense(w):
    """Maximum-weight matching of the complete graph with weight matrix ``w``.

    ``w`` is an (n, n) symmetric int64 array with positive off-diagonal
    entries. Returns ``mate`` (length n, 0-based, -1 if unmatched).
    """
    n = w.shape[0]
    mate = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return mate
    N = 2 * n + 2
    gu = np.zeros((N, N), dtype=np.int64)
    gv = np.zeros((N, N), dtype=np.int64)
    gw = np.zeros((N, N), dtype=np.int64)
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            gu[i, j] = i
            gv[i, j] = j
            if i != j:
                gw[i, j] = w[i - 1, j - 1]
    lab = np.zeros(N, dtype=np.int64)
    match = np.zeros(N, dtype=np.int64)
    slack = np.zeros(N, dtype=np.int64)
    st = np.zeros(N, dtype=np.int64)
    pa = np.zeros(N, dtype=np.int64)
    S = np.zeros(N, dtype=np.int64)
    vis = np.zeros(N, dtype=np.int64)
    flower = np.zeros((N, N), dtype=np.int64)
    flen = np.zeros(N, dtype=np.int64)
    flower_from = np.zeros((N, n + 1), dtype=np.int64)
    queue = np.zeros(4 * N, dtype=np.int64)
    stack = np.zeros(4 * N, dtype=np.int64)
    pstack = np.zeros((4 * N, 2), dtype=np.int64)
    buf = np.zeros(N, dtype=np.int64)
    sc = np.zeros(5, dtype=np.int64)
    sc[_N] = n
    sc[_NX] = n
    w_max = np.int64(0)
    for u in range(n + 1):
        st[u] = u
    for u in range(1, n + 1):
        flower_from[u, u] = u
        for v in range(1, n + 1):
            if gw[u, v] > w_max:
                w_max = gw[u, v]
    for u in range(1, n + 1):
        lab[u] = w_max
    while _stage(
        sc, lab, gu, gv, gw, match, slack, st, pa, S, vis, flower, flen, flower_from,
        queue, stack, pstack, buf,
    ):
        pass
    for u in range(1, n + 1):
        if match[u] != 0:
            mate[u - 1] = match[u] - 1
    return mate
