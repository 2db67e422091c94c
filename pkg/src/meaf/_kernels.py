"""Integer allocation and flow kernels.

The per-user allocation loops and the augmenting-path max-flow are the hot
paths of this package; they are compiled with numba when it is available.
Setting MEAF_BACKEND=python forces the plain-Python fallback (same code,
bit-identical results, much slower).  MEAF_BACKEND=numba demands numba and
fails loudly if it cannot be imported.

All kernels work on int64 arrays only, so results do not depend on the
backend or on floating-point behaviour.
"""

import os

import numpy as np

_VALID_BACKENDS = ("auto", "numba", "python")

_requested = os.environ.get("MEAF_BACKEND", "auto").strip().lower()
if _requested not in _VALID_BACKENDS:
    raise RuntimeError(
        "MEAF_BACKEND must be one of %s, got %r" % ("/".join(_VALID_BACKENDS), _requested)
    )

BACKEND = "python"
if _requested in ("auto", "numba"):
    try:
        from numba import njit as _njit

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise RuntimeError("MEAF_BACKEND=numba but numba is not importable")


def _jit(fn):
    if BACKEND == "numba":
        return _njit(cache=True, nogil=True)(fn)
    return fn


def _carl_impl(demands, caps, pre_indptr, pre_indices, order, debug):
    # Three allocation layers per user: own preinstalled apps, then apps some
    # user already activated, then brand-new apps.  Within a layer the app
    # with the largest remaining capacity is drained first (ties: lowest id).
    n = demands.shape[0]
    m = caps.shape[0]
    rc = caps.copy()
    handled = np.zeros(m, np.int64)
    in_extra = np.zeros(m, np.uint8)
    for j in range(pre_indices.shape[0]):
        in_extra[pre_indices[j]] = 1
    is_pre = np.zeros(m, np.uint8)
    unalloc = np.zeros(n, np.int64)

    cap0 = pre_indices.shape[0] + 2 * n + 16
    f_user = np.empty(cap0, np.int64)
    f_app = np.empty(cap0, np.int64)
    f_amt = np.empty(cap0, np.int64)
    f_new = np.empty(cap0, np.uint8)
    nf = 0

    for pos in range(n):
        u = order[pos]
        if nf + m + 1 > f_user.shape[0]:
            grown = f_user.shape[0]
            while grown < nf + m + 1:
                grown *= 2
            t_i = np.empty(grown, np.int64); t_i[:nf] = f_user[:nf]; f_user = t_i
            t_i = np.empty(grown, np.int64); t_i[:nf] = f_app[:nf]; f_app = t_i
            t_i = np.empty(grown, np.int64); t_i[:nf] = f_amt[:nf]; f_amt = t_i
            t_b = np.empty(grown, np.uint8); t_b[:nf] = f_new[:nf]; f_new = t_b
        lo = pre_indptr[u]
        hi = pre_indptr[u + 1]
        for j in range(lo, hi):
            is_pre[pre_indices[j]] = 1
        remain = demands[u]

        # layer 1: preinstalled apps
        while remain > 0:
            best = -1
            best_rc = np.int64(0)
            for j in range(lo, hi):
                a = pre_indices[j]
                if rc[a] > best_rc:
                    best_rc = rc[a]
                    best = a
            if best < 0:
                break
            alloc = remain if remain < best_rc else best_rc
            rc[best] -= alloc
            handled[best] += alloc
            remain -= alloc
            f_user[nf] = u; f_app[nf] = best; f_amt[nf] = alloc; f_new[nf] = 0
            nf += 1

        # layer 2: apps already activated by someone, not preinstalled here
        while remain > 0:
            best = -1
            best_rc = np.int64(0)
            for a in range(m):
                if in_extra[a] == 1 and is_pre[a] == 0 and rc[a] > best_rc:
                    best_rc = rc[a]
                    best = a
            if best < 0:
                break
            alloc = remain if remain < best_rc else best_rc
            rc[best] -= alloc
            handled[best] += alloc
            remain -= alloc
            f_user[nf] = u; f_app[nf] = best; f_amt[nf] = alloc; f_new[nf] = 1
            nf += 1

        # layer 3: brand-new apps
        while remain > 0:
            best = -1
            best_rc = np.int64(0)
            for a in range(m):
                if in_extra[a] == 0 and is_pre[a] == 0 and rc[a] > best_rc:
                    best_rc = rc[a]
                    best = a
            if best < 0:
                break
            alloc = remain if remain < best_rc else best_rc
            rc[best] -= alloc
            handled[best] += alloc
            remain -= alloc
            in_extra[best] = 1
            f_user[nf] = u; f_app[nf] = best; f_amt[nf] = alloc; f_new[nf] = 1
            nf += 1

        unalloc[u] = remain
        for j in range(lo, hi):
            is_pre[pre_indices[j]] = 0
        if debug != 0:
            for a in range(m):
                if rc[a] < 0 or rc[a] + handled[a] != caps[a]:
                    raise AssertionError("capacity accounting violated")

    return (
        f_user[:nf].copy(),
        f_app[:nf].copy(),
        f_amt[:nf].copy(),
        f_new[:nf].copy(),
        handled,
        rc,
        unalloc,
    )


def _dtas_impl(demands, caps, pre_indptr, pre_indices, order, debug):
    # Phase 1: everyone allocates on preinstalled apps only.  Phase 2: the
    # leftovers first reuse already-activated apps, then install new ones.
    n = demands.shape[0]
    m = caps.shape[0]
    rc = caps.copy()
    handled = np.zeros(m, np.int64)
    in_extra = np.zeros(m, np.uint8)
    for j in range(pre_indices.shape[0]):
        in_extra[pre_indices[j]] = 1
    is_pre = np.zeros(m, np.uint8)
    unalloc = np.zeros(n, np.int64)
    user_remain = np.zeros(n, np.int64)

    cap0 = pre_indices.shape[0] + 2 * n + 16
    f_user = np.empty(cap0, np.int64)
    f_app = np.empty(cap0, np.int64)
    f_amt = np.empty(cap0, np.int64)
    f_new = np.empty(cap0, np.uint8)
    nf = 0

    for pos in range(n):
        u = order[pos]
        if nf + m + 1 > f_user.shape[0]:
            grown = f_user.shape[0]
            while grown < nf + m + 1:
                grown *= 2
            t_i = np.empty(grown, np.int64); t_i[:nf] = f_user[:nf]; f_user = t_i
            t_i = np.empty(grown, np.int64); t_i[:nf] = f_app[:nf]; f_app = t_i
            t_i = np.empty(grown, np.int64); t_i[:nf] = f_amt[:nf]; f_amt = t_i
            t_b = np.empty(grown, np.uint8); t_b[:nf] = f_new[:nf]; f_new = t_b
        lo = pre_indptr[u]
        hi = pre_indptr[u + 1]
        remain = demands[u]
        while remain > 0:
            best = -1
            best_rc = np.int64(0)
            for j in range(lo, hi):
                a = pre_indices[j]
                if rc[a] > best_rc:
                    best_rc = rc[a]
                    best = a
            if best < 0:
                break
            alloc = remain if remain < best_rc else best_rc
            rc[best] -= alloc
            handled[best] += alloc
            remain -= alloc
            f_user[nf] = u; f_app[nf] = best; f_amt[nf] = alloc; f_new[nf] = 0
            nf += 1
        user_remain[u] = remain
        if debug != 0:
            for a in range(m):
                if rc[a] < 0 or rc[a] + handled[a] != caps[a]:
                    raise AssertionError("capacity accounting violated")

    for pos in range(n):
        u = order[pos]
        remain = user_remain[u]
        if remain <= 0:
            continue
        if nf + m + 1 > f_user.shape[0]:
            grown = f_user.shape[0]
            while grown < nf + m + 1:
                grown *= 2
            t_i = np.empty(grown, np.int64); t_i[:nf] = f_user[:nf]; f_user = t_i
            t_i = np.empty(grown, np.int64); t_i[:nf] = f_app[:nf]; f_app = t_i
            t_i = np.empty(grown, np.int64); t_i[:nf] = f_amt[:nf]; f_amt = t_i
            t_b = np.empty(grown, np.uint8); t_b[:nf] = f_new[:nf]; f_new = t_b
        lo = pre_indptr[u]
        hi = pre_indptr[u + 1]
        for j in range(lo, hi):
            is_pre[pre_indices[j]] = 1

        # reuse apps someone already has
        while remain > 0:
            best = -1
            best_rc = np.int64(0)
            for a in range(m):
                if in_extra[a] == 1 and is_pre[a] == 0 and rc[a] > best_rc:
                    best_rc = rc[a]
                    best = a
            if best < 0:
                break
            alloc = remain if remain < best_rc else best_rc
            rc[best] -= alloc
            handled[best] += alloc
            remain -= alloc
            f_user[nf] = u; f_app[nf] = best; f_amt[nf] = alloc; f_new[nf] = 1
            nf += 1

        # install fresh apps while demand is left and capacity exists
        while remain > 0:
            best = -1
            best_rc = np.int64(0)
            for a in range(m):
                if in_extra[a] == 0 and is_pre[a] == 0 and rc[a] > best_rc:
                    best_rc = rc[a]
                    best = a
            if best < 0:
                break
            alloc = remain if remain < best_rc else best_rc
            rc[best] -= alloc
            handled[best] += alloc
            remain -= alloc
            in_extra[best] = 1
            f_user[nf] = u; f_app[nf] = best; f_amt[nf] = alloc; f_new[nf] = 1
            nf += 1

        unalloc[u] = remain
        for j in range(lo, hi):
            is_pre[pre_indices[j]] = 0
        if debug != 0:
            for a in range(m):
                if rc[a] < 0 or rc[a] + handled[a] != caps[a]:
                    raise AssertionError("capacity accounting violated")

    return (
        f_user[:nf].copy(),
        f_app[:nf].copy(),
        f_amt[:nf].copy(),
        f_new[:nf].copy(),
        handled,
        rc,
        unalloc,
    )


def _preonly_impl(demands, caps, pre_indptr, pre_indices):
    # Preinstalled-only greedy in input order; used for tail-drop estimates.
    n = demands.shape[0]
    rc = caps.copy()
    users_short = np.int64(0)
    total_short = np.int64(0)
    for u in range(n):
        lo = pre_indptr[u]
        hi = pre_indptr[u + 1]
        remain = demands[u]
        while remain > 0:
            best = -1
            best_rc = np.int64(0)
            for j in range(lo, hi):
                a = pre_indices[j]
                if rc[a] > best_rc:
                    best_rc = rc[a]
                    best = a
            if best < 0:
                break
            alloc = remain if remain < best_rc else best_rc
            rc[best] -= alloc
            remain -= alloc
        if remain > 0:
            users_short += 1
            total_short += remain
    return users_short, total_short


def _dinic_impl(num_nodes, arc_to, arc_cap, adj_indptr, adj_arcs, src, dst):
    # Shortest-augmenting-path max flow with blocking flows.  Mutates
    # arc_cap in place (residual capacities); returns the flow value.
    level = np.empty(num_nodes, np.int64)
    queue = np.empty(num_nodes, np.int64)
    it = np.empty(num_nodes, np.int64)
    path_arc = np.empty(num_nodes + 1, np.int64)
    path_node = np.empty(num_nodes + 1, np.int64)
    total = np.int64(0)
    big = np.int64(2) ** np.int64(62)

    while True:
        for v in range(num_nodes):
            level[v] = -1
        level[src] = 0
        qh = 0
        qt = 0
        queue[qt] = src
        qt += 1
        while qh < qt:
            v = queue[qh]
            qh += 1
            for idx in range(adj_indptr[v], adj_indptr[v + 1]):
                e = adj_arcs[idx]
                w = arc_to[e]
                if arc_cap[e] > 0 and level[w] < 0:
                    level[w] = level[v] + 1
                    queue[qt] = w
                    qt += 1
        if level[dst] < 0:
            break

        for v in range(num_nodes):
            it[v] = adj_indptr[v]
        v = src
        plen = 0
        path_node[0] = src
        while True:
            if v == dst:
                bott = big
                for i in range(plen):
                    e = path_arc[i]
                    if arc_cap[e] < bott:
                        bott = arc_cap[e]
                for i in range(plen):
                    e = path_arc[i]
                    arc_cap[e] -= bott
                    arc_cap[e ^ 1] += bott
                total += bott
                cut = 0
                while arc_cap[path_arc[cut]] > 0:
                    cut += 1
                plen = cut
                v = path_node[cut]
            else:
                advanced = False
                while it[v] < adj_indptr[v + 1]:
                    e = adj_arcs[it[v]]
                    w = arc_to[e]
                    if arc_cap[e] > 0 and level[w] == level[v] + 1:
                        path_arc[plen] = e
                        plen += 1
                        path_node[plen] = w
                        v = w
                        advanced = True
                        break
                    it[v] += 1
                if not advanced:
                    if v == src:
                        break
                    level[v] = -1
                    plen -= 1
                    v = path_node[plen]
    return total


pure = {
    "carl": _carl_impl,
    "dtas": _dtas_impl,
    "preonly": _preonly_impl,
    "dinic": _dinic_impl,
}

if BACKEND == "numba":
    active = {name: _jit(fn) for name, fn in pure.items()}
else:
    active = dict(pure)

carl_kernel = active["carl"]
dtas_kernel = active["dtas"]
preonly_kernel = active["preonly"]
dinic_kernel = active["dinic"]

_warmed = False


def warmup():
    """Trigger jit compilation on toy inputs so timing runs stay clean."""
    global _warmed
    if _warmed:
        return
    demands = np.array([2, 1], np.int64)
    caps = np.array([2, 2], np.int64)
    indptr = np.array([0, 1, 2], np.int64)
    indices = np.array([0, 1], np.int64)
    order = np.array([0, 1], np.int64)
    carl_kernel(demands, caps, indptr, indices, order, 0)
    dtas_kernel(demands, caps, indptr, indices, order, 0)
    preonly_kernel(demands, caps, indptr, indices)
    arc_to = np.array([1, 0, 2, 1], np.int64)
    arc_cap = np.array([1, 0, 1, 0], np.int64)
    adj_indptr = np.array([0, 1, 3, 4], np.int64)
    adj_arcs = np.array([0, 1, 2, 3], np.int64)
    dinic_kernel(3, arc_to, arc_cap, adj_indptr, adj_arcs, 0, 2)
    _warmed = True
