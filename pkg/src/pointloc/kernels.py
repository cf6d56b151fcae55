"""Hot query-loop kernels.

The adaptive inner loops (ternary sign evaluation, absolute-margin
comparisons, deterministic median selection, ratio bisection, subspace
enumeration) dominate runtime.  They are written in nopython-compatible
Python and jitted with numba by default; setting ``POINTLOC_NUMBA=0``
selects the identical uncompiled code path, so both lanes share one
semantics.  ``benchmarks/bench_kernels.py`` compares the two.

Kernels never touch oracle objects: callers pass the effective hidden
vector and receive exact query counts back for the oracle's accounting.
Comparison queries on x+y / x-y evaluate margins as v_x + v_y (one dot per
candidate, reassociated); the zero floor uses the conservative norm bound
|x| + |y|, which generators keep three orders of magnitude away from any
planted value.
"""

from __future__ import annotations

import math
import os

import numpy as np

_BIG = np.int64(1) << np.int64(62)

STATUS_OK = 0
STATUS_BUDGET = 1
STATUS_RANGE = 2

_requested = os.environ.get("POINTLOC_NUMBA", "1") != "0"
if _requested:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay runnable
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def _jit(fn):
    if NUMBA_ENABLED:
        return _njit(cache=True)(fn)
    return fn


@_jit
def qsign(v, alpha, thr, binary):
    """Oracle answer for a query with raw value v.

    Ternary mode: 0 iff |v| <= thr.  Binary mode: sign(v) off the floor,
    else the sign of non-homogeneous coefficient alpha (the perturbation
    policy maps alpha == 0 to +).
    """
    if v > thr:
        return 1
    if v < -thr:
        return -1
    if binary:
        if alpha >= 0.0:
            return 1
        return -1
    return 0


@_jit
def cmp_abs(vi, vj, ai, aj, thr, binary):
    """Compare |vi| vs |vj| from two sign queries: (a+b)(a-b) = a^2 - b^2."""
    s1 = qsign(vi + vj, ai + aj, thr, binary)
    s2 = qsign(vi - vj, ai - aj, thr, binary)
    return s1 * s2


@_jit
def mom_median(vals, norms, alphas, floor_scale, binary, budget):
    """Index of the ceil(n/2)-th smallest |margin|, lowest index on ties.

    Deterministic BFPRT-style selection: quickselect with a pivot obtained
    by repeated median-of-5 grouping, ordered by cmp_abs with index
    tiebreak.  Returns (index, queries, status); every comparison costs 2
    queries and the kernel stops exactly at the budget boundary.
    """
    n = vals.shape[0]
    queries = np.int64(0)
    if n == 1:
        return np.int64(0), queries, np.int64(STATUS_OK)
    idx = np.empty(n, np.int64)
    for i in range(n):
        idx[i] = i
    scratch = np.empty(n, np.int64)
    lo = np.int64(0)
    hi = np.int64(n)
    k = np.int64((n + 1) // 2 - 1)
    chosen = np.int64(-1)
    failed = False
    while True:
        seglen = hi - lo
        if seglen <= 5:
            # insertion sort idx[lo:hi]
            for i in range(lo + 1, hi):
                key = idx[i]
                j = i - 1
                while j >= lo:
                    if queries + 2 > budget:
                        failed = True
                        break
                    queries += 2
                    other = idx[j]
                    c = cmp_abs(vals[other], vals[key], alphas[other], alphas[key],
                                floor_scale * (norms[other] + norms[key]), binary)
                    greater = c > 0 or (c == 0 and other > key)
                    if not greater:
                        break
                    idx[j + 1] = other
                    j -= 1
                if failed:
                    break
                idx[j + 1] = key
            if failed:
                break
            chosen = idx[lo + k]
            break
        # pivot by repeated grouping into scratch
        m = seglen
        for i in range(seglen):
            scratch[i] = idx[lo + i]
        while m > 5:
            out = np.int64(0)
            g = np.int64(0)
            while g < m:
                end = g + 5
                if end > m:
                    end = m
                for i in range(g + 1, end):
                    key = scratch[i]
                    j = i - 1
                    while j >= g:
                        if queries + 2 > budget:
                            failed = True
                            break
                        queries += 2
                        other = scratch[j]
                        c = cmp_abs(vals[other], vals[key], alphas[other], alphas[key],
                                    floor_scale * (norms[other] + norms[key]), binary)
                        greater = c > 0 or (c == 0 and other > key)
                        if not greater:
                            break
                        scratch[j + 1] = other
                        j -= 1
                    if failed:
                        break
                    scratch[j + 1] = key
                if failed:
                    break
                scratch[out] = scratch[(g + end - 1) // 2]
                out += 1
                g += 5
            if failed:
                break
            m = out
        if failed:
            break
        for i in range(1, m):
            key = scratch[i]
            j = i - 1
            while j >= 0:
                if queries + 2 > budget:
                    failed = True
                    break
                queries += 2
                other = scratch[j]
                c = cmp_abs(vals[other], vals[key], alphas[other], alphas[key],
                            floor_scale * (norms[other] + norms[key]), binary)
                greater = c > 0 or (c == 0 and other > key)
                if not greater:
                    break
                scratch[j + 1] = other
                j -= 1
            if failed:
                break
            scratch[j + 1] = key
        if failed:
            break
        pivot = scratch[(m - 1) // 2]
        # partition idx[lo:hi) around pivot; pivot is unique (index tiebreak)
        ppos = lo
        for i in range(lo, hi):
            if idx[i] == pivot:
                ppos = i
                break
        idx[ppos] = idx[hi - 1]
        idx[hi - 1] = pivot
        store = lo
        for i in range(lo, hi - 1):
            if queries + 2 > budget:
                failed = True
                break
            queries += 2
            cur = idx[i]
            c = cmp_abs(vals[cur], vals[pivot], alphas[cur], alphas[pivot],
                        floor_scale * (norms[cur] + norms[pivot]), binary)
            less = c < 0 or (c == 0 and cur < pivot)
            if less:
                idx[i] = idx[store]
                idx[store] = cur
                store += 1
        if failed:
            break
        idx[hi - 1] = idx[store]
        idx[store] = pivot
        r = store - lo
        if k == r:
            chosen = pivot
            break
        if k < r:
            hi = store
        else:
            k -= r + 1
            lo = store + 1
    if failed:
        return np.int64(-1), queries, np.int64(STATUS_BUDGET)
    # ties break toward the lowest candidate index attaining the median value
    for i in range(n):
        if i == chosen:
            break
        if queries + 2 > budget:
            return np.int64(-1), queries, np.int64(STATUS_BUDGET)
        queries += 2
        c = cmp_abs(vals[i], vals[chosen], alphas[i], alphas[chosen],
                    floor_scale * (norms[i] + norms[chosen]), binary)
        if c == 0:
            chosen = np.int64(i)
            break
    return chosen, queries, np.int64(STATUS_OK)


@_jit
def bisect_ratio(vw, vref, nw, nref, aw, aref, sref, tol, cap,
                 floor_scale, binary, budget):
    """Bracketing search for gamma with <w,h> = gamma * <x_ref,h>.

    Queries sign(<w - alpha*x_ref, h>) over alpha in [-cap, cap] and bisects
    until the bracket width is <= tol, returning the midpoint (achieved
    error <= tol/2).  Returns (gamma, queries, status).
    """
    queries = np.int64(0)
    # g(alpha) = sref * sign(vw - alpha*vref) is nonincreasing in alpha
    if queries + 1 > budget:
        return 0.0, queries, np.int64(STATUS_BUDGET)
    queries += 1
    s_lo = sref * qsign(vw + cap * vref, aw + cap * aref,
                        floor_scale * (nw + cap * nref), binary)
    if s_lo < 0:
        return 0.0, queries, np.int64(STATUS_RANGE)
    if queries + 1 > budget:
        return 0.0, queries, np.int64(STATUS_BUDGET)
    queries += 1
    s_hi = sref * qsign(vw - cap * vref, aw - cap * aref,
                        floor_scale * (nw + cap * nref), binary)
    if s_hi > 0:
        return 0.0, queries, np.int64(STATUS_RANGE)
    if s_lo == 0:
        return -cap, queries, np.int64(STATUS_OK)
    if s_hi == 0:
        return cap, queries, np.int64(STATUS_OK)
    lo = -cap
    hi = cap
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if queries + 1 > budget:
            return 0.0, queries, np.int64(STATUS_BUDGET)
        queries += 1
        s = sref * qsign(vw - mid * vref, aw - mid * aref,
                         floor_scale * (nw + abs(mid) * nref), binary)
        if s == 0:
            return mid, queries, np.int64(STATUS_OK)
        if s > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), queries, np.int64(STATUS_OK)


@_jit
def scan_subspaces(points, weights, mode, member_tol, eq_tol, out_mask):
    """DFS over subspaces spanned by independent point subsets (size < d).

    mode 0: first strict witness (mass > k/d), mode 1: first non-strict
    witness (mass >= k/d - eq_tol), mode 2: first violation of the exact
    isotropic feasibility condition (mass > k/d, or mass == k/d with the
    complement spanning more than d-k dimensions).

    Fills out_mask with span membership of the hit and returns
    (found, span_dim).  Any extremal subspace is a span of points, so the
    enumeration is a sound brute-force oracle at desk scale.
    """
    n, d = points.shape
    basis = np.zeros((d, d))
    choice = np.empty(d, np.int64)
    depth = 0
    nxt = 0
    member = np.zeros(n, np.uint8)
    cbasis = np.zeros((d, d))
    while True:
        if nxt >= n or depth >= d - 1 or depth >= n:
            # backtrack
            if depth == 0:
                return np.int64(0), np.int64(0)
            depth -= 1
            nxt = choice[depth] + 1
            continue
        x = points[nxt]
        # residual of x against basis[0:depth], two passes for stability
        r = x.copy()
        for rep in range(2):
            for b in range(depth):
                dotv = 0.0
                for c in range(d):
                    dotv += r[c] * basis[b, c]
                for c in range(d):
                    r[c] -= dotv * basis[b, c]
        rn = 0.0
        for c in range(d):
            rn += r[c] * r[c]
        rn = math.sqrt(rn)
        if rn <= member_tol:
            nxt += 1
            continue
        for c in range(d):
            basis[depth, c] = r[c] / rn
        choice[depth] = nxt
        k = depth + 1
        # membership mass of the span (explicit residuals: 1 - |proj|^2
        # cancels catastrophically for exact members)
        mass = 0.0
        nm = 0
        for i in range(n):
            rr = points[i].copy()
            for b in range(k):
                dotv = 0.0
                for c in range(d):
                    dotv += rr[c] * basis[b, c]
                for c in range(d):
                    rr[c] -= dotv * basis[b, c]
            rn2 = 0.0
            for c in range(d):
                rn2 += rr[c] * rr[c]
            if math.sqrt(rn2) <= member_tol:
                member[i] = 1
                mass += weights[i]
                nm += 1
            else:
                member[i] = 0
        share = k / d
        hit = False
        if mode == 0:
            hit = mass > share + eq_tol
        elif mode == 1:
            hit = mass >= share - eq_tol
        else:
            if mass > share + eq_tol:
                hit = True
            elif mass >= share - eq_tol:
                # equality: complement must fit in d-k dimensions
                crank = 0
                for i in range(n):
                    if member[i] == 1:
                        continue
                    rr = points[i].copy()
                    for rep in range(2):
                        for b in range(crank):
                            dotv = 0.0
                            for c in range(d):
                                dotv += rr[c] * cbasis[b, c]
                            for c in range(d):
                                rr[c] -= dotv * cbasis[b, c]
                    rrn = 0.0
                    for c in range(d):
                        rrn += rr[c] * rr[c]
                    rrn = math.sqrt(rrn)
                    if rrn > member_tol:
                        for c in range(d):
                            cbasis[crank, c] = rr[c] / rrn
                        crank += 1
                if crank > d - k:
                    hit = True
        if hit:
            for i in range(n):
                out_mask[i] = member[i]
            return np.int64(1), np.int64(k)
        depth += 1
        nxt += 1


def warmup() -> None:
    """Trigger jit compilation of all kernels (no-op on the numpy lane)."""
    vals = np.array([0.3, -0.1, 0.7])
    norms = np.ones(3)
    alphas = np.zeros(3)
    mom_median(vals, norms, alphas, 1e-12, False, _BIG)
    bisect_ratio(0.5, 1.0, 1.0, 1.0, 0.0, 0.0, 1, 1e-3, 2.0, 1e-12, False, _BIG)
    pts = np.eye(3)
    scan_subspaces(pts, np.full(3, 1.0 / 3.0), 0, 1e-9, 1e-9, np.zeros(3, np.uint8))


BIG_BUDGET = _BIG
