"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the ``SPATCOV_BACKEND``
environment variable: ``numba`` (default when numba is importable) JIT-compiles
the kernels below, ``numpy`` runs the identical Python definitions uncompiled.
Both paths execute the same statements in the same order, so results agree to
floating-point roundoff; determinism within a backend is exact.

Kernels here are deliberately free of RNG calls: all random variates are drawn
by the callers from keyed substreams and passed in as arrays, which keeps every
sampler bitwise reproducible regardless of scheduling.
"""

import math
import os

import numpy as np

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    _HAVE_NUMBA = False

_requested = os.environ.get("SPATCOV_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ValueError(
        f"SPATCOV_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )
if _requested == "numba" and not _HAVE_NUMBA:
    raise ImportError("SPATCOV_BACKEND=numba but numba is not importable")

USING_NUMBA = (_requested == "numba") or (_requested == "" and _HAVE_NUMBA)


def _compile(fn):
    if USING_NUMBA:
        return _njit(cache=True, nogil=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# spatial ordering
# ---------------------------------------------------------------------------


def _maximin_order_impl(coords):
    """Greedy max-min ordering of rows of ``coords``.

    Starts at the point nearest the coordinate centroid, then repeatedly picks
    the point maximizing the minimum squared distance to the points already
    chosen. All ties break toward the lowest original index so the output is
    reproducible across platforms.
    """
    n, p = coords.shape
    order = np.empty(n, np.int64)
    chosen = np.zeros(n, np.bool_)

    centroid = np.zeros(p)
    for j in range(n):
        for k in range(p):
            centroid[k] += coords[j, k]
    for k in range(p):
        centroid[k] /= n

    best = 0
    best_d = np.inf
    for j in range(n):
        d = 0.0
        for k in range(p):
            diff = coords[j, k] - centroid[k]
            d += diff * diff
        if d < best_d:
            best_d = d
            best = j
    order[0] = best
    chosen[best] = True

    # min squared distance from each point to the chosen set
    mind = np.empty(n)
    for j in range(n):
        d = 0.0
        for k in range(p):
            diff = coords[j, k] - coords[best, k]
            d += diff * diff
        mind[j] = d

    for step in range(1, n):
        best = -1
        best_d = -1.0
        for j in range(n):
            if chosen[j]:
                continue
            if mind[j] > best_d:
                best_d = mind[j]
                best = j
        order[step] = best
        chosen[best] = True
        for j in range(n):
            if chosen[j]:
                continue
            d = 0.0
            for k in range(p):
                diff = coords[j, k] - coords[best, k]
                d += diff * diff
            if d < mind[j]:
                mind[j] = d
    return order


def _predecessor_neighbors_impl(coords, m):
    """For maximin-ordered ``coords``, nearest-predecessor index sets.

    Returns an ``(n, m)`` int64 array padded with -1; row ``i`` holds the
    ``min(m, i)`` previously-ordered nearest neighbors of point ``i``, sorted
    by increasing squared distance with distance ties broken by lower rank.
    """
    n, p = coords.shape
    nbr = np.full((n, m), -1, np.int64)
    buf_d = np.empty(m)
    buf_j = np.empty(m, np.int64)
    for i in range(1, n):
        k = min(m, i)
        for a in range(k):
            buf_d[a] = np.inf
            buf_j[a] = -1
        for j in range(i):
            d = 0.0
            for c in range(p):
                diff = coords[i, c] - coords[j, c]
                d += diff * diff
            if d < buf_d[k - 1]:
                pos = k - 1
                while pos > 0 and buf_d[pos - 1] > d:
                    buf_d[pos] = buf_d[pos - 1]
                    buf_j[pos] = buf_j[pos - 1]
                    pos -= 1
                buf_d[pos] = d
                buf_j[pos] = j
        for a in range(k):
            nbr[i, a] = buf_j[a]
    return nbr


# ---------------------------------------------------------------------------
# per-column conditional updates for the blocked Gibbs sampler
# ---------------------------------------------------------------------------
#
# With S = diag(sqrt_v) the regression-coefficient posterior precision
# G = V^-1 + X' Lam^-1 X is handled through C = I + S M S, where M is the
# relevant block of the data Gram matrix W = Y' Lam^-1 Y.  C stays
# well-conditioned even when entries of V underflow, and
# log|G^-1| - log|V| = -log|C| cancels the unbounded log|V| term analytically.


def _column_factor_impl(W, col, nbr_row, k, sqrt_v_row, cmat, tvec):
    """Cholesky of C = I + S M S and a = chol^-1 (S * -W[g, col]) for one column.

    Writes the lower Cholesky factor into ``cmat[:k, :k]`` and the solved
    vector into ``tvec[:k]``. Returns (ok, logdet_C, quad) with
    quad = H' G^-1 H.
    """
    for a in range(k):
        ga = nbr_row[a]
        sa = sqrt_v_row[a]
        for b in range(a + 1):
            gb = nbr_row[b]
            val = sa * sqrt_v_row[b] * W[ga, gb]
            if a == b:
                val += 1.0
            cmat[a, b] = val
    logdet = 0.0
    for a in range(k):
        s = cmat[a, a]
        for c in range(a):
            s -= cmat[a, c] * cmat[a, c]
        if s <= 0.0 or not np.isfinite(s):
            return False, 0.0, 0.0
        piv = math.sqrt(s)
        cmat[a, a] = piv
        logdet += 2.0 * math.log(piv)
        for b in range(a + 1, k):
            s = cmat[b, a]
            for c in range(a):
                s -= cmat[b, c] * cmat[a, c]
            cmat[b, a] = s / piv
    quad = 0.0
    for a in range(k):
        s = -sqrt_v_row[a] * W[nbr_row[a], col]
        for c in range(a):
            s -= cmat[a, c] * tvec[c]
        tvec[a] = s / cmat[a, a]
        quad += tvec[a] * tvec[a]
    return True, logdet, quad


def _marginal_pass_impl(W, nbr, lens, sqrt_v, beta, alpha, alpha_tilde, mcap):
    """Integrated log-likelihood of the hyperparameters, summed over columns.

    Omits terms constant in the hyperparameters (the 2*pi and row-covariance
    factors and the log-gamma ratio, which depends only on fixed shapes).
    Returns -inf when any column is numerically unusable, which callers treat
    as a rejected proposal.
    """
    n = W.shape[0]
    cmat = np.empty((mcap, mcap))
    tvec = np.empty(mcap)
    total = 0.0
    for i in range(n):
        bi = beta[i]
        if bi <= 0.0 or not np.isfinite(bi):
            return -np.inf
        k = lens[i]
        if k == 0:
            logdet = 0.0
            quad = 0.0
        else:
            ok, logdet, quad = _column_factor(W, i, nbr[i], k, sqrt_v[i], cmat, tvec)
            if not ok:
                return -np.inf
        bt = bi + 0.5 * (W[i, i] - quad)
        floor = bi * (1.0 + 1e-12)
        if bt < floor:
            bt = floor
        total += -0.5 * logdet + alpha * math.log(bi) - alpha_tilde * math.log(bt)
    if not np.isfinite(total):
        return -np.inf
    return total


def _draw_pass_impl(W, nbr, lens, sqrt_v, beta, gammas, z, u_out, d_out, bt_out, mcap):
    """Draw (u_i, d_i) for every column from the conditional posterior.

    ``gammas`` holds one Gamma(alpha_tilde, 1) variate per column and ``z``
    one standard-normal vector per column; both come from per-column keyed
    substreams so the pass is deterministic. Returns the index of the first
    numerically failing column, or -1 on success.
    """
    n = W.shape[0]
    cmat = np.empty((mcap, mcap))
    tvec = np.empty(mcap)
    wvec = np.empty(mcap)
    for i in range(n):
        k = lens[i]
        if k == 0:
            quad = 0.0
        else:
            ok, _logdet, quad = _column_factor(W, i, nbr[i], k, sqrt_v[i], cmat, tvec)
            if not ok:
                return i
        bt = beta[i] + 0.5 * (W[i, i] - quad)
        floor = beta[i] * (1.0 + 1e-12)
        if bt < floor:
            bt = floor
        bt_out[i] = bt
        d = bt / gammas[i]
        d_out[i] = d
        if k == 0:
            continue
        # posterior mean: b = chol^-T a, mean = S b; noise: S chol^-T z
        sd = math.sqrt(d)
        for a in range(k - 1, -1, -1):
            s1 = tvec[a]
            s2 = z[i, a]
            for c in range(a + 1, k):
                s1 -= cmat[c, a] * tvec[c]
                s2 -= cmat[c, a] * wvec[c]
            tvec[a] = s1 / cmat[a, a]
            wvec[a] = s2 / cmat[a, a]
        for a in range(k):
            u_out[i, a] = sqrt_v[i, a] * (tvec[a] + sd * wvec[a])
    return -1


def _residual_scale_impl(Y, nbr, lens, u, d):
    """Regression residuals r_i = y_i + Y[:, g_i] u_i and sum_i r_i r_i'/d_i."""
    N, n = Y.shape
    R = np.empty((N, n))
    S = np.zeros((N, N))
    for i in range(n):
        for l in range(N):
            R[l, i] = Y[l, i]
        for j in range(lens[i]):
            g = nbr[i, j]
            uv = u[i, j]
            for l in range(N):
                R[l, i] += uv * Y[l, g]
        inv_d = 1.0 / d[i]
        for a in range(N):
            ra = R[a, i] * inv_d
            for b in range(a + 1):
                S[a, b] += ra * R[b, i]
    for a in range(N):
        for b in range(a + 1, N):
            S[a, b] = S[b, a]
    return R, S


def _factor_covariance_impl(nbr, lens, u, d):
    """Dense covariance U^-T D U^-1 from the sparse unit-upper factor (U, D)."""
    n = d.shape[0]
    sigma = np.empty((n, n))
    w = np.empty(n)
    for col in range(n):
        for i in range(n):
            w[i] = 0.0
        w[col] = 1.0
        # w = U^-1 e_col via column-oriented back substitution
        for j in range(col, -1, -1):
            wj = w[j]
            if wj != 0.0:
                for a in range(lens[j]):
                    w[nbr[j, a]] -= u[j, a] * wj
        # solve U' y = D w; row i of U' has entries u[i, :] at columns nbr[i, :]
        for i in range(n):
            acc = d[i] * w[i]
            for a in range(lens[i]):
                acc -= u[i, a] * sigma[nbr[i, a], col]
            sigma[i, col] = acc
    return sigma


# Dispatched names. The marginal/draw passes call _column_factor through this
# module-level binding, which numba resolves lazily at first compilation, so
# the jitted callers link against the jitted callee and the plain callers
# against the plain one.
_maximin_order = _compile(_maximin_order_impl)
_predecessor_neighbors = _compile(_predecessor_neighbors_impl)
_column_factor = _compile(_column_factor_impl)
_marginal_pass = _compile(_marginal_pass_impl)
_draw_pass = _compile(_draw_pass_impl)
_residual_scale = _compile(_residual_scale_impl)
_factor_covariance = _compile(_factor_covariance_impl)
