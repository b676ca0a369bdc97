"""Matrix-normal densities, KL divergences, and sparse Cholesky factors.

Two triangular conventions coexist and are related by index reversal:

* ``SparseLowerFactor``: a lower-triangular factor L with column support
  s_i in {i..n-1}, the KL-optimal approximation of a precision matrix for a
  fixed sparsity pattern (``kl_optimal_factor``).
* ``SparseCholesky``: the modified decomposition precision = U D^-1 U', with
  U unit upper triangular over maximin-ordered columns. All sampler outputs
  use this form.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from ._accel import _factor_covariance

#: dense (n x n) materialization is refused above this size unless overridden
DESK_LIMIT = 5000


def _check_desk_scale(n, desk_limit):
    if n > desk_limit:
        raise ValueError(
            f"refusing to materialize a dense {n}x{n} matrix "
            f"(desk_limit={desk_limit}); pass a larger desk_limit to override"
        )


@dataclass(frozen=True)
class MatrixNormalParams:
    """Mean and row/column covariances of an N x n matrix-normal distribution."""

    mean: np.ndarray
    row_cov: np.ndarray
    col_cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        row = np.asarray(self.row_cov, dtype=np.float64)
        col = np.asarray(self.col_cov, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "row_cov", row)
        object.__setattr__(self, "col_cov", col)
        if mean.shape != (row.shape[0], col.shape[0]):
            raise ValueError(
                f"mean shape {mean.shape} does not match row/col covariances "
                f"{row.shape[0]}x{col.shape[0]}"
            )

    @property
    def n_rows(self) -> int:
        return self.row_cov.shape[0]

    @property
    def n_cols(self) -> int:
        return self.col_cov.shape[0]


@dataclass
class SparseCholesky:
    """Sparse modified Cholesky factor: precision = U D^-1 U'.

    ``indices``/``values`` are (n, m) arrays padded with -1 / 0; row i holds
    the predecessor ranks and the off-diagonal entries of column i of the unit
    upper-triangular U. ``diag`` holds the positive d_i.
    """

    indices: np.ndarray
    values: np.ndarray
    diag: np.ndarray
    lens: np.ndarray = field(default=None)

    def __post_init__(self):
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.diag = np.ascontiguousarray(self.diag, dtype=np.float64)
        if self.lens is None:
            self.lens = np.sum(self.indices >= 0, axis=1).astype(np.int64)
        else:
            self.lens = np.ascontiguousarray(self.lens, dtype=np.int64)
        n = self.diag.shape[0]
        if self.indices.shape[0] != n or self.values.shape != self.indices.shape:
            raise ValueError("indices/values/diag shapes are inconsistent")
        if np.any(self.diag <= 0):
            raise ValueError("diagonal entries d_i must be positive")
        rows = np.arange(n)[:, None]
        active = self.indices >= 0
        if np.any(self.indices[active] >= np.broadcast_to(rows, self.indices.shape)[active]):
            raise ValueError("off-diagonal indices must be strictly below the column rank")

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    @property
    def m(self) -> int:
        return self.indices.shape[1]

    def dense_unit_upper(self, desk_limit: int = DESK_LIMIT) -> np.ndarray:
        _check_desk_scale(self.n, desk_limit)
        u = np.eye(self.n)
        for i in range(self.n):
            k = self.lens[i]
            u[self.indices[i, :k], i] = self.values[i, :k]
        return u


@dataclass
class SparseLowerFactor:
    """Lower-triangular sparse factor: columns[i] = (support indices, values).

    Support of column i lies in {i..n-1} with i itself first; values include
    the diagonal entry.
    """

    n: int
    columns: list

    def dense(self, desk_limit: int = DESK_LIMIT) -> np.ndarray:
        _check_desk_scale(self.n, desk_limit)
        L = np.zeros((self.n, self.n))
        for i, (idx, vals) in enumerate(self.columns):
            L[idx, i] = vals
        return L


def _chol_logdet(a, what):
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"{what} is not positive definite") from exc
    return chol, 2.0 * float(np.sum(np.log(np.diag(chol))))


def matnorm_logpdf(y, params: MatrixNormalParams) -> float:
    """Log density of the matrix-normal distribution at ``y``.

    Equals the Nn-dimensional multivariate-normal log density of vec(y) with
    covariance kron(col_cov, row_cov), evaluated without forming the Kronecker
    product.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != params.mean.shape:
        raise ValueError(f"y shape {y.shape} != mean shape {params.mean.shape}")
    n_r, n_c = params.n_rows, params.n_cols
    chol_row, logdet_row = _chol_logdet(params.row_cov, "row covariance")
    chol_col, logdet_col = _chol_logdet(params.col_cov, "column covariance")
    resid = y - params.mean
    half = solve_triangular(chol_row, resid, lower=True)
    whitened = solve_triangular(chol_col, half.T, lower=True)
    quad = float(np.sum(whitened * whitened))
    return -0.5 * (
        n_r * n_c * np.log(2.0 * np.pi) + n_r * logdet_col + n_c * logdet_row + quad
    )


def kl_mvn(cov1, cov2) -> float:
    """KL divergence between centered multivariate normals with these covariances."""
    s1 = np.asarray(cov1, dtype=np.float64)
    s2 = np.asarray(cov2, dtype=np.float64)
    if s1.shape != s2.shape or s1.ndim != 2 or s1.shape[0] != s1.shape[1]:
        raise ValueError("covariances must be square and of equal dimension")
    n = s1.shape[0]
    chol1, logdet1 = _chol_logdet(s1, "first covariance")
    chol2, logdet2 = _chol_logdet(s2, "second covariance")
    half = solve_triangular(chol2, chol1, lower=True)
    trace = float(np.sum(half * half))
    kl = 0.5 * (trace + logdet2 - logdet1 - n)
    return max(kl, 0.0)


def kl_matnorm(p: MatrixNormalParams, q: MatrixNormalParams) -> float:
    """KL divergence between two centered matrix-normal distributions.

    Uses tr(A kron B) = tr(A) tr(B), so the Nn x Nn Kronecker covariance is
    never formed.
    """
    for params, name in ((p, "P"), (q, "Q")):
        if np.any(params.mean != 0):
            raise ValueError(f"{name} must be centered (zero mean)")
    if p.n_rows != q.n_rows or p.n_cols != q.n_cols:
        raise ValueError("P and Q dimensions differ")
    n_r, n_c = p.n_rows, p.n_cols
    chol_c1, logdet_c1 = _chol_logdet(p.col_cov, "P column covariance")
    chol_c2, logdet_c2 = _chol_logdet(q.col_cov, "Q column covariance")
    chol_r1, logdet_r1 = _chol_logdet(p.row_cov, "P row covariance")
    chol_r2, logdet_r2 = _chol_logdet(q.row_cov, "Q row covariance")
    half_c = solve_triangular(chol_c2, chol_c1, lower=True)
    half_r = solve_triangular(chol_r2, chol_r1, lower=True)
    trace_c = float(np.sum(half_c * half_c))
    trace_r = float(np.sum(half_r * half_r))
    kl = 0.5 * (
        trace_c * trace_r
        - n_r * (logdet_c1 - logdet_c2)
        - n_c * (logdet_r1 - logdet_r2)
        - n_r * n_c
    )
    return max(kl, 0.0)


def kl_optimal_factor(sigma, sparsity) -> SparseLowerFactor:
    """KL-optimal lower-triangular factor of sigma^-1 for a fixed sparsity pattern.

    ``sparsity`` gives, for each column i, the support indices s_i in
    {i..n-1} with i first. Column i of the returned factor is
    sigma[s_i, s_i]^-1 e_1 / sqrt(e_1' sigma[s_i, s_i]^-1 e_1), which minimizes
    the matrix-normal KL divergence from MN(0, row_cov, sigma) to
    MN(0, row_cov, (L L')^-1) over all factors with that support, for any SPD
    row covariance.
    """
    sig = np.asarray(sigma, dtype=np.float64)
    n = sig.shape[0]
    if sig.shape != (n, n):
        raise ValueError("sigma must be square")
    if len(sparsity) != n:
        raise ValueError(f"sparsity must list {n} column supports")
    columns = []
    for i, raw in enumerate(sparsity):
        idx = np.asarray(raw, dtype=np.int64)
        if idx.size == 0 or idx[0] != i:
            raise ValueError(f"column {i}: support must start with the diagonal index")
        if np.any(idx < i) or np.any(idx >= n) or len(np.unique(idx)) != idx.size:
            raise ValueError(f"column {i}: support must be unique indices in [{i}, {n})")
        block = sig[np.ix_(idx, idx)]
        e1 = np.zeros(idx.size)
        e1[0] = 1.0
        try:
            chol = cho_factor(block, lower=True)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"column {i}: support block not SPD") from exc
        b = cho_solve(chol, e1)
        columns.append((idx, b / np.sqrt(b[0])))
    return SparseLowerFactor(n=n, columns=columns)


def vecchia_factor(sigma, neighbors, desk_limit: int = DESK_LIMIT) -> SparseCholesky:
    """Modified Cholesky factor (U, D) of sigma^-1 under predecessor conditioning.

    ``neighbors`` is the (n, m) padded rank array of a MaximinOrdering for the
    same column ordering as ``sigma``. With full conditioning (m = n-1) the
    result is exact: U D^-1 U' = sigma^-1.
    """
    sig = np.asarray(sigma, dtype=np.float64)
    n = sig.shape[0]
    _check_desk_scale(n, desk_limit)
    nbr = np.asarray(neighbors, dtype=np.int64)
    m = nbr.shape[1]
    lens = np.sum(nbr >= 0, axis=1).astype(np.int64)
    values = np.zeros((n, m))
    diag = np.empty(n)
    for i in range(n):
        k = lens[i]
        if k == 0:
            diag[i] = sig[i, i]
            continue
        g = nbr[i, :k]
        block = sig[np.ix_(g, g)]
        rhs = sig[g, i]
        coef = cho_solve(cho_factor(block, lower=True), rhs)
        values[i, :k] = -coef
        diag[i] = sig[i, i] - float(rhs @ coef)
    return SparseCholesky(indices=nbr.copy(), values=values, diag=diag, lens=lens)


def assemble_precision(chol: SparseCholesky, desk_limit: int = DESK_LIMIT) -> np.ndarray:
    """Dense precision U D^-1 U' from a sparse modified Cholesky factor."""
    _check_desk_scale(chol.n, desk_limit)
    u = chol.dense_unit_upper(desk_limit)
    return (u / chol.diag) @ u.T


def factor_to_covariance(chol: SparseCholesky, desk_limit: int = DESK_LIMIT) -> np.ndarray:
    """Dense covariance U^-T D U^-1 via sparse triangular solves per column."""
    _check_desk_scale(chol.n, desk_limit)
    return _factor_covariance(chol.indices, chol.lens, chol.values, chol.diag)


def cov_to_corr(a) -> np.ndarray:
    """Rescale an SPD matrix to unit diagonal."""
    mat = np.asarray(a, dtype=np.float64)
    d = np.diag(mat)
    if np.any(d <= 0):
        raise ValueError("matrix has nonpositive diagonal entries")
    s = 1.0 / np.sqrt(d)
    corr = mat * s[:, None] * s[None, :]
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def row_ignorance_kl_pair(row_cov, col_cov, lower_factor):
    """KL from the truth to a factor model that ignores vs. keeps row dependence.

    With P = MN(0, row_cov, col_cov) and precision factor L, returns
    (KL(P || MN(0, I, (LL')^-1)), KL(P || MN(0, row_cov, (LL')^-1))). The two
    agree when row_cov is the identity; their difference is
    0.5 * [(tr(row_cov) - N) tr(LL' col_cov) - n log|row_cov|].
    """
    lam = np.asarray(row_cov, dtype=np.float64)
    sig = np.asarray(col_cov, dtype=np.float64)
    if isinstance(lower_factor, SparseLowerFactor):
        L = lower_factor.dense()
    else:
        L = np.asarray(lower_factor, dtype=np.float64)
    n = sig.shape[0]
    kinv = solve_triangular(L, np.eye(n), lower=True)
    model_cov = kinv.T @ kinv  # (L L')^-1
    p = MatrixNormalParams(np.zeros((lam.shape[0], n)), lam, sig)
    q = MatrixNormalParams(np.zeros((lam.shape[0], n)), np.eye(lam.shape[0]), model_cov)
    r = MatrixNormalParams(np.zeros((lam.shape[0], n)), lam, model_cov)
    return kl_matnorm(p, q), kl_matnorm(p, r)
