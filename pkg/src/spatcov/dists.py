"""Random-matrix draws shared by the sampler and the simulation harness."""

import numpy as np
from scipy.linalg import solve_triangular


def inverse_wishart_draw(df: float, scale, rng) -> np.ndarray:
    """One inverse-Wishart draw with density |X|^-((N+df+1)/2) exp(-tr(scale X^-1)/2).

    Bartlett construction on the Wishart of the inverted scale: with
    B the Bartlett lower-triangular of Wishart(df, I) and scale = Ls Ls',
    the draw is M'M for M = B^-1 Ls'. ``df`` may be non-integer but must
    exceed N - 1.
    """
    s = np.asarray(scale, dtype=np.float64)
    nd = s.shape[0]
    if df <= nd - 1:
        raise ValueError(f"inverse-Wishart df must exceed N-1={nd - 1}, got {df}")
    ls = np.linalg.cholesky(s)
    bart = np.zeros((nd, nd))
    shapes = 0.5 * (df - np.arange(nd))
    bart[np.diag_indices(nd)] = np.sqrt(2.0 * rng.standard_gamma(shapes))
    if nd > 1:
        tril = np.tril_indices(nd, k=-1)
        bart[tril] = rng.standard_normal(len(tril[0]))
    half = solve_triangular(bart, ls.T, lower=True)
    return half.T @ half


def matrix_normal_draw(row_cov, col_cov, rng) -> np.ndarray:
    """One centered matrix-normal draw: chol(row) @ Z @ chol(col)'."""
    lam = np.asarray(row_cov, dtype=np.float64)
    sig = np.asarray(col_cov, dtype=np.float64)
    a = np.linalg.cholesky(lam)
    b = np.linalg.cholesky(sig)
    z = rng.standard_normal((lam.shape[0], sig.shape[0]))
    return a @ z @ b.T
