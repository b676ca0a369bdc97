"""Blocked Gibbs sampler for joint row/column covariance estimation.

One iteration updates, in order:

1. the hyperparameters (marginal variance / range / smoothness surrogates) by
   a robust adaptive Metropolis step on the log scale against their integrated
   likelihood, with the regression coefficients and scales marginalized out,
2. every column's regression coefficients u_i and scale d_i from their
   conjugate normal/inverse-gamma conditional,
3. the row covariance from its inverse-Wishart conditional.

All randomness flows from the run seed through counter-based substreams keyed
by (stream class, iteration, sample, column), so chains are bitwise
reproducible and the per-column updates could be scheduled in any order.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import rngstreams
from ._accel import _draw_pass, _marginal_pass, _residual_scale
from .dists import inverse_wishart_draw
from .matnorm import SparseCholesky, cov_to_corr, factor_to_covariance
from .spatial import MaximinOrdering, build_ordering

#: inverse-gamma prior shape for the per-column scales; fixed by matching the
#: prior mean to the expected conditional-variance decay and the prior sd to
#: half that mean.
PRIOR_SHAPE = 6.0

DEFAULT_PROPOSAL_SHAPE = (
    (0.05, -0.04, 0.0),
    (-0.04, 0.05, 0.0),
    (0.0, 0.0, 0.01),
)


def _default_proposal_shape():
    return np.array(DEFAULT_PROPOSAL_SHAPE)


@dataclass
class GibbsConfig:
    """Sampler settings; everything influencing the chain lives here."""

    seed: int
    iterations: int = 2000
    burn_in: int = 1000
    m: int = 10
    iw_df: float = None  # default N + 2, set at run time
    iw_scale: np.ndarray = None  # default identity
    log_theta_init: tuple = (1.0, -1.0, 0.0)
    proposal_shape_init: np.ndarray = field(default_factory=_default_proposal_shape)
    target_acceptance: float = 0.234
    spatial_dim: int = None  # default: inferred from the coordinates

    def __post_init__(self):
        self.proposal_shape_init = np.asarray(self.proposal_shape_init, dtype=np.float64)
        if self.iw_scale is not None:
            self.iw_scale = np.asarray(self.iw_scale, dtype=np.float64)
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError(
                f"burn_in must lie in [0, iterations), got {self.burn_in} of {self.iterations}"
            )
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError("target_acceptance must be in (0, 1)")
        if len(tuple(self.log_theta_init)) != 3:
            raise ValueError("log_theta_init must have 3 entries")

    def resolve(self, n_genes: int, spatial_dim: int):
        """Fill data-dependent defaults; returns (iw_df, iw_scale, spatial_dim)."""
        nu = float(self.iw_df) if self.iw_df is not None else float(n_genes + 2)
        if nu <= n_genes - 1:
            raise ValueError(f"iw_df must exceed N-1={n_genes - 1} for a proper prior")
        psi = (
            np.eye(n_genes)
            if self.iw_scale is None
            else np.asarray(self.iw_scale, dtype=np.float64)
        )
        if psi.shape != (n_genes, n_genes):
            raise ValueError(f"iw_scale must be {n_genes}x{n_genes}, got {psi.shape}")
        p = int(self.spatial_dim) if self.spatial_dim is not None else int(spatial_dim)
        return nu, psi, p


@dataclass
class ColumnPrior:
    """Normal/inverse-gamma prior pieces for one ordered column."""

    alpha: float
    beta: float
    v_diag: np.ndarray


@dataclass
class ColumnPosterior:
    """Conditional posterior of (u_i, d_i): NIG with these parameters.

    ``sqrt_v`` and ``chol_c`` carry the stable factorization
    g_inv = S C^-1 S (S = diag(sqrt_v), C = I + S X'inv(row_cov)X S) used for
    sampling.
    """

    g_inv: np.ndarray
    h: np.ndarray
    alpha_tilde: float
    beta_tilde: float
    mean: np.ndarray
    sqrt_v: np.ndarray
    chol_c: np.ndarray


def decay_fraction(log_theta, rank: int, spatial_dim: int) -> float:
    """Conditional-variance decay 1 - exp(-theta2 * rank^(-1/p)) at a 1-based rank."""
    th2 = math.exp(log_theta[1])
    return -math.expm1(-th2 * rank ** (-1.0 / spatial_dim))


def column_prior(log_theta, rank: int, spatial_dim: int, n_neighbors: int) -> ColumnPrior:
    """Prior for one column: shape 6, rate 5*theta1*decay, geometric V diagonal.

    ``rank`` is 1-based. Raises if the decay fraction underflows to zero
    (degenerate inverse-gamma rate).
    """
    if rank < 1:
        raise ValueError("rank is 1-based and must be >= 1")
    if n_neighbors < 0:
        raise ValueError("n_neighbors must be >= 0")
    th1 = math.exp(log_theta[0])
    th3 = math.exp(log_theta[2])
    f = decay_fraction(log_theta, rank, spatial_dim)
    beta = 5.0 * th1 * f
    if not beta > 0:
        raise ValueError(
            f"column {rank}: inverse-gamma rate underflowed to {beta} "
            "(range hyperparameter too small)"
        )
    j = np.arange(1, n_neighbors + 1, dtype=np.float64)
    v_diag = np.exp(-th3 * j / f)
    return ColumnPrior(alpha=PRIOR_SHAPE, beta=beta, v_diag=v_diag)


def prior_arrays(log_theta, n: int, spatial_dim: int, m: int):
    """Vectorized (beta, sqrt_v) for all columns; sqrt_v is (n, m).

    Entries of sqrt_v past a column's neighbor count are computed but unused.
    Underflowed entries (exactly zero) pin the matching coefficient to zero,
    which is the correct degenerate limit.
    """
    lt = np.asarray(log_theta, dtype=np.float64)
    th1, th2, th3 = np.exp(lt)
    ranks = np.arange(1, n + 1, dtype=np.float64)
    f = -np.expm1(-th2 * ranks ** (-1.0 / spatial_dim))
    beta = 5.0 * th1 * f
    j = np.arange(1, m + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        sqrt_v = np.exp(-(0.5 * th3) * j[None, :] / f[:, None])
    sqrt_v = np.where(np.isfinite(sqrt_v), sqrt_v, 0.0)
    return np.ascontiguousarray(beta), np.ascontiguousarray(sqrt_v)


def design_matrix(y_ordered, neighbor_ranks) -> np.ndarray:
    """Design matrix for one column: negated expression at the neighbor cells.

    For the first column (no predecessors) this is the N x 0 empty matrix and
    the conditional mean is zero.
    """
    y = np.asarray(y_ordered, dtype=np.float64)
    g = np.asarray(neighbor_ranks, dtype=np.int64)
    if g.size == 0:
        return np.empty((y.shape[0], 0))
    return -y[:, g]


def column_posterior(y_col, x, row_prec, prior: ColumnPrior) -> ColumnPosterior:
    """Conditional NIG posterior for one column given the row precision.

    Computed through C = I + S X'row_prec X S with S = diag(sqrt(v)), which
    stays well-conditioned however small the prior variances get.
    """
    y_col = np.asarray(y_col, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    row_prec = np.asarray(row_prec, dtype=np.float64)
    n_genes = y_col.shape[0]
    k = x.shape[1]
    if len(prior.v_diag) != k:
        raise ValueError(f"prior has {len(prior.v_diag)} variances for {k} regressors")
    alpha_tilde = prior.alpha + 0.5 * n_genes
    py = row_prec @ y_col
    y_quad = float(y_col @ py)
    if k == 0:
        beta_tilde = prior.beta + 0.5 * y_quad
        empty = np.empty(0)
        return ColumnPosterior(
            g_inv=np.empty((0, 0)),
            h=empty,
            alpha_tilde=alpha_tilde,
            beta_tilde=max(beta_tilde, prior.beta * (1.0 + 1e-12)),
            mean=empty,
            sqrt_v=empty,
            chol_c=np.empty((0, 0)),
        )
    s = np.sqrt(prior.v_diag)
    h = x.T @ py
    mmat = x.T @ (row_prec @ x)
    cmat = np.eye(k) + s[:, None] * mmat * s[None, :]
    try:
        chol_c = np.linalg.cholesky(cmat)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("column posterior precision is not SPD") from exc
    t = s * h
    a = solve_triangular(chol_c, t, lower=True)
    b = solve_triangular(chol_c.T, a, lower=False)
    mean = s * b
    beta_tilde = prior.beta + 0.5 * (y_quad - float(a @ a))
    beta_tilde = max(beta_tilde, prior.beta * (1.0 + 1e-12))
    cinv = solve_triangular(chol_c.T, solve_triangular(chol_c, np.eye(k), lower=True), lower=False)
    g_inv = s[:, None] * cinv * s[None, :]
    return ColumnPosterior(
        g_inv=g_inv,
        h=h,
        alpha_tilde=alpha_tilde,
        beta_tilde=beta_tilde,
        mean=mean,
        sqrt_v=s,
        chol_c=chol_c,
    )


def sample_column(post: ColumnPosterior, rng):
    """Draw (u_i, d_i): the scale first, then the coefficients given the scale."""
    d = post.beta_tilde / rng.standard_gamma(post.alpha_tilde)
    k = post.mean.shape[0]
    if k == 0:
        return np.empty(0), float(d)
    z = rng.standard_normal(k)
    w = solve_triangular(post.chol_c.T, z, lower=False)
    u = post.mean + math.sqrt(d) * post.sqrt_v * w
    return u, float(d)


def sample_lambda(residuals, d, psi, nu, rng) -> np.ndarray:
    """Row-covariance conditional: inverse-Wishart with accumulated residual scale.

    The scale matrix is psi + sum_i r_i r_i' / d_i and the degrees of freedom
    are n + nu.
    """
    r = np.asarray(residuals, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("all scales d_i must be positive")
    scale = np.asarray(psi, dtype=np.float64) + (r / d) @ r.T
    scale = 0.5 * (scale + scale.T)
    return inverse_wishart_draw(r.shape[1] + nu, scale, rng)


def _gram(lam_chol, y_ordered):
    half = solve_triangular(lam_chol, y_ordered, lower=True)
    return np.ascontiguousarray(half.T @ half)


def marginal_loglik_theta(
    y_ordered, ordering: MaximinOrdering, row_cov, log_theta, spatial_dim: int
) -> float:
    """Integrated log likelihood of the hyperparameters given the row covariance.

    Per column: 0.5 log|G^-1| - 0.5 log|V| + alpha log beta
    - alpha_tilde log beta_tilde + lgamma(alpha_tilde) - lgamma(alpha).
    Terms shared by every hyperparameter value (the 2*pi and row-covariance
    normalizers) are dropped; the result feeds Metropolis ratios.
    """
    y = np.asarray(y_ordered, dtype=np.float64)
    n_genes, n = y.shape
    lam_chol = np.linalg.cholesky(np.asarray(row_cov, dtype=np.float64))
    gram = _gram(lam_chol, y)
    beta, sqrt_v = prior_arrays(log_theta, n, spatial_dim, ordering.m)
    alpha_tilde = PRIOR_SHAPE + 0.5 * n_genes
    base = _marginal_pass(
        gram,
        ordering.neighbors,
        ordering.neighbor_counts(),
        sqrt_v,
        beta,
        PRIOR_SHAPE,
        alpha_tilde,
        ordering.m,
    )
    if not np.isfinite(base):
        return -np.inf
    return base + n * (math.lgamma(alpha_tilde) - math.lgamma(PRIOR_SHAPE))


# ---------------------------------------------------------------------------
# robust adaptive Metropolis
# ---------------------------------------------------------------------------


def ram_update(
    log_target,
    x,
    prop_chol,
    step_index: int,
    rng,
    target_accept: float = 0.234,
    adapt: bool = True,
    current_logp: float = None,
):
    """One robust-adaptive-Metropolis step on an arbitrary log target.

    Proposes x + chol @ z, accepts with probability min(1, ratio), and (when
    adapting) rescales the proposal Cholesky along z with gain
    step_index^(-2/3) * (accept_prob - target). Non-finite proposal targets
    count as rejections.

    Returns (x, logp, accepted, accept_prob, prop_chol).
    """
    x = np.asarray(x, dtype=np.float64)
    if current_logp is None:
        current_logp = float(log_target(x))
    z = rng.standard_normal(x.shape[0])
    proposal = x + prop_chol @ z
    logp_prop = float(log_target(proposal))
    log_ratio = logp_prop - current_logp
    if math.isnan(log_ratio):
        accept_prob = 1.0 if logp_prop > -np.inf and current_logp == -np.inf else 0.0
    elif log_ratio >= 0:
        accept_prob = 1.0
    else:
        accept_prob = math.exp(log_ratio)
    accepted = rng.uniform() < accept_prob
    if accepted:
        x, current_logp = proposal, logp_prop
    if adapt:
        znorm2 = float(z @ z)
        if znorm2 > 0:
            eta = min(1.0, step_index ** (-2.0 / 3.0))
            coef = eta * (accept_prob - target_accept)
            bump = np.eye(x.shape[0]) + coef * np.outer(z, z) / znorm2
            shape = prop_chol @ bump @ prop_chol.T
            prop_chol = np.linalg.cholesky(0.5 * (shape + shape.T))
    return x, current_logp, accepted, accept_prob, prop_chol


@dataclass
class ChainState:
    """Mutable state of one Gibbs chain."""

    log_theta: np.ndarray
    lam: np.ndarray
    chol: SparseCholesky = None
    loglik: float = -np.inf
    iteration: int = 0
    proposal_chol: np.ndarray = None

    @property
    def proposal_shape(self) -> np.ndarray:
        return self.proposal_chol @ self.proposal_chol.T


def adaptive_metropolis_step(
    state: ChainState,
    y_ordered_list,
    orderings,
    spatial_dim: int,
    rng,
    target_accept: float = 0.234,
    adapt: bool = True,
):
    """RAM update of the log hyperparameters given the current row covariance.

    Mutates ``state`` in place and returns (accepted, accept_prob).
    """

    def log_target(log_theta):
        total = 0.0
        for y, ordering in zip(y_ordered_list, orderings):
            val = marginal_loglik_theta(y, ordering, state.lam, log_theta, spatial_dim)
            if not np.isfinite(val):
                return -np.inf
            total += val
        return total

    x, _, accepted, prob, chol = ram_update(
        log_target,
        state.log_theta,
        state.proposal_chol,
        max(state.iteration, 1),
        rng,
        target_accept=target_accept,
        adapt=adapt,
    )
    state.log_theta = x
    state.proposal_chol = chol
    return accepted, prob


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------


@dataclass
class PosteriorSamples:
    """Post-burn-in draws plus full traces from one chain.

    Column-indexed quantities (u/d draws, orderings) live in maximin order;
    the summary methods translate back to the original cell order.
    """

    n_genes: int
    n_cells: list
    seed: int
    iterations: int
    burn_in: int
    m: int
    orderings: list
    log_theta_trace: np.ndarray
    loglik_trace: np.ndarray
    accepted: np.ndarray
    lambda_draws: np.ndarray
    u_draws: list
    d_draws: list
    config: GibbsConfig

    @property
    def n_samples(self) -> int:
        return len(self.n_cells)

    @property
    def n_kept(self) -> int:
        return self.lambda_draws.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))

    def theta_trace(self) -> np.ndarray:
        return np.exp(self.log_theta_trace)

    def factor_draw(self, t: int, sample: int = 0) -> SparseCholesky:
        ordering = self.orderings[sample]
        return SparseCholesky(
            indices=ordering.neighbors.copy(),
            values=self.u_draws[sample][t].copy(),
            diag=self.d_draws[sample][t].copy(),
            lens=ordering.neighbor_counts(),
        )

    def row_cov_mean(self) -> np.ndarray:
        return self.lambda_draws.mean(axis=0)

    def row_precision_mean(self) -> np.ndarray:
        out = np.zeros((self.n_genes, self.n_genes))
        for draw in self.lambda_draws:
            out += np.linalg.inv(draw)
        return out / self.n_kept

    def row_corr_mean(self) -> np.ndarray:
        out = np.zeros((self.n_genes, self.n_genes))
        for draw in self.lambda_draws:
            out += cov_to_corr(draw)
        return out / self.n_kept

    def _col_mean(self, sample, stride, transform, desk_limit):
        ordering = self.orderings[sample]
        n = self.n_cells[sample]
        acc = np.zeros((n, n))
        count = 0
        for t in range(0, self.n_kept, stride):
            sig = factor_to_covariance(self.factor_draw(t, sample), desk_limit)
            acc += transform(sig)
            count += 1
        acc /= count
        out = np.empty_like(acc)
        out[np.ix_(ordering.order, ordering.order)] = acc
        return out

    def col_cov_mean(self, sample: int = 0, stride: int = 1, desk_limit: int = 5000):
        """Posterior mean column covariance, in original cell order."""
        return self._col_mean(sample, stride, lambda s: s, desk_limit)

    def col_corr_mean(self, sample: int = 0, stride: int = 1, desk_limit: int = 5000):
        """Posterior mean column correlation, in original cell order."""
        return self._col_mean(sample, stride, cov_to_corr, desk_limit)


def _as_dataset_arrays(dataset):
    y = np.ascontiguousarray(np.asarray(dataset.expression, dtype=np.float64))
    coords = np.asarray(dataset.coords, dtype=np.float64)
    ordering = getattr(dataset, "ordering", None)
    return y, coords, ordering


def run_gibbs(dataset, config: GibbsConfig) -> PosteriorSamples:
    """Run the blocked Gibbs sampler on one sample.

    ``dataset`` needs ``expression`` (genes x cells), ``coords`` (cells x p),
    and optionally a cached ``ordering``. Fully deterministic given
    ``config.seed``.
    """
    return run_gibbs_multi([dataset], config)


def run_gibbs_multi(datasets, config: GibbsConfig) -> PosteriorSamples:
    """Run the sampler on R samples sharing the gene set and the row covariance.

    Each sample keeps its own maximin ordering, columns, and factor; the row
    covariance pools residuals across samples and the hyperparameters are
    shared through the product of the per-sample integrated likelihoods.
    """
    if not datasets:
        raise ValueError("at least one dataset is required")
    ys, orderings, y_ord = [], [], []
    n_genes = None
    spatial_dim = None
    for idx, ds in enumerate(datasets):
        y, coords, ordering = _as_dataset_arrays(ds)
        if y.ndim != 2:
            raise ValueError(f"sample {idx}: expression must be 2-D")
        if coords.shape[0] != y.shape[1]:
            raise ValueError(
                f"sample {idx}: {y.shape[1]} cells but {coords.shape[0]} coordinate rows"
            )
        if n_genes is None:
            n_genes = y.shape[0]
            spatial_dim = coords.shape[1]
        elif y.shape[0] != n_genes:
            raise ValueError(
                f"sample {idx} has {y.shape[0]} genes, expected {n_genes}; "
                "multi-sample runs share one gene set"
            )
        if ordering is None or ordering.m != config.m:
            ordering = build_ordering(coords, config.m)
        ys.append(y)
        orderings.append(ordering)
        y_ord.append(np.ascontiguousarray(y[:, ordering.order]))

    nu, psi, p = config.resolve(n_genes, spatial_dim)
    n_list = [y.shape[1] for y in ys]
    n_total = sum(n_list)
    m = config.m
    alpha_tilde = PRIOR_SHAPE + 0.5 * n_genes
    seed = int(config.seed)

    state = ChainState(
        log_theta=np.asarray(config.log_theta_init, dtype=np.float64).copy(),
        lam=(psi / (nu - n_genes - 1) if nu > n_genes + 1 else psi.copy()),
        proposal_chol=np.linalg.cholesky(config.proposal_shape_init),
    )

    iters, burn = config.iterations, config.burn_in
    kept = iters - burn
    log_theta_trace = np.empty((iters, 3))
    loglik_trace = np.empty(iters)
    accepted_trace = np.zeros(iters, dtype=bool)
    lambda_draws = np.empty((kept, n_genes, n_genes))
    u_draws = [np.zeros((kept, n, m)) for n in n_list]
    d_draws = [np.empty((kept, n)) for n in n_list]

    nbrs = [o.neighbors for o in orderings]
    lens = [o.neighbor_counts() for o in orderings]
    streams = rngstreams.Substreams(seed)

    def marginal_total(grams, log_theta):
        total = 0.0
        for r in range(len(ys)):
            beta, sqrt_v = prior_arrays(log_theta, n_list[r], p, m)
            val = _marginal_pass(
                grams[r], nbrs[r], lens[r], sqrt_v, beta, PRIOR_SHAPE, alpha_tilde, m
            )
            if not np.isfinite(val):
                return -np.inf, None
            total += val
        return total, log_theta

    for t in range(1, iters + 1):
        state.iteration = t
        try:
            lam_chol = np.linalg.cholesky(state.lam)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"iteration {t}: row covariance lost definiteness") from exc
        grams = [_gram(lam_chol, y_ord[r]) for r in range(len(ys))]

        # (1) hyperparameters by RAM on the integrated likelihood
        rng_theta = streams.get(rngstreams.THETA, t)
        curr_val, _ = marginal_total(grams, state.log_theta)
        new_lt, _, was_accepted, _prob, new_chol = ram_update(
            lambda lt: marginal_total(grams, lt)[0],
            state.log_theta,
            state.proposal_chol,
            t,
            rng_theta,
            target_accept=config.target_acceptance,
            adapt=(t <= burn),
            current_logp=curr_val,
        )
        state.log_theta = new_lt
        state.proposal_chol = new_chol
        accepted_trace[t - 1] = was_accepted
        log_theta_trace[t - 1] = state.log_theta

        # (2) all (u_i, d_i) given the hyperparameters and row covariance
        resid_scale = np.zeros((n_genes, n_genes))
        resids = []
        u_curr, d_curr = [], []
        for r in range(len(ys)):
            n = n_list[r]
            beta, sqrt_v = prior_arrays(state.log_theta, n, p, m)
            gammas = np.empty(n)
            z = np.zeros((n, m))
            lens_r = lens[r]
            for i in range(n):
                rng_i = streams.get(rngstreams.COLUMNS, t, rngstreams.column_path(r, i))
                gammas[i] = rng_i.standard_gamma(alpha_tilde)
                k = lens_r[i]
                if k:
                    z[i, :k] = rng_i.standard_normal(k)
            u = np.zeros((n, m))
            d = np.empty(n)
            bt = np.empty(n)
            fail = _draw_pass(
                grams[r], nbrs[r], lens_r, sqrt_v, beta, gammas, z, u, d, bt, m
            )
            if fail >= 0:
                raise RuntimeError(
                    f"iteration {t}, sample {r}, column {fail}: "
                    "conditional posterior precision was not SPD"
                )
            rmat, smat = _residual_scale(y_ord[r], nbrs[r], lens_r, u, d)
            resid_scale += smat
            resids.append((rmat, d))
            u_curr.append(u)
            d_curr.append(d)

        # (3) row covariance from its inverse-Wishart conditional
        rng_lam = streams.get(rngstreams.LAMBDA, t)
        scale = psi + resid_scale
        scale = 0.5 * (scale + scale.T)
        try:
            state.lam = inverse_wishart_draw(n_total + nu, scale, rng_lam)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"iteration {t}: residual scale matrix not SPD") from exc

        lam_chol_new = np.linalg.cholesky(state.lam)
        logdet_lam = 2.0 * float(np.sum(np.log(np.diag(lam_chol_new))))
        loglik = 0.0
        for r, (rmat, d) in enumerate(resids):
            white = solve_triangular(lam_chol_new, rmat, lower=True)
            quad = float(np.sum((white * white).sum(axis=0) / d))
            n = n_list[r]
            loglik += (
                -0.5 * n_genes * n * math.log(2.0 * math.pi)
                - 0.5 * n_genes * float(np.sum(np.log(d)))
                - 0.5 * n * logdet_lam
                - 0.5 * quad
            )
        loglik_trace[t - 1] = loglik
        state.loglik = loglik

        if t > burn:
            j = t - burn - 1
            lambda_draws[j] = state.lam
            for r in range(len(ys)):
                u_draws[r][j] = u_curr[r]
                d_draws[r][j] = d_curr[r]

    return PosteriorSamples(
        n_genes=n_genes,
        n_cells=n_list,
        seed=seed,
        iterations=iters,
        burn_in=burn,
        m=m,
        orderings=orderings,
        log_theta_trace=log_theta_trace,
        loglik_trace=loglik_trace,
        accepted=accepted_trace,
        lambda_draws=lambda_draws,
        u_draws=u_draws,
        d_draws=d_draws,
        config=config,
    )
