"""Second-stage transfer for linear regression on extracted features.

Given source coefficients beta1_hat with covariance scale Sigma_hat, the
target responses are residualized to z = y - X beta1_hat, which follows
Normal(X delta, sigma^2 (I + X Sigma_hat X^T)).  A Cholesky whitening
reduces this to spherical noise, after which the difference vector delta
gets either the sparse (local-global scale mixture) prior or the
distance-penalized global prior, sampled by Gibbs chains that share their
scale updates with the means-problem samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats as sps
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .core import EstimateResult, Method, PosteriorDraws, RngStream
from .hs_gibbs import HsOptions, run_kernel, _inv_gamma
from .pcp import PcpOptions, pcp_log_density

__all__ = [
    "RegressionTask",
    "PredictionResult",
    "RegressionFit",
    "residualize",
    "whiten",
    "ols_fit",
    "hs_regression_fit",
    "pcp_regression_fit",
    "load_regression_task",
    "write_predictions",
]

_TINY = 1e-300


@dataclass(frozen=True)
class RegressionTask:
    """Target design and responses plus the source-coefficient summary."""

    X: np.ndarray
    Y: np.ndarray
    beta1_hat: np.ndarray
    Sigma_hat: np.ndarray
    sigma2: Optional[float] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        b1 = np.asarray(self.beta1_hat, dtype=float)
        S = np.asarray(self.Sigma_hat, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        n, p = X.shape
        if Y.shape != (n,):
            raise ValueError("Y length must match rows of X")
        if b1.shape != (p,):
            raise ValueError("beta1_hat length must match columns of X")
        if S.shape != (p, p):
            raise ValueError("Sigma_hat must be p x p")
        if not np.allclose(S, S.T, atol=1e-10):
            raise ValueError("Sigma_hat must be symmetric")
        if self.sigma2 is not None and self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0 when set")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "beta1_hat", b1)
        object.__setattr__(self, "Sigma_hat", S)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class PredictionResult:
    """Predictive means with 95% intervals at held-out design points."""

    mean: np.ndarray
    lower95: np.ndarray
    upper95: np.ndarray

    def __post_init__(self):
        if not (
            np.all(self.lower95 <= self.mean + 1e-9)
            and np.all(self.mean <= self.upper95 + 1e-9)
        ):
            raise ValueError("need lower95 <= mean <= upper95")


@dataclass(frozen=True)
class RegressionFit:
    """Bundle of coefficient estimate, retained draws, and predictions."""

    estimate: EstimateResult
    draws: Optional[PosteriorDraws] = None
    prediction: Optional[PredictionResult] = None


def residualize(task: RegressionTask) -> tuple:
    """Residual vector z = Y - X beta1_hat and its correlation matrix.

    Returns (z, V) with V = I + X Sigma_hat X^T; a failed factorization of V
    means the supplied coefficient covariance is not positive semidefinite.
    """
    z = task.Y - task.X @ task.beta1_hat
    V = task.X @ task.Sigma_hat @ task.X.T
    V = 0.5 * (V + V.T) + np.eye(task.n)
    try:
        cholesky(V, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Sigma_hat not PSD") from exc
    return z, V


def whiten(z: np.ndarray, X: np.ndarray, V: np.ndarray) -> tuple:
    """Transform (z, X) by the inverse Cholesky factor of V.

    After the transform the residual model has spherical noise:
    z_tilde ~ Normal(X_tilde delta, sigma^2 I).
    """
    try:
        L = cholesky(np.asarray(V, dtype=float), lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("V is singular or not positive definite") from exc
    z_t = solve_triangular(L, z, lower=True)
    x_t = solve_triangular(L, X, lower=True)
    return z_t, x_t


def ols_fit(
    task: RegressionTask,
    X_star: Optional[np.ndarray] = None,
    level: float = 0.95,
    allow_minimum_norm: bool = False,
) -> RegressionFit:
    """Ordinary least squares on (X, Y) with t-based prediction intervals.

    Refuses rank-deficient problems (n <= p or collinear columns) unless
    ``allow_minimum_norm`` is set, in which case the minimum-norm solution
    is returned and intervals use the pseudoinverse leverage.
    """
    X, Y = task.X, task.Y
    n, p = X.shape
    rank = np.linalg.matrix_rank(X)
    if rank < p and not allow_minimum_norm:
        raise ValueError(
            f"design is rank deficient (rank {rank} < p={p}, n={n}); "
            "pass allow_minimum_norm=True for the minimum-norm solution"
        )
    beta, _, _, _ = np.linalg.lstsq(X, Y, rcond=None)
    resid = Y - X @ beta
    dof = max(n - rank, 1)
    sigma2_hat = float(resid @ resid) / dof
    gram_inv = np.linalg.pinv(X.T @ X)

    se_beta = np.sqrt(np.maximum(np.diag(gram_inv) * sigma2_hat, 0.0))
    tq = sps.t.ppf(0.5 + level / 2.0, dof)
    est = EstimateResult(
        point=beta,
        method=Method.OLS,
        lower95=beta - tq * se_beta,
        upper95=beta + tq * se_beta,
        diagnostics={"sigma2_hat": sigma2_hat, "rank": float(rank)},
    )
    pred = None
    if X_star is not None:
        X_star = np.asarray(X_star, dtype=float)
        mean = X_star @ beta
        lev = np.einsum("ij,jk,ik->i", X_star, gram_inv, X_star)
        half = tq * np.sqrt(sigma2_hat * (1.0 + np.maximum(lev, 0.0)))
        pred = PredictionResult(mean=mean, lower95=mean - half, upper95=mean + half)
    return RegressionFit(estimate=est, prediction=pred)


def _draw_delta(gen, x_t, z_t, g_mat, b_vec, prior_prec_diag, sigma2):
    """Exact draw from Normal(A^{-1} b, sigma2 A^{-1}), A = X'X + diag(prec).

    Uses the p x p factorization when p is moderate; once p > 4n it switches
    to the n-dimensional dual identity (sample a prior perturbation, correct
    it through the n x n capacitance matrix), which is exact and cheaper.
    """
    n, p = x_t.shape
    if p <= 4 * n:
        A = g_mat + np.diag(prior_prec_diag)
        L = cholesky(A, lower=True)
        mean = cho_solve((L, True), b_vec)
        noise = solve_triangular(L.T, gen.standard_normal(p), lower=False)
        return mean + math.sqrt(sigma2) * noise
    d = 1.0 / prior_prec_diag
    u = np.sqrt(sigma2 * d) * gen.standard_normal(p)
    f = math.sqrt(sigma2) * gen.standard_normal(n)
    v = x_t @ u + f
    M = x_t @ (d[:, None] * x_t.T) + np.eye(n)
    w = np.linalg.solve(M, z_t - v)
    return u + d * (x_t.T @ w)


def hs_regression_fit(
    task: RegressionTask,
    opts: HsOptions,
    rng: RngStream,
    X_star: Optional[np.ndarray] = None,
    level: float = 0.95,
) -> RegressionFit:
    """Sparse-difference fit of the whitened residual regression.

    The difference vector delta has prior Normal(0, sigma^2 tau^2 lambda_j^2)
    per coordinate; its conditional is Normal(A^{-1} Xt' zt, sigma^2 A^{-1})
    with A = Xt' Xt + diag(1/(tau^2 lambda^2)), and the scale updates match
    the means-problem sampler with quadratic forms delta_j^2/(sigma^2 tau^2
    lambda_j^2).  When the whitened design is exactly the identity the
    problem *is* the means problem, and the chain is delegated to the same
    kernel (noise scale c = 1), making the reduction draw-for-draw exact.

    The coefficient estimate is beta1_hat plus the posterior-mean
    difference; predictions at X_star are posterior predictive (new-
    observation noise included).
    """
    z, V = residualize(task)
    z_t, x_t = whiten(z, task.X, V)
    n, p = x_t.shape

    if n == p and np.array_equal(x_t, np.eye(p)):
        draws = run_kernel(z_t, 1.0, opts, rng)
    else:
        draws = _hs_regression_kernel(z_t, x_t, opts, rng)

    delta_mean = draws.draws.mean(axis=0)
    point = task.beta1_hat + delta_mean
    est = EstimateResult(
        point=point,
        method=Method.HS_GIBBS,
        diagnostics={"n_draws": float(draws.n_draws)},
    )
    pred = None
    if X_star is not None:
        pred = _posterior_predictive(
            task, draws, np.asarray(X_star, dtype=float), level, rng.child(0x9E37)
        )
    return RegressionFit(estimate=est, draws=draws, prediction=pred)


def _hs_regression_kernel(z_t, x_t, opts: HsOptions, rng: RngStream) -> PosteriorDraws:
    n, p = x_t.shape
    gen = rng.generator()
    g_mat = x_t.T @ x_t
    b_vec = x_t.T @ z_t

    delta = np.zeros(p)
    lam2 = np.ones(p)
    zeta = np.ones(p)
    nu = 1.0
    tau2 = max(1.0 / p**2, 1e-6)
    denom = max(n, 1)
    sigma2 = max(float(z_t @ z_t) / denom, 1e-8)
    if opts.fix_sigma is not None:
        sigma2 = opts.fix_sigma**2
    if opts.fix_tau is not None:
        tau2 = opts.fix_tau**2

    kept = (opts.iterations - opts.burn_in) // opts.thin
    draws = np.empty((kept, p))
    tau2_s = np.empty(kept)
    sigma2_s = np.empty(kept)
    k = 0
    for it in range(opts.iterations):
        prior_prec = 1.0 / (tau2 * lam2)
        delta = _draw_delta(gen, x_t, z_t, g_mat, b_vec, prior_prec, sigma2)

        if opts.fix_sigma is None:
            resid = z_t - x_t @ delta
            quad = float(resid @ resid) + float(np.sum(delta * delta * prior_prec))
            sigma2 = float(
                _inv_gamma(gen, opts.a + (n + p) / 2.0, opts.b + quad / 2.0)
            )

        d2 = delta * delta
        lam2 = _inv_gamma(gen, 1.0, 1.0 / zeta + d2 / (2.0 * sigma2 * tau2), size=p)
        if opts.fix_tau is None:
            rate = 1.0 / nu + float(np.sum(d2 / lam2)) / (2.0 * sigma2)
            tau2 = float(_inv_gamma(gen, (p + 1) / 2.0, rate))
        zeta = _inv_gamma(gen, 1.0, 1.0 + 1.0 / lam2, size=p)
        nu = float(_inv_gamma(gen, 1.0, 1.0 + 1.0 / tau2))

        if it >= opts.burn_in and (it - opts.burn_in) % opts.thin == 0 and k < kept:
            draws[k] = delta
            tau2_s[k] = tau2
            sigma2_s[k] = sigma2
            k += 1
    return PosteriorDraws(
        draws=draws[:k],
        scalar_draws={"tau2": tau2_s[:k], "sigma2": sigma2_s[:k]},
        burn_in=opts.burn_in,
        thin=opts.thin,
    )


def pcp_regression_fit(
    task: RegressionTask,
    opts: PcpOptions,
    rng: RngStream,
    X_star: Optional[np.ndarray] = None,
    level: float = 0.95,
) -> RegressionFit:
    """Distance-penalized global-shrinkage fit of the whitened regression.

    delta has the ridge-type prior Normal(0, tt2 sigma^2 I) with the
    distance-penalized prior on tt2 (Metropolis on log tt2, as in the
    means-problem sampler).  tt2 = 0 collapses to pure transfer
    (beta2 = beta1_hat); tt2 -> infinity recovers the generalized least
    squares fit of the whitened problem.
    """
    z, V = residualize(task)
    z_t, x_t = whiten(z, task.X, V)
    n, p = x_t.shape
    gen = rng.generator()
    g_mat = x_t.T @ x_t
    b_vec = x_t.T @ z_t

    tt2 = 1.0 if opts.fix_tilde_tau2 is None else opts.fix_tilde_tau2
    denom = max(n, 1)
    sigma2 = max(float(z_t @ z_t) / denom, 1e-8)
    if opts.fix_sigma is not None:
        sigma2 = opts.fix_sigma**2
    delta = np.zeros(p)
    log_scale = 0.0
    accept_total = 0
    accept_at_burn_in = 0

    kept = (opts.iterations - opts.burn_in) // opts.thin
    draws = np.empty((kept, p))
    tt2_s = np.empty(kept)
    sigma2_s = np.empty(kept)
    k = 0
    for it in range(opts.iterations):
        if tt2 > 0:
            prior_prec = np.full(p, 1.0 / tt2)
            delta = _draw_delta(gen, x_t, z_t, g_mat, b_vec, prior_prec, sigma2)
        else:
            delta = np.zeros(p)
            gen.standard_normal(p)  # keep stream alignment across tt2 values

        if opts.fix_sigma is None:
            resid = z_t - x_t @ delta
            quad = float(resid @ resid)
            if tt2 > 0:
                quad += float(delta @ delta) / tt2
            sigma2 = float(
                _inv_gamma(gen, opts.a + (n + p) / 2.0, opts.b + quad / 2.0)
            )

        if opts.fix_tilde_tau2 is None:
            cur = max(tt2, 1e-12)

            def log_target(x):
                return (
                    pcp_log_density(x, opts.lam)
                    - 0.5 * p * math.log(x * sigma2)
                    - float(delta @ delta) / (2.0 * sigma2 * x)
                )

            prop_log = math.log(cur) + math.exp(log_scale) * gen.standard_normal()
            prop = math.exp(prop_log)
            if math.isfinite(prop) and prop > 0:
                log_acc = (
                    log_target(prop) - log_target(cur) + (prop_log - math.log(cur))
                )
                accept_prob = min(1.0, math.exp(min(log_acc, 0.0)))
            else:
                accept_prob = 0.0
            if gen.uniform() < accept_prob:
                tt2 = prop
                accept_total += 1
            if opts.adapt_mh and it < opts.burn_in:
                gamma = 1.0 / (1.0 + it) ** 0.6
                log_scale += gamma * (accept_prob - opts.target_accept)
                log_scale = min(max(log_scale, -8.0), 8.0)
        if it + 1 == opts.burn_in:
            accept_at_burn_in = accept_total

        if it >= opts.burn_in and (it - opts.burn_in) % opts.thin == 0 and k < kept:
            draws[k] = delta
            tt2_s[k] = tt2
            sigma2_s[k] = sigma2
            k += 1

    post = opts.iterations - opts.burn_in
    diag = {"accept_rate": (accept_total - accept_at_burn_in) / post if post else 0.0}
    pdraws = PosteriorDraws(
        draws=draws[:k],
        scalar_draws={"tilde_tau2": tt2_s[:k], "sigma2": sigma2_s[:k]},
        burn_in=opts.burn_in,
        thin=opts.thin,
        diagnostics=diag,
    )
    delta_mean = pdraws.draws.mean(axis=0)
    est = EstimateResult(
        point=task.beta1_hat + delta_mean, method=Method.PCP, diagnostics=dict(diag)
    )
    pred = None
    if X_star is not None:
        pred = _posterior_predictive(
            task, pdraws, np.asarray(X_star, dtype=float), level, rng.child(0x9E37)
        )
    return RegressionFit(estimate=est, draws=pdraws, prediction=pred)


def load_regression_task(features_path, source_path) -> RegressionTask:
    """Read a task from two CSV files.

    ``features_path``: header row ``y,x1,...,xp``; each subsequent row is
    one observation (response first, then the p features, row-major).
    ``source_path``: header row ``beta1_hat,x1,...,xp``; row j carries the
    j-th source coefficient followed by row j of its covariance scale
    matrix.
    """
    feat = np.genfromtxt(features_path, delimiter=",", skip_header=1, ndmin=2)
    if feat.shape[1] < 2:
        raise ValueError("features file needs a response column plus features")
    Y, X = feat[:, 0], feat[:, 1:]
    src = np.genfromtxt(source_path, delimiter=",", skip_header=1, ndmin=2)
    p = X.shape[1]
    if src.shape != (p, p + 1):
        raise ValueError(
            f"source file must be p x (p+1) = {p}x{p + 1}, got {src.shape}"
        )
    return RegressionTask(X=X, Y=Y, beta1_hat=src[:, 0], Sigma_hat=src[:, 1:])


def write_predictions(pred: PredictionResult, path) -> None:
    """Write predictions as CSV with columns id,mean,lower95,upper95."""
    lines = ["id,mean,lower95,upper95"]
    for i in range(pred.mean.size):
        lines.append(
            f"{i},{float(pred.mean[i])!r},{float(pred.lower95[i])!r},"
            f"{float(pred.upper95[i])!r}"
        )
    from pathlib import Path

    Path(path).write_text("\n".join(lines) + "\n")


def _posterior_predictive(
    task: RegressionTask,
    draws: PosteriorDraws,
    X_star: np.ndarray,
    level: float,
    rng: RngStream,
) -> PredictionResult:
    """Equal-tailed posterior-predictive intervals at new design points.

    For each retained draw the predictive mean is X* (beta1_hat + delta);
    a new-observation noise draw with that iteration's sigma^2 is added
    before taking quantiles.
    """
    gen = rng.generator()
    lo = (1.0 - level) / 2.0
    base = X_star @ task.beta1_hat
    sig = np.sqrt(draws.scalar_draws["sigma2"])
    n_star = X_star.shape[0]
    mean_acc = np.zeros(n_star)
    lower = np.empty(n_star)
    upper = np.empty(n_star)
    chunk = max(1, int(4e6) // max(1, draws.n_draws))
    for start in range(0, n_star, chunk):
        sl = slice(start, min(start + chunk, n_star))
        mu = base[sl][None, :] + draws.draws @ X_star[sl].T  # (draws, chunk)
        yrep = mu + sig[:, None] * gen.standard_normal(mu.shape)
        mean_acc[sl] = mu.mean(axis=0)
        lower[sl] = np.quantile(yrep, lo, axis=0, method="linear")
        upper[sl] = np.quantile(yrep, 1.0 - lo, axis=0, method="linear")
    return PredictionResult(
        mean=mean_acc,
        lower95=np.minimum(lower, mean_acc),
        upper95=np.maximum(upper, mean_acc),
    )
