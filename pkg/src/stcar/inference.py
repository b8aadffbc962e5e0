"""Nested Laplace inference for the spatio-temporal Poisson model.

The latent vector stacks the spatio-temporal field and the fixed effects
(per-year intercepts plus covariate coefficients), which are jointly
Gaussian a priori.  Inference proceeds in two nested layers:

* inner: for a fixed hyperparameter point, the conditional posterior of the
  latent vector is maximised by Newton iterations on the sparse joint
  precision, with the per-slice sum-to-zero constraints imposed by
  conditioning by kriging at every step; the Laplace estimate of the
  log marginal likelihood follows from the mode, the curvature, and two
  Gaussian constraint corrections.
* outer: the hyperparameter posterior is explored on a dense grid in
  transformed coordinates (log sigma, atanh r, logit xi), centred at the
  numerically located mode and scaled by the local curvature.  Grid weights
  combine the inner marginal likelihoods with the hyperpriors; every
  reported posterior summary is a weight-mixture over the grid.

No variational correction is applied to the Gaussian approximations; the
plain Laplace mode is the contract, and the simulation-recovery tests
quantify its adequacy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import linalg, optimize
from scipy.special import expit, gammaln, logsumexp

from .data import Dataset
from .factor import FactorError, SparseFactor
from .fields import DEFAULT_JITTER, joint_precision
from .graphs import Graph, spectrum
from .priors import PcPrior, UniformPrior, calibrate
from .structures import build_structure

__all__ = [
    "FitResult",
    "GaussianApprox",
    "GridConfig",
    "Hyper",
    "InferenceError",
    "ModelSpec",
    "RateRatio",
    "WaicReport",
    "fit",
    "laplace_inner",
    "make_spec",
    "rate_ratio",
    "waic",
]

XI_BY_KIND = {"PCAR": "rho", "LCAR": "lambda", "BYM": "phi"}

# Transformed-space clips keeping exp/tanh/expit well behaved.
_T_CLIPS = ((-10.0, 5.0), (-7.0, 7.0), (-16.0, 16.0))
_XI_LO, _XI_HI = 1e-8, 1.0 - 1e-8


class InferenceError(RuntimeError):
    """Inner or outer optimisation failure; message carries diagnostics."""


@dataclass(frozen=True)
class Hyper:
    """One hyperparameter point."""

    sigma: float
    r: float
    xi: float | None = None

    def as_dict(self):
        d = {"sigma": self.sigma, "r": self.r}
        if self.xi is not None:
            d["xi"] = self.xi
        return d


@dataclass
class ModelSpec:
    """Model structure and prior choices for one fit."""

    kind: str
    sigma_prior: PcPrior
    r_prior: PcPrior
    xi_prior: object | None = None  # PcPrior or UniformPrior; None for ICAR
    covariates: list | None = None  # None = every dataset covariate
    per_year_intercepts: bool = True
    beta_prior_variance: float = 1e3

    def __post_init__(self):
        if self.beta_prior_variance <= 0:
            raise InferenceError("fixed-effect prior variance must be positive")
        if self.kind == "ICAR" and self.xi_prior is not None:
            warnings.warn("ICAR has no mixing parameter; xi prior ignored", stacklevel=2)
            self.xi_prior = None
        if self.kind != "ICAR" and self.xi_prior is None:
            raise InferenceError(f"{self.kind} requires a prior for its mixing parameter")


def make_spec(
    kind: str,
    graph: Graph,
    T: int,
    *,
    sigma_pc=(np.sqrt(0.5), 0.9),
    r_pc=(0.4, 0.8),
    xi_prior=("pc", 0.5, 2.0 / 3.0),
    covariates=None,
    per_year_intercepts=True,
    beta_prior_variance=1e3,
) -> ModelSpec:
    """Build a ModelSpec with PC priors calibrated on the given graph.

    ``xi_prior`` is ``("pc", u, alpha)`` or ``("uniform",)`` and is ignored
    for ICAR.  The defaults are the standard choices: P(sigma^2 <= 1/2) =
    0.9, P(|r| <= 0.4) = 0.8, and P(xi <= 1/2) = 2/3.
    """
    sigma_prior = calibrate("sigma", sigma_pc[0], sigma_pc[1])
    r_prior = calibrate("r", r_pc[0], r_pc[1], n=graph.n, T=T)
    xp = None
    if kind != "ICAR":
        if xi_prior[0] == "uniform":
            xp = UniformPrior()
        elif xi_prior[0] == "pc":
            xp = calibrate(XI_BY_KIND[kind], xi_prior[1], xi_prior[2],
                           spectrum=spectrum(graph), T=T)
        else:
            raise InferenceError(f"unknown xi prior spec {xi_prior!r}")
    return ModelSpec(
        kind=kind,
        sigma_prior=sigma_prior,
        r_prior=r_prior,
        xi_prior=xp,
        covariates=covariates,
        per_year_intercepts=per_year_intercepts,
        beta_prior_variance=beta_prior_variance,
    )


@dataclass
class GridConfig:
    """Outer-layer exploration settings."""

    points_per_axis: int = 7
    span_sd: float = 3.0
    newton_max_iter: int = 50
    newton_tol: float = 1e-8
    mode_max_iter: int = 60
    fd_step: float = 1e-4


# ---------------------------------------------------------------------
# likelihoods


class PoissonLikelihood:
    """Poisson counts with a known multiplicative exposure."""

    def __init__(self, y, log_offset):
        self.y = np.asarray(y, dtype=float)
        self.log_offset = np.asarray(log_offset, dtype=float)
        self._const = -float(np.sum(gammaln(self.y + 1.0)))

    def loglik(self, eta):
        mu = np.exp(self.log_offset + eta)
        return float(np.sum(self.y * (self.log_offset + eta)) - np.sum(mu)) + self._const

    def derivatives(self, eta):
        mu = np.exp(self.log_offset + eta)
        ll = float(np.sum(self.y * (self.log_offset + eta)) - np.sum(mu)) + self._const
        return ll, self.y - mu, mu

    def scale(self):
        return max(1.0, float(np.max(self.y)))


class GaussianLikelihood:
    """Gaussian observations with known noise variance (surrogate tests)."""

    def __init__(self, y, noise_var):
        self.y = np.asarray(y, dtype=float)
        self.noise_var = float(noise_var)

    def loglik(self, eta):
        resid = self.y - eta
        return float(
            -0.5 * np.sum(resid**2) / self.noise_var
            - 0.5 * self.y.size * np.log(2.0 * np.pi * self.noise_var)
        )

    def derivatives(self, eta):
        resid = self.y - eta
        ll = self.loglik(eta)
        return ll, resid / self.noise_var, np.full(eta.shape, 1.0 / self.noise_var)

    def scale(self):
        return max(1.0, float(np.max(np.abs(self.y))))


# ---------------------------------------------------------------------
# inner layer


@dataclass
class GaussianApprox:
    """Constrained Gaussian approximation of the latent posterior."""

    hyper: Hyper
    mean: np.ndarray  # constrained mode
    unconstrained_mean: np.ndarray
    precision: sp.csr_matrix
    constraints: sp.csr_matrix
    log_marginal: float
    beta_slice: slice
    beta_var: np.ndarray  # constrained marginal variances of fixed effects
    n_iter: int
    grad_norm: float

    @property
    def beta_mean(self) -> np.ndarray:
        return self.mean[self.beta_slice]


def _constrained_laplace(Q, A, U, lik, x0=None, max_iter=50, tol=1e-8):
    """Newton mode finding and Laplace evidence under linear constraints.

    ``Q`` is the full-rank (jittered where needed) joint prior precision,
    ``A`` the constraint rows, ``U`` the design mapping the latent vector
    to the linear predictor, ``lik`` a likelihood object.
    """
    m = Q.shape[0]
    At = A.T.toarray()
    AAt = (A @ A.T).toarray()
    AAt_f = linalg.cho_factor(AAt)
    x = np.zeros(m) if x0 is None else np.asarray(x0, dtype=float).copy()
    tol_scaled = tol * lik.scale()
    trace = []
    fac = K = Kf = VA = g = None
    converged = False

    for it in range(max_iter):
        eta = U @ x
        ll, d, w = lik.derivatives(eta)
        if not np.isfinite(ll):
            raise InferenceError(f"non-finite log likelihood at iteration {it}")
        g = U.T @ d - Q @ x
        H = (Q + (U.T @ sp.diags(w) @ U)).tocsr()
        try:
            fac = SparseFactor(H)
        except FactorError as exc:
            raise InferenceError(f"inner Hessian factorization failed: {exc}") from exc
        VA = fac.solve(At)
        K = A @ VA
        Kf = linalg.cho_factor(K)
        pg = g - A.T @ linalg.cho_solve(AAt_f, A @ g)
        gnorm = float(np.max(np.abs(pg)))
        trace.append(gnorm)
        if gnorm < tol_scaled:
            converged = True
            break
        mh = x + fac.solve(g)
        mstar = mh - VA @ linalg.cho_solve(Kf, A @ mh)
        # backtracking on the constrained objective; the segment stays on
        # the constraint surface because both endpoints satisfy A x = 0
        f0 = ll - 0.5 * float(x @ (Q @ x))
        direction = mstar - x
        step = 1.0
        while step > 2.0**-30:
            xn = x + step * direction
            fn = lik.loglik(U @ xn) - 0.5 * float(xn @ (Q @ xn))
            if np.isfinite(fn) and fn >= f0 - 1e-12 * (1.0 + abs(f0)):
                break
            step *= 0.5
        else:
            raise InferenceError(
                f"line search failed at iteration {it}; gradient trace {trace}"
            )
        x = xn
    if not converged:
        raise InferenceError(
            f"Newton did not converge in {max_iter} iterations; gradient trace "
            f"{np.array2string(np.asarray(trace), precision=3)}"
        )

    # H, fac, VA, Kf, g and ll all refer to the converged x
    mh = x + fac.solve(g)

    facQ = SparseFactor(Q)
    KQ = A @ facQ.solve(At)
    amh = A @ mh
    quad_prior = float(x @ (Q @ x))
    gHg = float(g @ fac.solve(g))
    _, logdet_KH = np.linalg.slogdet(K)
    _, logdet_KQ = np.linalg.slogdet(KQ)
    log_marginal = (
        ll
        + 0.5 * (facQ.logdet - fac.logdet)
        - 0.5 * quad_prior
        + 0.5 * gHg
        - 0.5 * logdet_KH
        - 0.5 * float(amh @ linalg.cho_solve(Kf, amh))
        + 0.5 * logdet_KQ
    )
    return x, mh, H, fac, VA, Kf, float(log_marginal), len(trace), trace[-1]


def _beta_variances(fac, VA, Kf, A, beta_slice, m):
    """Constrained marginal variances of the fixed-effect block."""
    idx = np.arange(m)[beta_slice]
    E = np.zeros((m, idx.size))
    E[idx, np.arange(idx.size)] = 1.0
    S = fac.solve(E)
    var_unc = S[idx, np.arange(idx.size)]
    W = A @ S  # (c, q)
    corr = np.sum(W * linalg.cho_solve(Kf, W), axis=0)
    return np.maximum(var_unc - corr, 0.0)


class _Prepared:
    """Per-dataset quantities shared by every inner evaluation."""

    def __init__(self, dataset: Dataset, spec: ModelSpec):
        if dataset.graph is None:
            raise InferenceError("dataset has no graph attached; load or simulate first")
        self.dataset = dataset
        self.spec = spec
        self.graph = dataset.graph
        self.T, self.n = dataset.T, dataset.n
        self.N = self.T * self.n
        names = spec.covariates if spec.covariates is not None else dataset.covariate_names
        self.cov_idx = [dataset.covariate_index(c) for c in names]

        # fixed-effect design: per-year intercepts then covariates
        cols, self.fixed_names = [], []
        if spec.per_year_intercepts:
            for t, year in enumerate(dataset.years):
                col = np.zeros(self.N)
                col[t * self.n : (t + 1) * self.n] = 1.0
                cols.append(col)
                self.fixed_names.append(f"Year {year}")
        else:
            cols.append(np.ones(self.N))
            self.fixed_names.append("Intercept")
        for j, name in zip(self.cov_idx, names):
            cols.append(dataset.X[:, :, j].reshape(-1))
            self.fixed_names.append(name)
        self.M = np.column_stack(cols)
        self.q = self.M.shape[1]

        self.block = 2 * self.n if spec.kind == "BYM" else self.n
        self.k_z = self.T * self.block
        self.m = self.k_z + self.q
        self.beta_slice = slice(self.k_z, self.m)

        # observation cell (t, i) -> latent index of Z_{t,i}
        obs_idx = np.concatenate(
            [np.arange(t * self.block, t * self.block + self.n) for t in range(self.T)]
        )
        Ez = sp.csr_matrix(
            (np.ones(self.N), (np.arange(self.N), obs_idx)), shape=(self.N, self.k_z)
        )
        self.U = sp.hstack([Ez, sp.csr_matrix(self.M)]).tocsr()
        self.z_obs_idx = obs_idx

        self.lik = PoissonLikelihood(dataset.y_flat(), np.log(dataset.pop_flat()))
        self._default_x0 = self._initial_point()

    def _initial_point(self):
        x0 = np.zeros(self.m)
        ds = self.dataset
        if self.spec.per_year_intercepts:
            rates = (ds.y.sum(axis=1) + 0.5) / ds.pop.sum(axis=1)
            x0[self.k_z : self.k_z + self.T] = np.log(rates)
        else:
            x0[self.k_z] = np.log((ds.y.sum() + 0.5) / ds.pop.sum())
        return x0

    def system(self, hyper: Hyper):
        """Joint prior precision and constraints at one hyperparameter point."""
        structure = build_structure(self.spec.kind, self.graph, hyper.xi)
        Qf, Afield = joint_precision(structure, hyper.sigma, hyper.r, self.T)
        if structure.rank < structure.block_size:
            eps = DEFAULT_JITTER * Qf.diagonal().mean()
            Qf = Qf + eps * sp.eye(self.k_z)
        tau = 1.0 / self.spec.beta_prior_variance
        Q = sp.block_diag([Qf, tau * sp.eye(self.q)]).tocsr()
        A = sp.hstack([Afield, sp.csr_matrix((self.T, self.q))]).tocsr()
        return Q, A

    def inner(self, hyper: Hyper, x0=None, cfg: GridConfig | None = None,
              lik=None) -> GaussianApprox:
        cfg = cfg or GridConfig()
        Q, A = self.system(hyper)
        x0 = self._default_x0 if x0 is None else x0
        x, mh, H, fac, VA, Kf, lml, niter, gnorm = _constrained_laplace(
            Q, A, self.U, lik or self.lik, x0=x0,
            max_iter=cfg.newton_max_iter, tol=cfg.newton_tol,
        )
        bvar = _beta_variances(fac, VA, Kf, A, self.beta_slice, self.m)
        return GaussianApprox(
            hyper=hyper,
            mean=x,
            unconstrained_mean=mh,
            precision=H,
            constraints=A,
            log_marginal=lml,
            beta_slice=self.beta_slice,
            beta_var=bvar,
            n_iter=niter,
            grad_norm=gnorm,
        )


def laplace_inner(dataset: Dataset, spec: ModelSpec, hyper: Hyper,
                  x0=None, cfg: GridConfig | None = None):
    """Gaussian approximation of the latent posterior at one hyper point.

    Returns
    -------
    (GaussianApprox, float)
        The constrained approximation and the Laplace log marginal
        likelihood (also stored on the approximation).
    """
    approx = _Prepared(dataset, spec).inner(hyper, x0=x0, cfg=cfg)
    return approx, approx.log_marginal


# ---------------------------------------------------------------------
# outer layer


def _unpack(tvec, has_xi):
    tvec = np.asarray(tvec, dtype=float)
    s = float(np.clip(tvec[0], *_T_CLIPS[0]))
    u = float(np.clip(tvec[1], *_T_CLIPS[1]))
    hyper = {"sigma": float(np.exp(s)), "r": float(np.tanh(u))}
    if has_xi:
        v = float(np.clip(tvec[2], *_T_CLIPS[2]))
        hyper["xi"] = float(np.clip(expit(v), _XI_LO, _XI_HI))
    return Hyper(**hyper)


def _log_prior_transformed(spec: ModelSpec, hyper: Hyper) -> float:
    """Hyperprior density in transformed coordinates (Jacobian included)."""
    lp = spec.sigma_prior.log_density(hyper.sigma) + np.log(hyper.sigma)
    lp += spec.r_prior.log_density(hyper.r) + np.log1p(-hyper.r**2)
    if hyper.xi is not None:
        lp += spec.xi_prior.log_density(hyper.xi) + np.log(hyper.xi * (1.0 - hyper.xi))
    return float(lp)


def _central_gradient(f, x, step):
    g = np.zeros_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def _fd_hessian(f, x, step=1e-3):
    d = x.size
    H = np.zeros((d, d))
    f0 = f(x)
    hs = [step * max(1.0, abs(x[i])) for i in range(d)]
    for i in range(d):
        for j in range(i, d):
            if i == j:
                xp, xm = x.copy(), x.copy()
                xp[i] += hs[i]
                xm[i] -= hs[i]
                H[i, i] = (f(xp) - 2.0 * f0 + f(xm)) / hs[i] ** 2
            else:
                xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
                xpp[[i, j]] += (hs[i], hs[j])
                xpm[[i, j]] += (hs[i], -hs[j])
                xmp[[i, j]] += (-hs[i], hs[j])
                xmm[[i, j]] += (-hs[i], -hs[j])
                H[i, j] = H[j, i] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (
                    4.0 * hs[i] * hs[j]
                )
    return H


def _weighted_quantiles(values, weights, qs):
    order = np.argsort(values)
    v, w = np.asarray(values)[order], np.asarray(weights)[order]
    cw = np.cumsum(w) - 0.5 * w
    cw /= w.sum()
    return np.interp(qs, cw, v)


def _mixture_quantile(means, sds, weights, q):
    from scipy.stats import norm

    lo = float(np.min(means - 8.0 * sds))
    hi = float(np.max(means + 8.0 * sds))
    f = lambda x: float(np.sum(weights * norm.cdf((x - means) / sds)) - q)
    return float(optimize.brentq(f, lo, hi, xtol=1e-10))


@dataclass
class FitResult:
    """Grid posterior over hyperparameters plus mixed marginals."""

    spec: ModelSpec
    dataset: Dataset
    grid_config: GridConfig
    points: list  # Hyper per grid point
    log_marginals: np.ndarray
    weights: np.ndarray
    means: np.ndarray  # (G, m) constrained latent modes
    beta_var: np.ndarray  # (G, q)
    fixed_names: list
    fixed_mean: np.ndarray
    fixed_sd: np.ndarray
    fixed_q025: np.ndarray
    fixed_q975: np.ndarray
    hyper_summary: list  # rows (param, mean, sd, q025, median, q975)
    latent_mean: np.ndarray  # (T*n,) posterior mean of the observable field
    mode_hyper: Hyper
    flags: list
    _prep: _Prepared = field(repr=False, default=None)

    @property
    def beta_slice(self):
        return self._prep.beta_slice

    def fixed_effect(self, name: str):
        """(mean, sd, q025, q975) for one fixed effect by name."""
        i = self.fixed_names.index(name)
        return (
            float(self.fixed_mean[i]),
            float(self.fixed_sd[i]),
            float(self.fixed_q025[i]),
            float(self.fixed_q975[i]),
        )

    def hyper_marginal(self, param: str):
        """Summary row (mean, sd, q025, median, q975) for one hyperparameter."""
        for row in self.hyper_summary:
            if row[0] == param:
                return tuple(row[1:])
        raise KeyError(param)


def fit(dataset: Dataset, spec: ModelSpec, grid: GridConfig | None = None,
        verbose: bool = False) -> FitResult:
    """Fit the model by nested Laplace approximation on a hyper grid.

    Deterministic: no random numbers are consumed.  Raises
    ``InferenceError`` when the hyperparameter mode search or any inner
    Newton run fails to converge.
    """
    grid = grid or GridConfig()
    prep = _Prepared(dataset, spec)
    has_xi = spec.kind != "ICAR"
    d = 3 if has_xi else 2
    flags = []
    warm = {"x": None}

    def log_post(tvec):
        hyper = _unpack(tvec, has_xi)
        try:
            approx = prep.inner(hyper, x0=warm["x"], cfg=grid)
        except InferenceError:
            # retry cold; extreme hyper points can spoil a warm start
            approx = prep.inner(hyper, x0=None, cfg=grid)
        warm["x"] = approx.mean
        return approx.log_marginal + _log_prior_transformed(spec, hyper), approx

    def neg(tvec):
        # a large finite value lets the quasi-Newton search back off from
        # regions where the inner approximation breaks down
        try:
            return -log_post(tvec)[0]
        except (InferenceError, FactorError):
            return 1e10

    t0 = np.array([np.log(0.3), np.arctanh(0.3), 0.0])[:d]
    res = optimize.minimize(
        neg,
        t0,
        jac=lambda tv: _central_gradient(neg, tv, grid.fd_step),
        method="BFGS",
        options={"maxiter": grid.mode_max_iter, "gtol": 1e-5},
    )
    if not np.isfinite(res.fun) or res.fun >= 1e10:
        raise InferenceError(f"hyperparameter mode search diverged: {res.message}")
    if not res.success:
        flags.append(f"mode_search: {res.message}")
    t_mode = res.x
    mode_hyper = _unpack(t_mode, has_xi)

    H = _fd_hessian(neg, t_mode)
    sds = None
    try:
        cov = np.linalg.inv(H)
        diag = np.diag(cov)
        if np.all(diag > 0):
            sds = np.sqrt(diag)
    except np.linalg.LinAlgError:
        pass
    if sds is None:
        sds = np.full(d, 0.5)
        flags.append("hessian_fallback")

    axes = [
        t_mode[i] + grid.span_sd * sds[i] * np.linspace(-1.0, 1.0, grid.points_per_axis)
        for i in range(d)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    tpoints = np.column_stack([mm.ravel() for mm in mesh])

    points, lmls, lps, means, bvars = [], [], [], [], []
    warm["x"] = None
    for tv in tpoints:
        try:
            lp, approx = log_post(tv)
            points.append(approx.hyper)
            lmls.append(approx.log_marginal)
            lps.append(lp)
            means.append(approx.mean)
            bvars.append(approx.beta_var)
        except (InferenceError, FactorError) as exc:
            # a failed corner of the grid gets zero weight, not a dead fit
            points.append(_unpack(tv, has_xi))
            lmls.append(-np.inf)
            lps.append(-np.inf)
            means.append(warm["x"] if warm["x"] is not None else np.zeros(prep.m))
            bvars.append(np.full(prep.q, 1e-12))
            flags.append(f"grid_point_failed: {exc}")
        if verbose:
            print(f"  theta={points[-1]} lp={lps[-1]:.3f}")
    lps = np.asarray(lps)
    if not np.any(np.isfinite(lps)):
        raise InferenceError("every grid point failed; check data and priors")
    weights = np.exp(lps - lps.max())
    weights /= weights.sum()
    if weights.max() > 0.999:
        flags.append("degenerate_grid")

    means = np.asarray(means)
    bvars = np.asarray(bvars)
    bmeans = means[:, prep.beta_slice]

    mix_mean = weights @ bmeans
    mix_var = weights @ (bvars + bmeans**2) - mix_mean**2
    mix_sd = np.sqrt(np.maximum(mix_var, 0.0))
    sds_pt = np.sqrt(np.maximum(bvars, 1e-300))
    q025 = np.array(
        [_mixture_quantile(bmeans[:, j], sds_pt[:, j], weights, 0.025) for j in range(prep.q)]
    )
    q975 = np.array(
        [_mixture_quantile(bmeans[:, j], sds_pt[:, j], weights, 0.975) for j in range(prep.q)]
    )

    hyper_rows = []
    table4_order = ([XI_BY_KIND[spec.kind]] if has_xi else []) + ["sigma", "r"]
    vals = {
        "sigma": np.array([h.sigma for h in points]),
        "r": np.array([h.r for h in points]),
    }
    if has_xi:
        vals[XI_BY_KIND[spec.kind]] = np.array([h.xi for h in points])
    for name in table4_order:
        v = vals[name]
        mean = float(weights @ v)
        sd = float(np.sqrt(max(weights @ v**2 - mean**2, 0.0)))
        qs = _weighted_quantiles(v, weights, [0.025, 0.5, 0.975])
        hyper_rows.append([name, mean, sd, float(qs[0]), float(qs[1]), float(qs[2])])

    latent_mean = weights @ means[:, prep.z_obs_idx]

    return FitResult(
        spec=spec,
        dataset=dataset,
        grid_config=grid,
        points=points,
        log_marginals=np.asarray(lmls),
        weights=weights,
        means=means,
        beta_var=bvars,
        fixed_names=prep.fixed_names,
        fixed_mean=mix_mean,
        fixed_sd=mix_sd,
        fixed_q025=q025,
        fixed_q975=q975,
        hyper_summary=hyper_rows,
        latent_mean=latent_mean,
        mode_hyper=mode_hyper,
        flags=flags,
        _prep=prep,
    )


# ---------------------------------------------------------------------
# WAIC


@dataclass(frozen=True)
class WaicReport:
    waic: float
    p_eff: float
    lppd: float
    mc_se: float
    draws: int

    def as_dict(self):
        return {
            "waic": self.waic,
            "p_eff": self.p_eff,
            "lppd": self.lppd,
            "mc_se": self.mc_se,
            "draws": self.draws,
        }


def _sample_gaussian_approx(approx: GaussianApprox, rng, size):
    """Draws from the constrained Gaussian approximation, shape (m, size)."""
    Hd = approx.precision.toarray()
    Uc = linalg.cholesky(Hd, lower=False)
    z = rng.standard_normal((Hd.shape[0], size))
    draws = approx.unconstrained_mean[:, None] + linalg.solve_triangular(Uc, z, lower=False)
    A = approx.constraints
    VA = linalg.cho_solve((Uc, False), A.T.toarray())
    K = A @ VA
    return draws - VA @ np.linalg.solve(K, A @ draws)


def waic(dataset: Dataset, fit_result: FitResult, S: int = 1000, seed: int = 0) -> WaicReport:
    """Watanabe-Akaike criterion from posterior draws of the predictor.

    Hyper grid points are sampled proportionally to their weights; latent
    draws come from the stored Gaussian approximations.  The pointwise
    density is the Poisson pmf conditional on the drawn predictor.
    """
    if S < 100:
        warnings.warn(
            f"S={S} draws is small; the Monte-Carlo error of the WAIC will be inflated",
            stacklevel=2,
        )
    prep = fit_result._prep
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(S, fit_result.weights)
    y = dataset.y_flat().astype(float)
    logP = np.log(dataset.pop_flat())
    const = gammaln(y + 1.0)

    logliks = np.empty((S, prep.N))
    pos = 0
    for gidx in np.flatnonzero(counts):
        approx = prep.inner(fit_result.points[gidx], x0=fit_result.means[gidx],
                            cfg=fit_result.grid_config)
        draws = _sample_gaussian_approx(approx, rng, int(counts[gidx]))
        eta = (prep.U @ draws).T  # (c, N)
        log_mu = logP[None, :] + eta
        logliks[pos : pos + eta.shape[0]] = y[None, :] * log_mu - np.exp(log_mu) - const[None, :]
        pos += eta.shape[0]

    lppd_i = logsumexp(logliks, axis=0) - np.log(S)
    p_i = logliks.var(axis=0, ddof=1)
    waic_i = -2.0 * (lppd_i - p_i)
    total = float(waic_i.sum())
    mc_se = float(np.sqrt(prep.N * waic_i.var(ddof=1)))
    return WaicReport(
        waic=total,
        p_eff=float(p_i.sum()),
        lppd=float(lppd_i.sum()),
        mc_se=mc_se,
        draws=S,
    )


# ---------------------------------------------------------------------
# reporting


@dataclass(frozen=True)
class RateRatio:
    """Multiplicative reading of a log-scale effect."""

    ratio: float
    percent_change: float


def rate_ratio(effect_mean: float) -> RateRatio:
    """Rate ratio exp(mean) and the corresponding percent change."""
    ratio = float(np.exp(effect_mean))
    return RateRatio(ratio=ratio, percent_change=100.0 * (ratio - 1.0))
