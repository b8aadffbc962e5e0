"""Penalised-complexity priors from explicit Kullback-Leibler divergences.

A PC prior penalises the departure of a flexible model from a base model,
measured on the distance scale d(theta) = sqrt(2 * KLD(theta)), by placing
an exponential distribution with rate ``psi`` on the distance.  The rate is
calibrated from a tail condition P(theta <= U) = alpha.  This module holds
the closed-form KLDs for the temporal autocorrelation and the three spatial
mixing parameters, the dense-matrix KLD they are all validated against, and
the resulting densities via change of variable.

Closed forms (all nonnegative, zero exactly at the base value):

* AR(1) autocorrelation r, base r = 0::

      KLD(r) = (n / 2) * (ln(1 - r^2) + T * r^2 / (1 - r^2))

* PCAR autocorrelation rho, base rho = 0 (covariance D^-1), with delta the
  eigenvalues of D^-1 W::

      KLD(rho) = (T / 2) * sum_i [ln(1 - rho d_i) + 1 / (1 - rho d_i)] - T n / 2

* LCAR mixing lambda, base lambda = 0 (identity covariance), with ell the
  Laplacian eigenvalues::

      KLD(lam) = (T / 2) * sum_i [ln(w_i) + 1 / w_i] - T n / 2,
      w_i = lam * (ell_i - 1) + 1

* BYM mixing phi, base phi = 0, with gamma the eigenvalues of the scaled
  Laplacian pseudoinverse::

      KLD(phi) = (T / 2) * sum_i [w_i - ln(w_i)] - T n / 2,
      w_i = phi * (gamma_i - 1) + 1
"""

from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.optimize import brentq

from .graphs import Spectrum

__all__ = [
    "PcPrior",
    "PriorError",
    "UniformPrior",
    "kld_dense",
    "kld_ar1",
    "kld_pcar",
    "kld_lcar",
    "kld_bym",
    "calibrate",
    "density",
]

# Interior evaluation window: distances blow up at the upper boundary and
# derivatives degenerate at the base value.
BASE_EPS = 1e-10
UPPER_EPS = 1e-8

TARGETS = ("sigma", "r", "rho", "lambda", "phi")


class PriorError(ValueError):
    """Invalid prior specification or evaluation point."""


def kld_dense(var0: np.ndarray, var1: np.ndarray) -> float:
    """KLD between zero-mean Gaussians with covariances ``var0``, ``var1``.

    Both matrices must be symmetric positive definite of equal dimension.
    This is the oracle every eigenvalue-form KLD in this module is checked
    against.
    """
    var0 = np.asarray(var0, dtype=float)
    var1 = np.asarray(var1, dtype=float)
    if var0.shape != var1.shape or var0.ndim != 2 or var0.shape[0] != var0.shape[1]:
        raise PriorError(f"covariance shapes differ or non-square: {var0.shape} vs {var1.shape}")
    m = var0.shape[0]
    try:
        c0 = linalg.cho_factor(var0)
        c1 = linalg.cho_factor(var1)
    except linalg.LinAlgError as exc:
        raise PriorError(f"covariance not positive definite: {exc}") from exc
    # ln |Var0^-1 Var1| and tr(Var0^-1 Var1) via the Cholesky factors
    logdet0 = 2.0 * np.sum(np.log(np.diag(c0[0])))
    logdet1 = 2.0 * np.sum(np.log(np.diag(c1[0])))
    trace = np.trace(linalg.cho_solve(c0, var1))
    return float(-0.5 * (logdet1 - logdet0) - 0.5 * m + 0.5 * trace)


def kld_ar1(r: float, n: int, T: int) -> float:
    """KLD of the spatio-temporal AR(1) model against temporal independence."""
    if not abs(r) < 1.0:
        raise PriorError(f"AR(1) autocorrelation must satisfy |r| < 1, got {r!r}")
    if T < 1 or n < 1:
        raise PriorError(f"need T >= 1 and n >= 1, got T={T}, n={n}")
    return 0.5 * n * _h_ar1(float(r), T)


def _h_ar1(r, T):
    # Guarded against tiny negative round-off; analytically >= 0 for T >= 1.
    h = np.log1p(-r * r) + T * r * r / (1.0 - r * r)
    return max(h, 0.0)


def _h_ar1_deriv(r, T):
    return -2.0 * r / (1.0 - r * r) + 2.0 * T * r / (1.0 - r * r) ** 2


def kld_pcar(rho: float, delta: np.ndarray, T: int) -> float:
    """KLD of the proper CAR at ``rho`` against its base model rho = 0."""
    if not (0.0 <= rho < 1.0):
        raise PriorError(f"PCAR autocorrelation must lie in [0, 1), got {rho!r}")
    w = 1.0 - rho * np.asarray(delta, dtype=float)
    val = 0.5 * T * float(np.sum(np.log(w) + 1.0 / w) - delta.shape[0])
    return max(val, 0.0)


def _kld_pcar_deriv(rho, delta, T):
    w = 1.0 - rho * delta
    return 0.5 * T * float(np.sum(rho * delta**2 / w**2))


def kld_lcar(lam: float, ell: np.ndarray, T: int) -> float:
    """KLD of the Leroux CAR at ``lam`` against the IID base lam = 0."""
    if not (0.0 <= lam < 1.0):
        raise PriorError(f"LCAR mixing parameter must lie in [0, 1), got {lam!r}")
    w = lam * (np.asarray(ell, dtype=float) - 1.0) + 1.0
    val = 0.5 * T * float(np.sum(np.log(w) + 1.0 / w) - ell.shape[0])
    return max(val, 0.0)


def _kld_lcar_deriv(lam, ell, T):
    w = lam * (ell - 1.0) + 1.0
    return 0.5 * T * float(np.sum(lam * (ell - 1.0) ** 2 / w**2))


def kld_bym(phi: float, gamma: np.ndarray, T: int) -> float:
    """KLD of the BYM convolution at ``phi`` against the IID base phi = 0."""
    if not (0.0 <= phi < 1.0):
        raise PriorError(f"BYM mixing parameter must lie in [0, 1), got {phi!r}")
    w = phi * (np.asarray(gamma, dtype=float) - 1.0) + 1.0
    val = 0.5 * T * float(np.sum(w - np.log(w)) - gamma.shape[0])
    return max(val, 0.0)


def _kld_bym_deriv(phi, gamma, T):
    w = phi * (gamma - 1.0) + 1.0
    return 0.5 * T * float(np.sum(phi * (gamma - 1.0) ** 2 / w))


class PcPrior:
    """A calibrated penalised-complexity prior for one hyperparameter.

    Obtained from :func:`calibrate`.  Instances are immutable; density and
    CDF evaluation are reentrant.

    Attributes
    ----------
    target : str
        One of ``("sigma", "r", "rho", "lambda", "phi")``.
    u, alpha : float
        The tail condition P(theta <= u) = alpha (interpreted on |r| for
        the symmetric temporal autocorrelation).
    psi : float
        Exponential rate on the distance scale.
    """

    def __init__(self, target, u, alpha, psi, kld_fn, kld_deriv_fn, context):
        self.target = target
        self.u = u
        self.alpha = alpha
        self.psi = psi
        self._kld = kld_fn
        self._kld_deriv = kld_deriv_fn
        self.context = context

    # -- parameter-domain helpers ------------------------------------
    @property
    def symmetric(self) -> bool:
        return self.target == "r"

    def _clamp(self, theta):
        if self.target == "sigma":
            return max(theta, BASE_EPS)
        upper = 1.0 - UPPER_EPS
        if self.symmetric:
            a = min(max(abs(theta), BASE_EPS), upper)
            return np.copysign(a, theta) if theta != 0.0 else BASE_EPS
        return min(max(theta, BASE_EPS), upper)

    def kld(self, theta: float) -> float:
        """KLD from the base model at ``theta`` (no clamping)."""
        return self._kld(theta)

    def distance(self, theta: float) -> float:
        """Distance d(theta) = sqrt(2 KLD(theta))."""
        return float(np.sqrt(2.0 * self._kld(theta)))

    def distance_deriv(self, theta: float) -> float:
        """d'(theta) = KLD'(theta) / sqrt(2 KLD(theta)), by closed form."""
        k = self._kld(theta)
        return float(self._kld_deriv(theta) / np.sqrt(2.0 * k))

    # -- density / cdf / sampling ------------------------------------
    def log_density(self, theta: float) -> float:
        """Log prior density at ``theta`` (clamped to the domain interior)."""
        if self.target == "sigma":
            s = self._clamp(theta)
            return float(np.log(self.psi) - self.psi * s)
        t = self._clamp(theta)
        d = self.distance(t)
        dp = abs(self.distance_deriv(t))
        val = np.log(self.psi) - self.psi * d + np.log(dp)
        if self.symmetric:
            val -= np.log(2.0)  # the distance folds r and -r together
        return float(val)

    def density(self, theta: float) -> float:
        return float(np.exp(self.log_density(theta)))

    def cdf(self, theta: float) -> float:
        """P(param <= theta) under the prior."""
        if self.target == "sigma":
            return float(-np.expm1(-self.psi * max(theta, 0.0)))
        if self.symmetric:
            if theta <= -1.0:
                return 0.0
            if theta >= 1.0:
                return 1.0
            mass = -np.expm1(-self.psi * self.distance(self._clamp(abs(theta))))
            return float(0.5 + 0.5 * np.copysign(mass, theta)) if theta != 0 else 0.5
        if theta <= 0.0:
            return 0.0
        if theta >= 1.0:
            return 1.0
        return float(-np.expm1(-self.psi * self.distance(self._clamp(theta))))

    def _invert_distance(self, d: float) -> float:
        upper = 1.0 - UPPER_EPS
        lo, hi = BASE_EPS, upper
        if self.distance(hi) <= d:
            return hi
        return float(brentq(lambda t: self.distance(t) - d, lo, hi, xtol=1e-13))

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """Draw by sampling Exp(psi) distances and inverting d(theta)."""
        if self.target == "sigma":
            return rng.exponential(1.0 / self.psi, size=size)
        d = rng.exponential(1.0 / self.psi, size=size)
        theta = np.array([self._invert_distance(di) for di in d])
        if self.symmetric:
            theta *= rng.choice((-1.0, 1.0), size=size)
        return theta

    def __repr__(self):
        return (
            f"PcPrior(target={self.target!r}, u={self.u:g}, alpha={self.alpha:g}, "
            f"psi={self.psi:.6g})"
        )


class UniformPrior:
    """Uniform(0, 1) prior, the drop-in alternative for a mixing parameter."""

    target = "xi"

    def log_density(self, theta: float) -> float:
        return 0.0 if 0.0 <= theta < 1.0 else -np.inf

    def density(self, theta: float) -> float:
        return float(np.exp(self.log_density(theta)))

    def cdf(self, theta: float) -> float:
        return float(min(max(theta, 0.0), 1.0))

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        return rng.uniform(0.0, 1.0, size=size)

    def __repr__(self):
        return "UniformPrior()"


def calibrate(
    target: str,
    u: float,
    alpha: float,
    *,
    n: int | None = None,
    T: int | None = None,
    spectrum: Spectrum | None = None,
) -> PcPrior:
    """Calibrate a PC prior from the tail condition P(theta <= u) = alpha.

    The rate is psi = ln(1 / (1 - alpha)) / d(u) with d the distance from
    the base model.  For ``target="sigma"`` the prior is the exponential
    with rate ln(1 / (1 - alpha)) / u directly.  For ``target="r"`` the
    condition is read on |r| (the distance is even in r); n and T are
    required.  The spatial targets need ``spectrum`` and T.

    Raises
    ------
    PriorError
        If u sits at the base value (zero distance) or outside the domain
        interior, or required context is missing.
    """
    if target not in TARGETS:
        raise PriorError(f"unknown prior target {target!r}; expected one of {TARGETS}")
    if not (0.0 < alpha < 1.0):
        raise PriorError(f"tail probability must lie in (0, 1), got {alpha!r}")
    rate_num = float(np.log(1.0 / (1.0 - alpha)))

    if target == "sigma":
        if u <= 0:
            raise PriorError(f"sigma boundary must be positive, got {u!r}")
        return PcPrior("sigma", u, alpha, rate_num / u, lambda s: np.nan, lambda s: np.nan, {})

    if target == "r":
        if n is None or T is None:
            raise PriorError("target 'r' requires n and T")
        if not (0.0 < abs(u) < 1.0):
            raise PriorError(f"boundary for r must satisfy 0 < |u| < 1, got {u!r}")
        kld_fn = lambda r: kld_ar1(r, n, T)
        deriv_fn = lambda r: 0.5 * n * _h_ar1_deriv(r, T)
        context = {"n": n, "T": T}
        uval = abs(u)
    else:
        if spectrum is None or T is None:
            raise PriorError(f"target {target!r} requires spectrum and T")
        if not (0.0 < u < 1.0):
            raise PriorError(f"boundary must lie in (0, 1), got {u!r}")
        if target == "rho":
            eigs = spectrum.rowstoch_eigs
            kld_fn = lambda x: kld_pcar(x, eigs, T)
            deriv_fn = lambda x: _kld_pcar_deriv(x, eigs, T)
        elif target == "lambda":
            eigs = spectrum.laplacian_eigs
            kld_fn = lambda x: kld_lcar(x, eigs, T)
            deriv_fn = lambda x: _kld_lcar_deriv(x, eigs, T)
        else:
            eigs = spectrum.scaled_eigs
            kld_fn = lambda x: kld_bym(x, eigs, T)
            deriv_fn = lambda x: _kld_bym_deriv(x, eigs, T)
        context = {"n": spectrum.n, "T": T}
        uval = u

    k_at_u = kld_fn(uval)
    if k_at_u <= 0.0:
        raise PriorError(f"boundary u={u!r} sits at the base model (zero divergence)")
    psi = rate_num / float(np.sqrt(2.0 * k_at_u))
    return PcPrior(target, u, alpha, psi, kld_fn, deriv_fn, context)


def density(p: PcPrior, theta: float) -> float:
    """Prior density of ``p`` at ``theta``; functional alias of the method."""
    return p.density(theta)
