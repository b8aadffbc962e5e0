"""Joint spatio-temporal Gaussian Markov random fields.

The latent field couples a first-order autoregression in time with one of
the spatial structures: the joint precision is the Kronecker product
``sigma^-2 * B (x) Q`` where B is the tridiagonal stationary AR(1)
precision and Q the spatial precision (augmented for BYM).  Identifiability
against the intercepts is enforced by one sum-to-zero constraint per time
slice, imposed by conditioning by kriging so that a single code path covers
all four structures.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy import linalg

from .structures import SpatialStructure, log_generalized_det

__all__ = [
    "FieldError",
    "SpaceTimeField",
    "ar1_precision",
    "joint_precision",
    "sample_constrained",
    "log_density",
]

DEFAULT_JITTER = 1e-8


class FieldError(ValueError):
    """Invalid field parameters or constraint violation."""


def ar1_precision(r: float, T: int) -> sp.csr_matrix:
    """Stationary AR(1) precision, B = (1 - r^2) * R^-1.

    Tridiagonal with diagonal (1, 1 + r^2, ..., 1 + r^2, 1) and
    off-diagonal -r; for T = 1 it degenerates to the scalar 1 - r^2.
    """
    if not abs(r) < 1.0:
        raise FieldError(f"temporal autocorrelation must satisfy |r| < 1, got {r!r}")
    if T < 1:
        raise FieldError(f"need T >= 1, got {T}")
    if T == 1:
        return sp.csr_matrix(np.array([[1.0 - r * r]]))
    main = np.full(T, 1.0 + r * r)
    main[0] = main[-1] = 1.0
    off = np.full(T - 1, -r)
    return sp.diags([off, main, off], offsets=(-1, 0, 1)).tocsr()


def _constraint_matrix(structure: SpatialStructure, T: int) -> sp.csr_matrix:
    """One sum-to-zero row per time slice (on U for BYM)."""
    n, b = structure.n, structure.block_size
    offset = b - n if structure.constrain_second_block else 0
    rows, cols = [], []
    for t in range(T):
        rows.extend([t] * n)
        cols.extend(range(t * b + offset, t * b + offset + n))
    data = np.ones(len(rows))
    return sp.csr_matrix((data, (rows, cols)), shape=(T, T * b))


def joint_precision(structure: SpatialStructure, sigma: float, r: float, T: int):
    """Joint space-time precision and its per-slice constraint matrix.

    Returns
    -------
    (scipy.sparse.csr_matrix, scipy.sparse.csr_matrix)
        The ``T * block_size`` square precision ``sigma^-2 * B (x) Q`` and
        the T-row constraint matrix A with A z = 0.
    """
    if sigma <= 0:
        raise FieldError(f"marginal standard deviation must be positive, got {sigma!r}")
    B = ar1_precision(r, T)
    Q = sp.kron(B, structure.Q, format="csr") / sigma**2
    return Q, _constraint_matrix(structure, T)


class SpaceTimeField:
    """Immutable AR(1)-in-time x CAR-in-space latent field.

    Attributes
    ----------
    joint_Q : scipy.sparse.csr_matrix
        Precision of the stacked field (time-major; for BYM each time block
        is (Z_t, U_t) of length 2n).
    A : scipy.sparse.csr_matrix
        Per-slice sum-to-zero constraint rows.
    z_indices : ndarray
        Positions of the observable components Z within the stacked vector.
    """

    def __init__(self, structure: SpatialStructure, sigma: float, r: float, T: int,
                 jitter: float = DEFAULT_JITTER):
        self.structure = structure
        self.sigma = float(sigma)
        self.r = float(r)
        self.T = int(T)
        self.n = structure.n
        self.jitter = jitter
        self.joint_Q, self.A = joint_precision(structure, sigma, r, T)
        self.dim = self.joint_Q.shape[0]
        b = structure.block_size
        self.z_indices = np.concatenate([np.arange(t * b, t * b + self.n) for t in range(T)])
        self.rank = structure.rank * T

    def extract_observed(self, x: np.ndarray) -> np.ndarray:
        """Observable Z components of a stacked vector (or draw matrix)."""
        return x[self.z_indices] if x.ndim == 1 else x[self.z_indices, :]

    def jittered_precision(self) -> sp.csr_matrix:
        """Precision with diagonal jitter when the structure is singular."""
        if self.rank == self.dim:
            return self.joint_Q
        eps = self.jitter * self.joint_Q.diagonal().mean()
        return (self.joint_Q + eps * sp.eye(self.dim)).tocsr()

    def log_generalized_det(self) -> float:
        """Log generalized determinant of the joint precision.

        Product-eigenvalue identity for the Kronecker form: the joint
        eigenvalues are sigma^-2 * b_j * q_i, so the nonzero part reduces
        to rank * ln det B + T * loggdet(Q) - 2 T rank ln sigma with
        ln det B = ln(1 - r^2).
        """
        rank_q = self.structure.rank
        return (
            rank_q * float(np.log1p(-self.r**2))
            + self.T * log_generalized_det(self.structure)
            - 2.0 * self.T * rank_q * np.log(self.sigma)
        )

    def sample(self, seed=None, size: int = 1) -> np.ndarray:
        """Draw ``size`` constrained field vectors, shape (dim, size).

        Unconstrained draws from the (jittered) precision are corrected by
        conditioning by kriging onto {A z = 0}.
        """
        rng = np.random.default_rng(seed)
        Qd = self.jittered_precision().toarray()
        try:
            U = linalg.cholesky(Qd, lower=False)
        except linalg.LinAlgError as exc:
            raise FieldError(
                f"field precision not positive definite at sigma={self.sigma:g}, "
                f"r={self.r:g} ({exc})"
            ) from exc
        z = rng.standard_normal((self.dim, size))
        x = linalg.solve_triangular(U, z, lower=False)  # x ~ N(0, Q^-1)
        # kriging correction: x* = x - Q^-1 A' (A Q^-1 A')^-1 A x
        At = self.A.T.toarray()
        V = linalg.cho_solve((U, False), At)
        K = self.A @ V
        corr = V @ np.linalg.solve(K, self.A @ x)
        return x - corr

    def log_density(self, z: np.ndarray) -> float:
        """Gaussian log density of a constrained vector ``z``.

        Normalized on the constraint subspace up to the constraint-geometry
        constant, so differences between two vectors are exact.
        """
        z = np.asarray(z, dtype=float)
        viol = np.abs(self.A @ z).max()
        if viol > 1e-6:
            raise FieldError(f"constraint violation |A z|_max = {viol:.3e} exceeds 1e-6")
        quad = float(z @ (self.joint_Q @ z))
        return 0.5 * self.log_generalized_det() - 0.5 * quad - 0.5 * self.rank * np.log(2.0 * np.pi)


def sample_constrained(field: SpaceTimeField, seed=None, size: int = 1) -> np.ndarray:
    """Draw constrained field vectors; single draws come back 1-d."""
    x = field.sample(seed=seed, size=size)
    return x[:, 0] if size == 1 else x


def log_density(field: SpaceTimeField, z: np.ndarray) -> float:
    return field.log_density(z)
