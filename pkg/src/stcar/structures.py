"""Spatial variance specifications: ICAR, PCAR, LCAR, BYM.

Each structure is represented through its precision matrix (the inverse of
the spatial covariance), which stays sparse for all four kinds.  The BYM
convolution has a dense covariance, so it is stored in the augmented
``(Z, U)`` parameterization whose joint precision is sparse but singular;
the observable component Z occupies the first ``n`` entries of each block.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .graphs import Graph, Spectrum, scaled_laplacian, spectrum

__all__ = [
    "KINDS",
    "SpatialStructure",
    "StructureError",
    "build_structure",
    "structure_covariance_eigs",
    "log_generalized_det",
]

KINDS = ("ICAR", "PCAR", "LCAR", "BYM")


class StructureError(ValueError):
    """Invalid spatial-structure specification."""


class SpatialStructure:
    """A spatial precision specification with rank and constraint metadata.

    Attributes
    ----------
    kind : str
        One of ``KINDS``.
    Q : scipy.sparse.csr_matrix
        Precision matrix; for BYM the augmented 2n x 2n precision of
        ``(Z, U)`` at unit scale.
    rank : int
        Effective rank of Q (n - 1 for ICAR, 2n - 1 for BYM, n otherwise).
    xi : float or None
        Mixing/autocorrelation parameter; None for ICAR.
    needs_sum_zero : bool
        All four kinds carry one sum-to-zero constraint per time slice;
        for BYM it binds the U components.
    block_size : int
        Dimension of Q (2n for BYM, n otherwise).
    """

    def __init__(self, kind, Q, rank, xi, spectrum_, n, degrees=None, scale=None):
        self.kind = kind
        self.Q = Q
        self.rank = rank
        self.xi = xi
        self.spectrum = spectrum_
        self.n = n
        self.degrees = degrees
        self.scale = scale
        self.needs_sum_zero = True
        self.block_size = Q.shape[0]

    @property
    def augmented(self) -> bool:
        return self.kind == "BYM"

    @property
    def constrain_second_block(self) -> bool:
        """True when the sum-to-zero constraint binds the auxiliary block."""
        return self.kind == "BYM"

    def __repr__(self):
        xi = "" if self.xi is None else f", xi={self.xi:g}"
        return f"SpatialStructure({self.kind}{xi}, n={self.n})"


def _check_xi(kind, xi):
    if kind == "ICAR":
        return None
    if xi is None:
        raise StructureError(f"{kind} requires a mixing parameter in [0, 1)")
    xi = float(xi)
    if not (0.0 <= xi < 1.0):
        raise StructureError(
            f"{kind} parameter must lie in [0, 1), got {xi!r}"
            " (the intrinsic limit is requested as kind='ICAR')"
        )
    return xi


def build_structure(kind: str, g: Graph, xi: float | None = None) -> SpatialStructure:
    """Build one of the four spatial precision structures.

    Parameters
    ----------
    kind : {"ICAR", "PCAR", "LCAR", "BYM"}
    g : Graph
    xi : float, optional
        Autocorrelation rho (PCAR), precision-mixing lambda (LCAR) or
        variance-mixing phi (BYM), all restricted to [0, 1).  Ignored for
        ICAR.
    """
    if kind not in KINDS:
        raise StructureError(f"unknown structure kind {kind!r}; expected one of {KINDS}")
    xi = _check_xi(kind, xi)
    spec = spectrum(g)
    n = g.n
    L = g.laplacian()
    if kind == "ICAR":
        return SpatialStructure("ICAR", L, n - 1, None, spec, n)
    if kind == "PCAR":
        Q = (sp.diags(g.degrees) - xi * g.W).tocsr()
        return SpatialStructure("PCAR", Q, n, xi, spec, n, degrees=g.degrees)
    if kind == "LCAR":
        Q = (xi * L + (1.0 - xi) * sp.eye(n)).tocsr()
        return SpatialStructure("LCAR", Q, n, xi, spec, n)
    # BYM: joint precision of (Z, U) with Z = sqrt(phi) U + sqrt(1-phi) V,
    # U intrinsic with the scaled Laplacian and V white noise.
    Ls, c = scaled_laplacian(g)
    phi = xi
    eye = sp.eye(n)
    Qzz = eye / (1.0 - phi)
    Qzu = -(np.sqrt(phi) / (1.0 - phi)) * eye
    Quu = (phi / (1.0 - phi)) * eye + Ls
    Q = sp.bmat([[Qzz, Qzu], [Qzu, Quu]]).tocsr()
    return SpatialStructure("BYM", Q, 2 * n - 1, phi, spec, n, scale=c)


def structure_covariance_eigs(kind: str, spec: Spectrum, xi: float) -> np.ndarray:
    """Eigenvalues of the spatial covariance relative to its base model.

    PCAR is taken relative to D^-1, LCAR and BYM relative to the identity.
    ICAR has no free parameter and is rejected.
    """
    if kind == "ICAR":
        raise StructureError("ICAR has no mixing parameter; covariance eigenvalues undefined")
    xi = _check_xi(kind, xi)
    if kind == "PCAR":
        return 1.0 / (1.0 - xi * spec.rowstoch_eigs)
    if kind == "LCAR":
        return 1.0 / (xi * (spec.laplacian_eigs - 1.0) + 1.0)
    if kind == "BYM":
        return xi * (spec.scaled_eigs - 1.0) + 1.0
    raise StructureError(f"unknown structure kind {kind!r}")


def log_generalized_det(s: SpatialStructure) -> float:
    """Sum of the logs of the ``rank`` largest eigenvalues of Q.

    Evaluated in closed form from the cached graph spectrum; for the
    full-rank kinds this equals the ordinary log-determinant.
    """
    spec = s.spectrum
    nz = ~spec.null_mask()
    if s.kind == "ICAR":
        return float(np.sum(np.log(spec.laplacian_eigs[nz])))
    if s.kind == "PCAR":
        return float(
            np.sum(np.log(s.degrees)) + np.sum(np.log1p(-s.xi * spec.rowstoch_eigs))
        )
    if s.kind == "LCAR":
        return float(np.sum(np.log(s.xi * (spec.laplacian_eigs - 1.0) + 1.0)))
    # BYM: in the Laplacian eigenbasis the augmented precision splits into
    # 2x2 blocks with determinant c*ell/(1-phi); the block at the null
    # eigenvalue contributes its single nonzero eigenvalue (1+phi)/(1-phi).
    phi = s.xi
    ls = s.scale * spec.laplacian_eigs[nz]
    return float(np.sum(np.log(ls / (1.0 - phi))) + np.log((1.0 + phi) / (1.0 - phi)))
