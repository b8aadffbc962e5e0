"""Sparse symmetric-positive-definite factorizations.

One factor object serves both solves and log-determinants, so every
quantity derived from a precision matrix comes from the same
decomposition.  SuperLU with a fill-reducing ordering is the backend; for
the SPD matrices used here its diagonal pivots are positive and the
log-determinant is the sum of their logs.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

__all__ = ["FactorError", "SparseFactor"]


class FactorError(RuntimeError):
    """Factorization failure, typically a non-positive-definite matrix."""


class SparseFactor:
    """LU factorization of a sparse SPD matrix with solve and logdet."""

    def __init__(self, Q: sp.spmatrix):
        self.shape = Q.shape
        try:
            self._lu = splu(Q.tocsc())
        except RuntimeError as exc:
            raise FactorError(f"sparse factorization failed: {exc}") from exc
        diag_u = self._lu.U.diagonal()
        if np.any(diag_u == 0.0):
            raise FactorError("exactly singular matrix in sparse factorization")
        self._logdet = float(np.sum(np.log(np.abs(diag_u))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve Q x = b for one or many right-hand sides."""
        return self._lu.solve(np.asarray(b, dtype=float))

    @property
    def logdet(self) -> float:
        """log |det Q| from the factor diagonal."""
        return self._logdet
