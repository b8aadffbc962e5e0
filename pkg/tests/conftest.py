"""Shared fixtures and independent dense oracles.

Every oracle here deliberately avoids the library code paths it checks:
eigenvalues come from general (non-symmetric) solvers, constrained
covariances from explicit null-space reduction, and marginal likelihoods
from dense conjugate formulas.
"""

import numpy as np
import pytest
from scipy.linalg import null_space

import stcar


@pytest.fixture
def p3():
    return stcar.build_graph([(0, 1), (1, 2)], 3)


@pytest.fixture
def k3():
    return stcar.build_graph([(0, 1), (0, 2), (1, 2)], 3)


@pytest.fixture
def lattice4():
    return stcar.lattice_graph(4)


def random_graphs(count, n_max, seed=0, n_min=3):
    """Deterministic batch of random connected graphs."""
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(count):
        n = int(rng.integers(n_min, n_max + 1))
        extra = int(rng.integers(0, n))
        graphs.append(stcar.random_connected_graph(n, extra_edges=extra, seed=rng))
    return graphs


def ar1_corr(r, T):
    """Dense AR(1) correlation matrix R_st = r^|s-t|."""
    idx = np.arange(T)
    return r ** np.abs(idx[:, None] - idx[None, :])


def dense_omega(kind, g, xi):
    """Closed-form dense spatial covariance of Eqs-style definitions."""
    L = g.laplacian().toarray()
    n = g.n
    if kind == "ICAR":
        return np.linalg.pinv(L)
    if kind == "PCAR":
        return np.linalg.inv(np.diag(g.degrees) - xi * g.W.toarray())
    if kind == "LCAR":
        return np.linalg.inv(xi * L + (1 - xi) * np.eye(n))
    if kind == "BYM":
        ell, V = np.linalg.eigh(L)
        c = stcar.scaled_laplacian(g)[1]
        inv = np.where(ell > 1e-9 * max(ell.max(), 1.0), 1.0 / np.where(ell > 1e-9, ell, 1.0), 0.0)
        ls_pinv = (V * (inv / c)) @ V.T
        return xi * ls_pinv + (1 - xi) * np.eye(n)
    raise ValueError(kind)


def constrained_cov(Q_dense, A_dense):
    """Exact covariance of the Gaussian with precision Q under A x = 0.

    Null-space reduction; works for singular Q as long as the constraints
    remove the null space.
    """
    F = null_space(A_dense)
    return F @ np.linalg.inv(F.T @ Q_dense @ F) @ F.T


def poisson_glm_irls(y, exposure, M, max_iter=200, tol=1e-12):
    """Plain Poisson GLM with log link and offset, independent IRLS oracle."""
    beta = np.zeros(M.shape[1])
    beta[0] = np.log((y.sum() + 0.5) / exposure.sum())
    for _ in range(max_iter):
        eta = M @ beta
        mu = exposure * np.exp(eta)
        W = mu
        z = eta + (y - mu) / mu
        beta_new = np.linalg.solve(M.T @ (W[:, None] * M), M.T @ (W * z))
        if np.max(np.abs(beta_new - beta)) < tol:
            return beta_new
        beta = beta_new
    return beta
