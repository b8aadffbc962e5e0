"""Areal graphs: adjacency validation, Laplacian spectra, ICAR scaling.

The neighbourhood structure of a set of areal units is a simple undirected
graph.  Everything downstream consumes either the graph matrices (binary
adjacency W, diagonal degree matrix D, Laplacian L = D - W) or their
spectra.  Spectra are computed once per graph and cached, since prior
calibration and eigenvector filtering keep coming back for them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Graph",
    "GraphError",
    "Spectrum",
    "build_graph",
    "spectrum",
    "scaled_laplacian",
    "lattice_graph",
    "random_connected_graph",
    "read_edge_list",
    "read_adjacency_csv",
]

# Relative cutoff under which Laplacian eigenvalues are treated as null
# when forming pseudoinverses.
NULL_EIG_RTOL = 1e-10


class GraphError(ValueError):
    """Invalid adjacency structure (self-loop, isolated node, disconnected)."""


class Graph:
    """Undirected binary-adjacency graph over nodes 0..n-1.

    Use :func:`build_graph` (or one of the readers/generators) to obtain a
    validated instance.  Instances are immutable after construction and may
    be shared freely across threads.

    Attributes
    ----------
    n : int
        Number of nodes.
    edges : tuple of (int, int)
        Deduplicated unordered pairs with i < j.
    W : scipy.sparse.csr_matrix
        Symmetric 0/1 adjacency with zero diagonal.
    degrees : ndarray
        Node degrees; every entry is >= 1.
    """

    def __init__(self, n: int, edges, W: sp.csr_matrix, degrees: np.ndarray):
        self.n = n
        self.edges = edges
        self.W = W
        self.degrees = degrees
        self._spectrum = None
        self._scaled = None

    def laplacian(self) -> sp.csr_matrix:
        """Graph Laplacian L = D - W as a sparse matrix."""
        return (sp.diags(self.degrees) - self.W).tocsr()

    def __repr__(self):
        return f"Graph(n={self.n}, edges={len(self.edges)})"


@dataclass(frozen=True)
class Spectrum:
    """Cached spectral decompositions of a graph.

    Attributes
    ----------
    laplacian_eigs : ndarray
        Eigenvalues of L = D - W, ascending; the first is 0 (exactly one
        null eigenvalue on a connected graph).
    laplacian_vecs : ndarray
        Orthonormal eigenvectors of L, columns aligned with
        ``laplacian_eigs``; the first column is the constant vector.
    rowstoch_eigs : ndarray
        Eigenvalues of D^-1 W, descending; all real with max exactly 1 and
        absolute value <= 1.
    scaled_eigs : ndarray
        Eigenvalues of the pseudoinverse of the scaled Laplacian L_s = c*L,
        aligned with ``laplacian_eigs`` (0 on the null eigenvalue).
    scale : float
        The scaling constant c making the geometric mean of diag(L_s^+)
        equal to one.
    """

    laplacian_eigs: np.ndarray
    laplacian_vecs: np.ndarray
    rowstoch_eigs: np.ndarray
    scaled_eigs: np.ndarray
    scale: float

    @property
    def n(self) -> int:
        return self.laplacian_eigs.shape[0]

    def null_mask(self) -> np.ndarray:
        """Boolean mask of the Laplacian eigenvalues treated as zero."""
        tol = NULL_EIG_RTOL * max(self.laplacian_eigs[-1], 1.0)
        return self.laplacian_eigs < tol


def build_graph(edges, n: int) -> Graph:
    """Construct and validate an areal graph.

    Parameters
    ----------
    edges : iterable of (int, int)
        Unordered node pairs; duplicates are collapsed.
    n : int
        Node count.  Node indices must lie in [0, n).

    Raises
    ------
    GraphError
        On self-loops, out-of-range indices, isolated nodes, or a
        disconnected graph (the component membership is reported).
    """
    if n < 2:
        raise GraphError(f"graph needs at least 2 nodes, got n={n}")
    pairs = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) outside node range [0, {n})")
        pairs.add((min(i, j), max(i, j)))
    pairs = tuple(sorted(pairs))
    if pairs:
        rows = np.fromiter((p[0] for p in pairs), dtype=np.int64)
        cols = np.fromiter((p[1] for p in pairs), dtype=np.int64)
    else:
        rows = cols = np.empty(0, dtype=np.int64)
    data = np.ones(rows.size)
    W = sp.coo_matrix(
        (np.concatenate([data, data]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
    ).tocsr()
    degrees = np.asarray(W.sum(axis=1)).ravel()
    isolated = np.flatnonzero(degrees == 0)
    if isolated.size:
        raise GraphError(f"isolated node(s): {isolated.tolist()}")
    ncomp, labels = connected_components(W, directed=False)
    if ncomp != 1:
        comps = [np.flatnonzero(labels == c).tolist() for c in range(ncomp)]
        raise GraphError(f"graph has {ncomp} connected components: {comps}")
    return Graph(n=n, edges=pairs, W=W, degrees=degrees)


def spectrum(g: Graph) -> Spectrum:
    """Spectral decompositions of ``g``, cached on the graph.

    Computes the dense symmetric eigendecomposition of L = D - W, the
    eigenvalues of D^-1 W (through the similar symmetric matrix
    D^-1/2 W D^-1/2), and the eigenvalues of the scaled pseudoinverse.

    Raises
    ------
    GraphError
        If the eigendecomposition fails to reproduce L to 1e-8.
    """
    if g._spectrum is not None:
        return g._spectrum
    L = g.laplacian().toarray()
    try:
        ell, V = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise GraphError(f"Laplacian eigendecomposition failed: {exc}") from exc
    recon = np.abs(L - (V * ell) @ V.T).max()
    if recon > 1e-8:
        raise GraphError(f"eigendecomposition residual {recon:.2e} exceeds 1e-8")
    ell = np.maximum(ell, 0.0)  # clip round-off on the PSD spectrum
    dinv_sqrt = 1.0 / np.sqrt(g.degrees)
    S = (dinv_sqrt[:, None] * g.W.toarray()) * dinv_sqrt[None, :]
    delta = np.linalg.eigvalsh(S)[::-1]
    c, gamma = _scale_and_gamma(ell, V)
    spec = Spectrum(
        laplacian_eigs=ell,
        laplacian_vecs=V,
        rowstoch_eigs=delta,
        scaled_eigs=gamma,
        scale=c,
    )
    g._spectrum = spec
    return spec


def _scale_and_gamma(ell, V):
    """Scaling constant c and eigenvalues of (c*L)^+."""
    tol = NULL_EIG_RTOL * max(ell[-1], 1.0)
    nz = ell >= tol
    inv = np.where(nz, 1.0 / np.where(nz, ell, 1.0), 0.0)
    diag_pinv = (V**2 * inv) @ np.ones_like(ell)
    c = float(np.exp(np.mean(np.log(diag_pinv))))
    gamma = inv / c
    return c, gamma


def scaled_laplacian(g: Graph):
    """Scaled Laplacian L_s = c*L and the constant c.

    c is chosen so that the geometric mean of the diagonal of the
    pseudoinverse L_s^+ equals one, which makes the marginal variance of
    the intrinsic autoregressive field interpretable on the unit scale.

    Returns
    -------
    (scipy.sparse.csr_matrix, float)
    """
    if g._scaled is None:
        c = spectrum(g).scale
        g._scaled = ((c * g.laplacian()).tocsr(), c)
    return g._scaled


def lattice_graph(side: int, side2: int | None = None) -> Graph:
    """Regular 4-neighbour lattice of ``side`` x ``side2`` nodes."""
    rows, cols = side, side if side2 is None else side2
    edges = []
    for i in range(rows):
        for j in range(cols):
            k = i * cols + j
            if j + 1 < cols:
                edges.append((k, k + 1))
            if i + 1 < rows:
                edges.append((k, k + cols))
    return build_graph(edges, rows * cols)


def random_connected_graph(n: int, extra_edges: int = 0, seed=None) -> Graph:
    """Random connected graph: a random spanning tree plus extra edges."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    edges = [(order[i], order[rng.integers(0, i)]) for i in range(1, n)]
    attempts = 0
    added = 0
    have = {(min(i, j), max(i, j)) for i, j in edges}
    while added < extra_edges and attempts < 50 * (extra_edges + 1):
        i, j = rng.integers(0, n, size=2)
        attempts += 1
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key in have:
            continue
        have.add(key)
        edges.append(key)
        added += 1
    return build_graph(edges, n)


def read_edge_list(path, n: int | None = None) -> Graph:
    """Read a plain-text edge list: one ``i j`` pair per line, 0-based.

    Blank lines and ``#`` comments are ignored.  When ``n`` is omitted it
    is inferred as max index + 1.
    """
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected 'i j', got {raw!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise GraphError(f"{path}:{lineno}: non-integer node id in {raw!r}") from exc
            edges.append((i, j))
    if not edges:
        raise GraphError(f"{path}: no edges found")
    if n is None:
        n = max(max(i, j) for i, j in edges) + 1
    return build_graph(edges, n)


def read_adjacency_csv(path, n: int | None = None) -> Graph:
    """Read a symmetric 0/1 adjacency matrix from a headerless CSV."""
    W = np.loadtxt(path, delimiter=",", ndmin=2)
    if W.shape[0] != W.shape[1]:
        raise GraphError(f"{path}: adjacency matrix must be square, got {W.shape}")
    if not np.array_equal(W, W.T):
        raise GraphError(f"{path}: adjacency matrix is not symmetric")
    if not np.isin(W, (0.0, 1.0)).all():
        raise GraphError(f"{path}: adjacency entries must be 0 or 1")
    if np.any(np.diag(W) != 0):
        raise GraphError(f"{path}: adjacency diagonal must be zero")
    if n is not None and W.shape[0] != n:
        raise GraphError(f"{path}: expected {n} nodes, found {W.shape[0]}")
    ii, jj = np.nonzero(np.triu(W))
    return build_graph(list(zip(ii.tolist(), jj.tolist())), W.shape[0])
