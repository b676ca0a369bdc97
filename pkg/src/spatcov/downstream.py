"""Posterior summaries into scientific outputs: networks and spatial clusters."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from . import rngstreams
from .spatial import pairwise_distances


def partial_correlations(precision) -> np.ndarray:
    """Partial correlations -P_ij / sqrt(P_ii P_jj) from a precision matrix."""
    prec = np.asarray(precision, dtype=np.float64)
    d = np.diag(prec)
    if np.any(d <= 0):
        raise ValueError("precision matrix has nonpositive diagonal entries")
    s = 1.0 / np.sqrt(d)
    pcorr = -prec * s[:, None] * s[None, :]
    pcorr = np.clip(0.5 * (pcorr + pcorr.T), -1.0, 1.0)
    np.fill_diagonal(pcorr, 1.0)
    return pcorr


@dataclass
class GeneNetwork:
    """Thresholded partial-correlation network; edges are (i, j, weight), i < j."""

    gene_names: list
    pcorr: np.ndarray
    edges: list
    cutoff: float

    def named_edges(self):
        return [(self.gene_names[i], self.gene_names[j], w) for i, j, w in self.edges]


def threshold_network(pcorr, cutoff: float, gene_names=None) -> GeneNetwork:
    """Keep every pair with |partial correlation| >= cutoff; weights keep sign."""
    mat = np.asarray(pcorr, dtype=np.float64)
    if cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    n = mat.shape[0]
    if gene_names is None:
        gene_names = [f"g{i + 1}" for i in range(n)]
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if abs(mat[i, j]) >= cutoff:
                edges.append((i, j, float(mat[i, j])))
    return GeneNetwork(gene_names=list(gene_names), pcorr=mat, edges=edges, cutoff=cutoff)


def correlation_vs_distance(col_corr, locs) -> np.ndarray:
    """(distance, correlation) for every pair i < j, row-major order."""
    corr = np.asarray(col_corr, dtype=np.float64)
    dist = pairwise_distances(locs)
    if corr.shape != dist.shape:
        raise ValueError("correlation matrix and locations disagree in size")
    iu = np.triu_indices(corr.shape[0], k=1)
    return np.column_stack([dist[iu], corr[iu]])


def normalized_laplacian(similarity, negative: str = "clamp") -> np.ndarray:
    """I - D^-1/2 W D^-1/2 after zeroing the diagonal and de-signing the weights.

    ``negative`` picks how negative similarities become valid weights:
    "clamp" zeroes them (default), "abs" keeps magnitudes. Isolated nodes get
    an identity row. Eigenvalues land in [0, 2].
    """
    w = np.asarray(similarity, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("similarity must be square")
    if not np.allclose(w, w.T, atol=1e-8):
        raise ValueError("similarity must be symmetric")
    w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 0.0)
    if negative == "clamp":
        w = np.where(w < 0, 0.0, w)
    elif negative == "abs":
        w = np.abs(w)
    else:
        raise ValueError(f"negative must be 'clamp' or 'abs', got {negative!r}")
    deg = w.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    lap = -w * inv_sqrt[:, None] * inv_sqrt[None, :]
    np.fill_diagonal(lap, 1.0)
    return 0.5 * (lap + lap.T)


def _fix_signs(vecs):
    # first entry of non-negligible magnitude is made positive
    for col in range(vecs.shape[1]):
        v = vecs[:, col]
        nz = np.flatnonzero(np.abs(v) > 1e-12 * np.max(np.abs(v)))
        if nz.size and v[nz[0]] < 0:
            vecs[:, col] = -v
    return vecs


def spectral_embedding(laplacian, k: int) -> np.ndarray:
    """Orthonormal eigenvectors of the k smallest eigenvalues, ascending.

    Sign convention: the first non-negligible entry of each column is
    positive.
    """
    lap = np.asarray(laplacian, dtype=np.float64)
    n = lap.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    _vals, vecs = eigh(lap, subset_by_index=[0, k - 1])
    return _fix_signs(vecs)


def laplacian_eigenvalues(laplacian, k: int) -> np.ndarray:
    """The k smallest eigenvalues of the Laplacian, ascending."""
    lap = np.asarray(laplacian, dtype=np.float64)
    k = min(k, lap.shape[0])
    vals = eigh(lap, subset_by_index=[0, k - 1], eigvals_only=True)
    return vals


def _kmeanspp_init(points, n_clusters, rng):
    n = points.shape[0]
    centers = np.empty((n_clusters, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, n_clusters):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = int(rng.integers(n))
        centers[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def _lloyd(points, centers, max_iter):
    n, n_clusters = points.shape[0], centers.shape[0]
    labels = np.full(n, -1)
    for _ in range(max_iter):
        d2 = (
            np.sum(points**2, axis=1)[:, None]
            - 2.0 * points @ centers.T
            + np.sum(centers**2, axis=1)[None, :]
        )
        new_labels = np.argmin(d2, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(n_clusters):
            members = points[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
            else:
                # revive an empty cluster at the worst-fit point
                worst = np.argmax(np.sum((points - centers[labels]) ** 2, axis=1))
                centers[c] = points[worst]
    wcss = float(np.sum((points - centers[labels]) ** 2))
    return labels, wcss


def kmeans(points, n_clusters: int, seed: int = 0, restarts: int = 10, max_iter: int = 300):
    """Lloyd's algorithm with k-means++ starts; best of ``restarts`` by WCSS.

    Returns (labels in {1..K}, wcss). Deterministic given the seed: each
    restart draws from its own keyed substream.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must lie in [1, {n}], got {n_clusters}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best_labels, best_wcss = None, np.inf
    for rest in range(restarts):
        rng = rngstreams.substream(seed, rngstreams.KMEANS, rest)
        centers = _kmeanspp_init(pts, n_clusters, rng)
        labels, wcss = _lloyd(pts, centers, max_iter)
        if wcss < best_wcss:
            best_labels, best_wcss = labels, wcss
    return best_labels + 1, best_wcss


@dataclass
class ClusterResult:
    """Spectral clustering output: 1-based labels, WCSS, spectrum, embedding."""

    labels: np.ndarray
    wcss: float
    eigenvalues: np.ndarray
    embedding: np.ndarray


def cluster_cells(
    similarity,
    k: int,
    n_clusters: int,
    seed: int = 0,
    restarts: int = 10,
    negative: str = "clamp",
) -> ClusterResult:
    """Spectral clustering of a similarity matrix: Laplacian, k-dim embedding, k-means."""
    lap = normalized_laplacian(similarity, negative=negative)
    eigenvalues = laplacian_eigenvalues(lap, k)
    embedding = spectral_embedding(lap, k)
    labels, wcss = kmeans(embedding, n_clusters, seed=seed, restarts=restarts)
    return ClusterResult(labels=labels, wcss=wcss, eigenvalues=eigenvalues, embedding=embedding)


def elbow_diagnostics(
    similarity,
    k: int,
    k_max: int = 10,
    cluster_max: int = 10,
    seed: int = 0,
    restarts: int = 10,
    negative: str = "clamp",
):
    """Plot-ready elbow data: leading Laplacian spectrum and a WCSS-vs-K curve.

    The WCSS curve runs K = 1..cluster_max on the k-dimensional embedding.
    No elbow is selected automatically; a human reads the plots.
    """
    lap = normalized_laplacian(similarity, negative=negative)
    eigenvalues = laplacian_eigenvalues(lap, k_max)
    embedding = spectral_embedding(lap, k)
    cluster_max = min(cluster_max, lap.shape[0])
    wcss = np.empty(cluster_max)
    for n_clusters in range(1, cluster_max + 1):
        _, wcss[n_clusters - 1] = kmeans(embedding, n_clusters, seed=seed, restarts=restarts)
    return eigenvalues, wcss
