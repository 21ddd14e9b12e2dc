"""Sparse subspace clustering: l1 self-expression, affinity graph, spectral
clustering, and the k-means kernel.

Each data column is written as a sparse combination of the other columns by
solving, per column i,

    min_c  |c|_1 + (mu / 2) |x_i - X c|_2^2   subject to  c_i = 0,

for all columns jointly via FISTA with per-iteration soft-thresholding; the
zero-diagonal constraint is the exact proximal step of its indicator.  The
affinity W = |C| + |C^T| then feeds normalized spectral clustering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError


@dataclass(frozen=True)
class SelfExpression:
    """Self-expression coefficients and per-column solver diagnostics."""

    C: np.ndarray
    residual_norms: np.ndarray
    solver_iters: np.ndarray
    converged: np.ndarray

    def __post_init__(self):
        n = self.C.shape[0]
        if self.C.shape != (n, n):
            raise UsageError("C must be square")
        if np.any(np.diagonal(self.C) != 0):
            raise UsageError("C must have an exactly zero diagonal")


@dataclass(frozen=True)
class AffinityGraph:
    """Symmetric nonnegative edge weights with zero diagonal."""

    W: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.W, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise UsageError("W must be square")
        if not np.array_equal(w, w.T):
            raise UsageError("W must be exactly symmetric")
        if w.size and w.min() < 0:
            raise UsageError("W must be nonnegative")
        if np.any(np.diagonal(w) != 0):
            raise UsageError("W must have a zero diagonal")
        object.__setattr__(self, "W", w)

    @property
    def n(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class ClusterLabels:
    """0-based cluster labels over n points."""

    labels: np.ndarray
    n_clusters: int

    def __post_init__(self):
        v = np.asarray(self.labels, dtype=np.intp)
        object.__setattr__(self, "labels", v)
        if v.ndim != 1 or v.size == 0:
            raise UsageError("labels must be a nonempty vector")
        if self.n_clusters < 1:
            raise UsageError("n_clusters must be positive")
        if v.min() < 0 or v.max() >= self.n_clusters:
            raise UsageError("label out of range")

    @property
    def empty_clusters(self) -> np.ndarray:
        counts = np.bincount(self.labels, minlength=self.n_clusters)
        return np.flatnonzero(counts == 0)


def default_penalty(x: np.ndarray) -> float:
    """Scale-free default mu = 20 / min_i max_{j != i} |x_i^T x_j|."""
    gram = np.abs(x.T @ x)
    np.fill_diagonal(gram, -np.inf)
    floor = float(np.min(np.max(gram, axis=0)))
    if not np.isfinite(floor) or floor <= 0:
        raise DataError(
            "cannot derive a default self-expression penalty: a column is "
            "orthogonal to all others; pass mu explicitly"
        )
    return 20.0 / floor


def _lipschitz(gram: np.ndarray) -> float:
    # power iteration for the top eigenvalue of the (PSD) Gram matrix
    n = gram.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    for _ in range(200):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v_next = w / norm
        lam_next = float(v_next @ (gram @ v_next))
        if abs(lam_next - lam) <= 1e-12 * max(lam_next, 1.0):
            lam = lam_next
            break
        v, lam = v_next, lam_next
    return lam


def solve_self_expression(
    x: np.ndarray,
    mu: float | None = None,
    solver_tol: float = 1e-5,
    max_iters: int = 200,
) -> SelfExpression:
    """Sparse self-expression of the columns of a D x N data matrix.

    A column is declared converged when the max absolute change of its
    coefficients between successive iterates falls below solver_tol;
    non-convergence within max_iters is reported per column, not fatal.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise UsageError("data must be a D x N matrix")
    if not np.all(np.isfinite(x)):
        raise UsageError("data contains non-finite entries")
    n = x.shape[1]
    if n < 2:
        raise UsageError("self-expression needs at least two columns")
    if mu is None:
        mu = default_penalty(x)
    if mu <= 0:
        raise UsageError(f"penalty mu must be positive, got {mu}")

    gram = x.T @ x
    lip = mu * _lipschitz(gram) * 1.01
    if lip <= 0:
        raise DataError("data matrix is zero; self-expression is undefined")
    t = 1.0 / lip

    c = np.zeros((n, n))
    z = c.copy()
    theta = 1.0
    solver_iters = np.full(n, max_iters, dtype=np.intp)
    converged = np.zeros(n, dtype=bool)
    for it in range(1, max_iters + 1):
        grad = mu * (gram @ z - gram)
        c_new = z - t * grad
        c_new = np.sign(c_new) * np.maximum(np.abs(c_new) - t, 0.0)
        np.fill_diagonal(c_new, 0.0)
        # adaptive restart: drop momentum when it points against the step
        if np.sum((z - c_new) * (c_new - c)) > 0:
            theta = 1.0
        theta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
        z = c_new + ((theta - 1.0) / theta_next) * (c_new - c)
        col_change = np.max(np.abs(c_new - c), axis=0)
        c = c_new
        theta = theta_next
        newly = (col_change < solver_tol) & ~converged
        solver_iters[newly] = it
        converged |= newly
        if converged.all():
            break

    residuals = np.linalg.norm(x - x @ c, axis=0)
    return SelfExpression(C=c, residual_norms=residuals, solver_iters=solver_iters, converged=converged)


def build_affinity(expression: SelfExpression | np.ndarray, top_q: int | None = None) -> AffinityGraph:
    """Affinity W = |C| + |C^T|.

    top_q, when given, keeps only the q largest-magnitude entries per column
    of C before symmetrizing (off by default; the dense graph is the
    reference behavior).
    """
    c = expression.C if isinstance(expression, SelfExpression) else np.asarray(expression, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise UsageError("C must be square")
    a = np.abs(c)
    if top_q is not None:
        if top_q < 1:
            raise UsageError("top_q must be positive")
        if top_q < a.shape[0]:
            cutoff = np.partition(a, -top_q, axis=0)[-top_q]
            a = np.where(a >= cutoff, a, 0.0)
    w = a + a.T
    np.fill_diagonal(w, 0.0)
    return AffinityGraph(W=w)


def spectral_cluster(
    graph: AffinityGraph | np.ndarray,
    k: int,
    seed: int | np.random.Generator = 0,
) -> ClusterLabels:
    """Normalized spectral clustering of an affinity graph.

    Embeds the vertices with the k bottom eigenvectors of
    I - D^{-1/2} W D^{-1/2} (isolated vertices get a zero scaling), row
    normalizes, and clusters the embedding with seeded k-means.
    """
    graph = graph if isinstance(graph, AffinityGraph) else AffinityGraph(np.asarray(graph, dtype=np.float64))
    n = graph.n
    if not 1 <= k <= n:
        raise UsageError(f"cluster count k={k} must lie in [1, {n}]")
    deg = graph.W.sum(axis=1)
    with np.errstate(divide="ignore"):
        dinv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    lap = -(dinv_sqrt[:, None] * graph.W) * dinv_sqrt[None, :]
    lap[np.diag_indices(n)] += 1.0
    lap = 0.5 * (lap + lap.T)
    _, vecs = np.linalg.eigh(lap)
    embedding = vecs[:, :k]
    norms = np.linalg.norm(embedding, axis=1, keepdims=True)
    embedding = embedding / np.where(norms > 1e-12, norms, 1.0)
    return kmeans(embedding, k, seed=seed)


def laplacian_eigenvalues(graph: AffinityGraph) -> np.ndarray:
    """Spectrum of the symmetric normalized Laplacian (diagnostics)."""
    deg = graph.W.sum(axis=1)
    dinv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    lap = -(dinv_sqrt[:, None] * graph.W) * dinv_sqrt[None, :]
    lap[np.diag_indices(graph.n)] += 1.0
    return np.linalg.eigvalsh(0.5 * (lap + lap.T))


def _plus_plus_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    idx = int(rng.integers(n))
    centers[0] = points[idx]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))  # all remaining points coincide
        centers[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def _lloyd(points, centers, max_iters):
    """Lloyd iterations; returns (labels, centers, objective trace)."""
    n, k = points.shape[0], centers.shape[0]
    labels = np.full(n, -1, dtype=np.intp)
    trace = []
    for _ in range(max_iters):
        d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)  # ties go to the lowest center index
        trace.append(float(d2[np.arange(n), new_labels].sum()))
        counts = np.bincount(new_labels, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if empties.size:
            # re-seed each empty cluster to the point farthest from its center
            point_d2 = d2[np.arange(n), new_labels]
            taken: list[int] = []
            for e in empties:
                order = np.argsort(-point_d2, kind="stable")
                far = next(int(i) for i in order if int(i) not in taken)
                taken.append(far)
                centers[e] = points[far]
                new_labels[far] = e
        if np.array_equal(new_labels, labels) and not empties.size:
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if members.size:
                centers[c] = members.mean(axis=0)
    return labels, centers, np.asarray(trace)


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int | np.random.Generator = 0,
    max_iters: int = 300,
) -> ClusterLabels:
    """Seeded k-means++ with Lloyd refinement.

    Deterministic given (points, k, seed); empty clusters are re-seeded to
    the farthest point from its assigned center.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise UsageError("points must be a nonempty N x d matrix")
    if not 1 <= k <= points.shape[0]:
        raise UsageError(f"cluster count k={k} must lie in [1, {points.shape[0]}]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centers = _plus_plus_centers(points, k, rng)
    labels, _, _ = _lloyd(points, centers, max_iters)
    return ClusterLabels(labels=labels, n_clusters=k)
