"""Evaluation metrics: recovery error, sign accuracy, and adjusted mutual
information.

AMI uses natural logarithms and the arithmetic-mean normalizer:
(MI - E[MI]) / (mean(H(A), H(B)) - E[MI]), with E[MI] the exact expectation
of MI over contingency tables with the observed marginals under the
permutation (hypergeometric) null model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import UsageError
from .model import BinaryRatings


@dataclass(frozen=True)
class ContingencyTable:
    """Joint label counts of two labelings over the same points."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.size == 0:
            raise UsageError("contingency counts must be a nonempty 2-d array")
        if c.min() < 0:
            raise UsageError("contingency counts must be nonnegative")
        if c.sum() < 1:
            raise UsageError("contingency table must cover at least one point")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_labels(cls, labels_a, labels_b) -> "ContingencyTable":
        a = np.asarray(labels_a).ravel()
        b = np.asarray(labels_b).ravel()
        if a.size != b.size:
            raise UsageError(f"label vectors differ in length: {a.size} vs {b.size}")
        if a.size == 0:
            raise UsageError("label vectors must be nonempty")
        _, ai = np.unique(a, return_inverse=True)
        _, bi = np.unique(b, return_inverse=True)
        counts = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
        np.add.at(counts, (ai, bi), 1)
        return cls(counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def row_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def relative_error(m_est: np.ndarray, m_true: np.ndarray) -> float:
    """Squared-Frobenius recovery error |M - M_true|_F^2 / |M_true|_F^2."""
    m_est = np.asarray(m_est, dtype=np.float64)
    m_true = np.asarray(m_true, dtype=np.float64)
    if m_est.shape != m_true.shape:
        raise UsageError(f"shape mismatch: {m_est.shape} vs {m_true.shape}")
    denom = float(np.sum(m_true**2))
    if denom == 0.0:
        raise UsageError("reference matrix has zero norm")
    return float(np.sum((m_est - m_true) ** 2)) / denom


def accuracy(
    pred: np.ndarray,
    truth: BinaryRatings,
    eval_set: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Fraction of evaluated entries whose predicted sign matches the truth.

    eval_set is an optional (rows, cols) subset of the truth's observed set;
    by default every observed entry of `truth` is evaluated.
    """
    pred = np.asarray(pred)
    if pred.shape != (truth.n_users, truth.n_items):
        raise UsageError("prediction matrix shape does not match ratings")
    if eval_set is None:
        rows, cols = truth.users, truth.items
        values = truth.values
    else:
        rows = np.asarray(eval_set[0], dtype=np.intp)
        cols = np.asarray(eval_set[1], dtype=np.intp)
        flat = rows * truth.n_items + cols
        flat_truth = truth.users * truth.n_items + truth.items
        order = np.argsort(flat_truth)
        sorted_flat = flat_truth[order]
        pos = np.searchsorted(sorted_flat, flat)
        clipped = np.minimum(pos, sorted_flat.size - 1)
        if np.any(pos >= sorted_flat.size) or np.any(sorted_flat[clipped] != flat):
            raise UsageError("eval_set contains entries outside the observed set")
        values = truth.values[order[clipped]]
    if rows.size == 0:
        raise UsageError("evaluation set is empty")
    return float(np.mean(np.sign(pred[rows, cols]) == values))


def expected_mutual_information(row_marginals, col_marginals) -> float:
    """E[MI] under the fixed-marginals hypergeometric model, in nats."""
    a = np.asarray(row_marginals, dtype=np.int64)
    b = np.asarray(col_marginals, dtype=np.int64)
    n = int(a.sum())
    if n != int(b.sum()) or n < 1:
        raise UsageError("marginals must be positive and agree on the total")
    lg_n = gammaln(n + 1)
    lg_a = gammaln(a + 1)
    lg_b = gammaln(b + 1)
    lg_na = gammaln(n - a + 1)
    lg_nb = gammaln(n - b + 1)
    total = 0.0
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            if bj == 0:
                continue
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            nij = np.arange(lo, hi + 1)
            log_p = (
                lg_a[i]
                + lg_b[j]
                + lg_na[i]
                + lg_nb[j]
                - lg_n
                - gammaln(nij + 1)
                - gammaln(ai - nij + 1)
                - gammaln(bj - nij + 1)
                - gammaln(n - ai - bj + nij + 1)
            )
            total += float(np.sum((nij / n) * np.log(n * nij / (ai * bj)) * np.exp(log_p)))
    return total


def _mutual_information(table: ContingencyTable) -> float:
    n = table.n
    a = table.row_marginals
    b = table.col_marginals
    nz = table.counts > 0
    rows, cols = np.nonzero(nz)
    nij = table.counts[rows, cols].astype(np.float64)
    return float(np.sum((nij / n) * np.log(n * nij / (a[rows] * b[cols]))))


def _entropy(marginals: np.ndarray, n: int) -> float:
    m = marginals[marginals > 0].astype(np.float64)
    return float(np.sum((m / n) * np.log(n / m)))


def adjusted_mutual_information(labels_a, labels_b) -> float:
    """Chance-adjusted mutual information of two labelings.

    Symmetric, 1 for identical partitions, and approximately 0 in
    expectation for independent labelings.  When both labelings are
    constant the normalizer vanishes; that degenerate case returns 1
    because two single-cluster labelings induce the same partition.
    """
    table = ContingencyTable.from_labels(labels_a, labels_b)
    n = table.n
    mi = _mutual_information(table)
    emi = expected_mutual_information(table.row_marginals, table.col_marginals)
    mean_h = 0.5 * (_entropy(table.row_marginals, n) + _entropy(table.col_marginals, n))
    denom = mean_h - emi
    if abs(denom) <= 1e-12 * max(mean_h, abs(emi), 1.0):
        # degenerate normalizer (e.g. both labelings constant): score by
        # whether the two labelings induce the same partition
        one_per_row = np.all((table.counts > 0).sum(axis=1) == 1)
        one_per_col = np.all((table.counts > 0).sum(axis=0) == 1)
        return 1.0 if one_per_row and one_per_col else 0.0
    return (mi - emi) / denom
