"""Masked logistic loss and its analytic gradients.

The data term is F = -sum over observed entries of [ y=+1 ] log f(M_ui) +
[ y=-1 ] log(1 - f(M_ui)), evaluated in softplus form so large |M_ui| never
produces log(0).  The regularized objective adds lam * (sum of squared
Frobenius norms of the four factor blocks); since the penalty carries no 1/2,
its gradient contributes 2*lam times each block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import UsageError
from .model import BinaryRatings, FactorSet, GroupAssignment, expand_group_factors, sigmoid


@dataclass(frozen=True)
class ObservationMasks:
    """0/1 masks of observed +1 and -1 entries, plus cached index arrays.

    y_pos and y_neg are disjoint; their sum indicates the observed set.
    rows/cols/signs list the observed entries in row-major order and drive
    the sparse evaluation paths.
    """

    y_pos: np.ndarray
    y_neg: np.ndarray

    def __post_init__(self):
        y_pos = _as_mask(self.y_pos, "y_pos")
        y_neg = _as_mask(self.y_neg, "y_neg")
        if y_pos.shape != y_neg.shape:
            raise UsageError("mask shapes differ")
        if np.any(y_pos * y_neg != 0):
            raise UsageError("y_pos and y_neg overlap")
        object.__setattr__(self, "y_pos", y_pos)
        object.__setattr__(self, "y_neg", y_neg)
        rows, cols = np.nonzero(y_pos + y_neg)
        signs = np.where(y_pos[rows, cols] > 0, 1.0, -1.0)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "signs", signs)

    @property
    def shape(self):
        return self.y_pos.shape

    @property
    def n_observed(self) -> int:
        return self.rows.size


@dataclass(frozen=True)
class GradientSet:
    """Gradient blocks matching a FactorSet's shapes."""

    dP: np.ndarray
    dQ: np.ndarray
    dS: np.ndarray
    dT: np.ndarray


def _as_mask(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise UsageError(f"{name} must be 2-d")
    if not np.all((a == 0) | (a == 1)):
        raise UsageError(f"{name} must contain only 0/1")
    return a


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + exp(x)) without overflow: log1p(exp(-|x|)) + max(x, 0)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def masks_from_observations(ratings: BinaryRatings) -> ObservationMasks:
    """Split a BinaryRatings into its +1 and -1 indicator masks."""
    y_pos = np.zeros((ratings.n_users, ratings.n_items))
    y_neg = np.zeros((ratings.n_users, ratings.n_items))
    pos = ratings.values > 0
    y_pos[ratings.users[pos], ratings.items[pos]] = 1.0
    y_neg[ratings.users[~pos], ratings.items[~pos]] = 1.0
    return ObservationMasks(y_pos, y_neg)


def _margins(a: np.ndarray, b: np.ndarray, masks: ObservationMasks) -> np.ndarray:
    """M restricted to observed entries, from the two factor sides."""
    return np.einsum("ij,ij->i", a[masks.rows], b[masks.cols])


def _loss_from_margins(m_obs: np.ndarray, signs: np.ndarray) -> float:
    # -log f(m) = softplus(-m) and -log(1 - f(m)) = softplus(m)
    return float(np.sum(_softplus(-signs * m_obs)))


def loss_f(m: np.ndarray, masks: ObservationMasks) -> float:
    """Masked logistic loss of a dense propensity matrix."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != masks.shape:
        raise UsageError(f"matrix shape {m.shape} does not match masks {masks.shape}")
    if not np.all(np.isfinite(m)):
        raise UsageError("propensity matrix contains non-finite entries")
    return _loss_from_margins(m[masks.rows, masks.cols], masks.signs)


def _sides(factors: FactorSet, assignment: GroupAssignment):
    a = factors.P + expand_group_factors(factors.S, assignment.user_groups)
    b = factors.Q + expand_group_factors(factors.T, assignment.item_groups)
    return a, b


def loss_l(
    factors: FactorSet,
    assignment: GroupAssignment,
    masks: ObservationMasks,
    lam: float,
) -> float:
    """Regularized objective F + lam * (|P|_F^2 + |S|_F^2 + |Q|_F^2 + |T|_F^2)."""
    if lam < 0:
        raise UsageError(f"regularization weight must be nonnegative, got {lam}")
    a, b = _sides(factors, assignment)
    data = _loss_from_margins(_margins(a, b, masks), masks.signs)
    return data + lam * factors.frobenius_penalty()


def grad_m(m: np.ndarray, masks: ObservationMasks) -> np.ndarray:
    """Gradient of loss_f with respect to the dense matrix.

    Zero off the observed set; f(M)-1 at observed +1 entries and f(M) at
    observed -1 entries.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != masks.shape:
        raise UsageError(f"matrix shape {m.shape} does not match masks {masks.shape}")
    m_obs = m[masks.rows, masks.cols]
    g = np.zeros_like(m)
    g[masks.rows, masks.cols] = _grad_margins(m_obs, masks.signs)
    return g


def _grad_margins(m_obs: np.ndarray, signs: np.ndarray) -> np.ndarray:
    # d/dm softplus(-s*m) = -s * sigmoid(-s*m)
    return -signs * sigmoid(-signs * m_obs)


def _scatter(masks: ObservationMasks, values: np.ndarray) -> sp.csr_matrix:
    return sp.csr_matrix(
        (values, (masks.rows, masks.cols)), shape=masks.shape
    )


def _group_rowsum(rows: np.ndarray, labels: np.ndarray, n_groups: int) -> np.ndarray:
    out = np.zeros((n_groups, rows.shape[1]))
    np.add.at(out, labels, rows)
    return out


def grad_all(
    factors: FactorSet,
    assignment: GroupAssignment,
    masks: ObservationMasks,
    lam: float,
) -> GradientSet:
    """All four gradient blocks of loss_l.

    dP = grad_m(M) (Q+T) + 2 lam P and dQ = grad_m(M)^T (P+S) + 2 lam Q;
    the group blocks sum the unpenalized per-entity rows over each group
    before adding their own 2 lam term.
    """
    if lam < 0:
        raise UsageError(f"regularization weight must be nonnegative, got {lam}")
    a, b = _sides(factors, assignment)
    if masks.shape != (a.shape[0], b.shape[0]):
        raise UsageError(f"masks {masks.shape} do not match model {(a.shape[0], b.shape[0])}")
    g_obs = _grad_margins(_margins(a, b, masks), masks.signs)
    g = _scatter(masks, g_obs)
    dfd_a = g @ b
    dfd_b = g.T @ a
    return GradientSet(
        dP=dfd_a + 2.0 * lam * factors.P,
        dQ=dfd_b + 2.0 * lam * factors.Q,
        dS=_group_rowsum(dfd_a, assignment.user_groups, assignment.n_user_groups)
        + 2.0 * lam * factors.S,
        dT=_group_rowsum(dfd_b, assignment.item_groups, assignment.n_item_groups)
        + 2.0 * lam * factors.T,
    )
