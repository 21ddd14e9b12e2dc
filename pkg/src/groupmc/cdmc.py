"""Cluster-developing completion: alternate factor training with rediscovery
of the user/item groups via sparse subspace clustering of the rating
likelihood matrix.

One run: draw random groups, train the factor model, then per epoch (1)
self-express the columns of f(M) (items) and of f(M)^T (users), (2) build
the two affinity graphs and spectral-cluster them into the requested group
counts, (3) carry each new group's bias row over from the old group that
contributed the plurality of its members, and (4) run a small number of
block-training cycles.  The loop stops when consecutive-epoch labels agree
at AMI >= 0.999 on both sides, or at the epoch cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import ClusterLabels, build_affinity, solve_self_expression, spectral_cluster
from .errors import UsageError
from .metrics import accuracy, adjusted_mutual_information
from .model import BinaryRatings, GroupAssignment, assemble_m, binarize_predictions, sigmoid
from .objective import masks_from_observations
from .seeding import (
    STREAM_GROUP_INIT,
    STREAM_SPECTRAL_ITEMS,
    STREAM_SPECTRAL_USERS,
    stream_rng,
)
from .training import BlockCoordinateTrainer, FitResult, TrainConfig, fit_gs1mc

LABEL_AMI_CONVERGENCE = 0.999


@dataclass(frozen=True)
class CdmcConfig:
    train: TrainConfig
    n_user_groups: int = 10
    n_item_groups: int = 10
    outer_epochs: int = 200
    inner_steps: int = 5  # block-training cycles per epoch
    ssc_mu: float | None = None  # None: scale-free default per data matrix
    ssc_tol: float = 1e-4
    ssc_max_iters: int = 150
    recluster: bool = True  # False: keep the initial random groups (debug aid)
    seed: int = 0

    def __post_init__(self):
        if self.outer_epochs < 1:
            raise UsageError("outer_epochs must be at least 1")
        if self.inner_steps < 0:
            raise UsageError("inner_steps must be nonnegative")
        if self.n_user_groups < 1 or self.n_item_groups < 1:
            raise UsageError("group counts must be positive")
        if self.ssc_mu is not None and self.ssc_mu <= 0:
            raise UsageError("ssc_mu must be positive when given")
        if self.ssc_tol <= 0 or self.ssc_max_iters < 1:
            raise UsageError("ssc_tol must be positive and ssc_max_iters at least 1")


@dataclass
class CdmcTrace:
    """Per-epoch record of one run."""

    user_labels: list = field(default_factory=list)
    item_labels: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    holdout_misclassification: list = field(default_factory=list)
    user_ami: list = field(default_factory=list)  # vs previous epoch's labels
    item_ami: list = field(default_factory=list)
    converged: bool = False

    @property
    def n_epochs(self) -> int:
        return len(self.losses)


def _carry_over(old_rows: np.ndarray, old_labels: np.ndarray, new_labels: np.ndarray) -> np.ndarray:
    """Map each new group to the bias row of its plurality old group."""
    n_groups = old_rows.shape[0]
    new_rows = np.zeros_like(old_rows)
    for g in range(n_groups):
        members = old_labels[new_labels == g]
        if members.size == 0:
            continue
        counts = np.bincount(members, minlength=n_groups)
        new_rows[g] = old_rows[np.argmax(counts)]  # argmax takes the lowest on ties
    return new_rows


def _misclassification(factors, assignment, holdout: BinaryRatings | None) -> float:
    if holdout is None or holdout.n_observed == 0:
        return float("nan")
    pred = binarize_predictions(sigmoid(assemble_m(factors, assignment)))
    return 1.0 - accuracy(pred, holdout)


def fit_cdmc(
    ratings: BinaryRatings,
    config: CdmcConfig,
    holdout: BinaryRatings | None = None,
) -> tuple[FitResult, ClusterLabels, ClusterLabels, CdmcTrace]:
    """Run the full cluster-developing loop on a training split.

    The holdout split is only ever used to score per-epoch predictions; the
    training masks are built before it is touched.
    """
    if ratings.n_observed == 0:
        raise UsageError("cannot fit with an empty observed set")
    if config.n_user_groups > ratings.n_users or config.n_item_groups > ratings.n_items:
        raise UsageError("cannot request more groups than entities")
    masks = masks_from_observations(ratings)

    rng = stream_rng(config.seed, STREAM_GROUP_INIT)
    assignment = GroupAssignment(
        user_groups=rng.integers(0, config.n_user_groups, ratings.n_users),
        item_groups=rng.integers(0, config.n_item_groups, ratings.n_items),
        n_user_groups=config.n_user_groups,
        n_item_groups=config.n_item_groups,
    )
    initial = fit_gs1mc(ratings, assignment, config.train)
    factors = initial.factors
    losses = list(initial.loss_trace)

    trace = CdmcTrace()
    user_labels = np.asarray(assignment.user_groups)
    item_labels = np.asarray(assignment.item_groups)

    for epoch in range(1, config.outer_epochs + 1):
        if config.recluster:
            f_m = sigmoid(assemble_m(factors, assignment))
            item_expr = solve_self_expression(
                f_m, mu=config.ssc_mu, solver_tol=config.ssc_tol, max_iters=config.ssc_max_iters
            )
            user_expr = solve_self_expression(
                f_m.T, mu=config.ssc_mu, solver_tol=config.ssc_tol, max_iters=config.ssc_max_iters
            )
            new_items = spectral_cluster(
                build_affinity(item_expr),
                config.n_item_groups,
                seed=stream_rng(config.seed, STREAM_SPECTRAL_ITEMS, epoch),
            ).labels
            new_users = spectral_cluster(
                build_affinity(user_expr),
                config.n_user_groups,
                seed=stream_rng(config.seed, STREAM_SPECTRAL_USERS, epoch),
            ).labels
            factors = replace(
                factors,
                S=_carry_over(factors.S, user_labels, new_users),
                T=_carry_over(factors.T, item_labels, new_items),
            )
            u_ami = adjusted_mutual_information(user_labels, new_users)
            i_ami = adjusted_mutual_information(item_labels, new_items)
            user_labels, item_labels = new_users, new_items
            assignment = GroupAssignment(
                user_groups=user_labels,
                item_groups=item_labels,
                n_user_groups=config.n_user_groups,
                n_item_groups=config.n_item_groups,
            )
        else:
            u_ami = adjusted_mutual_information(user_labels, user_labels)
            i_ami = adjusted_mutual_information(item_labels, item_labels)

        trainer = BlockCoordinateTrainer(factors, assignment, masks, config.train)
        for _ in range(config.inner_steps):
            losses.append(trainer.cycle())
        factors = trainer.factors

        trace.user_labels.append(user_labels.copy())
        trace.item_labels.append(item_labels.copy())
        trace.losses.append(trainer.loss)
        trace.holdout_misclassification.append(_misclassification(factors, assignment, holdout))
        trace.user_ami.append(u_ami)
        trace.item_ami.append(i_ami)

        if u_ami >= LABEL_AMI_CONVERGENCE and i_ami >= LABEL_AMI_CONVERGENCE:
            trace.converged = True
            break

    fit = FitResult(
        factors=factors,
        loss_trace=np.asarray(losses),
        iterations_run=len(losses) - 1,
        converged=trace.converged,
    )
    users = ClusterLabels(labels=user_labels, n_clusters=config.n_user_groups)
    items = ClusterLabels(labels=item_labels, n_clusters=config.n_item_groups)
    return fit, users, items, trace


def cross_run_ami(trace_a: CdmcTrace, trace_b: CdmcTrace) -> np.ndarray:
    """Per-epoch AMI between two runs' labels, shape (epochs, 2).

    Column 0 compares user labels, column 1 item labels; the series covers
    the epochs both runs reached.
    """
    if trace_a.n_epochs == 0 or trace_b.n_epochs == 0:
        raise UsageError("both traces must contain at least one epoch")
    if trace_a.user_labels[0].size != trace_b.user_labels[0].size:
        raise UsageError("traces cover different numbers of users")
    if trace_a.item_labels[0].size != trace_b.item_labels[0].size:
        raise UsageError("traces cover different numbers of items")
    epochs = min(trace_a.n_epochs, trace_b.n_epochs)
    out = np.empty((epochs, 2))
    for t in range(epochs):
        out[t, 0] = adjusted_mutual_information(trace_a.user_labels[t], trace_b.user_labels[t])
        out[t, 1] = adjusted_mutual_information(trace_a.item_labels[t], trace_b.item_labels[t])
    return out
