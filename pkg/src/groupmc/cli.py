"""Batch command-line interface.

Commands: synth, gs1mc, cdmc, compare, project, eval.  Configuration comes
from flat key=value files (--config) with command-line flags taking
precedence; every run writes a manifest.json next to its outputs recording
the resolved configuration, so any reported number can be re-derived by
re-running the manifest's argv.

Exit codes: 0 success, 2 usage, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time

import numpy as np
import scipy

from . import __version__
from .cdmc import CdmcConfig, CdmcTrace, cross_run_ami, fit_cdmc
from .clustering import kmeans
from .datasets import (
    SyntheticConfig,
    binarize_ratings,
    generate_synthetic,
    group_by_implicit_feedback,
    load_movielens,
    split_observed,
)
from .errors import DataError, GroupmcError, NumericalError, UsageError
from .metrics import accuracy, relative_error
from .model import BinaryRatings, GroupAssignment, assemble_m, binarize_predictions, expand_group_factors, sigmoid
from .seeding import STREAM_KMEANS, stream_rng
from .serialize import (
    FORMAT_VERSION,
    atomic_write_text,
    load_assignment,
    load_checkpoint,
    load_labels,
    load_matrix,
    save_assignment,
    save_checkpoint,
    save_labels,
    save_matrix,
    save_report,
)
from .training import FitResult, TrainConfig, fit_gs1mc

RATINGS_FILE = "ratings.csv"
TRUTH_M_FILE = "truth_m.gsm"


def _write_ratings(path: str, ratings: BinaryRatings) -> None:
    lines = ["user,item,value"]
    for u, i, v in zip(ratings.users, ratings.items, ratings.values):
        lines.append(f"{u + 1},{i + 1},{int(v)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _read_ratings(path: str, n_users: int | None = None, n_items: int | None = None) -> BinaryRatings:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read ratings file {path}: {exc}") from None
    if not lines or lines[0] != "user,item,value":
        raise DataError(f"{path}: expected header 'user,item,value'")
    users, items, values = [], [], []
    for no, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataError(f"{path}:{no}: expected 3 fields")
        try:
            u, i, v = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError:
            raise DataError(f"{path}:{no}: non-integer field") from None
        users.append(u - 1)
        items.append(i - 1)
        values.append(v)
    if not users:
        raise DataError(f"{path}: no rating rows")
    users = np.asarray(users)
    items = np.asarray(items)
    return BinaryRatings(
        n_users=n_users if n_users is not None else int(users.max()) + 1,
        n_items=n_items if n_items is not None else int(items.max()) + 1,
        users=users,
        items=items,
        values=np.asarray(values),
    )


def _write_manifest(out_dir: str, command: str, argv: list[str], config: dict,
                    inputs: dict, outputs: dict, started: float) -> None:
    manifest = {
        "command": command,
        "argv": argv,
        "config": config,
        "seed": config.get("seed"),
        "inputs": inputs,
        "outputs": outputs,
        "wall_clock_s": round(time.time() - started, 3),
        "versions": {
            "groupmc": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "checkpoint_format": FORMAT_VERSION,
        },
    }
    atomic_write_text(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2) + "\n")


def _load_config_file(path: str) -> list[str]:
    """Turn key=value lines into flag tokens, inserted before CLI flags."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from None
    tokens = []
    for no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{no}: expected key=value")
        key, value = line.split("=", 1)
        key = key.strip().replace("_", "-")
        if key == "config":
            raise DataError(f"{path}:{no}: config files cannot nest")
        tokens.append(f"--{key}={value.strip()}")
    return tokens


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        k=args.k,
        lam=getattr(args, "lambda"),
        step_size=args.step_size,
        max_outer_iters=args.max_iters,
        inner_steps_per_block=args.block_steps,
        tolerance=args.tol,
        seed=args.seed,
        init_scale=args.init_scale,
    )


def _add_train_flags(p: argparse.ArgumentParser, k_default: int = 6):
    p.add_argument("--k", type=int, default=k_default, help="latent dimension")
    p.add_argument("--lambda", type=float, default=37.0, help="regularization weight")
    p.add_argument("--step-size", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=500, help="outer training cycles")
    p.add_argument("--block-steps", type=int, default=5, help="gradient steps per block visit")
    p.add_argument("--tol", type=float, default=1e-5, help="relative loss-change stop")
    p.add_argument("--init-scale", type=float, default=0.1)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None, help="flat key=value config file")


def _add_data_flags(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--synth", default=None, help="directory produced by `synth`")
    g.add_argument("--movielens", default=None, help="MovieLens-100k-layout directory")
    g.add_argument("--ratings", default=None, help="binary ratings CSV")
    p.add_argument("--train-frac", type=float, default=None,
                   help="training fraction of observed entries (real data)")
    p.add_argument("--groups", default=None,
                   help="directory with user_groups.csv/item_groups.csv, or implicit:m")


class _Problem:
    """Resolved dataset: training split, optional test split and ground truth."""

    def __init__(self, train, test, assignment, m_true, inputs):
        self.train = train
        self.test = test
        self.assignment = assignment
        self.m_true = m_true
        self.inputs = inputs


def _resolve_groups(spec: str | None, train: BinaryRatings, default_m: int = 10):
    if spec is None:
        spec = f"implicit:{default_m}"
    if spec.startswith("implicit:"):
        try:
            m = int(spec.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad group spec {spec!r}; expected implicit:<m>") from None
        return GroupAssignment(
            user_groups=group_by_implicit_feedback(train, m, "user"),
            item_groups=group_by_implicit_feedback(train, m, "item"),
            n_user_groups=m,
            n_item_groups=m,
        )
    return load_assignment(spec)


def _load_problem(args, need_groups: bool) -> _Problem:
    if args.synth:
        ratings = _read_ratings(os.path.join(args.synth, RATINGS_FILE))
        m_true = load_matrix(os.path.join(args.synth, TRUTH_M_FILE))
        if ratings.n_users != m_true.shape[0] or ratings.n_items != m_true.shape[1]:
            ratings = _read_ratings(
                os.path.join(args.synth, RATINGS_FILE), m_true.shape[0], m_true.shape[1]
            )
        if args.groups:
            assignment = _resolve_groups(args.groups, ratings)
        else:
            assignment = load_assignment(args.synth)
        return _Problem(ratings, None, assignment, m_true, {"synth": args.synth})
    if args.movielens:
        if args.train_frac is None:
            raise UsageError("--train-frac is required with --movielens")
        records, _ = load_movielens(args.movielens)
        full = binarize_ratings(records)
        train, test = split_observed(full, args.train_frac, seed=args.seed)
        if need_groups and args.groups is None:
            raise UsageError("--groups is required with --movielens (path or implicit:m)")
        assignment = _resolve_groups(args.groups, train) if need_groups else None
        return _Problem(train, test, assignment, None, {"movielens": args.movielens})
    ratings = _read_ratings(args.ratings)
    if args.train_frac is not None:
        train, test = split_observed(ratings, args.train_frac, seed=args.seed)
    else:
        train, test = ratings, None
    if need_groups and args.groups is None:
        raise UsageError("--groups is required with --ratings (path or implicit:m)")
    assignment = _resolve_groups(args.groups, train) if need_groups else None
    return _Problem(train, test, assignment, None, {"ratings": args.ratings})


def _evaluate(fit: FitResult, problem: _Problem) -> list[dict]:
    m_hat = assemble_m(fit.factors, problem.assignment)
    rows = [
        {"metric": "final_loss", "value": float(fit.loss_trace[-1])},
        {"metric": "cycles_run", "value": fit.iterations_run},
        {"metric": "converged", "value": int(fit.converged)},
    ]
    pred = binarize_predictions(sigmoid(m_hat))
    rows.append({"metric": "train_accuracy", "value": accuracy(pred, problem.train)})
    if problem.m_true is not None:
        rows.append({"metric": "relative_error", "value": relative_error(m_hat, problem.m_true)})
    if problem.test is not None and problem.test.n_observed:
        acc = accuracy(pred, problem.test)
        rows.append({"metric": "test_accuracy", "value": acc})
        rows.append({"metric": "test_misclassification", "value": 1.0 - acc})
    return rows


def _cmd_synth(args, argv) -> int:
    started = time.time()
    cfg = SyntheticConfig(
        k=args.k,
        pi=args.pi,
        n_users=args.n1,
        n_items=args.n2,
        n_user_groups=args.m1,
        n_item_groups=args.m2,
        noise_sigma=args.noise_sigma,
        binarize=args.binarize_mode,
        seed=args.seed,
    )
    data = generate_synthetic(cfg)
    os.makedirs(args.out, exist_ok=True)
    _write_ratings(os.path.join(args.out, RATINGS_FILE), data.ratings)
    save_matrix(os.path.join(args.out, TRUTH_M_FILE), data.m_true)
    for name in ("P", "Q", "S", "T"):
        save_matrix(os.path.join(args.out, f"truth_{name.lower()}.gsm"), getattr(data.factors, name))
    save_assignment(args.out, data.assignment)
    outputs = sorted(os.listdir(args.out))
    _write_manifest(args.out, "synth", argv, vars(args) | {"scale": data.scale},
                    {}, {"files": outputs}, started)
    return 0


def _cmd_gs1mc(args, argv) -> int:
    started = time.time()
    problem = _load_problem(args, need_groups=True)
    fit = fit_gs1mc(problem.train, problem.assignment, _train_config(args))
    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(
        os.path.join(args.out, "checkpoint"),
        fit.factors,
        {
            "k": args.k,
            "lambda": getattr(args, "lambda"),
            "seed": args.seed,
            "iterations": fit.iterations_run,
            "n_users": problem.train.n_users,
            "n_items": problem.train.n_items,
        },
    )
    save_assignment(args.out, problem.assignment)
    save_report(
        os.path.join(args.out, "loss_trace.csv"),
        [{"cycle": i, "loss": float(v)} for i, v in enumerate(fit.loss_trace)],
        columns=["cycle", "loss"],
    )
    metrics = _evaluate(fit, problem)
    save_report(os.path.join(args.out, "metrics.csv"), metrics, columns=["metric", "value"])
    _write_manifest(args.out, "gs1mc", argv, vars(args), problem.inputs,
                    {"metrics": "metrics.csv", "checkpoint": "checkpoint"}, started)
    return 0


def _cmd_cdmc(args, argv) -> int:
    started = time.time()
    problem = _load_problem(args, need_groups=False)
    config = CdmcConfig(
        train=_train_config(args),
        n_user_groups=args.m1,
        n_item_groups=args.m2,
        outer_epochs=args.epochs,
        inner_steps=args.inner_steps,
        ssc_mu=args.ssc_mu,
        ssc_tol=args.ssc_tol,
        ssc_max_iters=args.ssc_iters,
        seed=args.seed,
    )
    fit, users, items, trace = fit_cdmc(problem.train, config, holdout=problem.test)
    os.makedirs(args.out, exist_ok=True)
    labels_dir = os.path.join(args.out, "labels")
    os.makedirs(labels_dir, exist_ok=True)
    for epoch in range(trace.n_epochs):
        save_labels(os.path.join(labels_dir, f"epoch_{epoch + 1:04d}_users.csv"),
                    trace.user_labels[epoch], id_column="user")
        save_labels(os.path.join(labels_dir, f"epoch_{epoch + 1:04d}_items.csv"),
                    trace.item_labels[epoch], id_column="item")
    save_labels(os.path.join(args.out, "labels_users.csv"), users.labels, id_column="user")
    save_labels(os.path.join(args.out, "labels_items.csv"), items.labels, id_column="item")
    save_checkpoint(
        os.path.join(args.out, "checkpoint"),
        fit.factors,
        {
            "k": args.k,
            "lambda": getattr(args, "lambda"),
            "seed": args.seed,
            "iterations": fit.iterations_run,
            "n_users": problem.train.n_users,
            "n_items": problem.train.n_items,
        },
    )
    rows = [
        {
            "epoch": e + 1,
            "loss": float(trace.losses[e]),
            "misclassification": float(trace.holdout_misclassification[e]),
            "user_ami": float(trace.user_ami[e]),
            "item_ami": float(trace.item_ami[e]),
        }
        for e in range(trace.n_epochs)
    ]
    save_report(os.path.join(args.out, "trace.csv"), rows,
                columns=["epoch", "loss", "misclassification", "user_ami", "item_ami"])
    _write_manifest(args.out, "cdmc", argv, vars(args), problem.inputs,
                    {"trace": "trace.csv", "labels": "labels"}, started)
    return 0


def _read_epoch_labels(run_dir: str, side: str) -> list[np.ndarray]:
    pattern = os.path.join(run_dir, "labels", f"epoch_*_{side}.csv")
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise DataError(f"no per-epoch {side} label files under {run_dir}")
    return [load_labels(p) for p in paths]


def _cmd_compare(args, argv) -> int:
    started = time.time()
    trace_a, trace_b = CdmcTrace(), CdmcTrace()
    for trace, run in ((trace_a, args.run_a), (trace_b, args.run_b)):
        trace.user_labels = _read_epoch_labels(run, "users")
        trace.item_labels = _read_epoch_labels(run, "items")
        trace.losses = [0.0] * len(trace.user_labels)
    series = cross_run_ami(trace_a, trace_b)
    os.makedirs(args.out, exist_ok=True)
    rows = [
        {"epoch": t + 1, "user_ami": float(series[t, 0]), "item_ami": float(series[t, 1])}
        for t in range(series.shape[0])
    ]
    save_report(os.path.join(args.out, "cross_ami.csv"), rows,
                columns=["epoch", "user_ami", "item_ami"])
    _write_manifest(args.out, "compare", argv, vars(args),
                    {"run_a": args.run_a, "run_b": args.run_b},
                    {"cross_ami": "cross_ami.csv"}, started)
    return 0


def _cmd_project(args, argv) -> int:
    started = time.time()
    factors, _meta = load_checkpoint(args.checkpoint)
    _, genres = load_movielens(args.movielens)
    user_labels = load_labels(args.labels_users)
    item_labels = load_labels(args.labels_items)
    if genres.shape[0] != factors.Q.shape[0]:
        raise DataError(
            f"genre matrix covers {genres.shape[0]} items but checkpoint has {factors.Q.shape[0]}"
        )
    if user_labels.size != factors.P.shape[0] or item_labels.size != factors.Q.shape[0]:
        raise DataError("label files do not match checkpoint dimensions")
    genre_clusters = kmeans(
        genres.astype(np.float64), args.genre_k, seed=stream_rng(args.seed, STREAM_KMEANS)
    )
    item_coords = factors.Q + expand_group_factors(factors.T, item_labels)
    user_coords = factors.P + expand_group_factors(factors.S, user_labels)
    os.makedirs(args.out, exist_ok=True)
    k = item_coords.shape[1]
    coord_cols = [f"x{j + 1}" for j in range(k)]
    item_rows = [
        {"item": i + 1}
        | {c: float(item_coords[i, j]) for j, c in enumerate(coord_cols)}
        | {"cdmc_group": int(item_labels[i]) + 1, "genre_group": int(genre_clusters.labels[i]) + 1}
        for i in range(item_coords.shape[0])
    ]
    save_report(os.path.join(args.out, "items.csv"), item_rows,
                columns=["item", *coord_cols, "cdmc_group", "genre_group"])
    user_rows = [
        {"user": u + 1}
        | {c: float(user_coords[u, j]) for j, c in enumerate(coord_cols)}
        | {"cdmc_group": int(user_labels[u]) + 1}
        for u in range(user_coords.shape[0])
    ]
    save_report(os.path.join(args.out, "users.csv"), user_rows,
                columns=["user", *coord_cols, "cdmc_group"])
    _write_manifest(args.out, "project", argv, vars(args),
                    {"checkpoint": args.checkpoint, "movielens": args.movielens},
                    {"items": "items.csv", "users": "users.csv"}, started)
    return 0


def _cmd_eval(args, argv) -> int:
    started = time.time()
    problem = _load_problem(args, need_groups=True)
    factors, meta = load_checkpoint(args.checkpoint)
    fit = FitResult(factors=factors, loss_trace=np.asarray([float("nan")]),
                    iterations_run=int(meta.get("iterations", 0)), converged=True)
    metrics = [r for r in _evaluate(fit, problem) if r["metric"] != "final_loss"]
    os.makedirs(args.out, exist_ok=True)
    save_report(os.path.join(args.out, "metrics.csv"), metrics, columns=["metric", "value"])
    _write_manifest(args.out, "eval", argv, vars(args),
                    problem.inputs | {"checkpoint": args.checkpoint},
                    {"metrics": "metrics.csv"}, started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupmc", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"groupmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic group-structured dataset")
    _add_common(p)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--pi", type=float, default=0.25, help="observation rate in (0, 1]")
    p.add_argument("--n1", type=int, default=200)
    p.add_argument("--n2", type=int, default=800)
    p.add_argument("--m1", type=int, default=10)
    p.add_argument("--m2", type=int, default=10)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--binarize-mode", choices=("threshold", "bernoulli"), default="threshold")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("gs1mc", help="fit the group-bias model with fixed groups")
    _add_common(p)
    _add_data_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_gs1mc)

    p = sub.add_parser("cdmc", help="fit while developing clusters")
    _add_common(p)
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--m1", type=int, default=10, help="user cluster count")
    p.add_argument("--m2", type=int, default=10, help="item cluster count")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--inner-steps", type=int, default=5, help="training cycles per epoch")
    p.add_argument("--ssc-mu", type=float, default=None)
    p.add_argument("--ssc-tol", type=float, default=1e-4)
    p.add_argument("--ssc-iters", type=int, default=150)
    p.set_defaults(func=_cmd_cdmc)

    p = sub.add_parser("compare", help="cross-run AMI series from two cdmc runs")
    _add_common(p)
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("project", help="plot-ready latent coordinates with labels")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--movielens", required=True)
    p.add_argument("--labels-users", required=True)
    p.add_argument("--labels-items", required=True)
    p.add_argument("--genre-k", type=int, default=10)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _add_common(p)
    _add_data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=_cmd_eval)
    return parser


def _inject_config(argv: list[str]) -> list[str]:
    """Expand --config key=value pairs into flags before the real flags."""
    if not argv or argv[0].startswith("-"):
        return argv
    config_path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    if config_path is None:
        return argv
    return [argv[0], *_load_config_file(config_path), *argv[1:]]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        expanded = _inject_config(argv)
        parser = build_parser()
        args = parser.parse_args(expanded)
        func = args.func
        ns = argparse.Namespace(**{k: v for k, v in vars(args).items() if k != "func"})
        return func(ns, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except GroupmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
