"""Command-line front end: synth, cluster, select, eval, perm.

Every command writes its outputs plus a manifest (resolved arguments, input
and output checksums, seed, duration) into --out-dir. Rerunning a command
with the same arguments reproduces every output byte for byte; manifests
record wall-clock fields and are the one exception.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    RandL1Config,
    l1_weight_scores,
    l2_weight_scores,
    randomized_l1,
    ttest_scores,
)
from .clustering import (
    ClusterConfig,
    build_feature_vectors,
    kmeans,
    load_parcellation,
    save_parcellation,
    within_cluster_ss,
)
from .data import derive_stream, load_dataset, save_dataset, sha256_file
from .evaluation import (
    DEFAULT_THRESHOLD_GRID,
    cv_threshold,
    permutation_fp_estimate,
    precision_recall_curve,
    prediction_accuracy,
    top_t_selection,
)
from .solver import SolverConfig
from .stability import (
    DEFAULT_LOSS_WEIGHT,
    StabilityConfig,
    load_scores_csv,
    run_stability_selection,
    save_scores_csv,
)
from .synthgen import SynthConfig, generate_synthetic, load_ground_truth, save_ground_truth

_COUNT_METHODS = ("rss", "rand-l1")
_ALL_METHODS = ("rss", "rand-l1", "l1", "l2", "ttest")


def _parse_triple(text, label):
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ValueError(f"{label} must look like AxBxC, got {text!r}")
    return tuple(int(p) for p in parts)


def _parse_int_list(text):
    return tuple(int(p) for p in text.split(","))


def _parse_float_list(text):
    return tuple(float(p) for p in text.split(","))


def _dataset_checksums(path):
    path = Path(path)
    out = {}
    for name in ("manifest.json", "X.bin", "mask.bin"):
        f = path / name
        if f.is_file():
            out[str(f)] = sha256_file(f)
    return out


def _write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def _write_manifest(out_dir, command, args, inputs, outputs, started, t0):
    manifest = {
        "command": command,
        "version": __version__,
        "started_utc": started,
        "duration_seconds": round(time.monotonic() - t0, 3),
        "args": {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": inputs,
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }
    _write_json(Path(out_dir) / f"manifest_{command}.json", manifest)


def _start(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir, datetime.now(timezone.utc).isoformat(), time.monotonic()


def cmd_synth(args):
    out_dir, started, t0 = _start(args)
    config = SynthConfig(
        dims=_parse_triple(args.dims, "--dims"),
        mask_size=args.mask_size,
        n_per_group=args.n_per_group,
        cluster_sizes=_parse_int_list(args.cluster_sizes),
        noise_sd=args.noise_sd,
        constraint_threshold=args.constraint_threshold,
        seed=args.seed,
    )
    dataset, truth = generate_synthetic(config)
    container = out_dir / "dataset"
    save_dataset(dataset, container)
    truth_path = out_dir / "ground_truth.csv"
    save_ground_truth(truth, truth_path)
    outputs = [container / "manifest.json", container / "X.bin", container / "mask.bin", truth_path]
    _write_manifest(out_dir, "synth", args, {}, outputs, started, t0)
    print(f"wrote {container} (n={dataset.n}, p={dataset.p}) and {truth_path}")
    return 0


def cmd_cluster(args):
    out_dir, started, t0 = _start(args)
    dataset = load_dataset(args.dataset)
    if not (2 * dataset.n <= args.q <= 5 * dataset.n):
        print(
            f"warning: q={args.q} is outside the suggested range "
            f"[2n, 5n] = [{2 * dataset.n}, {5 * dataset.n}]",
            file=sys.stderr,
        )
    config = ClusterConfig(
        q=args.q,
        seed=derive_stream(args.seed, 0),
        restarts=args.restarts,
        max_lloyd_iters=args.max_lloyd_iters,
        spatial_weight=args.spatial_weight,
    )
    vectors = build_feature_vectors(dataset, config.spatial_weight)
    parcellation = kmeans(vectors, config)
    parc_path = out_dir / "parcellation.csv"
    save_parcellation(parcellation, parc_path, sidecar={
        "seed": args.seed,
        "restarts": args.restarts,
        "max_lloyd_iters": args.max_lloyd_iters,
        "spatial_weight": args.spatial_weight,
        "inertia": within_cluster_ss(vectors, parcellation),
        "dataset": str(args.dataset),
    })
    outputs = [parc_path, parc_path.with_suffix(".json")]
    _write_manifest(out_dir, "cluster", args, _dataset_checksums(args.dataset), outputs, started, t0)
    print(f"wrote {parc_path} (q={parcellation.q})")
    return 0


def _solver_config(args):
    return SolverConfig(loss_weight=args.loss_weight)


def _build_count_selector(args, dataset):
    """Configured rss / rand-l1 scorer plus its metadata, for select and perm."""
    if args.method == "rss":
        if not args.parcellation:
            raise ValueError("method rss requires --parcellation")
        parcellation = load_parcellation(args.parcellation)
        resamplings = args.K if args.K is not None else 50
        config = StabilityConfig(
            solver=_solver_config(args),
            K=resamplings,
            alpha=args.alpha,
            beta=args.beta,
            block_shape=_parse_triple(args.block, "--block"),
            master_seed=args.seed,
        )
        meta = {
            "method": "rss",
            "K": config.K,
            "alpha": config.alpha,
            "beta": config.beta,
            "block_shape": list(config.block_shape),
            "loss_weight": args.loss_weight,
            "master_seed": args.seed,
            "parcellation": str(args.parcellation),
            "parcellation_checksum": parcellation.checksum(),
        }
        return (lambda d: run_stability_selection(d, parcellation, config, threads=args.threads)), meta
    resamplings = args.K if args.K is not None else 500
    config = RandL1Config(
        solver=_solver_config(args),
        K=resamplings,
        row_fraction=args.row_fraction,
        weakness=args.weakness,
        master_seed=args.seed,
    )
    meta = {
        "method": "rand-l1",
        "K": config.K,
        "row_fraction": config.row_fraction,
        "weakness": config.weakness,
        "loss_weight": args.loss_weight,
        "master_seed": args.seed,
    }
    return (lambda d: randomized_l1(d, config, threads=args.threads)), meta


def cmd_select(args):
    out_dir, started, t0 = _start(args)
    dataset = load_dataset(args.dataset)
    counts = None
    if args.method in _COUNT_METHODS:
        selector, meta = _build_count_selector(args, dataset)
        scores = selector(dataset)
        counts = scores.counts
        values = scores.normalized
    elif args.method == "l1":
        values = l1_weight_scores(dataset, _solver_config(args))
        meta = {"method": "l1", "loss_weight": args.loss_weight}
    elif args.method == "l2":
        values = l2_weight_scores(dataset, args.lambda_ridge)
        meta = {"method": "l2", "lambda_ridge": args.lambda_ridge}
    else:
        values = ttest_scores(dataset)
        meta = {"method": "ttest"}
    meta["dataset"] = str(args.dataset)
    meta["seed"] = args.seed
    scores_path = out_dir / "scores.csv"
    save_scores_csv(scores_path, values, counts=counts, geometry=dataset.geometry)
    meta_path = out_dir / "scores_meta.json"
    _write_json(meta_path, meta)
    _write_manifest(out_dir, "select", args, _dataset_checksums(args.dataset),
                    [scores_path, meta_path], started, t0)
    print(f"wrote {scores_path} ({args.method}, p={dataset.p})")
    return 0


def cmd_eval(args):
    out_dir, started, t0 = _start(args)
    loaded = load_scores_csv(args.scores)
    values = loaded["score"]
    inputs = {str(args.scores): sha256_file(args.scores)}
    outputs = []
    did_something = False
    if args.truth:
        truth = load_ground_truth(args.truth)
        inputs[str(args.truth)] = sha256_file(args.truth)
        curve = precision_recall_curve(values, truth.features)
        pr_path = out_dir / "pr_curve.csv"
        with open(pr_path, "w") as f:
            f.write("threshold,precision,recall\n")
            for t, prec, rec in curve.points:
                f.write(f"{t:.17g},{prec:.17g},{rec:.17g}\n")
        T = args.top_t if args.top_t is not None else truth.features.size
        top = top_t_selection(values, T)
        hits = np.intersect1d(top, truth.features).size
        summary_path = out_dir / "pr_summary.json"
        _write_json(summary_path, {
            "auc": curve.auc,
            "T": int(T),
            "top_t_precision": hits / T,
            "n_truth": int(truth.features.size),
        })
        outputs += [pr_path, summary_path]
        did_something = True
    if args.train and args.test:
        if args.tau is None:
            raise ValueError("accuracy evaluation needs --tau")
        train = load_dataset(args.train)
        test = load_dataset(args.test)
        inputs.update(_dataset_checksums(args.train))
        inputs.update(_dataset_checksums(args.test))
        features = np.flatnonzero(values >= args.tau)
        if features.size == 0:
            raise ValueError(f"no features reach tau={args.tau}")
        acc = prediction_accuracy(train, test, features, args.lambda_ridge)
        acc_path = out_dir / "accuracy.json"
        _write_json(acc_path, {
            "tau": args.tau,
            "n_features": int(features.size),
            "lambda_ridge": args.lambda_ridge,
            "accuracy": acc,
        })
        outputs.append(acc_path)
        did_something = True
    if args.cv_train:
        train = load_dataset(args.cv_train)
        inputs.update(_dataset_checksums(args.cv_train))
        grid = _parse_float_list(args.grid) if args.grid else DEFAULT_THRESHOLD_GRID
        chosen = cv_threshold(train, values, grid=grid, n_folds=args.folds,
                              lambda_ridge=args.lambda_ridge, seed=args.seed)
        cv_path = out_dir / "cv_threshold.json"
        _write_json(cv_path, {
            "chosen_tau": chosen,
            "grid": list(grid),
            "n_folds": args.folds,
            "lambda_ridge": args.lambda_ridge,
            "seed": args.seed,
        })
        outputs.append(cv_path)
        did_something = True
    if not did_something:
        raise ValueError("eval needs --truth, --train/--test/--tau, or --cv-train")
    _write_manifest(out_dir, "eval", args, inputs, outputs, started, t0)
    print(f"wrote {', '.join(str(p) for p in outputs)}")
    return 0


def cmd_perm(args):
    out_dir, started, t0 = _start(args)
    dataset = load_dataset(args.dataset)
    selector, meta = _build_count_selector(args, dataset)
    report = permutation_fp_estimate(dataset, selector, args.tau, args.replicates,
                                     seed=args.perm_seed)
    report_path = out_dir / "permutation_report.json"
    _write_json(report_path, {
        "tau": report.tau,
        "B": report.B,
        "estimate": report.estimate,
        "observed_count": report.observed_count,
        "permuted_counts": list(report.permuted_counts),
        "selector": meta,
        "perm_seed": args.perm_seed,
    })
    _write_manifest(out_dir, "perm", args, _dataset_checksums(args.dataset),
                    [report_path], started, t0)
    print(f"wrote {report_path} (observed={report.observed_count}, "
          f"permuted mean={report.estimate:.2f})")
    return 0


def _add_selector_flags(sub):
    sub.add_argument("--method", required=True, choices=_ALL_METHODS)
    sub.add_argument("--parcellation", help="parcellation CSV (required for rss)")
    sub.add_argument("--K", dest="K", type=int, default=None,
                     help="resampling iterations; defaults to 50 for rss, 500 for rand-l1")
    sub.add_argument("--alpha", type=float, default=0.5, help="row fraction per iteration")
    sub.add_argument("--beta", type=float, default=0.1, help="per-cluster feature fraction")
    sub.add_argument("--block", default="3x3x3", help="block shape, e.g. 3x3x3")
    sub.add_argument("--loss-weight", type=float, default=DEFAULT_LOSS_WEIGHT,
                     help="weight on the logistic loss in the L1 objective")
    sub.add_argument("--row-fraction", type=float, default=0.5,
                     help="rand-l1 row fraction per iteration")
    sub.add_argument("--weakness", type=float, default=0.5,
                     help="rand-l1 penalty jitter lower bound, in (0, 1]")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rss",
        description="Stability selection with constrained block subsampling, "
                    "plus baselines and evaluation tools.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    synth = subs.add_parser("synth", help="generate a synthetic labeled dataset")
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--dims", default="46x55x46")
    synth.add_argument("--mask", dest="mask_size", type=int, default=27884,
                       help="number of voxels kept in the ellipsoid mask")
    synth.add_argument("--n-per-group", type=int, default=50)
    synth.add_argument("--clusters", dest="cluster_sizes", default="76,76,77,77,77",
                       help="five planted cluster sizes, comma separated")
    synth.add_argument("--noise-sd", type=float, default=1.0)
    synth.add_argument("--constraint-threshold", type=float, default=1.0)
    synth.set_defaults(func=cmd_synth)

    cluster = subs.add_parser("cluster", help="parcellate features by k-means")
    cluster.add_argument("--dataset", required=True)
    cluster.add_argument("--q", type=int, required=True, help="number of clusters")
    cluster.add_argument("--out-dir", required=True)
    cluster.add_argument("--seed", type=int, default=0)
    cluster.add_argument("--restarts", type=int, default=10)
    cluster.add_argument("--max-lloyd-iters", type=int, default=300)
    cluster.add_argument("--spatial-weight", type=float, default=0.0)
    cluster.set_defaults(func=cmd_cluster)

    select = subs.add_parser("select", help="score features with one method")
    select.add_argument("--dataset", required=True)
    select.add_argument("--out-dir", required=True)
    select.add_argument("--seed", type=int, default=0)
    select.add_argument("--threads", type=int, default=1)
    select.add_argument("--lambda-ridge", type=float, default=1.0,
                        help="ridge strength for method l2")
    _add_selector_flags(select)
    select.set_defaults(func=cmd_select)

    evalp = subs.add_parser("eval", help="evaluate scores against truth or held-out data")
    evalp.add_argument("--scores", required=True)
    evalp.add_argument("--out-dir", required=True)
    evalp.add_argument("--truth", help="ground truth CSV; writes PR curve and summary")
    evalp.add_argument("--top-t", type=int, default=None,
                       help="T for top-T precision (default: number of true features)")
    evalp.add_argument("--train", help="train container for accuracy evaluation")
    evalp.add_argument("--test", help="test container for accuracy evaluation")
    evalp.add_argument("--tau", type=float, default=None,
                       help="score threshold for accuracy evaluation")
    evalp.add_argument("--cv-train", help="container for cross-validated threshold choice")
    evalp.add_argument("--grid", help="comma-separated thresholds (default 0.3..0.9)")
    evalp.add_argument("--folds", type=int, default=5)
    evalp.add_argument("--lambda-ridge", type=float, default=1.0)
    evalp.add_argument("--seed", type=int, default=0)
    evalp.set_defaults(func=cmd_eval)

    perm = subs.add_parser("perm", help="permutation false-positive estimate")
    perm.add_argument("--dataset", required=True)
    perm.add_argument("--out-dir", required=True)
    perm.add_argument("--tau", type=float, required=True)
    perm.add_argument("--replicates", type=int, default=20, help="number of permutations B")
    perm.add_argument("--seed", type=int, default=0, help="seed for the selector itself")
    perm.add_argument("--perm-seed", type=int, default=0, help="seed for label permutations")
    perm.add_argument("--threads", type=int, default=1)
    _add_selector_flags(perm)
    perm.set_defaults(func=cmd_perm)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "perm" and args.method not in _COUNT_METHODS:
        parser.error("perm supports count-based methods only: rss, rand-l1")
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
