"""Command-line front end.

Subcommands mirror the experiment runners; options come from an INI
config file (single [experiment] section) with flag overrides. Exit
codes: 0 on success, 2 when any solve fails to converge, 1 on usage or
file-format errors.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness
from .harness import ExperimentConfig, IdxFormatError, load_config
from .solver import GraphConnectivityError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _add_common(p):
    p.add_argument("--config", help="INI file with an [experiment] section")
    p.add_argument("--n", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--h", type=float)
    p.add_argument("--kernel", choices=["indicator", "smooth_bump", "gaussian"])
    p.add_argument("--alphas", help="comma separated, e.g. 0,1")
    p.add_argument("--mus", help="comma separated, e.g. 0.5,0.7")
    p.add_argument("--delta", type=float)
    p.add_argument("--levels", help="comma separated n:h pairs, e.g. 4000:0.05,16000:0.03")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--density", choices=["uniform", "slope"])
    p.add_argument("--k", type=int)
    p.add_argument("--knn-rule", choices=["unit", "gaussian_5th"], dest="knn_rule")
    p.add_argument("--n-classes", type=int, dest="n_classes")
    p.add_argument("--labels-per-class", type=int, dest="labels_per_class")
    p.add_argument("--no-warm-start", action="store_true")
    p.add_argument("--out-dir", dest="out_dir")


def _config_from_args(args, experiment: str) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg.experiment = experiment
    for key in ("n", "dim", "h", "kernel", "delta", "trials", "seed", "tol", "max_iter",
                "density", "k", "knn_rule", "n_classes", "labels_per_class", "out_dir"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "alphas", None):
        cfg.alphas = harness._parse_list(args.alphas)
    if getattr(args, "mus", None):
        cfg.mus = harness._parse_list(args.mus)
    if getattr(args, "levels", None):
        cfg.levels = harness._parse_levels(args.levels)
    if getattr(args, "no_warm_start", False):
        cfg.warm_start = False
    cfg.__post_init__()
    return cfg


def main(argv=None) -> int:
    parser = _Parser(prog="liplearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("surface2d", "oracle1d", "classify", "consistency", "kde", "multiclass"):
        _add_common(sub.add_parser(name))
    ingest = sub.add_parser("ingest-idx")
    ingest.add_argument("images")
    ingest.add_argument("labels")
    ingest.add_argument("--limit", type=int)
    ingest.add_argument("--out", default="points.csv")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (IdxFormatError, GraphConnectivityError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


def _dispatch(args) -> int:
    if args.command == "ingest-idx":
        from .geometry import save_points_csv

        cloud, labels = harness.ingest_idx(args.images, args.labels, args.limit)
        save_points_csv(cloud, args.out)
        print(f"wrote {cloud.n} points of dim {cloud.dim} to {args.out}")
        return EXIT_OK

    cfg = _config_from_args(args, args.command)
    if args.command == "surface2d":
        return run_surface2d_cmd(cfg)
    if args.command == "oracle1d":
        rows = harness.run_oracle1d_validation(cfg)
        for r in rows:
            print(f"n={r['n']} h={r['h']} alpha={r['alpha']} trial={r['trial']} "
                  f"sup_error={r['sup_error']:.4f} acc={r['accuracy']:.4f} "
                  f"closed={r['closed_form_accuracy']:.4f}")
        return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NONCONVERGED
    if args.command == "classify":
        results = harness.run_synth_classify(cfg)
        for r in results:
            print(f"alpha={r.alpha:g} mu={r.mu:g}: mean={r.mean:.4f} std={r.std:.4f} over {len(r.accuracies)} trials")
        return EXIT_OK if all(r.n_nonconverged == 0 for r in results) else EXIT_NONCONVERGED
    if args.command == "consistency":
        reports = harness.run_consistency_sweep(cfg)
        for r in reports:
            print(f"h={r.h:g}: discrete={r.discrete:.6f} continuum={r.continuum:.6f} error={r.error:.2e}")
        return EXIT_OK
    if args.command == "kde":
        rows = harness.run_kde_sweep(cfg)
        for r in rows:
            print(f"n={r['n']} h={r['h']} trial={r['trial']}: R={r['R']:.4f} "
                  f"R/h={r['R_over_h']:.4f} R/CPhi={r['R_over_CPhi']:.4f}")
        return EXIT_OK
    if args.command == "multiclass":
        rows = harness.run_multiclass_blobs(cfg)
        accs = np.array([r["accuracy"] for r in rows])
        print(f"multiclass blobs: mean accuracy {accs.mean():.4f} over {len(rows)} trials")
        return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NONCONVERGED
    raise ValueError(f"unknown command {args.command}")


def run_surface2d_cmd(cfg: ExperimentConfig) -> int:
    summary = harness.run_surface2d(cfg)
    code = EXIT_OK
    for alpha, info in summary.items():
        print(f"alpha={alpha:g}: wrote {info['path']} (mean u = {info['mean_u']:.4f}, "
              f"{info['iterations']} iterations)")
        if not info["converged"]:
            code = EXIT_NONCONVERGED
    return code


if __name__ == "__main__":
    sys.exit(main())
