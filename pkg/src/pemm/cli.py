"""Command-line entry point: ``pemm {train,noise,centersim,verify}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime/numeric error.
"""
import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from ._accel import backend_name
from ._rng import derive_seed
from .config import ConfigError, ExperimentConfig, load_config, parse_class_map
from .data import (ParseError, load_cifar10_binary, load_csv, make_blobs, save_csv, standardize,
                   stratified_split)
from .energy import DivergenceError, PEParams, simulate_center_dynamics, write_trajectory_csv
from .noise import NoiseSpec, inject, noise_audit, write_audit_csv, write_noise_csv
from .trainer import TrainingDiverged, train
from .verify import report_json, run_checks

log = logging.getLogger("pemm")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

# CLI flag -> config key
FLAG_KEYS = {"seed": "seed", "out": "out", "loss": "loss", "noise_kind": "noise_kind",
             "noise_rate": "noise_rate", "alpha": "alpha", "beta": "beta", "lambda_": "lam",
             "sigma": "sigma", "epochs": "epochs"}


def _load_dataset(path, K=None):
    if str(path).endswith(".csv"):
        return load_csv(path, K=K)
    return load_cifar10_binary([p for p in str(path).split(",") if p])


def _datasets(cfg):
    if cfg.dataset == "blobs":
        full = make_blobs(cfg.blobs_classes, cfg.blobs_dim,
                          cfg.blobs_train_per_class + cfg.blobs_test_per_class,
                          cfg.blobs_center_scale, cfg.blobs_stddev,
                          seed=derive_seed(cfg.seed, "data:blobs"))
        tr, te = stratified_split(full, cfg.blobs_train_per_class,
                                  seed=derive_seed(cfg.seed, "data:split"))
    elif cfg.dataset == "csv":
        tr = load_csv(cfg.data_path)
        te = load_csv(cfg.test_path, K=tr.K) if cfg.test_path else None
    else:
        tr = load_cifar10_binary([p for p in cfg.data_path.split(",") if p])
        te = load_cifar10_binary([p for p in cfg.test_path.split(",") if p]) if cfg.test_path else None
    if cfg.standardize:
        tr, stats = standardize(tr)
        if te is not None:
            te, _ = standardize(te, stats)
    return tr, te


def cmd_train(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for flag, key in FLAG_KEYS.items():
        val = getattr(args, flag, None)
        if val is not None:
            cfg.set(key, val)
    cfg.validate()
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config.txt"), "w") as fh:
        fh.write(cfg.echo())

    t0 = time.time()
    tr, te = _datasets(cfg)
    spec = cfg.noise_spec()
    clean = tr.labels
    noisy, _ = inject(clean, tr.K, spec)
    tr = tr.with_labels(noisy)
    audit = noise_audit(clean, noisy, tr.K)
    write_audit_csv(os.path.join(cfg.out, "noise_audit.csv"), audit)

    tcfg = cfg.train_config()
    res = train(tr, te, tcfg, metrics_csv=os.path.join(cfg.out, "metrics.csv"))
    res.model.save(os.path.join(cfg.out, "model"))
    last = res.metrics[-1]
    summary = {
        "seed": cfg.seed,
        "loss": cfg.loss,
        "final_train_acc": last.train_acc,
        "final_test_acc": last.test_acc,
        "realized_noise_rate": audit.rate,
        "center_dist": {"min": last.center_dist_min, "mean": last.center_dist_mean,
                        "max": last.center_dist_max, "sum": last.center_dist_sum,
                        "limit": tr.K * (tr.K + 1) / 2 * tcfg.pe_cfg.target_distance},
        "final_loss": last.report.as_dict(),
        "config": cfg.as_dict(),
        "timing": {"wall_seconds": time.time() - t0, "backend": backend_name()},
    }
    with open(os.path.join(cfg.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    print(f"test_acc={last.test_acc:.4f} train_acc={last.train_acc:.4f} "
          f"noise={audit.rate:.4f} out={cfg.out}")
    return EXIT_OK


def cmd_noise(args):
    if args.noise_kind == "asymmetric":
        cmap = parse_class_map(args.noise_map)
    else:
        cmap = {}
    seed = 0 if args.seed is None else args.seed
    spec = NoiseSpec(args.noise_kind, args.noise_rate, cmap, seed, args.exact)
    ds = _load_dataset(args.input, K=args.classes)
    if args.classes is not None:
        ds.K = args.classes
    noisy, mask = inject(ds.labels, ds.K, spec)
    os.makedirs(args.out, exist_ok=True)
    audit = noise_audit(ds.labels, noisy, ds.K)
    save_csv(ds.with_labels(noisy), os.path.join(args.out, "noisy.csv"))
    write_noise_csv(os.path.join(args.out, "labels.csv"), ds.labels, noisy, mask)
    write_audit_csv(os.path.join(args.out, "audit.csv"), audit)
    print(f"realized_rate={audit.rate:.6f} n={audit.n} out={args.out}")
    return EXIT_OK


def cmd_centersim(args):
    p = PEParams(beta=args.beta)
    res = simulate_center_dynamics(args.classes, args.dim, p, args.step, args.iters, args.seed,
                                   stride=args.stride)
    os.makedirs(args.out, exist_ok=True)
    write_trajectory_csv(res, os.path.join(args.out, "trajectory.csv"))
    with open(os.path.join(args.out, "energy.csv"), "w") as fh:
        fh.write("iter,energy\n")
        for i, e in enumerate(res.energies):
            fh.write(f"{i},{e!r}\n")
    K = args.classes
    labels = ["origin"] + [f"c{k + 1}" for k in range(K)]
    iu, ju = np.triu_indices(K + 1, k=1)
    table = [{"a": labels[i], "b": labels[j], "distance": float(d)}
             for i, j, d in zip(iu, ju, res.distances)]
    final = {"distances": table, "distance_sum": res.distance_sum,
             "expected_sum": res.expected_sum, "target_distance": res.target,
             "r0": p.r0, "final_energy": float(res.energies[-1]),
             "simplex_reachable": res.simplex_reachable}
    with open(os.path.join(args.out, "final.json"), "w") as fh:
        json.dump(final, fh, indent=1)
    for row in table:
        print(f"{row['a']:>6} {row['b']:>6} {row['distance']:.6f}")
    print(f"sum={res.distance_sum:.6f} expected={res.expected_sum:.6f}")
    return EXIT_OK


def cmd_verify(args):
    results = run_checks()
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  value={r.value:.3e}  "
              f"tol={r.tol:.0e}  {r.detail}")
    rep = report_json(results)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rep, fh, indent=1)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="pemm", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a key=value config")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--loss", choices=["pemm", "ce", "sce", "gce"])
    t.add_argument("--noise-kind", choices=["symmetric", "asymmetric"])
    t.add_argument("--noise-rate", type=float)
    t.add_argument("--alpha", type=float)
    t.add_argument("--beta", type=float)
    t.add_argument("--lambda", dest="lambda_", type=float)
    t.add_argument("--sigma", type=float)
    t.add_argument("--epochs", type=int)
    t.set_defaults(func=cmd_train)

    n = sub.add_parser("noise", help="inject label noise into a dataset")
    n.add_argument("--input", required=True, help="CSV file or CIFAR-10 binary batch(es), comma-separated")
    n.add_argument("--out", required=True)
    n.add_argument("--noise-kind", choices=["symmetric", "asymmetric"], default="symmetric")
    n.add_argument("--noise-rate", type=float, default=0.0)
    n.add_argument("--noise-map", default="cifar10", help="'src:dst,...' or 'cifar10'")
    n.add_argument("--classes", type=int)
    n.add_argument("--seed", type=int)
    n.add_argument("--exact", action="store_true", help="flip exactly round(rate*N) samples")
    n.set_defaults(func=cmd_noise)

    c = sub.add_parser("centersim", help="simulate center dynamics under the PE loss")
    c.add_argument("--classes", type=int, default=2)
    c.add_argument("--dim", type=int, default=2)
    c.add_argument("--beta", type=float, default=0.3)
    c.add_argument("--step", type=float, default=0.01)
    c.add_argument("--iters", type=int, default=10_000)
    c.add_argument("--stride", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default="runs/centersim")
    c.set_defaults(func=cmd_centersim)

    v = sub.add_parser("verify", help="run the built-in verification battery")
    v.add_argument("--json", help="write the machine-readable report here")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, TrainingDiverged, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
