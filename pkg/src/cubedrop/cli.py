"""Command line entry point: ``cubedrop <subcommand> --config FILE [overrides]``.

On failure the process exits with status 1 and writes one JSON object
``{"error": <exception type>, "message": <text>}`` to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import harness
from .basis import matern_basis
from .config import ExperimentConfig, load_config
from .matio import write_csv_matrix, write_matrix
from .spatial_sim import MaternParams, effective_range_to_rho


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = cfg.with_overrides(seed_root=args.seed, output_dir=args.out)
    if args.setting is not None:
        cfg = cfg.with_overrides(settings=(cfg.setting(args.setting),))
    if args.m is not None:
        cfg = cfg.with_overrides(basis_dims=(args.m,))
    if args.variant:
        cfg = cfg.with_overrides(variants=tuple(args.variant))
    return cfg


def _single(cfg: ExperimentConfig, args):
    return cfg.settings[0], cfg.basis_dims[0], args.replicate


def cmd_simulate(cfg, args):
    s, m, r = _single(cfg, args)
    data = harness.prepare_replicate(cfg, s, 0, r)
    out = harness.rep_dir(cfg, s, m, r)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_dataset(data.dataset, out / "dataset.csv")
    return {"dataset": str(out / "dataset.csv"), "n": data.dataset.n_total}


def cmd_basis(cfg, args):
    s, m, r = _single(cfg, args)
    data = harness.prepare_replicate(cfg, s, 0, r)
    params = MaternParams(1.0, effective_range_to_rho(s.effective_range, s.nu), s.nu)
    b = matern_basis(data.dataset.locations, params, m)
    out = harness.rep_dir(cfg, s, m, r)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "basis.bin", b.phi)
    write_csv_matrix(out / "eigenvalues.csv", b.eigenvalues[:, None], header=["eigenvalue"])
    return {"basis": str(out / "basis.bin"), "shape": list(b.phi.shape)}


def cmd_baseline(cfg, args):
    s, m, r = _single(cfg, args)
    data = harness.prepare_replicate(cfg, s, m, r)
    rec = harness.run_baseline(cfg, data, harness.replicate_seed(cfg, s, m, r))
    out = harness.rep_dir(cfg, s, m, r)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_json(rec.to_json_obj(), out / "baseline.json")
    return rec.to_json_obj()


def cmd_grid(cfg, args):
    s, m, r = _single(cfg, args)
    rec, tables = harness.run_replicate(cfg, s, m, r)
    return {"baseline": rec.to_json_obj(), "rows": {v: len(t.raw) for v, t in tables.items()}}


def cmd_cube(cfg, args):
    s, m, r = _single(cfg, args)
    out = {}
    for v, res in harness.run_cubes(cfg, s, m, r).items():
        out[v] = [c.to_json_obj() for c in res.ranked[:3]]
    return out


def cmd_study(cfg, args):
    return {"written": [str(p) for p in harness.run_study(cfg)]}


def cmd_report(cfg, args):
    return {"written": [str(p) for p in harness.build_report(cfg)]}


def cmd_load(cfg, args):
    ds = harness.load_tabular_dataset(args.path, log_transform=args.log_transform,
                                      train_fraction=args.train_fraction, seed=cfg.seed_root)
    info = {"n": ds.n_total, "p": ds.X.shape[1], "n_train": int(ds.train_idx.size),
            "n_test": int(ds.test_idx.size), "z_mean": float(np.mean(ds.Z))}
    if args.write:
        harness.write_dataset(ds, args.write)
        info["written"] = args.write
    return info


COMMANDS = {"simulate": cmd_simulate, "basis": cmd_basis, "baseline": cmd_baseline,
            "grid": cmd_grid, "cube": cmd_cube, "study": cmd_study, "report": cmd_report,
            "load": cmd_load}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cubedrop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML experiment configuration")
        p.add_argument("--seed", type=int, help="override seed_root")
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--setting", type=int, help="restrict to one setting id")
        p.add_argument("--m", type=int, help="restrict to one basis dimension")
        p.add_argument("--variant", action="append", choices=("EU", "FA", "LA"))
        p.add_argument("--replicate", type=int, default=0)
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "load":
            p.add_argument("path")
            p.add_argument("--log-transform", action="store_true")
            p.add_argument("--train-fraction", type=float, default=0.8)
            p.add_argument("--write", help="write the validated dataset as CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        result = COMMANDS[args.command](cfg, args)
    except Exception as exc:  # noqa: BLE001 - reported as a JSON error object
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    sys.stdout.write(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
