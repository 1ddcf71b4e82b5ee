"""Replicate loops, on-disk layout and report tables.

Layout under ``output_dir``::

    setting{i}/m{m}/rep{r}/dataset.csv
    setting{i}/m{m}/rep{r}/baseline.json
    setting{i}/m{m}/rep{r}/{variant}/scores.csv
    setting{i}/m{m}/rep{r}/{variant}/cubes.jsonl
    setting{i}/m{m}/rep{r}/{variant}/ranking.jsonl
    setting{i}/m{m}/rep{r}/DONE
    results_setting{i}_m{m}.csv, subregions_setting{i}_m{m}.csv, report.txt

A replicate directory holding ``DONE`` is complete and is skipped on rerun.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import rng as _rng
from .basis import augment_design, matern_basis
from .bayes_baseline import (BaselinePriors, baseline_scores, gibbs_sample,
                             posterior_predictive)
from .config import ExperimentConfig, Setting, config_to_dict
from .cubing import (Cube, HyperGrid, ScoreTable,
                     aggregate_subregions, cube_search)
from .mc_dropout import (UQVariant, crps_samples_for_variant, interval,
                         predictive_passes, summarize)
from .nn import TrainConfig, train
from .scoring import ScoreRecord, crps_from_samples, score_intervals
from .spatial_sim import MaternParams, SpatialDataset, effective_range_to_rho, simulate_dataset

log = logging.getLogger(__name__)

SCORE_COLUMNS = ("replicate", "variant", "lambda", "dropout", "k",
                 "mmis", "crps", "rmse", "width", "coverage")


class ReplicateError(RuntimeError):
    pass


def fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- datasets

def write_dataset(ds: SpatialDataset, path) -> None:
    p = ds.X.shape[1]
    header = ["x_coord", "y_coord"] + [f"x{j + 1}" for j in range(p)] + ["z", "omega", "split"]
    omega = ds.omega if ds.omega is not None else np.full(ds.n_total, np.nan)
    split = ds.split
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n_total):
            w.writerow([fmt(ds.locations[i, 0]), fmt(ds.locations[i, 1])]
                       + [fmt(v) for v in ds.X[i]] + [fmt(ds.Z[i]), fmt(omega[i]), split[i]])


def load_tabular_dataset(path, *, log_transform: bool = False, train_fraction: float = 0.8,
                         seed: int = 0) -> SpatialDataset:
    """Read a dataset CSV with columns ``x_coord, y_coord, x1..xp, z``.

    Optional ``omega`` and ``split`` columns are honoured; without ``split`` a
    seeded random partition with ``train_fraction`` of rows for training is drawn.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ValueError(f"{path}: duplicate column names in header")
    for req in ("x_coord", "y_coord", "z"):
        if req not in header:
            raise ValueError(f"{path}: missing column {req!r}")
    xcols = sorted((h for h in header if h[:1] == "x" and h[1:].isdigit()), key=lambda h: int(h[1:]))
    numeric = ["x_coord", "y_coord"] + xcols + ["z"] + (["omega"] if "omega" in header else [])
    pos = {h: header.index(h) for h in header}
    data = {h: [] for h in numeric}
    split = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
        for h in numeric:
            try:
                v = float(row[pos[h]])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: column {h!r} is not numeric") from None
            if not math.isfinite(v) and h != "omega":
                raise ValueError(f"{path}: line {lineno}: non-finite value in column {h!r}")
            data[h].append(v)
        if "split" in pos:
            s = row[pos["split"]].strip()
            if s not in ("train", "test"):
                raise ValueError(f"{path}: line {lineno}: split must be train or test, got {s!r}")
            split.append(s)
    z = np.asarray(data["z"])
    if log_transform:
        if np.any(z <= 0):
            bad = int(np.flatnonzero(z <= 0)[0]) + 2
            raise ValueError(f"{path}: line {bad}: log transform needs positive responses")
        z = np.log(z)
    n = z.size
    if split:
        lab = np.asarray(split)
        train_idx, test_idx = np.flatnonzero(lab == "train"), np.flatnonzero(lab == "test")
    else:
        if not 0 < train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        perm = _rng.stream(seed, _rng.SPLIT).permutation(n)
        k = int(round(train_fraction * n))
        train_idx, test_idx = np.sort(perm[:k]), np.sort(perm[k:])
    X = np.column_stack([data[h] for h in xcols]) if xcols else np.empty((n, 0))
    omega = np.asarray(data["omega"]) if "omega" in data else None
    locations = np.column_stack([data["x_coord"], data["y_coord"]])
    return SpatialDataset(locations, X, z, omega, train_idx, test_idx)


# ---------------------------------------------------------------- pieces

@dataclass
class ReplicateData:
    dataset: SpatialDataset
    x_tilde: np.ndarray

    @property
    def train(self):
        return self.x_tilde[self.dataset.train_idx], self.dataset.Z[self.dataset.train_idx]

    @property
    def test(self):
        return self.x_tilde[self.dataset.test_idx], self.dataset.Z[self.dataset.test_idx]


def sim_seed(cfg: ExperimentConfig, setting: Setting, rep: int) -> int:
    # shared across basis dimensions so m-comparisons are paired
    return _rng.derive_seed(cfg.seed_root, "sim", setting.id, rep)


def prepare_replicate(cfg: ExperimentConfig, setting: Setting, m: int, rep: int) -> ReplicateData:
    sim = replace(cfg.sim, nu=setting.nu, effective_range=setting.effective_range,
                  seed=sim_seed(cfg, setting, rep))
    ds = simulate_dataset(sim)
    params = MaternParams(1.0, effective_range_to_rho(setting.effective_range, setting.nu), setting.nu)
    basis = matern_basis(ds.locations, params, m)
    return ReplicateData(ds, augment_design(ds.X, basis.phi))


def run_baseline(cfg: ExperimentConfig, data: ReplicateData, seed: int) -> ScoreRecord:
    x_tr, z_tr = data.train
    x_te, z_te = data.test
    priors = BaselinePriors.default(x_tr.shape[1], z_tr, cfg.baseline.prior_cov_scale,
                                    cfg.baseline.tau2_shape)
    draws = gibbs_sample(x_tr, z_tr, priors, cfg.baseline.n_iter, cfg.baseline.n_burn,
                         seed=_rng.derive_seed(seed, "gibbs"))
    pred = posterior_predictive(draws, x_te, seed=_rng.derive_seed(seed, "ppd"))
    return baseline_scores(pred, z_te, cfg.alpha, cfg.gamma)


def _diverged_row(replicate, v, lam, p, k) -> dict:
    return {"replicate": replicate, "variant": v, "lambda": lam, "dropout": p, "k": k,
            "mmis": math.inf, "crps": math.inf, "rmse": math.inf, "width": math.inf,
            "coverage": 0.0}


def score_grid(cfg: ExperimentConfig, data: ReplicateData, grid: HyperGrid, variants, seed: int,
               replicate: int = 0) -> dict:
    """Train one network per ``(lambda, dropout)`` and head type; score every k.

    EU and FA share the mean-only network, LA uses the two-headed one.
    Returns ``{variant: list of row dicts}`` in grid order.
    """
    x_tr, z_tr = data.train
    x_te, z_te = data.test
    heads = sorted({"gaussian_nll" if v == "LA" else "mse" for v in variants})
    rows = {v: [] for v in variants}
    for lam in grid.lambda_values:
        for p in grid.dropout_values:
            for loss in heads:
                tag = _rng.derive_seed(seed, "net", repr(lam), repr(p), loss)
                tc = TrainConfig(dropout_rate=p, weight_decay=lam, seed=tag, loss=loss,
                                 learning_rate=cfg.train.learning_rate, momentum=cfg.train.momentum,
                                 batch_size=cfg.train.batch_size, epochs=cfg.train.epochs)
                try:
                    net = train(x_tr, z_tr, tc)
                    passes = predictive_passes(net, x_te, cfg.passes, p,
                                               seed=_rng.derive_seed(tag, "mc"))
                except FloatingPointError as exc:
                    log.warning("lambda=%r dropout=%r %s: %s", lam, p, loss, exc)
                    for v in variants:
                        if (v == "LA") == (loss == "gaussian_nll"):
                            rows[v].extend(_diverged_row(replicate, v, lam, p, k)
                                           for k in grid.k_values)
                    continue
                for v in variants:
                    if (v == "LA") != (loss == "gaussian_nll"):
                        continue
                    variant = UQVariant(v, cfg.fa_length_scale, x_tr.shape[0])
                    summ = summarize(passes, variant, lam)
                    samples = crps_samples_for_variant(passes, variant, seed=_rng.derive_seed(tag, "crps"))
                    crps = float(np.mean(crps_from_samples(samples.T, z_te)))
                    for k in grid.k_values:
                        L, U = interval(summ, k)
                        rec = score_intervals(summ.mean, L, U, z_te, crps, cfg.alpha, cfg.gamma)
                        rows[v].append({"replicate": replicate, "variant": v, "lambda": lam,
                                        "dropout": p, "k": k, **{f: getattr(rec, f) for f in
                                                                 ("mmis", "crps", "rmse", "width", "coverage")}})
    order = {c: i for i, c in enumerate(grid.configs())}
    for v in rows:
        rows[v].sort(key=lambda r: order[(r["lambda"], r["dropout"], r["k"])])
    return rows


def write_scores(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for r in rows:
            w.writerow([r["replicate"], r["variant"]] + [fmt(r[c]) for c in SCORE_COLUMNS[2:]])


def read_scores(path) -> list:
    with open(path, newline="") as fh:
        out = []
        for r in csv.DictReader(fh):
            out.append({"replicate": int(r["replicate"]), "variant": r["variant"],
                        **{c: float(r[c]) for c in SCORE_COLUMNS[2:]}})
    return out


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def rep_dir(cfg: ExperimentConfig, setting: Setting, m: int, rep: int) -> Path:
    return Path(cfg.output_dir) / setting.name / f"m{m}" / f"rep{rep}"


def replicate_seed(cfg: ExperimentConfig, setting: Setting, m: int, rep: int) -> int:
    return _rng.derive_seed(cfg.seed_root, "replicate", setting.id, m, rep)


def run_replicate(cfg: ExperimentConfig, setting: Setting, m: int, rep: int):
    """Simulate, fit the baseline, train and score the grid, persist everything.

    Returns ``(baseline ScoreRecord, {variant: ScoreTable})``.
    """
    out = rep_dir(cfg, setting, m, rep)
    try:
        if (out / "DONE").exists():
            return load_replicate(cfg, setting, m, rep)
        out.mkdir(parents=True, exist_ok=True)
        seed = replicate_seed(cfg, setting, m, rep)
        data = prepare_replicate(cfg, setting, m, rep)
        write_dataset(data.dataset, out / "dataset.csv")
        base = run_baseline(cfg, data, seed)
        write_json(base.to_json_obj(), out / "baseline.json")
        rows = score_grid(cfg, data, cfg.grid, cfg.variants, seed, rep)
        for v, vrows in rows.items():
            (out / v).mkdir(exist_ok=True)
            write_scores(vrows, out / v / "scores.csv")
        (out / "DONE").write_text("")
    except Exception as exc:
        raise ReplicateError(f"{setting.name} m={m} rep={rep}: {exc}") from exc
    return load_replicate(cfg, setting, m, rep)


def table_from_rows(rows, baseline: dict, metric: str) -> ScoreTable:
    configs = [(r["lambda"], r["dropout"], r["k"]) for r in rows]
    key = "mis" if metric == "mmis" else "crps"
    return ScoreTable(configs, [r[metric] for r in rows], baseline[key])


def load_replicate(cfg: ExperimentConfig, setting: Setting, m: int, rep: int):
    out = rep_dir(cfg, setting, m, rep)
    baseline = json.loads((out / "baseline.json").read_text())
    tables = {v: table_from_rows(read_scores(out / v / "scores.csv"), baseline, cfg.metric)
              for v in cfg.variants}
    rec = ScoreRecord(baseline["mis"], baseline["crps"], baseline["rmse"], baseline["width"],
                      baseline["coverage"], cfg.alpha, cfg.gamma)
    return rec, tables


def run_cubes(cfg: ExperimentConfig, setting: Setting, m: int, rep: int) -> dict:
    out = rep_dir(cfg, setting, m, rep)
    _, tables = load_replicate(cfg, setting, m, rep)
    results = {}
    for v, table in tables.items():
        res = cube_search(table, cfg.cube)
        (out / v / "cubes.jsonl").write_text(res.log_lines())
        (out / v / "ranking.jsonl").write_text(
            "".join(json.dumps(c.to_json_obj(), sort_keys=True) + "\n" for c in res.ranked))
        results[v] = res
    return results


def read_ranking(path) -> list:
    return [Cube.from_json_obj(json.loads(line)) for line in Path(path).read_text().splitlines() if line]


# ---------------------------------------------------------------- study

def _job(args):
    cfg, setting, m, rep = args
    run_replicate(cfg, setting, m, rep)
    run_cubes(cfg, setting, m, rep)
    return setting.id, m, rep


def jobs(cfg: ExperimentConfig):
    return [(cfg, s, m, r) for s in cfg.settings for m in cfg.basis_dims for r in range(cfg.replicates)]


def run_study(cfg: ExperimentConfig) -> list:
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    write_json(config_to_dict(cfg), Path(cfg.output_dir) / "config.json")
    todo = jobs(cfg)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            for done in pool.map(_job, todo):
                log.info("finished %s", done)
    else:
        for job in todo:
            log.info("finished %s", _job(job))
    return build_report(cfg)


def region_rows(rows, cubes) -> list:
    """Score rows whose configuration falls in any of ``cubes``."""
    if not rows:
        return []
    pts = np.column_stack([np.log10([r["lambda"] for r in rows]),
                           [r["dropout"] for r in rows], [r["k"] for r in rows]])
    mask = np.zeros(len(rows), dtype=bool)
    for c in cubes:
        mask |= c.contains(pts)
    return [r for r, keep in zip(rows, mask) if keep]


RESULT_COLUMNS = ("model", "MIS", "CRPS", "RMSE", "Width", "Cvg", "n_rep")
SUBREGION_COLUMNS = ("variant", "WDR_lo", "WDR_hi", "DR_lo", "DR_hi", "SDR_lo", "SDR_hi", "N_top")


def build_report(cfg: ExperimentConfig) -> list:
    """Aggregate persisted replicate outputs into result and subregion tables."""
    root = Path(cfg.output_dir)
    written = []
    text = []
    for s in cfg.settings:
        for m in cfg.basis_dims:
            reps = range(cfg.replicates)
            base = [json.loads((rep_dir(cfg, s, m, r) / "baseline.json").read_text()) for r in reps]
            res_rows = [["Base", *(_mean(base, k) for k in ("mis", "crps", "rmse", "width", "coverage")),
                         len(base)]]
            sub_rows = []
            for v in cfg.variants:
                rankings = [read_ranking(rep_dir(cfg, s, m, r) / v / "ranking.jsonl") for r in reps]
                region = aggregate_subregions(rankings, cfg.top_n, cfg.keep)
                sub_rows.append([v, *region.lambda_range, *region.dropout_range,
                                 *region.k_range, region.n_top])
                per_rep = []
                for r in reps:
                    sel = region_rows(read_scores(rep_dir(cfg, s, m, r) / v / "scores.csv"), region.cubes)
                    per_rep.append({c: float(np.mean([x[c] for x in sel]))
                                    for c in ("mmis", "crps", "rmse", "width", "coverage")})
                res_rows.append([v, *(_mean(per_rep, k) for k in
                                      ("mmis", "crps", "rmse", "width", "coverage")), len(per_rep)])
            p1 = root / f"results_{s.name}_m{m}.csv"
            p2 = root / f"subregions_{s.name}_m{m}.csv"
            _write_table(p1, RESULT_COLUMNS, res_rows)
            _write_table(p2, SUBREGION_COLUMNS, sub_rows)
            written += [p1, p2]
            text.append(render_tables(s, m, res_rows, sub_rows))
    (root / "report.txt").write_text("\n".join(text))
    written.append(root / "report.txt")
    return written


def _mean(records, key) -> float:
    return float(np.mean([r[key] for r in records]))


def _write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else (c if isinstance(c, int) else fmt(c)) for c in row])


def render_tables(s: Setting, m: int, res_rows, sub_rows) -> str:
    lines = [f"Setting {s.id} (nu={s.nu}, effective range={s.effective_range}), m={m}",
             f"{'Model':<6}{'MIS':>9}{'CRPS':>9}{'RMSE':>9}{'Width':>9}{'Cvg':>8}"]
    for r in res_rows:
        lines.append(f"{r[0]:<6}{r[1]:>9.3f}{r[2]:>9.3f}{r[3]:>9.3f}{r[4]:>9.3f}{r[5]:>8.3f}")
    lines.append(f"{'Var':<6}{'WDR':>22}{'DR':>16}{'SDR':>16}{'Ntop':>7}")
    for r in sub_rows:
        wdr = f"({r[1]:.1e}, {r[2]:.1e})"
        dr = f"({r[3]:.2f}, {r[4]:.2f})"
        sdr = f"({r[5]:.2f}, {r[6]:.2f})"
        lines.append(f"{r[0]:<6}{wdr:>22}{dr:>16}{sdr:>16}{r[7]:>7.1f}")
    return "\n".join(lines) + "\n"
