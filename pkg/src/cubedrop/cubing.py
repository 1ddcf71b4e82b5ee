"""Recursive cube search over the (weight decay, dropout, k) score grid.

Cubes live in "split space": ``(log10 lambda, dropout, k)``.  A cube contains
grid points inclusively on every face except lower faces created by a split,
which are open so that a point on an interior face belongs to the lower child
only.
"""
from __future__ import annotations

import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np

AXES = ("lambda_log10", "dropout", "k")


@dataclass(frozen=True)
class HyperGrid:
    lambda_values: tuple
    dropout_values: tuple
    k_values: tuple

    def __post_init__(self):
        for name in ("lambda_values", "dropout_values", "k_values"):
            vals = np.asarray(getattr(self, name), dtype=float)
            if vals.size < 1 or np.any(np.diff(vals) <= 0):
                raise ValueError(f"{name} must be non-empty and strictly increasing")
            object.__setattr__(self, name, tuple(float(v) for v in vals))
        if min(self.lambda_values) <= 0:
            raise ValueError("weight decay values must be positive")

    @classmethod
    def regular(cls, n_lambda=10, n_dropout=9, n_k=17, lambda_range=(1e-10, 1e-1),
                dropout_range=(0.1, 0.9), k_range=(1.0, 10.0)) -> "HyperGrid":
        lam = 10.0 ** np.linspace(np.log10(lambda_range[0]), np.log10(lambda_range[1]), n_lambda)
        return cls(tuple(lam), tuple(np.linspace(*dropout_range, n_dropout)),
                   tuple(np.linspace(*k_range, n_k)))

    def configs(self):
        """All ``(lambda, dropout, k)`` triples, lambda slowest, k fastest."""
        return [(l, p, k) for l in self.lambda_values for p in self.dropout_values
                for k in self.k_values]


def to_split_space(configs) -> np.ndarray:
    c = np.asarray(configs, dtype=float).reshape(-1, 3)
    return np.column_stack([np.log10(c[:, 0]), c[:, 1], c[:, 2]])


def normalize_scores(raw, baseline: float):
    """Min-max map of the raw scores onto [0, 1]; baseline goes through the same map.

    Non-finite scores (diverged fits) are excluded from the min and max and
    mapped to 1, the worst value.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        raise ValueError("empty score table")
    ok = np.isfinite(raw)
    if not ok.any():
        return np.ones_like(raw), 0.0
    lo, hi = float(raw[ok].min()), float(raw[ok].max())
    if hi == lo:
        return np.where(ok, 0.0, 1.0), 0.0
    return np.where(ok, (raw - lo) / (hi - lo), 1.0), (baseline - lo) / (hi - lo)


@dataclass
class ScoreTable:
    configs: list
    raw: np.ndarray
    baseline: float
    normalized: np.ndarray = None
    baseline_normalized: float = None
    points: np.ndarray = None

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=float)
        if len(self.configs) != self.raw.size:
            raise ValueError("configs and raw scores differ in length")
        self.normalized, self.baseline_normalized = normalize_scores(self.raw, self.baseline)
        self.points = to_split_space(self.configs)

    @classmethod
    def from_points(cls, points, raw, baseline):
        """Build directly from split-space coordinates."""
        pts = np.asarray(points, dtype=float)
        configs = [(10.0 ** a, b, c) for a, b, c in pts]
        table = cls(configs, raw, baseline)
        table.points = pts.copy()
        return table

    def bounding_box(self):
        return tuple(self.points.min(axis=0)), tuple(self.points.max(axis=0))


@dataclass
class Cube:
    lo: tuple
    hi: tuple
    lo_open: tuple = (False, False, False)
    depth: int = 0
    id: int = 0
    parent_id: int | None = None
    stall: int = 0
    n_points: int = 0
    s_bar: float | None = None
    w: float | None = None
    o: float | None = None
    finished_reason: str | None = None

    def __post_init__(self):
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"inverted cube bounds {self.lo} > {self.hi}")

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def key(self) -> tuple:
        return tuple(self.lo) + tuple(self.hi) + tuple(self.lo_open)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        inside = np.ones(pts.shape[0], dtype=bool)
        for j in range(3):
            x = pts[:, j]
            low = x > self.lo[j] if self.lo_open[j] else x >= self.lo[j]
            inside &= low & (x <= self.hi[j])
        return inside

    def bounds_dict(self) -> dict:
        return {ax: [float(self.lo[j]), float(self.hi[j])] for j, ax in enumerate(AXES)}

    def to_json_obj(self) -> dict:
        return {"id": self.id, "parent": self.parent_id, "depth": self.depth,
                "bounds": self.bounds_dict(), "s_bar": self.s_bar, "w": self.w,
                "o": self.o, "stall": self.stall, "finished_reason": self.finished_reason,
                "lo_open": list(self.lo_open)}

    @classmethod
    def from_json_obj(cls, obj) -> "Cube":
        b = obj["bounds"]
        return cls(lo=tuple(b[a][0] for a in AXES), hi=tuple(b[a][1] for a in AXES),
                   lo_open=tuple(obj.get("lo_open", (False,) * 3)), depth=obj["depth"],
                   id=obj["id"], parent_id=obj["parent"],
                   stall=obj["stall"], s_bar=obj["s_bar"], w=obj["w"], o=obj["o"],
                   finished_reason=obj["finished_reason"])


def cube_stats(cube: Cube, table: ScoreTable):
    """``(S_bar, w, O)``: mean normalised score, baseline beat rate, ``w + 1 - S_bar``."""
    mask = cube.contains(table.points)
    if not mask.any():
        raise ValueError("cube contains no evaluated configurations")
    count = int(mask.sum())
    # fsum is correctly rounded, so the result does not depend on summation order
    s_bar = math.fsum(table.normalized[mask].tolist()) / count
    w = int(np.count_nonzero(table.raw[mask] < table.baseline)) / count
    return s_bar, w, w + (1.0 - s_bar)


def is_splittable(cube: Cube, points) -> bool:
    inside = np.atleast_2d(points)[cube.contains(points)]
    return inside.shape[0] > 0 and all(np.unique(inside[:, j]).size >= 2 for j in range(3))


def split(cube: Cube, points=None, next_id: int = 0):
    """Bisect every axis at its midpoint, giving 8 children (lower child first).

    ``points`` (split-space grid coordinates) enables the splittability check.
    """
    if points is not None and not is_splittable(cube, points):
        raise ValueError("cube is not splittable")
    mid = [0.5 * (a + b) for a, b in zip(cube.lo, cube.hi)]
    children = []
    for code in range(8):
        lo, hi, lo_open = [], [], []
        for j in range(3):
            upper = (code >> (2 - j)) & 1
            if upper:
                lo.append(mid[j]); hi.append(cube.hi[j]); lo_open.append(True)
            else:
                lo.append(cube.lo[j]); hi.append(mid[j]); lo_open.append(cube.lo_open[j])
        children.append(Cube(tuple(lo), tuple(hi), tuple(lo_open), depth=cube.depth + 1,
                             id=next_id + code, parent_id=cube.id))
    return children


@dataclass(frozen=True)
class CubeSearchConfig:
    epsilon: float = 0.15
    window: int = 3
    max_rounds: int = 10_000
    top_k: int = 10
    min_points: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.window < 1 or self.top_k < 1 or self.min_points < 1:
            raise ValueError("window, top_k and min_points must be >= 1")


@dataclass
class CubeSearchResult:
    ranked: list
    log: list = field(default_factory=list)
    n_dequeued: int = 0

    def log_lines(self) -> str:
        return "".join(json.dumps(c.to_json_obj(), sort_keys=True) + "\n" for c in self.log)


def rank_key(cube: Cube):
    return (-cube.o, cube.volume, cube.lo, cube.hi)


def cube_search(table: ScoreTable, cfg: CubeSearchConfig = CubeSearchConfig()) -> CubeSearchResult:
    """Breadth-first refinement of the bounding box of the evaluated grid.

    A child's stall counter grows by one whenever its relative improvement in
    ``O`` over its parent is below ``epsilon`` and resets to zero otherwise.
    Once a lineage has stalled for ``window`` consecutive levels, splitting
    stops and the ancestor where the stall began (the last cube whose
    refinement still helped) enters the finished set.  Unsplittable cubes are
    finished as they are; cubes with fewer than ``min_points`` grid points are
    logged but never ranked.
    """
    pts = table.points
    lo, hi = table.bounding_box()
    root = Cube(lo, hi, id=0)
    queue = deque([root])
    by_id = {0: root}
    finished: dict[int, Cube] = {}
    log = []
    next_id = 1
    dequeued = 0
    while queue and dequeued < cfg.max_rounds:
        cube = queue.popleft()
        dequeued += 1
        log.append(cube)
        mask = cube.contains(pts)
        cube.n_points = int(mask.sum())
        if cube.n_points < cfg.min_points:
            cube.finished_reason = "empty"
            continue
        cube.s_bar, cube.w, cube.o = cube_stats(cube, table)
        if cube.parent_id is not None:
            parent = by_id[cube.parent_id]
            rel = (cube.o - parent.o) / max(abs(parent.o), 1e-12)
            cube.stall = parent.stall + 1 if rel < cfg.epsilon else 0
        if cube.stall >= cfg.window:
            anchor = cube
            for _ in range(cube.stall):
                anchor = by_id[anchor.parent_id]
            anchor.finished_reason = "stalled"
            finished[anchor.id] = anchor
            cube.finished_reason = "pruned"
            continue
        if not is_splittable(cube, pts):
            cube.finished_reason = "unsplittable"
            finished[cube.id] = cube
            continue
        for child in split(cube, next_id=next_id):
            by_id[child.id] = child
            queue.append(child)
        next_id += 8
    ranked = sorted(finished.values(), key=rank_key)[: cfg.top_k]
    return CubeSearchResult(ranked, log, dequeued)


def brute_force_stats(cube: Cube, points, raw, baseline: float):
    """Reference ``(S_bar, w, O)`` by an explicit loop over every table entry."""
    raw = list(map(float, raw))
    finite = [s for s in raw if math.isfinite(s)]
    lo_raw, hi_raw = (min(finite), max(finite)) if finite else (0.0, 0.0)
    span = hi_raw - lo_raw
    terms, beat, count = [], 0, 0
    for (x0, x1, x2), s in zip(np.asarray(points).tolist(), raw):
        ok = True
        for x, a, b, opn in zip((x0, x1, x2), cube.lo, cube.hi, cube.lo_open):
            if (x <= a if opn else x < a) or x > b:
                ok = False
        if ok:
            count += 1
            if not math.isfinite(s):
                terms.append(1.0)
            else:
                terms.append(0.0 if span == 0 else (s - lo_raw) / span)
            beat += s < baseline
    if count == 0:
        return None
    s_bar = math.fsum(terms) / count
    w = beat / count
    return s_bar, w, w + (1.0 - s_bar)


def enumerate_cubes(table: ScoreTable, max_depth: int):
    """Every cube of the full octree down to ``max_depth``, no pruning."""
    lo, hi = table.bounding_box()
    level = [Cube(lo, hi)]
    out = list(level)
    for _ in range(max_depth):
        level = [ch for c in level for ch in split(c)]
        out.extend(level)
    return out


@dataclass
class Subregion:
    lambda_range: tuple
    dropout_range: tuple
    k_range: tuple
    n_top: float
    cubes: list

    def to_json_obj(self) -> dict:
        return {"WDR": list(self.lambda_range), "DR": list(self.dropout_range),
                "SDR": list(self.k_range), "N_top": self.n_top}


def aggregate_subregions(rankings, top_n: int = 10, keep: int = 5) -> Subregion:
    """Count how often each cube appears in a replicate's top ``top_n``; keep the
    ``keep`` most frequent (ties: higher mean O, then bounds) and report their
    per-axis envelope with ``N_top`` = mean appearance count of the kept cubes."""
    if not rankings:
        raise ValueError("no replicate rankings to aggregate")
    counts = Counter()
    o_vals: dict[tuple, list] = {}
    rep: dict[tuple, Cube] = {}
    for ranking in rankings:
        seen = set()
        for cube in ranking[:top_n]:
            k = cube.key
            if k in seen:
                continue
            seen.add(k)
            counts[k] += 1
            o_vals.setdefault(k, []).append(cube.o)
            rep.setdefault(k, cube)
    if not counts:
        raise ValueError("rankings contain no cubes")
    order = sorted(counts, key=lambda k: (-counts[k], -float(np.mean(o_vals[k])), k))
    kept = order[:keep]
    lo = np.min([rep[k].lo for k in kept], axis=0)
    hi = np.max([rep[k].hi for k in kept], axis=0)
    return Subregion(
        lambda_range=(float(10.0 ** lo[0]), float(10.0 ** hi[0])),
        dropout_range=(float(lo[1]), float(hi[1])),
        k_range=(float(lo[2]), float(hi[2])),
        n_top=float(np.mean([counts[k] for k in kept])),
        cubes=[rep[k] for k in kept],
    )
