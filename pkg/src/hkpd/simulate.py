"""Synthetic key-shape point clouds and the batch studies built on them.

The key is an annulus (the head, whose hole is the keyhole) joined to a
rectangular shaft with two teeth. Geometry constants live in
``data/key_shape.json``. Variants:

``full-key``         the plain key
``noise-hole``       key with a small extra hole punched into the head ring
``quarter-keyhole``  keyhole reduced to one quadrant sector; the rest is solid
``extra-hole``       key plus a second ring of comparable size
``box-only``         no shape; every point uniform in the box

A fixed number ``round(n_points * percent / 100)`` of points is drawn from
the shape, the rest uniformly from the box.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Callable, Sequence

import numpy as np

from .errors import InvalidInputError
from .inference import GroupedSample, pairwise_distances, permanova_baseline, tanova, two_sample_test
from .persistence import PointCloud, diagram_from_points
from .spectral import DEFAULT_MARGIN, DEFAULT_M, embed_many

__all__ = [
    "KeyShapeSpec",
    "StudyConfig",
    "StudyReport",
    "TimingReport",
    "key_geometry",
    "in_shape",
    "sample_key_shape",
    "run_power_study",
    "run_robustness_study",
    "run_null_study",
    "run_timing_study",
    "run_study",
]

VARIANTS = ("full-key", "noise-hole", "quarter-keyhole", "extra-hole", "box-only")
LOCATED = ("noise-hole", "quarter-keyhole")
ALPHA = 0.05

# bandwidth for the studies; see README for the sweep behind it
STUDY_SIGMA = 0.3


@lru_cache(maxsize=1)
def key_geometry() -> dict:
    with resources.files("hkpd").joinpath("data/key_shape.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class KeyShapeSpec:
    variant: str = "full-key"
    location: int | None = None
    percent: float = 100.0
    n_points: int = 100
    box: tuple = ((0.0, 1.0), (0.0, 1.0))

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidInputError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant in LOCATED:
            if self.location not in (1, 2, 3, 4):
                raise InvalidInputError(f"{self.variant} needs location 1-4, got {self.location}")
        elif self.location is not None:
            raise InvalidInputError(f"{self.variant} takes no location")
        if not 0 <= self.percent <= 100:
            raise InvalidInputError(f"percent must lie in [0, 100], got {self.percent}")
        if self.n_points < 1:
            raise InvalidInputError("n_points must be positive")
        (x0, x1), (y0, y1) = self.box
        if not (x1 > x0 and y1 > y0):
            raise InvalidInputError(f"degenerate box {self.box}")

    @property
    def n_in(self) -> int:
        if self.variant == "box-only":
            return 0
        return int(round(self.n_points * self.percent / 100.0))


def _ring(x, y, center, r_in, r_out):
    r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2
    return (r2 >= r_in * r_in) & (r2 <= r_out * r_out)


def _rect(x, y, xs, ys):
    return (x >= xs[0]) & (x <= xs[1]) & (y >= ys[0]) & (y <= ys[1])


def in_shape(spec: KeyShapeSpec, points: np.ndarray) -> np.ndarray:
    """Membership mask of ``points`` in the shape region of ``spec``."""
    g = key_geometry()
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    if spec.variant == "box-only":
        return np.zeros(len(pts), dtype=bool)
    head = g["head"]
    c = head["center"]
    # solid head disc minus the keyhole, shaft and teeth
    disc = _ring(x, y, c, 0.0, head["outer_radius"])
    keyhole = _ring(x, y, c, 0.0, head["keyhole_radius"])
    if spec.variant == "quarter-keyhole":
        start = g["quarter_keyhole"]["start_deg"][spec.location - 1]
        ang = np.degrees(np.arctan2(y - c[1], x - c[0])) % 360.0
        keyhole &= ((ang - start) % 360.0) < 90.0
    mask = disc & ~keyhole
    mask |= _rect(x, y, g["shaft"]["x"], g["shaft"]["y"])
    for tooth in g["teeth"]:
        mask |= _rect(x, y, tooth["x"], tooth["y"])
    if spec.variant == "noise-hole":
        nh = g["noise_hole"]
        a = math.radians(nh["angles_deg"][spec.location - 1])
        centre = (c[0] + nh["ring_radius"] * math.cos(a), c[1] + nh["ring_radius"] * math.sin(a))
        mask &= ~_ring(x, y, centre, 0.0, nh["radius"])
    if spec.variant == "extra-hole":
        eh = g["extra_hole"]
        mask |= _ring(x, y, eh["center"], eh["inner_radius"], eh["outer_radius"])
    return mask


def _shape_bounds(spec):
    g = key_geometry()
    c, r = g["head"]["center"], g["head"]["outer_radius"]
    xs = [c[0] - r, g["shaft"]["x"][1]]
    ys = [min(c[1] - r, min(t["y"][0] for t in g["teeth"])), c[1] + r]
    if spec.variant == "extra-hole":
        eh = g["extra_hole"]
        xs = [min(xs[0], eh["center"][0] - eh["outer_radius"]), max(xs[1], eh["center"][0] + eh["outer_radius"])]
        ys = [min(ys[0], eh["center"][1] - eh["outer_radius"]), max(ys[1], eh["center"][1] + eh["outer_radius"])]
    return xs, ys


def sample_key_shape(spec: KeyShapeSpec, seed: int | np.random.SeedSequence) -> PointCloud:
    """Exactly ``spec.n_in`` points uniform on the shape, the rest uniform on the box."""
    rng = np.random.default_rng(seed)
    n_in = spec.n_in
    inside = np.empty((0, 2))
    if n_in:
        xs, ys = _shape_bounds(spec)
        chunks, have = [], 0
        while have < n_in:
            cand = np.column_stack([rng.uniform(*xs, size=4 * n_in), rng.uniform(*ys, size=4 * n_in)])
            cand = cand[in_shape(spec, cand)]
            chunks.append(cand)
            have += len(cand)
        inside = np.vstack(chunks)[:n_in]
    (x0, x1), (y0, y1) = spec.box
    n_out = spec.n_points - n_in
    outside = np.column_stack([rng.uniform(x0, x1, size=n_out), rng.uniform(y0, y1, size=n_out)])
    return PointCloud(np.vstack([inside, outside]))


# ---------------------------------------------------------------------------
# study configuration and reports

STUDIES = ("power", "sensitivity", "noise", "hole", "null", "timing")
TESTS = ("two-sample", "tanova", "permanova")


@dataclass
class StudyConfig:
    study: str
    test: str = "two-sample"
    sizes: list = field(default_factory=lambda: [[5, 5]])
    percents: list = field(default_factory=lambda: [100])
    mode: str = "random"
    replicates: int = 100
    n_steps: int = 100_000
    shuffle_period: int = 500
    sigma: float = STUDY_SIGMA
    M: int = DEFAULT_M
    margin: float = DEFAULT_MARGIN
    n_points: int = 100
    seed: int = 0
    repeats: int = 1
    permanova_perms: int | None = None

    def __post_init__(self):
        if self.study not in STUDIES:
            raise InvalidInputError(f"unknown study {self.study!r}; expected one of {STUDIES}")
        if self.test not in TESTS:
            raise InvalidInputError(f"unknown test {self.test!r}; expected one of {TESTS}")
        if self.mode not in ("pre-specified", "random"):
            raise InvalidInputError(f"mode must be 'pre-specified' or 'random', got {self.mode!r}")
        self.sizes = [[int(n) for n in s] for s in self.sizes]
        if not self.sizes or any(len(s) < 2 or min(s) < 1 for s in self.sizes):
            raise InvalidInputError(f"every size setting needs >= 2 nonempty groups, got {self.sizes}")
        if self.test == "two-sample" and any(len(s) != 2 for s in self.sizes):
            raise InvalidInputError("the two-sample test takes exactly two groups per setting")
        if self.study == "power" and self.test != "two-sample":
            raise InvalidInputError("the power study runs the two-sample test; use 'sensitivity' for K = 3")
        if self.study == "sensitivity":
            if self.test == "two-sample":
                raise InvalidInputError("the sensitivity study compares three groups; use tanova or permanova")
            if any(len(s) != 3 for s in self.sizes):
                raise InvalidInputError("the sensitivity design uses three groups")
        if self.replicates < 1 or self.n_steps < 1:
            raise InvalidInputError("replicates and n_steps must be positive")
        for p in self.percents:
            if not 0 <= p <= 100:
                raise InvalidInputError(f"percent {p} outside [0, 100]")
        if self.sigma < 0:
            raise InvalidInputError("sigma must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        if "study" not in d:
            raise InvalidInputError("config needs a 'study' key")
        return cls(**d)

    @classmethod
    def from_yaml(cls, path) -> "StudyConfig":
        import yaml

        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise InvalidInputError(f"{path}: config must be a mapping")
        if "study" in data and data["study"] is None:
            data["study"] = "null"  # unquoted `study: null` parses as YAML null
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


def _summary(p: np.ndarray) -> dict:
    p = np.asarray(p, dtype=np.float64)
    return {
        "runs": int(len(p)),
        "rejections": int(np.count_nonzero(p < ALPHA)),
        "rejection_rate": float(np.mean(p < ALPHA)) if len(p) else math.nan,
        "mean_p": float(p.mean()) if len(p) else math.nan,
        "sd_p": float(p.std(ddof=1)) if len(p) > 1 else 0.0,
    }


@dataclass
class StudyReport:
    config: dict
    rows: list

    def cells(self) -> list[tuple[str, float]]:
        seen = []
        for r in self.rows:
            key = (r["setting"], r["percent"])
            if key not in seen:
                seen.append(key)
        return seen

    def p_values(self, setting: str, percent: float) -> np.ndarray:
        return np.array([r["p_value"] for r in self.rows
                         if r["setting"] == setting and r["percent"] == percent])

    def summary(self) -> list[dict]:
        out = []
        for setting, pct in self.cells():
            rows = [r for r in self.rows if r["setting"] == setting and r["percent"] == pct]
            s = _summary(self.p_values(setting, pct))
            s.update(setting=setting, percent=pct,
                     mean_elapsed_ms=float(np.mean([r["elapsed_ms"] for r in rows])))
            out.append(s)
        return out

    def to_dict(self) -> dict:
        return {"config": self.config, "summary": self.summary(), "runs": self.rows}

    def to_csv(self, path) -> None:
        import csv

        cols = ["setting", "percent", "replicate", "p_value", "statistic", "degenerate", "elapsed_ms", "seed"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            w.writerows(self.rows)


@dataclass
class TimingReport:
    config: dict
    rows: list

    def growth(self, method: str) -> float:
        by_n = sorted(self.rows, key=lambda r: r["N"])
        return by_n[-1][f"{method}_s"] / by_n[0][f"{method}_s"]

    def to_dict(self) -> dict:
        return {"config": self.config, "rows": self.rows,
                "growth": {"tanova": self.growth("tanova"), "permanova": self.growth("permanova")}}


# ---------------------------------------------------------------------------
# group designs


def _located(variant, mode, j, rng):
    loc = (j % 4) + 1 if mode == "pre-specified" else int(rng.integers(1, 5))
    return variant, loc


def group_specs(cfg: StudyConfig, sizes: Sequence[int], percent: float,
                rng: np.random.Generator) -> list[list[KeyShapeSpec]]:
    """Per-group lists of cloud specs for one replicate."""
    K = len(sizes)
    groups = []
    for g, n in enumerate(sizes):
        specs = []
        for j in range(n):
            if cfg.study == "power":
                variant, loc = ("box-only", None) if g == 0 else ("full-key", None)
            elif cfg.study == "sensitivity":
                variant, loc = ("full-key", None) if g == K - 1 else ("box-only", None)
            elif cfg.study == "noise":
                if K == 2 and g == 0:
                    variant, loc = "full-key", None
                else:
                    variant, loc = _located("noise-hole", cfg.mode, j, rng)
            elif cfg.study == "hole":
                if K == 2 and g == 0:
                    variant, loc = "quarter-keyhole", 1
                else:
                    variant, loc = _located("quarter-keyhole", cfg.mode, j, rng)
            else:  # null: every group from the same generator
                variant, loc = "full-key", None
            specs.append(KeyShapeSpec(variant, loc, percent, cfg.n_points))
        groups.append(specs)
    return groups


def _child_seed(root: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(root), spawn_key=tuple(int(p) for p in path))


def build_sample(cfg: StudyConfig, sizes, percent, ss: np.random.SeedSequence) -> GroupedSample:
    rng = np.random.default_rng(ss)
    groups = group_specs(cfg, sizes, percent, rng)
    clouds = [[sample_key_shape(spec, rng.integers(2 ** 63)) for spec in g] for g in groups]
    diagrams = [diagram_from_points(c.points, dim=1) for g in clouds for c in g]
    embeddings = embed_many(diagrams, M=cfg.M, margin=cfg.margin)
    labels = np.concatenate([np.full(len(g), k) for k, g in enumerate(groups)])
    return GroupedSample(embeddings, labels)


def run_test(cfg: StudyConfig, sample: GroupedSample, seed: int):
    if cfg.test == "two-sample":
        return two_sample_test(sample, sigma=cfg.sigma, n_steps=cfg.n_steps,
                               shuffle_period=cfg.shuffle_period, seed=seed)
    if cfg.test == "tanova":
        return tanova(sample, sigma=cfg.sigma, n_steps=cfg.n_steps,
                      shuffle_period=cfg.shuffle_period, seed=seed)
    return permanova_baseline(sample, n_perms=cfg.n_steps, seed=seed, sigma=cfg.sigma)


def _replicate(args) -> dict:
    cfg_dict, s_idx, p_idx, rep = args
    cfg = StudyConfig.from_dict(cfg_dict)
    sizes, percent = cfg.sizes[s_idx], cfg.percents[p_idx]
    ss = _child_seed(cfg.seed, s_idx, p_idx, rep)
    t0 = time.perf_counter()
    sample = build_sample(cfg, sizes, percent, ss)
    chain_seed = int(ss.generate_state(2, dtype=np.uint64)[1])
    res = run_test(cfg, sample, chain_seed)
    return {
        "setting": "/".join(str(n) for n in sizes),
        "percent": percent,
        "replicate": rep,
        "p_value": res.p_value,
        "statistic": float(res.statistic),
        "degenerate": bool(res.degenerate),
        "elapsed_ms": (time.perf_counter() - t0) * 1e3,
        "seed": chain_seed,
    }


def run_study(cfg: StudyConfig, jobs: int = 1,
              progress: Callable[[int, int], Any] | None = None) -> StudyReport:
    """Run every (size setting, percent, replicate) cell of a resampling study."""
    if cfg.study == "timing":
        raise InvalidInputError("use run_timing_study for timing configs")
    tasks = [(cfg.to_dict(), s, p, r) for s in range(len(cfg.sizes))
             for p in range(len(cfg.percents)) for r in range(cfg.replicates)]
    rows = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, row in enumerate(pool.map(_replicate, tasks, chunksize=4)):
                rows.append(row)
                if progress:
                    progress(i + 1, len(tasks))
    else:
        for i, t in enumerate(tasks):
            rows.append(_replicate(t))
            if progress:
                progress(i + 1, len(tasks))
    return StudyReport(cfg.to_dict(), rows)


def run_power_study(cfg: StudyConfig, jobs: int = 1, progress=None) -> StudyReport:
    if cfg.study != "power":
        raise InvalidInputError(f"expected a power config, got {cfg.study!r}")
    return run_study(cfg, jobs, progress)


def run_robustness_study(cfg: StudyConfig, jobs: int = 1, progress=None) -> StudyReport:
    if cfg.study not in ("noise", "hole"):
        raise InvalidInputError(f"expected a noise or hole config, got {cfg.study!r}")
    return run_study(cfg, jobs, progress)


def run_null_study(cfg: StudyConfig, jobs: int = 1, progress=None) -> StudyReport:
    if cfg.study != "null":
        raise InvalidInputError(f"expected a null config, got {cfg.study!r}")
    return run_study(cfg, jobs, progress)


def run_timing_study(cfg: StudyConfig, progress=None) -> TimingReport:
    """Wall time of T-ANOVA and PERMANOVA on the noise design at each size setting.

    Both tests get the same precomputed distance matrix, so only the
    resampling loops are timed. The best of ``cfg.repeats`` runs is kept.
    """
    if cfg.study != "timing":
        raise InvalidInputError(f"expected a timing config, got {cfg.study!r}")
    n_perms = cfg.permanova_perms or cfg.n_steps
    noise = StudyConfig(**{**cfg.to_dict(), "study": "noise", "test": "tanova"})
    rows = []
    for s_idx, sizes in enumerate(cfg.sizes):
        ss = _child_seed(cfg.seed, s_idx)
        sample = build_sample(noise, sizes, cfg.percents[0], ss)
        D = pairwise_distances(sample, cfg.sigma)
        t_an, t_pm = [], []
        for r in range(cfg.repeats):
            t0 = time.perf_counter()
            tanova(sample, sigma=cfg.sigma, n_steps=cfg.n_steps, shuffle_period=cfg.shuffle_period,
                   seed=cfg.seed + r, distances=D)
            t_an.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            permanova_baseline(sample, distances=D, n_perms=n_perms, seed=cfg.seed + r)
            t_pm.append(time.perf_counter() - t0)
        rows.append({"setting": "/".join(map(str, sizes)), "N": int(sum(sizes)),
                     "tanova_s": min(t_an), "permanova_s": min(t_pm),
                     "n_steps": int(cfg.n_steps), "n_perms": int(n_perms)})
        if progress:
            progress(s_idx + 1, len(cfg.sizes))
    return TimingReport(cfg.to_dict(), rows)
