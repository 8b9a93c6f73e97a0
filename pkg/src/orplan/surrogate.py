"""Per-specialty convex piecewise-linear approximation of the optimal
second-stage cost as a function of the expected block load.

A cloud of (expected load, optimal cost) points is sampled by solving the
second-stage LP for randomly drawn blocks; the points are split into
contiguous groups by load and a least-squares line is fitted per group.  The
model evaluates as the maximum over the fitted lines, hence is convex.
Built models are cached on disk keyed by their generation parameters.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import instgen, stage2
from .model import Specialty, lognormal_mean, lognormal_variance

__all__ = [
    "SurrogateModel",
    "sample_second_stage_cloud",
    "fit_piecewise",
    "build_surrogate",
    "load_or_build",
    "rightmost_slopes",
]

DEFAULT_PIECES = 3
DEFAULT_CLOUD_POINTS = 1000
DEFAULT_SEED = 90021

# Expected-load span of sampled blocks, as multiples of the regular time.
LOAD_SPAN = (0.3, 1.3)


@dataclass
class SurrogateModel:
    specialty: str
    pieces: list[tuple[float, float]]  # (slope, intercept)
    cloud_x: np.ndarray = field(default_factory=lambda: np.empty(0))
    cloud_y: np.ndarray = field(default_factory=lambda: np.empty(0))
    mean_abs_error: float = 0.0
    mean_abs_rel_dev: float = 0.0
    key: dict = field(default_factory=dict)

    def evaluate(self, x: float) -> float:
        if x < 0:
            raise ValueError("expected load must be nonnegative")
        return max(a * x + b for a, b in self.pieces)

    def evaluate_many(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        vals = np.stack([a * x + b for a, b in self.pieces])
        return vals.max(axis=0)

    @property
    def rightmost_slope(self) -> float:
        return max(a for a, _ in self.pieces)

    def to_dict(self) -> dict:
        return {
            "specialty": self.specialty,
            "pieces": [[a, b] for a, b in self.pieces],
            "cloud_x": self.cloud_x.tolist(),
            "cloud_y": self.cloud_y.tolist(),
            "mean_abs_error": self.mean_abs_error,
            "mean_abs_rel_dev": self.mean_abs_rel_dev,
            "key": self.key,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SurrogateModel":
        return cls(
            specialty=data["specialty"],
            pieces=[(float(a), float(b)) for a, b in data["pieces"]],
            cloud_x=np.asarray(data.get("cloud_x", []), dtype=float),
            cloud_y=np.asarray(data.get("cloud_y", []), dtype=float),
            mean_abs_error=float(data.get("mean_abs_error", 0.0)),
            mean_abs_rel_dev=float(data.get("mean_abs_rel_dev", 0.0)),
            key=data.get("key", {}),
        )


def _draw_block(
    specialty: Specialty,
    rng: np.random.Generator,
    k_scenarios: int,
    regular_time: float,
) -> tuple[float, np.ndarray]:
    """Draw a random block occupancy spanning LOAD_SPAN of the regular time.

    The case count is the typical number of surgeries for a uniform load
    target (target / marginal mean, rounded), so blocks at a given expected
    load have a realistic composition; mixing, say, one 260-minute case with
    two 130-minute cases at the same load would blur the one-dimensional
    cost-versus-load relationship the surrogate fits.
    """
    target = rng.uniform(LOAD_SPAN[0] * regular_time, LOAD_SPAN[1] * regular_time)
    count = max(1, round(target / specialty.marginal_mean))
    typical = count * specialty.marginal_mean
    for _ in range(50):
        mus = []
        sigmas = []
        for _ in range(count):
            delta = instgen.draw_delta(rng)
            mu, sigma = instgen.derive_patient_lognormal(specialty, delta, rng)
            mus.append(mu)
            sigmas.append(sigma)
        expected = float(sum(lognormal_mean(m, s) for m, s in zip(mus, sigmas)))
        if 0.7 * typical <= expected <= 1.3 * typical:
            break
    order = np.argsort([lognormal_variance(m, s) for m, s in zip(mus, sigmas)],
                       kind="stable")
    mu_arr = np.asarray(mus)[order]
    sig_arr = np.asarray(sigmas)[order]
    durations = rng.lognormal(
        mean=mu_arr[:, None], sigma=sig_arr[:, None], size=(len(mus), k_scenarios)
    )
    return expected, durations


def sample_second_stage_cloud(
    specialty: Specialty,
    rates: tuple[float, float, float],
    n_points: int,
    k_scenarios: int = stage2.PREPROCESS_K,
    rng: np.random.Generator | None = None,
    regular_time: float = instgen.REGULAR_TIME,
    workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``n_points`` (expected load, optimal second-stage cost) pairs."""
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    rng = rng or np.random.default_rng(DEFAULT_SEED)
    co, cw, ci = rates
    drawn = [_draw_block(specialty, rng, k_scenarios, regular_time) for _ in range(n_points)]

    def solve_point(item: tuple[float, np.ndarray]) -> float:
        expected, durations = item
        problem = stage2.BlockProblem(
            durations=durations,
            regular_time=regular_time,
            overtime_rate=co,
            waiting_rate=cw,
            idle_rate=ci,
        )
        return stage2.solve_block_lp(problem).cost

    workers = workers or min(4, os.cpu_count() or 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            ys = list(pool.map(solve_point, drawn))
    else:
        ys = [solve_point(item) for item in drawn]
    xs = np.array([x for x, _ in drawn])
    return xs, np.array(ys)


class _SegmentedOls:
    """Closed-form weighted-least-squares line and error on any contiguous
    index range, O(1) per query via prefix sums.

    Weights are 1/max(y,1)^2, matching the relative accuracy metric the
    surrogate is judged by; unweighted fitting lets the (large, spread-out)
    high-cost points pull the lines away from the near-zero region, where a
    small absolute error is a large relative one.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray):
        w = 1.0 / np.square(np.maximum(y, 1.0))
        z = np.zeros(1)
        self.sw = np.concatenate([z, np.cumsum(w)])
        self.sx = np.concatenate([z, np.cumsum(w * x)])
        self.sy = np.concatenate([z, np.cumsum(w * y)])
        self.sxx = np.concatenate([z, np.cumsum(w * x * x)])
        self.sxy = np.concatenate([z, np.cumsum(w * x * y)])
        self.syy = np.concatenate([z, np.cumsum(w * y * y)])
        self.weights = w

    def line(self, i: int, j: int) -> tuple[float, float, float]:
        """(slope, intercept, weighted sse) for points i..j-1."""
        sw = self.sw[j] - self.sw[i]
        sx = self.sx[j] - self.sx[i]
        sy = self.sy[j] - self.sy[i]
        sxx = self.sxx[j] - self.sxx[i]
        sxy = self.sxy[j] - self.sxy[i]
        syy = self.syy[j] - self.syy[i]
        det = sw * sxx - sx * sx
        if det <= 1e-12 * max(sw * sxx, 1.0):
            mean = sy / sw
            return 0.0, float(mean), float(max(syy - sw * mean * mean, 0.0))
        slope = (sw * sxy - sx * sy) / det
        intercept = (sy - slope * sx) / sw
        sse = syy - intercept * sy - slope * sxy
        return float(slope), float(intercept), float(max(sse, 0.0))


def _dp_boundaries(xs: np.ndarray, ys: np.ndarray, pieces: int) -> list[int]:
    """Contiguous split of the sorted cloud minimizing total per-group SSE."""
    n = xs.size
    ols = _SegmentedOls(xs, ys)
    min_size = 2
    cost = np.full((pieces + 1, n + 1), np.inf)
    back = np.zeros((pieces + 1, n + 1), dtype=int)
    cost[0, 0] = 0.0
    for g in range(1, pieces + 1):
        for j in range(g * min_size, n + 1):
            for i in range((g - 1) * min_size, j - min_size + 1):
                if not np.isfinite(cost[g - 1, i]):
                    continue
                candidate = cost[g - 1, i] + ols.line(i, j)[2]
                if candidate < cost[g, j]:
                    cost[g, j] = candidate
                    back[g, j] = i
    bounds = [n]
    for g in range(pieces, 0, -1):
        bounds.append(back[g, bounds[-1]])
    bounds.reverse()
    return bounds


def _max_affine_sse(lines: np.ndarray, x: np.ndarray, y: np.ndarray,
                    weights: np.ndarray) -> float:
    pred = (lines[:, :1] * x[None, :] + lines[:, 1:]).max(axis=0)
    return float(np.sum(weights * (pred - y) ** 2))


def fit_piecewise(x: np.ndarray, y: np.ndarray, pieces: int = DEFAULT_PIECES) -> list[tuple[float, float]]:
    """Fit a max-of-lines model: split the x-sorted cloud into contiguous
    groups, run a line regression per group, then alternate between
    reassigning points to their active line and refitting until the
    max-of-lines squared error stops improving.

    The refinement matters because the model evaluates as the maximum of the
    lines: an unconstrained per-group fit can produce a line that dominates
    far outside its own group.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 * pieces:
        raise ValueError(f"need at least {2 * pieces} points to fit {pieces} pieces")
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    ols = _SegmentedOls(xs, ys)
    weights = ols.weights
    bounds = _dp_boundaries(xs, ys, pieces)
    lines = np.array([ols.line(i, j)[:2] for i, j in zip(bounds, bounds[1:])])

    best = lines.copy()
    best_sse = _max_affine_sse(lines, xs, ys, weights)
    assignment = np.zeros(xs.size, dtype=int)
    for _ in range(60):
        values = lines[:, :1] * xs[None, :] + lines[:, 1:]
        new_assignment = values.argmax(axis=0)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for j in range(lines.shape[0]):
            mask = assignment == j
            if mask.sum() < 2 or np.ptp(xs[mask]) < 1e-12:
                continue  # dead or degenerate piece keeps its line
            slope, intercept = np.polyfit(xs[mask], ys[mask], 1,
                                          w=np.sqrt(weights[mask]))
            lines[j] = (slope, intercept)
        sse = _max_affine_sse(lines, xs, ys, weights)
        if sse < best_sse - 1e-12:
            best_sse = sse
            best = lines.copy()
    return [(float(a), float(b)) for a, b in best]


def build_surrogate(
    specialty: Specialty,
    rates: tuple[float, float, float],
    n_points: int = DEFAULT_CLOUD_POINTS,
    k_scenarios: int = stage2.PREPROCESS_K,
    seed: int = DEFAULT_SEED,
    regular_time: float = instgen.REGULAR_TIME,
    pieces: int = DEFAULT_PIECES,
    workers: int | None = None,
) -> SurrogateModel:
    spec_tag = int(hashlib.sha256(specialty.id.encode()).hexdigest()[:8], 16)
    rng = np.random.default_rng(np.random.SeedSequence([seed, spec_tag]))
    x, y = sample_second_stage_cloud(
        specialty, rates, n_points, k_scenarios, rng, regular_time, workers
    )
    fitted = fit_piecewise(x, y, pieces)
    model = SurrogateModel(specialty=specialty.id, pieces=fitted, cloud_x=x, cloud_y=y)
    pred = model.evaluate_many(x)
    model.mean_abs_error = float(np.mean(np.abs(pred - y)))
    model.mean_abs_rel_dev = float(np.mean(np.abs(pred - y) / np.maximum(y, 1.0)))
    model.key = _cache_key(specialty, rates, n_points, k_scenarios, seed, regular_time, pieces)
    return model


def _cache_key(specialty, rates, n_points, k_scenarios, seed, regular_time, pieces) -> dict:
    return {
        "specialty": specialty.id,
        "marginal_mean": specialty.marginal_mean,
        "marginal_var": specialty.marginal_var,
        "rates": list(rates),
        "n_points": n_points,
        "k_scenarios": k_scenarios,
        "seed": seed,
        "regular_time": regular_time,
        "pieces": pieces,
    }


def _cache_path(cache_dir: str, key: dict) -> str:
    digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]
    return os.path.join(cache_dir, f"surrogate_{key['specialty']}_{digest}.json")


def load_or_build(
    cache_dir: str,
    specialties: dict[str, Specialty],
    rates: tuple[float, float, float],
    n_points: int = DEFAULT_CLOUD_POINTS,
    k_scenarios: int = stage2.PREPROCESS_K,
    seed: int = DEFAULT_SEED,
    regular_time: float = instgen.REGULAR_TIME,
    pieces: int = DEFAULT_PIECES,
    workers: int | None = None,
) -> dict[str, SurrogateModel]:
    """Load cached surrogate models, building and caching any that are missing."""
    os.makedirs(cache_dir, exist_ok=True)
    models: dict[str, SurrogateModel] = {}
    for code, spec in specialties.items():
        key = _cache_key(spec, rates, n_points, k_scenarios, seed, regular_time, pieces)
        path = _cache_path(cache_dir, key)
        if os.path.exists(path):
            with open(path) as fh:
                models[code] = SurrogateModel.from_dict(json.load(fh))
            continue
        model = build_surrogate(
            spec, rates, n_points, k_scenarios, seed, regular_time, pieces, workers
        )
        with open(path, "w") as fh:
            json.dump(model.to_dict(), fh)
        models[code] = model
    return models


def rightmost_slopes(models: dict[str, SurrogateModel]) -> dict[str, float]:
    return {code: m.rightmost_slope for code, m in models.items()}
