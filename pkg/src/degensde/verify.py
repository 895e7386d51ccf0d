"""Monte-Carlo experiments probing the qualitative theory numerically.

Each experiment consumes an :class:`ExperimentConfig` (a declarative
coefficient family, simulation parameters, a start point, a sample
budget, and experiment-specific knobs) and produces an
:class:`EstimateReport`: estimates with standard errors, derived
constants, named pass/fail verdicts, and free-form notes.  Reports
serialize to stable JSON and CSV; two runs with the same config and
seed produce byte-identical files apart from the timestamp.

Experiments are embarrassingly parallel over paths.  Work is split into
fixed-size chunks whose boundaries depend only on the configuration,
and chunk results are merged in chunk order, so estimates are
bit-identical for every thread count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np
from numpy.random import Generator, Philox

from ._version import __version__
from .analysis import (
    GridField,
    check_pointwise_maximal_bound,
    default_radius_menu,
    lp_norm,
    maximal_function,
    sample_on_grid,
)
from .coefficients import build_family, select_exponents
from .sde_sim import SimConfig, brownian_increments, em_step_batch

__all__ = [
    "VerificationError",
    "ExperimentConfig",
    "EstimateReport",
    "nonexplosion_experiment",
    "occupation_decay_experiment",
    "krylov_ratio_experiment",
    "pathwise_uniqueness_signature",
    "maximal_suite",
    "run_experiment",
]

SCHEMA_VERSION = 1

_KINDS = (
    "nonexplosion",
    "occupation_decay",
    "krylov",
    "uniqueness",
    "maximal_suite",
)


class VerificationError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run.

    ``family`` is a specification dict accepted by ``build_family``;
    ``params`` holds experiment-specific knobs (all JSON-representable).
    ``maximal_suite`` is grid-based and needs no family/sim/start.
    """

    kind: str
    budget: int
    family: Optional[dict] = None
    sim: Optional[SimConfig] = None
    start: Optional[tuple] = None
    params: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise VerificationError(
                f"unknown experiment kind {self.kind!r}; expected one of {_KINDS}"
            )
        if int(self.budget) != self.budget or self.budget < 100:
            raise VerificationError(
                f"budget must be an integer >= 100, got {self.budget}"
            )
        if self.kind != "maximal_suite":
            if self.family is None:
                raise VerificationError(f"{self.kind} requires a coefficient family")
            if self.sim is None:
                raise VerificationError(f"{self.kind} requires simulation parameters")
            if self.start is None:
                raise VerificationError(f"{self.kind} requires a start point")
            object.__setattr__(self, "start", tuple(float(v) for v in self.start))

    def to_dict(self) -> dict:
        sim = None
        if self.sim is not None:
            sim = {
                "step": self.sim.step,
                "horizon": self.sim.horizon,
                "seed": self.sim.seed,
                "path_count": self.sim.path_count,
                "explosion_threshold": self.sim.explosion_threshold,
                "degeneracy_thickness": self.sim.degeneracy_thickness,
            }
        return {
            "kind": self.kind,
            "name": self.name,
            "budget": int(self.budget),
            "family": dict(self.family) if self.family is not None else None,
            "sim": sim,
            "start": list(self.start) if self.start is not None else None,
            "params": _jsonify(dict(self.params)),
        }

    @property
    def seed(self) -> int:
        if self.sim is not None:
            return self.sim.seed
        return int(self.params.get("seed", 0))


def _jsonify(value):
    if isinstance(value, dict):
        return {str(k): _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        out = float(value)
        if not math.isfinite(out):
            raise VerificationError(f"non-finite value {out} cannot be serialized")
        return out
    if value is None or isinstance(value, str):
        return value
    raise VerificationError(f"value {value!r} is not JSON-representable")


def config_hash(config) -> str:
    """SHA-256 of the canonical JSON form of a configuration (or dict)."""
    if hasattr(config, "to_dict"):
        config = config.to_dict()
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class EstimateReport:
    """Experiment output: estimates, constants, verdicts, and notes.

    ``config_hash`` fingerprints the resolved configuration; the
    timestamp is excluded from the hash so reruns are comparable.
    """

    kind: str
    config: dict
    config_hash: str
    seed: int
    estimates: list
    constants: dict
    verdicts: list
    passed: bool
    notes: list
    code_version: str = __version__
    timestamp: str = ""
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": int(self.seed),
            "code_version": self.code_version,
            "timestamp": self.timestamp,
            "estimates": self.estimates,
            "constants": self.constants,
            "verdicts": self.verdicts,
            "passed": bool(self.passed),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def save_json(self, file_path) -> None:
        with open(file_path, "w") as fh:
            fh.write(self.to_json())

    def save_csv(self, file_path) -> None:
        """One row per estimate: parameter, value, stderr."""
        with open(file_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["parameter", "value", "stderr"])
            for entry in self.estimates:
                stderr = entry.get("stderr")
                writer.writerow(
                    [
                        entry["parameter"],
                        repr(float(entry["value"])),
                        "" if stderr is None else repr(float(stderr)),
                    ]
                )


def _make_report(config, estimates, constants, verdicts, notes) -> EstimateReport:
    config_dict = config.to_dict()
    return EstimateReport(
        kind=config.kind,
        config=config_dict,
        config_hash=config_hash(config_dict),
        seed=config.seed,
        estimates=_jsonify(estimates),
        constants=_jsonify(constants),
        verdicts=_jsonify(verdicts),
        passed=all(v["passed"] for v in verdicts),
        notes=list(notes),
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def _estimate(parameter: str, value, stderr) -> dict:
    return {"parameter": parameter, "value": float(value), "stderr": float(stderr)}


def _verdict(name: str, passed, detail: str) -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def _mean_stderr(samples: np.ndarray) -> tuple[float, float]:
    n = samples.size
    mean = float(np.mean(samples))
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(samples, ddof=1) / math.sqrt(n))


def _fraction_stderr(count: int, total: int) -> tuple[float, float]:
    p = count / total
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / total)


def _chunk_bounds(n_items: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk_size, n_items)) for lo in range(0, n_items, chunk_size)]


def _run_chunked(worker, n_items: int, chunk_size: int, threads: int) -> list:
    bounds = _chunk_bounds(n_items, chunk_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda b: worker(*b), bounds))
    return [worker(lo, hi) for lo, hi in bounds]


def _path_chunk_size(n_steps: int, dim: int, cap: int = 1024) -> int:
    # keep a chunk's increment table near 4e6 floats; depends only on config
    return max(4, min(cap, int(4.0e6 // max(1, n_steps * dim))))


def _simulate_chunk(coeffs, start, cfg, lo, hi, collect=None):
    """Advance paths lo..hi-1, freezing any that explode.

    Stored states stay finite: a path whose proposed state is non-finite
    or beyond the threshold keeps its last finite state and stops
    counting as alive.  ``collect(step, states, alive)`` observes the
    state at the left endpoint of each step.
    """
    n = hi - lo
    dim = coeffs.dim
    n_steps = cfg.n_steps
    dw = np.empty((n, n_steps, dim))
    for row in range(n):
        dw[row] = brownian_increments(cfg.seed, lo + row, n_steps, dim, cfg.step)
    states = np.tile(np.asarray(start, dtype=float), (n, 1))
    alive = np.ones(n, dtype=bool)
    exploded_step = np.full(n, -1, dtype=np.int64)
    max_norm_sq = np.einsum("ni,ni->n", states, states).copy()
    threshold_sq = cfg.explosion_threshold**2
    for k in range(n_steps):
        if collect is not None:
            collect(k, states, alive)
        with np.errstate(over="ignore", invalid="ignore"):
            proposed = em_step_batch(coeffs, states, dw[:, k], cfg.step)
        finite = np.isfinite(proposed).all(axis=1)
        norm_sq = np.einsum("ni,ni->n", proposed, proposed)
        ok = finite & (norm_sq <= threshold_sq)
        newly_dead = alive & ~ok
        exploded_step[newly_dead] = k + 1
        advanced = alive & ok
        states = np.where(advanced[:, None], proposed, states)
        np.maximum(max_norm_sq, np.where(advanced, norm_sq, 0.0), out=max_norm_sq)
        alive &= ok
    return {
        "states": states,
        "alive": alive,
        "exploded_step": exploded_step,
        "max_norm": np.sqrt(max_norm_sq),
    }


def nonexplosion_experiment(config: ExperimentConfig, threads: int = 1) -> EstimateReport:
    """Fraction of exploded paths plus max-norm quantiles.

    Passes when no path explodes before the horizon.
    """
    if config.kind != "nonexplosion":
        raise VerificationError(f"expected kind 'nonexplosion', got {config.kind!r}")
    coeffs = build_family(dict(config.family))
    cfg = config.sim
    params = dict(config.params)
    quantiles = [float(q) for q in params.get("quantiles", (0.5, 0.9, 0.99, 1.0))]
    chunk_size = _path_chunk_size(cfg.n_steps, coeffs.dim)

    def worker(lo, hi):
        out = _simulate_chunk(coeffs, config.start, cfg, lo, hi)
        return out["alive"], out["max_norm"], out["exploded_step"]

    results = _run_chunked(worker, config.budget, chunk_size, threads)
    alive = np.concatenate([r[0] for r in results])
    max_norm = np.concatenate([r[1] for r in results])
    n_exploded = int(np.count_nonzero(~alive))
    frac, frac_se = _fraction_stderr(n_exploded, config.budget)
    mean_norm, mean_norm_se = _mean_stderr(max_norm)

    estimates = [
        _estimate("exploded_fraction", frac, frac_se),
        _estimate("mean_max_norm", mean_norm, mean_norm_se),
    ]
    constants = {
        "n_paths": config.budget,
        "n_exploded": n_exploded,
        "horizon": cfg.n_steps * cfg.step,
    }
    for q in quantiles:
        constants[f"max_norm_q{q:g}"] = float(np.quantile(max_norm, q))
    verdicts = [
        _verdict(
            "no_explosions",
            n_exploded == 0,
            f"{n_exploded} of {config.budget} paths exploded before the horizon",
        )
    ]
    notes = [
        "exploded paths are frozen at their last finite state; "
        "their pre-explosion maximum enters the norm quantiles"
    ]
    return _make_report(config, estimates, constants, verdicts, notes)


def occupation_decay_experiment(config: ExperimentConfig, threads: int = 1) -> EstimateReport:
    """Mean time spent where the dispersion scale is <= eps, over an eps ladder.

    Passes when the start point is admissible, the means are
    nonincreasing in eps, and the smallest-eps mean is below
    ``threshold_factor`` times the horizon.
    """
    if config.kind != "occupation_decay":
        raise VerificationError(f"expected kind 'occupation_decay', got {config.kind!r}")
    coeffs = build_family(dict(config.family))
    cfg = config.sim
    params = dict(config.params)
    eps_list = [float(e) for e in params.get("eps_list", (0.4, 0.2, 0.1, 0.05))]
    if not eps_list or any(e < 0 for e in eps_list):
        raise VerificationError(f"eps_list must be nonempty and >= 0, got {eps_list}")
    if sorted(eps_list, reverse=True) != eps_list:
        raise VerificationError(f"eps_list must be decreasing, got {eps_list}")
    threshold_factor = float(params.get("threshold_factor", 0.01))
    horizon = cfg.n_steps * cfg.step
    start = np.asarray(config.start, dtype=float)
    start_ok = bool(coeffs.start_region(start[None, :])[0])
    chunk_size = _path_chunk_size(cfg.n_steps, coeffs.dim)
    eps_arr = np.asarray(eps_list)

    def worker(lo, hi):
        counts = np.zeros((hi - lo, len(eps_list)), dtype=np.int64)

        def collect(_k, states, alive):
            disp = np.asarray(coeffs.dispersion_scale(states), dtype=float)
            counts[:, :] += alive[:, None] & (disp[:, None] <= eps_arr[None, :])

        _simulate_chunk(coeffs, config.start, cfg, lo, hi, collect=collect)
        return counts

    counts = np.concatenate(_run_chunked(worker, config.budget, chunk_size, threads))
    occupation = counts * cfg.step

    estimates = []
    means = []
    for j, eps in enumerate(eps_list):
        mean, se = _mean_stderr(occupation[:, j])
        means.append(mean)
        estimates.append(_estimate(f"occupation_eps_{eps:g}", mean, se))

    nonincreasing = all(means[j] >= means[j + 1] for j in range(len(means) - 1))
    smallest_ok = means[-1] < threshold_factor * horizon
    verdicts = [
        _verdict(
            "start_point_admissible",
            start_ok,
            f"start {start.tolist()} "
            + ("lies in" if start_ok else "violates")
            + " the admissible start region",
        ),
        _verdict(
            "occupation_nonincreasing",
            nonincreasing,
            f"means over eps ladder {eps_list}: {[f'{m:.6g}' for m in means]}",
        ),
        _verdict(
            "smallest_eps_occupation_small",
            smallest_ok,
            f"mean occupation {means[-1]:.6g} at eps={eps_list[-1]:g} vs "
            f"threshold {threshold_factor:g} * horizon = {threshold_factor * horizon:.6g}",
        ),
    ]
    notes = []
    if not start_ok:
        notes.append(
            "start point lies in the degenerate region; the run is recorded "
            "as an out-of-hypothesis control"
        )
    constants = {
        "eps_list": eps_list,
        "horizon": horizon,
        "threshold_factor": threshold_factor,
    }
    return _make_report(config, estimates, constants, verdicts, notes)


def krylov_ratio_experiment(config: ExperimentConfig, threads: int = 1) -> EstimateReport:
    """Occupation-integral bound probed with shrinking normalized spikes.

    Test functions f_k = k^{d/q_tilde} * 1_{ball(center, 1/k)} all share
    the same L^{q_tilde} norm, so the time-integral estimates divided by
    exp(horizon) * norm should stay comparable across k.  Passes when
    the spread max/median of the ratios is below ``spread_cap``.
    """
    if config.kind != "krylov":
        raise VerificationError(f"expected kind 'krylov', got {config.kind!r}")
    coeffs = build_family(dict(config.family))
    cfg = config.sim
    params = dict(config.params)
    start = np.asarray(config.start, dtype=float)
    if not bool(coeffs.start_region(start[None, :])[0]):
        raise VerificationError(
            f"start point {start.tolist()} lies outside the admissible start "
            "region of the family; the occupation bound is probed from "
            "admissible starts only"
        )
    d = coeffs.dim
    scales = [int(k) for k in params.get("spike_scales", (1, 2, 4, 8))]
    if any(k < 1 for k in scales):
        raise VerificationError(f"spike scales must be >= 1, got {scales}")
    spread_cap = float(params.get("spread_cap", 3.0))
    center = np.asarray(params.get("center", config.start), dtype=float)
    if center.shape != (d,):
        raise VerificationError(f"center must have shape ({d},), got {center.shape}")
    if "q_tilde" in params:
        q_tilde = float(params["q_tilde"])
    else:
        alpha = float(config.family.get("alpha", 0.0))
        eps = float(params.get("exponent_margin", 1.0))
        q_tilde = select_exponents(d, alpha, eps).q_tilde

    horizon = cfg.n_steps * cfg.step
    unit_ball_vol = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
    spike_norm = unit_ball_vol ** (1.0 / q_tilde)
    denominator = math.exp(horizon) * spike_norm
    heights = np.asarray([float(k) ** (d / q_tilde) for k in scales])
    radii_sq = np.asarray([(1.0 / k) ** 2 for k in scales])
    # spike height is calibrated so every f_k has the same L^{q_tilde} norm
    spike_norms = [
        float(k) ** (d / q_tilde) * (unit_ball_vol * float(k) ** (-d)) ** (1.0 / q_tilde)
        for k in scales
    ]
    norm_spread = max(abs(v - spike_norm) / spike_norm for v in spike_norms)
    chunk_size = _path_chunk_size(cfg.n_steps, d)

    def worker(lo, hi):
        integrals = np.zeros((hi - lo, len(scales)))

        def collect(_k, states, alive):
            delta = states - center[None, :]
            dist_sq = np.einsum("ni,ni->n", delta, delta)
            hits = alive[:, None] & (dist_sq[:, None] <= radii_sq[None, :])
            integrals[:, :] += hits * heights[None, :]

        _simulate_chunk(coeffs, config.start, cfg, lo, hi, collect=collect)
        return integrals * cfg.step

    integrals = np.concatenate(_run_chunked(worker, config.budget, chunk_size, threads))

    estimates = []
    ratios = []
    hit_counts = []
    for j, k in enumerate(scales):
        mean, se = _mean_stderr(integrals[:, j])
        ratios.append(mean / denominator)
        hit_counts.append(int(np.count_nonzero(integrals[:, j] > 0.0)))
        estimates.append(_estimate(f"ratio_k{k}", mean / denominator, se / denominator))

    zero_hit = [k for j, k in enumerate(scales) if hit_counts[j] == 0]
    notes = []
    if zero_hit:
        notes.append(
            f"inconclusive: no paths reached the spike support for k in {zero_hit}; "
            "increase the budget or move the center"
        )
        verdict_spread = _verdict(
            "ratio_spread_bounded", False, "not evaluated: some spikes were never hit"
        )
    else:
        max_ratio = max(ratios)
        median_ratio = float(np.median(ratios))
        spread = max_ratio / median_ratio if median_ratio > 0 else math.inf
        verdict_spread = _verdict(
            "ratio_spread_bounded",
            spread < spread_cap,
            f"max/median ratio spread {spread:.4g} vs cap {spread_cap:g}",
        )
    verdict_norms = _verdict(
        "spike_norm_constancy",
        norm_spread <= 1.0e-10,
        f"max relative deviation of the spike norms {norm_spread:.3g} (cap 1e-10)",
    )
    constants = {
        "q_tilde": q_tilde,
        "unit_ball_volume": unit_ball_vol,
        "spike_norm_q_tilde": spike_norm,
        "spike_norms": spike_norms,
        "denominator": denominator,
        "spike_scales": scales,
        "hit_counts": hit_counts,
        "horizon": horizon,
    }
    return _make_report(config, estimates, constants, [verdict_spread, verdict_norms], notes)


def _pair_distance_sup(coarse: np.ndarray, fine: np.ndarray, stop_radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Sup distance over shared coarse grid points up to the joint exit.

    ``coarse``: (n, K+1, d) states; ``fine``: (n, 2K+1, d) states.
    Returns (sup distances, joint exit index) per path; comparisons run
    up to and including the first coarse index at which either
    trajectory has norm >= stop_radius.
    """
    fine_at_coarse = fine[:, ::2, :]
    n, k_plus_1, _ = coarse.shape
    norm_c = np.linalg.norm(coarse, axis=2)
    norm_f = np.linalg.norm(fine_at_coarse, axis=2)
    crossed = (norm_c >= stop_radius) | (norm_f >= stop_radius)
    any_cross = crossed.any(axis=1)
    first = np.where(any_cross, crossed.argmax(axis=1), k_plus_1 - 1)
    mask = np.arange(k_plus_1)[None, :] <= first[:, None]
    dist = np.linalg.norm(coarse - fine_at_coarse, axis=2)
    return np.max(np.where(mask, dist, 0.0), axis=1), first


def pathwise_uniqueness_signature(config: ExperimentConfig, threads: int = 1) -> EstimateReport:
    """Self-convergence of one driving noise across nested step sizes.

    For each path the scheme runs at steps h, h/2, ..., h/2^(levels-1)
    with increments refined pairwise from one stream.  e(h_l) is the
    mean sup-distance between consecutive levels at shared grid points
    before the joint exit from the ball of radius n_stop - 1.  Passes
    when e is strictly decreasing with average log2 slope at least
    ``slope_min`` (a scheme that is exact gives all-zero e and passes).
    """
    if config.kind != "uniqueness":
        raise VerificationError(f"expected kind 'uniqueness', got {config.kind!r}")
    coeffs = build_family(dict(config.family))
    cfg = config.sim
    params = dict(config.params)
    levels = int(params.get("levels", 4))
    if levels < 2:
        raise VerificationError(f"levels must be >= 2, got {levels}")
    n_stop = int(params.get("n_stop", 4))
    if n_stop < 2:
        raise VerificationError(f"n_stop must be >= 2, got {n_stop}")
    slope_min = float(params.get("slope_min", 0.25))
    exclusion_cap = float(params.get("exclusion_cap", 0.01))
    d = coeffs.dim
    n_coarse = cfg.n_steps
    n_finest = n_coarse * 2 ** (levels - 1)
    stop_radius = float(n_stop - 1)
    threshold_sq = cfg.explosion_threshold**2
    chunk_size = max(4, min(256, int(3.0e6 // max(1, n_finest * d))))

    def worker(lo, hi):
        n = hi - lo
        fine = np.empty((n, n_finest, d))
        for row in range(n):
            fine[row] = brownian_increments(
                cfg.seed, lo + row, n_finest, d, cfg.step / 2 ** (levels - 1)
            )
        tables = [fine]
        for _ in range(levels - 1):
            prev = tables[-1]
            tables.append(prev[:, 0::2, :] + prev[:, 1::2, :])
        tables.reverse()

        level_states = []
        any_exploded = np.zeros(n, dtype=bool)
        for lvl in range(levels):
            dw = tables[lvl]
            n_steps = dw.shape[1]
            h = cfg.step / 2**lvl
            states = np.empty((n, n_steps + 1, d))
            states[:, 0, :] = np.asarray(config.start, dtype=float)
            current = states[:, 0, :].copy()
            alive = np.ones(n, dtype=bool)
            for k in range(n_steps):
                with np.errstate(over="ignore", invalid="ignore"):
                    proposed = em_step_batch(coeffs, current, dw[:, k], h)
                finite = np.isfinite(proposed).all(axis=1)
                norm_sq = np.einsum("ni,ni->n", proposed, proposed)
                ok = finite & (norm_sq <= threshold_sq)
                advanced = alive & ok
                current = np.where(advanced[:, None], proposed, current)
                states[:, k + 1, :] = current
                alive &= ok
            any_exploded |= ~alive
            level_states.append(states)

        sups = np.empty((n, levels - 1))
        for lvl in range(levels - 1):
            sups[:, lvl], _ = _pair_distance_sup(
                level_states[lvl], level_states[lvl + 1], stop_radius
            )
        return sups, any_exploded

    results = _run_chunked(worker, config.budget, chunk_size, threads)
    sups = np.concatenate([r[0] for r in results])
    excluded = np.concatenate([r[1] for r in results])
    n_excluded = int(np.count_nonzero(excluded))
    exclusion_fraction = n_excluded / config.budget
    included = sups[~excluded]

    steps = [cfg.step / 2**lvl for lvl in range(levels - 1)]
    estimates = []
    e_values = []
    for lvl, h in enumerate(steps):
        mean, se = _mean_stderr(included[:, lvl]) if included.size else (0.0, 0.0)
        e_values.append(mean)
        estimates.append(_estimate(f"e_level{lvl}", mean, se))

    notes = []
    verdicts = []
    exclusion_ok = exclusion_fraction <= exclusion_cap
    verdicts.append(
        _verdict(
            "exclusions_below_cap",
            exclusion_ok,
            f"{n_excluded} of {config.budget} paths excluded "
            f"(fraction {exclusion_fraction:.4g}, cap {exclusion_cap:g})",
        )
    )
    if not exclusion_ok:
        notes.append("inconclusive: too many paths excluded (explosion before horizon)")

    slope = None
    if all(e == 0.0 for e in e_values):
        verdicts.append(
            _verdict(
                "self_convergence",
                True,
                "all inter-level distances are exactly zero (scheme exact for this family)",
            )
        )
        notes.append("the scheme reproduces this family exactly at every step size")
    else:
        positive = [(lvl, e) for lvl, e in enumerate(e_values) if e > 0.0]
        decreasing = all(
            e_values[j] > e_values[j + 1] for j in range(len(e_values) - 1)
        )
        if len(positive) >= 2:
            xs = np.asarray([lvl for lvl, _ in positive], dtype=float)
            ys = np.asarray([math.log2(e) for _, e in positive])
            slope = -float(np.polyfit(xs, ys, 1)[0])
        slope_ok = slope is not None and slope >= slope_min
        verdicts.append(
            _verdict(
                "self_convergence",
                decreasing and slope_ok,
                f"e values {[f'{e:.4g}' for e in e_values]}, "
                f"log2 decay slope {slope if slope is None else round(slope, 4)} "
                f"vs required {slope_min:g}",
            )
        )
    constants = {
        "levels": levels,
        "steps": steps,
        "n_stop": n_stop,
        "exclusion_fraction": exclusion_fraction,
        "log2_slope": slope,
    }
    return _make_report(config, estimates, constants, verdicts, notes)


def _suite_fields(box, resolution) -> dict[str, GridField]:
    def gaussian(x):
        return np.exp(-np.einsum("...i,...i->...", x, x))

    def shifted(x):
        c = np.zeros(x.shape[-1])
        c[: min(3, c.size)] = [0.5, -0.3, 0.2][: min(3, c.size)]
        delta = x - c
        return np.exp(-np.einsum("...i,...i->...", delta, delta))

    def anisotropic(x):
        weights = (1.0 + np.arange(x.shape[-1])) ** 2
        return np.exp(-0.5 * np.einsum("...i,i->...", x**2, weights))

    def ball(x):
        return (np.einsum("...i,...i->...", x, x) <= 1.0).astype(float)

    def halfspace(x):
        return (x[..., 0] > 0.3).astype(float)

    def annulus(x):
        r = np.sqrt(np.einsum("...i,...i->...", x, x))
        return ((r >= 0.7) & (r <= 1.3)).astype(float)

    def cosines(x):
        out = np.cos(math.pi * x[..., 0])
        for i in range(1, x.shape[-1]):
            out = out * np.cos(math.pi * x[..., i] / (i + 1.0))
        return out

    def coordinate(x):
        return x[..., 0]

    def exp_cusp(x):
        return np.exp(-np.sqrt(np.einsum("...i,...i->...", x, x)))

    def two_bumps(x):
        c = np.zeros(x.shape[-1])
        c[0] = 0.8
        d1 = x - c
        d2 = x + c
        return np.exp(-2.0 * np.einsum("...i,...i->...", d1, d1)) + np.exp(
            -2.0 * np.einsum("...i,...i->...", d2, d2)
        )

    makers = {
        "gaussian": gaussian,
        "shifted_gaussian": shifted,
        "anisotropic_gaussian": anisotropic,
        "ball_indicator": ball,
        "halfspace_indicator": halfspace,
        "annulus_indicator": annulus,
        "cosine_product": cosines,
        "coordinate": coordinate,
        "exp_cusp": exp_cusp,
        "two_bumps": two_bumps,
    }
    return {name: sample_on_grid(fn, box, resolution) for name, fn in makers.items()}


def maximal_suite(config: ExperimentConfig, threads: int = 1) -> EstimateReport:
    """Battery of checks on the discrete maximal operator.

    Domination, sublinearity, homogeneous scaling, L^r ratio stability
    under grid refinement, and the pointwise pair bound on randomly
    sampled node pairs.  ``budget`` is the number of pairs.
    """
    if config.kind != "maximal_suite":
        raise VerificationError(f"expected kind 'maximal_suite', got {config.kind!r}")
    del threads  # grid work is sequential; kept for a uniform call shape
    params = dict(config.params)
    dim = int(params.get("dim", 3))
    half_extent = float(params.get("half_extent", 2.0))
    box = tuple((-half_extent, half_extent) for _ in range(dim))
    resolution = int(params.get("resolution", 64))
    refine_resolution = int(params.get("refine_resolution", 96))
    if refine_resolution <= resolution:
        raise VerificationError(
            f"refine_resolution must exceed resolution, got "
            f"{refine_resolution} <= {resolution}"
        )
    menu_count = int(params.get("menu_count", 16))
    r_max = float(params.get("r_max", 1.0))
    lp_orders = [float(r) for r in params.get("lp_orders", (2.0, 4.0))]
    ratio_tolerance = float(params.get("ratio_tolerance", 0.2))
    pair_fraction_min = float(params.get("pair_fraction_min", 0.99))
    seed = int(params.get("seed", 0))

    fields = _suite_fields(box, resolution)
    sample = next(iter(fields.values()))
    radii = default_radius_menu(sample, count=menu_count, r_max=r_max)

    maximal = {name: maximal_function(f, radii) for name, f in fields.items()}

    # domination: the maximal field dominates |f| on the valid region
    domination_ok = True
    domination_worst = 0.0
    for name, f in fields.items():
        mf = maximal[name]
        margins = tuple(
            (f.resolution[i] - mf.resolution[i]) // 2 for i in range(dim)
        )
        inner = np.abs(f.crop(margins).values)
        gap = float(np.min(mf.values - inner))
        domination_worst = min(domination_worst, gap)
        domination_ok &= gap >= 0.0

    # sublinearity on a fixed menu of field pairs
    pair_names = [
        ("gaussian", "ball_indicator"),
        ("shifted_gaussian", "annulus_indicator"),
        ("cosine_product", "coordinate"),
        ("exp_cusp", "two_bumps"),
        ("halfspace_indicator", "gaussian"),
        ("anisotropic_gaussian", "cosine_product"),
    ]
    sublinear_ok = True
    sublinear_worst = 0.0
    for name_a, name_b in pair_names:
        fa, fb = fields[name_a], fields[name_b]
        combined = GridField(box=fa.box, values=fa.values + fb.values)
        m_sum = maximal_function(combined, radii)
        excess = float(
            np.max(m_sum.values - (maximal[name_a].values + maximal[name_b].values))
        )
        sublinear_worst = max(sublinear_worst, excess)
        sublinear_ok &= excess <= 1.0e-10

    # positive homogeneity with a power-of-two constant is exact
    scale = 2.0
    reference = fields["gaussian"]
    scaled = GridField(box=reference.box, values=scale * reference.values)
    m_scaled = maximal_function(scaled, radii)
    scaling_gap = float(
        np.max(np.abs(m_scaled.values - scale * maximal["gaussian"].values))
    )
    scaling_ok = scaling_gap <= 1.0e-12 * scale

    # L^r ratios; the family-max per order must be stable under refinement
    fine_fields = _suite_fields(box, refine_resolution)
    ratios = {}
    family_max = {f"r{order:g}": 0.0 for order in lp_orders}
    family_max_fine = dict(family_max)
    for name, f in fields.items():
        mf = maximal[name]
        margins = tuple((f.resolution[i] - mf.resolution[i]) // 2 for i in range(dim))
        inner = f.crop(margins)
        fine = fine_fields[name]
        mf_fine = maximal_function(fine, radii)
        fine_margins = tuple(
            (fine.resolution[i] - mf_fine.resolution[i]) // 2 for i in range(dim)
        )
        inner_fine = fine.crop(fine_margins)
        for order in lp_orders:
            denom = lp_norm(inner, order)
            denom_fine = lp_norm(inner_fine, order)
            if denom == 0.0 or denom_fine == 0.0:
                continue
            coarse_ratio = lp_norm(mf, order) / denom
            fine_ratio = lp_norm(mf_fine, order) / denom_fine
            ratios[f"{name}_r{order:g}"] = coarse_ratio
            key = f"r{order:g}"
            family_max[key] = max(family_max[key], coarse_ratio)
            family_max_fine[key] = max(family_max_fine[key], fine_ratio)
    ratio_drift = {
        key: abs(family_max_fine[key] / family_max[key] - 1.0)
        for key in family_max
        if family_max[key] > 0.0
    }
    stability_ok = all(drift <= ratio_tolerance for drift in ratio_drift.values())

    # pointwise pair bound on the smooth reference field, same radius menu
    f = fields["gaussian"]
    pair_radii = radii
    spacing = f.spacing
    margins = [
        int(math.ceil(pair_radii[-1] / spacing[i] - 1.0e-12)) for i in range(dim)
    ]
    rng = Generator(Philox(key=np.uint64(seed)))
    pairs = np.stack(
        [
            rng.integers(margins[i], resolution - margins[i], size=(config.budget, 2))
            for i in range(dim)
        ],
        axis=2,
    )
    pair_report = check_pointwise_maximal_bound(f, pairs, radii=pair_radii)
    if pair_report.n_checked == 0:
        raise VerificationError("no pair landed in the valid region; enlarge the grid")
    frac, frac_se = _fraction_stderr(
        round(pair_report.fraction_ok * pair_report.n_checked), pair_report.n_checked
    )

    estimates = [_estimate("pair_bound_fraction", frac, frac_se)]
    verdicts = [
        _verdict(
            "domination",
            domination_ok,
            f"min(Mf - |f|) over battery = {domination_worst:.3g}",
        ),
        _verdict(
            "sublinearity",
            sublinear_ok,
            f"max excess of M(f+g) over Mf + Mg = {sublinear_worst:.3g}",
        ),
        _verdict(
            "scaling",
            scaling_ok,
            f"max |M(2f) - 2 Mf| = {scaling_gap:.3g}",
        ),
        _verdict(
            "lp_ratio_stability",
            stability_ok,
            f"max relative ratio drift "
            f"{max(ratio_drift.values(), default=0.0):.4g} "
            f"vs tolerance {ratio_tolerance:g}",
        ),
        _verdict(
            "pair_bound_fraction",
            frac >= pair_fraction_min,
            f"{pair_report.n_checked} pairs checked, fraction {frac:.4f} "
            f"vs required {pair_fraction_min:g}",
        ),
    ]
    constants = {
        "resolution": resolution,
        "refine_resolution": refine_resolution,
        "radius_menu": [float(r) for r in radii],
        "lp_ratios": ratios,
        "lp_ratio_family_max": family_max,
        "lp_ratio_family_max_refined": family_max_fine,
        "lp_ratio_drift": ratio_drift,
        "empirical_pair_constant": pair_report.empirical_constant,
        "pairs_skipped": pair_report.n_skipped,
    }
    notes = [
        "L^r ratios compare the maximal field and the source field over "
        "the same valid region"
    ]
    return _make_report(config, estimates, constants, verdicts, notes)


_EXPERIMENTS = {
    "nonexplosion": nonexplosion_experiment,
    "occupation_decay": occupation_decay_experiment,
    "krylov": krylov_ratio_experiment,
    "uniqueness": pathwise_uniqueness_signature,
    "maximal_suite": maximal_suite,
}


def run_experiment(config: ExperimentConfig, threads: int = 1) -> EstimateReport:
    """Dispatch on ``config.kind``."""
    if threads < 1:
        raise VerificationError(f"threads must be >= 1, got {threads}")
    return _EXPERIMENTS[config.kind](config, threads=threads)
