"""Euler-Maruyama engine with counter-addressed, coupling-friendly noise.

The scheme for dX_t = dispersion(X_t) sigma(X_t) dW_t + drift(X_t) dt is

    X_{k+1} = X_k + dispersion(X_k) * sigma(X_k) @ dW_k + drift(X_k) * h.

Noise design
------------
Every Brownian increment is addressed by (seed, path_index, step_index,
coordinate) in a Philox counter space, so paths are reproducible in any
order and across any thread schedule, and coupled legs can share one
increment stream exactly.

Increments are rounded to the dyadic grid of spacing 2^-32 (a relative
perturbation around 1e-10, far below every tolerance in play).  On that
grid floating-point addition of increments is exact as long as running
sums stay below 2^21 in magnitude, which buys two structural guarantees:

* the refinement convention "one step-h increment equals the sum of its
  two step-h/2 halves" holds exactly, independent of association order;
* additive-noise controls cancel exactly in coupled differences, and
  self-convergence distances for them are exactly zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

from .coefficients import CoefficientSet

__all__ = [
    "INCREMENT_QUANTUM",
    "SimulationError",
    "SimConfig",
    "PathSample",
    "CoupledPair",
    "TrajectoryRecord",
    "brownian_increments",
    "brownian_increments_batch",
    "refinement_increment_tables",
    "em_step_batch",
    "em_path",
    "em_coupled_pair",
    "first_exit_step",
    "occupation_time",
    "write_trajectory",
    "read_trajectory",
    "write_trajectory_csv",
]

# dyadic quantum for Brownian increments; see module docstring
INCREMENT_QUANTUM = 2.0**-32
_QUANTUM_SCALE = 2.0**32

_MAX_UINT64 = 2**64


class SimulationError(ValueError):
    """Invalid simulation parameters or a failed coefficient evaluation."""


@dataclass(frozen=True)
class SimConfig:
    """Time step, horizon, seed, and simulation guards.

    The horizon is rounded to a whole number of steps; paths advance
    ``n_steps = round(horizon/step)`` times.
    """

    step: float
    horizon: float
    seed: int
    path_count: int = 1
    explosion_threshold: float = 1.0e6
    degeneracy_thickness: float = 0.05

    def __post_init__(self) -> None:
        if not (np.isfinite(self.step) and self.step > 0.0):
            raise SimulationError(f"step must be finite and > 0, got {self.step}")
        if not (np.isfinite(self.horizon) and self.horizon >= self.step):
            raise SimulationError(
                f"horizon must be finite and >= step, got {self.horizon}"
            )
        if int(self.seed) != self.seed or not 0 <= self.seed < _MAX_UINT64:
            raise SimulationError(f"seed must be an integer in [0, 2^64), got {self.seed}")
        if int(self.path_count) != self.path_count or self.path_count < 1:
            raise SimulationError(f"path_count must be an integer >= 1, got {self.path_count}")
        if not (np.isfinite(self.explosion_threshold) and self.explosion_threshold > 0.0):
            raise SimulationError(
                f"explosion_threshold must be finite and > 0, got {self.explosion_threshold}"
            )
        if not (np.isfinite(self.degeneracy_thickness) and self.degeneracy_thickness >= 0.0):
            raise SimulationError(
                f"degeneracy_thickness must be >= 0, got {self.degeneracy_thickness}"
            )

    @property
    def n_steps(self) -> int:
        n = int(round(self.horizon / self.step))
        return max(n, 1)


def _raw_words(seed: int, path_index: int, n_words: int, first_word: int = 0) -> np.ndarray:
    """Philox output words ``first_word .. first_word+n_words`` of one path stream.

    Counter layout: (block, 0, path_index, 0) with key = seed; each block
    yields four 64-bit words, so the word index is a pure function of
    (path_index, step_index, coordinate) for any fixed per-step width.
    """
    if int(path_index) != path_index or not 0 <= path_index < _MAX_UINT64:
        raise SimulationError(
            f"path_index must be an integer in [0, 2^64), got {path_index}"
        )
    if n_words == 0:
        return np.empty(0, dtype=np.uint64)
    first_block = first_word // 4
    n_blocks = (first_word + n_words + 3) // 4 - first_block
    gen = Philox(
        key=np.uint64(seed),
        counter=np.array([first_block, 0, path_index, 0], dtype=np.uint64),
    )
    words = gen.random_raw(n_blocks * 4)
    offset = first_word - first_block * 4
    return words[offset : offset + n_words]


def _gaussian_from_words(words: np.ndarray) -> np.ndarray:
    # top 53 bits -> open-interval uniform -> normal quantile
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def _quantize(x: np.ndarray) -> np.ndarray:
    return np.round(x * _QUANTUM_SCALE) * INCREMENT_QUANTUM


def brownian_increments(
    seed: int,
    path_index: int,
    n_steps: int,
    dim: int,
    step: float,
    first_step: int = 0,
) -> np.ndarray:
    """Increments dW_k ~ Normal(0, step * Id), shape (n_steps, dim).

    Fully addressed by (seed, path_index, step_index, coordinate):
    any sub-range regenerates bit-identically via ``first_step``.
    """
    if n_steps < 0 or first_step < 0:
        raise SimulationError("n_steps and first_step must be >= 0")
    if dim < 1:
        raise SimulationError(f"dim must be >= 1, got {dim}")
    if not (np.isfinite(step) and step > 0.0):
        raise SimulationError(f"step must be finite and > 0, got {step}")
    words = _raw_words(seed, path_index, n_steps * dim, first_word=first_step * dim)
    z = _gaussian_from_words(words).reshape(n_steps, dim)
    return _quantize(z * math.sqrt(step))


def brownian_increments_batch(
    seed: int, path_indices: Sequence[int], n_steps: int, dim: int, step: float
) -> np.ndarray:
    """Stacked increments for several paths, shape (n_paths, n_steps, dim)."""
    out = np.empty((len(path_indices), n_steps, dim))
    for row, path_index in enumerate(path_indices):
        out[row] = brownian_increments(seed, int(path_index), n_steps, dim, step)
    return out


def refinement_increment_tables(
    seed: int, path_index: int, n_steps: int, dim: int, step: float, levels: int
) -> list[np.ndarray]:
    """One Brownian path sampled at ``levels`` nested step sizes.

    Returns increment arrays for steps ``step / 2**l`` for l = 0 ..
    levels-1, coarsest first.  The finest level is drawn from the
    counter stream; every coarser increment is the pairwise sum of its
    two halves, which is exact on the increment quantum grid.
    """
    if levels < 1:
        raise SimulationError(f"levels must be >= 1, got {levels}")
    refine = 2 ** (levels - 1)
    fine = brownian_increments(
        seed, path_index, n_steps * refine, dim, step / refine
    )
    tables = [fine]
    for _ in range(levels - 1):
        prev = tables[-1]
        tables.append(prev[0::2] + prev[1::2])
    tables.reverse()
    return tables


def em_step_batch(
    coeffs: CoefficientSet, states: np.ndarray, dw: np.ndarray, step: float
) -> np.ndarray:
    """One Euler-Maruyama step for a batch of states, shape (n, dim).

    Row arithmetic is independent of the batch composition, so batched
    and single-path advances agree bit for bit.
    """
    disp = np.asarray(coeffs.dispersion_scale(states), dtype=float)
    if coeffs.sigma_is_identity:
        noise = disp[..., None] * dw
    else:
        sigma = np.asarray(coeffs.sigma(states), dtype=float)
        noise = disp[..., None] * np.einsum("...ij,...j->...i", sigma, dw)
    out = states + noise
    if not coeffs.drift_is_zero:
        out = out + np.asarray(coeffs.drift(states), dtype=float) * step
    return out


@dataclass(frozen=True)
class PathSample:
    """One discrete trajectory with its driving increments.

    ``times`` has constant gap ``step``; on explosion the arrays are
    truncated at the offending state and ``exploded_step`` records its
    index.
    """

    start: np.ndarray
    times: np.ndarray
    states: np.ndarray
    brownian_increments: np.ndarray
    step: float
    seed: int
    path_index: int
    status: str
    exploded_step: Optional[int] = None
    diagnostic: str = ""

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1


def _simulate_single(
    coeffs: CoefficientSet,
    y: np.ndarray,
    cfg: SimConfig,
    path_index: int,
    increments: np.ndarray,
) -> PathSample:
    n_steps, dim = increments.shape
    states = np.empty((n_steps + 1, dim))
    states[0] = y
    status, exploded_step, diagnostic = "completed", None, ""
    length = n_steps
    threshold_sq = cfg.explosion_threshold * cfg.explosion_threshold
    x = y
    for k in range(n_steps):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                nxt = em_step_batch(coeffs, x[None, :], increments[k][None, :], cfg.step)[0]
        except Exception as exc:
            raise SimulationError(
                f"coefficient evaluation failed at state {x.tolist()} "
                f"(step {k}): {exc}"
            ) from exc
        states[k + 1] = nxt
        if not np.all(np.isfinite(nxt)):
            status, exploded_step, length = "exploded", k + 1, k + 1
            diagnostic = f"non-finite state at step {k + 1} (overflow before threshold)"
            break
        if float(nxt @ nxt) > threshold_sq:
            status, exploded_step, length = "exploded", k + 1, k + 1
            diagnostic = (
                f"norm exceeded explosion threshold {cfg.explosion_threshold} "
                f"at step {k + 1}"
            )
            break
        x = nxt
    times = np.arange(length + 1) * cfg.step
    return PathSample(
        start=y.copy(),
        times=times,
        states=states[: length + 1],
        brownian_increments=increments[:length],
        step=cfg.step,
        seed=cfg.seed,
        path_index=path_index,
        status=status,
        exploded_step=exploded_step,
        diagnostic=diagnostic,
    )


def _check_start(coeffs: CoefficientSet, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (coeffs.dim,):
        raise SimulationError(
            f"start point must have shape ({coeffs.dim},), got {y.shape}"
        )
    if not np.all(np.isfinite(y)):
        raise SimulationError(f"start point must be finite, got {y}")
    return y


def em_path(
    coeffs: CoefficientSet, y, cfg: SimConfig, path_index: int = 0
) -> PathSample:
    """Simulate one path; increments come from the counter stream of
    (cfg.seed, path_index)."""
    y = _check_start(coeffs, y)
    increments = brownian_increments(
        cfg.seed, path_index, cfg.n_steps, coeffs.dim, cfg.step
    )
    return _simulate_single(coeffs, y, cfg, path_index, increments)


@dataclass(frozen=True)
class CoupledPair:
    """Two paths driven by one shared increment stream.

    ``difference`` is the distance process Z_k = X^1_k - X^2_k over the
    common prefix of the two legs (legs may stop at different explosion
    steps; the difference is recorded up to the shorter one).
    """

    first: PathSample
    second: PathSample
    difference: np.ndarray

    def joint_first_exit_step(self, n: int) -> Optional[int]:
        """First step at which either leg leaves the ball of radius n-1."""
        exits = [
            step
            for step in (first_exit_step(self.first, n), first_exit_step(self.second, n))
            if step is not None
        ]
        return min(exits) if exits else None


def em_coupled_pair(
    coeffs: CoefficientSet, y1, y2, cfg: SimConfig, path_index: int = 0
) -> CoupledPair:
    """Simulate two legs from y1, y2 sharing bit-identical increments."""
    y1 = _check_start(coeffs, y1)
    y2 = _check_start(coeffs, y2)
    increments = brownian_increments(
        cfg.seed, path_index, cfg.n_steps, coeffs.dim, cfg.step
    )
    first = _simulate_single(coeffs, y1, cfg, path_index, increments)
    second = _simulate_single(coeffs, y2, cfg, path_index, increments)
    common = min(len(first.states), len(second.states))
    difference = first.states[:common] - second.states[:common]
    return CoupledPair(first=first, second=second, difference=difference)


def first_exit_step(path: PathSample, n: int) -> Optional[int]:
    """Smallest k with ||X_k|| >= n-1, or None if the path never exits.

    Mirrors the localization stopping time: the first entry into the
    complement of the ball of radius n-1.
    """
    if int(n) != n or n < 2:
        raise SimulationError(f"n must be an integer >= 2, got {n}")
    norms_sq = np.einsum("ki,ki->k", path.states, path.states)
    hits = np.nonzero(norms_sq >= float(n - 1) ** 2)[0]
    return int(hits[0]) if hits.size else None


def occupation_time(path: PathSample, coeffs: CoefficientSet, eps: float) -> float:
    """Discrete thickened occupation time of the near-degenerate region.

    Left-endpoint rule: ``step * #{k < n_steps : dispersion(X_k) <= eps}``.
    With eps = 0 this counts exact degeneracy hits.  For exploded paths
    only executed steps contribute.
    """
    if not (np.isfinite(eps) and eps >= 0.0):
        raise SimulationError(f"eps must be finite and >= 0, got {eps}")
    if path.n_steps == 0:
        return 0.0
    disp = np.asarray(coeffs.dispersion_scale(path.states[:-1]), dtype=float)
    return float(path.step * np.count_nonzero(disp <= eps))


@dataclass(frozen=True)
class TrajectoryRecord:
    """Header and states recovered from the binary trajectory format."""

    dim: int
    step: float
    horizon: float
    seed: int
    path_index: int
    states: np.ndarray


def write_trajectory(path: PathSample, file_path) -> None:
    """Binary layout: d, h, T, seed, path_index (64-bit LE), then states."""
    horizon = float(path.times[-1])
    with open(file_path, "wb") as fh:
        fh.write(np.asarray([path.dim], dtype="<i8").tobytes())
        fh.write(np.asarray([path.step, horizon], dtype="<f8").tobytes())
        fh.write(np.asarray([path.seed], dtype="<u8").tobytes())
        fh.write(np.asarray([path.path_index], dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(path.states, dtype="<f8").tobytes())


def read_trajectory(file_path) -> TrajectoryRecord:
    with open(file_path, "rb") as fh:
        header = fh.read(40)
        if len(header) != 40:
            raise SimulationError("corrupt trajectory file: truncated header")
        dim = int(np.frombuffer(header[:8], dtype="<i8")[0])
        if dim < 1:
            raise SimulationError(f"corrupt trajectory file: dim={dim}")
        step, horizon = np.frombuffer(header[8:24], dtype="<f8")
        seed = int(np.frombuffer(header[24:32], dtype="<u8")[0])
        path_index = int(np.frombuffer(header[32:40], dtype="<i8")[0])
        raw = fh.read()
        if len(raw) % (8 * dim) != 0:
            raise SimulationError("corrupt trajectory file: truncated payload")
        states = np.frombuffer(raw, dtype="<f8").reshape(-1, dim)
    return TrajectoryRecord(
        dim=dim,
        step=float(step),
        horizon=float(horizon),
        seed=seed,
        path_index=path_index,
        states=states,
    )


def write_trajectory_csv(path: PathSample, file_path) -> None:
    """One row per recorded state: time then coordinates."""
    with open(file_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(path.dim)])
        for t, state in zip(path.times, path.states):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in state])
