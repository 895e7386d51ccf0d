"""Discrete maximal operator, mollification, and cutoff tools on box grids.

Fields live on regular grids over a box (endpoints included).  The
central object is :class:`GridField`; matrix-valued data is represented
as a collection of scalar fields indexed by matrix entry.

Discretization conventions, fixed here and surfaced in reports:

* The maximal operator's sup over all radii is replaced by a finite
  log-spaced radius menu; the discrete sup is a lower bound of the true
  sup, and the pointwise value of |f| itself participates in the max
  (the vanishing-radius limit), so domination holds by construction.
* Nodes whose largest menu ball leaves the box are invalid; outputs are
  restricted to the valid interior instead of renormalizing averages.
* Gradients use central differences (one-sided at the boundary).
* The cutoff profile is the quintic smoothstep of the radial overshoot,
  giving exact endpoint values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.fft
import scipy.ndimage

__all__ = [
    "GridError",
    "GridField",
    "Mollifier",
    "MaximalPairReport",
    "sample_on_grid",
    "default_radius_menu",
    "maximal_function",
    "gradient_norm_field",
    "check_pointwise_maximal_bound",
    "lp_norm",
    "mollify",
    "cutoff_extend",
    "write_gridfield",
    "read_gridfield",
    "write_gridfield_csv",
]


class GridError(ValueError):
    """Invalid grid geometry or operation parameters."""


@dataclass(frozen=True)
class GridField:
    """A scalar field sampled on a regular box grid, endpoints included.

    Parameters
    ----------
    box : sequence of (lo, hi) pairs, one per axis.
    values : ndarray with one axis per box axis; all entries finite.
    """

    box: tuple[tuple[float, float], ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != len(box):
            raise GridError(
                f"values have {values.ndim} axes but the box has {len(box)}"
            )
        for axis, ((lo, hi), res) in enumerate(zip(box, values.shape)):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise GridError(f"axis {axis}: box bounds must satisfy lo < hi")
            if res < 2:
                raise GridError(f"axis {axis}: resolution must be >= 2, got {res}")
        if not np.all(np.isfinite(values)):
            raise GridError("values must all be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def resolution(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(
            (hi - lo) / (res - 1) for (lo, hi), res in zip(self.box, self.resolution)
        )

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def axis_coords(self) -> tuple[np.ndarray, ...]:
        return tuple(
            np.linspace(lo, hi, res) for (lo, hi), res in zip(self.box, self.resolution)
        )

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (*resolution, dim)."""
        mesh = np.meshgrid(*self.axis_coords, indexing="ij")
        return np.stack(mesh, axis=-1)

    def crop(self, margins) -> "GridField":
        """Drop ``margins[axis]`` nodes from both ends of each axis."""
        margins = self._as_margins(margins)
        slices = []
        for axis, (m, res) in enumerate(zip(margins, self.resolution)):
            if m < 0:
                raise GridError(f"axis {axis}: margin must be >= 0")
            if res - 2 * m < 1:
                raise GridError(
                    f"axis {axis}: margin {m} leaves no nodes (resolution {res})"
                )
            slices.append(slice(m, res - m))
        new_box = tuple(
            (coords[m], coords[res - 1 - m])
            for coords, m, res in zip(self.axis_coords, margins, self.resolution)
        )
        return GridField(box=new_box, values=self.values[tuple(slices)])

    def _as_margins(self, margins) -> tuple[int, ...]:
        if np.isscalar(margins):
            return (int(margins),) * self.dim
        margins = tuple(int(m) for m in margins)
        if len(margins) != self.dim:
            raise GridError(f"need {self.dim} margins, got {len(margins)}")
        return margins


def sample_on_grid(fn: Callable[[np.ndarray], np.ndarray], box, resolution) -> GridField:
    """Evaluate a vectorized callable of (..., dim) points on a new grid."""
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if np.isscalar(resolution):
        resolution = (int(resolution),) * len(box)
    probe = GridField(box=box, values=np.zeros(tuple(resolution)))
    values = np.asarray(fn(probe.nodes()), dtype=float)
    if values.shape != probe.resolution:
        raise GridError(
            f"sampled values have shape {values.shape}, expected {probe.resolution}"
        )
    return GridField(box=box, values=values)


def default_radius_menu(
    f: GridField, count: int = 24, r_max: Optional[float] = None
) -> np.ndarray:
    """Log-spaced radius menu from two grid cells up to half the box extent.

    ``r_max`` overrides the upper end; note that the valid interior of
    ``maximal_function`` shrinks by the largest radius, so a smaller cap
    keeps more usable nodes.
    """
    r_min = 2.0 * max(f.spacing)
    if r_max is None:
        r_max = 0.5 * min(hi - lo for lo, hi in f.box)
    if not r_max > r_min:
        raise GridError(
            f"r_max={r_max} must exceed two grid cells ({r_min}); refine the grid"
        )
    if count < 1:
        raise GridError("count must be >= 1")
    if count == 1:
        return np.asarray([r_max])
    return np.geomspace(r_min, r_max, count)


def _ball_margins(f: GridField, radius: float) -> tuple[int, ...]:
    # nodes closer than `radius` to the box wall cannot carry a full ball
    return tuple(int(math.ceil(radius / sp - 1e-12)) for sp in f.spacing)


def _ball_stencil(spacing: Sequence[float], radius: float) -> np.ndarray:
    extents = [int(math.floor(radius / sp + 1e-12)) for sp in spacing]
    grids = np.meshgrid(
        *[np.arange(-e, e + 1) * sp for e, sp in zip(extents, spacing)], indexing="ij"
    )
    dist_sq = sum(g**2 for g in grids)
    return (dist_sq <= radius * radius * (1.0 + 1e-12)).astype(float)


def _fft_convolve_same(values: np.ndarray, kernels: Iterable[np.ndarray]) -> list:
    """Linear convolution of one field with several odd-shaped kernels.

    The field transform is computed once; each kernel is padded to a
    common fast shape.  Returns 'same'-windowed results.
    """
    kernels = list(kernels)
    res = values.shape
    max_k = tuple(max(k.shape[axis] for k in kernels) for axis in range(values.ndim))
    padded = tuple(
        scipy.fft.next_fast_len(r + m - 1) for r, m in zip(res, max_k)
    )
    field_hat = scipy.fft.rfftn(values, padded)
    out = []
    for kernel in kernels:
        conv = scipy.fft.irfftn(field_hat * scipy.fft.rfftn(kernel, padded), padded)
        start = tuple((m - 1) // 2 for m in kernel.shape)
        window = tuple(slice(s, s + r) for s, r in zip(start, res))
        out.append(conv[window])
    return out


def maximal_function(f: GridField, radii) -> GridField:
    """Discrete maximal function: max over menu radii of ball averages of |f|.

    The average over the vanishing-radius limit, |f(x)| itself, joins
    the max, so the result dominates |f| pointwise by construction.  The
    output grid is cropped to nodes whose largest menu ball stays inside
    the box (boundary truncation policy).

    Raises
    ------
    GridError
        Empty menu, non-ascending or non-positive radii, a radius
        smaller than one grid cell, a radius beyond half the box extent,
        or a menu whose largest radius leaves no valid interior node.
    """
    radii = np.asarray(list(radii), dtype=float)
    if radii.size == 0:
        raise GridError("radius menu is empty")
    if not np.all(radii > 0.0):
        raise GridError("radii must be positive")
    if not np.all(np.diff(radii) > 0.0):
        raise GridError("radii must be strictly ascending")
    cell = max(f.spacing)
    if radii[0] < cell:
        raise GridError(
            f"radius {radii[0]} is smaller than one grid cell ({cell}); "
            "the ball average is undefined"
        )
    half_extent = 0.5 * min(hi - lo for lo, hi in f.box)
    if radii[-1] > half_extent * (1.0 + 1e-12):
        raise GridError(
            f"radius {radii[-1]} exceeds half the box extent ({half_extent})"
        )

    margins = _ball_margins(f, float(radii[-1]))
    for axis, (m, res) in enumerate(zip(margins, f.resolution)):
        if res - 2 * m < 1:
            raise GridError(
                f"axis {axis}: largest radius leaves no valid interior nodes; "
                "shrink the menu or refine the grid"
            )
    abs_values = np.abs(f.values)
    stencils = [_ball_stencil(f.spacing, float(r)) for r in radii]
    sums = _fft_convolve_same(abs_values, stencils)
    window = tuple(slice(m, res - m) for m, res in zip(margins, f.resolution))
    best = abs_values[window].copy()
    for stencil, ball_sum in zip(stencils, sums):
        np.maximum(best, ball_sum[window] / stencil.sum(), out=best)
    cropped = f.crop(margins)
    return GridField(box=cropped.box, values=best)


def gradient_norm_field(f: GridField) -> GridField:
    """Euclidean norm of the central-difference gradient of f."""
    grads = np.gradient(f.values, *f.axis_coords, edge_order=1)
    if f.dim == 1:
        grads = [grads]
    norm = np.sqrt(sum(g**2 for g in grads))
    return GridField(box=f.box, values=norm)


@dataclass(frozen=True)
class MaximalPairReport:
    """Outcome of the two-point maximal gradient bound check."""

    n_pairs: int
    n_checked: int
    n_skipped: int
    fraction_ok: float
    constant: float
    empirical_constant: float
    worst_pair: Optional[tuple[tuple[int, ...], tuple[int, ...]]]
    worst_lhs: float
    worst_rhs: float


def check_pointwise_maximal_bound(
    f: GridField,
    pairs,
    constant: Optional[float] = None,
    radii=None,
) -> MaximalPairReport:
    """Check |f(x) - f(y)| <= constant * ||x-y|| * (Mg(x) + Mg(y)) on node pairs.

    Here g = ||grad f|| by central differences and Mg its discrete
    maximal function.  The default constant is 2^dim.  Pairs touching
    nodes outside the valid (boundary-truncated) interior of Mg are
    skipped and counted.  The report includes the smallest empirical
    constant that would make every checked pair pass.

    Parameters
    ----------
    pairs : integer array of shape (n, 2, dim)
        Node multi-indices into the full grid of ``f``.
    radii : optional radius menu for Mg; defaults to a 24-radius menu
        capped at a quarter of the box extent so a usable interior
        remains.
    """
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.ndim != 3 or pairs.shape[1:] != (2, f.dim):
        raise GridError(f"pairs must have shape (n, 2, {f.dim}), got {pairs.shape}")
    if constant is None:
        constant = float(2**f.dim)
    if radii is None:
        radii = default_radius_menu(
            f, r_max=0.25 * min(hi - lo for lo, hi in f.box)
        )

    grad_norm = gradient_norm_field(f)
    mg = maximal_function(grad_norm, radii)
    margins = _ball_margins(f, float(np.asarray(radii)[-1]))

    lower = np.asarray(margins, dtype=np.int64)
    upper = np.asarray(f.resolution, dtype=np.int64) - 1 - lower
    inside = np.all((pairs >= lower) & (pairs <= upper), axis=(1, 2))
    n_pairs = len(pairs)
    n_skipped = int(n_pairs - inside.sum())
    checked = pairs[inside]
    if len(checked) == 0:
        return MaximalPairReport(
            n_pairs=n_pairs,
            n_checked=0,
            n_skipped=n_skipped,
            fraction_ok=0.0,
            constant=constant,
            empirical_constant=math.nan,
            worst_pair=None,
            worst_lhs=math.nan,
            worst_rhs=math.nan,
        )

    coords = [np.asarray(c) for c in f.axis_coords]
    xy = np.stack(
        [coords[axis][checked[..., axis]] for axis in range(f.dim)], axis=-1
    )
    dist = np.sqrt(np.sum((xy[:, 0, :] - xy[:, 1, :]) ** 2, axis=-1))

    fx = f.values[tuple(checked[:, 0, axis] for axis in range(f.dim))]
    fy = f.values[tuple(checked[:, 1, axis] for axis in range(f.dim))]
    lhs = np.abs(fx - fy)

    shifted = checked - lower
    mg_x = mg.values[tuple(shifted[:, 0, axis] for axis in range(f.dim))]
    mg_y = mg.values[tuple(shifted[:, 1, axis] for axis in range(f.dim))]
    scale = dist * (mg_x + mg_y)
    rhs = constant * scale

    ok = lhs <= rhs
    # coincident nodes or an identically flat field: zero <= zero passes
    degenerate = scale == 0.0
    ok[degenerate] = lhs[degenerate] == 0.0

    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(scale > 0.0, lhs / scale, np.where(lhs > 0.0, np.inf, 0.0))
    worst = int(np.argmax(ratios))
    return MaximalPairReport(
        n_pairs=n_pairs,
        n_checked=int(len(checked)),
        n_skipped=n_skipped,
        fraction_ok=float(np.mean(ok)),
        constant=constant,
        empirical_constant=float(np.max(ratios)),
        worst_pair=(
            tuple(int(i) for i in checked[worst, 0]),
            tuple(int(i) for i in checked[worst, 1]),
        ),
        worst_lhs=float(lhs[worst]),
        worst_rhs=float(rhs[worst]),
    )


def lp_norm(f: GridField, p: float) -> float:
    """Riemann-sum L^p norm: (sum |f(node)|^p * cellvolume)^(1/p)."""
    if not p >= 1.0:
        raise GridError(f"p must be >= 1, got {p}")
    total = float(np.sum(np.abs(f.values) ** p) * f.cell_volume)
    return total ** (1.0 / p)


@dataclass(frozen=True)
class Mollifier:
    """Discretized standard bump kernel with support in the 1/m ball.

    ``weights`` sum to 1 (convolution weights); the continuous profile
    values are ``weights / cell_volume`` so the discrete integral is 1.
    """

    dim: int
    m: int
    spacing: tuple[float, ...]
    weights: np.ndarray

    @classmethod
    def for_grid(cls, f: GridField, m: int) -> "Mollifier":
        if int(m) != m or m < 1:
            raise GridError(f"mollifier index m must be an integer >= 1, got {m}")
        support = 1.0 / m
        if support < 2.0 * max(f.spacing):
            raise GridError(
                f"mollifier support 1/{m} spans less than two grid cells; "
                "use a finer grid or a smaller m"
            )
        extents = [int(math.ceil(support / sp)) - 1 for sp in f.spacing]
        grids = np.meshgrid(
            *[np.arange(-e, e + 1) * sp for e, sp in zip(extents, f.spacing)],
            indexing="ij",
        )
        scaled_sq = sum(g**2 for g in grids) * (m * m)
        profile = np.zeros_like(scaled_sq)
        inside = scaled_sq < 1.0
        profile[inside] = np.exp(-1.0 / (1.0 - scaled_sq[inside]))
        total = profile.sum()
        if total <= 0.0:
            raise GridError("mollifier kernel has no interior nodes; refine the grid")
        weights = profile / total
        weights.setflags(write=False)
        return cls(dim=f.dim, m=int(m), spacing=f.spacing, weights=weights)

    @property
    def support_radius(self) -> float:
        return 1.0 / self.m

    def discrete_integral(self) -> float:
        """Integral of the profile via the Riemann sum; 1 by construction."""
        return float(self.weights.sum())


def mollify(f: GridField, m: int) -> GridField:
    """Convolve with the index-m mollifier; restrict to the valid interior.

    The result at node x is the weighted average of f over the grid ball
    of radius < 1/m around x; output nodes are those whose full
    1/m-neighborhood lies inside the box.  Constants are preserved and
    weights are nonnegative, so mass cannot increase for f >= 0.
    """
    kernel = Mollifier.for_grid(f, m)
    smoothed = scipy.ndimage.convolve(f.values, kernel.weights, mode="constant")
    margins = tuple(
        int(math.ceil(kernel.support_radius / sp - 1e-12)) for sp in f.spacing
    )
    for axis, (mg, res) in enumerate(zip(margins, f.resolution)):
        if res - 2 * mg < 1:
            raise GridError(
                f"axis {axis}: mollifier support leaves no valid nodes; refine the grid"
            )
    window = tuple(slice(mg, res - mg) for mg, res in zip(margins, f.resolution))
    cropped = f.crop(margins)
    return GridField(box=cropped.box, values=smoothed[window])


def cutoff_extend(f: GridField, n: int) -> GridField:
    """Multiply by the radial cutoff: 1 on B_n, 0 outside B_{n+1}.

    The profile is the quintic smoothstep of the radial overshoot
    s = ||x|| - n, so values on B_n are reproduced exactly and the
    output vanishes exactly outside B_{n+1}.  The grid is unchanged.

    Raises
    ------
    GridError
        If the box does not contain B_{n+1} (message states the
        required per-axis bounds).
    """
    if int(n) != n or n < 1:
        raise GridError(f"cutoff index n must be an integer >= 1, got {n}")
    need = float(n + 1)
    for axis, (lo, hi) in enumerate(f.box):
        if lo > -need or hi < need:
            raise GridError(
                f"axis {axis}: box [{lo}, {hi}] does not contain the ball of "
                f"radius {need}; need bounds [-{need}, {need}] or wider"
            )
    radius = np.sqrt(np.einsum("...i,...i->...", f.nodes(), f.nodes()))
    s = np.clip(radius - n, 0.0, 1.0)
    chi = 1.0 - (s * s * s) * (10.0 + s * (-15.0 + 6.0 * s))
    return GridField(box=f.box, values=f.values * chi)


_HEADER_DTYPE = "<i8"
_PAYLOAD_DTYPE = "<f8"


def write_gridfield(f: GridField, path) -> None:
    """Flat binary layout: dim, box, resolution (little-endian 64-bit), payload."""
    with open(path, "wb") as fh:
        fh.write(np.asarray([f.dim], dtype=_HEADER_DTYPE).tobytes())
        fh.write(np.asarray(f.box, dtype=_PAYLOAD_DTYPE).tobytes())
        fh.write(np.asarray(f.resolution, dtype=_HEADER_DTYPE).tobytes())
        fh.write(np.ascontiguousarray(f.values, dtype=_PAYLOAD_DTYPE).tobytes())


def read_gridfield(path) -> GridField:
    with open(path, "rb") as fh:
        dim = int(np.frombuffer(fh.read(8), dtype=_HEADER_DTYPE)[0])
        if dim < 1:
            raise GridError(f"corrupt field file: dim={dim}")
        box = np.frombuffer(fh.read(16 * dim), dtype=_PAYLOAD_DTYPE).reshape(dim, 2)
        resolution = np.frombuffer(fh.read(8 * dim), dtype=_HEADER_DTYPE)
        count = int(np.prod(resolution))
        payload = np.frombuffer(fh.read(8 * count), dtype=_PAYLOAD_DTYPE)
        if payload.size != count:
            raise GridError("corrupt field file: truncated payload")
        values = payload.reshape(tuple(int(r) for r in resolution))
    return GridField(box=tuple(map(tuple, box)), values=values)


def write_gridfield_csv(f: GridField, path) -> None:
    """One row per node: coordinates then value.  Intended for small fields."""
    nodes = f.nodes().reshape(-1, f.dim)
    flat = f.values.reshape(-1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(f.dim)] + ["value"])
        for point, value in zip(nodes, flat):
            writer.writerow([repr(float(c)) for c in point] + [repr(float(value))])
