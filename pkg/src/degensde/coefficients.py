"""Coefficient families for degenerate diffusions and hypothesis checkers.

A :class:`CoefficientSet` bundles the maps that define one SDE instance

    dX_t = dispersion_scale(X_t) * sigma(X_t) dW_t + drift(X_t) dt.

All coefficient callables are vectorized: given an array of shape
``(..., dim)`` they return ``(...,)`` for the dispersion scale,
``(..., dim, dim)`` for sigma and the diffusion matrix, ``(..., dim)``
for the drift.

The hypothesis checkers operate by finite sampling:

* ``check_h2`` samples the radial growth inequality
  -<(1/psi) A x, x>/||x||^2 + trace((1/psi) A)/2 + <G, x>
  <= M ||x||^2 (ln||x|| + 1) outside a ball, and either returns the
  smallest feasible constant over the samples or a violation witness.
* ``check_h3_window`` samples psi = dispersion_scale^(-2) on a closed
  ball and reports the sampled infimum/supremum.
* ``select_exponents`` performs the admissible-exponent arithmetic for
  a degeneracy exponent alpha in [0, d/(2d+2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "CoefficientError",
    "EvaluationError",
    "CoefficientSet",
    "PowerLawFamily",
    "BumpLatticeFamily",
    "ConstantFamily",
    "CubicDriftFamily",
    "EvalRecord",
    "ExponentSelection",
    "RadialSamplePlan",
    "H2Report",
    "H3Report",
    "admissible_alpha_bound",
    "select_exponents",
    "check_h2",
    "check_h3_window",
    "eval_all",
    "build_family",
    "sphere_directions",
    "DEFAULT_RATIO_CAP",
]

# Feasibility cap for the growth-ratio check.  Power-law families stay below
# d/2 - 1 <= 1.5 for d <= 5 while the cubic-drift control already exceeds 30
# at radius 10, so 20 separates the two regimes with wide margin.
DEFAULT_RATIO_CAP = 20.0


class CoefficientError(ValueError):
    """Invalid coefficient-family parameters or checker preconditions."""


class EvaluationError(RuntimeError):
    """A coefficient evaluation returned a non-finite or inconsistent value."""


def _norm(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...i,...i->...", x, x))


@dataclass(frozen=True)
class CoefficientSet:
    """Immutable bundle of the coefficient maps of one SDE instance.

    Parameters
    ----------
    dim : int
        State dimension, must be >= 3.
    dispersion_scale : callable
        Scalar factor multiplying the noise matrix; >= 0 everywhere.
    sigma : callable
        Noise matrix field.
    diffusion_matrix : callable, optional
        The map sigma * sigma^T; derived from ``sigma`` when omitted.
    drift : callable
        Drift vector field.
    degeneracy_indicator : callable, optional
        Indicator of the set where the dispersion scale vanishes;
        defaults to exact zero test on ``dispersion_scale``.
    start_region : callable, optional
        Predicate for the open set of admissible start points; defaults
        to all of space.
    """

    dim: int
    dispersion_scale: Callable[[np.ndarray], np.ndarray]
    sigma: Callable[[np.ndarray], np.ndarray]
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion_matrix: Optional[Callable[[np.ndarray], np.ndarray]] = None
    degeneracy_indicator: Optional[Callable[[np.ndarray], np.ndarray]] = None
    start_region: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "custom"
    # fast-path hints used by the simulation engine
    sigma_is_identity: bool = False
    drift_is_zero: bool = False

    def __post_init__(self) -> None:
        if int(self.dim) != self.dim or self.dim < 3:
            raise CoefficientError(f"dim must be an integer >= 3, got {self.dim}")
        if self.diffusion_matrix is None:
            sig = self.sigma
            object.__setattr__(
                self,
                "diffusion_matrix",
                lambda x: np.einsum("...ij,...kj->...ik", sig(x), sig(x)),
            )
        if self.degeneracy_indicator is None:
            disp = self.dispersion_scale
            object.__setattr__(self, "degeneracy_indicator", lambda x: disp(x) == 0.0)
        if self.start_region is None:
            object.__setattr__(
                self,
                "start_region",
                lambda x: np.ones(np.asarray(x, dtype=float).shape[:-1], dtype=bool),
            )


def _identity_matrix_field(dim: int) -> Callable[[np.ndarray], np.ndarray]:
    eye = np.eye(dim)

    def matrix(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(eye, x.shape[:-1] + (dim, dim))

    return matrix


def _zero_drift(dim: int) -> Callable[[np.ndarray], np.ndarray]:
    def drift(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (dim,))

    return drift


def _resolve_drift(dim: int, spec) -> tuple[Callable, bool, str]:
    """Turn a drift spec (None, constant vector, or callable) into a callable.

    Returns (callable, is_zero, label).
    """
    if spec is None or (isinstance(spec, str) and spec == "zero"):
        return _zero_drift(dim), True, "zero"
    if callable(spec):
        return spec, False, "callable"
    vec = np.asarray(spec, dtype=float)
    if vec.shape != (dim,):
        raise CoefficientError(
            f"constant drift must have shape ({dim},), got {vec.shape}"
        )
    if not np.all(np.isfinite(vec)):
        raise CoefficientError("constant drift must be finite")
    if np.all(vec == 0.0):
        return _zero_drift(dim), True, "zero"

    def drift(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(vec, x.shape[:-1] + (dim,))

    return drift, False, "constant"


@dataclass(frozen=True)
class PowerLawFamily:
    """Radial power-law dispersion ``||x||^(alpha/2)`` with a declared origin value.

    dispersion_scale(x) = ||x||^(alpha/2) for x != 0 and ``origin_value``
    at x = 0; sigma and the diffusion matrix are the identity.  With
    ``origin_value`` = 0 the origin is the single degeneracy point.
    """

    dim: int
    alpha: float
    origin_value: float = 0.0
    drift: object = None

    def __post_init__(self) -> None:
        if int(self.dim) != self.dim or self.dim < 3:
            raise CoefficientError(f"dim must be an integer >= 3, got {self.dim}")
        if not 0.0 <= self.alpha < 1.0:
            raise CoefficientError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not (np.isfinite(self.origin_value) and self.origin_value >= 0.0):
            raise CoefficientError(
                f"origin_value must be finite and >= 0, got {self.origin_value}"
            )

    def build(self) -> CoefficientSet:
        dim, half, gamma = self.dim, self.alpha / 2.0, float(self.origin_value)

        def dispersion(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            r = _norm(x)
            return np.where(r > 0.0, r**half, gamma)

        def indicator(x: np.ndarray) -> np.ndarray:
            return dispersion(x) == 0.0

        # psi = dispersion^(-2) is locally bounded away from the origin only,
        # except in the constant nondegenerate limit alpha = 0, gamma > 0.
        if self.alpha == 0.0 and gamma > 0.0:
            start = None
        else:

            def start(x: np.ndarray) -> np.ndarray:
                x = np.asarray(x, dtype=float)
                return _norm(x) > 0.0

        drift_fn, drift_zero, _ = _resolve_drift(dim, self.drift)
        return CoefficientSet(
            dim=dim,
            dispersion_scale=dispersion,
            sigma=_identity_matrix_field(dim),
            diffusion_matrix=_identity_matrix_field(dim),
            drift=drift_fn,
            degeneracy_indicator=indicator,
            start_region=start,
            name=f"power_law(d={dim}, alpha={self.alpha}, origin_value={gamma})",
            sigma_is_identity=True,
            drift_is_zero=drift_zero,
        )


@dataclass(frozen=True)
class BumpLatticeFamily:
    """Dispersion with power-law bumps at the lattice centers 2i*e1.

    Inside each unit ball B_1(2i*e1) the dispersion scale equals
    ``||x - 2i*e1||^(alpha/2)``; outside all balls it is 1.  The variant
    selects the value at the centers themselves:

    * ``"zeros"``   -- dispersion 0 at every materialized center (the
      degeneracy set is exactly the center lattice);
    * ``"weights"`` -- strictly positive per-center values, no degeneracy.

    The infinite lattice is truncated to ``lattice_count`` centers;
    centers beyond the simulation box are unreachable at desk scale.
    """

    dim: int
    alpha: float
    lattice_count: int
    variant: str = "zeros"
    weights: Optional[Sequence[float]] = None

    def __post_init__(self) -> None:
        if int(self.dim) != self.dim or self.dim < 3:
            raise CoefficientError(f"dim must be an integer >= 3, got {self.dim}")
        if not 0.0 <= self.alpha < 1.0:
            raise CoefficientError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.lattice_count < 1:
            raise CoefficientError("lattice_count must be >= 1")
        if self.variant not in ("zeros", "weights"):
            raise CoefficientError(
                f"variant must be 'zeros' or 'weights', got {self.variant!r}"
            )
        if self.variant == "weights":
            if self.weights is None:
                raise CoefficientError("variant 'weights' requires weights")
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.lattice_count,):
                raise CoefficientError(
                    f"weights must have length {self.lattice_count}, got {w.shape}"
                )
            if not np.all(np.isfinite(w) & (w > 0.0)):
                raise CoefficientError("weights must be finite and > 0")
        elif self.weights is not None:
            raise CoefficientError("variant 'zeros' takes no weights")

    def centers(self) -> np.ndarray:
        """The materialized centers 2i*e1, shape (lattice_count, dim)."""
        c = np.zeros((self.lattice_count, self.dim))
        c[:, 0] = 2.0 * np.arange(self.lattice_count)
        return c

    def build(self) -> CoefficientSet:
        dim, half, count = self.dim, self.alpha / 2.0, self.lattice_count
        center_values = (
            np.zeros(count)
            if self.variant == "zeros"
            else np.asarray(self.weights, dtype=float)
        )

        def nearest_center(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            x = np.asarray(x, dtype=float)
            idx = np.clip(np.rint(x[..., 0] / 2.0), 0, count - 1).astype(np.int64)
            offset = x.copy()
            offset[..., 0] -= 2.0 * idx
            return idx, _norm(offset)

        def dispersion(x: np.ndarray) -> np.ndarray:
            idx, dist = nearest_center(x)
            # the balls around distinct centers are disjoint, so the nearest
            # center decides the value
            inside = dist < 1.0
            out = np.ones_like(dist)
            out[inside] = dist[inside] ** half
            at_center = dist == 0.0
            out[at_center] = center_values[idx[at_center]]
            return out

        def indicator(x: np.ndarray) -> np.ndarray:
            return dispersion(x) == 0.0

        def start(x: np.ndarray) -> np.ndarray:
            _, dist = nearest_center(x)
            return dist > 0.0

        return CoefficientSet(
            dim=dim,
            dispersion_scale=dispersion,
            sigma=_identity_matrix_field(dim),
            diffusion_matrix=_identity_matrix_field(dim),
            drift=_zero_drift(dim),
            degeneracy_indicator=indicator,
            start_region=start,
            name=(
                f"bump_lattice(d={dim}, alpha={self.alpha}, "
                f"count={count}, variant={self.variant})"
            ),
            sigma_is_identity=True,
            drift_is_zero=True,
        )


@dataclass(frozen=True)
class ConstantFamily:
    """Constant dispersion scale with identity noise matrix.

    ``value`` = 1 with zero drift is Brownian motion (the additive-noise
    control); ``value`` = 0 freezes paths entirely (the zero-coefficient
    control).
    """

    dim: int
    value: float = 1.0
    drift: object = None

    def __post_init__(self) -> None:
        if int(self.dim) != self.dim or self.dim < 3:
            raise CoefficientError(f"dim must be an integer >= 3, got {self.dim}")
        if not (np.isfinite(self.value) and self.value >= 0.0):
            raise CoefficientError(f"value must be finite and >= 0, got {self.value}")

    def build(self) -> CoefficientSet:
        dim, value = self.dim, float(self.value)

        def dispersion(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            return np.full(x.shape[:-1], value)

        def start(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            return np.full(x.shape[:-1], value > 0.0, dtype=bool)

        drift_fn, drift_zero, _ = _resolve_drift(dim, self.drift)
        return CoefficientSet(
            dim=dim,
            dispersion_scale=dispersion,
            sigma=_identity_matrix_field(dim),
            diffusion_matrix=_identity_matrix_field(dim),
            drift=drift_fn,
            degeneracy_indicator=lambda x: dispersion(x) == 0.0,
            start_region=start,
            name=f"constant(d={dim}, value={value})",
            sigma_is_identity=True,
            drift_is_zero=drift_zero,
        )


@dataclass(frozen=True)
class CubicDriftFamily:
    """Explosion control: unit dispersion with the cubic drift x * ||x||^2.

    The drift violates the radial growth condition (H2) and the
    comparison ODE x' = ||x||^2 x blows up in finite time, so paths are
    expected to explode.  Used to keep the test suite falsifiable.
    """

    dim: int

    def __post_init__(self) -> None:
        if int(self.dim) != self.dim or self.dim < 3:
            raise CoefficientError(f"dim must be an integer >= 3, got {self.dim}")

    def build(self) -> CoefficientSet:
        dim = self.dim

        def dispersion(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            return np.ones(x.shape[:-1])

        def drift(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            return x * np.einsum("...i,...i->...", x, x)[..., None]

        return CoefficientSet(
            dim=dim,
            dispersion_scale=dispersion,
            sigma=_identity_matrix_field(dim),
            diffusion_matrix=_identity_matrix_field(dim),
            drift=drift,
            degeneracy_indicator=lambda x: dispersion(x) == 0.0,
            start_region=None,
            name=f"cubic_drift(d={dim})",
            sigma_is_identity=True,
            drift_is_zero=False,
        )


def admissible_alpha_bound(d: int) -> float:
    """Strict upper bound d/(2d+2) for the admissible degeneracy exponent.

    Raises
    ------
    CoefficientError
        If d < 3 (the theory requires dimension at least 3).
    """
    if int(d) != d or d < 3:
        raise CoefficientError(f"dimension must be an integer >= 3, got {d}")
    return d / (2.0 * d + 2.0)


@dataclass(frozen=True)
class ExponentSelection:
    """Selected integrability exponents (q, q_tilde) with their intervals."""

    q: float
    q_tilde: float
    q_interval: tuple[float, float]
    q_tilde_interval: tuple[float, float]
    alpha_zero: bool = False

    def __iter__(self):
        return iter((self.q, self.q_tilde))


def select_exponents(d: int, alpha: float, eps: float) -> ExponentSelection:
    """Pick (q, q_tilde) for a degeneracy exponent alpha.

    For alpha > 0 the result is the midpoints of the open intervals
    (2d+2, d/alpha) and (d/2, min(d/(2-alpha), d/2 + eps)).  For
    alpha = 0 the first interval is unbounded and the second collapses;
    the selection q = 2d+3, q_tilde = d/2 + eps/2 is returned with
    ``alpha_zero`` set (constant dispersion, gradient constraints
    vacuous).

    Raises
    ------
    CoefficientError
        If alpha is outside [0, d/(2d+2)) or eps <= 0.
    """
    bound = admissible_alpha_bound(d)
    if not 0.0 <= alpha < bound:
        raise CoefficientError(
            f"alpha must lie in [0, d/(2d+2)) = [0, {bound}) for d={d}, got {alpha}"
        )
    if not eps > 0.0:
        raise CoefficientError(f"eps must be > 0, got {eps}")
    if alpha == 0.0:
        q = 2.0 * d + 3.0
        q_tilde = d / 2.0 + eps / 2.0
        return ExponentSelection(
            q=q,
            q_tilde=q_tilde,
            q_interval=(2.0 * d + 2.0, math.inf),
            q_tilde_interval=(d / 2.0, d / 2.0 + eps),
            alpha_zero=True,
        )
    q_lo, q_hi = 2.0 * d + 2.0, d / alpha
    qt_lo = d / 2.0
    qt_hi = min(d / (2.0 - alpha), d / 2.0 + eps)
    return ExponentSelection(
        q=(q_lo + q_hi) / 2.0,
        q_tilde=(qt_lo + qt_hi) / 2.0,
        q_interval=(q_lo, q_hi),
        q_tilde_interval=(qt_lo, qt_hi),
        alpha_zero=False,
    )


@dataclass(frozen=True)
class EvalRecord:
    """Validated pointwise evaluation of every coefficient map."""

    dispersion_scale: float
    sigma: np.ndarray
    diffusion_matrix: np.ndarray
    drift: np.ndarray
    degenerate: bool


def eval_all(coeffs: CoefficientSet, x) -> EvalRecord:
    """Evaluate all coefficient maps at one point with consistency checks.

    Verifies finiteness component by component and that the diffusion
    matrix equals sigma * sigma^T within relative tolerance 1e-12.

    Raises
    ------
    EvaluationError
        Non-finite output (message names the component) or diffusion
        matrix inconsistent with sigma.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (coeffs.dim,):
        raise CoefficientError(f"point must have shape ({coeffs.dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise CoefficientError(f"point must be finite, got {x}")

    values = {
        "dispersion_scale": float(coeffs.dispersion_scale(x)),
        "sigma": np.asarray(coeffs.sigma(x), dtype=float),
        "diffusion_matrix": np.asarray(coeffs.diffusion_matrix(x), dtype=float),
        "drift": np.asarray(coeffs.drift(x), dtype=float),
    }
    for component, value in values.items():
        if not np.all(np.isfinite(value)):
            raise EvaluationError(
                f"{component} evaluated to a non-finite value at x={x.tolist()}"
            )
    if values["dispersion_scale"] < 0.0:
        raise EvaluationError(
            f"dispersion_scale must be >= 0, got {values['dispersion_scale']} "
            f"at x={x.tolist()}"
        )
    a, s = values["diffusion_matrix"], values["sigma"]
    product = s @ s.T
    tol = 1e-12 * max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - product).max()) > tol:
        raise EvaluationError(
            f"diffusion_matrix differs from sigma*sigma^T at x={x.tolist()}"
        )
    return EvalRecord(
        dispersion_scale=values["dispersion_scale"],
        sigma=s,
        diffusion_matrix=a,
        drift=values["drift"],
        degenerate=bool(np.asarray(coeffs.degeneracy_indicator(x))),
    )


def sphere_directions(dim: int, count: int, include_axes: bool = True) -> np.ndarray:
    """Deterministic quasi-uniform unit directions, shape (n, dim).

    Low-discrepancy points from an additive (Weyl) recurrence are pushed
    through the normal quantile map and normalized; the 2*dim signed
    axis directions are prepended when requested so radial extremes of
    axis-aligned geometries are sampled exactly.
    """
    from scipy.special import ndtri

    if count < 1:
        raise CoefficientError("direction count must be >= 1")
    # generalized golden-ratio recurrence constants
    phi = 2.0
    for _ in range(64):
        phi = (1.0 + phi) ** (1.0 / (dim + 1))
    alphas = phi ** -np.arange(1, dim + 1)
    k = np.arange(1, count + 1)[:, None]
    u = np.mod(0.5 + k * alphas, 1.0)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    z = ndtri(u)
    # re-draw pathological rows that collapse to (numerically) zero length
    norms = _norm(z)
    z[norms == 0.0] = 1.0
    dirs = z / _norm(z)[..., None]
    if include_axes:
        axes = np.concatenate([np.eye(dim), -np.eye(dim)], axis=0)
        dirs = np.concatenate([axes, dirs], axis=0)
    return dirs


@dataclass(frozen=True)
class RadialSamplePlan:
    """Deterministic sampling plan for the radial growth check.

    Radii are log-spaced in (n0, r_max]; directions are quasi-uniform on
    the unit sphere plus the signed axes.
    """

    r_max: float = 1000.0
    n_radii: int = 32
    n_directions: int = 64
    include_axes: bool = True

    def __post_init__(self) -> None:
        if not (np.isfinite(self.r_max) and self.r_max > 1.0):
            raise CoefficientError(f"r_max must be finite and > 1, got {self.r_max}")
        if self.n_radii < 1 or self.n_directions < 1:
            raise CoefficientError("n_radii and n_directions must be >= 1")

    def radii(self, n0: float) -> np.ndarray:
        if self.r_max <= n0:
            raise CoefficientError(
                f"r_max={self.r_max} must exceed the inner radius n0={n0}"
            )
        exponents = np.arange(1, self.n_radii + 1) / self.n_radii
        return n0 * (self.r_max / n0) ** exponents

    def points(self, dim: int, n0: float) -> np.ndarray:
        dirs = sphere_directions(dim, self.n_directions, self.include_axes)
        radii = self.radii(n0)
        pts = radii[:, None, None] * dirs[None, :, :]
        return pts.reshape(-1, dim)


@dataclass(frozen=True)
class H2Report:
    """Result of the sampled radial growth check.

    ``feasible`` is true when every sampled ratio LHS/(||x||^2 (ln||x||+1))
    is finite and at most ``ratio_cap``; then ``m_star`` is the smallest
    constant M that dominates all samples.  Otherwise ``witness`` holds
    the worst sampled point.
    """

    feasible: bool
    m_star: Optional[float]
    max_ratio: float
    witness: np.ndarray
    witness_ratio: float
    n_samples: int
    n0: float
    r_max: float
    ratio_cap: float


def check_h2(
    coeffs: CoefficientSet,
    n0: int,
    sample_spec: Optional[RadialSamplePlan] = None,
    ratio_cap: float = DEFAULT_RATIO_CAP,
) -> H2Report:
    """Sample the radial growth condition outside the ball of radius n0.

    Evaluates LHS(x) = -<(1/psi) A x, x>/||x||^2 + trace((1/psi) A)/2
    + <G, x> against ||x||^2 (ln||x|| + 1) on a deterministic radial
    plan and reports the max ratio.

    Raises
    ------
    CoefficientError
        If n0 < 1; samples at ||x|| <= 1 are refused because
        ln||x|| + 1 may vanish or turn negative there.
    EvaluationError
        If any coefficient evaluates to a non-finite value.
    """
    if int(n0) != n0 or n0 < 1:
        raise CoefficientError(
            f"n0 must be an integer >= 1 (samples at ||x|| <= 1 are refused), got {n0}"
        )
    plan = sample_spec if sample_spec is not None else RadialSamplePlan()
    pts = plan.points(coeffs.dim, float(n0))

    disp = np.asarray(coeffs.dispersion_scale(pts), dtype=float)
    a = np.asarray(coeffs.diffusion_matrix(pts), dtype=float)
    g = np.asarray(coeffs.drift(pts), dtype=float)
    for component, value in (("dispersion_scale", disp), ("diffusion_matrix", a), ("drift", g)):
        if not np.all(np.isfinite(value)):
            bad = pts[~np.isfinite(value.reshape(len(pts), -1)).all(axis=1)][0]
            raise EvaluationError(
                f"{component} evaluated to a non-finite value at x={bad.tolist()}"
            )

    r_sq = np.einsum("...i,...i->...", pts, pts)
    inv_psi = disp**2
    quad = np.einsum("...i,...ij,...j->...", pts, a, pts)
    trace = np.trace(a, axis1=-2, axis2=-1)
    lhs = -inv_psi * quad / r_sq + 0.5 * inv_psi * trace + np.einsum(
        "...i,...i->...", g, pts
    )
    denom = r_sq * (0.5 * np.log(r_sq) + 1.0)
    ratios = lhs / denom

    worst = int(np.argmax(ratios))
    max_ratio = float(ratios[worst])
    feasible = bool(np.isfinite(max_ratio) and max_ratio <= ratio_cap)
    return H2Report(
        feasible=feasible,
        m_star=max_ratio if feasible else None,
        max_ratio=max_ratio,
        witness=pts[worst].copy(),
        witness_ratio=max_ratio,
        n_samples=len(pts),
        n0=float(n0),
        r_max=plan.r_max,
        ratio_cap=ratio_cap,
    )


@dataclass(frozen=True)
class H3Report:
    """Sampled bounds of psi = dispersion_scale^(-2) on a closed ball."""

    ok: bool
    inf_psi: Optional[float]
    sup_psi: Optional[float]
    witness: Optional[np.ndarray]
    reason: str
    n_samples: int

    def __iter__(self):
        return iter((self.inf_psi, self.sup_psi))


def check_h3_window(
    coeffs: CoefficientSet,
    center,
    radius: float,
    n_directions: int = 32,
    n_radii: int = 8,
) -> H3Report:
    """Sample psi on the closed ball B_radius(center).

    The sample grid is the center plus direction rays at radii up to and
    including the boundary.  Fails with a witness if any sample point is
    degenerate (psi undefined) or leaves the start region.
    """
    center = np.asarray(center, dtype=float)
    if center.shape != (coeffs.dim,):
        raise CoefficientError(
            f"center must have shape ({coeffs.dim},), got {center.shape}"
        )
    if not (np.isfinite(radius) and radius > 0.0):
        raise CoefficientError(f"radius must be finite and > 0, got {radius}")

    dirs = sphere_directions(coeffs.dim, n_directions, include_axes=True)
    shells = radius * np.arange(1, n_radii + 1) / n_radii
    pts = center[None, :] + (shells[:, None, None] * dirs[None, :, :]).reshape(
        -1, coeffs.dim
    )
    pts = np.concatenate([center[None, :], pts], axis=0)

    in_region = np.asarray(coeffs.start_region(pts), dtype=bool)
    if not in_region.all():
        bad = pts[~in_region][0]
        return H3Report(
            ok=False,
            inf_psi=None,
            sup_psi=None,
            witness=bad.copy(),
            reason="sample point outside the start region",
            n_samples=len(pts),
        )
    degenerate = np.asarray(coeffs.degeneracy_indicator(pts), dtype=bool)
    if degenerate.any():
        bad = pts[degenerate][0]
        return H3Report(
            ok=False,
            inf_psi=None,
            sup_psi=None,
            witness=bad.copy(),
            reason="ball intersects the degeneracy set",
            n_samples=len(pts),
        )
    disp = np.asarray(coeffs.dispersion_scale(pts), dtype=float)
    if not np.all(np.isfinite(disp)) or np.any(disp <= 0.0):
        bad = pts[~(np.isfinite(disp) & (disp > 0.0))][0]
        return H3Report(
            ok=False,
            inf_psi=None,
            sup_psi=None,
            witness=bad.copy(),
            reason="dispersion scale non-finite or non-positive on the ball",
            n_samples=len(pts),
        )
    psi = disp**-2.0
    inf_psi, sup_psi = float(psi.min()), float(psi.max())
    ok = bool(np.isfinite(inf_psi) and np.isfinite(sup_psi) and inf_psi > 0.0)
    return H3Report(
        ok=ok,
        inf_psi=inf_psi,
        sup_psi=sup_psi,
        witness=None,
        reason="" if ok else "sampled bounds non-finite",
        n_samples=len(pts),
    )


_FAMILY_BUILDERS = {
    "power_law": PowerLawFamily,
    "bump_lattice": BumpLatticeFamily,
    "constant": ConstantFamily,
    "cubic_drift": CubicDriftFamily,
}


def _drift_from_config(dim: int, spec):
    """Declarative drift: 'zero' | [c_1, ..., c_d] | {'linear': s}."""
    if spec is None or spec == "zero":
        return None
    if isinstance(spec, dict):
        if set(spec) == {"linear"}:
            scale = float(spec["linear"])

            def drift(x: np.ndarray) -> np.ndarray:
                return scale * np.asarray(x, dtype=float)

            return drift
        raise CoefficientError(
            f"unknown drift spec keys {sorted(spec)}; expected 'linear'"
        )
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    raise CoefficientError(f"cannot interpret drift spec {spec!r}")


def build_family(spec: dict) -> CoefficientSet:
    """Construct a CoefficientSet from a declarative family record.

    The record holds ``name`` plus the family's constructor parameters,
    e.g. ``{"name": "power_law", "dim": 3, "alpha": 0.3}``.  Unlike the
    dataclass constructors, this path also enforces the admissibility
    bound alpha < d/(2d+2) because declarative configs feed experiments
    that rely on it.
    """
    if not isinstance(spec, dict):
        raise CoefficientError(f"family spec must be a mapping, got {type(spec)}")
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in _FAMILY_BUILDERS:
        raise CoefficientError(
            f"unknown family name {name!r}; expected one of {sorted(_FAMILY_BUILDERS)}"
        )
    if "dim" not in spec:
        raise CoefficientError("family spec requires 'dim'")
    dim = spec["dim"]
    if int(dim) != dim or dim < 3:
        raise CoefficientError(f"dim must be an integer >= 3, got {dim}")

    if name in ("power_law", "bump_lattice"):
        alpha = spec.get("alpha", None)
        if alpha is None:
            raise CoefficientError(f"family {name!r} requires 'alpha'")
        bound = admissible_alpha_bound(int(dim))
        if not 0.0 <= float(alpha) < bound:
            raise CoefficientError(
                f"alpha must lie in [0, d/(2d+2)) = [0, {bound}) for d={dim}, "
                f"got {alpha}"
            )
    if "drift" in spec:
        spec["drift"] = _drift_from_config(int(dim), spec["drift"])

    try:
        family = _FAMILY_BUILDERS[name](**spec)
    except TypeError as exc:
        raise CoefficientError(f"bad parameters for family {name!r}: {exc}") from exc
    return family.build()
