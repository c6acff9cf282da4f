"""Analytic ellipse model of the non-covert boundary and the offset optimizer.

Around the focus point the correlation deficit N^2 - |sum_n e^{j z_n}|^2 is,
to second order in (dr, dtheta), the quadratic form

    g1*dr^2 + 2*g2*dr*dtheta + g3*dtheta^2   =  2 N^2 (1 - q~),

whose level set is an ellipse of area 2 pi N^2 (1-q~) / sqrt(g1 g3 - g2^2)
in mixed (metre x radian) coordinates.  The offset optimizer maximizes
J = g1 g3 - g2^2 (g3 does not depend on the offsets), which minimizes that
area, over the per-antenna box |f_dn| <= box half-width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import FrequencyPlan, wrapped_propagation_phases
from .geometry import SPEED_OF_LIGHT, ArrayGeometry, DomainError, PolarPoint

FOUR_PI_SQ = 4.0 * math.pi**2


class DegenerateEllipseError(ValueError):
    """The quadratic form does not describe a bounded ellipse."""


class DegenerateGeometryError(ValueError):
    """Endfire focus (cos(theta_b) ~ 0) collapses the angular axis."""


def psi_vector(g: ArrayGeometry, plan: FrequencyPlan, r_b_m: float) -> np.ndarray:
    """psi_n = f_c d^2 delta_n^2 / (2 r_b^2) - f_dn with delta_n = n-1, in Hz."""
    if r_b_m <= 0:
        raise DomainError(f"r_b_m must be > 0, got {r_b_m}")
    plan.check_length(g)
    delta = np.arange(g.n_antennas, dtype=float)
    curvature = g.carrier_hz * g.spacing_m**2 / (2.0 * r_b_m**2)
    return curvature * delta * delta - plan.offsets()


def _angular_scale(g: ArrayGeometry, bob: PolarPoint) -> float:
    cos_b = math.cos(bob.theta_rad)
    if abs(cos_b) < 1e-12:
        raise DegenerateGeometryError(
            "focus at endfire (|theta_b| = pi/2) has no angular selectivity"
        )
    return g.carrier_hz * g.spacing_m * cos_b


def g_coefficients(g: ArrayGeometry, plan: FrequencyPlan, bob: PolarPoint):
    """(g1, g2, g3) of the boundary quadratic form, evaluated in O(N).

    The pairwise double sums reduce through sum(a_n - a_m)^2 =
    2 N sum(a^2) - 2 (sum a)^2 and its bilinear analogue.
    """
    n = g.n_antennas
    psi = psi_vector(g, plan, bob.r_m)
    kappa = _angular_scale(g, bob)
    k4 = FOUR_PI_SQ / SPEED_OF_LIGHT**2
    delta = np.arange(n, dtype=float)
    s_psi = float(psi.sum())
    g1 = k4 * (2.0 * n * float(psi @ psi) - 2.0 * s_psi**2)
    g2 = k4 * kappa * (2.0 * n * float(psi @ delta) - 2.0 * s_psi * float(delta.sum()))
    g3 = k4 * kappa**2 * (n * n * (n * n - 1) / 6.0)
    return g1, g2, g3


def ellipse_area(coeffs, n_antennas: int, q_tilde: float) -> float:
    """Closed-form boundary area 2 pi N^2 (1-q~)/sqrt(g1 g3 - g2^2), m*rad.

    Returns 0.0 for q_tilde >= 1 (threshold at or above the peak: empty
    region); raises for a sign-indefinite form.
    """
    g1, g2, g3 = coeffs
    if q_tilde <= 0:
        raise DomainError(f"q_tilde must be > 0, got {q_tilde}")
    if q_tilde >= 1.0:
        return 0.0
    disc = g1 * g3 - g2 * g2
    if disc <= 0:
        raise DegenerateEllipseError(
            f"g1*g3 - g2^2 = {disc} is not positive; boundary is unbounded"
        )
    return 2.0 * math.pi * n_antennas**2 * (1.0 - q_tilde) / math.sqrt(disc)


@dataclass(frozen=True)
class EllipseModel:
    """Quadratic-form coefficients, threshold and area for one plan/focus."""

    g1: float
    g2: float
    g3: float
    q_tilde: float
    area: float
    psi_hz: np.ndarray
    empty_region: bool

    def __post_init__(self):
        p = np.asarray(self.psi_hz, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "psi_hz", p)


def build_ellipse_model(
    g: ArrayGeometry, plan: FrequencyPlan, bob: PolarPoint, q_tilde: float
) -> EllipseModel:
    coeffs = g_coefficients(g, plan, bob)
    area = ellipse_area(coeffs, g.n_antennas, q_tilde)
    return EllipseModel(
        g1=coeffs[0],
        g2=coeffs[1],
        g3=coeffs[2],
        q_tilde=q_tilde,
        area=area,
        psi_hz=psi_vector(g, plan, bob.r_m),
        empty_region=q_tilde >= 1.0,
    )


def _correlation(g: ArrayGeometry, plan: FrequencyPlan, bob: PolarPoint,
                 dr: float, dtheta: float) -> float:
    """|sum_n e^{j z_n}|^2 at (r_b + dr, theta_b + dtheta)."""
    r = bob.r_m + dr
    sin_t = math.sin(bob.theta_rad + dtheta)
    ph = wrapped_propagation_phases(g, plan, r, sin_t) - wrapped_propagation_phases(
        g, plan, bob.r_m, math.sin(bob.theta_rad)
    )
    return float(np.abs(np.exp(1j * ph).sum()) ** 2)


def hessian_consistency(
    g: ArrayGeometry,
    plan: FrequencyPlan,
    bob: PolarPoint,
    dr_step: float = 1e-4,
    dtheta_step: float = 1e-6,
) -> float:
    """Max relative deviation between (g1, g2, g3) and the true curvature.

    Central finite differences of the correlation deficit N^2 - F around the
    focus estimate the Hessian [[g1, g2], [g2, g3]]; exact agreement is not
    expected (the closed form drops offset-curvature cross terms), so the
    caller asserts a bound, not zero.
    """
    g1, g2, g3 = g_coefficients(g, plan, bob)
    n2 = float(g.n_antennas**2)
    h, k = dr_step, dtheta_step

    def f(dr, dth):
        return _correlation(g, plan, bob, dr, dth)

    g1_fd = (2.0 * n2 - f(h, 0.0) - f(-h, 0.0)) / h**2
    g3_fd = (2.0 * n2 - f(0.0, k) - f(0.0, -k)) / k**2
    g2_fd = -(f(h, k) - f(h, -k) - f(-h, k) + f(-h, -k)) / (4.0 * h * k)
    devs = (
        abs(g1_fd - g1) / abs(g1),
        abs(g2_fd - g2) / abs(g2),
        abs(g3_fd - g3) / abs(g3),
    )
    return max(devs)


def objective_and_gradient(
    g: ArrayGeometry, bob: PolarPoint, f_delta_hz: np.ndarray
):
    """J = g1*g3 - g2^2 and its analytic gradient in the offsets.

    d psi_n / d f_dn = -1; with M0 x = N x - sum(x) the chain rule gives
    dJ = -4 k4 g3 M0 psi + 4 k4 kappa g2 M0 delta.
    """
    f = np.asarray(f_delta_hz, dtype=float)
    n = g.n_antennas
    if f.shape != (n,):
        raise DomainError(f"expected {n} offsets, got shape {f.shape}")
    kappa = _angular_scale(g, bob)
    k4 = FOUR_PI_SQ / SPEED_OF_LIGHT**2
    delta = np.arange(n, dtype=float)
    curvature = g.carrier_hz * g.spacing_m**2 / (2.0 * bob.r_m**2)
    psi = curvature * delta * delta - f
    s_psi = psi.sum()
    g1 = k4 * (2.0 * n * float(psi @ psi) - 2.0 * s_psi**2)
    g2 = k4 * kappa * (2.0 * n * float(psi @ delta) - 2.0 * s_psi * float(delta.sum()))
    g3 = k4 * kappa**2 * (n * n * (n * n - 1) / 6.0)
    m0_psi = n * psi - s_psi
    m0_delta = n * delta - delta.sum()
    grad = -4.0 * k4 * g3 * m0_psi + 4.0 * k4 * kappa * g2 * m0_delta
    return float(g1 * g3 - g2 * g2), grad


@dataclass(frozen=True)
class OptimizerConfig:
    """Deterministic settings for the projected-gradient multi-start solver."""

    max_iters: int = 400
    n_random_starts: int = 8
    seed: int = 0
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    grow: float = 1.5
    rel_tol: float = 1e-12
    vertex_polish: bool = True
    linear_start_increment_hz: Optional[float] = None


@dataclass(frozen=True)
class OptimizeResult:
    offsets_hz: tuple
    objective: float
    start_index: int
    iterations: int
    converged: bool


def _ascent_from(g, bob, x0, box, cfg):
    """Projected-gradient ascent with backtracking from one start point."""
    x = np.clip(np.asarray(x0, dtype=float), -box, box)
    j, grad = objective_and_gradient(g, bob, x)
    gmax = float(np.max(np.abs(grad)))
    t = box / gmax if gmax > 0 else box
    it = 0
    stalls = 0
    while it < cfg.max_iters:
        it += 1
        x_new = np.clip(x + t * grad, -box, box)
        move = x_new - x
        j_new, grad_new = objective_and_gradient(g, bob, x_new)
        if j_new >= j + cfg.armijo_c * float(grad @ move) and j_new > j:
            x, j, grad = x_new, j_new, grad_new
            t *= cfg.grow
            stalls = 0
        else:
            t *= cfg.backtrack
            stalls += 1
            if stalls > 60:
                break
        if np.allclose(move, 0.0) or (j != 0 and abs(j_new - j) <= cfg.rel_tol * abs(j) and stalls == 0):
            break
    return x, j, it


def _polish_to_vertex(g, bob, x, box):
    """Snap to the nearest box vertex and greedily flip single coordinates.

    The objective is convex in the offsets (its Hessian is psd by the
    Cauchy-Schwarz inequality in the M0 seminorm), so every maximizer over
    the box sits at a vertex; greedy 1-flips refine the snapped pattern.
    """
    _, grad = objective_and_gradient(g, bob, x)
    signs = np.where(x != 0.0, np.sign(x), np.where(grad >= 0, 1.0, -1.0))
    v = box * signs
    j = objective_and_gradient(g, bob, v)[0]
    improved = True
    while improved:
        improved = False
        for i in range(len(v)):
            v[i] = -v[i]
            j_flip = objective_and_gradient(g, bob, v)[0]
            if j_flip > j:
                j = j_flip
                improved = True
            else:
                v[i] = -v[i]
    return v, j


def optimize_offsets(
    g: ArrayGeometry,
    bob: PolarPoint,
    box_half_width_hz: float,
    config: OptimizerConfig = OptimizerConfig(),
    extra_starts: Sequence[np.ndarray] = (),
) -> OptimizeResult:
    """Maximize J over the box, multi-start, always returning the best iterate.

    Start set: the zero plan, the box-clipped linear ramp, seeded random
    interior points, then any caller-supplied extras.  Ties keep the lowest
    start index, so results are reproducible for a fixed config.
    """
    if box_half_width_hz <= 0:
        raise DomainError(f"box_half_width_hz must be > 0, got {box_half_width_hz}")
    n = g.n_antennas
    box = float(box_half_width_hz)
    f_lin = config.linear_start_increment_hz
    if f_lin is None:
        f_lin = 2.0 * box
    ramp = ((n + 1) / 2.0 - np.arange(1, n + 1)) * f_lin
    rng = np.random.default_rng(config.seed)
    starts = [np.zeros(n), np.clip(ramp, -box, box)]
    starts += [rng.uniform(-box, box, n) for _ in range(config.n_random_starts)]
    starts += [np.asarray(s, dtype=float) for s in extra_starts]

    best = None
    for idx, x0 in enumerate(starts):
        x, j, iters = _ascent_from(g, bob, x0, box, config)
        converged = iters < config.max_iters
        if config.vertex_polish:
            v, jv = _polish_to_vertex(g, bob, x, box)
            if jv > j:
                x, j = v, jv
        if best is None or j > best.objective:
            best = OptimizeResult(
                offsets_hz=tuple(float(v) for v in x),
                objective=j,
                start_index=idx,
                iterations=iters,
                converged=converged,
            )
    return best
