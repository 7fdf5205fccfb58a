"""Analytic bounds on the continuation region and the parameter-case taxonomy.

The deterministic flow started at ``(phi0, phi1)`` is a pathwise lower bound
for the sum statistic (jumps only increase it for ``alpha >= beta``), so the
value of the deterministic stopping problem

    inf_{t in [0, inf]}  int_0^t exp(-rho s) (x(s) + y(s) - kappa) ds

bounds the stochastic value from below.  Whenever that infimum is zero the
point is certified to lie in the stopping region.  Depending on where the
mean-reversion point of the flow sits relative to the advantageous region
``{x + y <= kappa}``, the certificate takes one of several closed forms:
a half-plane (``D0``), the complement of a tangency curve (``C1``/``D1``),
a shifted half-plane (``D2``), or the exact complement of the advantageous
region.  This module implements the taxonomy, the certificates, a numerical
deterministic-infimum oracle that generalizes all of them, and the bounding
box the solver uses to size its grid.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import ModelParams, Statistic3, check_feasible, flow_xyz

__all__ = [
    "CaseTag",
    "RegionReport",
    "CurveC1",
    "classify_case",
    "in_advantageous",
    "deterministic_infimum",
    "d0_functional",
    "d0_coefficients",
    "curve_c1",
    "curve_ordinate",
    "stopping_superset_contains",
    "continuation_bounding_box",
    "region_report",
    "boundary_polyline",
]

BOX_MARGIN = 0.10
CURVE_ORDINATE_TOL = 1e-9


class CaseTag(Enum):
    CASE_I = "I"
    CASE_II_A = "II-a"
    CASE_II_B_I_1 = "II-b-i-1"
    CASE_II_B_I_2 = "II-b-i-2"
    CASE_II_B_II_1 = "II-b-ii-1"
    CASE_II_B_II_2 = "II-b-ii-2"
    CASE_III = "III"


def classify_case(p: ModelParams) -> CaseTag:
    """Partition of the parameter space by path behaviour of the flow.

    Boundary tie-breaks: ``a == 0`` goes to Case I (paths still nondecreasing),
    ``lam + a == 0`` to the II-b-i branch, ``a*kappa + lam == 0`` to sub-case 1.
    """
    if p.alpha < p.beta:
        return CaseTag.CASE_III
    if p.a >= 0.0:
        return CaseTag.CASE_I
    lam, a, kappa = p.lam, p.a, p.kappa
    mr_sum = lam * lam / (a * a) - 2.0 * lam / a
    if mr_sum <= kappa:
        return CaseTag.CASE_II_A
    sub_one = a * kappa + lam >= 0.0
    if lam + a <= 0.0:
        return CaseTag.CASE_II_B_I_1 if sub_one else CaseTag.CASE_II_B_I_2
    return CaseTag.CASE_II_B_II_1 if sub_one else CaseTag.CASE_II_B_II_2


def in_advantageous(s: Statistic3, p: ModelParams) -> bool:
    """True iff the running cost is nonpositive at ``s`` (closed region)."""
    return s.phi_x + s.phi_p <= p.kappa


def _check_b2(phi0: float, phi1: float) -> None:
    tol = 1e-12 * (1.0 + abs(phi0) + abs(phi1))
    if phi0 < -tol or phi1 < -tol or phi1 + tol < 2.0 * math.sqrt(max(phi0, 0.0)):
        raise ValueError(f"({phi0}, {phi1}) outside the feasible (x, y) cone")


def _sum_along_flow(t, phi0, phi1, p: ModelParams):
    x, y, _ = flow_xyz(t, phi0, phi1, 0.0, p)
    return x + y


def _sum_stationary_time(phi0: float, phi1: float, p: ModelParams) -> float | None:
    """Interior stationary point of t -> x(t)+y(t), if one exists for t > 0.

    In terms of u = exp(a t) the sum is a quadratic A u^2 + B u + C, so the
    derivative vanishes at a single u; paths therefore cross the critical line
    at most once.
    """
    lam, a = p.lam, p.a
    if abs(a) < 1e-10 * (p.lam + p.alpha + p.beta):
        # sum is a quadratic in t with positive leading coefficient
        tv = -(lam * phi1 + 2.0 * lam) / (2.0 * lam * lam)
        return tv if tv > 0 else None
    A = phi0 + (lam / a) * phi1 + (lam / a) ** 2
    B = phi1 * (1.0 - lam / a) + 2.0 * lam / a - 2.0 * (lam / a) ** 2
    if A == 0.0:
        return None
    uv = -B / (2.0 * A)
    if uv <= 0.0:
        return None
    tv = math.log(uv) / a
    return tv if tv > 0 else None


def _tail_integral(phi0: float, phi1: float, t_from: float, p: ModelParams,
                   rho: float, kappa: float) -> float:
    """Closed form of int_{t_from}^inf exp(-rho s) (x(s)+y(s)-kappa) ds, a < 0."""
    lam, a = p.lam, p.a
    xT, yT, _ = flow_xyz(t_from, phi0, phi1, 0.0, p)
    xT, yT = float(xT), float(yT)
    A = xT - (lam / a) ** 2 + (lam / a) * (yT + 2.0 * lam / a)
    B = (yT + 2.0 * lam / a) * (1.0 - lam / a)
    C = (lam / a) ** 2 - 2.0 * lam / a - kappa
    disc = math.exp(-rho * t_from)
    return disc * (C / rho + B / (rho - a) + A / (rho - 2.0 * a))


def deterministic_infimum(phi0: float, phi1: float, p: ModelParams,
                          rho: float | None = None,
                          n_grid: int = 4000) -> tuple[float, float]:
    """Numerical infimum of the discounted deterministic cost along the flow.

    Returns ``(value, t_opt)`` with ``value <= 0``; a value of zero certifies
    that every feasible state over ``(phi0, phi1)`` lies in the stopping
    region.  ``t_opt`` is the earliest minimizer (``math.inf`` for the
    never-stop candidate).  The integral is evaluated by trapezoid quadrature
    on a geometric time grid; interior minimizers (upcrossings of the running
    cost through zero) are sharpened by bisection, and for mean-reverting
    parameters the ``t = inf`` candidate adds the analytic tail.
    """
    _check_b2(phi0, phi1)
    rho = p.rho if rho is None else rho
    kappa = p.kappa
    a = p.a

    def cost(t):
        return _sum_along_flow(t, phi0, phi1, p) - kappa

    if cost(0.0) >= 0.0 and _early_certificate(phi0, phi1, p):
        return 0.0, 0.0

    # quadrature horizon: discount kills the integrand for a < 0; for a >= 0
    # the sum is eventually increasing, so integrate past the last sign change
    if a < 0.0:
        t_far = 45.0 / rho
    else:
        t_far = 1.0
        while cost(t_far) < 0.0 and t_far < 1e6:
            t_far *= 2.0
        t_far *= 2.0
    grid = np.concatenate([[0.0], np.geomspace(min(1e-6, t_far * 1e-6), t_far, n_grid)])
    xg, yg, _ = flow_xyz(grid, phi0, phi1, 0.0, p)
    hvals = xg + yg - kappa
    integrand = np.exp(-rho * grid) * hvals
    F = np.concatenate([[0.0], np.cumsum(
        0.5 * (integrand[1:] + integrand[:-1]) * np.diff(grid))])

    candidates: list[tuple[float, float]] = [(0.0, 0.0)]
    # interior minima: upcrossings of the running cost
    sign = hvals < 0.0
    for i in np.nonzero(sign[:-1] & ~sign[1:])[0]:
        lo, hi = grid[i], grid[i + 1]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if cost(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        t_r = 0.5 * (lo + hi)
        # local correction of the trapezoid cell up to the root
        seg = np.linspace(grid[i], t_r, 33)
        xs_, ys_, _ = flow_xyz(seg, phi0, phi1, 0.0, p)
        f_loc = np.exp(-rho * seg) * (xs_ + ys_ - kappa)
        F_r = F[i] + float(np.trapezoid(f_loc, seg))
        candidates.append((float(F_r), float(t_r)))
    if a < 0.0:
        F_inf = float(F[-1]) + _tail_integral(phi0, phi1, t_far, p, rho, kappa)
        candidates.append((F_inf, math.inf))

    best = min(v for v, _ in candidates)
    tol = 1e-13 * (1.0 + abs(best))
    t_opt = min(t for v, t in candidates if v <= best + tol)
    return min(0.0, best), t_opt


def _early_certificate(phi0: float, phi1: float, p: ModelParams) -> bool:
    # quick screen: in Case I / III / II-b-*-1 geometry, a nonnegative cost at
    # t=0 stays nonnegative only when the path cannot re-enter the advantageous
    # region; returning False just defers to the full quadrature
    case = classify_case(p)
    if case in (CaseTag.CASE_I, CaseTag.CASE_III):
        return True
    return False


def d0_coefficients(p: ModelParams) -> tuple[float, float, float]:
    """Affine coefficients of the infinite-horizon deterministic cost.

    Closed form of ``int_0^inf exp(-2 lam s) (x(s, phi0) + y(s, phi1) - kappa) ds``
    as ``coef0 * phi0 + coef1 * phi1 + k``.  The integration discount is twice
    the disorder hazard (it equals ``rho`` in rederived mode); ``kappa`` follows
    the active discount spec.
    """
    lam, a, kappa = p.lam, p.a, p.kappa
    rho = 2.0 * lam
    coef0 = 1.0 / (rho - 2.0 * a)
    coef1 = (lam + rho - 2.0 * a) / ((rho - 2.0 * a) * (rho - a))
    la2 = (lam / a) ** 2
    k = (
        la2 / rho
        - la2 / (rho - 2.0 * a)
        + (2.0 * lam * lam / a) / ((rho - 2.0 * a) * (rho - a))
        - (2.0 * lam / a) / rho
        + (2.0 * lam / a) / (rho - a)
        - kappa / rho
    )
    return coef0, coef1, k


def d0_functional(phi0: float, phi1: float, p: ModelParams) -> float:
    """Case II-a stopping certificate: positive value (outside the advantageous
    region) certifies membership in the stopping region."""
    if classify_case(p) is not CaseTag.CASE_II_A:
        raise ValueError("d0_functional requires Case II-a parameters")
    _check_b2(phi0, phi1)
    coef0, coef1, k = d0_coefficients(p)
    return coef0 * phi0 + coef1 * phi1 + k


@dataclass(frozen=True)
class CurveC1:
    """Tangency-curve data for Cases II-b-i-2 / II-b-ii-2.

    The line ``x + y = kappa`` and the critical line meet at ``(x_i, y_i)``;
    flowing backward from there for ``t_star`` lands on the x-axis at
    ``(x_star, 0)``.  The forward path from ``(x_star, 0)`` is tangent to the
    cost boundary at the intersection, and the stopping certificate holds
    above the concatenation of that path with the boundary segment.
    """

    x_i: float
    y_i: float
    t_star: float
    x_star: float


@functools.lru_cache(maxsize=64)
def curve_c1(p: ModelParams) -> CurveC1:
    case = classify_case(p)
    if case not in (CaseTag.CASE_II_B_I_2, CaseTag.CASE_II_B_II_2):
        raise ValueError(f"curve C1 is undefined in case {case.value}")
    lam, a, kappa = p.lam, p.a, p.kappa
    y_i = -2.0 * (a * kappa + lam) / (lam - a)
    x_i = kappa - y_i
    t_star = math.log(1.0 + a * y_i / (2.0 * lam)) / a
    x_star, y_back, _ = flow_xyz(-t_star, x_i, y_i, 0.0, p)
    return CurveC1(x_i=x_i, y_i=y_i, t_star=t_star, x_star=float(x_star))


def curve_ordinate(x: float, p: ModelParams) -> float:
    """Ordinate of the stopping boundary curve C1 at abscissa ``x``.

    Piecewise: the cost boundary ``kappa - x`` left of the intersection, the
    tangent path (found by bisection in the path parameter; the abscissa is
    monotone along it) between intersection and ``x_star``, and zero beyond.
    """
    cc = curve_c1(p)
    if x <= cc.x_i:
        return p.kappa - x
    if x >= cc.x_star:
        return 0.0
    lo, hi = 0.0, cc.t_star  # x(t, x_star) decreases from x_star to x_i
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        xm, ym, _ = flow_xyz(mid, cc.x_star, 0.0, 0.0, p)
        if xm > x:
            lo = mid
        else:
            hi = mid
        if abs(hi - lo) * 2.0 * p.lam < CURVE_ORDINATE_TOL:
            break
    _, y_mid, _ = flow_xyz(0.5 * (lo + hi), cc.x_star, 0.0, 0.0, p)
    return float(y_mid)


def stopping_superset_contains(s: Statistic3, p: ModelParams) -> bool:
    """Case-dispatched analytic certificate that ``v(s) == 0``."""
    check_feasible(s)
    x, y = s.phi_x, s.phi_p
    kappa = p.kappa
    if x + y <= kappa:
        return False
    case = classify_case(p)
    if case in (CaseTag.CASE_I, CaseTag.CASE_II_B_I_1, CaseTag.CASE_II_B_II_1):
        return True
    if case is CaseTag.CASE_II_A:
        return d0_functional(x, y, p) > 0.0
    if case is CaseTag.CASE_III:
        return x + y >= kappa + 2.0 * p.beta / p.c
    return y >= curve_ordinate(x, p) - CURVE_ORDINATE_TOL


def _raw_bounds(p: ModelParams) -> tuple[float, float]:
    """Untrimmed per-case (x, y) extents of the continuation superset."""
    kappa = p.kappa
    case = classify_case(p)
    if case in (CaseTag.CASE_I, CaseTag.CASE_II_B_I_1, CaseTag.CASE_II_B_II_1):
        return kappa, kappa
    if case is CaseTag.CASE_II_A:
        coef0, coef1, k = d0_coefficients(p)
        if k >= 0.0:
            return kappa, kappa
        return max(kappa, -k / coef0), max(kappa, -k / coef1)
    if case is CaseTag.CASE_III:
        b = kappa + 2.0 * p.beta / p.c
        return b, b
    cc = curve_c1(p)
    return max(kappa, cc.x_star), kappa


def continuation_bounding_box(p: ModelParams):
    """Axis-aligned box guaranteed to contain the continuation region.

    The y-extent carries a 10% margin over the case bound; the x-extent is
    additionally trimmed to ``y_hi^2 / 4`` because every feasible state
    satisfies ``x <= y^2 / 4``.  The z-extent equals the y-extent (``z <= y``).
    """
    x_raw, y_raw = _raw_bounds(p)
    y_hi = (1.0 + BOX_MARGIN) * y_raw
    x_hi = min((1.0 + BOX_MARGIN) * x_raw, y_hi * y_hi / 4.0)
    return ((0.0, x_hi), (0.0, y_hi), (0.0, y_hi))


@dataclass(frozen=True)
class RegionReport:
    """Analytic-region summary for a parameter set."""

    case: CaseTag
    kappa: float
    mean_reversion: tuple[float, float] | None
    intersection: tuple[float, float] | None
    t_star: float | None
    x_star: float | None
    bounding_box: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]


def region_report(p: ModelParams) -> RegionReport:
    case = classify_case(p)
    lam, a = p.lam, p.a
    mean_rev = ((lam / a) ** 2, -2.0 * lam / a) if a < 0 else None
    inter = t_star = x_star = None
    if case in (CaseTag.CASE_II_B_I_2, CaseTag.CASE_II_B_II_2):
        cc = curve_c1(p)
        inter = (cc.x_i, cc.y_i)
        t_star = cc.t_star
        x_star = cc.x_star
    return RegionReport(
        case=case,
        kappa=p.kappa,
        mean_reversion=mean_rev,
        intersection=inter,
        t_star=t_star,
        x_star=x_star,
        bounding_box=continuation_bounding_box(p),
    )


def boundary_polyline(p: ModelParams, n: int = 200) -> np.ndarray:
    """Dense (x, y) sample of the active stopping-certificate boundary."""
    kappa = p.kappa
    case = classify_case(p)

    def line_within_cone(level: float) -> np.ndarray:
        # x + y = level clipped to y >= 2 sqrt(x)
        x_max = level + 2.0 - 2.0 * math.sqrt(level + 1.0)
        xs = np.linspace(0.0, x_max, n)
        return np.column_stack([xs, level - xs])

    if case in (CaseTag.CASE_I, CaseTag.CASE_II_B_I_1, CaseTag.CASE_II_B_II_1):
        return line_within_cone(kappa)
    if case is CaseTag.CASE_III:
        return line_within_cone(kappa + 2.0 * p.beta / p.c)
    if case is CaseTag.CASE_II_A:
        coef0, coef1, k = d0_coefficients(p)
        if k >= 0.0:
            return line_within_cone(kappa)
        x_max = -k / coef0
        xs = np.linspace(0.0, x_max, n)
        ys = (-k - coef0 * xs) / coef1
        return np.column_stack([xs, ys])
    cc = curve_c1(p)
    ts = np.linspace(cc.t_star, 0.0, n // 2)
    xs_t, ys_t, _ = flow_xyz(ts, cc.x_star, 0.0, 0.0, p)
    seg = np.linspace(0.0, cc.x_i, n - n // 2)
    part1 = np.column_stack([seg, kappa - seg])
    part2 = np.column_stack([xs_t, ys_t])
    return np.vstack([part1, part2])
