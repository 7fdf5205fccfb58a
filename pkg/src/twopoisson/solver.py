"""Value iteration for the reduced optimal stopping problem on a 3-D grid.

The one-stage operator maps a bounded function ``g`` to

    [J g](t, s) = int_0^t exp(-(rho + 2 beta) u)
                  (h + beta (g o F1 + g o F2))(flow(u, s)) du,

and ``J0 g = inf_{t in [0, inf]} [J g](t, .)``.  Iterating ``v_0 = 0``,
``v_{n+1} = J0 v_n`` produces a nonincreasing sequence converging uniformly
and geometrically (rate ``2 beta / (2 beta + rho)``) to the value function of
the stopping problem.  Value functions live on a rectilinear grid covering the
bounding box of the continuation region, are interpolated trilinearly, and are
defined as zero outside the box (the box contains the continuation region, so
the true value vanishes there).

The sweep is vectorized over grid nodes: a single pass over the quadrature
time grid accumulates the composite-trapezoid integral for every node at once
while tracking the running minimum, and a vectorized golden-section pass
refines the discrete argmin to ``dt / 100``.  Node updates read only the
previous iterate and write disjoint slots, so execution order cannot change
the result.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .bounds import continuation_bounding_box
from .model import ModelParams, Statistic3, check_feasible, flow_xyz, jump_xyz

__all__ = [
    "SolverConfig",
    "ValueFunction",
    "StoppingRegionGrid",
    "SolveResult",
    "feasible_mask",
    "apply_J",
    "apply_J0",
    "iterate",
    "solve",
    "hitting_time_r",
    "extract_region",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_ITERS = 12  # shrinks a 2*dt bracket below dt/100


@dataclass(frozen=True)
class SolverConfig:
    """Grid geometry, quadrature resolution and convergence thresholds.

    ``None`` fields are derived from the model parameters by :meth:`resolve`:
    extents come from the continuation bounding box, ``dt = min(0.01,
    0.05/(rho+2 beta))``, ``t_max`` makes the discount tail at most 1e-10 and
    ``eps_stop = 1e-5 / c``.
    """

    nx: int = 48
    ny: int = 48
    nz: int = 32
    extents: tuple | None = None
    dt: float | None = None
    t_max: float | None = None
    eps_stop: float | None = None
    eps_conv: float = 1e-6
    n_max: int = 200
    spacing: str = "uniform"

    def resolve(self, p: ModelParams) -> "SolverConfig":
        gamma = p.rho + 2.0 * p.beta
        ext = self.extents if self.extents is not None else continuation_bounding_box(p)
        dt = self.dt if self.dt is not None else min(0.01, 0.05 / gamma)
        t_max = self.t_max if self.t_max is not None else math.log(1e10) / gamma
        eps_stop = self.eps_stop if self.eps_stop is not None else 1e-5 / p.c
        cfg = replace(self, extents=tuple(tuple(e) for e in ext), dt=dt,
                      t_max=t_max, eps_stop=eps_stop)
        cfg.validate(p)
        return cfg

    def validate(self, p: ModelParams) -> None:
        if min(self.nx, self.ny, self.nz) < 4:
            raise ValueError("grid needs at least 4 nodes per axis")
        if self.dt is None or self.dt <= 0 or self.t_max is None or self.t_max <= 0:
            raise ValueError("dt and t_max must be positive")
        if self.t_max < 10.0 * self.dt:
            raise ValueError("t_max must cover at least ten quadrature steps")
        if self.eps_stop is None or self.eps_stop <= 0 or self.eps_conv <= 0 or self.n_max <= 0:
            raise ValueError("tolerances and the iteration cap must be positive")
        if self.spacing not in ("uniform", "geometric"):
            raise ValueError(f"unknown spacing {self.spacing!r}")
        (_, _), (_, y_hi), (_, z_hi) = self.extents
        if y_hi < p.kappa or z_hi < p.kappa:
            raise ValueError("grid extents do not cover the advantageous region")


def _axis(hi: float, n: int, spacing: str) -> np.ndarray:
    if spacing == "uniform":
        return np.linspace(0.0, hi, n)
    # denser nodes toward the origin, where the value varies fastest
    return np.concatenate([[0.0], np.geomspace(hi * 0.01, hi, n - 1)])


def feasible_mask(xs: np.ndarray, ys: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """Boolean (nx, ny, nz) mask of nodes inside {y >= 2 sqrt(x), y >= z}."""
    tol = 1e-12 * (1.0 + max(xs[-1], ys[-1], zs[-1]))
    ok_xy = ys[None, :] + tol >= 2.0 * np.sqrt(xs)[:, None]
    ok_yz = ys[:, None] + tol >= zs[None, :]
    return ok_xy[:, :, None] & ok_yz[None, :, :]


def _trilinear(xs, ys, zs, V, qx, qy, qz):
    qx = np.asarray(qx, dtype=float)
    qy = np.asarray(qy, dtype=float)
    qz = np.asarray(qz, dtype=float)
    outside = (qx > xs[-1]) | (qy > ys[-1]) | (qz > zs[-1])
    cx = np.clip(qx, 0.0, xs[-1])
    cy = np.clip(qy, 0.0, ys[-1])
    cz = np.clip(qz, 0.0, zs[-1])
    ix = np.clip(np.searchsorted(xs, cx, side="right") - 1, 0, len(xs) - 2)
    iy = np.clip(np.searchsorted(ys, cy, side="right") - 1, 0, len(ys) - 2)
    iz = np.clip(np.searchsorted(zs, cz, side="right") - 1, 0, len(zs) - 2)
    fx = (cx - xs[ix]) / (xs[ix + 1] - xs[ix])
    fy = (cy - ys[iy]) / (ys[iy + 1] - ys[iy])
    fz = (cz - zs[iz]) / (zs[iz + 1] - zs[iz])
    out = (
        V[ix, iy, iz] * (1 - fx) * (1 - fy) * (1 - fz)
        + V[ix + 1, iy, iz] * fx * (1 - fy) * (1 - fz)
        + V[ix, iy + 1, iz] * (1 - fx) * fy * (1 - fz)
        + V[ix, iy, iz + 1] * (1 - fx) * (1 - fy) * fz
        + V[ix + 1, iy + 1, iz] * fx * fy * (1 - fz)
        + V[ix + 1, iy, iz + 1] * fx * (1 - fy) * fz
        + V[ix, iy + 1, iz + 1] * (1 - fx) * fy * fz
        + V[ix + 1, iy + 1, iz + 1] * fx * fy * fz
    )
    return np.where(outside, 0.0, out)


@dataclass
class ValueFunction:
    """Grid-sampled nonpositive value function with trilinear interpolation.

    Queries beyond the grid extents return zero.  Grid nodes outside the
    feasible cone carry the value of their y-projection onto the cone, so
    interpolation in boundary cells never extrapolates.
    """

    xs: np.ndarray
    ys: np.ndarray
    zs: np.ndarray
    values: np.ndarray
    n: int = 0

    def __call__(self, qx, qy, qz):
        return _trilinear(self.xs, self.ys, self.zs, self.values, qx, qy, qz)

    def at(self, s: Statistic3) -> float:
        return float(self(s.phi_x, s.phi_p, s.phi_1))

    @classmethod
    def zeros(cls, p: ModelParams, cfg: SolverConfig) -> "ValueFunction":
        cfg = cfg.resolve(p)
        (x_lo, x_hi), (y_lo, y_hi), (z_lo, z_hi) = cfg.extents
        if x_lo or y_lo or z_lo:
            raise ValueError("grid extents must start at the origin")
        xs = _axis(x_hi, cfg.nx, cfg.spacing)
        ys = _axis(y_hi, cfg.ny, cfg.spacing)
        zs = _axis(z_hi, cfg.nz, cfg.spacing)
        return cls(xs, ys, zs, np.zeros((cfg.nx, cfg.ny, cfg.nz)), n=0)


@dataclass
class StoppingRegionGrid:
    """Node mask of the stop decision (value within eps of zero)."""

    mask: np.ndarray
    feasible: np.ndarray
    n: int
    eps: float


def _fill_infeasible(xs, ys, zs, V, feas):
    """Overwrite infeasible nodes with the value at their y-projection."""
    nx, nz = len(xs), len(zs)
    yproj = np.maximum(2.0 * np.sqrt(xs)[:, None], zs[None, :])  # (nx, nz)
    jceil = np.searchsorted(ys, yproj - 1e-12, side="left")
    jceil = np.minimum(jceil, len(ys) - 1)
    col = V[np.arange(nx)[:, None], jceil, np.arange(nz)[None, :]]
    return np.where(feas, V, col[:, None, :])


def _integrand(g: ValueFunction, p: ModelParams, x, y, z):
    """Running cost plus jump continuation, before discounting."""
    x1, y1, z1 = jump_xyz(1, x, y, z, p)
    x2, y2, z2 = jump_xyz(2, x, y, z, p)
    return (x + y - p.kappa) + p.beta * (g(x1, y1, z1) + g(x2, y2, z2))


def _j0_batch(g: ValueFunction, X, Y, Z, p: ModelParams, cfg: SolverConfig):
    """Vectorized J0: minimize the one-stage cost over the quadrature grid,
    then refine each node's discrete argmin by golden section.

    Returns ``(values, t_opts)``; ``t_opt == t_max`` stands for the
    never-stop candidate (the discount tail beyond is below 1e-10).
    """
    gamma = p.rho + 2.0 * p.beta
    dt = cfg.dt
    n_steps = int(round(cfg.t_max / dt))
    N = X.shape[0]

    fd_prev = _integrand(g, p, X, Y, Z)  # u = 0, discount 1
    fd0 = fd_prev.copy()
    C = np.zeros(N)
    best = np.zeros(N)
    best_t = np.zeros(N)
    br_u = np.zeros(N)
    br_Cl = np.zeros(N)
    br_Cr = np.zeros(N)
    br_fl = fd_prev.copy()
    br_fr = fd_prev.copy()

    for k in range(1, n_steps + 1):
        u = k * dt
        xu, yu, zu = flow_xyz(u, X, Y, Z, p)
        fd = math.exp(-gamma * u) * _integrand(g, p, xu, yu, zu)
        C_new = C + 0.5 * dt * (fd + fd_prev)
        improved = C_new < best
        if improved.any():
            best[improved] = C_new[improved]
            best_t[improved] = u
            br_u[improved] = u - dt
            br_Cl[improved] = C[improved]
            br_Cr[improved] = C_new[improved]
            br_fl[improved] = fd_prev[improved]
            br_fr[improved] = fd[improved]
        C = C_new
        fd_prev = fd

    def j_at(t):
        xu, yu, zu = flow_xyz(t, X, Y, Z, p)
        fd_t = np.exp(-gamma * t) * _integrand(g, p, xu, yu, zu)
        left = t <= best_t
        base_u = np.where(left, br_u, best_t)
        base_C = np.where(left, br_Cl, br_Cr)
        base_f = np.where(left, br_fl, br_fr)
        return base_C + 0.5 * (t - base_u) * (base_f + fd_t)

    lo = np.maximum(best_t - dt, 0.0)
    hi = np.minimum(best_t + dt, cfg.t_max)
    for _ in range(_GOLDEN_ITERS):
        m1 = hi - _INVPHI * (hi - lo)
        m2 = lo + _INVPHI * (hi - lo)
        j1 = j_at(m1)
        j2 = j_at(m2)
        take1 = j1 <= j2
        hi = np.where(take1, m2, hi)
        lo = np.where(take1, lo, m1)
    tm = 0.5 * (lo + hi)
    jm = j_at(tm)
    use = jm < best
    values = np.where(use, jm, best)
    t_opt = np.where(use, tm, best_t)
    return np.minimum(values, 0.0), t_opt


def apply_J(g: ValueFunction, t: float, s: Statistic3, p: ModelParams,
            cfg: SolverConfig) -> float:
    """One-stage cost of waiting until ``t`` (composite trapezoid at step dt)."""
    if t < 0:
        raise ValueError(f"horizon must be nonnegative, got {t!r}")
    check_feasible(s)
    cfg = cfg.resolve(p)
    tt = min(t, cfg.t_max)
    gamma = p.rho + 2.0 * p.beta
    k = int(math.floor(tt / cfg.dt))
    us = cfg.dt * np.arange(k + 1)
    if tt > us[-1] + 1e-15:
        us = np.append(us, tt)
    xu, yu, zu = flow_xyz(us, s.phi_x, s.phi_p, s.phi_1, p)
    fd = np.exp(-gamma * us) * _integrand(g, p, xu, yu, zu)
    return float(np.trapezoid(fd, us))


def apply_J0(g: ValueFunction, s: Statistic3, p: ModelParams,
             cfg: SolverConfig) -> tuple[float, float]:
    """Infimum of apply_J over the horizon; returns (value, earliest minimizer)."""
    check_feasible(s)
    cfg = cfg.resolve(p)
    X = np.array([s.phi_x])
    Y = np.array([s.phi_p])
    Z = np.array([s.phi_1])
    values, t_opt = _j0_batch(g, X, Y, Z, p, cfg)
    return float(values[0]), float(t_opt[0])


def iterate(v: ValueFunction, p: ModelParams, cfg: SolverConfig) -> ValueFunction:
    """One full sweep of J0 over the feasible grid nodes."""
    cfg = cfg.resolve(p)
    feas = feasible_mask(v.xs, v.ys, v.zs)
    XX, YY, ZZ = np.meshgrid(v.xs, v.ys, v.zs, indexing="ij")
    Xf, Yf, Zf = XX[feas], YY[feas], ZZ[feas]
    vals, _ = _j0_batch(v, Xf, Yf, Zf, p, cfg)
    vals = np.maximum(vals, -1.0 / p.c)
    vals = np.minimum(vals, v.values[feas])  # iterates are nonincreasing
    new = np.zeros_like(v.values)
    new[feas] = vals
    new = _fill_infeasible(v.xs, v.ys, v.zs, new, feas)
    return ValueFunction(v.xs, v.ys, v.zs, new, n=v.n + 1)


def extract_region(v: ValueFunction, eps: float) -> StoppingRegionGrid:
    feas = feasible_mask(v.xs, v.ys, v.zs)
    return StoppingRegionGrid(mask=v.values >= -eps, feasible=feas, n=v.n, eps=eps)


@dataclass
class SolveResult:
    v: ValueFunction
    iterates: list
    regions: list
    diagnostics: dict
    config: SolverConfig


def solve(p: ModelParams, cfg: SolverConfig | None = None,
          keep_iterates: bool = True) -> SolveResult:
    """Iterate ``v_{n+1} = J0 v_n`` from zero until the sup-norm change drops
    below ``eps_conv`` (or ``n_max`` sweeps).

    The geometric-series tail bounds the remaining gap to the fixed point by
    ``sup_change * (2 beta + rho) / rho``, reported in the diagnostics.
    """
    cfg = (cfg or SolverConfig()).resolve(p)
    t0 = time.perf_counter()
    v = ValueFunction.zeros(p, cfg)
    feas = feasible_mask(v.xs, v.ys, v.zs)
    iterates = [v]
    regions = [extract_region(v, cfg.eps_stop)]
    sup_history: list[float] = []
    converged = False
    q = 2.0 * p.beta / (2.0 * p.beta + p.rho)
    for _ in range(cfg.n_max):
        v_new = iterate(v, p, cfg)
        sup = float(np.max(np.abs(v_new.values[feas] - v.values[feas])))
        sup_history.append(sup)
        v = v_new
        if keep_iterates:
            iterates.append(v)
        regions.append(extract_region(v, cfg.eps_stop))
        if sup <= cfg.eps_conv:
            converged = True
            break
    wall = time.perf_counter() - t0
    ratios = [sup_history[i] / sup_history[i - 1]
              for i in range(1, len(sup_history)) if sup_history[i - 1] > 0]
    diagnostics = {
        "iterations": v.n,
        "converged": converged,
        "sup_history": sup_history,
        "contraction_ratios": ratios,
        "contraction_bound": q,
        "error_bound": (sup_history[-1] if sup_history else 0.0)
        * (2.0 * p.beta + p.rho) / p.rho,
        "wall_time_s": wall,
        "n_feasible_nodes": int(feas.sum()),
    }
    if not converged and ratios and ratios[-1] > 1.0:
        diagnostics["warning"] = "no contraction observed; grid extents may be mis-sized"
    if not keep_iterates:
        iterates = [v]
    return SolveResult(v=v, iterates=iterates, regions=regions,
                       diagnostics=diagnostics, config=cfg)


def hitting_time_r(v_next: ValueFunction, s: Statistic3, eps: float,
                   p: ModelParams, cfg: SolverConfig) -> float:
    """First time the flow from ``s`` enters ``{v_next >= -max(eps_stop, eps)}``.

    Scans the quadrature grid and refines by bisection to ``dt / 100``;
    returns ``math.inf`` when the flow never reaches the set before ``t_max``
    (the caller decides how to act on the never-alarm branch).
    """
    check_feasible(s)
    cfg = cfg.resolve(p)
    thr = -max(cfg.eps_stop, eps)
    us = cfg.dt * np.arange(int(round(cfg.t_max / cfg.dt)) + 1)
    xu, yu, zu = flow_xyz(us, s.phi_x, s.phi_p, s.phi_1, p)
    vals = v_next(xu, yu, zu)
    hits = vals >= thr
    if not hits.any():
        return math.inf
    k = int(np.argmax(hits))
    if k == 0:
        return 0.0
    lo, hi = us[k - 1], us[k]
    while hi - lo > cfg.dt / 100.0:
        mid = 0.5 * (lo + hi)
        xm, ym, zm = flow_xyz(mid, s.phi_x, s.phi_p, s.phi_1, p)
        if float(v_next(xm, ym, zm)) >= thr:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
