"""Shared test oracles: independent numerical routes the implementations are
checked against.  Everything here deliberately avoids the closed forms under
test (Runge-Kutta on the raw ODE system, adaptive quadrature, dense scans)."""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad

from twopoisson.model import ModelParams


def rk4_flow(t, state, lam: float, a: float, n_steps: int = 20000):
    """Classic fixed-step RK4 on the inter-jump ODE system.

    Vectorized over a batch: ``t`` (m,) and ``state`` (m, 3); integrates each
    row with its own step ``t_i / n_steps``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    s = np.atleast_2d(np.asarray(state, dtype=float)).copy()
    h = (t / n_steps)[:, None]

    def rhs(v):
        return np.column_stack([
            lam * v[:, 1] + 2.0 * a * v[:, 0],
            2.0 * lam + a * v[:, 1],
            lam + a * v[:, 2],
        ])

    for _ in range(n_steps):
        k1 = rhs(s)
        k2 = rhs(s + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h * k2)
        k4 = rhs(s + h * k3)
        s = s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return s


def rk4_general_flow(t: float, state, gp, n_steps: int = 20000):
    """RK4 for the non-identical-channel system in (phi_x, phi_1, phi_2)."""
    s = np.asarray(state, dtype=float).copy()
    h = t / n_steps

    def rhs(v):
        x, p1, p2 = v
        return np.array([
            gp.lam2 * p1 + gp.lam1 * p2 + (gp.a1 + gp.a2) * x,
            gp.lam1 + gp.a1 * p1,
            gp.lam2 + gp.a2 * p2,
        ])

    for _ in range(n_steps):
        k1 = rhs(s)
        k2 = rhs(s + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h * k2)
        k4 = rhs(s + h * k3)
        s = s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return s


def quad_discounted_cost(phi0: float, phi1: float, p: ModelParams, rho: float,
                         kappa: float | None = None, upper: float = np.inf) -> float:
    """Adaptive quadrature of the discounted deterministic running cost."""
    from twopoisson.model import flow_xyz

    kappa = p.kappa if kappa is None else kappa

    def f(s):
        x, y, _ = flow_xyz(s, phi0, phi1, 0.0, p)
        return np.exp(-rho * s) * (float(x) + float(y) - kappa)

    val, _ = quad(f, 0.0, upper, limit=500)
    return val


def random_manifold_state(rng, scale: float = 3.0):
    """Feasible on-manifold state from two nonnegative per-channel odds."""
    o1, o2 = rng.uniform(0.0, scale, size=2)
    return o1 * o2, o1 + o2, o1


def channel_odds_path(traj, p: ModelParams, times):
    """Per-channel odds at given times via the scalar odds recursion.

    Independent of the 3-D statistic code path: evolves each channel's odds
    with its own exponential flow and multiplicative jump.
    """
    import math

    out = np.zeros((len(times), 2))
    for ch in (1, 2):
        jt = traj.times[traj.labels == ch]
        for k, t in enumerate(times):
            phi = 0.0 if p.pi1 == 0 and ch == 1 else None
            # generic start from the prior odds
            pi = p.pi1 if ch == 1 else p.pi2
            phi = pi / (1.0 - pi)
            t_prev = 0.0
            for tj in jt:
                if tj > t:
                    break
                phi = _odds_flow_scalar(tj - t_prev, phi, p.lam, p.a)
                phi *= p.alpha / p.beta
                t_prev = tj
            phi = _odds_flow_scalar(t - t_prev, phi, p.lam, p.a)
            out[k, ch - 1] = phi
    return out


def _odds_flow_scalar(t: float, phi: float, lam: float, a: float) -> float:
    import math

    if abs(a) < 1e-14:
        return phi + lam * t
    return -lam / a + math.exp(a * t) * (phi + lam / a)
