"""Alarm rules: executable stopping policies on observed trajectories.

Four variants are provided.  ``ThresholdSumPolicy`` alarms when the posterior
odds ``phi_x + phi_p`` reach a level (the optimal rule whenever the
advantageous region is the continuation region).  ``PerChannelMinPolicy``
runs the two single-channel detection rules and alarms at the earlier one
(provably suboptimal, kept as a baseline).  ``ValueRegionPolicy`` alarms on
first entry of the statistic into the numerical stopping region of a solved
value function.  ``EpsOptimalPolicy`` implements the recursive jump-horizon
rule: before the first jump it waits for the flow to reach the zero set of
the n-stage value within a halved tolerance, and on a jump it recurses with
one stage fewer from the post-jump state; by construction it never alarms
after the n-th observed jump.

All policies replay trajectories offline.  The batch evaluator is vectorized
across trajectories; the scalar `alarm_time` wraps a batch of one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, init_statistic, flow_xyz, jump_xyz
from .solver import SolverConfig, ValueFunction
from .trajectory import Trajectory, TrajectoryBatch

__all__ = [
    "ThresholdSumPolicy",
    "PerChannelMinPolicy",
    "ValueRegionPolicy",
    "EpsOptimalPolicy",
    "Policy",
    "threshold_sum_policy",
    "per_channel_policy",
    "value_region_policy",
    "build_eps_optimal",
    "first_crossing",
    "alarm_time",
    "alarm_times_batch",
]

_BISECT_ITERS = 60
_SCAN_BLOCK = 64


@dataclass(frozen=True)
class ThresholdSumPolicy:
    level: float


@dataclass(frozen=True)
class PerChannelMinPolicy:
    level: float


@dataclass(frozen=True)
class ValueRegionPolicy:
    v: ValueFunction
    eps_stop: float


@dataclass(frozen=True)
class EpsOptimalPolicy:
    v_seq: tuple
    eps: float
    eps_stop: float

    @property
    def n_stages(self) -> int:
        return len(self.v_seq)


Policy = ThresholdSumPolicy | PerChannelMinPolicy | ValueRegionPolicy | EpsOptimalPolicy


def threshold_sum_policy(p: ModelParams) -> ThresholdSumPolicy:
    return ThresholdSumPolicy(level=p.kappa)


def per_channel_policy(p: ModelParams) -> PerChannelMinPolicy:
    # the single-channel problem has no doubled hazard, so its threshold is
    # lam/c in either discount mode
    return PerChannelMinPolicy(level=p.lam / p.c)


def value_region_policy(v: ValueFunction, eps_stop: float) -> ValueRegionPolicy:
    return ValueRegionPolicy(v=v, eps_stop=eps_stop)


def build_eps_optimal(v_seq, eps: float, p: ModelParams,
                      cfg: SolverConfig | None = None) -> EpsOptimalPolicy:
    """Bind the value-iterate sequence ``(v_1, ..., v_n)`` into the recursive
    epsilon-optimal rule with the per-recursion halving schedule."""
    v_seq = tuple(v_seq)
    if not v_seq:
        raise ValueError("eps-optimal policy needs at least one value iterate")
    if eps <= 0:
        raise ValueError("eps must be positive")
    cfg = (cfg or SolverConfig()).resolve(p)
    return EpsOptimalPolicy(v_seq=v_seq, eps=eps, eps_stop=cfg.eps_stop)


def _stage_threshold(policy: EpsOptimalPolicy, stage: int) -> float:
    n = policy.n_stages
    if n == 1:
        eps_j = policy.eps
    else:
        eps_j = policy.eps / 2.0 ** min(stage + 1, n - 1)
    return max(policy.eps_stop, eps_j)


def _scan_interval(p: ModelParams, cfg: SolverConfig | None) -> float:
    if cfg is not None and cfg.dt is not None:
        return cfg.dt
    return min(0.01, 0.05 / (p.rho + 2.0 * p.beta))


# -- crossing solvers along the deterministic flow -----------------------------


def _sum_stationary(x, y, p: ModelParams):
    """Interior stationary time of t -> x(t)+y(t), NaN where there is none."""
    lam, a = p.lam, p.a
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if abs(a) < 1e-10 * (p.lam + p.alpha + p.beta):
        return np.full(np.broadcast(x, y).shape, np.nan)
    la = lam / a
    A = x + la * y + la * la
    B = y * (1.0 - la) + 2.0 * la - 2.0 * la * la
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.where(A != 0.0, -B / (2.0 * A), -1.0)
        tv = np.where(uv > 0.0, np.log(np.maximum(uv, 1e-300)) / a, np.nan)
    return np.where(tv > 0.0, tv, np.nan)


def _bisect_sum_geq(x, y, lo, hi, level, p: ModelParams):
    """Earliest t in [lo, hi] with x(t)+y(t) >= level, monotone bracket."""
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        xm, ym, _ = flow_xyz(mid, x, y, 0.0, p)
        ge = xm + ym >= level
        hi = np.where(ge, mid, hi)
        lo = np.where(ge, lo, mid)
    return hi


def _first_crossing_batch(x, y, cap, level: float, p: ModelParams) -> np.ndarray:
    """First t in [0, cap] with the flow's sum at ``level``; inf if none.

    The sum has at most one interior stationary point, so it is bisected on
    (at most two) monotone pieces.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cap = np.broadcast_to(np.asarray(cap, dtype=float), x.shape).copy()
    out = np.full(x.shape, np.inf)
    done = x + y >= level
    out[done] = 0.0
    act = ~done & (cap > 0)
    if not act.any():
        return out
    tv = _sum_stationary(x, y, p)
    split = act & np.isfinite(tv) & (tv < cap)
    b1 = np.where(split, np.where(np.isfinite(tv), tv, cap), cap)
    xb, yb, _ = flow_xyz(np.where(act, b1, 0.0), x, y, 0.0, p)
    s_b1 = xb + yb
    hit1 = act & (s_b1 >= level)
    if hit1.any():
        idx = np.nonzero(hit1)[0]
        out[idx] = _bisect_sum_geq(x[idx], y[idx], np.zeros(idx.size), b1[idx], level, p)
    rem = act & split & ~hit1
    if rem.any():
        xc, yc, _ = flow_xyz(np.where(rem, cap, 0.0), x, y, 0.0, p)
        hit2 = rem & (xc + yc >= level)
        if hit2.any():
            idx = np.nonzero(hit2)[0]
            out[idx] = _bisect_sum_geq(x[idx], y[idx], tv[idx], cap[idx], level, p)
    return out


def first_crossing(s, p: ModelParams, level: float | None = None) -> float:
    """Earliest time the flow's sum from ``s`` reaches ``level`` (default kappa).

    Bracketing + bisection on the (piecewise monotone) closed-form flow;
    returns ``math.inf`` when the sum never reaches the level.
    """
    level = p.kappa if level is None else level
    x, y = float(s.phi_x), float(s.phi_p)
    if x + y >= level:
        return 0.0
    lam, a = p.lam, p.a

    def sum_at(t: float) -> float:
        xt, yt, _ = flow_xyz(t, x, y, 0.0, p)
        return float(xt + yt)

    tv = float(_sum_stationary(np.array([x]), np.array([y]), p)[0])
    if a < 0:
        # bounded path: the sum's supremum is max(stationary value, limit)
        la = lam / a
        limit = la * la - 2.0 * la
        peak = sum_at(tv) if np.isfinite(tv) else -math.inf
        if peak < level and limit <= level:
            return math.inf
    # bracket a finite cap with sum(cap) >= level, then bisect the pieces
    cap = tv if np.isfinite(tv) and sum_at(tv) >= level else None
    if cap is None:
        cap = max(1.0, 2.0 * tv if np.isfinite(tv) else 1.0)
        while sum_at(cap) < level:
            cap *= 2.0
            if cap > 1e12:
                return math.inf
    t = _first_crossing_batch(np.array([x]), np.array([y]), np.array([cap]), level, p)[0]
    return float(t)


def _odds_crossing(phi, thr: float, p: ModelParams) -> np.ndarray:
    """First t with the scalar odds flow at ``thr``; the flow is monotone."""
    phi = np.asarray(phi, dtype=float)
    lam, a = p.lam, p.a
    out = np.full(phi.shape, np.inf)
    at_start = phi >= thr
    out[at_start] = 0.0
    need = ~at_start
    if not need.any():
        return out
    if abs(a) < 1e-10 * (p.lam + p.alpha + p.beta):
        out[need] = (thr - phi[need]) / lam
        return out
    num = thr + lam / a
    den = phi + lam / a
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
        t = np.where(ratio > 0, np.log(np.maximum(ratio, 1e-300)) / a, np.inf)
    out[need] = np.where(t[need] > 0, t[need], np.inf)
    return out


def _value_crossing_batch(vfun, X, Y, Z, cap, thr: float, p: ModelParams,
                          h: float) -> np.ndarray:
    """First t in [0, cap] with ``vfun(flow(t)) >= -thr_level``... see callers.

    ``thr`` is the (negative) threshold: crossing means value >= thr.  Scans
    at step ``h`` in blocks, then bisects the bracketing step.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    cap = np.broadcast_to(np.asarray(cap, dtype=float), X.shape)
    n = X.shape[0]
    out = np.full(n, np.inf)
    v0 = vfun(X, Y, Z)
    done = v0 >= thr
    out[done] = 0.0
    act_idx = np.nonzero(~done & (cap > 0))[0]
    block = 0
    while act_idx.size:
        offs = h * (block * _SCAN_BLOCK + np.arange(1, _SCAN_BLOCK + 1))
        # clamp scan points to each segment's end so the final partial step is
        # still examined; clamped duplicates are harmless (argmax takes the first)
        t_mat = np.minimum(offs[None, :], cap[act_idx][:, None])
        xs, ys, zs = flow_xyz(t_mat, X[act_idx][:, None], Y[act_idx][:, None],
                              Z[act_idx][:, None], p)
        hits = vfun(xs, ys, zs) >= thr
        any_hit = hits.any(axis=1)
        if any_hit.any():
            rows = np.nonzero(any_hit)[0]
            first = np.argmax(hits[rows], axis=1)
            g_idx = act_idx[rows]
            hi = t_mat[rows, first].astype(float)
            lo = np.where(first > 0, t_mat[rows, np.maximum(first - 1, 0)],
                          h * block * _SCAN_BLOCK).astype(float)
            for _ in range(_BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                xm, ym, zm = flow_xyz(mid, X[g_idx], Y[g_idx], Z[g_idx], p)
                ge = vfun(xm, ym, zm) >= thr
                hi = np.where(ge, mid, hi)
                lo = np.where(ge, lo, mid)
            out[g_idx] = hi
        finished = any_hit | (offs[-1] >= cap[act_idx])
        act_idx = act_idx[~finished]
        block += 1
    return out


# -- batch alarm engine --------------------------------------------------------


def _segment_crossing(policy: Policy, stage: int, X, Y, Z, cap,
                      p: ModelParams, h: float) -> np.ndarray:
    if isinstance(policy, ThresholdSumPolicy):
        return _first_crossing_batch(X, Y, cap, policy.level, p)
    if isinstance(policy, PerChannelMinPolicy):
        t1 = _odds_crossing(Z, policy.level, p)
        t2 = _odds_crossing(Y - Z, policy.level, p)
        return np.minimum(t1, t2)
    if isinstance(policy, ValueRegionPolicy):
        return _value_crossing_batch(policy.v, X, Y, Z, cap,
                                     -policy.eps_stop, p, h)
    if isinstance(policy, EpsOptimalPolicy):
        v_stage = policy.v_seq[policy.n_stages - 1 - stage]
        thr = -_stage_threshold(policy, stage)
        return _value_crossing_batch(v_stage, X, Y, Z, cap, thr, p, h)
    raise TypeError(f"unknown policy {policy!r}")


def alarm_times_batch(policy: Policy, batch: TrajectoryBatch, p: ModelParams,
                      cfg: SolverConfig | None = None) -> np.ndarray:
    """Alarm time of ``policy`` on every trajectory; ``inf`` where it never fires.

    The statistic is reconstructed segment by segment (flow between jumps,
    jump map at jumps) and the policy's crossing rule is solved within each
    segment, vectorized across trajectories.
    """
    h = _scan_interval(p, cfg)
    n, m = batch.n_traj, batch.max_jumps
    s0 = init_statistic(p.pi1, p.pi2)
    X = np.full(n, s0.phi_x)
    Y = np.full(n, s0.phi_p)
    Z = np.full(n, s0.phi_1)
    t_start = np.zeros(n)
    alarm = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    eps_opt = isinstance(policy, EpsOptimalPolicy)
    for j in range(m + 1):
        if not active.any():
            break
        jt = batch.times[:, j] if j < m else np.full(n, np.inf)
        seg_end = np.minimum(jt, batch.horizon)
        cap = np.maximum(seg_end - t_start, 0.0)
        idx = np.nonzero(active)[0]
        tc = np.full(n, np.inf)
        tc[idx] = _segment_crossing(policy, j, X[idx], Y[idx], Z[idx],
                                    cap[idx], p, h)
        hit = active & (tc <= cap)
        alarm[hit] = (t_start + tc)[hit]
        active &= ~hit
        if eps_opt and j == policy.n_stages - 1:
            # last stage: the rule stops at the stage-ending jump when one occurs
            force = active & (jt <= batch.horizon)
            alarm[force] = jt[force]
            break
        cont = active & (jt <= batch.horizon)
        active = cont
        if not cont.any():
            break
        # advance survivors to the jump time, then apply the jump map
        xf, yf, zf = flow_xyz(np.where(cont, cap, 0.0), X, Y, Z, p)
        X = np.where(cont, xf, X)
        Y = np.where(cont, yf, Y)
        Z = np.where(cont, zf, Z)
        is1 = cont & (batch.labels[:, j] == 1)
        is2 = cont & (batch.labels[:, j] == 2)
        if is1.any():
            X[is1], Y[is1], Z[is1] = jump_xyz(1, X[is1], Y[is1], Z[is1], p)
        if is2.any():
            X[is2], Y[is2], Z[is2] = jump_xyz(2, X[is2], Y[is2], Z[is2], p)
        t_start = np.where(cont, jt, t_start)
    return alarm


def alarm_time(policy: Policy, traj: Trajectory, p: ModelParams,
               cfg: SolverConfig | None = None) -> float:
    """Alarm time on a single trajectory; the horizon is the no-alarm sentinel."""
    batch = TrajectoryBatch.from_trajectories([traj])
    t = float(alarm_times_batch(policy, batch, p, cfg)[0])
    return min(t, traj.horizon)
