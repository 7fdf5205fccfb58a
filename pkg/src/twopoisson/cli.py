"""Command dispatch and artifact writing.

Subcommands: solve | bounds | simulate | evaluate | sweep.  Every artifact
starts with a full echo of the effective configuration and its content hash,
so outputs are self-describing and reruns with identical config and seed are
byte-identical (wall-clock timings go to a separate ``timings.txt`` that is
excluded from that contract).

Exit codes: 0 success, 2 configuration errors, 3 numerical non-convergence,
4 missing required artifact.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import policies as pol
from . import sim
from .config import ConfigError, RunConfig, load_config
from .model import ModelParams
from .solver import ValueFunction, feasible_mask, solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOCONV = 3
EXIT_MISSING = 4

VALUE_FILE = "value_function.tsv"
ITERATES_FILE = "value_iterates.npz"
REGIONS_FILE = "regions.tsv"
DIAG_FILE = "diagnostics.json"
TIMINGS_FILE = "timings.txt"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_lines(path: Path, lines) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _echo_dict(cfg: RunConfig) -> dict:
    d = {k: v for k, v in cfg.echo}
    d["config_hash"] = cfg.content_hash
    return d


# -- solve ----------------------------------------------------------------------


def _dump_value_function(path: Path, cfg: RunConfig, v: ValueFunction,
                         eps_stop: float) -> None:
    lines = cfg.header_lines()
    lines.append(f"# iterations = {v.n}")
    lines.append(f"# eps_stop = {_fmt(eps_stop)}")
    lines.append("phi_x\tphi_p\tphi_1\tvalue")
    vals = v.values
    for i, x in enumerate(v.xs):
        for j, y in enumerate(v.ys):
            for k, z in enumerate(v.zs):
                lines.append(f"{_fmt(x)}\t{_fmt(y)}\t{_fmt(z)}\t{_fmt(vals[i, j, k])}")
    _write_lines(path, lines)


def load_value_function(path: Path) -> tuple[ValueFunction, float]:
    """Rebuild a grid value function from its TSV dump."""
    rows = []
    n_iter = 0
    eps_stop = 1e-5
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                if line.startswith("# iterations"):
                    n_iter = int(line.split("=")[1])
                elif line.startswith("# eps_stop"):
                    eps_stop = float(line.split("=")[1])
                continue
            if not line or line.startswith("phi_x"):
                continue
            rows.append([float(v) for v in line.split("\t")])
    arr = np.asarray(rows)
    xs = np.unique(arr[:, 0])
    ys = np.unique(arr[:, 1])
    zs = np.unique(arr[:, 2])
    values = arr[:, 3].reshape(len(xs), len(ys), len(zs))
    return ValueFunction(xs, ys, zs, values, n=n_iter), eps_stop


def _dump_regions(path: Path, cfg: RunConfig, v: ValueFunction, eps_stop: float) -> None:
    """Boundary sample per phi_1 slice: smallest stop-ordinate per column."""
    feas = feasible_mask(v.xs, v.ys, v.zs)
    stop = v.values >= -eps_stop
    lines = cfg.header_lines()
    lines.append("phi_1\tphi_x\tphi_p_boundary")
    for k, z in enumerate(v.zs):
        for i, x in enumerate(v.xs):
            col = stop[i, :, k] & feas[i, :, k]
            if col.any():
                j = int(np.argmax(col))
                lines.append(f"{_fmt(z)}\t{_fmt(x)}\t{_fmt(v.ys[j])}")
    _write_lines(path, lines)


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    t0 = time.perf_counter()
    result = solve(cfg.params, cfg.solver)
    scfg = result.config
    _dump_value_function(out / VALUE_FILE, cfg, result.v, scfg.eps_stop)
    _dump_regions(out / REGIONS_FILE, cfg, result.v, scfg.eps_stop)
    stacked = np.stack([vf.values for vf in result.iterates])
    np.savez_compressed(
        out / ITERATES_FILE, xs=result.v.xs, ys=result.v.ys, zs=result.v.zs,
        values=stacked, eps_stop=scfg.eps_stop, config_hash=cfg.content_hash)
    diag = {k: v for k, v in result.diagnostics.items() if k != "wall_time_s"}
    diag.update(_echo_dict(cfg))
    _write_json(out / DIAG_FILE, diag)
    _write_lines(out / TIMINGS_FILE, [
        f"solve_wall_s = {result.diagnostics['wall_time_s']:.3f}",
        f"total_wall_s = {time.perf_counter() - t0:.3f}",
    ])
    if not result.diagnostics["converged"]:
        print("solve did not converge within the iteration cap", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


# -- bounds ---------------------------------------------------------------------


def cmd_bounds(cfg: RunConfig, out: Path) -> int:
    p = cfg.params
    report = bounds_mod.region_report(p)
    lines = cfg.header_lines()
    lines.append(f"case = {report.case.value}")
    lines.append(f"kappa = {_fmt(report.kappa)}")
    if report.mean_reversion is not None:
        lines.append(f"mean_reversion_x = {_fmt(report.mean_reversion[0])}")
        lines.append(f"mean_reversion_y = {_fmt(report.mean_reversion[1])}")
    if report.intersection is not None:
        lines.append(f"intersection_x = {_fmt(report.intersection[0])}")
        lines.append(f"intersection_y = {_fmt(report.intersection[1])}")
        lines.append(f"t_star = {_fmt(report.t_star)}")
        lines.append(f"x_star = {_fmt(report.x_star)}")
    for axis, (lo, hi) in zip("xyz", report.bounding_box):
        lines.append(f"box_{axis}_hi = {_fmt(hi)}")
    _write_lines(out / "region_report.txt", lines)
    poly = bounds_mod.boundary_polyline(p)
    poly_lines = cfg.header_lines() + ["phi_x\tphi_p"]
    poly_lines += [f"{_fmt(a)}\t{_fmt(b)}" for a, b in poly]
    _write_lines(out / "boundary.tsv", poly_lines)
    return EXIT_OK


# -- simulate / evaluate ----------------------------------------------------------


def _bind_policy(cfg: RunConfig, out: Path):
    """Policy object from config; loads solve artifacts when required."""
    p = cfg.params
    if cfg.policy == "threshold-sum":
        return pol.threshold_sum_policy(p), None
    if cfg.policy == "per-channel-min":
        return pol.per_channel_policy(p), None
    if cfg.policy == "value-region":
        path = out / VALUE_FILE
        if not path.exists():
            return None, f"missing value-function artifact {path}; run solve first"
        v, eps_stop = load_value_function(path)
        return pol.value_region_policy(v, eps_stop), None
    path = out / ITERATES_FILE
    if not path.exists():
        return None, f"missing value-iterates artifact {path}; run solve first"
    with np.load(path) as data:
        xs, ys, zs = data["xs"], data["ys"], data["zs"]
        stacked = data["values"]
        eps_stop = float(data["eps_stop"])
    n = min(cfg.policy_stages, stacked.shape[0] - 1)
    v_seq = [ValueFunction(xs, ys, zs, stacked[i], n=i) for i in range(1, n + 1)]
    return pol.build_eps_optimal(v_seq, cfg.policy_eps, cfg.params, cfg.solver), None


def _risk_payload(est: sim.RiskEstimate) -> dict:
    return {
        "risk": est.risk,
        "se": est.se,
        "false_alarm_rate": est.false_alarm_rate,
        "mean_delay": est.mean_delay,
        "n_reps": est.n_reps,
        "seed": est.seed,
        "censored_fraction": est.censored_fraction,
        "horizon": est.horizon,
    }


def _run_risk(cfg: RunConfig, out: Path, report_name: str,
              with_prediction: bool) -> int:
    policy, err = _bind_policy(cfg, out)
    if policy is None:
        print(err, file=sys.stderr)
        return EXIT_MISSING
    log: list | None = [] if cfg.log_replications else None
    est = sim.estimate_risk(policy, cfg.params, cfg.n_reps, cfg.horizon,
                            cfg.seed, cfg.solver, replication_log=log)
    payload = {"policy": cfg.policy, "estimate": _risk_payload(est)}
    payload.update(_echo_dict(cfg))
    if with_prediction and (out / VALUE_FILE).exists():
        v, _ = load_value_function(out / VALUE_FILE)
        pred = sim.predicted_risk(v, cfg.params.pi1, cfg.params.pi2, cfg.params)
        payload["predicted_risk"] = pred
        payload["predicted_minus_empirical"] = pred - est.risk
    _write_json(out / report_name, payload)
    if log is not None:
        lines = cfg.header_lines() + ["theta\ttau\tloss"]
        lines += [f"{_fmt(a)}\t{_fmt(b)}\t{_fmt(c)}" for a, b, c in log]
        _write_lines(out / "replications.tsv", lines)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    return _run_risk(cfg, out, "risk.json", with_prediction=False)


def cmd_evaluate(cfg: RunConfig, out: Path) -> int:
    return _run_risk(cfg, out, "report.json", with_prediction=True)


# -- sweep ----------------------------------------------------------------------


SWEEP_COLUMNS = (
    "sweep_value\tcase\tpredicted_risk\trisk_value_region\tse_value_region"
    "\trisk_threshold_sum\tse_threshold_sum\trisk_per_channel\tse_per_channel\tstatus"
)


def _sweep_row(cfg: RunConfig, value: float) -> str:
    from dataclasses import replace as dc_replace

    p0 = cfg.params
    kwargs = dict(alpha=p0.alpha, beta=p0.beta, lam=p0.lam, c=p0.c,
                  pi1=p0.pi1, pi2=p0.pi2, mode=p0.disc.mode)
    key = {"lambda": "lam"}.get(cfg.sweep_key, cfg.sweep_key)
    kwargs[key] = value
    p = ModelParams.make(**kwargs)
    case = bounds_mod.classify_case(p)
    solver_cfg = dc_replace(cfg.solver, extents=None)
    result = solve(p, solver_cfg)
    pred = sim.predicted_risk(result.v, p.pi1, p.pi2, p, stop_eps=0.0)
    vr = pol.value_region_policy(result.v, result.config.eps_stop)
    ests = [
        sim.estimate_risk(policy, p, cfg.n_reps, cfg.horizon, cfg.seed, result.config)
        for policy in (vr, pol.threshold_sum_policy(p), pol.per_channel_policy(p))
    ]
    cells = [_fmt(value), case.value, _fmt(pred)]
    for est in ests:
        cells += [_fmt(est.risk), _fmt(est.se)]
    cells.append("ok")
    return "\t".join(cells)


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    if cfg.sweep_key is None or not cfg.sweep_values:
        print("sweep requires sweep_key and sweep_values", file=sys.stderr)
        return EXIT_CONFIG
    path = out / "sweep.tsv"
    done: dict[str, str] = {}
    if path.exists():
        lines = path.read_text().splitlines()
        if any(line == f"# config_hash = {cfg.content_hash}" for line in lines):
            for line in lines:
                if line.startswith("#") or line.startswith("sweep_value") or not line:
                    continue
                done[line.split("\t", 1)[0]] = line
    rows = []
    failures = 0
    for value in cfg.sweep_values:
        key = _fmt(value)
        if key in done:
            rows.append(done[key])
            continue
        try:
            rows.append(_sweep_row(cfg, value))
        except Exception as exc:  # noqa: BLE001 - row isolation is the contract
            rows.append("\t".join([key] + ["nan"] * 8 + [f"error: {exc}"]))
            failures += 1
        _write_lines(path, cfg.header_lines() + [SWEEP_COLUMNS] + rows)
    _write_lines(path, cfg.header_lines() + [SWEEP_COLUMNS] + rows)
    return EXIT_OK if failures == 0 else 1


# -- dispatch -------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twopoisson",
        description="Two-channel Poisson disorder detection: solver, bounds, "
                    "simulation and policy evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "bounds", "simulate", "evaluate", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="path to the config file")
        sp.add_argument("--seed", type=int, default=None, help="override the seed")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--mode", choices=("rederived", "paper-literal"),
                        default=None, help="override the discount mode")
        sp.add_argument("--threads", type=int, default=1,
                        help="accepted for compatibility; sweeps are vectorized")
    return parser


COMMANDS = {
    "solve": cmd_solve,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, mode=args.mode)
    except FileNotFoundError as exc:
        print(f"config file not found: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return COMMANDS[args.command](cfg, out)


if __name__ == "__main__":
    sys.exit(main())
