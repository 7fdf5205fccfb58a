"""Plain-text run configuration: schema, parsing, and the RunConfig container.

The configuration format is one ``key = value`` pair per line with ``#``
comments.  Unknown keys are rejected so typos cannot silently change a run.
The effective configuration (file plus command-line overrides) is echoed into
every output artifact together with a content hash, which is also what the
sweep command uses to decide whether existing rows can be reused.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

from .model import DiscountMode, ModelParams
from .solver import SolverConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_pairs", "SCHEMA"]

MODES = {m.value: m for m in DiscountMode}
POLICIES = ("threshold-sum", "per-channel-min", "value-region", "eps-optimal")


class ConfigError(Exception):
    pass


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


# key -> (parser, required, default)
SCHEMA: dict = {
    "alpha": (float, True, None),
    "beta": (float, True, None),
    "lambda": (float, True, None),
    "c": (float, True, None),
    "pi1": (float, False, 0.0),
    "pi2": (float, False, 0.0),
    "mode": (str, False, "rederived"),
    "nx": (int, False, 48),
    "ny": (int, False, 48),
    "nz": (int, False, 32),
    "dt": (float, False, None),
    "t_max": (float, False, None),
    "eps_stop": (float, False, None),
    "eps_conv": (float, False, 1e-6),
    "n_max": (int, False, 200),
    "spacing": (str, False, "uniform"),
    "x_hi": (float, False, None),
    "y_hi": (float, False, None),
    "z_hi": (float, False, None),
    "policy": (str, False, "threshold-sum"),
    "policy_eps": (float, False, 0.01),
    "policy_stages": (int, False, 3),
    "n_reps": (int, False, 10_000),
    "horizon": (float, False, None),
    "seed": (int, False, 0),
    "log_replications": (_parse_bool, False, False),
    "sweep_key": (str, False, None),
    "sweep_values": (_parse_floats, False, None),
}

SWEEPABLE = ("alpha", "beta", "lambda", "c", "pi1", "pi2")


def parse_pairs(text: str) -> dict:
    """Raw key/value pairs from config text; unknown keys are an error."""
    pairs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    solver: SolverConfig
    policy: str
    policy_eps: float
    policy_stages: int
    n_reps: int
    horizon: float | None
    seed: int
    log_replications: bool
    sweep_key: str | None
    sweep_values: tuple | None
    echo: tuple
    content_hash: str

    def header_lines(self) -> list[str]:
        lines = [f"# {k} = {v}" for k, v in self.echo]
        lines.append(f"# config_hash = {self.content_hash}")
        return lines


def _typed(pairs: dict) -> dict:
    values: dict = {}
    for key, (parser, required, default) in SCHEMA.items():
        if key in pairs:
            try:
                values[key] = parser(pairs[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {pairs[key]!r} ({exc})")
        elif required:
            raise ConfigError(f"missing required key {key!r}")
        else:
            values[key] = default
    return values


def build_config(pairs: dict, *, seed: int | None = None,
                 mode: str | None = None) -> RunConfig:
    """Typed RunConfig from raw pairs plus command-line overrides."""
    effective = dict(pairs)
    if seed is not None:
        effective["seed"] = str(seed)
    if mode is not None:
        effective["mode"] = mode
    values = _typed(effective)

    if values["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {sorted(MODES)}, got {values['mode']!r}")
    if values["policy"] not in POLICIES:
        raise ConfigError(f"policy must be one of {POLICIES}, got {values['policy']!r}")
    if values["sweep_key"] is not None and values["sweep_key"] not in SWEEPABLE:
        raise ConfigError(f"sweep_key must be one of {SWEEPABLE}")

    try:
        params = ModelParams.make(
            alpha=values["alpha"], beta=values["beta"], lam=values["lambda"],
            c=values["c"], pi1=values["pi1"], pi2=values["pi2"],
            mode=MODES[values["mode"]],
        )
    except ValueError as exc:
        raise ConfigError(str(exc))

    extents = None
    if any(values[k] is not None for k in ("x_hi", "y_hi", "z_hi")):
        if not all(values[k] is not None for k in ("x_hi", "y_hi", "z_hi")):
            raise ConfigError("extent overrides need all of x_hi, y_hi, z_hi")
        extents = ((0.0, values["x_hi"]), (0.0, values["y_hi"]), (0.0, values["z_hi"]))
    solver = SolverConfig(
        nx=values["nx"], ny=values["ny"], nz=values["nz"], extents=extents,
        dt=values["dt"], t_max=values["t_max"], eps_stop=values["eps_stop"],
        eps_conv=values["eps_conv"], n_max=values["n_max"], spacing=values["spacing"],
    )

    echo_pairs = tuple(sorted((k, _canon(values[k])) for k in SCHEMA
                              if values[k] is not None))
    digest = hashlib.sha256(
        "\n".join(f"{k} = {v}" for k, v in echo_pairs).encode()
    ).hexdigest()[:16]
    return RunConfig(
        params=params,
        solver=solver,
        policy=values["policy"],
        policy_eps=values["policy_eps"],
        policy_stages=values["policy_stages"],
        n_reps=values["n_reps"],
        horizon=values["horizon"],
        seed=values["seed"],
        log_replications=values["log_replications"],
        sweep_key=values["sweep_key"],
        sweep_values=values["sweep_values"],
        echo=echo_pairs,
        content_hash=digest,
    )


def _canon(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return " ".join(repr(v) for v in value)
    return str(value)


def load_config(path, *, seed: int | None = None, mode: str | None = None) -> RunConfig:
    text = Path(path).read_text()
    return build_config(parse_pairs(text), seed=seed, mode=mode)
