"""Command-line front end: ``cowsim <command> --config PATH``.

Configuration files are TOML (or JSON) with one table per record::

    [protocol]
    mu = 0.1
    pd = 1e-7          # all three of Bob's detectors

    [channel]
    alpha_ch = 0.2
    d = 50

    [eve]
    scheme = "usd2"
    epsilon = 0.002    # every mode overlap set to 1 - epsilon
    phase_deg = 1

Unspecified keys take the experimental defaults of the model records.  JSON
written by any command embeds the resolved scenario and can be fed back as a
config.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .feasibility import (
    PARTIAL_CONSTRAINTS,
    mixed_metrics,
    mu_grid,
    mu_max,
    no_attack_baseline,
    partial_attack,
)
from .mc import DEFAULT_CHUNK, deviations, simulate_attacked, simulate_partial
from .metrics import MetricsReport, NumericError, evaluate
from .model import (
    CONSTRAINTS,
    SEQUENCES,
    ChannelParams,
    EveParams,
    ProtocolParams,
    Scheme,
    Thresholds,
    ValidationError,
    validate,
)
from .usd import usd_statistics

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = ["Scenario", "McSettings", "SweepSpec", "load_config", "build_scenario", "scenario_to_flat",
           "sweep", "run", "main"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

DEFAULT_ETA_CH = 0.1
DEFAULT_EPSILON = 0.002
DEFAULT_ALPHA_CH = 0.2
DEFAULT_REF_M_MAX = 10 ** 6

_FLOAT, _INT, _STR, _LIST = "float", "int", "str", "list"
KEYS = {
    "protocol.mu": _FLOAT, "protocol.f": _FLOAT, "protocol.t_b": _FLOAT, "protocol.eta_b": _FLOAT,
    "protocol.pd": _FLOAT, "protocol.pd_data": _FLOAT, "protocol.pd_m1": _FLOAT, "protocol.pd_m2": _FLOAT,
    "channel.eta_ch": _FLOAT, "channel.alpha_ch": _FLOAT, "channel.d": _FLOAT,
    "eve.scheme": _STR, "eve.m_max": _INT, "eve.bs_t": _FLOAT, "eve.phase_deg": _FLOAT, "eve.phi": _FLOAT,
    "eve.delta": _FLOAT, "eve.eta_e": _FLOAT, "eve.pd_e": _FLOAT, "eve.epsilon": _FLOAT,
    "eve.t1": _FLOAT, "eve.t2": _FLOAT, "eve.t3": _FLOAT, "eve.t4": _FLOAT,
    "thresholds.qber_th": _FLOAT, "thresholds.vis_th": _FLOAT,
    "thresholds.constraints": _LIST, "thresholds.partial_constraints": _LIST,
    "mc.rounds": _INT, "mc.seed": _INT, "mc.shards": _INT,
}
# Setting one of these keys makes the listed keys meaningless.
_SUPERSEDES = {
    "eve.epsilon": ("eve.t1", "eve.t2", "eve.t3", "eve.t4"),
    "eve.phase_deg": ("eve.phi",),
    "eve.phi": ("eve.phase_deg",),
    "protocol.pd": ("protocol.pd_data", "protocol.pd_m1", "protocol.pd_m2"),
    "channel.eta_ch": ("channel.alpha_ch", "channel.d"),
    "channel.d": ("channel.eta_ch",),
    "channel.alpha_ch": ("channel.eta_ch",),
}


class ConfigError(ValidationError):
    pass


@dataclass(frozen=True)
class McSettings:
    rounds: int = 10 ** 6
    seed: Optional[int] = None
    shards: int = 1


@dataclass(frozen=True)
class Scenario:
    protocol: ProtocolParams = ProtocolParams()
    channel: ChannelParams = ChannelParams(eta_ch=DEFAULT_ETA_CH)
    eve: EveParams = EveParams.with_epsilon(DEFAULT_EPSILON)
    thresholds: Thresholds = Thresholds()
    partial_thresholds: Thresholds = Thresholds(constraint_set=PARTIAL_CONSTRAINTS)
    mc: McSettings = McSettings()
    flat: dict = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class SweepSpec:
    """Grid over one dotted config key."""

    param: str
    start: float
    stop: float
    points: int
    scale: str = "linear"

    def validate(self) -> list[str]:
        out = []
        if self.param not in KEYS or KEYS[self.param] not in (_FLOAT, _INT):
            out.append(f"cannot sweep {self.param!r}")
        if not self.start < self.stop:
            out.append("sweep needs from < to")
        if not (isinstance(self.points, int) and self.points >= 2):
            out.append("sweep needs points >= 2")
        if self.scale not in ("linear", "log"):
            out.append("scale must be linear or log")
        elif self.scale == "log" and not self.start > 0:
            out.append("log scale needs from > 0")
        return out

    def values(self) -> list:
        problems = self.validate()
        if problems:
            raise ConfigError(problems)
        if self.scale == "log":
            grid = np.logspace(math.log10(self.start), math.log10(self.stop), self.points)
        else:
            grid = np.linspace(self.start, self.stop, self.points)
        if KEYS[self.param] == _INT:
            return [int(round(v)) for v in grid]
        return [float(v) for v in grid]


# --------------------------------------------------------------------------
# Configuration


def _flatten(doc: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def read_config(path) -> dict:
    """Parse a TOML or JSON config into a flat ``{dotted.key: value}`` dict."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    try:
        if path.suffix.lower() == ".json":
            doc = json.loads(text) if text.strip() else {}
        else:
            doc = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError([f"cannot parse config {path}: {exc}"]) from None
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a key-value document"])
    if isinstance(doc.get("scenario"), dict):
        doc = doc["scenario"]
    return _flatten(doc)


def _coerce(key: str, value, errors: list):
    kind = KEYS[key]
    if kind == _STR:
        if not isinstance(value, str):
            errors.append(f"{key} must be a string")
        return value
    if kind == _LIST:
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
            errors.append(f"{key} must be a list of names")
            return None
        return tuple(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{key} must be a number")
        return None
    if kind == _INT:
        if isinstance(value, float) and not value.is_integer():
            errors.append(f"{key} must be an integer")
            return None
        return int(value)
    return float(value)


def build_scenario(flat: dict) -> Scenario:
    """Resolve defaults, expand convenience keys and validate every record."""
    errors = [f"unknown config key {k!r}" for k in flat if k not in KEYS]
    v = {k: _coerce(k, val, errors) for k, val in flat.items() if k in KEYS}
    if any(val is None for val in v.values()):
        raise ConfigError(errors)

    pd = v.get("protocol.pd", ProtocolParams.pd_data)
    protocol = ProtocolParams(
        mu=v.get("protocol.mu", ProtocolParams.mu),
        f=v.get("protocol.f", ProtocolParams.f),
        t_b=v.get("protocol.t_b", ProtocolParams.t_b),
        eta_b=v.get("protocol.eta_b", ProtocolParams.eta_b),
        pd_data=v.get("protocol.pd_data", pd),
        pd_m1=v.get("protocol.pd_m1", pd),
        pd_m2=v.get("protocol.pd_m2", pd),
    )

    has_loss = "channel.alpha_ch" in v or "channel.d" in v
    if "channel.eta_ch" in v and has_loss:
        errors.append("channel is ambiguous: give either eta_ch or (alpha_ch, d), not both")
    if has_loss:
        if "channel.d" not in v:
            errors.append("channel needs d together with alpha_ch")
        channel = ChannelParams(alpha_ch=v.get("channel.alpha_ch", DEFAULT_ALPHA_CH), d=v.get("channel.d"))
    else:
        channel = ChannelParams(eta_ch=v.get("channel.eta_ch", DEFAULT_ETA_CH))

    scheme = Scheme.USD1
    try:
        scheme = Scheme.parse(v.get("eve.scheme", "usd1"))
    except ValidationError as exc:
        errors.extend(exc.violations)
    if "eve.phase_deg" in v and "eve.phi" in v:
        errors.append("give either eve.phase_deg or eve.phi, not both")
    phi = v["eve.phi"] if "eve.phi" in v else math.radians(v.get("eve.phase_deg", 1.0))
    explicit_t = [k for k in ("eve.t1", "eve.t2", "eve.t3", "eve.t4") if k in v]
    if "eve.epsilon" in v and explicit_t:
        errors.append("give either eve.epsilon or explicit overlaps t1..t4, not both")
    kw = dict(m_max=v.get("eve.m_max", EveParams.m_max), bs_t=v.get("eve.bs_t", EveParams.bs_t), phi=phi,
              delta=v.get("eve.delta", EveParams.delta), eta_e=v.get("eve.eta_e", EveParams.eta_e),
              pd_e=v.get("eve.pd_e", EveParams.pd_e))
    if explicit_t:
        eve = EveParams(scheme=scheme, t1=v.get("eve.t1", 1.0), t2=v.get("eve.t2", 1.0),
                        t3=v.get("eve.t3"), t4=v.get("eve.t4"), **kw)
    else:
        eps = v.get("eve.epsilon", DEFAULT_EPSILON)
        if not 0 <= eps <= 1:
            errors.append("eve.epsilon out of [0,1]")
        eve = EveParams.with_epsilon(eps, scheme, **kw)

    def constraints(key, default):
        names = v.get(key)
        if names is None:
            return default
        names = frozenset(n.lower() for n in names)
        bad = names - CONSTRAINTS
        if bad:
            errors.append(f"{key}: unknown constraints {sorted(bad)} (known: {sorted(CONSTRAINTS)})")
        return names & CONSTRAINTS

    th = dict(qber_th=v.get("thresholds.qber_th", Thresholds.qber_th),
              vis_th=v.get("thresholds.vis_th", Thresholds.vis_th))
    thresholds = Thresholds(constraint_set=constraints("thresholds.constraints", Thresholds().constraint_set), **th)
    partial = Thresholds(constraint_set=constraints("thresholds.partial_constraints", PARTIAL_CONSTRAINTS), **th)

    mc = McSettings(rounds=v.get("mc.rounds", McSettings.rounds), seed=v.get("mc.seed"),
                    shards=v.get("mc.shards", McSettings.shards))
    if mc.rounds < 1:
        errors.append("mc.rounds must be >= 1")
    if mc.seed is not None and not 0 <= mc.seed < 2 ** 64:
        errors.append("mc.seed must be an unsigned 64-bit integer")
    if mc.shards < 1:
        errors.append("mc.shards must be >= 1")

    for name, record in (("protocol", protocol), ("channel", channel), ("eve", eve),
                         ("thresholds", thresholds), ("thresholds", partial)):
        for problem in validate(record):
            msg = f"{name}: {problem}"
            if msg not in errors:
                errors.append(msg)
    if errors:
        raise ConfigError(errors)
    return Scenario(protocol, channel, eve, thresholds, partial, mc, flat=dict(flat))


def load_config(path) -> Scenario:
    return build_scenario(read_config(path))


def with_override(flat: dict, key: str, value) -> dict:
    """Copy of ``flat`` with ``key`` set, dropping keys it supersedes."""
    if key not in KEYS:
        raise ConfigError([f"unknown config key {key!r}"])
    out = {k: val for k, val in flat.items() if k not in _SUPERSEDES.get(key, ())}
    out[key] = value
    return out


def scenario_to_flat(s: Scenario) -> dict:
    """Canonical flat form; feeding it back reproduces ``s`` exactly.

    The worker count is left out: it never changes a result.
    """
    p, c, e = s.protocol, s.channel, s.eve
    out = {f"protocol.{k}": getattr(p, k) for k in ("mu", "f", "t_b", "eta_b", "pd_data", "pd_m1", "pd_m2")}
    if c.eta_ch is not None:
        out["channel.eta_ch"] = c.eta_ch
    else:
        out["channel.alpha_ch"], out["channel.d"] = c.alpha_ch, c.d
    out["eve.scheme"] = e.scheme.value
    for k in ("m_max", "bs_t", "phi", "delta", "eta_e", "pd_e", "t1", "t2", "t3", "t4"):
        if getattr(e, k) is not None:
            out[f"eve.{k}"] = getattr(e, k)
    out["thresholds.qber_th"] = s.thresholds.qber_th
    out["thresholds.vis_th"] = s.thresholds.vis_th
    out["thresholds.constraints"] = sorted(s.thresholds.constraint_set)
    out["thresholds.partial_constraints"] = sorted(s.partial_thresholds.constraint_set)
    out["mc.rounds"] = s.mc.rounds
    if s.mc.seed is not None:
        out["mc.seed"] = s.mc.seed
    return out


# --------------------------------------------------------------------------
# Row builders

METRIC_COLUMNS = ["gain", "qber"] + [f"v{s}" for s in SEQUENCES] + ["v_ave"]
METRICS_HEADER = ["scheme", "mu", "f", "epsilon"] + METRIC_COLUMNS


def _scenario_columns(s: Scenario) -> dict:
    return dict(scheme=s.eve.scheme.value, mu=s.protocol.mu, f=s.protocol.f, epsilon=s.eve.epsilon)


def _metric_columns(m: MetricsReport, prefix: str = "") -> dict:
    return {f"{prefix}{name}": m.metric(name) for name in METRIC_COLUMNS}


def metrics_row(s: Scenario) -> dict:
    return {**_scenario_columns(s), **_metric_columns(evaluate(s.protocol, s.eve))}


def _relative(value, ref):
    if value is None or ref is None or ref == 0:
        return None
    return (value - ref) / ref


def sweep(scenario: Scenario, spec: SweepSpec, *, ref_m_max: int = DEFAULT_REF_M_MAX, shards: int = 1) -> list:
    """One row of closed-form metrics per grid point, in grid order.

    Sweeping ``eve.m_max`` adds ``d_<metric>`` columns: the relative
    difference to the same scenario at ``m_max = ref_m_max``.
    """
    values = spec.values()
    flats = [with_override(scenario.flat, spec.param, x) for x in values]
    scenarios = [build_scenario(f) for f in flats]
    rows = _map(metrics_row, scenarios, shards)
    for x, row in zip(values, rows):
        row[spec.param] = x
    if spec.param == "eve.m_max":
        ref = metrics_row(build_scenario(with_override(scenario.flat, "eve.m_max", ref_m_max)))
        for row in rows:
            for name in METRIC_COLUMNS:
                row[f"d_{name}"] = _relative(row[name], ref[name])
    return [{spec.param: r.pop(spec.param), **r} for r in rows]


def _map(fn, items, shards):
    if shards <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=shards) as pool:
        return list(pool.map(fn, items))


def simulate_row(s: Scenario, tau: Optional[float] = None) -> dict:
    if s.mc.seed is None:
        raise ConfigError(["simulate needs an explicit seed (--seed or mc.seed)"])
    u = usd_statistics(s.eve, s.protocol.mu)
    attacked = evaluate(s.protocol, s.eve)
    if tau is None:
        mc = simulate_attacked(s.protocol, u, s.eve, s.mc.rounds, s.mc.seed, shards=s.mc.shards)
        expected = attacked
    else:
        mc = simulate_partial(s.protocol, s.channel, u, s.eve, tau, s.mc.rounds, s.mc.seed, shards=s.mc.shards)
        expected = mixed_metrics(tau, attacked, no_attack_baseline(s.protocol, s.channel.transmittance))
    row = {**_scenario_columns(s), "tau_a": tau, "rounds": mc.rounds, "seed": mc.seed}
    z = deviations(mc, expected)
    for name, est in mc.estimates().items():
        row[f"mc_{name}"] = est.value
        row[f"se_{name}"] = est.se
        row[f"cf_{name}"] = expected.metric(name)
        row[f"z_{name}"] = z[name]
    return row


def feasibility_row(s: Scenario) -> dict:
    eta = s.channel.transmittance
    res = mu_max(s.protocol, s.eve, eta, s.thresholds)
    return {**_scenario_columns(s), "eta_ch": eta, "mu_max": res.mu_max, "k_max": res.k_max}


def partial_row(s: Scenario) -> dict:
    attacked = evaluate(s.protocol, s.eve)
    eta = s.channel.transmittance
    res = partial_attack(attacked, no_attack_baseline(s.protocol, eta), s.partial_thresholds)
    row = {**_scenario_columns(s), "eta_ch": eta, "tau_a": res.tau_a, "ext_k": res.ext_k}
    row.update(_metric_columns(res.mixed, prefix="mixed_"))
    return row


def grid_rows(scenario: Scenario, spec: SweepSpec, fn, shards: int = 1) -> list:
    values = spec.values()
    scenarios = [build_scenario(with_override(scenario.flat, spec.param, x)) for x in values]
    return [{spec.param: x, **row} for x, row in zip(values, _map(fn, scenarios, shards))]


# --------------------------------------------------------------------------
# Output


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))  # shortest exact round-trip
    return str(value)


def _json_value(value):
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (tuple, list)):
        return [_json_value(v) for v in value]
    return value


def format_rows(rows: list, fmt: str, *, command: str, scenario: Scenario, extra: Optional[dict] = None) -> str:
    if fmt == "json":
        doc = {"command": command, "version": __version__,
               "scenario": {k: _json_value(v) for k, v in scenario_to_flat(scenario).items()}}
        doc.update(extra or {})
        doc["rows"] = [{k: _json_value(v) for k, v in r.items()} for r in rows]
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    header = list(rows[0]) if rows else []
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([_cell(r.get(k)) for k in header])
    return buf.getvalue()


def _non_finite(rows) -> list:
    bad = []
    for i, r in enumerate(rows):
        for k, v in r.items():
            if isinstance(v, (float, np.floating)) and math.isnan(v):
                bad.append(f"row {i}: {k} is NaN")
    return bad


# --------------------------------------------------------------------------
# Entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cowsim", description="Zero-error USD attack analysis of COW QKD.")
    ap.add_argument("--version", action="version", version=f"cowsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "metrics": "closed-form gain, QBER and visibilities",
        "simulate": "Monte Carlo run compared with the closed forms",
        "sweep": "closed-form metrics over a parameter grid",
        "feasibility": "mu_max and K_max over a channel grid",
        "partial": "attackable fraction and extracted key over a grid",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="TOML or JSON scenario file")
        p.add_argument("--output", help="write here instead of standard output")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--shards", type=int, help="worker processes")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. eve.scheme=usd2")
        if name == "simulate":
            p.add_argument("--seed", type=int)
            p.add_argument("--rounds", type=int)
            p.add_argument("--tau", type=float, help="attack only this share of rounds")
        if name in ("sweep", "feasibility", "partial"):
            p.add_argument("--param")
            p.add_argument("--from", dest="start", type=float)
            p.add_argument("--to", dest="stop", type=float)
            p.add_argument("--points", type=int)
            p.add_argument("--scale", choices=("linear", "log"))
        if name == "sweep":
            p.add_argument("--ref-m-max", type=int, default=DEFAULT_REF_M_MAX,
                           help="reference m_max for relative differences in m_max sweeps")
    return ap


_GRID_DEFAULTS = {
    "feasibility": SweepSpec("channel.eta_ch", 1e-6, 10 ** -0.6, 25, "log"),
    "partial": SweepSpec("eve.epsilon", 1e-4, 1e-2, 21, "log"),
}


def _spec(args) -> SweepSpec:
    base = _GRID_DEFAULTS.get(args.command)
    if base is None and args.param is None:
        raise ConfigError(["sweep needs --param"])
    if base is None or (args.param is not None and args.param != base.param):
        missing = [flag for flag, v in (("--from", args.start), ("--to", args.stop), ("--points", args.points))
                   if v is None]
        if missing:
            raise ConfigError([f"grid over {args.param} needs {', '.join(missing)}"])
        return SweepSpec(args.param, args.start, args.stop, args.points, args.scale or "linear")
    return SweepSpec(
        base.param,
        base.start if args.start is None else args.start,
        base.stop if args.stop is None else args.stop,
        base.points if args.points is None else args.points,
        args.scale or base.scale,
    )


def _parse_set(items) -> dict:
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError([f"--set needs KEY=VALUE, got {item!r}"])
        key = key.strip()
        try:
            value = json.loads(raw)
        except ValueError:
            value = raw
        out[key] = value
    return out


def _execute(args) -> tuple[list, Scenario, dict]:
    flat = read_config(args.config)
    for key, value in _parse_set(args.set).items():
        flat = with_override(flat, key, value)
    if getattr(args, "seed", None) is not None:
        flat = with_override(flat, "mc.seed", args.seed)
    if getattr(args, "rounds", None) is not None:
        flat = with_override(flat, "mc.rounds", args.rounds)
    if args.shards is not None:
        flat = with_override(flat, "mc.shards", args.shards)
    s = build_scenario(flat)
    shards = s.mc.shards
    if args.command == "metrics":
        return [metrics_row(s)], s, {}
    if args.command == "simulate":
        return [simulate_row(s, args.tau)], s, {}
    spec = _spec(args)
    extra = {"grid": dict(param=spec.param, start=spec.start, stop=spec.stop, points=spec.points, scale=spec.scale)}
    if args.command == "sweep":
        return sweep(s, spec, ref_m_max=args.ref_m_max, shards=shards), s, extra
    fn = feasibility_row if args.command == "feasibility" else partial_row
    return grid_rows(s, spec, fn, shards), s, extra


def run(argv=None) -> int:
    """Run one command; returns the process exit code."""
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        rows, scenario, extra = _execute(args)
    except ValidationError as exc:
        for problem in exc.violations:
            print(f"cowsim: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError, OverflowError, ZeroDivisionError) as exc:
        print(f"cowsim: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    bad = _non_finite(rows)
    if bad:
        for problem in bad:
            print(f"cowsim: numeric failure: {problem}", file=sys.stderr)
        return EXIT_NUMERIC
    text = format_rows(rows, args.format, command=args.command, scenario=scenario, extra=extra)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main() -> None:
    sys.exit(run())
