"""Command line entry point: ``flowee <subcommand> --config cell.json ...``.

Data goes to ``--out`` (stdout when omitted), diagnostics to stderr. Any
error raised by the model exits with status 1, bad usage with status 2.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

from flowee.config import CellConfig, ConfigError, load_config
from flowee.fixed_point import ConvergenceError, solve_heterogeneous, state_metrics
from flowee.flow_level import evaluate_policy
from flowee.optimizer import local_policy, optimize_policy, optimize_state
from flowee.simulator import SimConfig, simulate
from flowee.state_space import CellState, StateIndex

SWEEP_HEADER = ["sweep_value", "eta_local_bits_per_joule", "eta_global_bits_per_joule",
                "blocking_local", "blocking_global", "policy_json"]
SWEEP_VARIABLES = ("traffic_scale", "power", "b")
SWEEP_MODES = ("local", "global", "both")


@dataclass(frozen=True)
class SweepSpec:
    """One swept variable with its values.

    ``traffic_scale`` multiplies every arrival rate, ``power`` sets the
    upper power bound p_max, ``b`` sets the static power.
    """

    variable: str
    values: tuple[float, ...]
    mode: str = "both"

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep: variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        if self.mode not in SWEEP_MODES:
            raise ConfigError(f"sweep: mode must be one of {SWEEP_MODES}, got {self.mode!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigError("sweep: 'values' must be nonempty")
        if not all(math.isfinite(v) and v > 0 for v in vals):
            raise ConfigError("sweep: every value must be positive")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        if not isinstance(d, dict):
            raise ConfigError("sweep: expected an object")
        unknown = set(d) - {"variable", "values", "mode"}
        if unknown:
            raise ConfigError(f"sweep: unknown key(s) {sorted(unknown)}")
        for key in ("variable", "values"):
            if key not in d:
                raise ConfigError(f"sweep: missing key {key!r}")
        if not isinstance(d["values"], list):
            raise ConfigError("sweep: key 'values' must be a list")
        return cls(d["variable"], tuple(d["values"]), d.get("mode", "both"))

    def apply(self, config: CellConfig, value: float) -> CellConfig:
        if self.variable == "traffic_scale":
            return config.scaled_traffic(value)
        if self.variable == "b":
            return replace(config, b=value)
        if value <= config.optimizer.p_min:
            raise ConfigError(f"sweep: power value {value} is not above p_min")
        return replace(config, optimizer=replace(config.optimizer, p_max=value))


def load_sweep(path) -> SweepSpec:
    with open(path) as fh:
        try:
            return SweepSpec.from_dict(json.load(fh))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"{what}: expected comma separated numbers, got {text!r}") from None


def _fmt(x) -> str:
    return repr(float(x))


def sweep_rows(config: CellConfig, spec: SweepSpec, log=None):
    """Yield one CSV row per sweep value, in input order."""
    for value in spec.values:
        t0 = time.perf_counter()
        cfg = spec.apply(config, value)
        row = {"sweep_value": _fmt(value)}
        local = None
        if spec.mode in ("local", "both"):
            local = local_policy(cfg)
            ev = evaluate_policy(local, cfg)
            row["eta_local_bits_per_joule"] = _fmt(ev.eta_hat)
            row["blocking_local"] = _fmt(ev.blocking_probability)
            row["policy_json"] = local.to_json()
        if spec.mode in ("global", "both"):
            res = optimize_policy(cfg, seed_policy=local)
            row["eta_global_bits_per_joule"] = _fmt(res.objective)
            row["blocking_global"] = _fmt(res.blocking_probability)
            row["policy_json"] = res.policy.to_json()
            if not res.feasible and log:
                print(f"warning: no feasible policy found at {value} "
                      f"(blocking {res.blocking_probability:.4g})", file=log)
        if log:
            print(f"sweep {spec.variable}={value:g} done in {time.perf_counter() - t0:.1f}s", file=log)
        yield [row.get(k, "") for k in SWEEP_HEADER]


def run_sweep(config: CellConfig, spec: SweepSpec, out, log=None):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    rows = []
    for r in sweep_rows(config, spec, log):
        w.writerow(r)
        out.flush()
        rows.append(r)
    return rows


# --- subcommands -------------------------------------------------------------

def cmd_solve_state(args, config, out):
    state = CellState.parse(args.state)
    powers = _floats(args.power, "--power")
    if len(state) != config.m_zones or len(powers) != config.m_zones:
        raise ConfigError(f"--state and --power need {config.m_zones} entries")
    if state.is_empty:
        raise ConfigError("--state must have at least one user")
    sol = solve_heterogeneous(state, powers, config.zones, config.curve, config.traffic)
    m = state_metrics(state, powers, config.zones, config.curve, config.traffic, config.b, solution=sol)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["quantity"] + [z.label for z in config.zones])
    w.writerow(["phi"] + [_fmt(x) for x in sol.phi])
    w.writerow(["r_active_bps"] + [_fmt(x) for x in sol.r_active])
    w.writerow(["total_throughput_bps", _fmt(m.total_throughput)])
    w.writerow(["mean_power_w", _fmt(m.total_power)])
    w.writerow(["eta_bits_per_joule", _fmt(m.eta)])
    print(f"fixed point: {sol.iterations} iterations, residual {sol.residual:.3g}", file=sys.stderr)


def cmd_local_opt(args, config, out):
    index = StateIndex(config.m_zones, config.n_max)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["state", "powers_w", "eta_bits_per_joule"])
    for s in index.nonempty():
        p, v = optimize_state(s, config)
        w.writerow([s.to_text(), ",".join(_fmt(x) for x in p), _fmt(v)])


def cmd_global_opt(args, config, out):
    res = optimize_policy(config)
    json.dump({
        "eta_hat_bits_per_joule": res.objective,
        "blocking_probability": res.blocking_probability,
        "feasible": res.feasible,
        "epsilon": config.epsilon,
        "evaluations": res.evaluations,
        "trace": res.trace,
        "policy": res.policy.to_dict(),
    }, out, indent=2)
    out.write("\n")
    if not res.feasible:
        print(f"warning: blocking {res.blocking_probability:.4g} exceeds epsilon {config.epsilon}",
              file=sys.stderr)


def cmd_simulate(args, config, out):
    if args.policy:
        from flowee.flow_level import PowerPolicy

        with open(args.policy) as fh:
            data = json.load(fh)
        policy = PowerPolicy.from_dict(data.get("policy", data))
    else:
        policy = local_policy(config)
    policy.validate(StateIndex(config.m_zones, config.n_max), config.p_min, config.p_max)
    sim = SimConfig(horizon=args.horizon, warmup=args.warmup, seed=args.seed,
                    replications=args.replications)
    res = simulate(policy, config, sim, trace_path=args.trace)
    json.dump({
        "seed": args.seed,
        "horizon_s": args.horizon,
        "warmup_s": args.warmup,
        "replications": args.replications,
        "events": int(res.events),
        "offered": int(res.offered),
        "blocked": int(res.blocked),
        "blocking": float(res.empirical_blocking),
        "blocking_se": float(res.blocking_se),
        "eta_hat_bits_per_joule": float(res.empirical_eta),
        "eta_se": float(res.eta_se),
        "pi": {s.to_text(): float(p) for s, p in zip(res.index.states, res.empirical_pi)},
        "pi_se": {s.to_text(): float(p) for s, p in zip(res.index.states, res.pi_se)},
    }, out, indent=2)
    out.write("\n")


def cmd_sweep(args, config, out):
    run_sweep(config, load_sweep(args.spec), out, log=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowee", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="cell configuration JSON")
    common.add_argument("--out", default="-", help="output file (default: stdout)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-state", parents=[common], help="fixed point of one state")
    p.add_argument("--state", required=True, help='users per zone, e.g. "2,1"')
    p.add_argument("--power", required=True, help='watts per zone, e.g. "0.01,0.02"')
    p.set_defaults(func=cmd_solve_state)

    p = sub.add_parser("local-opt", parents=[common], help="per-state optimal powers")
    p.set_defaults(func=cmd_local_opt)

    p = sub.add_parser("global-opt", parents=[common], help="policy maximizing eta-hat")
    p.set_defaults(func=cmd_global_opt)

    p = sub.add_parser("simulate", parents=[common], help="discrete-event simulation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float, required=True, help="simulated seconds")
    p.add_argument("--warmup", type=float, default=0.0)
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--policy", help="policy JSON (global-opt output); default: local policy")
    p.add_argument("--trace", help="write an event trace CSV of the first replication")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="local vs global over a parameter")
    p.add_argument("--spec", required=True, help="sweep JSON: variable, values, mode")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        buf = io.StringIO()
        args.func(args, config, buf)
    except (ConfigError, ConvergenceError, ValueError, OSError) as e:
        print(f"flowee: error: {e}", file=sys.stderr)
        return 1
    if args.out == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(args.out).write_text(buf.getvalue())
    return 0


if __name__ == "__main__":
    sys.exit(main())
