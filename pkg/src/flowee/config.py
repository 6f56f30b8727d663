"""Cell configuration and its JSON file format.

Example file::

    {
      "zones": [{"sigma2_w": 1e-3, "lambda_per_s": 2.0, "label": "inner"}],
      "packet_bits": 20000, "packet_period_s": 1e-3,
      "file_bits": 8e6, "b_w": 0.1, "n_max": 4, "epsilon": 0.01,
      "p_min_w": 1e-3, "p_max_w": 10.0,
      "rate_curve": {"analytic": {"bandwidth_hz": 20e6, "efficiency": 0.6,
                                  "rate_cap_bps": 100e6}}
    }

``rate_curve`` may instead be ``{"table": "rates.csv"}``, a path relative to
the config file. An optional ``"optimizer"`` object sets
``points_per_decade``, ``rel_tol``, ``max_sweeps``, ``multistart``, ``seed``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from flowee.fixed_point import TrafficParams
from flowee.optimizer import OptimizerConfig
from flowee.rate_model import RateCurve, ZoneConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FlowParams:
    """Mean flow (file) size in bits and the tolerated blocking probability."""

    file_bits: float
    epsilon: float = 0.01

    def __post_init__(self):
        if not self.file_bits > 0:
            raise ValueError("file_bits must be > 0")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class CellConfig:
    zones: tuple[ZoneConfig, ...]
    traffic: TrafficParams
    flow: FlowParams
    b: float
    n_max: int
    curve: RateCurve = field(default_factory=RateCurve.analytic)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        object.__setattr__(self, "zones", tuple(self.zones))
        if not self.zones:
            raise ValueError("at least one zone is required")
        if not self.b >= 0:
            raise ValueError("b must be >= 0")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError("n_max must be an integer >= 1")

    @property
    def m_zones(self) -> int:
        return len(self.zones)

    @property
    def arrival_rates(self) -> np.ndarray:
        return np.array([z.lam for z in self.zones])

    @property
    def offered_traffic(self) -> np.ndarray:
        """Omega_c = S * lambda_c in bits/s."""
        return self.flow.file_bits * self.arrival_rates

    @property
    def epsilon(self) -> float:
        return self.flow.epsilon

    @property
    def p_min(self) -> float:
        return self.optimizer.p_min

    @property
    def p_max(self) -> float:
        return self.optimizer.p_max

    def scaled_traffic(self, factor: float) -> "CellConfig":
        """Copy with every zone's arrival rate multiplied by ``factor``."""
        zones = tuple(replace(z, lam=z.lam * factor) for z in self.zones)
        return replace(self, zones=zones)

    def with_arrival_rates(self, lams) -> "CellConfig":
        zones = tuple(replace(z, lam=float(l)) for z, l in zip(self.zones, lams, strict=True))
        return replace(self, zones=zones)


_TOP_KEYS = {"zones", "packet_bits", "packet_period_s", "file_bits", "b_w", "n_max",
             "epsilon", "p_min_w", "p_max_w", "rate_curve", "optimizer"}
_ZONE_KEYS = {"sigma2_w", "lambda_per_s", "label"}
_ANALYTIC_KEYS = {"bandwidth_hz", "efficiency", "rate_cap_bps"}
_OPT_KEYS = {"points_per_decade", "rel_tol", "max_sweeps", "multistart", "seed"}


def _number(d, key, where="config", integer=False):
    if key not in d:
        raise ConfigError(f"{where}: missing key {key!r}")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: key {key!r} must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}: key {key!r} must be an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{where}: key {key!r} must be finite")
    return int(v) if integer else float(v)


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def _curve(spec, base: Path) -> RateCurve:
    if spec is None:
        return RateCurve.analytic()
    _check_keys(spec, {"table", "analytic"}, "rate_curve")
    if len(spec) != 1:
        raise ConfigError("rate_curve: give exactly one of 'table' or 'analytic'")
    if "table" in spec:
        path = Path(spec["table"])
        if not path.is_absolute():
            path = base / path
        return RateCurve.from_csv(path)
    params = spec["analytic"] or {}
    _check_keys(params, _ANALYTIC_KEYS, "rate_curve.analytic")
    kw = {}
    for key, name in [("bandwidth_hz", "bandwidth"), ("efficiency", "efficiency"),
                      ("rate_cap_bps", "rate_cap")]:
        if key in params:
            kw[name] = _number(params, key, "rate_curve.analytic")
    return RateCurve.analytic(**kw)


def config_from_dict(data: dict, base: Path = Path(".")) -> CellConfig:
    """Build a CellConfig from the parsed JSON object, validating every key."""
    _check_keys(data, _TOP_KEYS, "config")
    if "zones" not in data:
        raise ConfigError("config: missing key 'zones'")
    if not isinstance(data["zones"], list) or not data["zones"]:
        raise ConfigError("config: 'zones' must be a nonempty list")
    zones = []
    for i, z in enumerate(data["zones"]):
        where = f"zones[{i}]"
        _check_keys(z, _ZONE_KEYS, where)
        label = z.get("label", f"zone{i + 1}")
        if not isinstance(label, str):
            raise ConfigError(f"{where}: key 'label' must be a string")
        try:
            zones.append(ZoneConfig(_number(z, "sigma2_w", where), _number(z, "lambda_per_s", where), label))
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"{where}: {e}") from e

    opt_kw = {}
    if "optimizer" in data:
        _check_keys(data["optimizer"], _OPT_KEYS, "optimizer")
        for key in _OPT_KEYS & set(data["optimizer"]):
            opt_kw[key] = _number(data["optimizer"], key, "optimizer",
                                  integer=key in {"points_per_decade", "max_sweeps", "multistart", "seed"})

    try:
        traffic = TrafficParams(_number(data, "packet_bits"), _number(data, "packet_period_s"))
        flow = FlowParams(_number(data, "file_bits"), _number(data, "epsilon"))
        opt = OptimizerConfig(p_min=_number(data, "p_min_w"), p_max=_number(data, "p_max_w"), **opt_kw)
        return CellConfig(zones=tuple(zones), traffic=traffic, flow=flow, b=_number(data, "b_w"),
                          n_max=_number(data, "n_max", integer=True),
                          curve=_curve(data.get("rate_curve"), base), optimizer=opt)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"config: {e}") from e


def load_config(path) -> CellConfig:
    path = Path(path)
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return config_from_dict(data, base=path.parent)


def config_to_dict(config: CellConfig) -> dict:
    """Inverse of :func:`config_from_dict` for analytic curves."""
    if config.curve.kind != "analytic":
        raise ValueError("only analytic rate curves serialize inline")
    opt = config.optimizer
    return {
        "zones": [{"sigma2_w": z.sigma2, "lambda_per_s": z.lam, "label": z.label} for z in config.zones],
        "packet_bits": config.traffic.packet_bits,
        "packet_period_s": config.traffic.packet_period,
        "file_bits": config.flow.file_bits,
        "b_w": config.b,
        "n_max": config.n_max,
        "epsilon": config.flow.epsilon,
        "p_min_w": opt.p_min,
        "p_max_w": opt.p_max,
        "rate_curve": {"analytic": {"bandwidth_hz": config.curve.bandwidth,
                                    "efficiency": config.curve.efficiency,
                                    "rate_cap_bps": config.curve.rate_cap}},
        "optimizer": {"points_per_decade": opt.points_per_decade, "rel_tol": opt.rel_tol,
                      "max_sweeps": opt.max_sweeps, "multistart": opt.multistart, "seed": opt.seed},
    }
