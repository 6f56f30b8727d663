"""SINR to throughput mapping.

The link-level rate table of a real LTE system is an external input, so a
curve is either a tabulated set of ``(sinr_db, rate_bps)`` points or a
truncated Shannon law ``min(k * W * log2(1 + rho), R_max)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_BANDWIDTH_HZ = 20e6
DEFAULT_EFFICIENCY = 0.6
DEFAULT_RATE_CAP_BPS = 100e6


@dataclass(frozen=True)
class ZoneConfig:
    """One annular zone of the cell: average noise and user arrival rate."""

    sigma2: float
    lam: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"zone {self.label!r}: sigma2 must be > 0, got {self.sigma2}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError(f"zone {self.label!r}: lambda must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class RateCurve:
    """Full-bandwidth throughput R(rho) as a function of linear SINR.

    Build with :meth:`analytic`, :meth:`from_table` or :meth:`from_csv`.
    Table curves interpolate linearly in the dB domain and clamp to the
    first/last rate outside the tabulated range; ``rho == 0`` always maps
    to zero throughput.
    """

    kind: str
    bandwidth: float = DEFAULT_BANDWIDTH_HZ
    efficiency: float = DEFAULT_EFFICIENCY
    rate_cap: float = DEFAULT_RATE_CAP_BPS
    sinr_db: tuple[float, ...] = field(default=())
    rates: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind == "analytic":
            if self.bandwidth <= 0 or self.efficiency <= 0 or self.rate_cap <= 0:
                raise ValueError("analytic curve needs bandwidth, efficiency and rate_cap > 0")
        elif self.kind == "table":
            x = np.asarray(self.sinr_db, dtype=float)
            y = np.asarray(self.rates, dtype=float)
            if x.ndim != 1 or x.size == 0 or x.shape != y.shape:
                raise ValueError("rate table needs matching, nonempty sinr_db and rate columns")
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise ValueError("rate table contains non-finite values")
            if np.any(np.diff(x) <= 0):
                raise ValueError("rate table sinr_db must be strictly increasing")
            if np.any(np.diff(y) < 0):
                raise ValueError("rate table rates must be nondecreasing")
            if y[0] < 0:
                raise ValueError("rate table rates must be nonnegative")
        else:
            raise ValueError(f"unknown rate curve kind {self.kind!r}")

    @classmethod
    def analytic(cls, bandwidth=DEFAULT_BANDWIDTH_HZ, efficiency=DEFAULT_EFFICIENCY,
                 rate_cap=DEFAULT_RATE_CAP_BPS) -> "RateCurve":
        return cls("analytic", bandwidth=float(bandwidth), efficiency=float(efficiency),
                   rate_cap=float(rate_cap))

    @classmethod
    def from_table(cls, sinr_db: Sequence[float], rates: Sequence[float]) -> "RateCurve":
        return cls("table", sinr_db=tuple(float(v) for v in sinr_db),
                   rates=tuple(float(v) for v in rates))

    @classmethod
    def from_csv(cls, path) -> "RateCurve":
        """Load a table with header ``sinr_db,rate_bps``."""
        with open(Path(path), newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["sinr_db", "rate_bps"]:
                raise ValueError(f"{path}: expected header 'sinr_db,rate_bps', got {reader.fieldnames}")
            xs, ys = [], []
            for row in reader:
                xs.append(float(row["sinr_db"]))
                ys.append(float(row["rate_bps"]))
        return cls.from_table(xs, ys)

    @property
    def saturation_rate(self) -> float:
        return self.rate_cap if self.kind == "analytic" else self.rates[-1]

    def __call__(self, rho):
        return throughput(self, rho)


def throughput(curve: RateCurve, rho):
    """Full-bandwidth throughput in bits/s for linear SINR ``rho`` (scalar or array)."""
    r = np.asarray(rho, dtype=float)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise ValueError("SINR must be >= 0")
    if curve.kind == "analytic":
        out = np.minimum(curve.efficiency * curve.bandwidth * np.log2(1.0 + r), curve.rate_cap)
    else:
        with np.errstate(divide="ignore"):
            r_db = 10.0 * np.log10(r)
        # np.interp clamps to the end values outside the table
        out = np.interp(r_db, curve.sinr_db, curve.rates)
        out = np.where(r > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def sinr(power, sigma2):
    """Linear SINR ``P / sigma^2``."""
    if np.any(np.asarray(power) < 0):
        raise ValueError("power must be >= 0")
    if np.any(np.asarray(sigma2) <= 0):
        raise ValueError("sigma2 must be > 0")
    return np.divide(power, sigma2)
