"""Per-state activity fixed point, throughput, power and energy efficiency.

A user's queue is active with probability ``phi = min(R_p / R_a, 1)``
while its active throughput ``R_a`` is the full-bandwidth rate divided by
the number of simultaneously active users, averaged over the other users'
independent activity. The two definitions are solved jointly per zone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from flowee.rate_model import RateCurve, ZoneConfig, sinr, throughput

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000
DEFAULT_DAMPING = 0.5
# Picard sweeps before switching to Newton; near the overload boundary the
# plain iteration converges sublinearly.
PICARD_BUDGET = 50


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=float("nan"), state=None):
        super().__init__(message)
        self.residual = residual
        self.state = state


class ZoneStarvedError(ValueError):
    """A nonempty zone has zero full-bandwidth throughput."""


@dataclass(frozen=True)
class TrafficParams:
    packet_bits: float
    packet_period: float

    def __post_init__(self):
        if not (self.packet_bits > 0 and self.packet_period > 0):
            raise ValueError("packet_bits and packet_period must be > 0")

    @property
    def packet_rate(self) -> float:
        """R_p, the rate at which packets reach each user's queue (bits/s)."""
        return self.packet_bits / self.packet_period

    def packet_duration(self, r_active: float) -> float:
        """Average time to drain one packet at active throughput ``r_active``."""
        return self.packet_bits / r_active


@dataclass(frozen=True)
class FixedPointSolution:
    phi: np.ndarray
    r_active: np.ndarray
    converged: bool
    iterations: int
    residual: float


@dataclass(frozen=True)
class StateMetrics:
    total_throughput: float
    total_power: float
    eta: float


def activity_probability(r_active: float, traffic) -> float:
    """``min(R_p / r_active, 1)``; ``traffic`` is TrafficParams or R_p itself."""
    rp = traffic.packet_rate if isinstance(traffic, TrafficParams) else float(traffic)
    if r_active <= 0:
        raise ZoneStarvedError("zone starved: active throughput is zero")
    return min(rp / r_active, 1.0)


# --- activity-pattern sums -------------------------------------------------

@lru_cache(maxsize=4096)
def _patterns(counts: tuple[int, ...]):
    """All activity configurations (i_1..i_M), 0 <= i_j <= N_j, with their
    multinomial weight prod_j C(N_j, i_j)."""
    grid = np.array(list(product(*(range(n + 1) for n in counts))), dtype=float)
    grid = grid.reshape(-1, len(counts))
    coef = np.array([math.prod(math.comb(n, int(i)) for n, i in zip(counts, row))
                     for row in grid], dtype=float)
    return grid, coef, grid.sum(axis=1)


def _pattern_probs(counts, phi):
    grid, coef, total = _patterns(tuple(int(c) for c in counts))
    n = np.asarray(counts, dtype=float)
    p = np.asarray(phi, dtype=float)
    probs = coef * np.prod(p ** grid * (1.0 - p) ** (n - grid), axis=1)
    return probs, grid, total


def contention_share(counts: Sequence[int], zone: int, phi) -> float:
    """E[1 / (1 + other active users)] seen by an active user of ``zone``."""
    others = list(counts)
    if others[zone] < 1:
        raise ValueError(f"zone {zone} is empty")
    others[zone] -= 1
    probs, _, total = _pattern_probs(others, phi)
    return float(np.dot(probs, 1.0 / (1.0 + total)))


def active_throughput(counts: Sequence[int], rates, phi) -> np.ndarray:
    """Per-zone R_a for fixed activity probabilities; 0 for empty zones."""
    out = np.zeros(len(counts))
    for j, n in enumerate(counts):
        if n > 0:
            out[j] = rates[j] * contention_share(counts, j, phi)
    return out


def homogeneous_active_throughput(n_users: int, rate: float, phi: float) -> float:
    """Closed form of the single-zone sum: R (1 - (1-phi)^N) / (N phi)."""
    if phi == 0:
        return float(rate)
    return rate * (1.0 - (1.0 - phi) ** n_users) / (n_users * phi)


def mean_active_power(counts: Sequence[int], powers, phi) -> float:
    """Expected average power of the active users; the all-idle pattern adds nothing."""
    probs, grid, total = _pattern_probs(counts, phi)
    busy = total > 0
    avg = (grid[busy] @ np.asarray(powers, dtype=float)) / total[busy]
    return float(np.dot(probs[busy], avg))


# --- solvers ---------------------------------------------------------------

def solve_homogeneous(n_users: int, rho: float, curve: RateCurve, traffic: TrafficParams) -> FixedPointSolution:
    """Single zone, N users at SINR ``rho``.

    Since ``phi * R_a = R (1 - (1-phi)^N) / N``, the fixed point has the
    explicit solution ``phi = 1 - (1 - N R_p / R)^(1/N)`` below overload.
    """
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    if rho <= 0:
        raise ValueError("rho must be > 0")
    rate = throughput(curve, rho)
    if rate <= 0:
        raise ZoneStarvedError("zone starved: R(rho) is zero")
    load = n_users * traffic.packet_rate / rate
    phi = 1.0 if load >= 1.0 else 1.0 - (1.0 - load) ** (1.0 / n_users)
    ra = homogeneous_active_throughput(n_users, rate, phi)
    residual = abs(phi - activity_probability(ra, traffic))
    return FixedPointSolution(np.array([phi]), np.array([ra]), True, 0, residual)


def _map(counts, rates, rp, phi):
    ra = active_throughput(counts, rates, phi)
    target = np.zeros_like(phi)
    busy = ra > 0
    target[busy] = np.minimum(rp / ra[busy], 1.0)
    return target, ra


def _solve_zone(counts, rates, rp, phi, j):
    """Exact phi_j given the other zones' activity; phi_j * R_a:j is increasing in phi_j."""
    trial = phi.copy()

    def excess(x):
        trial[j] = x
        return x * rates[j] * contention_share(counts, j, trial) - rp

    if excess(1.0) <= 0:
        return 1.0
    return brentq(excess, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _nested_bisection(counts, rates, rp, phi, zones):
    """Solve the listed zones jointly, writing into ``phi``.

    The last zone's activity y is found by bisection on
    ``F_last(phi(y)) - y`` where the other zones are re-solved recursively
    for each trial y. That function is positive at y = 0, so either y = 1
    is consistent (overload) or [0, 1] brackets the root.
    """
    if len(zones) == 1:
        phi[zones[0]] = _solve_zone(counts, rates, rp, phi, zones[0])
        return phi
    last, inner = zones[-1], zones[:-1]

    def gap(y):
        phi[last] = y
        _nested_bisection(counts, rates, rp, phi, inner)
        target, _ = _map(counts, rates, rp, phi)
        return target[last] - y

    if gap(1.0) >= 0:
        return phi
    y = brentq(gap, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    gap(y)
    return phi


def _newton(counts, rates, rp, phi, busy, tol, max_steps=50):
    """Active-set Newton on phi_j R_a:j(phi) = R_p for the zones below overload.

    A zone is clamped at phi = 1 once its target R_p / R_a:j reaches 1 (the
    target only grows with phi_j, so it is then overloaded at phi_j = 1 too).
    Returns the iterate with the smallest fixed-point residual seen, and
    that residual.
    """
    phi = phi.copy()
    best, best_res = phi.copy(), np.inf
    for _ in range(max_steps):
        target, _ = _map(counts, rates, rp, phi)
        res = float(np.max(np.abs(target - phi)))
        if res < best_res:
            best, best_res = phi.copy(), res
        if res <= tol:
            break
        free = np.flatnonzero(busy & (target < 1.0))
        phi[busy & (target >= 1.0)] = 1.0
        if free.size == 0:
            continue

        def h(x):
            y = phi.copy()
            y[free] = x
            return y[free] * active_throughput(counts, rates, y)[free] - rp

        x = phi[free]
        hx = h(x)
        jac = np.empty((free.size, free.size))
        for k in range(free.size):
            step = 1e-7 * max(x[k], 1e-3)
            xk = x.copy()
            xk[k] = x[k] - step if x[k] + step > 1 else x[k] + step
            jac[:, k] = (h(xk) - hx) / (xk[k] - x[k])
        try:
            dx = np.linalg.solve(jac, -hx)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(dx)):
            break
        # overshoots are halved towards the boundary instead of clipped onto it
        nxt = x + dx
        nxt = np.where(nxt >= 1.0, 0.5 * (x + 1.0), nxt)
        nxt = np.where(nxt <= 0.0, 0.5 * x, nxt)
        phi[free] = nxt
    return best, best_res


def solve_heterogeneous(state, powers, zones: Sequence[ZoneConfig], curve: RateCurve,
                        traffic: TrafficParams, tol: float = DEFAULT_TOL,
                        max_iter: int = DEFAULT_MAX_ITER,
                        damping: float = DEFAULT_DAMPING) -> FixedPointSolution:
    """Joint activity/throughput fixed point for every zone of ``state``.

    Damped Picard iteration from phi = 1 (at most ``max_iter`` sweeps, and
    a short budget before switching), then an active-set Newton step that
    also polishes interior solutions to round-off. Near the overload
    boundary the system is badly conditioned; if Newton fails, nested
    bisection over the zones finishes the job. Raises ConvergenceError with
    the last residual if the result still misses ``tol``.
    """
    counts = tuple(int(c) for c in state)
    if len(counts) != len(zones) or len(powers) != len(zones):
        raise ValueError("state, powers and zones must have one entry per zone")
    if not any(counts):
        raise ValueError("no users: the fixed point is undefined for the empty state")
    powers = np.asarray(powers, dtype=float)
    if not np.all(np.isfinite(powers)):
        raise ValueError("powers must be finite")
    rates = np.zeros(len(counts))
    for j, (n, z) in enumerate(zip(counts, zones)):
        if n == 0:
            continue
        if powers[j] <= 0:
            raise ZoneStarvedError(f"zone {j} has {n} users but power {powers[j]}")
        rates[j] = throughput(curve, sinr(powers[j], z.sigma2))
        if rates[j] <= 0:
            raise ZoneStarvedError(f"zone {j} has zero throughput at power {powers[j]}")
    rp = traffic.packet_rate
    busy = np.array(counts) > 0
    phi = busy.astype(float)

    residual = np.inf
    it = 0
    while it < min(PICARD_BUDGET, max_iter):
        target, _ = _map(counts, rates, rp, phi)
        residual = float(np.max(np.abs(target - phi)))
        if residual <= tol:
            break
        phi = np.where(busy, (1 - damping) * phi + damping * target, 0.0)
        it += 1
    target, _ = _map(counts, rates, rp, phi)
    residual = float(np.max(np.abs(target - phi)))
    if residual > 0:
        # also polishes interior solutions Picard already brought within tol
        polished, res = _newton(counts, rates, rp, phi, busy, min(tol, 1e-13))
        if res < residual:
            phi, residual = polished, res
    if residual > tol:
        phi = _nested_bisection(counts, rates, rp, phi, list(np.flatnonzero(busy)))
        target, _ = _map(counts, rates, rp, phi)
        residual = float(np.max(np.abs(target - phi)))
    if residual > tol:
        raise ConvergenceError(f"fixed point for state {counts} did not converge "
                               f"(residual {residual:.3g})", residual, counts)
    ra = active_throughput(counts, rates, phi)
    return FixedPointSolution(phi, ra, True, it, residual)


def state_power(state, powers, solution: FixedPointSolution, b: float) -> float:
    """Average power drawn in ``state``: ``b`` plus the expected mean power of active users."""
    if not any(state):
        return float(b)
    return float(b) + mean_active_power(tuple(state), powers, solution.phi)


def state_metrics(state, powers, zones, curve, traffic, b, solution: FixedPointSolution | None = None) -> StateMetrics:
    """Total throughput, average power and energy efficiency of one state.

    The empty state carries no traffic: throughput 0, power ``b``, eta 0.
    """
    if not any(state):
        return StateMetrics(0.0, float(b), 0.0)
    if solution is None:
        solution = solve_heterogeneous(state, powers, zones, curve, traffic)
    counts = np.asarray(state, dtype=float)
    r_total = float(np.sum(counts * solution.phi * solution.r_active))
    p_total = state_power(state, powers, solution, b)
    return StateMetrics(r_total, p_total, r_total / p_total)
