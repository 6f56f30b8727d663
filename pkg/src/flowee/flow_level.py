"""Stationary distribution of the flow-level model and global efficiency.

Users arrive in zone c as a Poisson stream of rate lambda_c, download a
file of mean size S and are blocked once N_max users are present. The
product-form weight of a state s is

    N(s)! / prod N_c!  *  prod_c  Omega_c^N_c / prod_{j=1..N_c} mu_c(s with N_c = j)

with Omega_c = S lambda_c and mu_c(s) = N_c phi_c(s) R_a:c(s) the
aggregate zone-c throughput in state s.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import lgamma, log
from typing import Iterable, Mapping

import numpy as np
from scipy import linalg

from flowee.fixed_point import (
    ConvergenceError,
    FixedPointSolution,
    StateMetrics,
    solve_heterogeneous,
    state_metrics,
)
from flowee.state_space import CellState, StateIndex


class PowerPolicy(Mapping):
    """Per-state power vectors, one watt value per zone, for every nonempty state."""

    def __init__(self, powers: Mapping):
        self._p = {CellState(s): np.array(v, dtype=float) for s, v in powers.items()}
        for v in self._p.values():
            v.setflags(write=False)

    def __getitem__(self, state):
        return self._p[CellState(state)]

    def __iter__(self):
        return iter(self._p)

    def __len__(self):
        return len(self._p)

    @classmethod
    def constant(cls, states: Iterable, powers) -> "PowerPolicy":
        return cls({s: powers for s in states if any(s)})

    def updated(self, state, powers) -> "PowerPolicy":
        d = dict(self._p)
        d[CellState(state)] = powers
        return PowerPolicy(d)

    def validate(self, index: StateIndex, p_min: float, p_max: float):
        for s in index.nonempty():
            if s not in self._p:
                raise ValueError(f"policy has no power vector for state {s.to_text()}")
            v = self._p[s]
            if v.shape != (index.m_zones,):
                raise ValueError(f"state {s.to_text()}: expected {index.m_zones} powers, got {v.shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"state {s.to_text()}: non-finite power")
            occupied = np.asarray(s) > 0
            if np.any(v[occupied] < p_min * (1 - 1e-12)) or np.any(v[occupied] > p_max * (1 + 1e-12)):
                raise ValueError(f"state {s.to_text()}: powers {v} outside [{p_min}, {p_max}]")

    def to_dict(self) -> dict:
        return {s.to_text(): [float(x) for x in v] for s, v in sorted(self._p.items())}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping) -> "PowerPolicy":
        return cls({CellState.parse(k): v for k, v in d.items()})

    def __repr__(self):
        return f"PowerPolicy({self.to_dict()})"


@dataclass(frozen=True)
class StationaryDistribution:
    index: StateIndex
    pi: np.ndarray
    log_gamma: float
    blocking_probability: float
    blocked_arrival_rate: float

    @property
    def gamma(self) -> float:
        return float(np.exp(self.log_gamma))

    def __getitem__(self, state) -> float:
        return float(self.pi[self.index.index(state)])


@dataclass(frozen=True)
class PolicyEvaluation:
    """Everything derived from one policy: per-state solutions, pi and eta-hat."""

    policy: PowerPolicy
    solutions: dict
    metrics: dict
    distribution: StationaryDistribution
    eta_hat: float

    @property
    def blocking_probability(self) -> float:
        return self.distribution.blocking_probability


def solve_states(policy: PowerPolicy, config, index: StateIndex):
    """Fixed point and metrics for every nonempty state under ``policy``."""
    solutions, metrics = {}, {}
    for s in index.nonempty():
        try:
            sol = solve_heterogeneous(s, policy[s], config.zones, config.curve, config.traffic)
        except ConvergenceError as e:
            raise ConvergenceError(f"state {s.to_text()}: {e}", e.residual, s) from e
        solutions[s] = sol
        metrics[s] = state_metrics(s, policy[s], config.zones, config.curve, config.traffic,
                                   config.b, solution=sol)
    return solutions, metrics


def zone_service_rates(state, solution: FixedPointSolution) -> np.ndarray:
    """mu_c(s) = N_c phi_c R_a:c, aggregate bits/s delivered to zone c."""
    return np.asarray(state, dtype=float) * solution.phi * solution.r_active


def distribution_from_solutions(index: StateIndex, solutions: Mapping, config) -> StationaryDistribution:
    """Product-form distribution from precomputed per-state fixed points.

    Weights are accumulated in the log domain; a zone with zero offered
    traffic gives probability zero to every state that has users in it.
    """
    omega = config.offered_traffic
    lams = config.arrival_rates
    log_omega = np.array([log(o) if o > 0 else -np.inf for o in omega])
    mu = {s: zone_service_rates(s, sol) for s, sol in solutions.items()}
    lw = np.empty(len(index))
    for k, s in enumerate(index.states):
        w = lgamma(s.total + 1) - sum(lgamma(n + 1) for n in s)
        for c, n in enumerate(s):
            if n == 0:
                continue
            if not np.isfinite(log_omega[c]):
                w = -np.inf
                break
            w += n * log_omega[c]
            for j in range(1, n + 1):
                w -= log(mu[s.with_count(c, j)][c])
        lw[k] = w
    top = np.max(lw)
    w = np.exp(lw - top)
    total = w.sum()
    pi = w / total
    p_block = float(pi[index.full()].sum())
    return StationaryDistribution(index, pi, float(top + np.log(total)), p_block,
                                  float(lams.sum() * p_block))


def stationary_distribution(policy: PowerPolicy, config, index: StateIndex | None = None) -> StationaryDistribution:
    index = index or StateIndex(config.m_zones, config.n_max)
    solutions, _ = solve_states(policy, config, index)
    return distribution_from_solutions(index, solutions, config)


def blocking(dist: StationaryDistribution, zones) -> tuple[float, float]:
    """Blocking probability (fraction of arrivals refused) and blocked arrivals per second."""
    p = float(dist.pi[dist.index.full()].sum())
    return p, float(sum(z.lam for z in zones) * p)


def efficiency_from_metrics(dist: StationaryDistribution, metrics: Mapping[CellState, StateMetrics]) -> float:
    return float(sum(dist[s] * m.eta for s, m in metrics.items()))


def evaluate_policy(policy: PowerPolicy, config, index: StateIndex | None = None) -> PolicyEvaluation:
    index = index or StateIndex(config.m_zones, config.n_max)
    solutions, metrics = solve_states(policy, config, index)
    dist = distribution_from_solutions(index, solutions, config)
    return PolicyEvaluation(policy, solutions, metrics, dist, efficiency_from_metrics(dist, metrics))


def global_efficiency(policy: PowerPolicy, config, index: StateIndex | None = None) -> float:
    """eta-hat: the pi-weighted mean of per-state efficiencies (the empty state adds 0)."""
    return evaluate_policy(policy, config, index).eta_hat


def generator_matrix(index: StateIndex, solutions: Mapping, config) -> np.ndarray:
    """Generator of the chain where each zone-c user leaves at rate phi_c R_a:c / S."""
    n = len(index)
    q = np.zeros((n, n))
    lams = config.arrival_rates
    for k, s in enumerate(index.states):
        if s.total < index.n_max:
            for c, lam in enumerate(lams):
                if lam > 0:
                    q[k, index.index(s.with_count(c, s[c] + 1))] += lam
        if not s.is_empty:
            mu = zone_service_rates(s, solutions[s]) / config.flow.file_bits
            for c, n_c in enumerate(s):
                if n_c > 0:
                    q[k, index.index(s.with_count(c, n_c - 1))] += mu[c]
        q[k, k] = -q[k].sum()
    return q


def markov_chain_distribution(policy: PowerPolicy, config, index: StateIndex | None = None) -> np.ndarray:
    """Exact stationary vector of :func:`generator_matrix`, by a linear solve.

    This is the law the discrete-event simulator samples from; it coincides
    with the product form for a single zone.
    """
    index = index or StateIndex(config.m_zones, config.n_max)
    solutions, _ = solve_states(policy, config, index)
    q = generator_matrix(index, solutions, config)
    a = q.T.copy()
    a[-1, :] = 1.0
    rhs = np.zeros(len(index))
    rhs[-1] = 1.0
    pi = linalg.solve(a, rhs)
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()
