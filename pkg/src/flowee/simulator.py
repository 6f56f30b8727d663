"""Discrete-event simulation of flow-level arrivals, blocking and departures.

Each zone has an independent Poisson arrival stream; an arrival finding
N_max users is blocked. In state s every zone-c user leaves at rate
phi_c(s) R_a:c(s) / S, so the departure clock is redrawn after every state
change (exponential clocks are memoryless). Replication ``r`` uses the RNG
seeded with ``seed + r``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from flowee.flow_level import PowerPolicy, solve_states, zone_service_rates
from flowee.state_space import StateIndex


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    warmup: float = 0.0
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        if not (self.horizon > self.warmup >= 0):
            raise ValueError("need horizon > warmup >= 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


@dataclass
class SimResult:
    index: StateIndex
    empirical_pi: np.ndarray
    empirical_blocking: float
    empirical_eta: float
    pi_se: np.ndarray
    blocking_se: float
    eta_se: float
    offered: int = 0
    blocked: int = 0
    accepted: int = 0
    departures: int = 0
    in_system_end: int = 0
    events: int = 0
    per_replication: list = field(default_factory=list)

    def total_variation(self, pi) -> float:
        return 0.5 * float(np.abs(self.empirical_pi - np.asarray(pi)).sum())


class _Stream:
    """Buffered standard-exponential and uniform draws from one generator."""

    def __init__(self, rng, size=65536):
        self.rng = rng
        self.size = size
        self._e = rng.standard_exponential(size)
        self._u = rng.random(size)
        self._ie = 0
        self._iu = 0

    def exp(self, rate):
        if self._ie == self.size:
            self._e = self.rng.standard_exponential(self.size)
            self._ie = 0
        x = self._e[self._ie]
        self._ie += 1
        return x / rate

    def uniform(self):
        if self._iu == self.size:
            self._u = self.rng.random(self.size)
            self._iu = 0
        x = self._u[self._iu]
        self._iu += 1
        return x


def _run(index, dep_rates, lams, n_max, sim, seed, trace_writer=None):
    m = index.m_zones
    states = index.states
    # neighbour tables: arrival / departure target index per zone
    up = [[index.index(s.with_count(c, s[c] + 1)) if s.total < n_max else -1 for c in range(m)]
          for s in states]
    down = [[index.index(s.with_count(c, s[c] - 1)) if s[c] > 0 else -1 for c in range(m)]
            for s in states]
    dep_total = [float(sum(r)) for r in dep_rates]

    stream = _Stream(np.random.default_rng(seed))
    occupancy = np.zeros(len(index))
    offered = blocked = accepted = departures = events = 0
    t = 0.0
    k = index.index((0,) * m)
    next_arr = [t + stream.exp(l) if l > 0 else math.inf for l in lams]
    next_dep = math.inf

    while True:
        c_arr = min(range(m), key=next_arr.__getitem__)
        t_arr = next_arr[c_arr]
        t_next = min(t_arr, next_dep)
        lo, hi = max(t, sim.warmup), min(t_next, sim.horizon)
        if hi > lo:
            occupancy[k] += hi - lo
        if t_next >= sim.horizon:
            break
        t = t_next
        events += 1
        if t_arr <= next_dep:  # arrivals win ties
            counted = t >= sim.warmup
            offered += counted
            next_arr[c_arr] = t + stream.exp(lams[c_arr])
            target = up[k][c_arr]
            if target < 0:
                blocked += counted
                if trace_writer:
                    trace_writer.writerow([t, "blocked", c_arr, states[k].to_text()])
                continue
            accepted += 1
            k = target
            if trace_writer:
                trace_writer.writerow([t, "arrival", c_arr, states[k].to_text()])
        else:
            u = stream.uniform() * dep_total[k]
            rates = dep_rates[k]
            c = 0
            acc = rates[0]
            while (u >= acc or rates[c] == 0) and c < m - 1:
                c += 1
                acc += rates[c]
            departures += 1
            k = down[k][c]
            if trace_writer:
                trace_writer.writerow([t, "departure", c, states[k].to_text()])
        d = dep_total[k]
        next_dep = t + stream.exp(d) if d > 0 else math.inf

    occupancy /= sim.horizon - sim.warmup
    return dict(pi=occupancy, offered=offered, blocked=blocked, accepted=accepted,
                departures=departures, in_system=states[k].total, events=events)


def simulate(policy: PowerPolicy, config, sim: SimConfig, trace_path=None) -> SimResult:
    """Monte Carlo estimate of the state occupancy, blocking and eta-hat.

    ``trace_path`` writes a ``time,event,zone,state_after`` CSV of the first
    replication.
    """
    index = StateIndex(config.m_zones, config.n_max)
    solutions, metrics = solve_states(policy, config, index)
    dep_rates = []
    eta = np.zeros(len(index))
    for i, s in enumerate(index.states):
        if s.is_empty:
            dep_rates.append([0.0] * index.m_zones)
        else:
            dep_rates.append(list(zone_service_rates(s, solutions[s]) / config.flow.file_bits))
            eta[i] = metrics[s].eta
    lams = [float(x) for x in config.arrival_rates]

    reps = []
    for r in range(sim.replications):
        if trace_path is not None and r == 0:
            with open(trace_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["time", "event", "zone", "state_after"])
                out = _run(index, dep_rates, lams, config.n_max, sim, sim.seed + r, w)
        else:
            out = _run(index, dep_rates, lams, config.n_max, sim, sim.seed + r)
        out["blocking"] = out["blocked"] / out["offered"] if out["offered"] else 0.0
        out["eta"] = float(out["pi"] @ eta)
        reps.append(out)

    pis = np.array([o["pi"] for o in reps])
    blocks = np.array([o["blocking"] for o in reps])
    etas = np.array([o["eta"] for o in reps])
    n = len(reps)

    def se(x):
        return np.std(x, axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(np.mean(x, axis=0))

    return SimResult(
        index=index,
        empirical_pi=pis.mean(axis=0),
        empirical_blocking=float(blocks.mean()),
        empirical_eta=float(etas.mean()),
        pi_se=se(pis),
        blocking_se=float(se(blocks)),
        eta_se=float(se(etas)),
        offered=sum(o["offered"] for o in reps),
        blocked=sum(o["blocked"] for o in reps),
        accepted=sum(o["accepted"] for o in reps),
        departures=sum(o["departures"] for o in reps),
        in_system_end=sum(o["in_system"] for o in reps),
        events=sum(o["events"] for o in reps),
        per_replication=[{k: v for k, v in o.items() if k != "pi"} for o in reps],
    )
