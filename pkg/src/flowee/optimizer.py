"""Local (per-state) and global (whole-policy) power optimization.

Both searches are derivative-free: cyclic coordinate ascent over per-zone
powers, each coordinate scanned on a geometric grid and then refined by a
golden-section search in log-power between the neighbouring grid points.
The global objective is eta-hat minus a penalty on blocking above epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from flowee.fixed_point import solve_heterogeneous, state_metrics
from flowee.state_space import CellState, StateIndex

GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class OptimizerConfig:
    p_min: float = 1e-3
    p_max: float = 10.0
    points_per_decade: int = 8
    rel_tol: float = 1e-9
    max_sweeps: int = 30
    multistart: int = 2
    seed: int = 0
    refine: bool = True
    # explicit power levels replace the geometric grid (and disable refinement)
    levels: tuple[float, ...] | None = None
    penalty: float = 1e12
    golden_iters: int = 30

    def __post_init__(self):
        if not 0 < self.p_min < self.p_max:
            raise ValueError("power bounds need 0 < p_min < p_max")
        if self.points_per_decade < 4:
            raise ValueError("points_per_decade must be >= 4")
        if self.max_sweeps < 1 or self.multistart < 0:
            raise ValueError("max_sweeps must be >= 1 and multistart >= 0")
        if self.levels is not None:
            lv = tuple(sorted(float(x) for x in self.levels))
            if not lv or lv[0] <= 0:
                raise ValueError("levels must be positive")
            object.__setattr__(self, "levels", lv)

    def grid(self) -> np.ndarray:
        if self.levels is not None:
            return np.array(self.levels)
        decades = math.log10(self.p_max / self.p_min)
        n = max(int(math.ceil(decades * self.points_per_decade)) + 1, 2)
        return np.geomspace(self.p_min, self.p_max, n)

    @property
    def refining(self) -> bool:
        return self.refine and self.levels is None


@dataclass
class OptimizationResult:
    policy: "PowerPolicy"
    objective: float
    blocking_probability: float
    feasible: bool
    trace: list[float] = field(default_factory=list)
    penalized_objective: float = float("nan")
    evaluations: int = 0


# --- one-coordinate and coordinate-cyclic search ----------------------------

class _Counter:
    def __init__(self, f):
        self.f = f
        self.n = 0

    def __call__(self, x):
        self.n += 1
        return self.f(x)


def _better(a, b):
    """Strict improvement, ignoring floating-point noise."""
    if not np.isfinite(b):
        return a > b
    return a > b + 1e-12 * max(abs(a), abs(b), 1e-300)


def _golden(f1d, lo, hi, iters):
    """Maximize f1d on [lo, hi] in log space; returns (x, value)."""
    a, b = math.log(lo), math.log(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f1d(math.exp(c)), f1d(math.exp(d))
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f1d(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f1d(math.exp(d))
    return (math.exp(c), fc) if fc >= fd else (math.exp(d), fd)


def _line_search(f, x, fx, i, grid, refine, golden_iters):
    """Improve coordinate ``i`` of ``x``; ties on the grid go to the lowest power."""
    best_k, best_v = None, -np.inf
    for k, g in enumerate(grid):
        y = x.copy()
        y[i] = g
        v = f(y)
        if _better(v, best_v):
            best_k, best_v = k, v
    cand, cand_v = x[i], fx
    if _better(best_v, cand_v):
        cand, cand_v = grid[best_k], best_v
    if refine and best_k is not None and len(grid) > 1:
        lo = grid[max(best_k - 1, 0)]
        hi = grid[min(best_k + 1, len(grid) - 1)]

        def f1d(p):
            y = x.copy()
            y[i] = p
            return f(y)

        p, v = _golden(f1d, lo, hi, golden_iters)
        if _better(v, cand_v):
            cand, cand_v = p, v
    y = x.copy()
    y[i] = cand
    return y, cand_v


def coordinate_ascent(f: Callable, x0, coords, grid, refine=True, rel_tol=1e-9,
                      max_sweeps=30, golden_iters=30):
    """Cyclic coordinate ascent of ``f`` over the listed coordinates.

    Returns the final point, its value and the per-sweep objective trace,
    which is nondecreasing because a move is only taken on strict gain.
    """
    x = np.array(x0, dtype=float)
    fx = f(x)
    trace = [fx]
    for _ in range(max_sweeps):
        start = fx
        for i in coords:
            x, fx = _line_search(f, x, fx, i, grid, refine, golden_iters)
        trace.append(fx)
        if not fx > start + rel_tol * max(abs(start), 1e-300):
            break
    return x, fx, trace


# --- local optimization --------------------------------------------------------

def _state_objective(state, config):
    def f(p):
        return state_metrics(state, p, config.zones, config.curve, config.traffic, config.b).eta
    return f


_LOCAL_CACHE: dict = {}


def _local_key(state, config, opt):
    return (tuple(state), tuple(z.sigma2 for z in config.zones), config.curve, config.traffic,
            config.b, replace(opt, seed=0, multistart=0))


def optimize_state(state, config, opt: OptimizerConfig | None = None):
    """Power vector maximizing the efficiency of a single state, and that efficiency.

    Starts from the best common power on the grid, then runs coordinate
    ascent over the occupied zones. Empty zones are left at ``p_min``.
    """
    opt = opt or config.optimizer
    state = CellState(state)
    if state.is_empty:
        raise ValueError("cannot optimize the empty state")
    key = _local_key(state, config, opt)
    if key in _LOCAL_CACHE:
        p, v = _LOCAL_CACHE[key]
        return p.copy(), v
    f = _state_objective(state, config)
    grid = opt.grid()
    occupied = [j for j, n in enumerate(state) if n > 0]
    base = np.full(len(state), grid[0])
    best_x, best_v = None, -np.inf
    for g in grid:
        x = base.copy()
        x[occupied] = g
        v = f(x)
        if _better(v, best_v):
            best_x, best_v = x, v
    x, v, _ = coordinate_ascent(f, best_x, occupied, grid, refine=opt.refining,
                                rel_tol=opt.rel_tol, max_sweeps=opt.max_sweeps,
                                golden_iters=opt.golden_iters)
    _LOCAL_CACHE[key] = (x.copy(), v)
    return x, v


def local_policy(config, opt: OptimizerConfig | None = None):
    """Apply :func:`optimize_state` to every nonempty state independently."""
    from flowee.flow_level import PowerPolicy

    opt = opt or config.optimizer
    index = StateIndex(config.m_zones, config.n_max)
    return PowerPolicy({s: optimize_state(s, config, opt)[0] for s in index.nonempty()})


# --- global optimization -------------------------------------------------------

class _GlobalObjective:
    """Penalized eta-hat with per-state fixed points cached between candidate moves."""

    def __init__(self, config, index, policy, opt):
        from flowee.flow_level import solve_states

        self.config = config
        self.index = index
        self.opt = opt
        self.powers = {s: np.array(policy[s], dtype=float) for s in index.nonempty()}
        self.solutions, self.metrics = solve_states(policy, config, index)
        self.evaluations = 0

    def evaluate(self, solutions, metrics):
        from flowee.flow_level import distribution_from_solutions, efficiency_from_metrics

        dist = distribution_from_solutions(self.index, solutions, self.config)
        eta = efficiency_from_metrics(dist, metrics)
        violation = max(0.0, dist.blocking_probability - self.config.epsilon)
        return eta - self.opt.penalty * violation, eta, dist.blocking_probability

    def candidate(self, state, p):
        self.evaluations += 1
        cfg = self.config
        sol = solve_heterogeneous(state, p, cfg.zones, cfg.curve, cfg.traffic)
        m = state_metrics(state, p, cfg.zones, cfg.curve, cfg.traffic, cfg.b, solution=sol)
        solutions = dict(self.solutions)
        metrics = dict(self.metrics)
        solutions[state] = sol
        metrics[state] = m
        return self.evaluate(solutions, metrics)[0], sol, m

    def commit(self, state, p):
        _, sol, m = self.candidate(state, p)
        self.powers[state] = np.array(p, dtype=float)
        self.solutions[state] = sol
        self.metrics[state] = m

    def current(self):
        return self.evaluate(self.solutions, self.metrics)

    def policy(self):
        from flowee.flow_level import PowerPolicy

        return PowerPolicy(self.powers)


def _ascend(config, index, seed_policy, opt):
    obj = _GlobalObjective(config, index, seed_policy, opt)
    grid = opt.grid()
    trace = [obj.current()[0]]
    for _ in range(opt.max_sweeps):
        start = trace[-1]
        for s in index.nonempty():
            occupied = [j for j, n in enumerate(s) if n > 0]

            def f(p, s=s):
                return obj.candidate(s, p)[0]

            x, fx, _ = coordinate_ascent(f, obj.powers[s], occupied, grid, refine=opt.refining,
                                         rel_tol=opt.rel_tol, max_sweeps=1,
                                         golden_iters=opt.golden_iters)
            if not np.array_equal(x, obj.powers[s]):
                obj.commit(s, x)
        now = obj.current()[0]
        trace.append(now)
        if not now > start + opt.rel_tol * max(abs(start), 1e-300):
            break
    return obj, trace


def _random_policy(index, grid, rng):
    from flowee.flow_level import PowerPolicy

    m = index.m_zones
    return PowerPolicy({s: np.where(np.asarray(s) > 0, rng.choice(grid, size=m), grid[0])
                        for s in index.nonempty()})


def optimize_policy(config, opt: OptimizerConfig | None = None, seed_policy=None) -> OptimizationResult:
    """Maximize eta-hat subject to blocking <= epsilon over whole policies.

    Seeds are the local policy (or ``seed_policy``) plus ``opt.multistart``
    random grid policies; the best penalized result over all seeds wins, so
    the answer never scores below its local seed.
    """
    opt = opt or config.optimizer
    index = StateIndex(config.m_zones, config.n_max)
    seeds = [seed_policy if seed_policy is not None else local_policy(config, opt)]
    rng = np.random.default_rng(opt.seed)
    seeds += [_random_policy(index, opt.grid(), rng) for _ in range(opt.multistart)]

    best = None
    evaluations = 0
    for seed in seeds:
        obj, trace = _ascend(config, index, seed, opt)
        evaluations += obj.evaluations
        pen, eta, block = obj.current()
        if best is None or _better(pen, best[0]):
            best = (pen, eta, block, obj.policy(), trace)
    pen, eta, block, policy, trace = best
    return OptimizationResult(policy, eta, block, block <= config.epsilon, trace, pen, evaluations)
