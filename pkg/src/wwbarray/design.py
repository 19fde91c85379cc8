"""Constrained array design: simulated annealing over Tx/Rx positions.

The objective of a candidate is the FoV-averaged tightest bound at the
design SNR.  Moves perturb a single element and are projected back into
the feasible set, so every visited geometry satisfies the placement
constraints.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .bound import BoundError, FovSchedule, InnerOptConfig, averaged_cost
from .geometry import (ArrayGeometry, PlacementConstraints, check_constraints,
                       wavelength_from_frequency)

log = logging.getLogger(__name__)


class DesignError(RuntimeError):
    pass


@dataclass(frozen=True)
class DesignProblem:
    m: int
    n: int
    constraints: PlacementConstraints
    fov_schedule: FovSchedule
    design_snr_db: float
    wavelength: float = field(default_factory=wavelength_from_frequency)
    inner_cfg: InnerOptConfig = field(default_factory=InnerOptConfig)

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be >= 1")
        self.constraints.require_feasible(self.m, self.n)

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.design_snr_db / 10.0)

    def cost(self, geom: ArrayGeometry) -> float:
        return averaged_cost(geom, self.snr_linear, self.fov_schedule, self.inner_cfg)


@dataclass(frozen=True)
class OuterConfig:
    iterations: int = 1500
    restarts: int = 4
    cooling: float = 0.985
    step_start: float = 0.1  # fraction of the box width
    step_end: float = 0.002
    initial_temperature: float = 0.05  # fraction of the starting objective
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.iterations < 0 or self.restarts < 1:
            raise ValueError("iterations must be >= 0 and restarts >= 1")
        if not 0 < self.cooling <= 1:
            raise ValueError("cooling must lie in (0, 1]")
        if not (self.step_start > 0 and self.step_end > 0):
            raise ValueError("step fractions must be > 0")


class TraceEntry(NamedTuple):
    restart: int
    iteration: int
    objective: float  # nan when the candidate could not be evaluated
    accepted: bool
    best: float
    geometry: ArrayGeometry


@dataclass(frozen=True)
class DesignResult:
    geometry: ArrayGeometry
    objective: float
    trace: Tuple[TraceEntry, ...]
    seed: int
    problem: DesignProblem
    outer_cfg: OuterConfig
    restart: int = 0


def _stick_breaking(count: int, lower: float, upper: float, sep: float,
                    rng: np.random.Generator) -> np.ndarray:
    slack = (upper - lower) - (count - 1) * sep
    gaps = rng.dirichlet(np.ones(count + 1))
    pos = lower + slack * np.cumsum(gaps[:-1]) + sep * np.arange(count)
    return pos


def initial_feasible(problem: DesignProblem, rng: np.random.Generator) -> ArrayGeometry:
    """Random strictly feasible geometry from Dirichlet gap proportions."""
    c = problem.constraints
    c.require_feasible(problem.m, problem.n)
    for _ in range(100):
        tx = _stick_breaking(problem.m, c.tx_lower, c.tx_upper, c.tx_min_sep, rng)
        rx = _stick_breaking(problem.n, c.rx_lower, c.rx_upper, c.rx_min_sep, rng)
        try:
            geom = ArrayGeometry(tuple(tx), tuple(rx), problem.wavelength)
        except ValueError:
            continue
        if not check_constraints(geom, c):
            return geom
    raise DesignError("could not draw a strictly feasible geometry")


def _gap_ok(pos: np.ndarray, i: int, x: float, sep: float, lower: float, upper: float) -> bool:
    # same arithmetic as the constraint checker, so rounding cannot slip through
    if i > 0 and not x - pos[i - 1] > sep:
        return False
    if i < len(pos) - 1 and not pos[i + 1] - x > sep:
        return False
    return lower < x < upper


def _clamp_feasible(pos: np.ndarray, i: int, x: float, sep: float, lower: float,
                    upper: float) -> Optional[float]:
    """Clamp ``x`` into the feasible open interval for element ``i``; None if it has no room."""
    lo = lower if i == 0 else pos[i - 1] + sep
    hi = upper if i == len(pos) - 1 else pos[i + 1] - sep
    eps = 1e-9 * max(hi - lo, 0.0)
    a = np.nextafter(lo + eps, np.inf)
    b = np.nextafter(hi - eps, -np.inf)
    if not a < b:
        return None
    y = float(min(max(x, a), b))
    mid = 0.5 * (a + b)
    for _ in range(64):
        if _gap_ok(pos, i, y, sep, lower, upper):
            return y
        y = float(np.nextafter(y, mid))
    return None


def propose_move(geom: ArrayGeometry, step_scale: float, constraints: PlacementConstraints,
                 rng: np.random.Generator) -> ArrayGeometry:
    """Gaussian move of one uniformly chosen element, projected to stay feasible."""
    tx = np.array(geom.tx_positions)
    rx = np.array(geom.rx_positions)
    i = int(rng.integers(tx.size + rx.size))
    step = step_scale * rng.standard_normal()
    if i < tx.size:
        pos, j, sep, lower, upper = tx, i, constraints.tx_min_sep, constraints.tx_lower, constraints.tx_upper
    else:
        pos, j, sep, lower, upper = rx, i - tx.size, constraints.rx_min_sep, constraints.rx_lower, constraints.rx_upper
    if step == 0:
        return geom
    new = _clamp_feasible(pos, j, pos[j] + step, sep, lower, upper)
    if new is None:
        return geom
    pos[j] = new
    return ArrayGeometry(tuple(tx), tuple(rx), geom.wavelength)


def _evaluate(problem: DesignProblem, geom: ArrayGeometry) -> float:
    try:
        return problem.cost(geom)
    except BoundError as exc:
        log.warning("candidate rejected: %s", exc)
        return float("nan")


def _run_restart(problem: DesignProblem, cfg: OuterConfig, restart: int) -> DesignResult:
    rng = np.random.default_rng([cfg.seed, restart])
    geom = initial_feasible(problem, rng)
    f = _evaluate(problem, geom)
    if not np.isfinite(f):
        raise DesignError("objective of the initial geometry could not be evaluated")
    best_geom, best_f = geom, f
    trace = [TraceEntry(restart, 0, f, True, f, geom)]
    c = problem.constraints
    width = 0.5 * (c.tx_width + c.rx_width)
    temp = cfg.initial_temperature * f
    iters = cfg.iterations
    ratio = cfg.step_end / cfg.step_start
    failures = 0
    for it in range(1, iters + 1):
        frac = cfg.step_start * ratio ** ((it - 1) / max(iters - 1, 1))
        cand = propose_move(geom, frac * width, c, rng)
        fc = _evaluate(problem, cand)
        coin = rng.random()
        if np.isfinite(fc):
            accept = fc <= f or (temp > 0 and coin < np.exp(-(fc - f) / temp))
        else:
            accept = False
            failures += 1
        if accept:
            geom, f = cand, fc
            if f < best_f:
                best_geom, best_f = geom, f
        trace.append(TraceEntry(restart, it, fc, accept, best_f, cand))
        temp *= cfg.cooling
    if iters and failures == iters:
        raise DesignError("every candidate failed to evaluate")
    return DesignResult(best_geom, best_f, tuple(trace), cfg.seed, problem, cfg, restart)


def optimize_array(problem: DesignProblem, outer_cfg: OuterConfig | None = None) -> DesignResult:
    """Best geometry over ``restarts`` independent annealing chains.

    Chains are seeded from ``(seed, restart)``; the result (and the merged
    trace) does not depend on ``workers``.
    """
    cfg = outer_cfg or OuterConfig()
    if cfg.workers > 1 and cfg.restarts > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_run_restart, [problem] * cfg.restarts, [cfg] * cfg.restarts,
                                  range(cfg.restarts)))
    else:
        results = [_run_restart(problem, cfg, r) for r in range(cfg.restarts)]
    winner = min(results, key=lambda res: (res.objective, res.restart))
    trace = tuple(e for res in results for e in res.trace)
    return DesignResult(winner.geometry, winner.objective, trace, cfg.seed, problem, cfg,
                        winner.restart)
