"""Monte-Carlo detection/resolution metrics for a DoA estimator on a given array."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .estimation import (Dictionary, FocussConfig, Target, build_dictionary, declare_targets,
                         focuss, simulate_measurement)
from .geometry import ArrayGeometry

log = logging.getLogger(__name__)

ONE_TARGET = "one-target"
TWO_TARGET = "two-target"

# substream tags under the master seed
STREAM_EVAL = 1
STREAM_TRAIN = 2


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = ONE_TARGET
    fov_deg: Tuple[float, float] = (-30.0, 30.0)
    snr_db: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0)
    separation_deg: Tuple[float, ...] = ()
    trials: int = 500
    window_deg: float = 3.0
    grid_size: int = 300
    focuss: FocussConfig = field(default_factory=FocussConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(v) for v in self.snr_db))
        object.__setattr__(self, "separation_deg", tuple(float(v) for v in self.separation_deg))
        object.__setattr__(self, "fov_deg", tuple(float(v) for v in self.fov_deg))
        if self.mode not in (ONE_TARGET, TWO_TARGET):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.window_deg > 0:
            raise ValueError("window_deg must be > 0")
        lo, hi = self.fov_deg
        if not -90 <= lo < hi <= 90:
            raise ValueError("fov_deg must satisfy -90 <= lo < hi <= 90")
        if not self.snr_db:
            raise ValueError("snr_db must not be empty")
        if self.mode == TWO_TARGET:
            if len(self.snr_db) != 1:
                raise ValueError("two-target mode sweeps separation at a single SNR")
            if not self.separation_deg:
                raise ValueError("two-target mode needs separation_deg")
            if any(not 0 < s < hi - lo for s in self.separation_deg):
                raise ValueError("separations must be positive and fit in the FoV")

    @property
    def fov_u(self) -> Tuple[float, float]:
        return tuple(float(np.sin(np.deg2rad(a))) for a in self.fov_deg)

    def sweep(self) -> List[Tuple[float, float, Optional[float]]]:
        """(sweep_value, snr_db, separation_deg) per sweep point."""
        if self.mode == ONE_TARGET:
            return [(s, s, None) for s in self.snr_db]
        return [(sep, self.snr_db[0], sep) for sep in self.separation_deg]


class Match(NamedTuple):
    declaration_deg: float
    truth_deg: float


def match_declarations(declarations_deg: Sequence[float], truths_deg: Sequence[float],
                       window_deg: float, magnitudes: Sequence[float] | None = None
                       ) -> Tuple[List[Match], List[float]]:
    """Greedy assignment of declarations to targets inside the detection window.

    Declarations are visited by descending magnitude (input order when no
    magnitudes are given); each takes the nearest unmatched truth within
    ``window_deg`` or becomes a false alarm.
    """
    if not window_deg > 0:
        raise ValueError("window must be > 0")
    order = range(len(declarations_deg))
    if magnitudes is not None:
        order = sorted(order, key=lambda i: -magnitudes[i])
    free = list(range(len(truths_deg)))
    matches: List[Match] = []
    false_alarms: List[float] = []
    for i in order:
        a = declarations_deg[i]
        best = None
        for j in free:
            err = abs(a - truths_deg[j])
            if err <= window_deg and (best is None or err < abs(a - truths_deg[best])):
                best = j
        if best is None:
            false_alarms.append(a)
        else:
            free.remove(best)
            matches.append(Match(a, truths_deg[best]))
    return matches, false_alarms


class TrialRecord(NamedTuple):
    pd: float
    far: float
    pr: float
    sq_errors: Tuple[float, ...]
    declarations: int


def trial_metrics(matches: Sequence[Match], false_alarms: Sequence[float],
                  n_targets: int) -> TrialRecord:
    if n_targets < 1:
        raise ValueError("n_targets must be >= 1")
    det = len(matches)
    total = det + len(false_alarms)
    return TrialRecord(
        pd=det / n_targets,
        far=len(false_alarms) / total if total else 0.0,
        pr=1.0 if det == n_targets else 0.0,
        sq_errors=tuple((m.declaration_deg - m.truth_deg) ** 2 for m in matches),
        declarations=total,
    )


@dataclass(frozen=True)
class PointMetrics:
    sweep_value: float
    pd: float
    far: float
    pr: float
    rmse_deg: float
    trials: int
    gamma: float
    records: Tuple[TrialRecord, ...] = ()


@dataclass(frozen=True)
class MetricsReport:
    scenario: ScenarioConfig
    points: Tuple[PointMetrics, ...]


def aggregate(records: Sequence[TrialRecord], sweep_value: float, gamma: float) -> PointMetrics:
    n = len(records)
    sq = [e for r in records for e in r.sq_errors]
    return PointMetrics(
        sweep_value=sweep_value,
        pd=sum(r.pd for r in records) / n,
        far=sum(r.far for r in records) / n,
        pr=sum(r.pr for r in records) / n,
        rmse_deg=float(np.sqrt(sum(sq) / len(sq))) if sq else float("nan"),
        trials=n,
        gamma=gamma,
        records=tuple(records),
    )


class _Trial(NamedTuple):
    x: np.ndarray
    truths_deg: Tuple[float, ...]


def _draw_targets(sc: ScenarioConfig, separation: Optional[float],
                  rng: np.random.Generator) -> List[Target]:
    lo, hi = sc.fov_deg
    if sc.mode == ONE_TARGET:
        u1, u2 = sc.fov_u
        return [Target(float(rng.uniform(u1, u2)), 1.0, float(rng.uniform(0, 2 * np.pi)))]
    mid = rng.uniform(lo + separation / 2, hi - separation / 2)
    angles = (mid - separation / 2, mid + separation / 2)
    phases = rng.uniform(0, 2 * np.pi, 2)
    return [Target(float(np.sin(np.deg2rad(a))), 1.0, float(p)) for a, p in zip(angles, phases)]


def _reconstruct(geom: ArrayGeometry, sc: ScenarioConfig, dic: Dictionary,
                 stream: int) -> List[List[_Trial]]:
    out = []
    for p, (value, snr_db, sep) in enumerate(sc.sweep()):
        c = 10.0 ** (snr_db / 10.0)
        trials = []
        for t in range(sc.trials):
            rng = np.random.default_rng([sc.seed, stream, p, t])
            targets = _draw_targets(sc, sep, rng)
            meas = simulate_measurement(geom, targets, c, rng)
            try:
                x = focuss(dic, meas.y, sc.focuss, noise_variance=meas.noise_variance)
            except (ValueError, np.linalg.LinAlgError) as exc:
                raise EvaluationError(f"sweep point {value}: trial {t}: {exc}") from exc
            truths = tuple(float(np.rad2deg(np.arcsin(tg.u))) for tg in targets)
            trials.append(_Trial(x, truths))
        out.append(trials)
    return out


def _score_trial(trial: _Trial, grid: np.ndarray, gamma: float, window: float) -> TrialRecord:
    peak = float(np.max(np.abs(trial.x)))
    decls = declare_targets(trial.x, grid, gamma * peak) if peak > 0 else []
    angles = [float(np.rad2deg(np.arcsin(np.clip(dcl.u_estimate, -1, 1)))) for dcl in decls]
    matches, fas = match_declarations(angles, trial.truths_deg, window,
                                      [dcl.magnitude for dcl in decls])
    return trial_metrics(matches, fas, len(trial.truths_deg))


def _score(recons: List[List[_Trial]], sc: ScenarioConfig, grid: np.ndarray,
           gamma: float) -> Tuple[PointMetrics, ...]:
    points = []
    for (value, _, _), trials in zip(sc.sweep(), recons):
        records = [_score_trial(tr, grid, gamma, sc.window_deg) for tr in trials]
        points.append(aggregate(records, value, gamma))
    return tuple(points)


def monte_carlo(geom: ArrayGeometry, scenario: ScenarioConfig, gamma: float) -> MetricsReport:
    """Seeded Monte-Carlo sweep; ``gamma`` is relative to each reconstruction's peak."""
    dic = build_dictionary(geom, scenario.fov_u, scenario.grid_size)
    recons = _reconstruct(geom, scenario, dic, STREAM_EVAL)
    return MetricsReport(scenario, _score(recons, scenario, dic.grid, gamma))


def train_threshold(geom: ArrayGeometry, training: ScenarioConfig,
                    gamma_grid: Sequence[float]) -> float:
    """Relative threshold maximizing mean(P_D) - mean(FAR) on an independent training draw.

    Ties go to the larger threshold.
    """
    gammas = sorted(float(g) for g in gamma_grid)
    if not gammas:
        raise ValueError("empty gamma grid")
    dic = build_dictionary(geom, training.fov_u, training.grid_size)
    recons = _reconstruct(geom, training, dic, STREAM_TRAIN)
    best_gamma, best_score = gammas[0], -np.inf
    for g in gammas:
        records = [_score_trial(tr, dic.grid, g, training.window_deg)
                   for trials in recons for tr in trials]
        score = (sum(r.pd for r in records) - sum(r.far for r in records)) / len(records)
        log.debug("gamma %.4g: score %.6f", g, score)
        if score >= best_score:
            best_gamma, best_score = g, score
    return best_gamma
