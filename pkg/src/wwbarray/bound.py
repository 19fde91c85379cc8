"""Random-phase Weiss-Weinstein bound on DoA error and its tightest value over test points.

Two independent evaluation routes are provided: :func:`wwb_closed_form`
uses the array factor directly, :func:`wwb_from_q` builds the single
test-point ``Q`` element from likelihood-ratio expectations ``eta`` over
the uniform (u, phase) prior box.  The maximization over test points is a
vectorized multi-restart simulated annealing with deterministic refinement.
"""

from __future__ import annotations

import cmath
import math

from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .geometry import ArrayGeometry, GeometryError

TWO_PI = 2.0 * np.pi
DENOMINATOR_FLOOR = 1e-300


class BoundError(ArithmeticError):
    """Base class for bound evaluation failures."""


class DegenerateTestPointError(BoundError):
    pass


class OptimizationFailure(BoundError):
    pass


def db_to_linear(snr_db):
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


def fov_delta_u(half_angle_deg: float) -> float:
    """Width in u of the symmetric field of view ``+/- half_angle_deg``."""
    return 2.0 * np.sin(np.deg2rad(half_angle_deg))


def array_factor(virtual_positions, wavenumber: float, h_u):
    """Normalized array factor ``mean(exp(1j * k * d * h_u))``.

    ``h_u`` may be a scalar or an array; the result has its shape.
    """
    d = np.asarray(virtual_positions, dtype=float).ravel()
    if d.size == 0:
        raise GeometryError("array factor of an empty array")
    h = np.asarray(h_u, dtype=float)
    out = np.exp(1j * wavenumber * np.multiply.outer(h, d)).mean(axis=-1)
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BoundQuery:
    snr_linear: float
    delta_u: float
    h_u: float
    h_phi: float

    def __post_init__(self):
        if not self.snr_linear >= 0:
            raise ValueError("snr_linear must be >= 0")
        if not 0 < self.delta_u <= 2:
            raise ValueError("delta_u must lie in (0, 2]")
        if not 0 < abs(self.h_u) < self.delta_u:
            raise ValueError("|h_u| must lie in (0, delta_u)")
        if not abs(self.h_phi) < TWO_PI:
            raise ValueError("|h_phi| must be < 2*pi")


def _wwb_batch(d: np.ndarray, k: float, c: float, delta_u: float,
               h_u: np.ndarray, h_phi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form bound on arrays of test points; returns (numerator, denominator)."""
    n = d.size
    e1 = np.exp(np.multiply.outer(h_u, 1j * k * d))
    b1 = e1.sum(axis=-1)
    b2 = np.square(e1).sum(axis=-1)
    # eps = 1 - Re{exp(i h_phi) B}, with the 1/N of B folded in
    eps1 = 1.0 - (np.cos(h_phi) * b1.real - np.sin(h_phi) * b1.imag) / n
    eps2 = 1.0 - (np.cos(2 * h_phi) * b2.real - np.sin(2 * h_phi) * b2.imag) / n
    abs_phi = np.abs(h_phi)
    abs_u = np.abs(h_u)
    a_phi = TWO_PI - abs_phi
    a_u = delta_u - abs_u
    num = np.square(h_u * a_phi * a_u) * np.exp(-c * n * eps1)
    overlap = np.maximum(0.0, TWO_PI - 2 * abs_phi) * np.maximum(0.0, delta_u - 2 * abs_u)
    den = 2.0 * (TWO_PI * delta_u) * (a_phi * a_u - overlap * np.exp(-0.5 * c * n * eps2))
    return num, den


def wwb_closed_form(geom: ArrayGeometry, q: BoundQuery) -> float:
    d = geom.relative_virtual_positions
    num, den = _wwb_batch(d, geom.wavenumber, q.snr_linear, q.delta_u,
                          np.float64(q.h_u), np.float64(q.h_phi))
    if not den > DENOMINATOR_FLOOR:
        raise DegenerateTestPointError(f"denominator {den!r} at h=({q.h_u}, {q.h_phi})")
    return float(num / den)


def _interval_overlap(length: float, *shifts: float) -> float:
    """Length of (0, L) intersected with all of its shifted copies."""
    lo = max((0.0,) + shifts)
    hi = min((0.0,) + shifts) + length
    return max(0.0, hi - lo)


def eta(geom: ArrayGeometry, snr_linear: float, delta_u: float,
        mu: Tuple[float, float], rho: Tuple[float, float]) -> float:
    """Expectation of the product of square-root likelihood ratios at offsets ``mu``, ``rho``.

    The Gaussian factor is the Bhattacharyya coefficient between the two
    shifted noiseless measurements; the prior factor is the normalized
    volume of the (u, phase) support box intersected with both shifts.
    """
    d = geom.relative_virtual_positions
    k = geom.wavenumber
    a_mu = np.exp(1j * (mu[1] + k * d * mu[0]))
    a_rho = np.exp(1j * (rho[1] + k * d * rho[0]))
    gauss = np.exp(-0.25 * snr_linear * np.sum(np.abs(a_mu - a_rho) ** 2))
    volume = (_interval_overlap(delta_u, mu[0], rho[0])
              * _interval_overlap(TWO_PI, mu[1], rho[1]))
    return float(gauss * volume / (TWO_PI * delta_u))


def wwb_from_q(geom: ArrayGeometry, q: BoundQuery) -> float:
    """Bound from the single test-point ``Q`` element; accepts signed ``h_u``."""
    h = (q.h_u, q.h_phi)
    mh = (-q.h_u, -q.h_phi)
    zero = (0.0, 0.0)
    args = (geom, q.snr_linear, q.delta_u)
    num = eta(*args, h, h) + eta(*args, mh, mh) - eta(*args, h, mh) - eta(*args, mh, h)
    den = eta(*args, h, zero) * eta(*args, zero, h)
    if not num > DENOMINATOR_FLOOR:
        raise DegenerateTestPointError(f"degenerate Q at h=({q.h_u}, {q.h_phi})")
    # den underflows to 0 at large c*N; the bound is then 0 as well
    return q.h_u ** 2 * den / num


@dataclass(frozen=True)
class InnerOptConfig:
    """Settings of the test-point maximization.

    ``grid_u`` x ``grid_phi`` points are scanned once (half log-spaced in
    h_u), ``restarts`` annealing chains run ``iterations`` steps each, and
    the ``polish`` best distinct candidates are refined locally.
    """

    h_u_floor: float = 1e-4
    h_u_ceiling_margin: float = 1e-6  # fraction of delta_u
    h_phi_margin: float = 1e-6  # fraction of 2*pi
    restarts: int = 8
    iterations: int = 400
    cooling: float = 0.97
    probes: int = 64
    initial_step: float = 0.25
    grid_u: int = 96
    grid_phi: int = 128
    polish: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.iterations < 0 or self.probes < 2:
            raise ValueError("iterations must be >= 0 and probes >= 2")
        if not 0 < self.cooling < 1:
            raise ValueError("cooling must lie in (0, 1)")
        if not self.h_u_floor > 0:
            raise ValueError("h_u_floor must be > 0")

    def domain(self, delta_u: float) -> np.ndarray:
        if not self.h_u_floor < delta_u:
            raise ValueError(f"h_u_floor {self.h_u_floor} must be < delta_u {delta_u}")
        mp = self.h_phi_margin * TWO_PI
        return np.array([[self.h_u_floor, delta_u * (1.0 - self.h_u_ceiling_margin)],
                         [-TWO_PI + mp, TWO_PI - mp]])


class BoundResult(NamedTuple):
    value: float
    h_u: float
    h_phi: float


def _golden_max(f: Callable[[float], float], a: float, b: float, iters: int) -> Tuple[float, float]:
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _refine(f: Callable[[np.ndarray], float], x0: np.ndarray, f0: float,
            bounds: np.ndarray, width: np.ndarray) -> Tuple[np.ndarray, float]:
    """Coordinate-wise golden-section sweeps, then a bounded Nelder-Mead polish."""
    x, fx = x0.copy(), f0
    w = width.copy()
    for _ in range(3):
        for j in range(2):
            lo = max(bounds[j, 0], x[j] - w[j])
            hi = min(bounds[j, 1], x[j] + w[j])

            def line(t, j=j):
                y = x.copy()
                y[j] = t
                return f(y)

            t, ft = _golden_max(line, lo, hi, 24)
            if ft > fx:
                x[j], fx = t, ft
        w *= 0.2
    span = bounds[:, 1] - bounds[:, 0]
    simplex = np.array([x, x + [1e-3 * span[0], 0], x + [0, 1e-3 * span[1]]])
    simplex = np.clip(simplex, bounds[:, 0], bounds[:, 1])
    res = minimize(lambda y: -f(y), x, method="Nelder-Mead", bounds=bounds,
                   options={"initial_simplex": simplex, "xatol": 1e-11,
                            "fatol": 1e-14 * abs(fx), "maxiter": 400, "maxfev": 800})
    if np.isfinite(res.fun) and -res.fun > fx:
        x, fx = np.clip(res.x, bounds[:, 0], bounds[:, 1]), float(-res.fun)
    return x, fx


def maximize_wwb(d: np.ndarray, k: float, snr_linear: float, delta_u: float,
                 cfg: InnerOptConfig, bounds: np.ndarray | None = None) -> BoundResult:
    """Global maximization of the closed-form bound over a test-point box.

    ``d`` are virtual positions (meters) relative to the reference element.
    """
    if bounds is None:
        bounds = cfg.domain(delta_u)
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    span = hi - lo

    def batch(hu, hp):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            num, den = _wwb_batch(d, k, snr_linear, delta_u, hu, hp)
            val = num / den
        return np.where((den > DENOMINATOR_FLOOR) & np.isfinite(val), val, -np.inf)

    ikd = 1j * k * d
    cn = snr_linear * d.size
    inv_n = 1.0 / d.size
    four_pi_du = 2.0 * TWO_PI * delta_u

    def scalar(x):
        hu, hp = float(x[0]), float(x[1])
        e1 = np.exp(ikd * hu)
        b1 = complex(e1.sum()) * inv_n
        b2 = complex((e1 * e1).sum()) * inv_n
        eps1 = 1.0 - (cmath.exp(1j * hp) * b1).real
        eps2 = 1.0 - (cmath.exp(2j * hp) * b2).real
        a_phi = TWO_PI - abs(hp)
        a_u = delta_u - abs(hu)
        overlap = max(0.0, TWO_PI - 2 * abs(hp)) * max(0.0, delta_u - 2 * abs(hu))
        den = four_pi_du * (a_phi * a_u - overlap * math.exp(-0.5 * cn * eps2))
        if not den > DENOMINATOR_FLOOR:
            return -math.inf
        return hu * hu * a_phi * a_phi * a_u * a_u * math.exp(-cn * eps1) / den

    # deterministic scan
    n_log = cfg.grid_u // 2
    if lo[0] > 0:
        gu = np.geomspace(lo[0], hi[0], n_log)
    else:
        gu = -np.geomspace(-hi[0], -lo[0], n_log)
    gu = np.unique(np.concatenate([gu, np.linspace(lo[0], hi[0], cfg.grid_u - n_log)]))
    gp = np.linspace(lo[1], hi[1], cfg.grid_phi)
    GU, GP = np.meshgrid(gu, gp, indexing="ij")
    grid_vals = batch(GU.ravel(), GP.ravel())
    grid_pts = np.column_stack([GU.ravel(), GP.ravel()])

    # annealing: one private stream per restart plus one for probes
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts + 1)
    probe_rng = np.random.default_rng(children[0])
    probes = lo + span * probe_rng.random((cfg.probes, 2))
    pv = batch(probes[:, 0], probes[:, 1])
    pv = pv[np.isfinite(pv)]
    temp = float(np.std(pv)) if pv.size > 1 else 0.0
    if not temp > 0:
        temp = 1e-12 * (float(np.max(np.abs(pv))) if pv.size else 1.0) + 1e-300

    R, T = cfg.restarts, cfg.iterations
    starts = np.empty((R, 2))
    steps = np.empty((R, T, 2))
    coins = np.empty((R, T))
    for r in range(R):
        rng = np.random.default_rng(children[r + 1])
        starts[r] = lo + span * rng.random(2)
        steps[r] = rng.standard_normal((T, 2))
        coins[r] = rng.random(T)

    x = starts.copy()
    fx = batch(x[:, 0], x[:, 1])
    best_x, best_f = x.copy(), fx.copy()
    step_frac = np.maximum(cfg.initial_step * cfg.cooling ** np.arange(T), 1e-4)
    temps = temp * cfg.cooling ** np.arange(T)
    for t in range(T):
        cand = x + steps[:, t] * (span * step_frac[t])
        # reflect once, then clip
        cand = np.clip(np.where(cand < lo, 2 * lo - cand,
                                np.where(cand > hi, 2 * hi - cand, cand)), lo, hi)
        fc = batch(cand[:, 0], cand[:, 1])
        with np.errstate(over="ignore", invalid="ignore"):
            accept = (fc >= fx) | (coins[:, t] < np.exp((fc - fx) / temps[t]))
        accept &= np.isfinite(fc)
        x[accept] = cand[accept]
        fx[accept] = fc[accept]
        better = fx > best_f
        best_x[better] = x[better]
        best_f[better] = fx[better]

    pts = np.vstack([best_x, grid_pts])
    vals = np.concatenate([best_f, grid_vals])
    if not np.any(np.isfinite(vals)):
        raise OptimizationFailure("no valid test point found")

    # pick distinct basins for local refinement; stable sort keeps index order on ties
    order = np.argsort(-vals, kind="stable")
    width = np.array([(hi[0] - lo[0]) / cfg.grid_u * 2, span[1] / cfg.grid_phi * 2])
    chosen: List[int] = []
    for i in order:
        if not np.isfinite(vals[i]):
            break
        if all(np.any(np.abs(pts[i] - pts[j]) > width) for j in chosen):
            chosen.append(i)
        if len(chosen) == cfg.polish:
            break
    best = BoundResult(float(vals[order[0]]), *map(float, pts[order[0]]))
    for i in chosen:
        xr, fr = _refine(scalar, pts[i].copy(), float(vals[i]), bounds, width)
        if fr > best.value:
            best = BoundResult(fr, float(xr[0]), float(xr[1]))
    return best


def tightest_bound(geom: ArrayGeometry, snr_linear: float, delta_u: float,
                   cfg: InnerOptConfig | None = None) -> BoundResult:
    """Supremum of the closed-form bound over the valid test-point box."""
    cfg = cfg or InnerOptConfig()
    if not 0 < delta_u <= 2:
        raise ValueError("delta_u must lie in (0, 2]")
    if not snr_linear >= 0:
        raise ValueError("snr_linear must be >= 0")
    return maximize_wwb(geom.relative_virtual_positions, geom.wavenumber,
                        float(snr_linear), float(delta_u), cfg)


@dataclass(frozen=True)
class FovSchedule:
    """FoV widths in u with the inverse-square weights of the averaged cost."""

    delta_u: Tuple[float, ...]
    weights: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        du = tuple(float(v) for v in self.delta_u)
        if not du:
            raise ValueError("FoV schedule must not be empty")
        if any(b <= a for a, b in zip(du, du[1:])):
            raise ValueError("FoV widths must be strictly increasing")
        if any(not 0 < v <= 2 for v in du):
            raise ValueError("FoV widths must lie in (0, 2]")
        object.__setattr__(self, "delta_u", du)
        if not self.weights:
            object.__setattr__(self, "weights", tuple(1.0 / v ** 2 for v in du))
        elif len(self.weights) != len(du):
            raise ValueError("one weight per FoV width")

    @classmethod
    def from_degrees(cls, half_angles_deg: Sequence[float]) -> "FovSchedule":
        return cls(tuple(fov_delta_u(a) for a in sorted(half_angles_deg)))

    def scaled(self, factor: float) -> "FovSchedule":
        return FovSchedule(self.delta_u, tuple(factor * w for w in self.weights))

    def __iter__(self):
        return iter(zip(self.delta_u, self.weights))

    def __len__(self):
        return len(self.delta_u)


def averaged_cost(geom: ArrayGeometry, snr_linear: float, sched: FovSchedule,
                  cfg: InnerOptConfig | None = None) -> float:
    total = 0.0
    for du, w in sched:
        total += w * tightest_bound(geom, snr_linear, du, cfg).value
    return total


def bound_curve(geom: ArrayGeometry, snr_list: Sequence[float], delta_u: float,
                cfg: InnerOptConfig | None = None) -> List[Tuple[float, BoundResult]]:
    """Tightest bound per linear SNR value, in input order."""
    if len(snr_list) == 0:
        raise ValueError("empty SNR list")
    return [(float(c), tightest_bound(geom, c, delta_u, cfg)) for c in snr_list]
