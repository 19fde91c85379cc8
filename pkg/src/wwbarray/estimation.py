"""Single-snapshot measurement simulation and FOCUSS sparse DoA reconstruction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .geometry import ArrayGeometry


@dataclass(frozen=True)
class Target:
    u: float
    magnitude: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not abs(self.u) <= 1:
            raise ValueError("target u must lie in [-1, 1]")
        if not self.magnitude >= 0:
            raise ValueError("target magnitude must be >= 0")


@dataclass(frozen=True)
class Measurement:
    y: np.ndarray
    noise_variance: float
    geometry: ArrayGeometry


@dataclass(frozen=True)
class Dictionary:
    grid: np.ndarray  # u hypotheses, shape (K,)
    columns: np.ndarray  # steering matrix, shape (N, K)

    @property
    def size(self) -> int:
        return self.grid.size


@dataclass(frozen=True)
class Declaration:
    u_estimate: float
    magnitude: float
    index: int


def steering_vector(geom: ArrayGeometry, u, phase: float = 0.0) -> np.ndarray:
    """Unit-modulus response ``exp(i*phase) * exp(i*k*d*u)`` of the virtual array.

    ``u`` may be an array, in which case columns are stacked: shape (N, len(u)).
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(np.abs(u_arr) > 1):
        raise ValueError("u must lie in [-1, 1]")
    d = geom.relative_virtual_positions
    return np.exp(1j * (phase + geom.wavenumber * np.multiply.outer(d, u_arr)))


def noise_variance_for(snr_linear: float, magnitude: float = 1.0) -> float:
    if np.isinf(snr_linear):
        return 0.0
    if not snr_linear > 0:
        raise ValueError("snr_linear must be > 0")
    return magnitude ** 2 / snr_linear


def simulate_measurement(geom: ArrayGeometry, targets: Sequence[Target], snr_linear: float,
                         rng: np.random.Generator) -> Measurement:
    """Superpose target responses and add circular complex white noise.

    The noise variance is fixed by the SNR against a unit reference magnitude.
    """
    sigma2 = noise_variance_for(snr_linear)
    n = geom.num_virtual
    y = np.zeros(n, dtype=complex)
    for t in targets:
        y += t.magnitude * steering_vector(geom, t.u, t.phase)
    noise = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    y += np.sqrt(sigma2 / 2.0) * noise
    return Measurement(y, sigma2, geom)


def build_dictionary(geom: ArrayGeometry, fov, grid_size: int) -> Dictionary:
    """Uniform u grid over ``fov = (u1, u2)``, both edges included."""
    u1, u2 = fov
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    if not -1 <= u1 < u2 <= 1:
        raise ValueError("FoV must satisfy -1 <= u1 < u2 <= 1")
    grid = np.linspace(u1, u2, grid_size)
    return Dictionary(grid, steering_vector(geom, grid))


@dataclass(frozen=True)
class FocussConfig:
    p: float = 0.8
    regularization: float = 1.0
    max_iters: int = 30
    rel_tol: float = 1e-6
    prune_tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.p <= 2:
            raise ValueError("p must lie in (0, 2]")
        if self.regularization < 0 or self.max_iters < 1:
            raise ValueError("regularization must be >= 0 and max_iters >= 1")


def focuss_objective(D: np.ndarray, y: np.ndarray, x: np.ndarray, lam: float, p: float) -> float:
    """Cost decreased by the regularized FOCUSS iteration with Tikhonov parameter ``lam``.

    Each reweighted step minimizes a quadratic majorizer of the
    ``|x|^p`` penalty whose curvature matches ``(2/p) * lam``.
    """
    r = y - D @ x
    return float(np.vdot(r, r).real + (2.0 * lam / p) * np.sum(np.abs(x) ** p))


def _weighted_min_norm(A: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """``A^H (A A^H + lam I)^-1 y`` via SVD; drops null directions when ``lam`` is 0."""
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    if lam > 0:
        g = s / (s * s + lam)
    else:
        keep = s > s[0] * max(A.shape) * np.finfo(float).eps if s.size else s > 0
        g = np.zeros_like(s)
        g[keep] = 1.0 / s[keep]
    return Vh.conj().T @ (g * (U.conj().T @ y))


def focuss(dic: Dictionary, y: np.ndarray, cfg: FocussConfig | None = None,
           noise_variance: float | None = None, history: list | None = None) -> np.ndarray:
    """Regularized FOCUSS reconstruction of ``y`` on the dictionary.

    Starts from the matched filter ``D^H y / N`` and iterates the reweighted
    minimum-norm update with weights ``|x|^(1 - p/2)``.  The Tikhonov
    parameter is ``regularization * sigma^2``; when ``noise_variance`` is
    None it is estimated once from the matched-filter residual.  If
    ``history`` is given, the objective is appended after every iterate.
    """
    cfg = cfg or FocussConfig()
    D = dic.columns
    y = np.asarray(y, dtype=complex).ravel()
    if y.size != D.shape[0]:
        raise ValueError(f"measurement length {y.size} != dictionary rows {D.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("measurement contains non-finite values")
    n = D.shape[0]
    x = D.conj().T @ y / n
    if not np.any(x):
        return np.zeros(D.shape[1], dtype=complex)
    if noise_variance is None:
        r = y - D @ x
        noise_variance = float(np.vdot(r, r).real) / n
    lam = cfg.regularization * noise_variance
    if history is not None:
        history.append(focuss_objective(D, y, x, lam, cfg.p))
    for _ in range(cfg.max_iters):
        w = np.abs(x) ** (1.0 - cfg.p / 2.0)
        support = w > 0
        x_new = np.zeros_like(x)
        q = _weighted_min_norm(D[:, support] * w[support], y, lam)
        x_new[support] = w[support] * q
        peak = np.max(np.abs(x_new))
        if peak == 0:
            x = x_new
            break
        x_new[np.abs(x_new) < cfg.prune_tol * peak] = 0.0
        change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), np.finfo(float).tiny)
        x = x_new
        if history is not None:
            history.append(focuss_objective(D, y, x, lam, cfg.p))
        if change < cfg.rel_tol:
            break
    return x


def declare_targets(x: np.ndarray, grid: np.ndarray, gamma: float) -> List[Declaration]:
    """Threshold ``|x| > gamma`` and keep the strongest bin of each contiguous run."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    mag = np.abs(np.asarray(x))
    above = mag > gamma
    out: List[Declaration] = []
    i, K = 0, mag.size
    while i < K:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < K and above[j + 1]:
            j += 1
        best = i + int(np.argmax(mag[i:j + 1]))
        out.append(Declaration(float(grid[best]), float(mag[best]), best))
        i = j + 1
    out.sort(key=lambda dcl: (-dcl.magnitude, dcl.index))
    return out
