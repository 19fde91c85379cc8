"""Linear MIMO array geometries, virtual arrays and placement constraints."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

SPEED_OF_LIGHT = 299792458.0
DEFAULT_FREQUENCY = 77e9


class GeometryError(ValueError):
    """Raised for malformed or inconsistent array geometries."""


def wavelength_from_frequency(frequency: float = DEFAULT_FREQUENCY) -> float:
    return SPEED_OF_LIGHT / frequency


def virtual_array(tx: Sequence[float], rx: Sequence[float]) -> np.ndarray:
    """Pairwise sums ``tx[i] + rx[j]`` in row-major (Tx-major) order."""
    tx = np.asarray(tx, dtype=float).ravel()
    rx = np.asarray(rx, dtype=float).ravel()
    if tx.size == 0 or rx.size == 0:
        raise GeometryError("transmit and receive position lists must be non-empty")
    if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(rx))):
        raise GeometryError("positions must be finite")
    return np.add.outer(tx, rx).ravel()


def uniform_ula(count: int, spacing: float, origin: float = 0.0) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be >= 1")
    if not spacing > 0:
        raise ValueError("spacing must be > 0")
    return origin + spacing * np.arange(count, dtype=float)


@dataclass(frozen=True)
class ArrayGeometry:
    """Transmit/receive element positions (meters) of a linear MIMO array.

    Positions are kept exactly as given; the virtual array follows from
    the pairwise sums of transmit and receive positions.
    """

    tx_positions: Tuple[float, ...]
    rx_positions: Tuple[float, ...]
    wavelength: float = field(default_factory=wavelength_from_frequency)

    def __post_init__(self):
        tx = tuple(float(v) for v in np.asarray(self.tx_positions, dtype=float).ravel())
        rx = tuple(float(v) for v in np.asarray(self.rx_positions, dtype=float).ravel())
        object.__setattr__(self, "tx_positions", tx)
        object.__setattr__(self, "rx_positions", rx)
        object.__setattr__(self, "wavelength", float(self.wavelength))
        if not tx or not rx:
            raise GeometryError("geometry needs at least one Tx and one Rx element")
        if not all(np.isfinite(tx)) or not all(np.isfinite(rx)):
            raise GeometryError("positions must be finite")
        if not (np.isfinite(self.wavelength) and self.wavelength > 0):
            raise GeometryError("wavelength must be > 0")
        for name, pos in (("tx", tx), ("rx", rx)):
            if any(b <= a for a, b in zip(pos, pos[1:])):
                raise GeometryError(f"{name} positions must be strictly increasing")

    @classmethod
    def from_unsorted(cls, tx: Iterable[float], rx: Iterable[float],
                      wavelength: float | None = None) -> "ArrayGeometry":
        if wavelength is None:
            wavelength = wavelength_from_frequency()
        return cls(tuple(sorted(tx)), tuple(sorted(rx)), wavelength)

    @property
    def m(self) -> int:
        return len(self.tx_positions)

    @property
    def n(self) -> int:
        return len(self.rx_positions)

    @property
    def num_virtual(self) -> int:
        return self.m * self.n

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def virtual_positions(self) -> np.ndarray:
        return virtual_array(self.tx_positions, self.rx_positions)

    @property
    def relative_virtual_positions(self) -> np.ndarray:
        """Virtual positions measured from the first virtual element."""
        return self.virtual_positions - (self.tx_positions[0] + self.rx_positions[0])

    @property
    def aperture(self) -> float:
        v = self.virtual_positions
        return float(v.max() - v.min())

    def translated(self, tx_shift: float = 0.0, rx_shift: float = 0.0) -> "ArrayGeometry":
        return ArrayGeometry(tuple(np.add(self.tx_positions, tx_shift)),
                             tuple(np.add(self.rx_positions, rx_shift)), self.wavelength)


def uniform_mimo(m: int, n: int, wavelength: float | None = None,
                 spacing_wavelengths: float = 0.5) -> ArrayGeometry:
    """Filled MIMO array: Rx at ``d`` spacing, Tx at ``n*d`` spacing."""
    if wavelength is None:
        wavelength = wavelength_from_frequency()
    d = spacing_wavelengths * wavelength
    return ArrayGeometry(tuple(uniform_ula(m, n * d)), tuple(uniform_ula(n, d)), wavelength)


def dilate(geom: ArrayGeometry, factor: float) -> ArrayGeometry:
    """Scale Tx and Rx positions about their respective first element."""
    if not factor > 0:
        raise ValueError("dilation factor must be > 0")
    tx = np.asarray(geom.tx_positions)
    rx = np.asarray(geom.rx_positions)
    tx = tx[0] + factor * (tx - tx[0])
    rx = rx[0] + factor * (rx - rx[0])
    return ArrayGeometry(tuple(tx), tuple(rx), geom.wavelength)


@dataclass(frozen=True)
class PlacementConstraints:
    """Minimum separations and open boxes for Tx and Rx positions (meters)."""

    tx_min_sep: float
    rx_min_sep: float
    tx_lower: float
    tx_upper: float
    rx_lower: float
    rx_upper: float

    def __post_init__(self):
        if self.tx_min_sep < 0 or self.rx_min_sep < 0:
            raise ValueError("minimum separations must be >= 0")
        if not self.tx_lower < self.tx_upper:
            raise ValueError("tx_lower must be < tx_upper")
        if not self.rx_lower < self.rx_upper:
            raise ValueError("rx_lower must be < rx_upper")

    @property
    def tx_width(self) -> float:
        return self.tx_upper - self.tx_lower

    @property
    def rx_width(self) -> float:
        return self.rx_upper - self.rx_lower

    def is_feasible_for(self, m: int, n: int) -> bool:
        return ((m - 1) * self.tx_min_sep < self.tx_width
                and (n - 1) * self.rx_min_sep < self.rx_width)

    def require_feasible(self, m: int, n: int) -> None:
        if (m - 1) * self.tx_min_sep >= self.tx_width:
            raise ValueError(f"{m} Tx elements with separation > {self.tx_min_sep} "
                             f"do not fit in ({self.tx_lower}, {self.tx_upper})")
        if (n - 1) * self.rx_min_sep >= self.rx_width:
            raise ValueError(f"{n} Rx elements with separation > {self.rx_min_sep} "
                             f"do not fit in ({self.rx_lower}, {self.rx_upper})")


@dataclass(frozen=True)
class Violation:
    constraint: str
    indices: Tuple[int, ...]  # 1-based element indices
    detail: str


def check_constraints(geom: ArrayGeometry, cons: PlacementConstraints) -> List[Violation]:
    """Return one record per failed strict inequality; empty when feasible."""
    out: List[Violation] = []
    for side, pos, sep, lo, hi in (
            ("tx", geom.tx_positions, cons.tx_min_sep, cons.tx_lower, cons.tx_upper),
            ("rx", geom.rx_positions, cons.rx_min_sep, cons.rx_lower, cons.rx_upper)):
        for i in range(len(pos) - 1):
            gap = pos[i + 1] - pos[i]
            if not gap > sep:
                out.append(Violation(f"{side}_separation", (i + 1, i + 2),
                                     f"gap {gap!r} <= {sep!r}"))
        if not pos[0] > lo:
            out.append(Violation(f"{side}_lower", (1,), f"{pos[0]!r} <= {lo!r}"))
        if not pos[-1] < hi:
            out.append(Violation(f"{side}_upper", (len(pos),), f"{pos[-1]!r} >= {hi!r}"))
    return out


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def format_geometry(geom: ArrayGeometry, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"wavelength_m {_fmt(geom.wavelength)}")
    lines.append("tx " + " ".join(_fmt(v) for v in geom.tx_positions))
    lines.append("rx " + " ".join(_fmt(v) for v in geom.rx_positions))
    return "\n".join(lines) + "\n"


def parse_geometry(text: str) -> ArrayGeometry:
    """Parse the line-oriented geometry format.

    Recognized lines are ``wavelength_m``, ``tx``, ``rx`` and an optional
    ``unit m|lam`` line that applies to the position lists.
    """
    values = {}
    unit = "m"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "unit":
            if len(rest) != 1 or rest[0] not in ("m", "lam"):
                raise GeometryError(f"line {lineno}: unit must be 'm' or 'lam'")
            unit = rest[0]
            continue
        if key not in ("wavelength_m", "tx", "rx"):
            raise GeometryError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise GeometryError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = [float(v) for v in rest]
        except ValueError as exc:
            raise GeometryError(f"line {lineno}: {exc}") from None
    if "wavelength_m" not in values or len(values["wavelength_m"]) != 1:
        raise GeometryError("missing or malformed wavelength_m")
    for key in ("tx", "rx"):
        if not values.get(key):
            raise GeometryError(f"missing {key} positions")
    wl = values["wavelength_m"][0]
    scale = wl if unit == "lam" else 1.0
    return ArrayGeometry(tuple(v * scale for v in values["tx"]),
                         tuple(v * scale for v in values["rx"]), wl)


def load_geometry(path: str | os.PathLike) -> ArrayGeometry:
    with open(path, encoding="utf-8") as fh:
        return parse_geometry(fh.read())


def save_geometry(geom: ArrayGeometry, path: str | os.PathLike, comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_geometry(geom, comment))


def reference_geometry(name: str) -> ArrayGeometry:
    """Load one of the bundled reference arrays (``uniform_dilated``, ``coprime``, ``mra``)."""
    from importlib import resources
    text = resources.files("wwbarray.data").joinpath(f"{name}_3x4.txt").read_text(encoding="utf-8")
    return parse_geometry(text)
