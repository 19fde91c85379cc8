"""Command line front end: ``design``, ``bound``, ``evaluate`` and ``compare``.

Every option can come from a ``key = value`` config file (``--config``),
an evaluation scenario file (``--scenario``) or a ``--key`` flag, in
increasing precedence.  Lengths need a unit suffix (``mm``, ``cm``, ``m``,
``lam``); angles and SNRs carry the unit in the key name.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import tempfile
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bound import BoundError, FovSchedule, InnerOptConfig, bound_curve, fov_delta_u
from .design import DesignError, DesignProblem, OuterConfig, optimize_array
from .estimation import FocussConfig
from .evaluation import (ONE_TARGET, TWO_TARGET, EvaluationError, MetricsReport, ScenarioConfig,
                         monte_carlo, train_threshold)
from .geometry import (GeometryError, PlacementConstraints, SPEED_OF_LIGHT, format_geometry,
                       load_geometry)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

LENGTH_UNITS = {"mm": 1e-3, "cm": 1e-2, "m": 1.0}


class ConfigError(ValueError):
    pass


# --- value parsers -----------------------------------------------------------

def _number(text: str, kind=float) -> Any:
    return kind(text.strip())


def _list(text: str, kind=float) -> Tuple:
    items = [t for t in text.replace(",", " ").split() if t]
    return tuple(kind(t) for t in items)


def parse_length(text: str, wavelength: float) -> float:
    """``'3lam'``, ``'11.7mm'``, ``'6cm'`` or ``'0.06m'`` to meters."""
    t = text.strip().replace(" ", "")
    if t.endswith("lam"):
        return float(t[:-3]) * wavelength
    for suffix in ("mm", "cm", "m"):
        if t.endswith(suffix):
            return float(t[: -len(suffix)]) * LENGTH_UNITS[suffix]
    raise ValueError(f"missing length unit in {text!r} (use mm, cm, m or lam)")


@dataclass(frozen=True)
class Key:
    kind: str  # int, float, ints, floats, str, path, paths, length, choice
    default: Optional[str] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    choices: Tuple[str, ...] = ()
    lo_open: bool = False
    hi_open: bool = False
    help: str = ""


COMMON = {
    "seed": Key("int", "0", lo=0, help="master seed"),
    "frequency_ghz": Key("float", "77", lo=0, lo_open=True),
    "inner_restarts": Key("int", "8", lo=1),
    "inner_iterations": Key("int", "400", lo=0),
    "inner_cooling": Key("float", "0.97", lo=0, hi=1, lo_open=True, hi_open=True),
    "inner_probes": Key("int", "64", lo=2),
    "h_u_floor": Key("float", "1e-4", lo=0, lo_open=True),
}

SCENARIO = {
    "mode": Key("choice", ONE_TARGET, choices=(ONE_TARGET, TWO_TARGET)),
    "fov_deg": Key("float", "30", lo=0, hi=90, lo_open=True, help="half-angle of the FoV"),
    "snr_db": Key("floats", "0,5,10,15"),
    "separation_deg": Key("floats", ""),
    "trials": Key("int", "500", lo=1),
    "window_deg": Key("float", "3", lo=0, lo_open=True),
    "grid_size": Key("int", "300", lo=2),
    "focuss_p": Key("float", "0.8", lo=0, hi=2, lo_open=True),
    "focuss_regularization": Key("float", "1.0", lo=0),
    "focuss_max_iters": Key("int", "30", lo=1),
    "focuss_rel_tol": Key("float", "1e-6", lo=0),
    "focuss_prune_tol": Key("float", "1e-8", lo=0),
    "gamma": Key("str", "train", help="relative threshold or 'train'"),
    "gamma_grid": Key("floats", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"),
    "train_trials": Key("int", "100", lo=1),
}

SCHEMAS: Dict[str, Dict[str, Key]] = {
    "bound": {
        **COMMON,
        "geometry": Key("path"),
        "fov_deg": Key("float", "30", lo=0, hi=90, lo_open=True, help="half-angle of the FoV"),
        "snr_db": Key("floats"),
        "snr": Key("floats"),
        "snr_unit": Key("choice", "db", choices=("db", "linear")),
        "out": Key("path"),
    },
    "design": {
        **COMMON,
        "m": Key("int", "3", lo=1),
        "n": Key("int", "4", lo=1),
        "tx_min_sep": Key("length", "3lam", lo=0),
        "rx_min_sep": Key("length", "0.5lam", lo=0),
        "tx_lower": Key("length", "0mm"),
        "tx_upper": Key("length", "60mm"),
        "rx_lower": Key("length", "0mm"),
        "rx_upper": Key("length", "60mm"),
        "fov_deg": Key("floats", "5,15,30", help="FoV half-angles averaged in the cost"),
        "snr_db": Key("float", "5"),
        "iterations": Key("int", "1500", lo=0),
        "restarts": Key("int", "4", lo=1),
        "cooling": Key("float", "0.985", lo=0, hi=1, lo_open=True),
        "step_start": Key("float", "0.1", lo=0, lo_open=True),
        "step_end": Key("float", "0.002", lo=0, lo_open=True),
        "initial_temperature": Key("float", "0.05", lo=0),
        "workers": Key("int", "1", lo=1),
        "out": Key("path"),
        "trace": Key("path", ""),
    },
    "evaluate": {**COMMON, **SCENARIO, "geometry": Key("paths"), "out": Key("path")},
    "compare": {**COMMON, **SCENARIO, "geometry": Key("paths"), "out": Key("path")},
}

REQUIRED = {"bound": ("geometry", "out"), "design": ("out",),
            "evaluate": ("geometry", "out"), "compare": ("geometry", "out")}


def read_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _read_file(path: str) -> Dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return read_config_text(fh.read(), path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    raw: Dict[str, str]  # resolved textual values, unit suffixes kept
    values: Dict[str, Any]  # normalized to meters, linear SNR, u-domain FoV
    seed: int

    @property
    def config_hash(self) -> str:
        canon = "\n".join(f"{k}={self.raw[k]}" for k in sorted(self.raw))
        return hashlib.sha256(f"{self.subcommand}\n{canon}".encode()).hexdigest()[:16]

    def header(self) -> str:
        return f"# wwbarray {self.subcommand} config_hash={self.config_hash} seed={self.seed}"


def _check_range(key: str, spec: Key, v: float) -> None:
    if spec.lo is not None and (v < spec.lo or (spec.lo_open and v == spec.lo)):
        raise ConfigError(f"{key}: value {v} out of range")
    if spec.hi is not None and (v > spec.hi or (spec.hi_open and v == spec.hi)):
        raise ConfigError(f"{key}: value {v} out of range")


def _convert(key: str, spec: Key, text: str, wavelength: float) -> Any:
    try:
        if spec.kind == "int":
            v = _number(text, int)
        elif spec.kind == "float":
            v = _number(text, float)
        elif spec.kind == "floats":
            v = _list(text, float)
        elif spec.kind == "length":
            v = parse_length(text, wavelength)
        elif spec.kind == "paths":
            v = tuple(text.replace(",", " ").split())
        elif spec.kind == "choice":
            if text not in spec.choices:
                raise ValueError(f"expected one of {', '.join(spec.choices)}")
            v = text
        else:
            v = text
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    for item in (v if isinstance(v, tuple) and spec.kind == "floats" else (v,)):
        if isinstance(item, (int, float)) and not isinstance(item, bool):
            if not np.isfinite(item):
                raise ConfigError(f"{key}: non-finite value")
            _check_range(key, spec, item)
    return v


def substream_seed(master: int, name: str) -> int:
    """Stable child seed for a named randomness stream."""
    ss = np.random.SeedSequence([master, zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def parse_config(subcommand: str, settings: Dict[str, str]) -> RunConfig:
    """Validate and normalize textual settings for ``subcommand``."""
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    schema = SCHEMAS[subcommand]
    unknown = sorted(set(settings) - set(schema))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    raw = {k: spec.default for k, spec in schema.items() if spec.default is not None}
    raw.update(settings)
    for key in REQUIRED[subcommand]:
        if not raw.get(key):
            raise ConfigError(f"{key}: required")
    freq = _convert("frequency_ghz", schema["frequency_ghz"], raw["frequency_ghz"], 1.0)
    wavelength = SPEED_OF_LIGHT / (freq * 1e9)
    values: Dict[str, Any] = {"wavelength": wavelength}
    for key, text in raw.items():
        values[key] = _convert(key, schema[key], text, wavelength)

    if subcommand == "bound":
        if ("snr" in settings) == ("snr_db" in settings):
            raise ConfigError("snr: give exactly one of snr_db or snr (with snr_unit)")
        if "snr_db" in settings:
            values["snr_linear"] = tuple(10.0 ** (v / 10.0) for v in values["snr_db"])
            values["snr_label"] = values["snr_db"]
        elif values["snr_unit"] == "db":
            values["snr_linear"] = tuple(10.0 ** (v / 10.0) for v in values["snr"])
            values["snr_label"] = values["snr"]
        else:
            if any(v < 0 for v in values["snr"]):
                raise ConfigError("snr: linear SNR must be >= 0")
            values["snr_linear"] = values["snr"]
            values["snr_label"] = tuple(10.0 * np.log10(v) if v > 0 else -np.inf
                                        for v in values["snr"])
        if not values["snr_linear"]:
            raise ConfigError("snr: empty list")
        values["delta_u"] = fov_delta_u(values["fov_deg"])
    elif subcommand == "design":
        if not values["fov_deg"]:
            raise ConfigError("fov_deg: empty list")
        if any(not 0 < v <= 90 for v in values["fov_deg"]):
            raise ConfigError("fov_deg: half-angles must lie in (0, 90]")
        values["delta_u"] = tuple(fov_delta_u(v) for v in sorted(values["fov_deg"]))
    else:
        values["delta_u"] = fov_delta_u(values["fov_deg"])
        if subcommand == "evaluate" and len(values["geometry"]) < 1:
            raise ConfigError("geometry: required")
        if values["gamma"] != "train":
            try:
                g = float(values["gamma"])
            except ValueError:
                raise ConfigError("gamma: expected a number or 'train'") from None
            if not 0 <= g <= 1:
                raise ConfigError("gamma: value out of range")
    return RunConfig(subcommand, raw, values, values["seed"])


# --- output helpers ----------------------------------------------------------

def _g12(x: float) -> str:
    return f"{x:.12g}"


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def meta_text(cfg: RunConfig) -> str:
    lines = [cfg.header(), f"subcommand = {cfg.subcommand}", f"config_hash = {cfg.config_hash}"]
    lines += [f"{k} = {cfg.raw[k]}" for k in sorted(cfg.raw)]
    return "\n".join(lines) + "\n"


def _inner_cfg(cfg: RunConfig) -> InnerOptConfig:
    v = cfg.values
    return InnerOptConfig(h_u_floor=v["h_u_floor"], restarts=v["inner_restarts"],
                          iterations=v["inner_iterations"], cooling=v["inner_cooling"],
                          probes=v["inner_probes"], seed=substream_seed(cfg.seed, "inner"))


def _scenario(cfg: RunConfig) -> Tuple[ScenarioConfig, Optional[ScenarioConfig]]:
    v = cfg.values
    fc = FocussConfig(p=v["focuss_p"], regularization=v["focuss_regularization"],
                      max_iters=v["focuss_max_iters"], rel_tol=v["focuss_rel_tol"],
                      prune_tol=v["focuss_prune_tol"])
    try:
        sc = ScenarioConfig(mode=v["mode"], fov_deg=(-v["fov_deg"], v["fov_deg"]),
                            snr_db=v["snr_db"], separation_deg=v["separation_deg"],
                            trials=v["trials"], window_deg=v["window_deg"],
                            grid_size=v["grid_size"], focuss=fc,
                            seed=substream_seed(cfg.seed, "eval"))
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from None
    train = None
    if v["gamma"] == "train":
        if not v["gamma_grid"]:
            raise ConfigError("gamma_grid: empty list")
        train = ScenarioConfig(mode=sc.mode, fov_deg=sc.fov_deg, snr_db=sc.snr_db,
                               separation_deg=sc.separation_deg, trials=v["train_trials"],
                               window_deg=sc.window_deg, grid_size=sc.grid_size, focuss=fc,
                               seed=substream_seed(cfg.seed, "train"))
    return sc, train


def metrics_csv_rows(report: MetricsReport) -> List[str]:
    rows = ["sweep_value,pd,far,pr,rmse_deg,trials,gamma"]
    for p in report.points:
        rows.append(",".join([_g12(p.sweep_value), _g12(p.pd), _g12(p.far), _g12(p.pr),
                              _g12(p.rmse_deg), str(p.trials), _g12(p.gamma)]))
    return rows


# --- subcommands -------------------------------------------------------------

def _load_geometries(paths: Sequence[str]):
    out = []
    for p in paths:
        try:
            out.append(load_geometry(p))
        except OSError as exc:
            raise ConfigError(f"geometry: cannot read {p}: {exc.strerror}") from None
        except GeometryError as exc:
            raise ConfigError(f"geometry: {p}: {exc}") from None
    return out


def run_bound(cfg: RunConfig) -> Dict[str, str]:
    v = cfg.values
    (geom,) = _load_geometries([v["geometry"]])
    curve = bound_curve(geom, v["snr_linear"], v["delta_u"], _inner_cfg(cfg))
    rows = [cfg.header(), "snr_db,bound,h_u_star,h_phi_star"]
    for label, (_, res) in zip(v["snr_label"], curve):
        rows.append(",".join(_g12(x) for x in (label, res.value, res.h_u, res.h_phi)))
    return {v["out"]: "\n".join(rows) + "\n"}


def run_design(cfg: RunConfig) -> Dict[str, str]:
    v = cfg.values
    try:
        cons = PlacementConstraints(v["tx_min_sep"], v["rx_min_sep"], v["tx_lower"],
                                    v["tx_upper"], v["rx_lower"], v["rx_upper"])
        problem = DesignProblem(v["m"], v["n"], cons, FovSchedule(v["delta_u"]), v["snr_db"],
                                v["wavelength"], _inner_cfg(cfg))
        outer = OuterConfig(iterations=v["iterations"], restarts=v["restarts"],
                            cooling=v["cooling"], step_start=v["step_start"],
                            step_end=v["step_end"], initial_temperature=v["initial_temperature"],
                            seed=substream_seed(cfg.seed, "design"), workers=v["workers"])
    except ValueError as exc:
        raise ConfigError(f"constraints: {exc}") from None
    res = optimize_array(problem, outer)
    comment = (f"wwbarray design config_hash={cfg.config_hash} seed={cfg.seed}\n"
               f"objective {res.objective!r}")
    out = {v["out"]: format_geometry(res.geometry, comment)}
    if v["trace"]:
        rows = [cfg.header(), "restart,iteration,objective,accepted,best"]
        for e in res.trace:
            rows.append(f"{e.restart},{e.iteration},{e.objective!r},{int(e.accepted)},{e.best!r}")
        out[v["trace"]] = "\n".join(rows) + "\n"
    return out


def _evaluate_one(geom, sc, train, cfg) -> MetricsReport:
    v = cfg.values
    gamma = (train_threshold(geom, train, v["gamma_grid"]) if train is not None
             else float(v["gamma"]))
    return monte_carlo(geom, sc, gamma)


def run_evaluate(cfg: RunConfig) -> Dict[str, str]:
    v = cfg.values
    geoms = _load_geometries(v["geometry"])
    sc, train = _scenario(cfg)
    rows = [cfg.header()]
    multi = len(geoms) > 1 or cfg.subcommand == "compare"
    for i, (path, geom) in enumerate(zip(v["geometry"], geoms)):
        report = _evaluate_one(geom, sc, train, cfg)
        if multi:
            if i:
                rows.append("")
            rows.append(f"# array={os.path.basename(path)}")
        rows.extend(metrics_csv_rows(report))
    return {v["out"]: "\n".join(rows) + "\n"}


RUNNERS: Dict[str, Callable[[RunConfig], Dict[str, str]]] = {
    "bound": run_bound, "design": run_design, "evaluate": run_evaluate, "compare": run_evaluate,
}


def run(cfg: RunConfig) -> int:
    """Execute a resolved config; outputs are written only after everything succeeded."""
    outputs = RUNNERS[cfg.subcommand](cfg)
    primary = cfg.values["out"]
    outputs[os.path.join(os.path.dirname(os.path.abspath(primary)), "run.meta")] = meta_text(cfg)
    for path, text in outputs.items():
        write_atomic(path, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wwbarray", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value settings file")
        if name in ("evaluate", "compare"):
            p.add_argument("--scenario", help="scenario settings file")
        for key, spec in schema.items():
            flag = "--" + key.replace("_", "-")
            if spec.kind == "paths":
                p.add_argument(flag, dest=key, nargs="+", help=spec.help or None)
            else:
                p.add_argument(flag, dest=key, help=spec.help or None)
    return parser


def settings_from_args(args: argparse.Namespace) -> Dict[str, str]:
    settings: Dict[str, str] = {}
    if args.config:
        settings.update(_read_file(args.config))
    if getattr(args, "scenario", None):
        settings.update(_read_file(args.scenario))
    for key in SCHEMAS[args.subcommand]:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = " ".join(val) if isinstance(val, list) else val
    return settings


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.subcommand, settings_from_args(args))
        return run(cfg)
    except ConfigError as exc:
        print(f"wwbarray: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BoundError, DesignError, EvaluationError, FloatingPointError) as exc:
        print(f"wwbarray: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"wwbarray: i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
