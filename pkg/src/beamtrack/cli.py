"""Command-line front end: ``beamtrack {build-lut,track,mse-sweep,crlb-curve}``.

Configuration is a JSON object (schema version 1). Values resolve as
flags > file > defaults; unknown fields are rejected. Every command writes
its outputs plus a ``manifest_<command>.json`` into ``--out-dir``; all files
are written to a temporary name first and moved into place.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from beamtrack import __version__
from beamtrack.array_geometry import ApertureClass, ArrayConfig, build_codebook
from beamtrack.beam_select import DEFAULT_SIGMA_P_LIST, LookupTable, build_lookup_table, pair_indices
from beamtrack.crlb import crlb_curve, write_crlb_csv
from beamtrack.estimation import WINDOW_SIGMAS
from beamtrack.exceptions import BeamTrackError, ConfigurationError
from beamtrack.sim import DEFAULT_SCHEMES, Scheme, SimConfig, run_mse_sweep, track_traces

log = logging.getLogger("beamtrack")

SCHEMA_VERSION = 1

_NUM = (int, float)
# field -> (default, accepted JSON types)
FIELDS = {
    "schema_version": (SCHEMA_VERSION, int),
    "n_tx": (32, int),
    "n_rx": (32, int),
    "spacing_ratio": (0.5, _NUM),
    "grid_size": (192, int),
    "estimation_grid_size": (None, int),
    "sigma_p": (0.05, _NUM),
    "sigma_p_list": (list(DEFAULT_SIGMA_P_LIST), list),
    "snr_db": (10.0, _NUM),
    "snr_db_list": ([0.0, 5.0, 10.0, 15.0, 20.0], list),
    "horizon": (100, int),
    "trials": (1000, int),
    "scheme": ("proposed", str),
    "schemes": ([s.name for s in DEFAULT_SCHEMES], list),
    "seed": (0, int),
    "warmup": (5, int),
    "feedback_delay": (1, int),
    "cold_start_beams": (32, int),
    "fixed_pair_aperture": ("full", str),
    "on_grid": (False, bool),
    "window_sigmas": (WINDOW_SIGMAS, _NUM),
    "lut_file": (None, str),
    "crlb_center": (0.0, _NUM),
    "crlb_separation": (None, int),
    "crlb_classes": (None, list),
    "crlb_points": (2001, int),
    "noise_var": (1.0, _NUM),
}


def _check_type(name: str, value):
    default, types = FIELDS[name]
    if value is None and default is None:
        return value
    # bool is an int subclass; keep the two apart
    if isinstance(value, bool) and types is not bool:
        raise ConfigurationError(f"config field {name!r} has the wrong type (got boolean)")
    if not isinstance(value, types):
        raise ConfigurationError(f"config field {name!r} has the wrong type (got {type(value).__name__})")
    if types is list and name in ("sigma_p_list", "snr_db_list"):
        if not value or any(isinstance(v, bool) or not isinstance(v, _NUM) for v in value):
            raise ConfigurationError(f"config field {name!r} must be a nonempty list of numbers")
    return value


def load_config(path: str | None, overrides: dict) -> dict:
    """Merge defaults, the JSON file and flag overrides, validating every field."""
    cfg = {k: v for k, (v, _) in FIELDS.items()}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        for key, value in data.items():
            if key not in FIELDS:
                raise ConfigurationError(f"unknown config field {key!r}")
            cfg[key] = _check_type(key, value)
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = _check_type(key, value)
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigurationError(f"config field 'schema_version' must be {SCHEMA_VERSION}, got {cfg['schema_version']}")
    return cfg


def _lut(cfg: dict) -> LookupTable | None:
    if cfg["lut_file"] is None:
        return None
    lut = LookupTable.load(cfg["lut_file"])
    if lut.grid_size not in (None, cfg["grid_size"]) or lut.num_antennas not in (None, cfg["n_tx"]):
        raise ConfigurationError("config field 'lut_file' was built for a different grid_size or n_tx")
    return lut


def sim_config(cfg: dict, schemes=None) -> SimConfig:
    try:
        return SimConfig(
            n_tx=cfg["n_tx"],
            n_rx=cfg["n_rx"],
            spacing_ratio=float(cfg["spacing_ratio"]),
            grid_size=cfg["grid_size"],
            estimation_grid_size=cfg["estimation_grid_size"],
            sigma_p=float(cfg["sigma_p"]),
            snr_db_list=tuple(cfg["snr_db_list"]),
            horizon=cfg["horizon"],
            trials=cfg["trials"],
            schemes=tuple(cfg["schemes"] if schemes is None else schemes),
            seed=cfg["seed"],
            warmup=cfg["warmup"],
            feedback_delay=cfg["feedback_delay"],
            cold_start_beams=cfg["cold_start_beams"],
            fixed_pair_aperture=cfg["fixed_pair_aperture"],
            on_grid=cfg["on_grid"],
            window_sigmas=float(cfg["window_sigmas"]),
            sigma_p_list=tuple(float(s) for s in cfg["sigma_p_list"]),
            lut=_lut(cfg),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from None


def _codebook(cfg: dict):
    return build_codebook(ArrayConfig(cfg["n_tx"], float(cfg["spacing_ratio"])), cfg["grid_size"])


def _atomic_write(path: Path, writer) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _write_manifest(out_dir: Path, command: str, cfg: dict, outputs: list, started: float) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg["seed"],
        "config": cfg,
        "outputs": [str(p) for p in outputs],
        "duration_s": round(time.perf_counter() - started, 6),
    }
    path = out_dir / f"manifest_{command}.json"
    _atomic_write(path, lambda tmp: Path(tmp).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n"))
    return path


def _scheme_file(scheme: Scheme) -> str:
    return "trace_" + scheme.name.replace(":", "-") + ".csv"


def _parse_schemes(text: str) -> list:
    if text.strip().lower() == "all":
        return [s.name for s in DEFAULT_SCHEMES]
    return [Scheme.parse(part).name for part in text.split(",") if part.strip()]


def cmd_build_lut(cfg: dict, out_dir: Path) -> list:
    lut = build_lookup_table(_codebook(cfg), cfg["sigma_p_list"])
    path = out_dir / "lut.csv"
    _atomic_write(path, lut.save)
    return [path]


def cmd_track(cfg: dict, out_dir: Path) -> list:
    schemes = _parse_schemes(cfg["scheme"])
    sim = sim_config(cfg, schemes)
    outputs = []
    for trace in track_traces(sim, float(cfg["snr_db"]), sim.schemes):
        path = out_dir / _scheme_file(Scheme.parse(trace.scheme))
        _atomic_write(path, trace.to_csv)
        outputs.append(path)
    return outputs


def cmd_mse_sweep(cfg: dict, out_dir: Path) -> list:
    report = run_mse_sweep(sim_config(cfg))
    path = out_dir / "mse_report.csv"
    _atomic_write(path, report.to_csv)
    return [path]


def cmd_crlb_curve(cfg: dict, out_dir: Path) -> list:
    """Bound versus angle for a pair centred on ``crlb_center``.

    The pair geometry defaults to the lookup-table entry for ``sigma_p``.
    """
    codebook = _codebook(cfg)
    if cfg["crlb_separation"] is None:
        lut = _lut(cfg) or build_lookup_table(codebook, cfg["sigma_p_list"], report_monotonicity=False)
        separation, classes = lut.entry(float(cfg["sigma_p"]))
    else:
        separation = cfg["crlb_separation"]
        raw = cfg["crlb_classes"] or ["full", "full"]
        if len(raw) != 2:
            raise ConfigurationError("config field 'crlb_classes' must name two aperture classes")
        classes = tuple(ApertureClass.parse(c) for c in raw)
    if not cfg["noise_var"] > 0:
        raise ConfigurationError("config field 'noise_var' must be positive")
    if not -1.0 <= cfg["crlb_center"] < 1.0:
        raise ConfigurationError("config field 'crlb_center' must lie in [-1, 1)")
    if cfg["crlb_points"] < 2:
        raise ConfigurationError("config field 'crlb_points' must be at least 2")
    M = cfg["grid_size"]
    center = int(np.rint((cfg["crlb_center"] + 1.0) * M / 2.0)) % M
    i, j = pair_indices(codebook, separation, classes, center)
    beams = [codebook[int(i)], codebook[int(j)]]
    theta = np.linspace(-1.0, 1.0, cfg["crlb_points"])
    values = crlb_curve(beams, theta, float(cfg["noise_var"]))
    path = out_dir / "crlb_curve.csv"
    _atomic_write(path, lambda tmp: write_crlb_csv(tmp, theta, values))
    return [path]


COMMANDS = {
    "build-lut": cmd_build_lut,
    "track": cmd_track,
    "mse-sweep": cmd_mse_sweep,
    "crlb-curve": cmd_crlb_curve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beamtrack", description="Two-beam AoD tracking experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", default=".", help="output directory (created if missing)")
        p.add_argument("--scheme", help="track: a scheme or 'all'; mse-sweep: comma-separated schemes or 'all'")
        p.add_argument("--snr-db", help="track: one SNR; mse-sweep: comma-separated list")
        p.add_argument("--sigma-p", type=float)
        p.add_argument("--trials", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _overrides(args) -> dict:
    out = {"seed": args.seed, "sigma_p": args.sigma_p, "trials": args.trials, "horizon": args.horizon}
    if args.snr_db is not None:
        try:
            values = [float(v) for v in args.snr_db.split(",") if v.strip()]
        except ValueError:
            raise ConfigurationError(f"--snr-db expects numbers, got {args.snr_db!r}") from None
        if args.command == "track":
            if len(values) != 1:
                raise ConfigurationError("track takes exactly one --snr-db value")
            out["snr_db"] = values[0]
        else:
            out["snr_db_list"] = values
    if args.scheme is not None:
        if args.command == "mse-sweep":
            out["schemes"] = _parse_schemes(args.scheme)
        else:
            out["scheme"] = args.scheme
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "track":
            _parse_schemes(cfg["scheme"])
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.command](cfg, out_dir)
        manifest = _write_manifest(out_dir, args.command, cfg, outputs, started)
    except ConfigurationError as exc:
        print(f"beamtrack: configuration error: {exc}", file=sys.stderr)
        return 2
    except (BeamTrackError, ValueError, OSError) as exc:
        print(f"beamtrack: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    for path in outputs + [manifest]:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
