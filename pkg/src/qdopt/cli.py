"""``qdopt`` command-line runner.

Every subcommand writes ``<output_dir>/<command>.json`` (a self-contained run
report) and ``<output_dir>/<command>.csv`` (a fixed-header table, numbers to
12 significant digits).  Settings come from ``--config FILE`` and flags; flags
win over the file, the file wins over built-in defaults.

Exit codes: 0 all checks pass, 1 a check failed, 2 invalid config or input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .experiments import resolve_config, run_experiment
from .fock import TruncationError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    return json.loads(resources.files("qdopt").joinpath("schema/config.schema.json").read_text())


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {path}: {exc.message}") from None


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _grid(text: str) -> dict:
    try:
        extent, step = text.split(":")
        return {"extent": float(extent), "step": float(step)}
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like EXTENT:STEP, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qdopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *names):
        p.add_argument("--config", type=Path, help="JSON config file; flags override its values")
        p.add_argument("--out", dest="output_dir", help="output directory (default: qdopt-out)")
        for name in names:
            OPTIONS[name](p)
        return p

    common(sub.add_parser("verify-ml", help="coherent projectors are ML optimal"), "L", "dim", "beta", "tol", "residual_tol")
    common(
        sub.add_parser("discriminate", help="binary coherent discrimination: fixed point vs Helstrom"),
        "alpha",
        "prior",
        "dim",
        "tol",
        "certificate_tol",
        "oracle_tol",
    )
    common(sub.add_parser("info", help="numeric vs analytic heterodyne information"), "S", "L", "dim", "grid", "tol")
    common(
        sub.add_parser("verify-local-opt", help="B - D >= 0 sweep for the information criterion"),
        "S",
        "L",
        "dim",
        "beta",
        "tol",
        "validation_tol",
        "spectral_tol",
    )
    common(sub.add_parser("verify-ineq9", help="exhaustive occupation-number inequality"), "h", "nmax", "nmax_multimode")
    audit = common(
        sub.add_parser("povm-audit", help="PSD and identity-resolution audit of a POVM"),
        "dim",
        "grid",
        "deficit_tol",
        "psd_tol",
    )
    audit.add_argument("povm_file", nargs="?", help="serialized POVM (JSON); omit to audit --grid")
    common(
        sub.add_parser("verify-perturb", help="information of perturbed vs coherent POVMs"),
        "S",
        "L",
        "dim",
        "grid",
        "scale",
        "seed",
        "samples",
        "tol",
        "baseline_tol",
    )
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config_file", type=Path)
    run.add_argument("--out", dest="output_dir")
    return parser


def _opt(flag, **kw):
    return lambda p: p.add_argument(flag, default=None, **kw)


OPTIONS = {
    "S": _opt("--S", type=_floats, help="signal covariances, comma separated"),
    "L": _opt("--L", type=_floats, help="noise covariances (>= 1), comma separated"),
    "dim": _opt("--dim", type=int, help="Fock dimension n_max + 1"),
    "beta": lambda p: (
        p.add_argument("--beta-extent", dest="beta_extent", type=float, default=None),
        p.add_argument("--beta-step", dest="beta_step", type=float, default=None),
    ),
    "grid": _opt("--grid", type=_grid, help="EXTENT:STEP (extent in standard deviations for info/verify-perturb)"),
    "alpha": _opt("--alpha", type=_floats, help="coherent amplitudes, comma separated"),
    "prior": _opt("--prior", type=float, help="prior of the +alpha hypothesis"),
    "h": _opt("--h", type=_floats, action="append", help="per-mode h values (repeat for several tuples)"),
    "nmax": _opt("--nmax", type=int, help="occupation bound for single-mode tuples"),
    "nmax_multimode": _opt("--nmax-multimode", dest="nmax_multimode", type=int),
    "seed": _opt("--seed", type=int),
    "samples": _opt("--samples", type=int),
    "scale": _opt("--scale", type=float),
    "tol": _opt("--tol", type=float),
    "residual_tol": _opt("--residual-tol", dest="residual_tol", type=float),
    "certificate_tol": _opt("--certificate-tol", dest="certificate_tol", type=float),
    "oracle_tol": _opt("--oracle-tol", dest="oracle_tol", type=float),
    "validation_tol": _opt("--validation-tol", dest="validation_tol", type=float),
    "spectral_tol": _opt("--spectral-tol", dest="spectral_tol", type=float),
    "deficit_tol": _opt("--deficit-tol", dest="deficit_tol", type=float),
    "psd_tol": _opt("--psd-tol", dest="psd_tol", type=float),
    "baseline_tol": _opt("--baseline-tol", dest="baseline_tol", type=float),
}

NON_CONFIG = {"command", "config", "config_file"}


def _read_json(path: Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def config_from_args(args: argparse.Namespace) -> dict:
    if args.command == "run":
        doc = _read_json(args.config_file)
        validate_config(doc)
        command, file_values = doc["command"], doc
        flags = {"output_dir": args.output_dir}
    else:
        command = args.command
        file_values = _read_json(args.config) if args.config else {}
        if file_values:
            validate_config({"command": command, **file_values})
        flags = {k: v for k, v in vars(args).items() if k not in NON_CONFIG}
    cfg = resolve_config(command, file_values, flags)
    validate_config(cfg)
    return cfg


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(x) for x in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def execute(cfg: dict) -> tuple[int, dict]:
    """Run one experiment and write its report and table; returns (exit code, report)."""
    out = Path(cfg.get("output_dir", "qdopt-out"))
    start = time.perf_counter()
    report = {"command": cfg["command"], "config": cfg, "version": __version__}
    try:
        result = run_experiment(cfg)
    except (ArithmeticError, np.linalg.LinAlgError, TruncationError) as exc:
        code, report["error"] = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    except (ValueError, OSError, KeyError) as exc:
        code, report["error"] = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    else:
        code = EXIT_OK if result.passed else EXIT_CHECK
        report["checks"] = [c.to_dict() for c in result.checks]
        report["diagnostics"] = result.diagnostics
        report["results"] = result.payload
        report["passed"] = result.passed
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{cfg['command']}.csv").write_text(render_csv(result.header, result.rows))
    report["wall_time_s"] = time.perf_counter() - start
    report["exit_status"] = code
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg['command']}.json").write_text(json.dumps(_jsonable(report), indent=2) + "\n")
    return code, report


def _summary(report: dict) -> str:
    lines = []
    for c in report.get("checks", []):
        mark = "PASS" if c["passed"] else "FAIL"
        lines.append(f"{mark}  {c['name']}: {format_value(c['value'])} {c['comparison']} {format_value(c['tolerance'])}")
    if "error" in report:
        lines.append(f"ERROR {report['error']}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"qdopt: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, report = execute(cfg)
    print(_summary(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
