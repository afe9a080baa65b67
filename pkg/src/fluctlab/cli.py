"""Command-line front end: ``fluctlab run|validate|list-experiments``.

Exit codes: 0 success, 2 invalid config, 3 violated numerical invariant,
4 I/O failure.  ``FLUCTLAB_THREADS`` caps BLAS/OpenMP threads.
"""
from __future__ import annotations

import os
import sys

THREADS_ENV = "FLUCTLAB_THREADS"
if os.environ.get(THREADS_ENV):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ[THREADS_ENV])

import argparse  # noqa: E402
import csv  # noqa: E402
import io  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import subprocess  # noqa: E402
import tempfile  # noqa: E402
import time  # noqa: E402
from datetime import datetime, timezone  # noqa: E402
from pathlib import Path  # noqa: E402

from . import __version__  # noqa: E402
from .config import EXPERIMENTS, ConfigError, load_config  # noqa: E402

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO = 0, 2, 3, 4
log = logging.getLogger("fluctlab")


def _fmt(v) -> str:
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):
        v = v.item()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def table_csv(table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def code_version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def cmd_run(path: str, output_dir: str | None = None) -> int:
    from .experiments import InvariantViolation, run_experiment

    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    out = Path(output_dir or cfg.output_dir)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    status, message, result = "ok", "", None
    try:
        result = run_experiment(cfg)
        if result.violations:
            status, message = "invariant_violation", "; ".join(result.violations)
    except InvariantViolation as exc:
        status, message = "invariant_violation", str(exc)
    wall = time.perf_counter() - t0
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "config_path": str(path),
        "code_version": code_version(),
        "started_utc": started,
        "wall_time_s": wall,
        "status": status,
        "message": message,
        "threads": os.environ.get(THREADS_ENV),
        "outputs": [],
        "diagnostics": {},
    }
    try:
        if result is not None:
            for tab in result.tables:
                name = f"{tab.name}.csv"
                atomic_write(out / name, table_csv(tab))
                manifest["outputs"].append(name)
            for name, text in result.dumps.items():
                atomic_write(out / name, text)
                manifest["outputs"].append(name)
            manifest["diagnostics"] = result.diagnostics
        atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=_fmt) + "\n")
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    if status != "ok":
        print(f"invariant violated: {message}", file=sys.stderr)
        return EXIT_INVARIANT
    print(f"{cfg.experiment}: wrote {len(manifest['outputs'])} file(s) to {out} in {wall:.1f}s")
    return EXIT_OK


def cmd_validate(path: str) -> int:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{path}: valid {cfg.experiment} config")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fluctlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None, help="override output_dir from the config")
    p_val = sub.add_parser("validate", help="parse and validate a config without running it")
    p_val.add_argument("config")
    sub.add_parser("list-experiments", help="print the known experiment names")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.output_dir)
    if args.command == "validate":
        return cmd_validate(args.config)
    for name in EXPERIMENTS:
        print(name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
