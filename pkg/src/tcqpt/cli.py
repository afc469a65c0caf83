"""Command line entry point ``tcqpt``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

__all__ = ["main", "build_parser"]

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
_PIPELINES = ("noise-bench", "qpt", "benchmarks", "compress", "irb")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tcqpt", description="Time-correlated noise characterization pipelines.")
    p.add_argument("pipeline", choices=_PIPELINES + ("plot",), help="pipeline to run, or 'plot' to render an existing output directory")
    p.add_argument("--config", type=Path, help="TOML config file (required except for 'plot')")
    p.add_argument("--out", type=Path, help="output directory (default ./out/<pipeline>)")
    p.add_argument("--seed", type=int, help="overrides sim.seed")
    p.add_argument("--plot", action="store_true", help="render one SVG per CSV after the run")
    p.add_argument("--threads", type=int, help="BLAS/OpenMP threads (overrides TCQPT_THREADS)")
    return p


def _threads(arg: int | None) -> int | None:
    n = arg if arg is not None else os.environ.get("TCQPT_THREADS")
    if n is None:
        return None
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be positive")
    for var in _THREAD_VARS:
        os.environ[var] = str(n)
    return n


def _config_error(out: Path, msg: str) -> int:
    out.mkdir(parents=True, exist_ok=True)
    rec = {"status": "error", "exit_code": 2, "error": "ConfigError", "message": msg}
    (out / "error.json").write_text(json.dumps(rec, indent=2, sort_keys=True))
    print(f"tcqpt: config error: {msg}", file=sys.stderr)
    return 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out or Path("out") / args.pipeline
    try:
        threads = _threads(args.threads)
    except ValueError as exc:
        return _config_error(out, f"threads: {exc}")

    # heavy imports after the thread environment is fixed
    from .config import ConfigError, parse_config
    from .pipelines import run_pipeline
    from .plotting import render_plots

    if args.pipeline == "plot":
        try:
            files = render_plots(out)
        except FileNotFoundError as exc:
            print(f"tcqpt: {exc}", file=sys.stderr)
            return 2
        print(f"wrote {len(files)} SVG file(s) under {out}")
        return 0
    if args.config is None:
        return _config_error(out, "--config is required")
    try:
        cfg = parse_config(args.config, args.pipeline)
        if args.seed is not None:
            cfg = cfg.with_value("sim.seed", args.seed, keep_sweep=True)
    except ConfigError as exc:
        return _config_error(out, str(exc))

    code = run_pipeline(cfg, out, threads=threads)
    if code != 0:
        err = json.loads((out / "error.json").read_text())
        print(f"tcqpt: {err['error']}: {err['message']}", file=sys.stderr)
        return code
    if args.plot:
        render_plots(out)
    print(f"{cfg.pipeline}: outputs in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
