"""``simulate <config-file> [--output-dir D] [--threads N] [--seed S]``.

Exit codes: 0 success, 1 config error, 2 capacity error, 3 analysis error.
The default worker count comes from ``KPZSIM_THREADS`` (else 1).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .analysis import AnalysisError
from .pipeline import ConfigError, load_config, run
from .qstate import CapacityError, ValidationError

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_ANALYSIS = 0, 1, 2, 3
THREADS_ENV = "KPZSIM_THREADS"

log = logging.getLogger("kpzsim")


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description=__doc__.splitlines()[0])
    p.add_argument("config", help="flat key = value run configuration")
    p.add_argument("--output-dir", default=None, help="overrides output_dir from the config")
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    threads = args.threads if args.threads is not None else _default_threads()
    try:
        cfg = load_config(args.config, {"seed": args.seed})
    except (ConfigError, ValidationError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        artifacts = run(cfg, args.output_dir, workers=threads)
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except (ConfigError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name in artifacts:
        log.info("wrote %s", name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
