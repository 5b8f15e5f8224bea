"""Command line entry point: ``atomlink <mode> --scenario FILE --out DIR``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from atomlink.fitting import FitConvergenceError
from atomlink.harness.pipeline import run
from atomlink.harness.scenario import MODES, ScenarioError, build_scenario, load_scenario
from atomlink.tweezer_holo import HologramConfigError

EXIT_OK, EXIT_SCHEMA, EXIT_NONCONVERGENCE = 0, 2, 3
OUT_ENV = "ATOMLINK_OUT"

log = logging.getLogger("atomlink")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="atomlink", description="atom-array waveguide interface simulator")
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--scenario", help="scenario file (INI sections of key = value)")
    ap.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./atomlink-out)")
    ap.add_argument("--seed", type=int, help="master seed, overrides the scenario")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for independent sequence blocks")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = args.out or os.environ.get(OUT_ENV) or "atomlink-out"
    try:
        if args.threads < 1:
            raise ScenarioError("--threads", "must be at least 1")
        if args.scenario:
            scenario = load_scenario(args.scenario, args.mode, args.seed)
        else:
            scenario = build_scenario(args.mode, args.seed)
        manifest = run(scenario, out, args.threads)
    except (ScenarioError, HologramConfigError) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"schema error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except FitConvergenceError as exc:
        print(f"fit did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    log.info("wrote %d files to %s", len(manifest.outputs), out)
    print(f"{scenario.mode}: {len(manifest.outputs)} files in {out} (scenario {manifest.scenario_digest[:12]})")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
