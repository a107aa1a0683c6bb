"""Command-line entry point: ``mimic-sem <command> --config cfg.yaml --out dir``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import io as mio
from . import pipeline
from .estimation import InformationMatrixError, SingularCovarianceError

EXIT_SCHEMA = 2
EXIT_CONVERGENCE = 3
EXIT_SINGULAR = 4

COMMANDS = {
    "ingest": (pipeline.ingest, "validate raw query counts and write standardized datasets"),
    "fit": (pipeline.fit_periods, "fit the MIMIC model per period and write fit reports"),
    "score": (pipeline.score_periods, "compute, scale and rank latent index scores"),
    "compare": (pipeline.compare, "pair and correlate the indices of two periods"),
    "ekc": (pipeline.ekc, "loess curve of the index against income with a 95% band"),
    "simulate": (pipeline.simulate_data, "write a simulated dataset"),
    "recover": (pipeline.recover, "Monte Carlo parameter-recovery study"),
    "run": (pipeline.run_pipeline, "full pipeline: fit, score, ekc and compare"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimic-sem", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML configuration file")
        p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    func, _ = COMMANDS[args.command]
    try:
        cfg = mio.load_config(args.config)
        func(cfg, args.out)
    except (mio.SchemaError, FileNotFoundError) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except pipeline.ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (SingularCovarianceError, InformationMatrixError, np.linalg.LinAlgError) as exc:
        print(f"singularity error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    return 0


if __name__ == "__main__":
    sys.exit(main())
