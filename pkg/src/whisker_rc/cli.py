"""Command line entry point.

    whisker-rc <gen|train|eval|detect|mixture|navigate|report> --config PATH --out DIR [--seed N]

Exit codes: 0 success, 2 usage or config error, 3 numerical failure, 4 I/O.
"""
from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ArtifactIOError, NumericalError, WhiskerRCError
from .harness import STAGES, Run, build_report, emit_report, run_config

COMMANDS = STAGES + ("report",)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whisker-rc",
                                     description="Tapered-whisker reservoir computing experiments.")
    parser.add_argument("command", choices=COMMANDS, help="stage to run, or 'report'")
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--out", required=True, help="output root; artifacts go to OUT/<config hash>/")
    parser.add_argument("--seed", type=int, default=None, help="override the config master seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                print("whisker-rc: error: --seed must be >= 0", file=sys.stderr)
                return 2
            config = config.with_seed(args.seed)
        if args.command == "report":
            from .figures import render_figures

            run = Run(config, args.out)
            if not run.dir.exists():
                raise ArtifactIOError(f"no artifacts for this config under {run.dir}")
            report = build_report(run)
            written = []
            for fmt in config.report.formats:
                written += emit_report(report, fmt, run.dir)
            if config.report.figures:
                written += render_figures(run, report)
            for path in written:
                print(path)
            return 0
        report = run_config(config, [args.command], args.out)
        for stage, state in report.stage_status.items():
            extra = f" in {report.timings_s[stage]:.1f} s" if stage in report.timings_s else ""
            print(f"{stage}: {state}{extra} -> {Run(config, args.out).dir}")
        return 0
    except NumericalError as exc:
        print(f"whisker-rc: numerical error: {exc}", file=sys.stderr)
        return exc.exit_code
    except WhiskerRCError as exc:
        print(f"whisker-rc: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"whisker-rc: I/O error: {exc}", file=sys.stderr)
        return ArtifactIOError.exit_code


if __name__ == "__main__":
    sys.exit(main())
