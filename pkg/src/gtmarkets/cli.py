"""Command line: ``gtmarkets {ingest,ccf,reg,tvp,report} --config PATH``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .pipeline import MODELS, PipelineConfig, Run, _stage, cmd_ccf, cmd_ingest, cmd_reg, cmd_report, cmd_tvp
from .regress import SEKind
from .timeseries import Source


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gtmarkets", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides [run] out)")
    common.add_argument("--offline", action="store_true", help="never contact the Trends endpoint")
    common.add_argument("--source", choices=[s.value for s in Source], help="social data source")
    common.add_argument("--se", choices=["hc1", "nw"], help="robust standard-error estimator")
    common.add_argument("--nw-lags", type=int, help="Newey-West bandwidth (default: rule of thumb)")
    common.add_argument("--tails", type=int, choices=[1, 2],
                        help="p-values for significance stars: 2 = two-sided (default), 1 = one-sided")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="build the aligned panel")
    sub.add_parser("ccf", parents=[common], help="lead-lag table against the reference country")
    reg = sub.add_parser("reg", parents=[common], help="constant-parameter AR(1)-X regressions")
    reg.add_argument("--model", choices=MODELS, default="italy_gt")
    sub.add_parser("tvp", parents=[common], help="time-varying coefficient fits")
    sub.add_parser("report", parents=[common], help="run every stage and write the manifest")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {"out": args.out, "seed": args.seed, "tails": args.tails}
    if args.offline:
        overrides["gt_mode"] = "offline"
    if args.se:
        overrides["se_kind"] = SEKind.parse(args.se, args.nw_lags)
    if args.source:
        overrides["reg_source"] = overrides["tvp_source"] = Source(args.source)
    try:
        config = PipelineConfig.load(args.config, **overrides)
    except (OSError, ValueError) as exc:
        print(f"gtmarkets: bad configuration: {exc}", file=sys.stderr)
        return 2

    if args.command == "report":
        run = cmd_report(config)
    else:
        run = Run(config)
        if args.command == "ingest":
            _stage(run, "ingest", cmd_ingest, config, run)
        elif args.command == "ccf":
            _stage(run, "ccf", cmd_ccf, config, run)
        elif args.command == "reg":
            _stage(run, f"reg:{args.model}", cmd_reg, config, run, args.model)
        elif args.command == "tvp":
            _stage(run, "tvp", cmd_tvp, config, run)
        run.write_manifest()
    for name, status in run.stages.items():
        print(f"{name}: {status}")
    print(f"artifacts in {run.out}")
    return 1 if run.failed else 0


if __name__ == "__main__":
    sys.exit(main())
