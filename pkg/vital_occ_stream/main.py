"""
Main entry point for the ``vital-occ-stream`` command line.

Subcommands: ``gen-scene``, ``run``, ``eval``, ``sweep`` and ``selfcheck``.
Exit codes: 0 success, 1 input error, 2 configuration error, 3 contract
violation or any unexpected failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from vital_occ_stream.cli.commands import RunManifest, cmd_eval, cmd_gen_scene, cmd_run, cmd_sweep
from vital_occ_stream.cli.report import format_report, report_filename, write_report
from vital_occ_stream.core.config import AblationPreset, load_pipeline_config
from vital_occ_stream.core.exceptions import ConfigurationError, ContractViolation, OccStreamError
from vital_occ_stream.testing.scenarios import (
    get_scenario,
    get_suite,
    list_available_scenarios,
    list_available_suites,
)
from vital_occ_stream.testing.selfcheck import SelfCheckRunner, format_results
from vital_occ_stream.utils.logging_config import LOG_FORMATS, setup_logging

logger = logging.getLogger(__name__)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--log-level", default="INFO", help="Logging level (DEBUG, INFO, WARNING, ERROR)")
    sub.add_argument("--log-format", choices=list(LOG_FORMATS), default="text", help="Log record format")


def _add_run_arguments(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=str, help="Run configuration YAML (default: shipped run_default.yaml)")
    sub.add_argument("--scene", type=str, help="Scene YAML or exported scene directory")
    sub.add_argument("--weights", type=str, help="Weight file stem (<stem>.manifest + <stem>.bin)")
    sub.add_argument("--random-weights", action="store_true", help="Use seeded untrained weights")
    sub.add_argument("--seed", type=int, help="Scene and weight seed (default: config runtime.seed)")
    sub.add_argument("--out", type=str, help="Output directory for reports and dumps")
    sub.add_argument("--detections", type=str, help="Replay detection file; switches the detector to replay")
    sub.add_argument("--rayiou", action="store_true", help="Add the RayIoU block to the report")
    sub.add_argument("--mask", action="store_true", help="Score visible cells only")
    sub.add_argument("--json", action="store_true", help="Write the report as JSON")
    sub.add_argument("--timings", action="store_true", help="Include per-stage latency in the report")
    sub.add_argument("--threads", type=int, help="Worker threads for data-parallel stages")
    sub.add_argument("--save-weights", type=str, help="Write the parameters used to this stem")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vital-occ-stream",
        description="Streaming camera-only 3D semantic occupancy engine",
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # gen-scene
    sub_gen = subparsers.add_parser("gen-scene", help="Generate a synthetic scene directory")
    sub_gen.add_argument("--scene", type=str, help="Scene YAML (default: shipped scene_default.yaml)")
    sub_gen.add_argument("--seed", type=int, default=0, help="Generation seed")
    sub_gen.add_argument("--out", type=str, required=True, help="Scene directory to write")
    _add_common(sub_gen)

    # run
    sub_run = subparsers.add_parser("run", help="Stream a scene through the pipeline and score it")
    _add_run_arguments(sub_run)
    sub_run.add_argument(
        "--ablation", choices=[p.value for p in AblationPreset], help="Stage preset overriding the config flags"
    )
    sub_run.add_argument("--dump-grids", action="store_true", help="Write pred/frame_XXXX.grid per frame")
    _add_common(sub_run)

    # sweep
    sub_sweep = subparsers.add_parser("sweep", help="Run every ablation preset on the same scene and weights")
    _add_run_arguments(sub_sweep)
    _add_common(sub_sweep)

    # eval
    sub_eval = subparsers.add_parser("eval", help="Score dumped prediction grids against ground truth")
    sub_eval.add_argument("--pred", type=str, required=True, help="Directory of predicted frame_XXXX.grid")
    sub_eval.add_argument("--gt", type=str, required=True, help="Directory of ground-truth frame_XXXX.grid")
    sub_eval.add_argument("--config", type=str, help="Run configuration supplying the RayIoU ray set")
    sub_eval.add_argument("--out", type=str, help="Output directory for the report")
    sub_eval.add_argument("--rayiou", action="store_true", help="Add the RayIoU block to the report")
    sub_eval.add_argument("--mask", action="store_true", help="Score visible cells only")
    sub_eval.add_argument("--json", action="store_true", help="Write the report as JSON")
    _add_common(sub_eval)

    # selfcheck
    sub_check = subparsers.add_parser("selfcheck", help="Run the built-in verification scenarios")
    target = sub_check.add_mutually_exclusive_group()
    target.add_argument("--suite", choices=list_available_suites(), default="quick", help="Scenario suite")
    target.add_argument("--scenario", type=str, help="Run a single named scenario")
    _add_common(sub_check)

    return parser


def _manifest(args: argparse.Namespace) -> RunManifest:
    return RunManifest(
        config_path=args.config,
        weights_path=args.weights,
        random_weights=args.random_weights,
        scene_path=args.scene,
        seed=args.seed,
        out_dir=args.out,
        ablation=getattr(args, "ablation", None),
        detections_path=args.detections,
        rayiou=args.rayiou,
        use_mask=args.mask,
        dump_grids=getattr(args, "dump_grids", False),
        json_output=args.json,
        timings=args.timings,
        threads=args.threads,
        save_weights=args.save_weights,
    )


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "gen-scene":
        out = cmd_gen_scene(args.scene, args.seed, args.out)
        print(out)
        return 0

    if args.command == "run":
        manifest = _manifest(args)
        report = cmd_run(manifest)
        sys.stdout.write(format_report(report, manifest.json_output, manifest.timings))
        return 0

    if args.command == "sweep":
        manifest = _manifest(args)
        for name, report in cmd_sweep(manifest).items():
            sys.stdout.write(f"# {name}\n")
            sys.stdout.write(format_report(report, manifest.json_output, manifest.timings))
        return 0

    if args.command == "eval":
        ray_set = load_pipeline_config(args.config).rayset if args.config else None
        report = cmd_eval(args.pred, args.gt, use_mask=args.mask, rayiou=args.rayiou, ray_set=ray_set)
        if args.out:
            write_report(Path(args.out) / report_filename(args.json), report, args.json)
        sys.stdout.write(format_report(report, args.json))
        return 0

    if args.command == "selfcheck":
        runner = SelfCheckRunner()
        if args.scenario and args.scenario not in list_available_scenarios():
            raise ConfigurationError(
                f"unknown scenario {args.scenario}; available: {', '.join(list_available_scenarios())}",
                block="selfcheck",
            )
        if args.scenario:
            results = [runner.run_scenario(get_scenario(args.scenario))]
        else:
            results = runner.run_suite(get_suite(args.suite))
        sys.stdout.write(format_results(results))
        failed = [r.scenario_name for r in results if not r.success]
        if failed:
            raise ContractViolation(f"self-check failed: {', '.join(failed)}")
        return 0

    raise ValueError(f"unknown command {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    try:
        setup_logging(level=args.log_level, log_format=args.log_format, force_reconfigure=True)
        return _dispatch(args)
    except OccStreamError as e:
        logger.error(f"❌ CLI: {type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"💥 CLI: Unexpected error: {type(e).__name__}: {e}", exc_info=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
