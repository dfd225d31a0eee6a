#!/usr/bin/env python3
"""
Command-line front end.

    travagen stats --input log.csv
    travagen calibrate --epsilon 1 --delta 1e-3 --sampling-rate 0.1 --iterations 1000
    travagen anonymize travag --input log.csv --epsilon 1 --delta 1e-3 --out anon.csv --model-out model.bin
    travagen anonymize ddpm --input log.csv --epsilon 1 --delta 1e-3 --steps 300 --out anon.csv
    travagen sample --model model.bin --out more.csv
    travagen evaluate --original log.csv --anonymized anon.csv --baseline
    travagen synth --out synthetic.csv --cases 500 --variants 5
    travagen sweep --input log.csv --engine travag --epsilons 0.01,0.1,1 --deltas 1e-3 --out sweep.json

Exit codes: 0 ok, 2 input error, 3 infeasible privacy target, 4 training diverged.
"""

import argparse
import json
import sys

from loguru import logger

from config import LOG_LEVEL, setup_logging
from config.run_config import RunConfig, build_section, load_config_file, resolve_seed
from errors import TravagenError
from eventlog.simple_log import log_stats, read_log, save_log, scale_frequencies
from eventlog.synthetic import synth_log
from generative.ddpm import DdpmConfig
from generative.travag import TravagConfig
from pipeline import (
    ENGINES,
    privacy_sweep,
    render_sweep_table,
    run_anonymization,
    run_evaluation,
    run_sampling,
)
from privacy.accountant import PrivacySpec, calibrate_noise
from privacy.dp_sgd import DpSgdConfig

EXIT_OK = 0
EXIT_INPUT = 2


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="travagen",
        description="Differentially private trace variant generation for event logs.",
    )
    parser.add_argument("--seed", type=int, help="Master seed (default: TRAVAGEN_SEED or generated)")
    parser.add_argument("--json", action="store_true", help="Print machine-readable JSON")
    parser.add_argument("--config", help="JSON config file with dp_sgd/travag/ddpm sections")
    parser.add_argument("--manifest", help="Replay the run recorded in a manifest file")
    parser.add_argument("--log-file", help="Also log to this file")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="Console log level")
    commands = parser.add_subparsers(dest="command")

    stats = commands.add_parser("stats", help="Describe an event log")
    stats.add_argument("--input", required=True)

    calibrate = commands.add_parser("calibrate", help="Noise multiplier for a privacy target")
    calibrate.add_argument("--epsilon", type=float, required=True)
    calibrate.add_argument("--delta", type=float, required=True)
    calibrate.add_argument("--sampling-rate", type=float, required=True)
    calibrate.add_argument("--iterations", type=int, required=True)

    anonymize = commands.add_parser("anonymize", help="Train a private generator and write an anonymized log")
    anonymize.add_argument("engine", choices=ENGINES)
    anonymize.add_argument("--input", required=True)
    anonymize.add_argument("--epsilon", type=float, required=True)
    anonymize.add_argument("--delta", type=float, required=True)
    anonymize.add_argument("--out", required=True)
    anonymize.add_argument("--model-out")
    anonymize.add_argument("--samples", type=int, help="Cases to generate (default: input case count)")
    anonymize.add_argument("--steps", type=int, help="Diffusion steps T (ddpm only)")
    anonymize.add_argument("--downsample", type=int, help="Keep this many generated cases")

    sample = commands.add_parser("sample", help="Sample an anonymized log from a model file")
    sample.add_argument("--model", required=True)
    sample.add_argument("--out", required=True)
    sample.add_argument("--count", type=int, help="Cases to generate (default: training case count)")
    sample.add_argument("--downsample", type=int, help="Keep this many generated cases")

    evaluate = commands.add_parser("evaluate", help="Utility of an anonymized log")
    evaluate.add_argument("--original", required=True)
    evaluate.add_argument("--anonymized", required=True)
    evaluate.add_argument("--baseline", action="store_true", help="Also score a uniform-random log")
    evaluate.add_argument("--jobs", type=int, default=1, help="joblib workers for distances")

    synth = commands.add_parser("synth", help="Write a seeded synthetic event log")
    synth.add_argument("--out", required=True)
    synth.add_argument("--cases", type=int, default=500)
    synth.add_argument("--variants", type=int, default=5)
    synth.add_argument("--zipf-skew", type=float, default=1.2)
    synth.add_argument("--activities", type=int, default=6)
    synth.add_argument("--max-length", type=int, default=6)

    sweep = commands.add_parser("sweep", help="Utility over a grid of privacy targets")
    sweep.add_argument("--input", required=True)
    sweep.add_argument("--engine", choices=ENGINES, default="travag")
    sweep.add_argument("--epsilons", type=_float_list, default=[0.01, 0.1, 1.0])
    sweep.add_argument("--deltas", type=_float_list, default=[1e-3])
    sweep.add_argument("--generations", type=int, default=10)
    sweep.add_argument("--scale", type=float, help="Scale variant frequencies by this factor first")
    sweep.add_argument("--out", required=True, help="JSON results file")
    sweep.add_argument("--jobs", type=int, default=1)
    return parser


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def _render_privacy(privacy: dict) -> str:
    lines = []
    for name, report in privacy.items():
        if isinstance(report, dict):
            lines.append(f"{name:<14} ε={report['epsilon']:.4f}  δ={report['delta']:g}")
        else:
            lines.append(f"{name:<14} {report}")
    return "\n".join(lines)


def _manifest_path(out: str) -> str:
    return f"{out}.manifest.json"


def cmd_stats(args, run: RunConfig) -> int:
    stats = log_stats(read_log(args.input))
    _emit(args, stats.to_dict(), stats.render_table())
    return EXIT_OK


def cmd_calibrate(args, run: RunConfig) -> int:
    target = PrivacySpec(args.epsilon, args.delta)
    result = calibrate_noise(target, args.sampling_rate, args.iterations)
    payload = {
        "noise_multiplier": result.noise_multiplier,
        "achieved_epsilon": result.achieved_epsilon,
        "delta": result.delta,
        "optimal_alpha": result.optimal_alpha,
    }
    text = (
        f"Noise multiplier  {result.noise_multiplier:.3f}\n"
        f"Achieved          (ε={result.achieved_epsilon:.4f}, δ={result.delta:g}) at α={result.optimal_alpha:g}"
    )
    _emit(args, payload, text)
    return EXIT_OK


def _configs(run: RunConfig):
    dp_config = build_section(DpSgdConfig, run.sections.get("dp_sgd"))
    travag_config = build_section(TravagConfig, run.sections.get("travag"))
    ddpm_config = build_section(DdpmConfig, run.sections.get("ddpm"))
    return dp_config, travag_config, ddpm_config


def cmd_anonymize(args, run: RunConfig) -> int:
    if not 0 < args.delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {args.delta}")
    target = PrivacySpec(args.epsilon, args.delta)
    dp_config, travag_config, ddpm_config = _configs(run)
    if args.steps is not None:
        ddpm_config.steps = args.steps
    engine_config = travag_config if args.engine == "travag" else ddpm_config

    stats = run_anonymization(
        input_path=args.input,
        engine=args.engine,
        target=target,
        out_path=args.out,
        seed=run.seed,
        model_out=args.model_out,
        dp_config=dp_config,
        engine_config=engine_config,
        samples=args.samples,
        downsample_to=args.downsample,
    )
    run.write_manifest(
        _manifest_path(args.out),
        privacy=stats["privacy"],
        extra={
            "paths": {"input": args.input, "output": args.out, "model": args.model_out},
            "resolved_config": {"dp_sgd": dp_config.to_dict(), args.engine: engine_config.to_dict()},
            "results": stats,
        },
    )
    text = (
        f"Wrote {stats['output_cases']} cases ({stats['output_variants']} variants) to {args.out}\n"
        f"{_render_privacy(stats['privacy'])}"
    )
    _emit(args, stats, text)
    return EXIT_OK


def cmd_sample(args, run: RunConfig) -> int:
    stats = run_sampling(args.model, args.out, run.seed, count=args.count, downsample_to=args.downsample)
    run.write_manifest(
        _manifest_path(args.out),
        privacy=stats["privacy"],
        extra={"paths": {"model": args.model, "output": args.out}, "results": stats},
    )
    text = (
        f"Wrote {stats['output_cases']} cases ({stats['output_variants']} variants) to {args.out}\n"
        f"{_render_privacy(stats['privacy'])}"
    )
    _emit(args, stats, text)
    return EXIT_OK


def cmd_evaluate(args, run: RunConfig) -> int:
    result = run_evaluation(args.original, args.anonymized, baseline=args.baseline, seed=run.seed, n_jobs=args.jobs)
    lines = [
        f"Relative log similarity  {result['relative_log_similarity']:.4f}",
        f"Absolute log difference  {result['absolute_log_difference']}",
    ]
    if "baseline" in result:
        lines.append(f"Uniform baseline similarity  {result['baseline']['relative_log_similarity']:.4f}")
    _emit(args, result, "\n".join(lines))
    return EXIT_OK


def cmd_synth(args, run: RunConfig) -> int:
    log = synth_log(
        cases=args.cases,
        variants=args.variants,
        zipf_skew=args.zipf_skew,
        activities=args.activities,
        max_length=args.max_length,
        seed=run.seed,
    )
    save_log(log, args.out)
    run.write_manifest(_manifest_path(args.out), extra={"paths": {"output": args.out}})
    _emit(args, {"cases": log.n_cases, "variants": log.n_variants}, f"Wrote {log!r} to {args.out}")
    return EXIT_OK


def cmd_sweep(args, run: RunConfig) -> int:
    log = read_log(args.input)
    if args.scale is not None:
        log = scale_frequencies(log, args.scale)
    dp_config, travag_config, ddpm_config = _configs(run)
    rows = privacy_sweep(
        log,
        args.engine,
        args.epsilons,
        args.deltas,
        args.generations,
        seed=run.seed,
        dp_config=dp_config,
        engine_config=travag_config if args.engine == "travag" else ddpm_config,
        n_jobs=args.jobs,
    )
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(rows, f, indent=2)
    run.write_manifest(_manifest_path(args.out), extra={"paths": {"input": args.input, "output": args.out}})
    _emit(args, {"cells": rows}, render_sweep_table(rows))
    return EXIT_OK


COMMANDS = {
    "stats": cmd_stats,
    "calibrate": cmd_calibrate,
    "anonymize": cmd_anonymize,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    setup_logging(args.log_file, level="DEBUG", console_level=args.log_level.upper())

    try:
        if args.manifest:
            manifest_path, as_json = args.manifest, args.json
            run = RunConfig.from_manifest(manifest_path)
            args = parser.parse_args(run.arguments["argv"])
            args.json = args.json or as_json
            logger.info(f"Replaying {run.command} run (seed {run.seed}) from {manifest_path}")
        else:
            if args.command is None:
                parser.print_help()
                return EXIT_INPUT
            run = RunConfig(
                command=args.command,
                seed=resolve_seed(args.seed),
                arguments={"argv": argv},
                sections=load_config_file(args.config),
            )
        return COMMANDS[run.command](args, run)
    except TravagenError as e:
        logger.error(str(e))
        return e.exit_code
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as e:
        logger.error(f"Input error: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
