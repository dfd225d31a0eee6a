#!/usr/bin/env python3
"""
Privacy sweep runner.

Trains both engines over the full (epsilon, delta) grid on one log, samples
ten anonymized logs per cell and writes the averaged utility next to a
uniform-random baseline. Also checks how small the log can get by rerunning
epsilon = 1 on frequency-scaled copies.

    TRAVAGEN_SWEEP_INPUT=sepsis.csv python scripts/run_sweep.py
"""

import json
import os
import sys
import time
from datetime import datetime

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from loguru import logger

from config import LOG_DIR, log_banner, setup_logging

setup_logging(os.path.join(LOG_DIR, "sweep_run.log"), crash_resilient=True)

from config.run_config import resolve_seed
from eventlog.simple_log import read_log, scale_frequencies, uniform_reference
from eventlog.synthetic import synth_log
from metrics.utility import evaluate_utility
from pipeline import ENGINES, privacy_sweep, render_sweep_table, seeded_streams

INPUT_PATH = os.getenv("TRAVAGEN_SWEEP_INPUT", "")
OUTPUT_DIR = os.getenv("TRAVAGEN_SWEEP_OUTPUT", "sweep_results")

EPSILONS = [0.01, 0.1, 1.0]
DELTAS = [1e-3, 1e-4, 1e-5]
GENERATIONS = 10
SCALE_FACTORS = [1.0, 0.5, 0.25, 0.1]


def main():
    start_time = datetime.now()
    seed = resolve_seed(None)
    log_banner(f"PRIVACY SWEEP - {start_time} (seed {seed})")

    if INPUT_PATH:
        logger.info(f"Reading {INPUT_PATH}")
        log = read_log(INPUT_PATH)
    else:
        logger.info("TRAVAGEN_SWEEP_INPUT not set - using a synthetic log")
        log = synth_log(cases=1000, variants=20, seed=seed)

    os.makedirs(OUTPUT_DIR, exist_ok=True)
    _, _, baseline_rng = seeded_streams(seed)
    baseline = evaluate_utility(log, uniform_reference(log, baseline_rng))
    results = {"seed": seed, "baseline": baseline.to_dict(), "grid": {}, "scaling": {}}

    for engine in ENGINES:
        log_banner(f"GRID: {engine}")
        started = time.perf_counter()
        rows = privacy_sweep(log, engine, EPSILONS, DELTAS, GENERATIONS, seed=seed, n_jobs=-1)
        results["grid"][engine] = rows
        logger.info(f"{engine} grid finished in {time.perf_counter() - started:.1f}s")
        print(f"\n{engine}\n{render_sweep_table(rows)}")

    log_banner("SCALING: travag at epsilon = 1")
    for factor in SCALE_FACTORS:
        scaled = scale_frequencies(log, factor)
        rows = privacy_sweep(scaled, "travag", [1.0], [DELTAS[0]], GENERATIONS, seed=seed, n_jobs=-1)
        results["scaling"][str(factor)] = {"cases": scaled.n_cases, **rows[0]}
        logger.info(f"Scale {factor}: {scaled.n_cases} cases, similarity {rows[0]['relative_log_similarity']}")

    out_path = os.path.join(OUTPUT_DIR, f"sweep_{start_time:%Y%m%d_%H%M%S}.json")
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(results, f, indent=2)

    duration = datetime.now() - start_time
    log_banner("SWEEP COMPLETE")
    logger.info(f"Duration: {duration}")

    print("\n" + "=" * 60)
    print("PRIVACY SWEEP COMPLETE")
    print("=" * 60)
    print(f"Duration: {duration}")
    print(f"Uniform baseline similarity: {baseline.relative_log_similarity:.4f}")
    print(f"Results: {out_path}")


if __name__ == "__main__":
    main()
