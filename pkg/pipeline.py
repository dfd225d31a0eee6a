"""
Pipeline orchestration functions for travagen.

Provides high-level functions to anonymize a log, sample from a saved model,
evaluate an anonymized log and sweep privacy targets. Each returns a stats dict
that the CLI prints and records in the run manifest.
"""

import statistics
import time

import numpy as np
from loguru import logger

from errors import InfeasibleTargetError
from eventlog.simple_log import SimpleEventLog, downsample, read_log, save_log, uniform_reference
from generative import ddpm, travag
from generative.ddpm import DdpmConfig, DiffusionModel
from generative.model_io import load_model, save_model
from generative.travag import TravagConfig, TravagModel
from metrics.utility import evaluate_utility
from privacy.accountant import PrivacySpec, compose_dp
from privacy.dp_sgd import DpSgdConfig

ENGINES = ("travag", "ddpm")

# Independent streams derived from the master seed: training, sampling, post-processing
TRAIN_STREAM, SAMPLE_STREAM, POST_STREAM = range(3)


def seeded_streams(seed: int, count: int = 3) -> list[np.random.Generator]:
    """Independent generators spawned from one master seed."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]


def train_model(
    log: SimpleEventLog,
    engine: str,
    target: PrivacySpec,
    dp_config: DpSgdConfig,
    engine_config: TravagConfig | DdpmConfig | None,
    rng: np.random.Generator,
) -> TravagModel | DiffusionModel:
    """Train the chosen engine so its total guarantee meets target."""
    if engine == "travag":
        return travag.train_travag(log, target, dp_config, engine_config or TravagConfig(), rng)
    if engine == "ddpm":
        return ddpm.train_ddpm(log, target, dp_config, engine_config or DdpmConfig(), rng)
    raise ValueError(f"Unknown engine {engine!r}, expected one of {ENGINES}")


def generate_log(model: TravagModel | DiffusionModel, count: int, rng: np.random.Generator) -> SimpleEventLog:
    if isinstance(model, TravagModel):
        return travag.sample(model, count, rng)
    return ddpm.generate(model, count, rng)


def privacy_summary(model: TravagModel | DiffusionModel) -> dict:
    """
    Per-component accounting and the total guarantee of a trained model.

    The total is reported as "non-private" when a component ran without noise.
    """
    if isinstance(model, TravagModel):
        components = {"decoder": model.decoder_privacy}
        if model.discriminator_privacy is not None:
            components["discriminator"] = model.discriminator_privacy
    else:
        components = {"predictor": model.privacy} if model.privacy else {}

    summary = {name: report.to_dict() for name, report in components.items()}
    specs = [report.spec for report in components.values()]
    if specs and all(s.is_private for s in specs):
        summary["total"] = compose_dp(specs).to_dict()
    else:
        summary["total"] = "non-private"
    return summary


def check_budget(summary: dict, target: PrivacySpec) -> None:
    """Fail loudly if the accountant reports more than the requested budget."""
    total = summary["total"]
    if total == "non-private" or total["epsilon"] > target.epsilon or total["delta"] > target.delta:
        raise InfeasibleTargetError(
            f"achieved privacy {total} exceeds target (ε={target.epsilon}, δ={target.delta})"
        )
    logger.info(
        f"Budget report: achieved (ε={total['epsilon']:.4f}, δ={total['delta']:g}) "
        f"<= requested (ε={target.epsilon}, δ={target.delta})"
    )


def run_anonymization(
    input_path: str,
    engine: str,
    target: PrivacySpec,
    out_path: str,
    seed: int,
    model_out: str | None = None,
    dp_config: DpSgdConfig | None = None,
    engine_config: TravagConfig | DdpmConfig | None = None,
    samples: int | None = None,
    downsample_to: int | None = None,
) -> dict:
    """
    Train a private generator on a log and write an anonymized log.

    Args:
        input_path: Event CSV to anonymize
        engine: "travag" or "ddpm"
        target: Total (epsilon, delta) budget
        out_path: Anonymized CSV to write
        seed: Master seed
        model_out: Optional model bundle path
        dp_config: DP-SGD settings (defaults when None)
        engine_config: Engine-specific settings (defaults when None)
        samples: Cases to generate (default: the input case count)
        downsample_to: Optional post-processing sample size

    Returns:
        dict with keys: 'engine', 'input_cases', 'input_variants', 'output_cases',
        'output_variants', 'privacy', 'training_seconds', 'sampling_seconds'
    """
    dp_config = dp_config or DpSgdConfig()
    train_rng, sample_rng, post_rng = seeded_streams(seed)

    log = read_log(input_path)
    stats = {
        "engine": engine,
        "input_cases": log.n_cases,
        "input_variants": log.n_variants,
        "output_cases": 0,
        "output_variants": 0,
        "privacy": {},
        "training_seconds": 0.0,
        "sampling_seconds": 0.0,
    }

    started = time.perf_counter()
    model = train_model(log, engine, target, dp_config, engine_config, train_rng)
    stats["training_seconds"] = round(time.perf_counter() - started, 3)
    stats["privacy"] = privacy_summary(model)
    check_budget(stats["privacy"], target)

    if model_out:
        save_model(model, model_out)

    count = log.n_cases if samples is None else samples
    started = time.perf_counter()
    anonymized = generate_log(model, count, sample_rng)
    stats["sampling_seconds"] = round(time.perf_counter() - started, 3)

    if downsample_to is not None:
        anonymized = downsample(anonymized, downsample_to, post_rng)

    save_log(anonymized, out_path)
    stats["output_cases"] = anonymized.n_cases
    stats["output_variants"] = anonymized.n_variants
    logger.info(
        f"Anonymization complete: {stats['output_cases']} cases over {stats['output_variants']} variants"
    )
    return stats


def run_sampling(
    model_path: str,
    out_path: str,
    seed: int,
    count: int | None = None,
    downsample_to: int | None = None,
) -> dict:
    """
    Sample an anonymized log from a saved model.

    Sampling is post-processing: the privacy reported is the model's, unchanged.

    Returns:
        dict with keys: 'engine', 'output_cases', 'output_variants', 'privacy',
        'sampling_seconds'
    """
    _, sample_rng, post_rng = seeded_streams(seed)
    model = load_model(model_path)
    count = model.case_count if count is None else count

    started = time.perf_counter()
    anonymized = generate_log(model, count, sample_rng)
    elapsed = round(time.perf_counter() - started, 3)
    if downsample_to is not None:
        anonymized = downsample(anonymized, downsample_to, post_rng)
    save_log(anonymized, out_path)

    return {
        "engine": "travag" if isinstance(model, TravagModel) else "ddpm",
        "output_cases": anonymized.n_cases,
        "output_variants": anonymized.n_variants,
        "privacy": privacy_summary(model),
        "sampling_seconds": elapsed,
    }


def run_evaluation(
    original_path: str,
    anonymized_path: str,
    baseline: bool = False,
    seed: int | None = None,
    n_jobs: int = 1,
) -> dict:
    """
    Compare an anonymized log with its original.

    Args:
        original_path: Original event CSV
        anonymized_path: Anonymized event CSV
        baseline: Also score a uniform-random log over the original variants
        seed: Seed for the baseline log
        n_jobs: joblib workers for the distance matrices

    Returns:
        dict with keys: 'relative_log_similarity', 'absolute_log_difference' and,
        with baseline, 'baseline' holding the same two keys
    """
    original = read_log(original_path)
    anonymized = read_log(anonymized_path)
    result = evaluate_utility(original, anonymized, n_jobs=n_jobs).to_dict()

    if baseline:
        reference = uniform_reference(original, np.random.default_rng(seed))
        result["baseline"] = evaluate_utility(original, reference, n_jobs=n_jobs).to_dict()
    return result


def privacy_sweep(
    log: SimpleEventLog,
    engine: str,
    epsilons: list[float],
    deltas: list[float],
    generations: int,
    seed: int,
    dp_config: DpSgdConfig | None = None,
    engine_config: TravagConfig | DdpmConfig | None = None,
    n_jobs: int = 1,
) -> list[dict]:
    """
    Train once per (epsilon, delta) cell, sample `generations` logs, average utility.

    Cells whose target no noise multiplier reaches are kept with None metrics
    and zero generations.

    Returns:
        One dict per cell: 'epsilon', 'delta', 'achieved_epsilon',
        'relative_log_similarity', 'absolute_log_difference', 'generations'
    """
    if generations < 1:
        raise ValueError(f"Need at least one generation per cell, got {generations}")
    dp_config = dp_config or DpSgdConfig()
    rows = []
    cell_seeds = np.random.SeedSequence(seed).spawn(len(epsilons) * len(deltas))

    for index, (epsilon, delta) in enumerate((e, d) for e in epsilons for d in deltas):
        train_rng, sample_rng = (np.random.default_rng(s) for s in cell_seeds[index].spawn(2))
        target = PrivacySpec(epsilon, delta)
        logger.info(f"Sweep cell ε={epsilon}, δ={delta}")

        try:
            model = train_model(log, engine, target, dp_config, engine_config, train_rng)
        except InfeasibleTargetError as e:
            logger.warning(f"Skipping cell ε={epsilon}, δ={delta}: {e}")
            rows.append(
                {
                    "epsilon": epsilon,
                    "delta": delta,
                    "achieved_epsilon": None,
                    "relative_log_similarity": None,
                    "absolute_log_difference": None,
                    "generations": 0,
                }
            )
            continue
        summary = privacy_summary(model)

        similarities, differences = [], []
        for _ in range(generations):
            anonymized = generate_log(model, log.n_cases, sample_rng)
            report = evaluate_utility(log, anonymized, n_jobs=n_jobs)
            similarities.append(report.relative_log_similarity)
            differences.append(report.absolute_log_difference)

        rows.append(
            {
                "epsilon": epsilon,
                "delta": delta,
                "achieved_epsilon": summary["total"]["epsilon"],
                "relative_log_similarity": statistics.fmean(similarities),
                "absolute_log_difference": statistics.fmean(differences),
                "generations": generations,
            }
        )
    return rows


def render_sweep_table(rows: list[dict]) -> str:
    header = f"{'epsilon':>9} {'delta':>9} {'achieved':>9} {'rel. sim.':>10} {'abs. diff.':>11}"
    lines = [header, "-" * len(header)]
    for row in rows:
        if row["achieved_epsilon"] is None:
            lines.append(f"{row['epsilon']:>9g} {row['delta']:>9g} {'infeasible':>9}")
            continue
        lines.append(
            f"{row['epsilon']:>9g} {row['delta']:>9g} {row['achieved_epsilon']:>9.4f} "
            f"{row['relative_log_similarity']:>10.4f} {row['absolute_log_difference']:>11.1f}"
        )
    return "\n".join(lines)
