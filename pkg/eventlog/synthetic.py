"""
Seeded synthetic event logs for tests, smoke runs and the sweep script.

Variants are distinct random activity sequences; case counts follow a Zipf law
over the variants so the distribution has one dominant variant and a tail.
"""

import numpy as np
from loguru import logger

from eventlog.simple_log import SimpleEventLog

MAX_DRAW_ATTEMPTS = 10_000


def zipf_masses(variants: int, skew: float) -> np.ndarray:
    """Normalized Zipf masses 1/k^skew for k = 1..variants."""
    ranks = np.arange(1, variants + 1, dtype=float)
    weights = ranks ** (-skew)
    return weights / weights.sum()


def synth_log(
    cases: int = 500,
    variants: int = 5,
    zipf_skew: float = 1.2,
    activities: int = 6,
    max_length: int = 6,
    seed: int = 0,
) -> SimpleEventLog:
    """
    Generate a log with `cases` cases spread over `variants` distinct variants.

    Args:
        cases: Number of cases (>= variants, every variant gets at least one)
        variants: Number of distinct trace variants
        zipf_skew: Zipf exponent of the variant masses (0 = uniform)
        activities: Size of the activity alphabet
        max_length: Longest trace length
        seed: RNG seed

    Returns:
        SimpleEventLog with exactly `cases` cases and `variants` variants

    Raises:
        ValueError: parameters cannot produce enough distinct variants
    """
    if variants < 1 or cases < variants:
        raise ValueError(f"Need cases >= variants >= 1, got cases={cases}, variants={variants}")
    if activities < 1 or max_length < 1:
        raise ValueError("activities and max_length must be positive")

    rng = np.random.default_rng(seed)
    alphabet = [f"act_{k:02d}" for k in range(activities)]

    drawn: list[tuple[str, ...]] = []
    seen = set()
    for _ in range(MAX_DRAW_ATTEMPTS):
        if len(drawn) == variants:
            break
        length = int(rng.integers(1, max_length + 1))
        trace = tuple(alphabet[i] for i in rng.integers(0, activities, size=length))
        if trace not in seen:
            seen.add(trace)
            drawn.append(trace)
    else:
        if len(drawn) < variants:
            raise ValueError(
                f"Could not draw {variants} distinct variants from {activities} activities "
                f"with max length {max_length}"
            )

    masses = zipf_masses(variants, zipf_skew)
    counts = 1 + rng.multinomial(cases - variants, masses)

    log = SimpleEventLog({trace: int(c) for trace, c in zip(drawn, counts, strict=True)})
    logger.debug(f"Synthesized {log.n_cases} cases over {log.n_variants} variants (seed={seed})")
    return log
