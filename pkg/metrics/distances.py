"""Edit distances between trace variants (sequences of activity labels)."""

import Levenshtein
import numpy as np
from joblib import Parallel, delayed

from eventlog.simple_log import TraceVariant


def levenshtein(a: TraceVariant, b: TraceVariant) -> int:
    """Minimum number of activity insertions, deletions and substitutions turning a into b."""
    return Levenshtein.distance(list(a), list(b))


def normalized_levenshtein(a: TraceVariant, b: TraceVariant) -> float:
    """levenshtein(a, b) / max(|a|, |b|), in [0, 1]; two empty variants are at distance 0."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


def _distance_row(a: TraceVariant, others: list[TraceVariant]) -> list[int]:
    return [levenshtein(a, b) for b in others]


def distance_matrix(rows: list[TraceVariant], columns: list[TraceVariant], n_jobs: int = 1) -> np.ndarray:
    """
    Pairwise absolute Levenshtein distances.

    Args:
        rows: Variants along the first axis
        columns: Variants along the second axis
        n_jobs: joblib worker count (1 = in process, -1 = all cores)

    Returns:
        (len(rows), len(columns)) integer matrix
    """
    if not rows or not columns:
        return np.zeros((len(rows), len(columns)), dtype=np.int64)
    distances = Parallel(n_jobs=n_jobs)(delayed(_distance_row)(a, columns) for a in rows)
    return np.asarray(distances, dtype=np.int64)
