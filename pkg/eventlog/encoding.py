"""
One-hot encoding of simple event logs.

Each case becomes a row, each distinct variant a binary column. Decoding takes
the argmax of a generated row, so every decoded case is a variant that was in
the training vocabulary.
"""

import json

import numpy as np
from loguru import logger

from errors import EmptyLogError, NonFiniteOutputError, ShapeError
from eventlog.simple_log import SimpleEventLog, TraceVariant


class VariantVocabulary:
    """
    Bijection between trace variants and one-hot column indices.

    Columns are ordered by descending frequency in the log the vocabulary was
    built from, ties broken by the activity sequence.
    """

    def __init__(self, variants: list[TraceVariant]):
        self.variants = [tuple(v) for v in variants]
        self.index_of = {v: i for i, v in enumerate(self.variants)}
        if len(self.index_of) != len(self.variants):
            raise ValueError("Vocabulary variants must be distinct")

    @classmethod
    def from_log(cls, log: SimpleEventLog) -> "VariantVocabulary":
        return cls(log.ordered_variants())

    def __len__(self) -> int:
        return len(self.variants)

    def __contains__(self, variant) -> bool:
        return tuple(variant) in self.index_of

    def __eq__(self, other) -> bool:
        return isinstance(other, VariantVocabulary) and self.variants == other.variants

    def variant(self, column: int) -> TraceVariant:
        return self.variants[column]

    def to_dict(self) -> dict[str, list[str]]:
        """Column index (as string key) -> activity sequence."""
        return {str(i): list(v) for i, v in enumerate(self.variants)}

    @classmethod
    def from_dict(cls, data: dict[str, list[str]]) -> "VariantVocabulary":
        ordered = sorted(data.items(), key=lambda item: int(item[0]))
        expected = list(range(len(ordered)))
        if [int(k) for k, _ in ordered] != expected:
            raise ValueError("Vocabulary column indices must be 0..n-1")
        return cls([tuple(v) for _, v in ordered])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "VariantVocabulary":
        return cls.from_dict(json.loads(text))


def one_hot_encode(log: SimpleEventLog) -> tuple[VariantVocabulary, np.ndarray]:
    """
    Encode a log as an m x n binary matrix (cases x variants).

    Returns:
        (vocabulary, matrix) where row i is the one-hot vector of case i and
        column j sums to the frequency of vocabulary variant j

    Raises:
        EmptyLogError: log has no cases
    """
    if log.is_empty():
        raise EmptyLogError()

    vocab = VariantVocabulary.from_log(log)
    columns = np.repeat(np.arange(len(vocab)), [log.variants[v] for v in vocab.variants])
    matrix = np.zeros((log.n_cases, len(vocab)))
    matrix[np.arange(log.n_cases), columns] = 1.0

    logger.debug(f"One-hot encoded {matrix.shape[0]} cases over {matrix.shape[1]} variants")
    return vocab, matrix


def decode_row(row, vocab: VariantVocabulary) -> TraceVariant:
    """
    Map one generated row back to a variant (argmax, lowest column wins ties).

    Raises:
        ShapeError: row length differs from the vocabulary size
        NonFiniteOutputError: row contains NaN or infinity
    """
    values = np.asarray(row, dtype=float)
    if values.shape != (len(vocab),):
        raise ShapeError(f"Row of shape {values.shape} does not match vocabulary size {len(vocab)}")
    if not np.all(np.isfinite(values)):
        raise NonFiniteOutputError()
    return vocab.variant(int(np.argmax(values)))


def one_hot_decode(rows, vocab: VariantVocabulary) -> SimpleEventLog:
    """
    Decode generated rows into a log whose support is a subset of the vocabulary.

    Equivalent to applying decode_row to every row, done in one argmax pass.
    """
    values = np.asarray(rows, dtype=float)
    if values.size == 0:
        return SimpleEventLog()
    if values.ndim != 2 or values.shape[1] != len(vocab):
        raise ShapeError(f"Rows of shape {values.shape} do not match vocabulary size {len(vocab)}")
    if not np.all(np.isfinite(values)):
        raise NonFiniteOutputError()

    counts = np.bincount(np.argmax(values, axis=1), minlength=len(vocab))
    return SimpleEventLog({vocab.variant(j): int(c) for j, c in enumerate(counts) if c > 0})
