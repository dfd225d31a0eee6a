"""
Tests for one-hot encoding and argmax decoding of trace variants.
"""

import numpy as np
import pytest

from errors import EmptyLogError, NonFiniteOutputError, ShapeError
from eventlog.encoding import VariantVocabulary, decode_row, one_hot_decode, one_hot_encode
from eventlog.simple_log import SimpleEventLog

SIGMA_1 = ("a", "b")
SIGMA_2 = ("a", "c")


class TestOneHotEncode:
    """Tests for log -> (vocabulary, matrix)."""

    def test_rows_and_column_sums(self):
        """[s1^2, s2^1] -> 3x2 matrix, rows e1, e1, e2."""
        vocab, matrix = one_hot_encode(SimpleEventLog({SIGMA_1: 2, SIGMA_2: 1}))

        assert matrix.shape == (3, 2)
        assert vocab.variants == [SIGMA_1, SIGMA_2]
        np.testing.assert_array_equal(matrix.sum(axis=0), [2, 1])
        np.testing.assert_array_equal(matrix.sum(axis=1), [1, 1, 1])

    def test_single_case(self):
        """[s1^1] -> [[1]]."""
        _, matrix = one_hot_encode(SimpleEventLog({SIGMA_1: 1}))

        np.testing.assert_array_equal(matrix, [[1.0]])

    def test_vocabulary_order(self):
        """Columns by descending frequency, ties by activity sequence."""
        log = SimpleEventLog({("z",): 1, ("b",): 5, ("a",): 1})

        vocab, _ = one_hot_encode(log)

        assert vocab.variants == [("b",), ("a",), ("z",)]

    def test_empty_log_raises(self):
        with pytest.raises(EmptyLogError):
            one_hot_encode(SimpleEventLog())

    def test_decode_inverts_encode(self, smoke_log):
        """Decoding the training matrix gives back the log."""
        vocab, matrix = one_hot_encode(smoke_log)

        assert one_hot_decode(matrix, vocab) == smoke_log


class TestDecodeRow:
    """Tests for argmax decoding of a single row."""

    @pytest.fixture
    def vocab(self):
        return VariantVocabulary([SIGMA_1, SIGMA_2])

    def test_argmax(self, vocab):
        """(0.2, 0.9) -> column 1."""
        assert decode_row([0.2, 0.9], vocab) == SIGMA_2

    def test_one_hot_row(self):
        """(1, 0, 0) -> column 0."""
        vocab = VariantVocabulary([("x",), ("y",), ("z",)])

        assert decode_row([1, 0, 0], vocab) == ("x",)

    def test_tie_goes_to_lowest_column(self, vocab):
        """(0.5, 0.5) -> column 0."""
        assert decode_row([0.5, 0.5], vocab) == SIGMA_1

    def test_nan_raises(self, vocab):
        with pytest.raises(NonFiniteOutputError, match="non-finite generator output"):
            decode_row([np.nan, 0.1], vocab)

    def test_wrong_length_raises(self, vocab):
        with pytest.raises(ShapeError):
            decode_row([0.1, 0.2, 0.3], vocab)


class TestOneHotDecode:
    """Tests for decoding batches of generated rows."""

    def test_unit_rows(self):
        """{e1, e1, e2} -> [s1^2, s2^1]."""
        vocab = VariantVocabulary([SIGMA_1, SIGMA_2])

        log = one_hot_decode([[1, 0], [1, 0], [0, 1]], vocab)

        assert log == SimpleEventLog({SIGMA_1: 2, SIGMA_2: 1})

    def test_empty_rows(self):
        """No rows decode to the empty log."""
        vocab = VariantVocabulary([SIGMA_1])

        assert one_hot_decode(np.empty((0, 1)), vocab).is_empty()

    def test_random_rows_stay_in_vocabulary(self, rng):
        """Arbitrary real rows only ever decode to vocabulary variants."""
        vocab = VariantVocabulary([(f"v{i}",) for i in range(5)])
        logits = rng.normal(size=(1000, 5)) * 3
        rows = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)

        log = one_hot_decode(rows, vocab)

        assert log.n_cases == 1000
        assert all(variant in vocab for variant in log.support())

    def test_matches_row_by_row_decoding(self, rng):
        """Batch decoding equals decode_row on every row."""
        vocab = VariantVocabulary([(f"v{i}",) for i in range(4)])
        rows = rng.normal(size=(50, 4))

        expected = SimpleEventLog.from_traces(decode_row(row, vocab) for row in rows)

        assert one_hot_decode(rows, vocab) == expected

    def test_infinite_value_raises(self):
        vocab = VariantVocabulary([SIGMA_1, SIGMA_2])

        with pytest.raises(NonFiniteOutputError):
            one_hot_decode([[np.inf, 0.0]], vocab)


class TestVariantVocabulary:
    def test_json_round_trip(self):
        """Column index -> activity sequence survives JSON."""
        vocab = VariantVocabulary([SIGMA_1, SIGMA_2, ("d",)])

        assert VariantVocabulary.from_json(vocab.to_json()) == vocab

    def test_to_dict_layout(self):
        assert VariantVocabulary([SIGMA_1]).to_dict() == {"0": ["a", "b"]}

    def test_duplicate_variants_rejected(self):
        with pytest.raises(ValueError):
            VariantVocabulary([SIGMA_1, SIGMA_1])
