"""
Tests for the autoencoder + GAN generator.

Training runs use shrunken networks (conftest fast_* fixtures); the full
anonymization smoke run is marked slow.
"""

import math
from dataclasses import replace

import numpy as np
import pytest
from loguru import logger

import generative.travag as travag
from errors import PrivacyBudgetError, ShapeError
from eventlog.encoding import VariantVocabulary, one_hot_decode, one_hot_encode
from eventlog.simple_log import SimpleEventLog
from generative.travag import (
    AutoencoderPair,
    GanPair,
    TravagConfig,
    TravagModel,
    default_latent_dim,
    harden,
    reconstruction_loss,
    sample,
    split_target,
    total_privacy,
    train_autoencoder,
    train_gan,
    train_travag,
)
from nn.network import (
    LOSS_BCE,
    LOSS_MSE,
    DenseNetwork,
    apply_update,
    backpropagate,
    backpropagate_output,
    forward,
    forward_trace,
    output_delta,
)
from privacy.accountant import PrivacyReport, PrivacySpec, RdpAccountant, calibrate_noise, compose_dp
from privacy.dp_sgd import DpSgdConfig, poisson_sample


def _report(epsilon, delta, noise=1.0):
    return PrivacyReport(
        epsilon=epsilon, delta=delta, optimal_alpha=8.0, noise_multiplier=noise, sampling_rate=0.1, steps=10
    )


# Phi = 0 and a clip norm no gradient reaches: DP-SGD should be plain SGD
REDUCTION_DP_CONFIG = DpSgdConfig(
    clip_norm=1e6, noise_multiplier=0.0, sampling_rate=0.2, learning_rate=0.05, iterations=30
)
REDUCTION_CONFIG = TravagConfig(noise_dim=8, hidden_dim=16, dp_learning_rate=None, generator_batch_size=12)


def _plain_autoencoder(matrix, dp_config, config, rng):
    """Mean-gradient SGD on the reconstruction loss, same draws as train_autoencoder."""
    m, n = matrix.shape
    d = config.latent_dim or default_latent_dim(n)
    encoder = DenseNetwork.build([n, config.hidden_dim, d], rng, "relu", "linear")
    decoder = DenseNetwork.build([d, config.hidden_dim, n], rng, "relu", "sigmoid")
    for _ in range(dp_config.iterations):
        batch = poisson_sample(m, dp_config.sampling_rate, rng)
        if batch.size == 0:
            continue
        x = matrix[batch]
        encoded = forward_trace(encoder, x)
        decoded = forward_trace(decoder, encoded.output)
        decoder_grad, latent_grad = backpropagate(
            decoder, decoded, output_delta(decoder, LOSS_MSE, decoded, x), mode="mean"
        )
        encoder_grad, _ = backpropagate_output(encoder, encoded, latent_grad, mode="mean")
        apply_update(decoder, decoder_grad, dp_config.learning_rate)
        apply_update(encoder, encoder_grad, config.encoder_learning_rate)
    return encoder, decoder


def _plain_gan(matrix, decoder, dp_config, config, rng):
    """Non-private GAN training with the same draws as train_gan."""
    m, n = matrix.shape
    generator = DenseNetwork.build([config.noise_dim, config.hidden_dim, decoder.in_dim], rng, "relu", "linear")
    discriminator = DenseNetwork.build([n, config.hidden_dim, 1], rng, "relu", "sigmoid")

    def mean_gradient(rows, target):
        trace = forward_trace(discriminator, rows)
        targets = np.full((rows.shape[0], 1), target)
        grad, _ = backpropagate(discriminator, trace, output_delta(discriminator, LOSS_BCE, trace, targets), "mean")
        return grad

    for _ in range(dp_config.iterations):
        batch = poisson_sample(m, dp_config.sampling_rate, rng)
        if batch.size:
            z = rng.standard_normal((batch.size, config.noise_dim))
            fake = harden(forward(decoder, forward(generator, z)))
            gradient = mean_gradient(matrix[batch], 1.0) + mean_gradient(fake, 0.0)
            apply_update(discriminator, gradient, dp_config.learning_rate)

        z = rng.standard_normal((config.generator_batch_size, config.noise_dim))
        generated = forward_trace(generator, z)
        decoded = forward_trace(decoder, generated.output)
        judged = forward_trace(discriminator, harden(decoded.output))
        ones = np.ones((z.shape[0], 1))
        _, row_grad = backpropagate(
            discriminator, judged, output_delta(discriminator, LOSS_BCE, judged, ones), mode="none"
        )
        _, latent_grad = backpropagate_output(decoder, decoded, row_grad, mode="none")
        generator_grad, _ = backpropagate_output(generator, generated, latent_grad, mode="mean")
        apply_update(generator, generator_grad, config.generator_learning_rate)
    return generator, discriminator


def _non_private_model(log, rng, iterations=60):
    """Autoencoder and GAN trained with Phi = 0, assembled into a model."""
    vocab, matrix = one_hot_encode(log)
    config = TravagConfig(noise_dim=4, hidden_dim=8, dp_learning_rate=None, log_every=10)
    dp_config = DpSgdConfig(
        clip_norm=10.0, noise_multiplier=0.0, sampling_rate=0.5, learning_rate=0.5, iterations=iterations
    )
    pair, _ = train_autoencoder(matrix, dp_config, config, 1e-5, rng)
    gan, _ = train_gan(matrix, pair, dp_config, config, 1e-5, rng)
    report = RdpAccountant(0.5, 0.0).report(1e-5)
    return TravagModel(vocab, pair, gan, report, report, log.n_cases)


class TestDefaultLatentDim:
    @pytest.mark.parametrize("n, expected", [(1, 1), (2, 1), (3, 2), (5, 2), (40, 5), (1000, 32)])
    def test_values(self, n, expected):
        """min(32, max(2, n // 8)) kept below n."""
        assert default_latent_dim(n) == expected


class TestTravagConfig:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"latent_dim": 0},
            {"noise_dim": 0},
            {"encoder_learning_rate": 0.0},
            {"dp_learning_rate": 0.0},
            {"gan_iterations": -1},
        ],
    )
    def test_invalid_values_raise(self, overrides):
        with pytest.raises(ValueError):
            TravagConfig(**overrides)

    def test_dict_round_trip(self):
        config = TravagConfig(latent_dim=3, gan_iterations=10)

        assert TravagConfig.from_dict(config.to_dict()) == config

    def test_private_learning_rate_fallback(self):
        dp_config = DpSgdConfig(learning_rate=0.3)

        assert TravagConfig(dp_learning_rate=0.02).private_learning_rate(dp_config) == 0.02
        assert TravagConfig(dp_learning_rate=None).private_learning_rate(dp_config) == 0.3


class TestHarden:
    def test_hand_example(self):
        """Argmax per row, lowest column on ties."""
        rows = np.array([[0.2, 0.7, 0.1], [0.5, 0.5, 0.0], [0.0, 0.0, 0.3]])

        np.testing.assert_array_equal(harden(rows), [[0, 1, 0], [1, 0, 0], [0, 0, 1]])

    def test_matches_decoding(self, rng):
        """A hardened row decodes to the same variant as the soft row."""
        vocab = VariantVocabulary([("a",), ("b",), ("c",), ("d",)])
        rows = rng.uniform(size=(300, 4))

        assert one_hot_decode(harden(rows), vocab) == one_hot_decode(rows, vocab)


class TestTrainAutoencoder:
    """Tests for encoder (plain SGD) and decoder (DP-SGD) training."""

    def test_single_variant_converges_without_noise(self, rng):
        """n = 1 with Phi = 0: reconstruction loss goes to zero."""
        matrix = np.ones((40, 1))
        config = TravagConfig(hidden_dim=16, dp_learning_rate=None, encoder_learning_rate=0.1)
        dp_config = DpSgdConfig(
            clip_norm=100.0, noise_multiplier=0.0, sampling_rate=0.5, learning_rate=1.0, iterations=500
        )

        pair, _ = train_autoencoder(matrix, dp_config, config, 1e-5, rng)

        assert pair.latent_dim == 1
        assert reconstruction_loss(pair, matrix) < 0.01

    def test_latent_must_be_below_vocabulary(self, rng):
        _, matrix = one_hot_encode(SimpleEventLog({("a",): 2, ("b",): 2, ("c",): 1}))
        config = TravagConfig(latent_dim=3, hidden_dim=8)

        with pytest.raises(ShapeError):
            train_autoencoder(matrix, DpSgdConfig(noise_multiplier=1.0), config, 1e-5, rng)

    def test_same_seed_same_networks(self, smoke_log, fast_travag_config):
        """Training is reproducible under a fixed seed."""
        _, matrix = one_hot_encode(smoke_log)
        dp_config = DpSgdConfig(noise_multiplier=1.0, sampling_rate=0.2, learning_rate=0.05, iterations=15)
        runs = [
            train_autoencoder(matrix, dp_config, fast_travag_config, 1e-5, np.random.default_rng(8))[0]
            for _ in range(2)
        ]

        np.testing.assert_array_equal(runs[0].decoder.parameters(), runs[1].decoder.parameters())
        np.testing.assert_array_equal(runs[0].encoder.parameters(), runs[1].encoder.parameters())

    def test_accountant_counts_decoder_steps(self, rng, smoke_log, fast_travag_config):
        """Every iteration is one accounted step, empty batches included."""
        _, matrix = one_hot_encode(smoke_log)
        dp_config = DpSgdConfig(noise_multiplier=1.0, sampling_rate=0.001, learning_rate=0.05, iterations=25)
        accountant = RdpAccountant(0.001, 1.0)

        _, spec = train_autoencoder(matrix, dp_config, fast_travag_config, 1e-5, rng, accountant)

        assert accountant.steps == 25
        assert spec == accountant.spent(1e-5)

    def test_zero_noise_equals_plain_sgd(self, smoke_log):
        """Phi = 0 with inactive clipping reproduces non-private training step for step."""
        _, matrix = one_hot_encode(smoke_log)

        pair, _ = train_autoencoder(matrix, REDUCTION_DP_CONFIG, REDUCTION_CONFIG, 1e-5, np.random.default_rng(21))
        encoder, decoder = _plain_autoencoder(matrix, REDUCTION_DP_CONFIG, REDUCTION_CONFIG, np.random.default_rng(21))

        np.testing.assert_allclose(pair.decoder.parameters(), decoder.parameters(), rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(pair.encoder.parameters(), encoder.parameters(), rtol=1e-9, atol=1e-12)

    def test_logs_final_reconstruction_loss(self, rng, smoke_log, fast_travag_config):
        _, matrix = one_hot_encode(smoke_log)
        dp_config = DpSgdConfig(noise_multiplier=1.0, sampling_rate=0.2, learning_rate=0.05, iterations=5)
        messages = []
        handler = logger.add(messages.append, level="INFO", format="{message}")
        try:
            pair, _ = train_autoencoder(matrix, dp_config, fast_travag_config, 1e-5, rng)
        finally:
            logger.remove(handler)

        expected = f"reconstruction loss {reconstruction_loss(pair, matrix):.6f}"
        assert any(expected in m for m in messages)

    @pytest.mark.slow
    def test_round_trip_accuracy_at_unit_epsilon(self, smoke_log):
        """500 cases over 5 variants, d = 2, Phi calibrated for (1, 1e-3): argmax round trip >= 0.8."""
        _, matrix = one_hot_encode(smoke_log)
        base = DpSgdConfig()
        noise = calibrate_noise(PrivacySpec(1.0, 1e-3), base.sampling_rate, base.iterations).noise_multiplier
        config = TravagConfig(latent_dim=2)

        pair, spec = train_autoencoder(
            matrix, replace(base, noise_multiplier=noise), config, 1e-3, np.random.default_rng(0)
        )

        reconstructed = forward(pair.decoder, forward(pair.encoder, matrix))
        accuracy = np.mean(np.argmax(reconstructed, axis=1) == np.argmax(matrix, axis=1))
        assert spec.epsilon <= 1.0
        assert accuracy >= 0.8


class TestTrainGan:
    """Tests for alternating generator / discriminator training."""

    @pytest.fixture
    def trained_autoencoder(self, smoke_log, fast_travag_config):
        _, matrix = one_hot_encode(smoke_log)
        dp_config = DpSgdConfig(noise_multiplier=1.0, sampling_rate=0.2, learning_rate=0.05, iterations=20)
        pair, _ = train_autoencoder(matrix, dp_config, fast_travag_config, 1e-5, np.random.default_rng(2))
        return matrix, pair

    def test_discriminator_output_in_unit_interval(self, rng, trained_autoencoder, fast_travag_config):
        """Sigmoid head: finite values strictly inside (0, 1) on rows from the unit cube."""
        matrix, pair = trained_autoencoder
        dp_config = DpSgdConfig(noise_multiplier=1.0, sampling_rate=0.2, learning_rate=0.05, iterations=20)

        gan, _ = train_gan(matrix, pair, dp_config, fast_travag_config, 1e-5, rng)

        for rows in (np.eye(matrix.shape[1]), rng.uniform(size=(200, matrix.shape[1]))):
            judged = forward(gan.discriminator, rows)
            assert np.all(np.isfinite(judged))
            assert np.all((judged > 0) & (judged < 1))
        assert gan.generator.out_dim == pair.latent_dim

    def test_generator_path_never_sees_training_rows(
        self, rng, trained_autoencoder, fast_travag_config, monkeypatch
    ):
        """On the generator path the discriminator only judges hardened decoder output."""
        matrix, pair = trained_autoencoder
        dp_config = DpSgdConfig(noise_multiplier=1.0, sampling_rate=0.2, learning_rate=0.05, iterations=10)
        calls = []
        original = travag.forward_trace

        def recording(net, batch):
            calls.append((net, np.asarray(batch)))
            return original(net, batch)

        monkeypatch.setattr(travag, "forward_trace", recording)
        gan, _ = train_gan(matrix, pair, dp_config, fast_travag_config, 1e-5, rng)

        generator_inputs = [b for net, b in calls if net is gan.generator]
        decoder_inputs = [b for net, b in calls if net is pair.decoder]
        judged = [b for net, b in calls if net is gan.discriminator]
        assert len(generator_inputs) == len(decoder_inputs) == len(judged) == 10
        assert all(b.shape[1] == fast_travag_config.noise_dim for b in generator_inputs)
        for latent, rows in zip(decoder_inputs, judged):
            np.testing.assert_array_equal(rows, harden(forward(pair.decoder, latent)))

    def test_zero_noise_equals_plain_gan(self, trained_autoencoder):
        """Phi = 0 with inactive clipping reproduces non-private GAN training step for step."""
        matrix, pair = trained_autoencoder

        gan, _ = train_gan(
            matrix, pair, REDUCTION_DP_CONFIG, REDUCTION_CONFIG, 1e-5, np.random.default_rng(22)
        )
        generator, discriminator = _plain_gan(
            matrix, pair.decoder, REDUCTION_DP_CONFIG, REDUCTION_CONFIG, np.random.default_rng(22)
        )

        np.testing.assert_allclose(
            gan.discriminator.parameters(), discriminator.parameters(), rtol=1e-9, atol=1e-12
        )
        np.testing.assert_allclose(gan.generator.parameters(), generator.parameters(), rtol=1e-9, atol=1e-12)

    def test_mode_collapse_warning(self, rng, trained_autoencoder):
        """Low generator variance for `patience` iterations logs a warning."""
        matrix, pair = trained_autoencoder
        config = TravagConfig(noise_dim=8, hidden_dim=16, collapse_variance=1e9, collapse_patience=3)
        dp_config = DpSgdConfig(noise_multiplier=1.0, sampling_rate=0.2, learning_rate=0.05, iterations=5)
        messages = []
        handler = logger.add(messages.append, level="WARNING", format="{message}")
        try:
            train_gan(matrix, pair, dp_config, config, 1e-5, rng)
        finally:
            logger.remove(handler)

        assert sum("mode collapse" in m for m in messages) == 1


class TestEncoderPrivacy:
    def test_encoder_never_gets_a_noisy_update(self, rng, smoke_log, fast_travag_config, monkeypatch):
        """Only decoder- and discriminator-sized gradients go through DP-SGD."""
        _, matrix = one_hot_encode(smoke_log)
        dp_config = DpSgdConfig(noise_multiplier=1.0, sampling_rate=0.2, learning_rate=0.05, iterations=10)
        sizes = []
        original = travag.private_gradient

        def recording(gradients, config, step_rng):
            sizes.append(gradients.shape[1])
            return original(gradients, config, step_rng)

        monkeypatch.setattr(travag, "private_gradient", recording)
        pair, _ = train_autoencoder(matrix, dp_config, fast_travag_config, 1e-5, rng)
        gan, _ = train_gan(matrix, pair, dp_config, fast_travag_config, 1e-5, rng)

        allowed = {pair.decoder.n_params, gan.discriminator.n_params}
        assert pair.encoder.n_params not in allowed
        assert sizes
        assert set(sizes) <= allowed


class TestSample:
    """Tests for sampling from a trained model."""

    def test_zero_count_is_empty(self, rng, single_variant_log):
        model = _non_private_model(single_variant_log, rng, iterations=5)

        assert sample(model, 0, rng).is_empty()

    def test_single_variant_model(self, rng, single_variant_log):
        """10^4 samples of a one-variant model all decode to that variant."""
        model = _non_private_model(single_variant_log, rng)

        generated = sample(model, 10_000, rng)

        assert generated == SimpleEventLog({("register", "check", "close"): 10_000})

    def test_support_within_vocabulary(self, rng, smoke_log):
        """10^5 samples never contain a variant outside the training vocabulary."""
        model = _non_private_model(smoke_log, rng, iterations=20)

        generated = sample(model, 100_000, rng)

        assert generated.n_cases == 100_000
        assert generated.support() <= smoke_log.support()

    def test_negative_count_raises(self, rng, single_variant_log):
        model = _non_private_model(single_variant_log, rng, iterations=5)

        with pytest.raises(ValueError):
            sample(model, -1, rng)


class TestTotalPrivacy:
    """Tests for composing component guarantees."""

    def _model(self, decoder, discriminator):
        vocab = VariantVocabulary([("a",)])
        return TravagModel(vocab, None, None, decoder, discriminator, 1)

    def test_sums_components(self):
        """(0.5, 5e-7) + (0.5, 5e-7) -> (1.0, 1e-6)."""
        model = self._model(_report(0.5, 5e-7), _report(0.5, 5e-7))

        assert total_privacy(model) == PrivacySpec(1.0, 1e-6)

    def test_decoder_only(self):
        model = self._model(_report(0.4, 1e-6), None)

        assert total_privacy(model) == PrivacySpec(0.4, 1e-6)

    def test_equals_sequential_composition(self):
        decoder, discriminator = _report(0.31, 2e-6), _report(0.17, 3e-6)

        assert total_privacy(self._model(decoder, discriminator)) == compose_dp([decoder.spec, discriminator.spec])

    def test_non_private_component_raises(self):
        model = self._model(_report(math.inf, 1e-6, noise=0.0), _report(0.5, 1e-6))

        with pytest.raises(PrivacyBudgetError):
            total_privacy(model)

    def test_split_target_composes_back(self):
        """Halving the target per component composes back to the target."""
        target = PrivacySpec(1.0, 1e-3)
        half = split_target(target)

        assert compose_dp([half, half]) == target


class TestTrainTravag:
    @pytest.mark.slow
    def test_meets_target_and_samples(self, smoke_log, fast_dp_config, fast_travag_config):
        """Calibrated training stays within budget; samples stay in the vocabulary."""
        target = PrivacySpec(1.0, 1e-3)

        model = train_travag(smoke_log, target, fast_dp_config, fast_travag_config, np.random.default_rng(0))

        total = total_privacy(model)
        assert total.epsilon <= target.epsilon
        assert total.delta <= target.delta
        generated = sample(model, smoke_log.n_cases, np.random.default_rng(1))
        assert generated.n_cases == smoke_log.n_cases
        assert generated.support() <= smoke_log.support()

    @pytest.mark.slow
    def test_reproducible(self, smoke_log, fast_dp_config, fast_travag_config):
        """Fixed seeds reproduce train + sample exactly."""
        target = PrivacySpec(1.0, 1e-3)
        logs = []
        for _ in range(2):
            model = train_travag(smoke_log, target, fast_dp_config, fast_travag_config, np.random.default_rng(4))
            logs.append(sample(model, 300, np.random.default_rng(5)))

        assert logs[0] == logs[1]


class TestModelParts:
    def test_pairs_expose_dimensions(self, rng):
        decoder = DenseNetwork.build([3, 4, 6], rng)
        generator = DenseNetwork.build([5, 4, 3], rng)

        assert AutoencoderPair(None, decoder).latent_dim == 3
        assert GanPair(generator, None).noise_dim == 5
