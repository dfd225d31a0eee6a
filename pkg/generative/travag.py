"""
Autoencoder + GAN trace variant generator.

Training has two phases on the one-hot case matrix:

1. Autoencoder: encoder n -> d (plain SGD) and decoder d -> n (DP-SGD) minimize
   the reconstruction error.
2. GAN in latent space: the generator maps Gaussian noise to R^d (plain SGD, it
   never touches the data); the discriminator judges one-hot rows in R^n, real
   rows against the argmax rows of dec(gen(z)) (DP-SGD).

Only the decoder and generator are needed for sampling, so only they ship in the
model file. The released guarantee is the sequential composition of the decoder
and discriminator accountants.
"""

import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from config.logging import get_logger
from errors import PrivacyBudgetError, ShapeError, TrainingDivergedError
from eventlog.encoding import VariantVocabulary, one_hot_decode, one_hot_encode
from eventlog.simple_log import SimpleEventLog
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
    per_example_gradients,
)
from privacy.accountant import (
    PrivacyReport,
    PrivacySpec,
    RdpAccountant,
    compose_dp,
    resolve_noise,
)
from privacy.dp_sgd import DpSgdConfig, poisson_sample, private_gradient

logger = get_logger("travag")

SAMPLE_CHUNK = 10_000


@dataclass
class TravagConfig:
    """
    Architecture and schedule of the autoencoder/GAN generator.

    latent_dim=None picks min(32, max(2, n // 8)), kept below n. Iteration counts
    default to the DP-SGD iteration count; the generator batch defaults to the
    expected Poisson batch size. dp_learning_rate is the step size of the
    DP-trained decoder and discriminator; None falls back to dp_sgd.learning_rate.
    """

    latent_dim: int | None = None
    noise_dim: int = 64
    hidden_dim: int = 128
    autoencoder_iterations: int | None = None
    gan_iterations: int | None = None
    dp_learning_rate: float | None = 5e-2
    encoder_learning_rate: float = 5e-2
    generator_learning_rate: float = 1e-2
    generator_batch_size: int | None = None
    collapse_variance: float = 1e-8
    collapse_patience: int = 100
    log_every: int = 100

    def __post_init__(self):
        if self.latent_dim is not None and self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.noise_dim < 1 or self.hidden_dim < 1:
            raise ValueError("noise_dim and hidden_dim must be positive")
        if self.encoder_learning_rate <= 0 or self.generator_learning_rate <= 0:
            raise ValueError("learning rates must be positive")
        if self.dp_learning_rate is not None and self.dp_learning_rate <= 0:
            raise ValueError(f"dp_learning_rate must be positive, got {self.dp_learning_rate}")
        for name in ("autoencoder_iterations", "gan_iterations"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")

    def private_learning_rate(self, dp_config: DpSgdConfig) -> float:
        return dp_config.learning_rate if self.dp_learning_rate is None else self.dp_learning_rate

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TravagConfig":
        return cls(**data)


def default_latent_dim(n: int) -> int:
    """min(32, max(2, n // 8)), capped at n - 1; a single variant gets d = 1."""
    if n <= 1:
        return 1
    return min(32, max(2, n // 8), n - 1)


@dataclass
class AutoencoderPair:
    encoder: DenseNetwork | None  # not shipped in model files
    decoder: DenseNetwork

    @property
    def latent_dim(self) -> int:
        return self.decoder.in_dim


@dataclass
class GanPair:
    generator: DenseNetwork
    discriminator: DenseNetwork | None  # not shipped in model files

    @property
    def noise_dim(self) -> int:
        return self.generator.in_dim


@dataclass
class TravagModel:
    vocab: VariantVocabulary
    autoencoder: AutoencoderPair
    gan: GanPair | None
    decoder_privacy: PrivacyReport
    discriminator_privacy: PrivacyReport | None
    case_count: int
    config: dict | None = None


def _check_finite_loss(value: float, component: str, iteration: int) -> None:
    if not np.isfinite(value):
        logger.error(f"{component} loss became non-finite at iteration {iteration}")
        raise TrainingDivergedError()


def reconstruction_loss(pair: AutoencoderPair, matrix: np.ndarray) -> float:
    """Mean squared reconstruction error of dec(enc(x)) over all rows."""
    if pair.encoder is None:
        raise ValueError("Autoencoder has no encoder (loaded from a model file)")
    reconstructed = forward(pair.decoder, forward(pair.encoder, matrix))
    return float(np.mean((reconstructed - matrix) ** 2))


def train_autoencoder(
    matrix: np.ndarray,
    dp_config: DpSgdConfig,
    config: TravagConfig,
    delta: float,
    rng: np.random.Generator,
    accountant: RdpAccountant | None = None,
) -> tuple[AutoencoderPair, PrivacySpec]:
    """
    Train the encoder non-privately and the decoder with DP-SGD.

    Every iteration draws one Poisson batch. The decoder gets the clipped noisy
    per-example gradient of the reconstruction loss; the encoder gets the plain
    mean gradient backpropagated through the decoder.

    Args:
        matrix: (m, n) one-hot case matrix
        dp_config: DP-SGD settings, noise multiplier set
        config: Architecture and schedule
        delta: delta at which the decoder guarantee is reported
        rng: Generator for initialization, batches and noise
        accountant: Accountant to advance (a fresh one is created when None)

    Returns:
        (trained pair, decoder privacy spec)

    Raises:
        ShapeError: latent dimension not below the vocabulary size
        TrainingDivergedError: reconstruction loss became non-finite
    """
    m, n = matrix.shape
    d = config.latent_dim or default_latent_dim(n)
    if n > 1 and d >= n:
        raise ShapeError(f"Latent dimension {d} must be below the vocabulary size {n}")
    iterations = dp_config.iterations if config.autoencoder_iterations is None else config.autoencoder_iterations
    if accountant is None:
        accountant = RdpAccountant(dp_config.sampling_rate, dp_config.noise)

    learning_rate = config.private_learning_rate(dp_config)
    encoder = DenseNetwork.build([n, config.hidden_dim, d], rng, "relu", "linear")
    decoder = DenseNetwork.build([d, config.hidden_dim, n], rng, "relu", "sigmoid")
    logger.info(
        f"Training autoencoder: n={n}, d={d}, m={m}, T={iterations}, q={dp_config.sampling_rate}, "
        f"Φ={dp_config.noise}, C={dp_config.clip_norm}"
    )

    skipped = 0
    for iteration in range(1, iterations + 1):
        accountant.step()
        batch = poisson_sample(m, dp_config.sampling_rate, rng)
        if batch.size == 0:
            skipped += 1
            continue

        x = matrix[batch]
        encoded = forward_trace(encoder, x)
        decoded = forward_trace(decoder, encoded.output)
        loss = float(np.mean((decoded.output - x) ** 2))
        _check_finite_loss(loss, "Reconstruction", iteration)

        delta_out = output_delta(decoder, LOSS_MSE, decoded, x)
        decoder_grads, latent_grad = backpropagate(decoder, decoded, delta_out, mode="per_example")
        encoder_grad, _ = backpropagate_output(encoder, encoded, latent_grad, mode="mean")

        apply_update(decoder, private_gradient(decoder_grads, dp_config, rng), learning_rate)
        apply_update(encoder, encoder_grad, config.encoder_learning_rate)

        if iteration % config.log_every == 0:
            logger.debug(f"Autoencoder iteration {iteration}/{iterations}: loss={loss:.6f}, batch={batch.size}")

    if skipped:
        logger.info(f"{skipped} of {iterations} autoencoder iterations had an empty batch")

    pair = AutoencoderPair(encoder, decoder)
    spec = accountant.spent(delta)
    logger.info(
        f"Autoencoder trained: reconstruction loss {reconstruction_loss(pair, matrix):.6f}, "
        f"decoder privacy (ε={spec.epsilon:.4f}, δ={spec.delta:g})"
    )
    return pair, spec


def _output_variance(outputs: np.ndarray) -> float:
    if outputs.shape[0] < 2:
        return float("inf")
    return float(np.mean(np.var(outputs, axis=0)))


def harden(rows: np.ndarray) -> np.ndarray:
    """One-hot row of every row's argmax, the row each one decodes to."""
    hard = np.zeros_like(rows)
    hard[np.arange(rows.shape[0]), np.argmax(rows, axis=1)] = 1.0
    return hard


def train_gan(
    matrix: np.ndarray,
    autoencoder: AutoencoderPair,
    dp_config: DpSgdConfig,
    config: TravagConfig,
    delta: float,
    rng: np.random.Generator,
    accountant: RdpAccountant | None = None,
) -> tuple[GanPair, PrivacySpec]:
    """
    Train generator and discriminator alternately, one step each per iteration.

    The discriminator judges one-hot rows in R^n: real rows x_i against the
    hardened fakes harden(dec(gen(z))), the rows those fakes decode to. Both
    sides are vertices of the same simplex.

    Discriminator step (DP-SGD): a Poisson batch of real rows (target 1) is
    paired with as many fakes (target 0); the gradient of each (real, fake)
    pair is clipped as one example.

    Generator step (plain SGD): non-saturating loss -log dis(harden(dec(gen(z)))).
    The discriminator's input gradient at the hardened row is passed straight
    through to the soft decoder output, then back through the frozen decoder
    into the generator. Only noise, decoder and discriminator enter this path.

    Logs a warning (once per episode) when the generator output variance stays
    below collapse_variance for collapse_patience consecutive iterations.

    Returns:
        (trained pair, discriminator privacy spec)
    """
    m, n = matrix.shape
    decoder = autoencoder.decoder
    if decoder.out_dim != n:
        raise ShapeError(f"Decoder output {decoder.out_dim} does not match matrix width {n}")
    iterations = dp_config.iterations if config.gan_iterations is None else config.gan_iterations
    generator_batch = config.generator_batch_size or max(2, round(dp_config.sampling_rate * m))
    learning_rate = config.private_learning_rate(dp_config)
    if accountant is None:
        accountant = RdpAccountant(dp_config.sampling_rate, dp_config.noise)

    generator = DenseNetwork.build(
        [config.noise_dim, config.hidden_dim, autoencoder.latent_dim], rng, "relu", "linear"
    )
    discriminator = DenseNetwork.build([n, config.hidden_dim, 1], rng, "relu", "sigmoid")
    logger.info(
        f"Training GAN: noise={config.noise_dim}, d={autoencoder.latent_dim}, T={iterations}, "
        f"generator batch={generator_batch}, Φ={dp_config.noise}"
    )

    collapsed_for = 0
    for iteration in range(1, iterations + 1):
        accountant.step()
        batch = poisson_sample(m, dp_config.sampling_rate, rng)
        if batch.size:
            real = matrix[batch]
            z = rng.standard_normal((batch.size, config.noise_dim))
            fake = harden(forward(decoder, forward(generator, z)))
            real_grads = per_example_gradients(discriminator, LOSS_BCE, real, np.ones((batch.size, 1)))
            fake_grads = per_example_gradients(discriminator, LOSS_BCE, fake, np.zeros((batch.size, 1)))
            apply_update(discriminator, private_gradient(real_grads + fake_grads, dp_config, rng), learning_rate)

        z = rng.standard_normal((generator_batch, config.noise_dim))
        generated = forward_trace(generator, z)
        decoded = forward_trace(decoder, generated.output)
        judged = forward_trace(discriminator, harden(decoded.output))
        logits = judged.pre_activations[-1]
        generator_loss = float(np.mean(np.logaddexp(0.0, -logits)))
        _check_finite_loss(generator_loss, "Generator", iteration)

        _, row_grad = backpropagate(
            discriminator, judged, output_delta(discriminator, LOSS_BCE, judged, np.ones_like(logits)), mode="none"
        )
        # straight-through: gradient at the hardened row applied to the soft row
        _, latent_grad = backpropagate_output(decoder, decoded, row_grad, mode="none")
        generator_grad, _ = backpropagate_output(generator, generated, latent_grad, mode="mean")
        apply_update(generator, generator_grad, config.generator_learning_rate)

        if _output_variance(generated.output) < config.collapse_variance:
            collapsed_for += 1
            if collapsed_for == config.collapse_patience:
                logger.warning(
                    f"Possible mode collapse: generator output variance below {config.collapse_variance:g} "
                    f"for {config.collapse_patience} iterations (iteration {iteration})"
                )
        else:
            collapsed_for = 0

        if iteration % config.log_every == 0:
            logger.debug(f"GAN iteration {iteration}/{iterations}: generator loss={generator_loss:.4f}")

    pair = GanPair(generator, discriminator)
    spec = accountant.spent(delta)
    logger.info(f"GAN trained: discriminator privacy (ε={spec.epsilon:.4f}, δ={spec.delta:g})")
    return pair, spec


def split_target(target: PrivacySpec) -> PrivacySpec:
    """Half of the budget for each of the two DP-trained components."""
    return PrivacySpec(target.epsilon / 2, target.delta / 2)


def train_travag(
    log: SimpleEventLog,
    target: PrivacySpec,
    dp_config: DpSgdConfig,
    config: TravagConfig,
    rng: np.random.Generator,
) -> TravagModel:
    """
    Calibrate, train both phases and assemble a model meeting target overall.

    Decoder and discriminator each get (epsilon/2, delta/2). With an explicit
    noise multiplier in dp_config, it is checked against the component targets
    instead of calibrated.

    Raises:
        InfeasibleTargetError: no noise multiplier reaches a component target
    """
    vocab, matrix = one_hot_encode(log)
    component = split_target(target)
    q = dp_config.sampling_rate
    ae_steps = dp_config.iterations if config.autoencoder_iterations is None else config.autoencoder_iterations
    gan_steps = dp_config.iterations if config.gan_iterations is None else config.gan_iterations

    decoder_noise = resolve_noise(dp_config.noise_multiplier, component, q, ae_steps)
    discriminator_noise = resolve_noise(dp_config.noise_multiplier, component, q, gan_steps)

    decoder_accountant = RdpAccountant(q, decoder_noise)
    pair, _ = train_autoencoder(
        matrix, replace(dp_config, noise_multiplier=decoder_noise), config, component.delta, rng, decoder_accountant
    )
    discriminator_accountant = RdpAccountant(q, discriminator_noise)
    gan, _ = train_gan(
        matrix,
        pair,
        replace(dp_config, noise_multiplier=discriminator_noise),
        config,
        component.delta,
        rng,
        discriminator_accountant,
    )

    return TravagModel(
        vocab=vocab,
        autoencoder=pair,
        gan=gan,
        decoder_privacy=decoder_accountant.report(component.delta),
        discriminator_privacy=discriminator_accountant.report(component.delta),
        case_count=log.n_cases,
        config={"dp_sgd": dp_config.to_dict(), "travag": config.to_dict()},
    )


def sample(model: TravagModel, count: int, rng: np.random.Generator) -> SimpleEventLog:
    """
    Generate `count` cases: z ~ N(0, I), row = dec(gen(z)), variant = argmax(row).

    Sampling only post-processes the trained networks and consumes no budget.
    """
    if count < 0:
        raise ValueError(f"Sample count must be >= 0, got {count}")
    if model.gan is None:
        raise ValueError("Model has no trained generator")
    if count == 0:
        return SimpleEventLog()

    started = time.perf_counter()
    counts: dict = {}
    for start in range(0, count, SAMPLE_CHUNK):
        size = min(SAMPLE_CHUNK, count - start)
        z = rng.standard_normal((size, model.gan.noise_dim))
        rows = forward(model.autoencoder.decoder, forward(model.gan.generator, z))
        chunk = one_hot_decode(rows, model.vocab)
        for variant, frequency in chunk.variants.items():
            counts[variant] = counts.get(variant, 0) + frequency
    generated = SimpleEventLog(counts)

    logger.info(
        f"Sampled {count} cases over {generated.n_variants} variants in "
        f"{time.perf_counter() - started:.2f}s"
    )
    return generated


def total_privacy(model: TravagModel) -> PrivacySpec:
    """
    Sequential composition of the decoder and (when trained) discriminator guarantees.

    Raises:
        PrivacyBudgetError: a component was trained without noise, or deltas sum to 1
    """
    reports = [model.decoder_privacy]
    if model.discriminator_privacy is not None:
        reports.append(model.discriminator_privacy)
    specs = [r.spec for r in reports]
    if not all(s.is_private for s in specs):
        raise PrivacyBudgetError("budget exhausted: a component was trained without noise (ε = ∞)")
    return compose_dp(specs)
