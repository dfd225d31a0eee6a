"""
Denoising diffusion generator over one-hot case rows.

The forward process noises a row x0 towards N(0, I) along a linear beta
schedule. A dense noise predictor eps_theta(x_t, t) is trained with DP-SGD to
recover the added noise; generation runs the reverse chain from x_T ~ N(0, I)
down to x_0 and decodes each row by argmax.
"""

import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from config.logging import get_logger
from errors import ShapeError, TrainingDivergedError
from eventlog.encoding import VariantVocabulary, one_hot_decode, one_hot_encode
from eventlog.simple_log import SimpleEventLog
from nn.embedding import time_embedding
from nn.network import DenseNetwork, forward
from privacy.accountant import PrivacyReport, PrivacySpec, RdpAccountant, resolve_noise
from privacy.dp_sgd import DpSgdConfig, dp_sgd_step

logger = get_logger("ddpm")

GENERATE_CHUNK = 2_048

# Fixed (row, t, noise) triples for the training loss log line; own stream so
# the training stream stays untouched
MONITOR_ROWS = 256
MONITOR_SEED = 0


@dataclass
class DdpmConfig:
    """Schedule and predictor architecture; iterations=None uses the DP-SGD count."""

    steps: int = 300
    beta_start: float = 1e-4
    beta_end: float = 0.07
    embed_dim: int = 32
    hidden_dim: int = 256
    iterations: int | None = None
    log_every: int = 100

    def __post_init__(self):
        if self.embed_dim <= 0 or self.embed_dim % 2:
            raise ValueError(f"embed_dim must be even and positive, got {self.embed_dim}")
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be positive, got {self.hidden_dim}")
        if self.iterations is not None and self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DdpmConfig":
        return cls(**data)


class NoiseSchedule:
    """
    Variance schedule beta_1..beta_T and the quantities derived from it.

    Arrays are 0-based (index t - 1 holds step t); the accessor methods take
    the 1-based step number, with alpha_bar(0) = 1.
    """

    def __init__(self, betas):
        betas = np.asarray(betas, dtype=float)
        if betas.ndim != 1 or betas.size == 0:
            raise ValueError("A schedule needs at least one beta")
        if not np.all((betas > 0) & (betas < 1)):
            raise ValueError("Every beta must lie in (0, 1)")
        self.betas = betas
        self.alphas = 1.0 - betas
        self.alpha_bars = np.cumprod(self.alphas)
        previous = np.concatenate([[1.0], self.alpha_bars[:-1]])
        self.posterior_variances = betas * (1.0 - previous) / (1.0 - self.alpha_bars)

    @property
    def T(self) -> int:
        return self.betas.size

    def check_step(self, t) -> None:
        steps = np.asarray(t)
        if np.any(steps < 1) or np.any(steps > self.T):
            raise ValueError(f"Step numbers must lie in 1..{self.T}")

    def beta(self, t: int) -> float:
        self.check_step(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self.check_step(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self.check_step(t)
        return float(self.alpha_bars[t - 1])

    def posterior_variance(self, t: int) -> float:
        self.check_step(t)
        return float(self.posterior_variances[t - 1])

    def to_dict(self) -> dict:
        return {"betas": self.betas}

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseSchedule":
        return cls(data["betas"])


def build_schedule(T: int = 300, beta_start: float = 1e-4, beta_end: float = 0.07) -> NoiseSchedule:
    """
    Linear schedule from beta_start to beta_end over T steps.

    Raises:
        ValueError: T < 1 or not 0 < beta_start <= beta_end < 1
    """
    if T < 1:
        raise ValueError(f"Schedule length must be >= 1, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(f"Need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def forward_sample(x0, t, noise, schedule: NoiseSchedule) -> np.ndarray:
    """
    x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise, in closed form.

    Works on a single row with a scalar t, or on a (batch, n) matrix with one
    step number per row.

    Raises:
        ValueError: t outside 1..T
        ShapeError: x0 and noise shapes differ
    """
    x0 = np.asarray(x0, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if x0.shape != noise.shape:
        raise ShapeError(f"x0 {x0.shape} and noise {noise.shape} differ in shape")
    steps = np.asarray(t)
    schedule.check_step(steps)

    alpha_bar = schedule.alpha_bars[steps - 1]
    if x0.ndim == 2:
        alpha_bar = np.broadcast_to(alpha_bar, (x0.shape[0],))[:, None]
    return np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * noise


def sample_steps(count: int, schedule: NoiseSchedule, rng: np.random.Generator) -> np.ndarray:
    """Step numbers drawn uniformly from 1..T."""
    return rng.integers(1, schedule.T + 1, size=count)


@dataclass
class DiffusionModel:
    vocab: VariantVocabulary
    schedule: NoiseSchedule
    predictor: DenseNetwork
    privacy: PrivacyReport | None
    case_count: int
    embed_dim: int = 32
    config: dict | None = None

    @property
    def n(self) -> int:
        return self.predictor.out_dim


def predictor_inputs(x_t: np.ndarray, t, embed_dim: int) -> np.ndarray:
    """Rows x_t concatenated with the time embedding of their step numbers."""
    steps = np.broadcast_to(np.asarray(t), (x_t.shape[0],))
    return np.concatenate([x_t, time_embedding(steps, embed_dim)], axis=1)


def predict_noise(model: DiffusionModel, x_t: np.ndarray, t) -> np.ndarray:
    return forward(model.predictor, predictor_inputs(x_t, t, model.embed_dim))


def denoising_loss(model: DiffusionModel, x0: np.ndarray, t: np.ndarray, noise: np.ndarray) -> float:
    """Mean squared error between predicted and true noise on fixed triples."""
    x_t = forward_sample(x0, t, noise, model.schedule)
    return float(np.mean((predict_noise(model, x_t, t) - noise) ** 2))


def build_predictor(n: int, embed_dim: int, hidden_dim: int, rng: np.random.Generator) -> DenseNetwork:
    """(n + embed) -> hidden -> hidden -> n with a linear head."""
    return DenseNetwork.build([n + embed_dim, hidden_dim, hidden_dim, n], rng, "relu", "linear")


def train(
    matrix: np.ndarray,
    vocab: VariantVocabulary,
    schedule: NoiseSchedule,
    dp_config: DpSgdConfig,
    config: DdpmConfig,
    delta: float,
    rng: np.random.Generator,
    accountant: RdpAccountant | None = None,
) -> DiffusionModel:
    """
    Train the noise predictor with DP-SGD.

    Each step Poisson-samples rows, draws a step number and fresh noise per
    row, and regresses eps_theta(x_t, t) onto the noise. One (row, t, noise)
    triple is one example for clipping.

    Raises:
        TrainingDivergedError: predictor parameters became non-finite
    """
    m, n = matrix.shape
    if len(vocab) != n:
        raise ShapeError(f"Vocabulary of {len(vocab)} variants for a matrix of width {n}")
    iterations = dp_config.iterations if config.iterations is None else config.iterations
    if accountant is None:
        accountant = RdpAccountant(dp_config.sampling_rate, dp_config.noise)

    predictor = build_predictor(n, config.embed_dim, config.hidden_dim, rng)
    model = DiffusionModel(vocab, schedule, predictor, None, m, config.embed_dim)
    monitor_rng = np.random.default_rng(MONITOR_SEED)
    monitor_x0 = matrix[: min(m, MONITOR_ROWS)]
    monitor_t = sample_steps(monitor_x0.shape[0], schedule, monitor_rng)
    monitor_noise = monitor_rng.standard_normal(monitor_x0.shape)

    def noising(rows, _targets, step_rng):
        t = sample_steps(rows.shape[0], schedule, step_rng)
        noise = step_rng.standard_normal(rows.shape)
        x_t = forward_sample(rows, t, noise, schedule)
        return predictor_inputs(x_t, t, config.embed_dim), noise

    logger.info(
        f"Training noise predictor: n={n}, m={m}, T_diffusion={schedule.T}, iterations={iterations}, "
        f"q={dp_config.sampling_rate}, Φ={dp_config.noise}, C={dp_config.clip_norm}"
    )
    for iteration in range(1, iterations + 1):
        dp_sgd_step(predictor, "mse", matrix, matrix, dp_config, rng, transform=noising, accountant=accountant)
        if not predictor.is_finite():
            logger.error(f"Noise predictor diverged at iteration {iteration}")
            raise TrainingDivergedError()
        if iteration % config.log_every == 0:
            loss = denoising_loss(model, monitor_x0, monitor_t, monitor_noise)
            logger.debug(f"Predictor iteration {iteration}/{iterations}: denoising loss={loss:.6f}")

    model.privacy = accountant.report(delta)
    logger.info(f"Noise predictor trained: privacy (ε={model.privacy.epsilon:.4f}, δ={delta:g})")
    return model


def train_ddpm(
    log: SimpleEventLog,
    target: PrivacySpec,
    dp_config: DpSgdConfig,
    config: DdpmConfig,
    rng: np.random.Generator,
) -> DiffusionModel:
    """
    Encode, calibrate to the whole target and train.

    Raises:
        InfeasibleTargetError: no noise multiplier reaches the target
    """
    vocab, matrix = one_hot_encode(log)
    schedule = build_schedule(config.steps, config.beta_start, config.beta_end)
    iterations = dp_config.iterations if config.iterations is None else config.iterations
    noise = resolve_noise(dp_config.noise_multiplier, target, dp_config.sampling_rate, iterations)

    model = train(matrix, vocab, schedule, replace(dp_config, noise_multiplier=noise), config, target.delta, rng)
    model.config = {"dp_sgd": dp_config.to_dict(), "ddpm": config.to_dict()}
    return model


def reverse_step(x_t, t: int, model: DiffusionModel, z=None, rng: np.random.Generator | None = None) -> np.ndarray:
    """
    One reverse-chain step x_t -> x_{t-1}.

    x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_theta(x_t, t)) / sqrt(alpha_t) + sigma_t z
    with sigma_t = sqrt(posterior variance). z is drawn from rng when not given
    and is always zero at t = 1.

    Args:
        x_t: (n,) row or (batch, n) matrix at step t
        t: Step number in 1..T
        model: Trained diffusion model
        z: Standard normal noise shaped like x_t, or None
        rng: Generator used when z is None

    Raises:
        ValueError: t outside 1..T, or neither z nor rng given for t > 1
    """
    schedule = model.schedule
    schedule.check_step(t)
    x = np.asarray(x_t, dtype=float)
    single = x.ndim == 1
    rows = x[None, :] if single else x

    predicted = predict_noise(model, rows, t)
    beta, alpha, alpha_bar = schedule.beta(t), schedule.alpha(t), schedule.alpha_bar(t)
    mean = (rows - beta / np.sqrt(1.0 - alpha_bar) * predicted) / np.sqrt(alpha)

    if t == 1:
        result = mean
    else:
        if z is None:
            if rng is None:
                raise ValueError("reverse_step needs z or rng for t > 1")
            noise = rng.standard_normal(rows.shape)
        else:
            noise = np.asarray(z, dtype=float).reshape(rows.shape)
        result = mean + np.sqrt(schedule.posterior_variance(t)) * noise
    return result[0] if single else result


def generate(model: DiffusionModel, count: int, rng: np.random.Generator) -> SimpleEventLog:
    """
    Run `count` reverse chains from x_T ~ N(0, I) and decode every x_0 by argmax.

    Chains are processed in chunks; each chain is sequential over t = T..1.
    """
    if count < 0:
        raise ValueError(f"Sample count must be >= 0, got {count}")
    if count == 0:
        return SimpleEventLog()

    started = time.perf_counter()
    counts: dict = {}
    for start in range(0, count, GENERATE_CHUNK):
        size = min(GENERATE_CHUNK, count - start)
        x = rng.standard_normal((size, model.n))
        for t in range(model.schedule.T, 0, -1):
            x = reverse_step(x, t, model, rng=rng)
        for variant, frequency in one_hot_decode(x, model.vocab).variants.items():
            counts[variant] = counts.get(variant, 0) + frequency

    generated = SimpleEventLog(counts)
    logger.info(
        f"Generated {count} cases over {generated.n_variants} variants in "
        f"{time.perf_counter() - started:.2f}s"
    )
    return generated
