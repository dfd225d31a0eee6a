"""
Differentially private SGD building blocks.

Per-example (or per-microbatch) gradients are clipped to L2 norm C, summed,
perturbed once per step with N(0, C^2 Phi^2 I) noise and averaged. Batches are
drawn by Poisson sampling: every record joins a step's batch independently with
probability q.
"""

from collections.abc import Callable
from dataclasses import asdict, dataclass

import numpy as np
from loguru import logger

from errors import EmptyBatchError, TrainingDivergedError
from nn.network import DenseNetwork, apply_update, per_example_gradients


@dataclass
class DpSgdConfig:
    """
    Hyperparameters of one DP-SGD training run.

    noise_multiplier=None means "calibrate from the privacy target"; 0 is a
    non-private run.
    """

    clip_norm: float = 1.0
    noise_multiplier: float | None = None
    sampling_rate: float = 0.1
    microbatch_size: int = 1
    learning_rate: float = 1e-3
    iterations: int = 1000
    seed: int | None = None

    def __post_init__(self):
        if self.clip_norm <= 0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.noise_multiplier is not None and self.noise_multiplier < 0:
            raise ValueError(f"noise_multiplier must be non-negative, got {self.noise_multiplier}")
        if not 0 < self.sampling_rate <= 1:
            raise ValueError(f"sampling_rate must be in (0, 1], got {self.sampling_rate}")
        if self.microbatch_size < 1:
            raise ValueError(f"microbatch_size must be >= 1, got {self.microbatch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")

    @property
    def noise(self) -> float:
        """Noise multiplier with None (not yet calibrated) read as an error."""
        if self.noise_multiplier is None:
            raise ValueError("noise_multiplier has not been calibrated")
        return self.noise_multiplier

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DpSgdConfig":
        return cls(**data)


def clip_gradient(gradient: np.ndarray, clip_norm: float) -> np.ndarray:
    """
    Scale a gradient to L2 norm at most clip_norm: g * min(1, C / ||g||).

    Raises:
        ValueError: clip_norm not positive
        TrainingDivergedError: gradient has non-finite entries
    """
    if clip_norm <= 0:
        raise ValueError(f"clip_norm must be positive, got {clip_norm}")
    g = np.asarray(gradient, dtype=float)
    if not np.all(np.isfinite(g)):
        raise TrainingDivergedError("training diverged: non-finite gradient (reduce η or raise Φ)")
    norm = np.linalg.norm(g)
    if norm <= clip_norm:
        return g.copy()
    return g * (clip_norm / norm)


def clip_rows(gradients: np.ndarray, clip_norm: float) -> np.ndarray:
    """clip_gradient applied to every row of a (batch, n_params) matrix."""
    if not np.all(np.isfinite(gradients)):
        raise TrainingDivergedError("training diverged: non-finite gradient (reduce η or raise Φ)")
    norms = np.linalg.norm(gradients, axis=1)
    factors = np.divide(clip_norm, norms, out=np.ones_like(norms), where=norms > clip_norm)
    return gradients * factors[:, None]


def noisy_batch_gradient(
    gradients: np.ndarray, clip_norm: float, noise_multiplier: float, rng: np.random.Generator
) -> np.ndarray:
    """
    (1/|B|) (sum_i clip(g_i, C) + nu) with nu ~ N(0, C^2 Phi^2 I).

    Args:
        gradients: (batch, n_params) per-example gradients
        clip_norm: C
        noise_multiplier: Phi (0 skips the noise draw entirely)
        rng: Generator for the noise draw

    Raises:
        EmptyBatchError: the batch has no examples
    """
    gradients = np.asarray(gradients, dtype=float)
    if gradients.ndim != 2 or gradients.shape[0] == 0:
        raise EmptyBatchError()

    total = clip_rows(gradients, clip_norm).sum(axis=0)
    if noise_multiplier > 0:
        total = total + rng.normal(0.0, clip_norm * noise_multiplier, size=total.shape)
    return total / gradients.shape[0]


def microbatch_gradient(
    gradients: np.ndarray,
    microbatch_size: int,
    clip_norm: float,
    noise_multiplier: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Clip the mean gradient of each microbatch of r consecutive examples.

    The last microbatch is smaller when r does not divide the batch size. With
    r = 1 this is exactly noisy_batch_gradient.
    """
    gradients = np.asarray(gradients, dtype=float)
    if gradients.ndim != 2 or gradients.shape[0] == 0:
        raise EmptyBatchError()
    if microbatch_size < 1:
        raise ValueError(f"microbatch_size must be >= 1, got {microbatch_size}")

    if microbatch_size == 1:
        group_means = gradients
    else:
        starts = np.arange(0, gradients.shape[0], microbatch_size)
        sizes = np.diff(np.append(starts, gradients.shape[0]))
        group_means = np.add.reduceat(gradients, starts, axis=0) / sizes[:, None]
    return noisy_batch_gradient(group_means, clip_norm, noise_multiplier, rng)


def private_gradient(gradients: np.ndarray, config: DpSgdConfig, rng: np.random.Generator) -> np.ndarray:
    """Clipped, noised and averaged gradient for one step under config."""
    return microbatch_gradient(
        gradients, config.microbatch_size, config.clip_norm, config.noise, rng
    )


def poisson_sample(m: int, sampling_rate: float, rng: np.random.Generator) -> np.ndarray:
    """
    Indices of a Poisson-sampled batch: each of 0..m-1 kept with probability q.

    Returns:
        Sorted index array (possibly empty)
    """
    if m < 1:
        raise ValueError(f"Dataset size must be >= 1, got {m}")
    return np.flatnonzero(rng.random(m) < sampling_rate)


BatchTransform = Callable[[np.ndarray, np.ndarray, np.random.Generator], tuple[np.ndarray, np.ndarray]]


def dp_sgd_step(
    net: DenseNetwork,
    loss_tag: str,
    inputs: np.ndarray,
    targets: np.ndarray,
    config: DpSgdConfig,
    rng: np.random.Generator,
    transform: BatchTransform | None = None,
    accountant=None,
) -> int:
    """
    One DP-SGD iteration: Poisson batch, clipped noisy gradient, one update.

    An empty batch is a no-op for the parameters but still counts as a step for
    the accountant.

    Args:
        net: Network to update in place
        loss_tag: "mse" or "binary-cross-entropy"
        inputs: (m, in_dim) training inputs
        targets: (m, out_dim) training targets
        config: DP-SGD hyperparameters (noise multiplier must be set)
        rng: Generator for sampling and noise
        transform: Optional hook mapping the sampled (inputs, targets) to the
            actual network inputs/targets, e.g. diffusion noising
        accountant: Optional RdpAccountant, advanced by one step

    Returns:
        Size of the Poisson batch (0 for a skipped step)
    """
    if accountant is not None:
        accountant.step()

    indices = poisson_sample(len(inputs), config.sampling_rate, rng)
    if indices.size == 0:
        logger.debug("Empty Poisson batch - step skipped")
        return 0

    batch_inputs, batch_targets = inputs[indices], targets[indices]
    if transform is not None:
        batch_inputs, batch_targets = transform(batch_inputs, batch_targets, rng)

    grads = per_example_gradients(net, loss_tag, batch_inputs, batch_targets)
    apply_update(net, private_gradient(grads, config, rng), config.learning_rate)
    return int(indices.size)
