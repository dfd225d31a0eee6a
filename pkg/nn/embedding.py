"""Sinusoidal step-number embeddings for the diffusion noise predictor."""

import numpy as np

from errors import ShapeError

MAX_PERIOD = 10000.0


def time_embedding(t, dim: int) -> np.ndarray:
    """
    Interleaved sin/cos features of the step number.

    Component pair k is (sin(t * w_k), cos(t * w_k)) with w_k = 10000^(-2k/dim).

    Args:
        t: Step number (scalar) or array of step numbers, all >= 0
        dim: Embedding width, even and positive

    Returns:
        (dim,) vector for a scalar t, (len(t), dim) matrix for an array

    Raises:
        ShapeError: dim is odd or not positive
        ValueError: a step number is negative
    """
    if dim <= 0 or dim % 2:
        raise ShapeError(f"Time embedding dimension must be even and positive, got {dim}")

    steps = np.asarray(t, dtype=float)
    if np.any(steps < 0):
        raise ValueError("Step numbers must be non-negative")

    frequencies = MAX_PERIOD ** (-2.0 * np.arange(dim // 2) / dim)
    angles = np.multiply.outer(steps, frequencies)

    embedding = np.empty(angles.shape[:-1] + (dim,))
    embedding[..., 0::2] = np.sin(angles)
    embedding[..., 1::2] = np.cos(angles)
    return embedding
