"""
Renyi-DP accounting for Poisson-subsampled Gaussian DP-SGD.

Pipeline:
1. rdp_subsampled_gaussian: per-step RDP curve eps(alpha) over an order grid
2. compose_rdp: T steps compose additively (eps * T)
3. rdp_to_dp: (eps, delta)-DP by minimizing eps(alpha) + ln(1/delta)/(alpha - 1)
4. calibrate_noise: smallest noise multiplier meeting a target, by bisection

compose_dp combines independently trained mechanisms (sequential sums or
parallel maxima).
"""

import math
from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.special import gammaln, logsumexp

from errors import InfeasibleTargetError, NonPrivateError, PrivacyBudgetError

DEFAULT_ORDERS: tuple[float, ...] = (1.5, 1.75, *(float(a) for a in range(2, 257)))

# Calibration searches noise multipliers k * NOISE_RESOLUTION for integer k.
NOISE_RESOLUTION = 1e-3
MAX_NOISE_MULTIPLIER = 1e6

SEQUENTIAL = "sequential"
PARALLEL = "parallel"


@dataclass(frozen=True)
class PrivacySpec:
    """
    An (epsilon, delta) guarantee.

    epsilon = inf marks a run without a guarantee (noise multiplier zero).
    """

    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must be in [0, 1), got {self.delta}")

    @property
    def is_private(self) -> bool:
        return math.isfinite(self.epsilon)

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "delta": self.delta}

    @classmethod
    def from_dict(cls, data: dict) -> "PrivacySpec":
        return cls(float(data["epsilon"]), float(data["delta"]))


def validate_target(target: PrivacySpec) -> None:
    """A calibration target needs a finite epsilon and 0 < delta < 1."""
    if not target.is_private or not 0 < target.delta < 1:
        raise ValueError(f"Invalid privacy target (epsilon={target.epsilon}, delta={target.delta})")


@dataclass(frozen=True)
class RdpCurve:
    """RDP guarantee eps(alpha) on a strictly increasing grid of orders alpha > 1."""

    orders: tuple[float, ...]
    epsilons: tuple[float, ...]

    def __post_init__(self):
        if len(self.orders) != len(self.epsilons):
            raise ValueError("orders and epsilons must align")
        if any(a <= 1 for a in self.orders):
            raise ValueError("RDP orders must exceed 1")
        if any(b <= a for a, b in zip(self.orders, self.orders[1:])):
            raise ValueError("RDP orders must be strictly increasing")
        if any(not (math.isfinite(e) and e >= 0) for e in self.epsilons):
            raise ValueError("RDP epsilons must be finite and non-negative")

    def __len__(self) -> int:
        return len(self.orders)

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.orders, self.epsilons))


def _log_a_integer(q: float, noise_multiplier: float, alpha: int) -> float:
    """log of sum_j C(alpha,j) (1-q)^(alpha-j) q^j exp(j(j-1)/(2 Phi^2))."""
    j = np.arange(alpha + 1, dtype=float)
    log_binomial = gammaln(alpha + 1) - gammaln(j + 1) - gammaln(alpha - j + 1)
    terms = (
        log_binomial
        + j * math.log(q)
        + (alpha - j) * math.log1p(-q)
        + j * (j - 1) / (2.0 * noise_multiplier**2)
    )
    return float(logsumexp(terms))


def _log_a(q: float, noise_multiplier: float, alpha: float) -> float:
    """log A(alpha), linearly interpolated between integer orders (log A(1) = 0)."""
    if float(alpha).is_integer():
        return _log_a_integer(q, noise_multiplier, int(alpha))
    lower, upper = math.floor(alpha), math.ceil(alpha)
    log_lower = 0.0 if lower == 1 else _log_a_integer(q, noise_multiplier, lower)
    log_upper = _log_a_integer(q, noise_multiplier, upper)
    weight = alpha - lower
    return (1.0 - weight) * log_lower + weight * log_upper


def rdp_subsampled_gaussian(
    q: float, noise_multiplier: float, orders=DEFAULT_ORDERS
) -> RdpCurve:
    """
    Per-step RDP of the Poisson-subsampled Gaussian mechanism.

    q = 1 uses the Gaussian closed form alpha / (2 Phi^2). For q < 1 the
    binomial-expansion bound is evaluated in log space for integer orders and
    interpolated for the others. Orders whose bound overflows are dropped.

    Args:
        q: Sampling rate in (0, 1]
        noise_multiplier: Phi > 0
        orders: RDP orders alpha > 1

    Raises:
        NonPrivateError: noise multiplier is zero
        ValueError: q or orders out of range
    """
    if noise_multiplier == 0:
        raise NonPrivateError()
    if noise_multiplier < 0:
        raise ValueError(f"Noise multiplier must be positive, got {noise_multiplier}")
    if not 0 < q <= 1:
        raise ValueError(f"Sampling rate must be in (0, 1], got {q}")

    kept_orders, epsilons = [], []
    for alpha in orders:
        if alpha <= 1:
            raise ValueError(f"RDP orders must exceed 1, got {alpha}")
        if q == 1:
            eps = alpha / (2.0 * noise_multiplier**2)
        else:
            eps = _log_a(q, noise_multiplier, alpha) / (alpha - 1)
        if math.isfinite(eps):
            kept_orders.append(float(alpha))
            epsilons.append(max(eps, 0.0))
    return RdpCurve(tuple(kept_orders), tuple(epsilons))


def compose_rdp(curve: RdpCurve, steps: int) -> RdpCurve:
    """RDP of `steps` adaptive runs of the same mechanism: every eps(alpha) times steps."""
    if steps < 0:
        raise ValueError(f"Step count must be non-negative, got {steps}")
    return RdpCurve(curve.orders, tuple(e * steps for e in curve.epsilons))


def rdp_to_dp_with_order(curve: RdpCurve, delta: float) -> tuple[float, float]:
    """
    Convert an RDP curve to (epsilon, delta)-DP.

    Returns:
        (epsilon, optimal alpha) minimizing eps(alpha) + ln(1/delta) / (alpha - 1)

    Raises:
        ValueError: empty curve or delta outside (0, 1)
    """
    if len(curve) == 0:
        raise ValueError("Cannot convert an empty RDP curve")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")

    orders = np.asarray(curve.orders)
    totals = np.asarray(curve.epsilons) + math.log(1.0 / delta) / (orders - 1.0)
    best = int(np.argmin(totals))
    return float(totals[best]), float(orders[best])


def rdp_to_dp(curve: RdpCurve, delta: float) -> float:
    """(epsilon, delta)-DP epsilon of an RDP curve at the best order."""
    return rdp_to_dp_with_order(curve, delta)[0]


def compose_dp(specs: list[PrivacySpec], mode: str = SEQUENTIAL) -> PrivacySpec:
    """
    Combine the guarantees of several mechanisms.

    sequential: all run on the same log, (sum eps, sum delta).
    parallel: each runs on a disjoint part, (max eps, max delta).

    Raises:
        ValueError: empty list or unknown mode
        PrivacyBudgetError: sequential deltas sum to 1 or more
    """
    if not specs:
        raise ValueError("Nothing to compose")
    if mode == SEQUENTIAL:
        delta = math.fsum(s.delta for s in specs)
        if delta >= 1:
            raise PrivacyBudgetError(f"budget exhausted: composed delta {delta} >= 1")
        return PrivacySpec(math.fsum(s.epsilon for s in specs), delta)
    if mode == PARALLEL:
        return PrivacySpec(max(s.epsilon for s in specs), max(s.delta for s in specs))
    raise ValueError(f"Unknown composition mode {mode!r}, expected {SEQUENTIAL!r} or {PARALLEL!r}")


def dp_epsilon(q: float, noise_multiplier: float, steps: int, delta: float, orders=DEFAULT_ORDERS) -> tuple[float, float]:
    """(epsilon, optimal alpha) of `steps` subsampled Gaussian steps."""
    curve = compose_rdp(rdp_subsampled_gaussian(q, noise_multiplier, orders), steps)
    return rdp_to_dp_with_order(curve, delta)


@dataclass(frozen=True)
class Calibration:
    """Result of calibrate_noise: the noise multiplier and what it achieves."""

    noise_multiplier: float
    achieved_epsilon: float
    delta: float
    optimal_alpha: float
    sampling_rate: float
    steps: int

    @property
    def achieved(self) -> PrivacySpec:
        return PrivacySpec(self.achieved_epsilon, self.delta)

    def to_dict(self) -> dict:
        return {
            "noise_multiplier": self.noise_multiplier,
            "achieved_epsilon": self.achieved_epsilon,
            "delta": self.delta,
            "optimal_alpha": self.optimal_alpha,
            "sampling_rate": self.sampling_rate,
            "steps": self.steps,
        }


def calibrate_noise(target: PrivacySpec, q: float, steps: int, orders=DEFAULT_ORDERS) -> Calibration:
    """
    Smallest noise multiplier on a 1e-3 grid whose T-step guarantee meets target.

    Bisection over integer grid indices keeps the result monotone: a tighter
    target or more steps never yields a smaller multiplier.

    Raises:
        ValueError: invalid target
        InfeasibleTargetError: even Phi = 1e6 misses the target
    """
    validate_target(target)

    def meets(index: int) -> bool:
        eps, _ = dp_epsilon(q, index * NOISE_RESOLUTION, steps, target.delta, orders)
        return eps <= target.epsilon

    hi = round(MAX_NOISE_MULTIPLIER / NOISE_RESOLUTION)
    if not meets(hi):
        raise InfeasibleTargetError(
            f"infeasible target: (ε={target.epsilon}, δ={target.delta}) not reachable with "
            f"q={q}, T={steps} even at Φ={MAX_NOISE_MULTIPLIER:g}"
        )

    lo = 0  # Phi = 0 gives no guarantee at all
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if meets(mid):
            hi = mid
        else:
            lo = mid

    noise = hi * NOISE_RESOLUTION
    achieved, alpha = dp_epsilon(q, noise, steps, target.delta, orders)
    logger.info(
        f"Calibrated Φ={noise:.3f} for target (ε={target.epsilon}, δ={target.delta}), "
        f"q={q}, T={steps}: achieved ε={achieved:.4f} at α={alpha:g}"
    )
    return Calibration(noise, achieved, target.delta, alpha, q, steps)


class RdpAccountant:
    """
    Counts DP-SGD steps of one training run and reports the privacy spent.

    Attributes:
        sampling_rate: q
        noise_multiplier: Phi (0 = non-private)
        steps: iterations consumed so far, including skipped empty batches
        orders: RDP order grid
    """

    def __init__(self, sampling_rate: float, noise_multiplier: float, orders=DEFAULT_ORDERS):
        if not 0 < sampling_rate <= 1:
            raise ValueError(f"Sampling rate must be in (0, 1], got {sampling_rate}")
        if noise_multiplier < 0:
            raise ValueError(f"Noise multiplier must be non-negative, got {noise_multiplier}")
        self.sampling_rate = sampling_rate
        self.noise_multiplier = noise_multiplier
        self.orders = tuple(orders)
        self.steps = 0

    def step(self, count: int = 1) -> None:
        if count < 0:
            raise ValueError("Step count cannot decrease")
        self.steps += count

    def curve(self) -> RdpCurve:
        """Composed RDP curve of the steps so far."""
        per_step = rdp_subsampled_gaussian(self.sampling_rate, self.noise_multiplier, self.orders)
        return compose_rdp(per_step, self.steps)

    def report(self, delta: float) -> "PrivacyReport":
        """
        Privacy spent so far at the given delta, with the parameters behind it.

        A zero noise multiplier yields epsilon = inf and no optimal order.
        """
        if self.noise_multiplier == 0:
            logger.warning("Noise multiplier is zero - training is not differentially private")
            epsilon, alpha = math.inf, None
        else:
            epsilon, alpha = rdp_to_dp_with_order(self.curve(), delta)
        return PrivacyReport(
            epsilon=epsilon,
            delta=delta,
            optimal_alpha=alpha,
            noise_multiplier=self.noise_multiplier,
            sampling_rate=self.sampling_rate,
            steps=self.steps,
        )

    def spent(self, delta: float) -> PrivacySpec:
        return self.report(delta).spec


@dataclass(frozen=True)
class PrivacyReport:
    """Guarantee of one DP-SGD trained component and the accounting inputs."""

    epsilon: float
    delta: float
    optimal_alpha: float | None
    noise_multiplier: float
    sampling_rate: float
    steps: int

    @property
    def spec(self) -> PrivacySpec:
        return PrivacySpec(self.epsilon, self.delta)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "optimal_alpha": self.optimal_alpha,
            "noise_multiplier": self.noise_multiplier,
            "sampling_rate": self.sampling_rate,
            "steps": self.steps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PrivacyReport":
        alpha = data.get("optimal_alpha")
        return cls(
            epsilon=float(data["epsilon"]),
            delta=float(data["delta"]),
            optimal_alpha=None if alpha is None else float(alpha),
            noise_multiplier=float(data["noise_multiplier"]),
            sampling_rate=float(data["sampling_rate"]),
            steps=int(data["steps"]),
        )


def resolve_noise(noise_multiplier: float | None, target: PrivacySpec, q: float, steps: int) -> float:
    """
    Noise multiplier for one component: calibrated when unset, else checked.

    Raises:
        InfeasibleTargetError: an explicit multiplier misses the target
    """
    if noise_multiplier is None:
        return calibrate_noise(target, q, steps).noise_multiplier

    validate_target(target)
    achieved = math.inf if noise_multiplier == 0 else dp_epsilon(q, noise_multiplier, steps, target.delta)[0]
    if achieved > target.epsilon:
        raise InfeasibleTargetError(
            f"infeasible target: Φ={noise_multiplier} gives ε={achieved:.4f} over {steps} steps, "
            f"above the target ε={target.epsilon}"
        )
    return noise_multiplier
