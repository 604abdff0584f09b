"""Differentially private Adam and the Rényi-DP accountant used to calibrate it.

The optimizer clips every per-example gradient to a global L2 norm ``C``,
sums, adds N(0, (sigma*C)^2) to every coordinate and divides by the batch
length before handing the result to Adam.

The accountant bounds the Rényi divergence of the Poisson-subsampled Gaussian
mechanism at integer orders by the binomial series

    RDP(a) = 1/(a-1) * log sum_k C(a,k) (1-q)^(a-k) q^k exp(k(k-1)/(2 sigma^2))

composes linearly over steps and converts to (epsilon, delta) with
``eps = min_a T*RDP(a) + log(1/delta)/(a-1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .nn import AdamState, Gradients, MLPParams, _adam_update, stack

DEFAULT_ORDERS = (
    (1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0, 3.5, 4.0, 4.5)
    + tuple(float(a) for a in range(5, 65))
    + (128.0, 256.0)
)
SIGMA_BRACKET = (0.3, 500.0)
BISECTION_STEPS = 60


class InfinitePrivacyLoss(ValueError):
    """Subsampled mechanism with zero noise: no finite RDP bound."""


class CalibrationError(RuntimeError):
    def __init__(self, message: str, achieved_epsilon: float):
        super().__init__(message)
        self.achieved_epsilon = achieved_epsilon


@dataclass(frozen=True)
class PrivacySpec:
    epsilon_target: float
    delta_target: float
    clip_norm: float = 1.0
    noise_multiplier: float = 0.0
    sampling_rate: float = 1.0
    steps: int = 1
    achieved_epsilon: float | None = None

    def __post_init__(self):
        if not self.epsilon_target > 0:
            raise ValueError("epsilon_target must be > 0")
        if not 0 < self.delta_target < 1:
            raise ValueError("delta_target must be in (0, 1)")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be > 0")
        if self.noise_multiplier < 0:
            raise ValueError("noise_multiplier must be >= 0")
        if not 0 < self.sampling_rate <= 1:
            raise ValueError("sampling_rate must be in (0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @classmethod
    def for_training(
        cls,
        epsilon: float,
        delta: float,
        train_rows: int,
        minibatch_size: int = 20,
        epochs: int = 20,
        clip_norm: float = 1.0,
    ) -> "PrivacySpec":
        """Calibrate the noise multiplier for a training run of the given shape."""
        q = minibatch_size / train_rows
        steps = epochs * math.ceil(train_rows / minibatch_size)
        sigma, achieved = calibrate_noise_multiplier(epsilon, delta, q, steps)
        return cls(epsilon, delta, clip_norm, sigma, q, steps, achieved)


@dataclass(frozen=True)
class RDPProfile:
    orders: tuple[float, ...]
    rdp_values: tuple[float, ...]

    def __post_init__(self):
        if len(self.orders) != len(self.rdp_values):
            raise ValueError("orders and rdp_values differ in length")


# --- clipped, noised aggregation -------------------------------------------


def _clip_factors(norms: np.ndarray, clip_norm: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.minimum(1.0, clip_norm / norms)


def clip_gradient(grad: Gradients, clip_norm: float) -> Gradients:
    """Scale ``grad`` by ``min(1, C / ||grad||)`` (global norm over all tensors)."""
    if not clip_norm > 0:
        raise ValueError("clip_norm must be > 0")
    factor = _clip_factors(np.array([grad.global_norm()]), clip_norm)[0]
    return Gradients(grad.flat * factor, grad.input_dim)


def _noisy_mean(G: np.ndarray, clip_norm: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", G, G))
    total = (G * _clip_factors(norms, clip_norm)[:, None]).sum(axis=0)
    if sigma > 0:
        total += rng.normal(0.0, sigma * clip_norm, size=total.shape)
    return total / G.shape[0]


def noisy_aggregate(
    per_example_grads: Sequence[Gradients] | np.ndarray,
    clip_norm: float,
    noise_multiplier: float,
    noise_seed=None,
    input_dim: int | None = None,
) -> Gradients:
    """Clip each gradient, sum, add Gaussian noise of SD ``sigma*C``, divide by the count.

    ``per_example_grads`` is a list of :class:`Gradients` or a
    ``(batch, n_params)`` matrix (then ``input_dim`` is required).
    ``noise_seed`` may be an int or a ``numpy.random.Generator``.
    """
    if isinstance(per_example_grads, np.ndarray):
        G = per_example_grads
        if input_dim is None:
            raise ValueError("input_dim is required for a gradient matrix")
    else:
        if len(per_example_grads) == 0:
            raise ValueError("no gradients to aggregate")
        G = stack(per_example_grads)
        input_dim = per_example_grads[0].input_dim
    if G.shape[0] == 0:
        raise ValueError("no gradients to aggregate")
    rng = noise_seed if isinstance(noise_seed, np.random.Generator) else np.random.default_rng(noise_seed)
    return Gradients(_noisy_mean(G, clip_norm, noise_multiplier, rng), input_dim)


def dp_adam_step(
    state: AdamState,
    params: MLPParams,
    per_example_grads,
    spec: PrivacySpec,
    noise_seed=None,
) -> tuple[MLPParams, AdamState]:
    agg = noisy_aggregate(
        per_example_grads, spec.clip_norm, spec.noise_multiplier, noise_seed, params.input_dim
    )
    new_params, new_state = params.copy(), state.copy()
    _adam_update(new_params.flat, new_state, agg.flat)
    return new_params, new_state


# --- Rényi-DP accounting ----------------------------------------------------


def _log_binom(n: int, k: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def _rdp_integer(q: float, sigma: float, alpha: int) -> float:
    if q == 1.0:
        return alpha / (2 * sigma**2)
    # The binomial weights sum to 1, so the series equals 1 + sum_k w_k*expm1(c_k),
    # where only k >= 2 contribute. Working with that excess keeps full relative
    # precision when the divergence is tiny (small q, large sigma).
    k = np.arange(2, alpha + 1, dtype=np.float64)
    c = k * (k - 1) / (2 * sigma**2)
    log_expm1 = np.where(c > 1.0, c + np.log(-np.expm1(-np.maximum(c, 1.0))), np.log(np.expm1(np.minimum(c, 1.0))))
    log_excess = logsumexp(
        _log_binom(alpha, k) + (alpha - k) * math.log1p(-q) + k * math.log(q) + log_expm1
    )
    return float(np.logaddexp(0.0, log_excess)) / (alpha - 1)


def rdp_subsampled_gaussian(q: float, sigma: float, orders: Sequence[float] = DEFAULT_ORDERS) -> RDPProfile:
    """Per-step RDP of the subsampled Gaussian mechanism at each order.

    Non-integer orders use the value at the next integer, which upper-bounds
    it because RDP is non-decreasing in the order.
    """
    if not 0 < q <= 1:
        raise ValueError("sampling rate must be in (0, 1]")
    if sigma == 0:
        raise InfinitePrivacyLoss("noise multiplier 0 gives unbounded privacy loss")
    if sigma < 0:
        raise ValueError("noise multiplier must be >= 0")
    orders = tuple(float(a) for a in orders)
    if any(a <= 1 for a in orders):
        raise ValueError("all orders must be > 1")
    values = []
    for a in orders:
        if q == 1.0:
            values.append(a / (2 * sigma**2))
        else:
            values.append(max(_rdp_integer(q, sigma, math.ceil(a)), 0.0))
    return RDPProfile(orders, tuple(values))


def rdp_to_epsilon(profile: RDPProfile, steps: int, delta: float) -> tuple[float, float]:
    """Convert per-step RDP composed over ``steps`` to ``(epsilon, best_order)``."""
    if not profile.orders:
        raise ValueError("empty RDP profile")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    orders = np.asarray(profile.orders)
    eps = steps * np.asarray(profile.rdp_values) + math.log(1 / delta) / (orders - 1)
    i = int(np.argmin(eps))
    return float(eps[i]), float(orders[i])


def compute_epsilon(
    q: float, sigma: float, steps: int, delta: float, orders: Sequence[float] = DEFAULT_ORDERS
) -> float:
    return rdp_to_epsilon(rdp_subsampled_gaussian(q, sigma, orders), steps, delta)[0]


def calibrate_noise_multiplier(
    epsilon: float,
    delta: float,
    q: float,
    steps: int,
    orders: Sequence[float] = DEFAULT_ORDERS,
    bracket: tuple[float, float] = SIGMA_BRACKET,
    iterations: int = BISECTION_STEPS,
) -> tuple[float, float]:
    """Smallest noise multiplier in ``bracket`` meeting ``epsilon``; returns ``(sigma, achieved_eps)``."""
    if not epsilon > 0:
        raise ValueError("epsilon target must be > 0")
    lo, hi = bracket
    eps_hi = compute_epsilon(q, hi, steps, delta, orders)
    if eps_hi > epsilon:
        raise CalibrationError(
            f"epsilon={epsilon} unreachable: sigma={hi} still gives epsilon={eps_hi:.6g}", eps_hi
        )
    eps_lo = compute_epsilon(q, lo, steps, delta, orders)
    if eps_lo <= epsilon:
        return lo, eps_lo
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        eps_mid = compute_epsilon(q, mid, steps, delta, orders)
        if eps_mid <= epsilon:
            hi, eps_hi = mid, eps_mid
        else:
            lo = mid
    return hi, eps_hi


def with_noise(spec: PrivacySpec, noise_multiplier: float, clip_norm: float | None = None) -> PrivacySpec:
    """Copy of ``spec`` with a fixed noise multiplier (and optionally clip norm)."""
    return replace(
        spec,
        noise_multiplier=noise_multiplier,
        clip_norm=spec.clip_norm if clip_norm is None else clip_norm,
        achieved_epsilon=None,
    )
