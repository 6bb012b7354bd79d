"""Monte-Carlo estimators of the value, gradients and barrier gradient.

All estimators are the plain sample averages over a batch of on-policy
trajectories, with no baseline subtraction, so the concentration widths
below apply to them exactly as derived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .augment import RolloutBatch
from .policies import ScoreBounds


class BarrierDomainError(ValueError):
    """Raised when the estimated constraint value is not above the threshold."""


class InsufficientBatchError(ValueError):
    """Raised when the batch is too small for the gradient concentration bound."""


def _check_on_policy(batch: RolloutBatch, policy) -> None:
    if batch.policy_theta.shape != policy.theta.shape or not np.array_equal(
        batch.policy_theta, policy.theta
    ):
        raise ValueError("batch was not generated by this policy (off-policy estimate)")


def estimate_constraint_value(batch: RolloutBatch) -> float:
    """Sample mean of the terminal constraint indicator."""
    if batch.n < 1:
        raise ValueError("empty batch")
    return float(batch.constraints.mean())


def estimate_reward_gradient(batch: RolloutBatch, policy) -> np.ndarray:
    """Score-function estimator of the reward gradient with reward-to-go weights."""
    _check_on_policy(batch, policy)
    grad = np.zeros(policy.dim)
    # rtg[:, t] = sum_{m >= t} stage rewards + terminal reward
    rtg = np.cumsum(batch.rewards[:, ::-1], axis=1)[:, ::-1] + batch.terminal_rewards[:, None]
    ids = batch.aug_ids
    scale = 1.0 / batch.n
    for t in range(batch.horizon):
        policy.score_into(t, ids[:, t], batch.actions[:, t], rtg[:, t] * scale, grad)
    return grad


def estimate_constraint_gradient(batch: RolloutBatch, policy) -> np.ndarray:
    """Score-function estimator of the constraint gradient (terminal indicator weight)."""
    _check_on_policy(batch, policy)
    grad = np.zeros(policy.dim)
    ids = batch.aug_ids
    weights = batch.constraints / batch.n
    for t in range(batch.horizon):
        policy.score_into(t, ids[:, t], batch.actions[:, t], weights, grad)
    return grad


def barrier_gradient(
    grad_r: np.ndarray, grad_c: np.ndarray, vc_hat: float, eta: float, delta: float
) -> np.ndarray:
    """Gradient of the log-barrier surrogate from the channel estimates."""
    if vc_hat <= delta:
        raise BarrierDomainError(
            f"estimated constraint value {vc_hat} is not above the threshold {delta}"
        )
    return grad_r + eta * grad_c / (vc_hat - delta)


@dataclass(frozen=True)
class SmoothnessConstants:
    """Lipschitz and smoothness constants of the two value channels."""

    l_r: float
    l_c: float
    m_r: float
    m_c: float


def smoothness_constants(bounds: ScoreBounds, horizon: int) -> SmoothnessConstants:
    """Closed-form constants from the score bounds and the horizon."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    m_g, m_h = bounds.m_g, bounds.m_h
    return SmoothnessConstants(
        l_r=m_g * horizon**1.5,
        l_c=math.sqrt(horizon) * m_g,
        m_r=m_h * horizon + m_g**2 * horizon**2,
        m_c=m_h + m_g**2 * horizon,
    )


def min_batch_size(beta: float) -> int:
    """Smallest batch size for which the gradient tail bounds hold."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    return math.ceil(8.0 * math.log(math.exp(0.25) / beta))


@dataclass(frozen=True)
class ConcentrationWidths:
    """Scale factors of the sub-Gaussian tails of the three estimators."""

    sigma_c0: float
    sigma_r1: float
    sigma_c1: float
    min_n: int


def concentration_widths(n: int, beta: float, consts: SmoothnessConstants) -> ConcentrationWidths:
    """Widths at batch size n; requires n to meet the minimum for the tail bounds."""
    floor = min_batch_size(beta)
    if n < floor:
        raise InsufficientBatchError(f"batch size {n} is below the minimum {floor}")
    return ConcentrationWidths(
        sigma_c0=1.0 / math.sqrt(2.0 * n),
        sigma_r1=2.0 * math.sqrt(2.0) * consts.l_r / math.sqrt(n),
        sigma_c1=2.0 * math.sqrt(2.0) * consts.l_c / math.sqrt(n),
        min_n=floor,
    )
