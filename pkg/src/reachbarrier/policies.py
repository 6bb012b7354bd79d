"""Per-timestep parameterized policies with score functions and their bounds."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mdp import categorical


@dataclass(frozen=True)
class ScoreBounds:
    """Uniform bounds on the log-policy gradient norm and Hessian norm."""

    m_g: float
    m_h: float

    def __post_init__(self):
        if self.m_g < 0 or self.m_h < 0:
            raise ValueError("score bounds must be nonnegative")


class TabularSoftmaxPolicy:
    """Softmax policy with one logit per (timestep, state, action).

    Parameters are stored as one flat vector; block t covers the logits of
    timestep t. States are plain integer ids, so the same class serves both
    base and augmented state spaces.
    """

    kind = "tabular_softmax"

    def __init__(self, horizon: int, num_states: int, num_actions: int, theta=None):
        self.horizon = int(horizon)
        self.num_states = int(num_states)
        self.num_actions = int(num_actions)
        self.block_dim = self.num_states * self.num_actions
        self.dim = self.horizon * self.block_dim
        if theta is None:
            theta = np.zeros(self.dim)
        theta = np.array(theta, dtype=np.float64).reshape(self.dim)
        theta.setflags(write=False)
        self.theta = theta

    def with_theta(self, theta) -> "TabularSoftmaxPolicy":
        return TabularSoftmaxPolicy(self.horizon, self.num_states, self.num_actions, theta)

    def block_slice(self, t: int) -> slice:
        return slice(t * self.block_dim, (t + 1) * self.block_dim)

    def _logits(self, t: int) -> np.ndarray:
        return self.theta[self.block_slice(t)].reshape(self.num_states, self.num_actions)

    def probability_table(self, t: int) -> np.ndarray:
        z = self._logits(t)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def tables(self) -> np.ndarray:
        return np.stack([self.probability_table(t) for t in range(self.horizon)])

    def action_probabilities(self, t: int, state: int) -> np.ndarray:
        return self.probability_table(t)[state]

    def sample_action(self, t: int, state: int, rng: np.random.Generator) -> int:
        cdf = np.cumsum(self.action_probabilities(t, state))
        return categorical(cdf, rng.random())

    def log_prob_grad(self, t: int, state: int, action: int) -> np.ndarray:
        """Gradient of log pi_t(action | state) with respect to the full theta."""
        grad = np.zeros(self.dim)
        block = grad[self.block_slice(t)].reshape(self.num_states, self.num_actions)
        block[state] = -self.action_probabilities(t, state)
        block[state, action] += 1.0
        return grad

    def block_score(self, t: int, state: int, action: int) -> np.ndarray:
        """Gradient of log pi_t(action | state) within the block-t coordinates."""
        return self.log_prob_grad(t, state, action)[self.block_slice(t)]

    def score_into(self, t: int, states, actions, weights, out: np.ndarray) -> None:
        """Accumulate sum_i weights[i] * grad log pi_t(actions[i] | states[i]) into out."""
        states = np.asarray(states, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        block = out[self.block_slice(t)].reshape(self.num_states, self.num_actions)
        idx = states * self.num_actions + actions
        block.ravel()[:] += np.bincount(idx, weights=weights, minlength=self.block_dim)
        per_state = np.bincount(states, weights=weights, minlength=self.num_states)
        block -= per_state[:, None] * self.probability_table(t)

    def score_bounds(self) -> ScoreBounds:
        # ||e_a - pi|| <= sqrt(2) on the simplex; diag(pi) - pi pi^T has norm <= 1
        return ScoreBounds(m_g=math.sqrt(2.0), m_h=1.0)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "horizon": self.horizon,
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "block_shape": [self.num_states, self.num_actions],
            "theta": self.theta.tolist(),
        }


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


class TruncatedGaussianPolicy:
    """Gaussian with a state-dependent mean, truncated to a fixed interval.

    One mean parameter per (timestep, state); the standard deviation and the
    support [lo, hi] are fixed. Used for continuous action sets; only the
    parameterization ships, no continuous environment does.
    """

    kind = "truncated_gaussian"

    def __init__(self, horizon: int, num_states: int, sigma: float, support, theta=None):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        lo, hi = float(support[0]), float(support[1])
        if not hi > lo:
            raise ValueError("support must be a nondegenerate interval")
        self.horizon = int(horizon)
        self.num_states = int(num_states)
        self.sigma = float(sigma)
        self.support = (lo, hi)
        self.block_dim = self.num_states
        self.dim = self.horizon * self.num_states
        if theta is None:
            theta = np.full(self.dim, 0.5 * (lo + hi))
        theta = np.array(theta, dtype=np.float64).reshape(self.dim)
        theta.setflags(write=False)
        self.theta = theta

    def with_theta(self, theta) -> "TruncatedGaussianPolicy":
        return TruncatedGaussianPolicy(self.horizon, self.num_states, self.sigma, self.support, theta)

    def block_slice(self, t: int) -> slice:
        return slice(t * self.num_states, (t + 1) * self.num_states)

    def mean(self, t: int, state: int) -> float:
        return float(self.theta[t * self.num_states + state])

    def _edges(self, mean: float) -> tuple[float, float, float]:
        lo, hi = self.support
        alpha = (lo - mean) / self.sigma
        beta = (hi - mean) / self.sigma
        return alpha, beta, _normal_cdf(beta) - _normal_cdf(alpha)

    def action_density(self, t: int, state: int, action) -> np.ndarray:
        """Density of the action distribution, zero outside the support."""
        mean = self.mean(t, state)
        _, _, z = self._edges(mean)
        action = np.asarray(action, dtype=np.float64)
        lo, hi = self.support
        core = np.exp(-0.5 * ((action - mean) / self.sigma) ** 2) / (
            self.sigma * math.sqrt(2.0 * math.pi)
        )
        inside = (action >= lo) & (action <= hi)
        return np.where(inside, core / z, 0.0)

    def log_density(self, t: int, state: int, action: float) -> float:
        d = float(self.action_density(t, state, action))
        if d <= 0.0:
            raise ValueError("action outside the support")
        return math.log(d)

    def score(self, t: int, state: int, action: float) -> float:
        """Derivative of the log density with respect to the mean parameter."""
        mean = self.mean(t, state)
        alpha, beta, z = self._edges(mean)
        return (action - mean) / self.sigma**2 + (_phi(beta) - _phi(alpha)) / (self.sigma * z)

    def log_prob_grad(self, t: int, state: int, action: float) -> np.ndarray:
        grad = np.zeros(self.dim)
        grad[t * self.num_states + state] = self.score(t, state, action)
        return grad

    def sample_action(self, t: int, state: int, rng: np.random.Generator) -> float:
        """Draw by rejection from the untruncated Gaussian; deterministic per stream."""
        mean = self.mean(t, state)
        lo, hi = self.support
        for _ in range(10000):
            x = mean + self.sigma * rng.standard_normal()
            if lo <= x <= hi:
                return float(x)
        raise RuntimeError("rejection sampling failed; support mass is too small")

    def score_bounds(self) -> ScoreBounds:
        lo, hi = self.support
        width = hi - lo
        # score = (a - truncated mean)/sigma^2 with both points in the support;
        # |d score / d mean| = Var_trunc / sigma^4 and Var_trunc <= min(sigma^2, width^2/4)
        return ScoreBounds(
            m_g=width / self.sigma**2,
            m_h=min(self.sigma**2, width**2 / 4.0) / self.sigma**4,
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "horizon": self.horizon,
            "num_states": self.num_states,
            "sigma": self.sigma,
            "support": list(self.support),
            "block_shape": [self.num_states],
            "theta": self.theta.tolist(),
        }


def policy_from_dict(payload: dict):
    kind = payload["kind"]
    if kind == TabularSoftmaxPolicy.kind:
        return TabularSoftmaxPolicy(
            payload["horizon"], payload["num_states"], payload["num_actions"], payload["theta"]
        )
    if kind == TruncatedGaussianPolicy.kind:
        return TruncatedGaussianPolicy(
            payload["horizon"],
            payload["num_states"],
            payload["sigma"],
            payload["support"],
            payload["theta"],
        )
    raise ValueError(f"unknown policy kind {kind!r}")


def save_policy(path, policy) -> None:
    Path(path).write_text(json.dumps(policy.to_dict()), encoding="utf-8")


def load_policy(path):
    return policy_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
