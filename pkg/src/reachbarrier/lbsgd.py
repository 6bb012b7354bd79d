"""Log-barrier stochastic gradient ascent with confidence-bound step sizes."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .augment import AugmentedEnv, rollout_batch
from .estimators import (
    ConcentrationWidths,
    SmoothnessConstants,
    barrier_gradient,
    concentration_widths,
    estimate_constraint_gradient,
    estimate_constraint_value,
    estimate_reward_gradient,
    min_batch_size,
    smoothness_constants,
)
from .mdp import counter_rng

EXIT_BREAK = "break"
EXIT_ITERATION_CAP = "iteration_cap"
EXIT_INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class BarrierConfig:
    """Hyperparameters of the barrier ascent.

    `mfcq_p`, `mfcq_ell` and `slater_margin` are optional diagnostics inputs;
    they never gate execution, they only feed the reported theorem constants.
    """

    eta: float
    delta: float
    beta: float
    batch_size: int
    max_iterations: int
    mfcq_p: float | None = None
    mfcq_ell: float | None = None
    slater_margin: float | None = None

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.batch_size < min_batch_size(self.beta):
            raise ValueError(
                f"batch size {self.batch_size} is below the minimum {min_batch_size(self.beta)}"
            )
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


def suggested_batch_size(eta: float, beta: float, scale: float = 1.0, cap: int | None = None) -> int:
    """Batch size of order eta^-4 * ln(1/beta); the leading constant is a knob."""
    n = math.ceil(scale * eta**-4 * math.log(1.0 / beta))
    n = max(n, min_batch_size(beta))
    if cap is not None:
        n = min(n, cap)
    return n


def confidence_bounds(
    vc_hat: float,
    grad_c_hat: np.ndarray,
    barrier_grad_hat: np.ndarray,
    widths: ConcentrationWidths,
    beta: float,
    delta: float,
) -> tuple[float, float]:
    """Lower bound on the constraint slack, upper bound on its directional gradient.

    With a zero barrier gradient the direction is undefined; the inner
    product is taken as 0 (the ascent breaks before stepping in that case)
    and only the width term remains.
    """
    alpha_lower = vc_hat - delta - widths.sigma_c0 * math.sqrt(math.log(2.0 / beta))
    norm = float(np.linalg.norm(barrier_grad_hat))
    inner = 0.0 if norm == 0.0 else float(np.dot(grad_c_hat, barrier_grad_hat)) / norm
    beta_upper = abs(inner) + widths.sigma_c1 * math.sqrt(math.log(math.exp(0.25) / beta))
    return alpha_lower, beta_upper


def local_smoothness_estimate(
    alpha_lower: float, beta_upper: float, consts: SmoothnessConstants, eta: float
) -> float:
    """Estimate of the barrier's local smoothness constant near the iterate."""
    if alpha_lower <= 0:
        raise ValueError("infeasible iterate: the constraint lower bound is not positive")
    return consts.m_r + 10.0 * consts.m_c * eta / alpha_lower + 8.0 * eta * beta_upper**2 / alpha_lower**2


def step_size(
    m_hat: float,
    alpha_lower: float,
    beta_upper: float,
    consts: SmoothnessConstants,
    grad_norm: float,
) -> float:
    """Step length: inverse smoothness, capped by the valid-region radius."""
    if alpha_lower <= 0:
        raise ValueError("infeasible iterate: the constraint lower bound is not positive")
    if grad_norm <= 0:
        raise ValueError("step size undefined for a zero gradient")
    radius = alpha_lower / (math.sqrt(consts.m_c * alpha_lower) + 2.0 * abs(beta_upper))
    return min(1.0 / m_hat, radius / grad_norm)


def convergence_constants(
    consts: SmoothnessConstants,
    ell: float,
    eta: float,
    m_g: float,
    horizon: int,
    p: float | None = None,
    mu_f: float | None = None,
    nu_s: float | None = None,
) -> dict:
    """Constants of the convergence statement, for reporting only.

    `c` scales the guaranteed boundary margin (c * eta); the eta upper bound
    is returned when every ingredient it needs is supplied.
    """
    c = ell / (24.0 * consts.l_c)
    denom_choice = max(
        4.0 + 5.0 * consts.m_r * c / consts.l_r**2,
        1.0 + math.sqrt(consts.m_r * c * eta / (4.0 * consts.l_r**2)),
    )
    big_c = c / (2.0 * consts.l_r**2 * (1.0 + 1.0 / c) * denom_choice)
    out = {
        "c": c,
        "C": big_c,
        "margin_target": c * eta,
    }
    if mu_f is not None and mu_f > 0:
        caps = [math.sqrt(8.0 * math.sqrt(horizon) * m_g / (big_c * mu_f))]
        if p is not None:
            caps.append(p)
        if nu_s is not None:
            caps.append(nu_s)
        out["eta_bound"] = min(caps)
    return out


@dataclass(frozen=True)
class IterateRecord:
    """Per-iteration log of the quantities that drive and audit the ascent."""

    iteration: int
    vc_hat: float
    alpha_lower: float
    beta_upper: float | None = None
    m_hat: float | None = None
    gamma: float | None = None
    grad_norm: float | None = None
    step_taken: bool = False
    terminated: str | None = None
    vr_exact: float | None = None
    vc_exact: float | None = None
    wall_ms: float | None = None


@dataclass(frozen=True)
class RunResult:
    """Outcome of one ascent: final parameters, logs and iterate history."""

    theta_out: np.ndarray
    records: list
    exit_reason: str
    theta_history: np.ndarray
    break_iteration: int | None = None

    @property
    def num_iterations(self) -> int:
        return len(self.records)


def lbsgd_run(
    env: AugmentedEnv,
    policy,
    theta0: np.ndarray,
    config: BarrierConfig,
    seed: int,
    audit=None,
    theta_out: str = "break",
    record_timing: bool = False,
) -> RunResult:
    """Run the barrier ascent from theta0 with per-iteration counter streams.

    Each iteration samples one batch, estimates the constraint value and both
    gradients, forms the barrier gradient and either stops (estimated gradient
    norm at most eta/2, or non-positive feasibility lower bound) or takes the
    confidence-bounded step. With theta_out="final" the gradient-norm rule
    only marks `break_iteration` and the loop always runs to the iteration
    cap. `audit`, when given, maps parameters to exact (reward, constraint)
    values for logging.
    """
    if theta_out not in ("break", "final"):
        raise ValueError("theta_out must be 'break' or 'final'")
    consts = smoothness_constants(policy.score_bounds(), env.horizon)
    widths = concentration_widths(config.batch_size, config.beta, consts)
    theta = np.array(theta0, dtype=np.float64).reshape(policy.dim)
    history = [theta.copy()]
    records: list[IterateRecord] = []
    exit_reason = EXIT_ITERATION_CAP
    break_iteration = None
    for i in range(config.max_iterations):
        started = time.perf_counter()
        current = policy.with_theta(theta)
        batch = rollout_batch(env, current, config.batch_size, counter_rng(seed, i))
        vc_hat = estimate_constraint_value(batch)
        exact = audit(theta) if audit is not None else (None, None)
        record = IterateRecord(
            iteration=i,
            vc_hat=vc_hat,
            alpha_lower=vc_hat - config.delta - widths.sigma_c0 * math.sqrt(math.log(2.0 / config.beta)),
            vr_exact=exact[0],
            vc_exact=exact[1],
        )
        if record.alpha_lower <= 0:
            records.append(replace(record, terminated=EXIT_INFEASIBLE))
            exit_reason = EXIT_INFEASIBLE
            break
        grad_r = estimate_reward_gradient(batch, current)
        grad_c = estimate_constraint_gradient(batch, current)
        grad_b = barrier_gradient(grad_r, grad_c, vc_hat, config.eta, config.delta)
        grad_norm = float(np.linalg.norm(grad_b))
        alpha_lower, beta_upper = confidence_bounds(
            vc_hat, grad_c, grad_b, widths, config.beta, config.delta
        )
        m_hat = local_smoothness_estimate(alpha_lower, beta_upper, consts, config.eta)
        record = replace(record, beta_upper=beta_upper, m_hat=m_hat, grad_norm=grad_norm)
        if grad_norm <= config.eta / 2.0:
            if break_iteration is None:
                break_iteration = i
            if theta_out == "break":
                elapsed = (time.perf_counter() - started) * 1e3 if record_timing else None
                records.append(replace(record, terminated=EXIT_BREAK, wall_ms=elapsed))
                exit_reason = EXIT_BREAK
                break
            if grad_norm == 0.0:
                elapsed = (time.perf_counter() - started) * 1e3 if record_timing else None
                records.append(replace(record, wall_ms=elapsed))
                continue
        gamma = step_size(m_hat, alpha_lower, beta_upper, consts, grad_norm)
        theta = theta + gamma * grad_b
        history.append(theta.copy())
        elapsed = (time.perf_counter() - started) * 1e3 if record_timing else None
        records.append(replace(record, gamma=gamma, step_taken=True, wall_ms=elapsed))
    return RunResult(
        theta_out=history[-1].copy(),
        records=records,
        exit_reason=exit_reason,
        theta_history=np.array(history),
        break_iteration=break_iteration,
    )
