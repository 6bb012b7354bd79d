"""Exact finite-horizon computations on explicit augmented MDPs.

Everything here runs full enumeration or dense dynamic programming, so it
is meant for desk-scale instances where exact values, gradients, optima
and diagnostics can certify the Monte-Carlo pipeline.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .augment import AugmentedFinite, build_augmented_finite
from .mdp import FiniteMdp, ReachAvoidSpec


class InfeasibleProblemError(ValueError):
    """Raised when no policy can meet the constraint threshold."""


def _as_tables(policy_or_tables, horizon: int) -> np.ndarray:
    if hasattr(policy_or_tables, "tables"):
        tables = policy_or_tables.tables()
    else:
        tables = np.asarray(policy_or_tables, dtype=np.float64)
    if tables.ndim != 3 or tables.shape[0] != horizon:
        raise ValueError(f"policy tables must have shape (H, S, A) with H={horizon}")
    return tables


@dataclass(frozen=True)
class ExactValues:
    """Backward-induction values for the reward and constraint channels.

    v_* have shape (H+1, S) with row H holding the terminal values; q_* have
    shape (H, S, A).
    """

    v_r: np.ndarray
    v_c: np.ndarray
    q_r: np.ndarray
    q_c: np.ndarray

    @property
    def adv_r(self) -> np.ndarray:
        return self.q_r - self.v_r[:-1][:, :, None]

    @property
    def adv_c(self) -> np.ndarray:
        return self.q_c - self.v_c[:-1][:, :, None]


def exact_policy_eval(aug: AugmentedFinite, policy, terminal_constraint=None) -> ExactValues:
    """Evaluate both channels of a Markov policy on the explicit augmented MDP."""
    m = aug.mdp
    tables = _as_tables(policy, m.horizon)
    if tables.shape[1:] != (m.num_states, m.num_actions):
        raise ValueError("policy tables do not match the augmented MDP dimensions")
    constraint = aug.terminal_constraint if terminal_constraint is None else terminal_constraint
    h, s, a = m.horizon, m.num_states, m.num_actions
    v_r = np.zeros((h + 1, s))
    v_c = np.zeros((h + 1, s))
    q_r = np.zeros((h, s, a))
    q_c = np.zeros((h, s, a))
    v_r[h] = m.terminal_reward
    v_c[h] = constraint
    for t in reversed(range(h)):
        q_r[t] = m.stage_rewards[t] + m.kernel @ v_r[t + 1]
        q_c[t] = m.kernel @ v_c[t + 1]
        v_r[t] = np.einsum("sa,sa->s", tables[t], q_r[t])
        v_c[t] = np.einsum("sa,sa->s", tables[t], q_c[t])
    return ExactValues(v_r=v_r, v_c=v_c, q_r=q_r, q_c=q_c)


def initial_values(aug: AugmentedFinite, policy, init_state: int = 0) -> tuple[float, float]:
    """(reward value, constraint value) at the augmented initial state."""
    values = exact_policy_eval(aug, policy)
    start = aug.initial_state(init_state)
    return float(values.v_r[0, start]), float(values.v_c[0, start])


def exact_policy_eval_batch(aug: AugmentedFinite, tables_batch, init_state: int = 0):
    """Initial-state values for a batch of policies, shape (B, H, S, A) -> (B,), (B,)."""
    m = aug.mdp
    tables = np.asarray(tables_batch, dtype=np.float64)
    if tables.ndim != 4 or tables.shape[1:] != (m.horizon, m.num_states, m.num_actions):
        raise ValueError("tables batch must have shape (B, H, S, A)")
    v_r = np.broadcast_to(m.terminal_reward, (tables.shape[0], m.num_states)).copy()
    v_c = np.broadcast_to(aug.terminal_constraint, v_r.shape).copy()
    for t in reversed(range(m.horizon)):
        q_r = m.stage_rewards[t][None] + np.einsum("saz,bz->bsa", m.kernel, v_r)
        q_c = np.einsum("saz,bz->bsa", m.kernel, v_c)
        v_r = np.einsum("bsa,bsa->bs", tables[:, t], q_r)
        v_c = np.einsum("bsa,bsa->bs", tables[:, t], q_c)
    start = aug.initial_state(init_state)
    return v_r[:, start].copy(), v_c[:, start].copy()


def exact_occupancy(aug: AugmentedFinite, policy, init_state: int = 0) -> np.ndarray:
    """State-action occupancy d_t(s, a), shape (H, S, A), by forward recursion."""
    m = aug.mdp
    tables = _as_tables(policy, m.horizon)
    occupancy = np.zeros((m.horizon, m.num_states, m.num_actions))
    mu = np.zeros(m.num_states)
    mu[aug.initial_state(init_state)] = 1.0
    for t in range(m.horizon):
        occupancy[t] = mu[:, None] * tables[t]
        mu = np.einsum("sa,saz->z", occupancy[t], m.kernel)
    return occupancy


def exact_policy_gradient(aug: AugmentedFinite, policy, init_state: int = 0):
    """Exact gradients of both channels with respect to the policy parameters.

    Policy-gradient identity: sum_t E_{d_t} [grad log pi_t(a|s) * Q_t(s, a)].
    """
    values = exact_policy_eval(aug, policy)
    occupancy = exact_occupancy(aug, policy, init_state)
    m = aug.mdp
    states = np.repeat(np.arange(m.num_states), m.num_actions)
    actions = np.tile(np.arange(m.num_actions), m.num_states)
    grad_r = np.zeros(policy.dim)
    grad_c = np.zeros(policy.dim)
    for t in range(m.horizon):
        policy.score_into(t, states, actions, (occupancy[t] * values.q_r[t]).ravel(), grad_r)
        policy.score_into(t, states, actions, (occupancy[t] * values.q_c[t]).ravel(), grad_c)
    return grad_r, grad_c


def max_constraint_value(aug: AugmentedFinite, init_state: int = 0) -> float:
    """Largest achievable constraint value, by backward induction on that channel."""
    m = aug.mdp
    w = aug.terminal_constraint.astype(np.float64)
    for _ in reversed(range(m.horizon)):
        w = (m.kernel @ w).max(axis=1)
    return float(w[aug.initial_state(init_state)])


@dataclass(frozen=True)
class SlaterCheck:
    """Best reachable constraint value and the margin left above the threshold."""

    max_value: float
    margin: float
    satisfied: bool


def slater_check(aug: AugmentedFinite, delta: float, init_state: int = 0) -> SlaterCheck:
    best = max_constraint_value(aug, init_state)
    return SlaterCheck(max_value=best, margin=best - delta, satisfied=best > delta)


def _lagrangian_greedy(aug: AugmentedFinite, lam: float) -> np.ndarray:
    """Deterministic optimal tables for reward + lam * terminal constraint.

    Ties break toward the lowest action index, making the dual sweep
    reproducible.
    """
    m = aug.mdp
    w = m.terminal_reward + lam * aug.terminal_constraint
    tables = np.zeros((m.horizon, m.num_states, m.num_actions))
    for t in reversed(range(m.horizon)):
        q = m.stage_rewards[t] + m.kernel @ w
        best = np.argmax(q, axis=1)
        tables[t] = 0.0
        tables[t][np.arange(m.num_states), best] = 1.0
        w = q[np.arange(m.num_states), best]
    return tables


@dataclass(frozen=True)
class CmdpSolution:
    """Optimum of the constrained problem as a mixture of deterministic policies.

    `policies` holds one or two deterministic Markov tables over the
    augmented space and `weights` the mixing probabilities (the whole episode
    uses a single component drawn up front).
    """

    value: float
    policies: list
    weights: list
    dual: float
    achieved_constraint: float

    def occupancy(self, aug: AugmentedFinite, init_state: int = 0) -> np.ndarray:
        total = np.zeros_like(exact_occupancy(aug, self.policies[0], init_state))
        for w, tables in zip(self.weights, self.policies):
            total += w * exact_occupancy(aug, tables, init_state)
        return total


def solve_cmdp(
    aug: AugmentedFinite,
    delta: float,
    init_state: int = 0,
    bisection_iters: int = 60,
) -> CmdpSolution:
    """Solve the single-constraint problem by dual bisection and two-policy mixing.

    The dual weight lam is bisected until the greedy policy flips from
    infeasible to feasible; the two bracket policies are then mixed so the
    constraint binds exactly. When the unconstrained optimum is already
    feasible no mixing is needed.
    """
    check = slater_check(aug, delta, init_state)
    if check.max_value < delta:
        raise InfeasibleProblemError(
            f"no policy reaches constraint value {delta}; maximum is {check.max_value}"
        )
    lo_tables = _lagrangian_greedy(aug, 0.0)
    lo_r, lo_c = initial_values(aug, lo_tables, init_state)
    if lo_c >= delta:
        return CmdpSolution(
            value=lo_r,
            policies=[lo_tables],
            weights=[1.0],
            dual=0.0,
            achieved_constraint=lo_c,
        )
    lam_lo, lam_hi = 0.0, aug.mdp.horizon + 1.0
    hi_tables = _lagrangian_greedy(aug, lam_hi)
    hi_r, hi_c = initial_values(aug, hi_tables, init_state)
    while hi_c < delta:
        lam_hi *= 2.0
        if lam_hi > 2.0**40:
            raise RuntimeError("dual weight grew unboundedly without reaching feasibility")
        hi_tables = _lagrangian_greedy(aug, lam_hi)
        hi_r, hi_c = initial_values(aug, hi_tables, init_state)
    for _ in range(bisection_iters):
        mid = 0.5 * (lam_lo + lam_hi)
        mid_tables = _lagrangian_greedy(aug, mid)
        mid_r, mid_c = initial_values(aug, mid_tables, init_state)
        if mid_c >= delta:
            lam_hi, hi_tables, hi_r, hi_c = mid, mid_tables, mid_r, mid_c
        else:
            lam_lo, lo_tables, lo_r, lo_c = mid, mid_tables, mid_r, mid_c
    weight_hi = (delta - lo_c) / (hi_c - lo_c)
    return CmdpSolution(
        value=float((1.0 - weight_hi) * lo_r + weight_hi * hi_r),
        policies=[lo_tables, hi_tables],
        weights=[float(1.0 - weight_hi), float(weight_hi)],
        dual=0.5 * (lam_lo + lam_hi),
        achieved_constraint=float((1.0 - weight_hi) * lo_c + weight_hi * hi_c),
    )


def _eigh_pinv(matrix: np.ndarray, cutoff: float = 1e-10) -> np.ndarray:
    """Pseudo-inverse of a symmetric PSD matrix via eigendecomposition."""
    w, u = np.linalg.eigh(matrix)
    inv = np.where(w > cutoff, 1.0 / np.where(w > cutoff, w, 1.0), 0.0)
    return (u * inv) @ u.T


@dataclass(frozen=True)
class FisherReport:
    """Per-timestep score covariance matrices and their spectral summary."""

    matrices: list
    min_nonzero_eigenvalues: list
    mu_f: float | None
    eigen_cutoff: float


def _score_matrix(policy, t: int) -> np.ndarray:
    """Rows are block-t score vectors, one per flattened (state, action) pair."""
    m_states = policy.num_states
    m_actions = policy.num_actions
    rows = np.zeros((m_states * m_actions, policy.block_dim))
    for s in range(m_states):
        for a in range(m_actions):
            rows[s * m_actions + a] = policy.block_score(t, s, a)
    return rows


def fisher_report(
    aug: AugmentedFinite, policy, init_state: int = 0, eigen_cutoff: float = 1e-10
) -> FisherReport:
    """Occupancy-weighted score outer products per timestep, with eigenvalues."""
    occupancy = exact_occupancy(aug, policy, init_state)
    matrices = []
    minima = []
    for t in range(aug.mdp.horizon):
        scores = _score_matrix(policy, t)
        weights = occupancy[t].ravel()
        fisher = (scores * weights[:, None]).T @ scores
        fisher = 0.5 * (fisher + fisher.T)
        matrices.append(fisher)
        eigs = np.linalg.eigvalsh(fisher)
        above = eigs[eigs > eigen_cutoff]
        minima.append(float(above.min()) if above.size else None)
    present = [m for m in minima if m is not None]
    return FisherReport(
        matrices=matrices,
        min_nonzero_eigenvalues=minima,
        mu_f=min(present) if present else None,
        eigen_cutoff=eigen_cutoff,
    )


@dataclass(frozen=True)
class TransferErrorReport:
    """Residuals of regressing advantages on score directions.

    residuals[k][t] is the expected squared error under the reference
    occupancy, for channel k in ('r', 'c'); eps_bias is their maximum.
    """

    residuals: dict
    coefficients: dict
    eps_bias: float


def transfer_error_report(
    aug: AugmentedFinite,
    policy,
    reference_occupancy: np.ndarray,
    init_state: int = 0,
    eigen_cutoff: float = 1e-10,
) -> TransferErrorReport:
    """How well block-t scores can represent the advantages of `policy`.

    Coefficients solve the least-squares problem under the policy's own
    occupancy (via the Fisher pseudo-inverse); the residual is evaluated
    under `reference_occupancy`, normally that of an optimal policy.
    """
    values = exact_policy_eval(aug, policy)
    occupancy = exact_occupancy(aug, policy, init_state)
    reference = np.asarray(reference_occupancy, dtype=np.float64)
    residuals = {"r": [], "c": []}
    coefficients = {"r": [], "c": []}
    for t in range(aug.mdp.horizon):
        scores = _score_matrix(policy, t)
        weights = occupancy[t].ravel()
        fisher = (scores * weights[:, None]).T @ scores
        fisher = 0.5 * (fisher + fisher.T)
        pinv = _eigh_pinv(fisher, eigen_cutoff)
        for key, adv in (("r", values.adv_r[t]), ("c", values.adv_c[t])):
            target = adv.ravel()
            mu = pinv @ (scores.T @ (weights * target))
            err = target - scores @ mu
            residuals[key].append(float(reference[t].ravel() @ err**2))
            coefficients[key].append(mu)
    eps = max(max(residuals["r"]), max(residuals["c"]))
    return TransferErrorReport(residuals=residuals, coefficients=coefficients, eps_bias=eps)


def transfer_error_supremum(
    aug: AugmentedFinite,
    policy,
    reference_occupancy: np.ndarray,
    delta: float,
    rng: np.random.Generator,
    num_samples: int = 100,
    scale: float = 1.0,
    init_state: int = 0,
) -> float:
    """Estimate of the worst-case transfer error over feasible parameters.

    Samples Gaussian parameter vectors, keeps the feasible ones and returns
    the largest residual seen; an estimate, not a certified supremum.
    """
    worst = 0.0
    accepted = 0
    for _ in range(100 * num_samples):
        if accepted >= num_samples:
            break
        candidate = policy.with_theta(rng.normal(0.0, scale, policy.dim))
        _, vc = initial_values(aug, candidate, init_state)
        if vc < delta:
            continue
        report = transfer_error_report(aug, candidate, reference_occupancy, init_state)
        worst = max(worst, report.eps_bias)
        accepted += 1
    if accepted < num_samples:
        raise RuntimeError(f"only {accepted} feasible parameter samples found")
    return worst


def _reachable_per_step(aug: AugmentedFinite, init_state: int = 0) -> list:
    """Augmented states reachable at each t under at least one action sequence."""
    m = aug.mdp
    reach = [{aug.initial_state(init_state)}]
    support = [set(np.flatnonzero(m.kernel[s, a] > 0)) for s in range(m.num_states) for a in range(m.num_actions)]
    for _ in range(m.horizon):
        nxt = set()
        for s in reach[-1]:
            for a in range(m.num_actions):
                nxt |= support[s * m.num_actions + a]
        reach.append(nxt)
    return reach


def enumerate_deterministic_policies(aug: AugmentedFinite, init_state: int = 0, limit: int = 1 << 20):
    """All deterministic Markov policies on the reachable slices of the MDP.

    Returns (rewards, constraints, tables_batch). Unreachable slices are
    pinned to action 0 since they cannot affect values. Intended as an
    independent check of `solve_cmdp` on tiny instances.
    """
    m = aug.mdp
    reach = _reachable_per_step(aug, init_state)
    slices = [(t, s) for t in range(m.horizon) for s in sorted(reach[t])]
    total = m.num_actions ** len(slices)
    if total > limit:
        raise ValueError(f"{total} deterministic policies exceed the limit {limit}")
    base = np.zeros((m.horizon, m.num_states, m.num_actions))
    base[:, :, 0] = 1.0
    batch = np.repeat(base[None], total, axis=0)
    for i, combo in enumerate(itertools.product(range(m.num_actions), repeat=len(slices))):
        for (t, s), a in zip(slices, combo):
            batch[i, t, s, :] = 0.0
            batch[i, t, s, a] = 1.0
    rewards, constraints = exact_policy_eval_batch(aug, batch, init_state)
    return rewards, constraints, batch


def cmdp_value_by_enumeration(aug: AugmentedFinite, delta: float, init_state: int = 0, limit: int = 1 << 20) -> float:
    """Constrained optimum over mixtures of two deterministic policies.

    Brute-force counterpart of `solve_cmdp`: with a single constraint the
    optimum mixes at most two deterministic policies, so scanning all pairs
    gives the exact value.
    """
    rewards, constraints, _ = enumerate_deterministic_policies(aug, init_state, limit)
    feasible = constraints >= delta
    if not feasible.any():
        raise InfeasibleProblemError(f"no deterministic policy reaches {delta}")
    best = float(rewards[feasible].max())
    for i in np.flatnonzero(~feasible):
        for j in np.flatnonzero(feasible):
            w = (delta - constraints[i]) / (constraints[j] - constraints[i])
            value = (1.0 - w) * rewards[i] + w * rewards[j]
            best = max(best, float(value))
    return best


def _simplex_lattice(num_actions: int, resolution: int) -> np.ndarray:
    """All probability vectors with entries that are multiples of 1/resolution."""
    points = []
    for bars in itertools.combinations(range(resolution + num_actions - 1), num_actions - 1):
        counts = []
        prev = -1
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(resolution + num_actions - 2 - prev)
        points.append(np.array(counts, dtype=np.float64) / resolution)
    return np.array(points)


@dataclass(frozen=True)
class MarkovOptimum:
    """Best Markov policy on the original state space found by grid search."""

    value: float
    constraint: float
    tables: np.ndarray
    free_slices: list


def markov_policy_optimum(
    mdp: FiniteMdp,
    spec: ReachAvoidSpec,
    delta: float,
    init_state: int = 0,
    resolution: int = 40,
    refine_rounds: int = 6,
    limit: int = 2_000_000,
) -> MarkovOptimum:
    """Brute-force the original-state Markov policy class.

    Markov policies here condition on the base state only, so the chance
    constraint couples across time and the class is weaker than the
    augmented one. Values are multilinear in the per-(t, s) action
    distributions; this scans a product lattice over the decision-relevant
    reachable slices, then refines coordinate-wise around the best feasible
    point.
    """
    aug = build_augmented_finite(mdp, spec)
    h, s_count, a_count = mdp.horizon, mdp.num_states, mdp.num_actions

    reach = [{init_state}]
    for _ in range(h - 1):
        nxt = set()
        for s in reach[-1]:
            for a in range(a_count):
                nxt |= set(np.flatnonzero(mdp.kernel[s, a] > 0))
        reach.append(nxt)

    def relevant(s):
        rows_differ = not np.allclose(mdp.kernel[s], mdp.kernel[s, :1], atol=0.0)
        return rows_differ

    free = [
        (t, s)
        for t in range(h)
        for s in sorted(reach[t])
        if relevant(s) or not np.allclose(mdp.stage_rewards[t, s], mdp.stage_rewards[t, s, 0])
    ]

    def lift(base_tables: np.ndarray) -> np.ndarray:
        # pi(a | (s, y)) := pi(a | s): repeat across the auxiliary component
        return np.repeat(base_tables, 3, axis=1)

    uniform = np.full((h, s_count, a_count), 1.0 / a_count)
    if not free:
        r0, c0 = exact_policy_eval_batch(aug, lift(uniform)[None], init_state)
        if c0[0] < delta:
            raise InfeasibleProblemError("no free decisions and the fixed policy is infeasible")
        return MarkovOptimum(float(r0[0]), float(c0[0]), uniform, free)

    lattice = _simplex_lattice(a_count, resolution)
    combos = len(lattice) ** len(free)
    if combos > limit:
        raise ValueError(f"{combos} lattice points exceed the limit {limit}")

    def evaluate(assignments: np.ndarray):
        # assignments: (B, len(free), A) distributions for the free slices
        batch = np.repeat(uniform[None], assignments.shape[0], axis=0)
        for k, (t, s) in enumerate(free):
            batch[:, t, s, :] = assignments[:, k, :]
        lifted = np.repeat(batch, 3, axis=2)
        return exact_policy_eval_batch(aug, lifted, init_state)

    grids = [lattice] * len(free)
    assignments = np.array(list(itertools.product(*[range(len(g)) for g in grids])))
    points = np.stack(
        [grids[k][assignments[:, k]] for k in range(len(free))], axis=1
    )
    rewards, constraints = evaluate(points)
    feasible = constraints >= delta - 1e-12
    if not feasible.any():
        raise InfeasibleProblemError(f"no Markov policy on the lattice reaches {delta}")
    best_idx = np.flatnonzero(feasible)[np.argmax(rewards[feasible])]
    best_point = points[best_idx].copy()
    best_value = float(rewards[best_idx])
    best_constraint = float(constraints[best_idx])

    window = 1.0 / resolution
    for _ in range(refine_rounds):
        for k in range(len(free)):
            local = []
            for direction in itertools.product(range(-resolution // 4, resolution // 4 + 1), repeat=a_count - 1):
                cand = best_point[k].copy()
                step = np.array(list(direction) + [-sum(direction)], dtype=np.float64)
                cand = cand + step * (window / (resolution // 4 if resolution >= 4 else 1))
                if np.all(cand >= -1e-12) and abs(cand.sum() - 1.0) < 1e-9:
                    local.append(np.clip(cand, 0.0, 1.0))
            if not local:
                continue
            trial = np.repeat(best_point[None], len(local), axis=0)
            trial[:, k, :] = np.array(local)
            rewards, constraints = evaluate(trial)
            feasible = constraints >= delta - 1e-12
            if feasible.any():
                idx = np.flatnonzero(feasible)[np.argmax(rewards[feasible])]
                if rewards[idx] > best_value:
                    best_value = float(rewards[idx])
                    best_constraint = float(constraints[idx])
                    best_point = trial[idx].copy()
        window /= 10.0

    tables = uniform.copy()
    for k, (t, s) in enumerate(free):
        tables[t, s, :] = best_point[k]
    return MarkovOptimum(best_value, best_constraint, tables, free)
