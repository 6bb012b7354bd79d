"""Reach-avoid constrained control on finite-horizon MDPs.

The problem of maximizing reward subject to a chance constraint on the
reach-avoid event is lifted to a constrained MDP on the product of the
state space with a three-valued reach-avoid status. The library provides
the lifted environment, score-function estimators, a log-barrier gradient
ascent with confidence-bound step sizes, and an exact oracle (dynamic
programming, dual bisection, Fisher and transfer-error diagnostics) that
certifies runs on desk-scale instances.
"""

from .augment import (
    AUX_ACHIEVED,
    AUX_PENDING,
    AUX_VIOLATED,
    AugmentedEnv,
    AugmentedFinite,
    AugTrajectory,
    RolloutBatch,
    aug_id,
    aug_unpack,
    augmented_rollout,
    aux_update,
    build_augmented_finite,
    history_rollout,
    initial_aux,
    lift_policy,
    rollout_batch,
    terminal_constraint,
)
from .envs import GridWorldSpec, example1, gridworld
from .estimators import (
    BarrierDomainError,
    ConcentrationWidths,
    InsufficientBatchError,
    SmoothnessConstants,
    barrier_gradient,
    concentration_widths,
    estimate_constraint_gradient,
    estimate_constraint_value,
    estimate_reward_gradient,
    min_batch_size,
    smoothness_constants,
)
from .lbsgd import (
    BarrierConfig,
    IterateRecord,
    RunResult,
    confidence_bounds,
    lbsgd_run,
    local_smoothness_estimate,
    step_size,
    suggested_batch_size,
    convergence_constants,
)
from .mdp import (
    FiniteMdp,
    ReachAvoidSpec,
    Trajectory,
    counter_rng,
    load_mdp,
    sample_next,
    satisfies_reach_avoid,
    save_mdp,
    validate_mdp,
)
from .oracle import (
    CmdpSolution,
    ExactValues,
    FisherReport,
    InfeasibleProblemError,
    MarkovOptimum,
    SlaterCheck,
    TransferErrorReport,
    cmdp_value_by_enumeration,
    enumerate_deterministic_policies,
    exact_occupancy,
    exact_policy_eval,
    exact_policy_eval_batch,
    exact_policy_gradient,
    fisher_report,
    initial_values,
    markov_policy_optimum,
    max_constraint_value,
    slater_check,
    solve_cmdp,
    transfer_error_report,
    transfer_error_supremum,
)
from .policies import (
    ScoreBounds,
    TabularSoftmaxPolicy,
    TruncatedGaussianPolicy,
    load_policy,
    policy_from_dict,
    save_policy,
)
