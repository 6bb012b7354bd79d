"""Fisher and transfer-error diagnostics on the six-state example.

The per-timestep Fisher matrices certify that the tabular softmax explores
non-degenerately on the visited slices, and the transfer error shows it can
represent advantage functions exactly (zero residual), which is what backs
convergence to the constrained optimum rather than a biased surrogate.
"""

import numpy as np

from reachbarrier import (
    TabularSoftmaxPolicy,
    build_augmented_finite,
    convergence_constants,
    counter_rng,
    example1,
    fisher_report,
    slater_check,
    smoothness_constants,
    solve_cmdp,
    transfer_error_report,
    transfer_error_supremum,
)

mdp, spec = example1()
aug = build_augmented_finite(mdp, spec)
policy = TabularSoftmaxPolicy(mdp.horizon, aug.mdp.num_states, mdp.num_actions)

report = fisher_report(aug, policy)
print("Fisher blocks under the uniform policy:")
for t, (matrix, smallest) in enumerate(zip(report.matrices, report.min_nonzero_eigenvalues)):
    eigs = np.linalg.eigvalsh(matrix)
    print(
        f"  t={t}: rank={int(np.sum(eigs > report.eigen_cutoff))}  "
        f"min nonzero eigenvalue={smallest}"
    )
print("mu_F =", report.mu_f)

solution = solve_cmdp(aug, 0.4)
reference = solution.occupancy(aug)
transfer = transfer_error_report(aug, policy, reference)
print("\ntransfer-error residuals (reward channel):", [f"{x:.2e}" for x in transfer.residuals["r"]])
print("transfer-error residuals (constraint):    ", [f"{x:.2e}" for x in transfer.residuals["c"]])
sup = transfer_error_supremum(aug, policy, reference, 0.4, counter_rng(9), num_samples=50)
print(f"worst residual over 50 random feasible parameter draws: {sup:.2e}")
print("(the tabular class represents advantages exactly, so this is zero up to")
print("the pseudo-inverse cutoff)")

consts = smoothness_constants(policy.score_bounds(), mdp.horizon)
check = slater_check(aug, 0.4)
constants = convergence_constants(
    consts, ell=0.35, eta=0.02, m_g=policy.score_bounds().m_g, horizon=mdp.horizon,
    p=0.05, mu_f=report.mu_f, nu_s=check.margin,
)
print("\nreported guarantee constants for user-supplied (p=0.05, ell=0.35):")
for key, value in constants.items():
    print(f"  {key} = {value:.6g}")
