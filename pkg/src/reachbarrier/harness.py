"""Configuration-driven experiment runner and command-line entry point.

Commands:
    run <config.json>    run the barrier ascent, write iterates.csv / summary.json
    audit <run-dir>      recompute exact constraint values for a finished run
    solve <config.json>  print the exact constrained optimum for the configured env

Runs are reproducible: a fixed config and seed yield a byte-identical
iterates.csv. Wall-clock timing is therefore left out of the CSV unless
`record_timing` is set in the config.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import AugmentedEnv, build_augmented_finite
from .envs import GridWorldSpec, example1, gridworld
from .estimators import smoothness_constants
from .lbsgd import (
    EXIT_INFEASIBLE,
    BarrierConfig,
    RunResult,
    lbsgd_run,
    suggested_batch_size,
    convergence_constants,
)
from .oracle import exact_policy_eval, slater_check
from .policies import TabularSoftmaxPolicy, save_policy

CSV_COLUMNS = (
    "iter",
    "vc_hat",
    "alpha_lower",
    "beta_upper",
    "m_hat",
    "gamma",
    "grad_norm",
    "vr_exact",
    "vc_exact",
    "wall_ms",
)

EXIT_OK = 0
EXIT_INFEASIBLE_START = 2
EXIT_CONFIG_ERROR = 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Fully pinned experiment description, loadable from a JSON file."""

    env_name: str
    env_params: dict
    eta: float
    delta: float
    beta: float
    batch_size: int
    iterations: int
    seed: int
    out_dir: str
    policy_kind: str = "tabular_softmax"
    oracle_audit: bool = True
    theta_out: str = "break"
    init_mode: str = "safe_critical"
    init_bias: float = 3.0
    greedy_bias: float = 2.0
    batch_cap: int | None = 20000
    batch_scale: float = 1.0
    record_timing: bool = False
    mfcq_p: float | None = None
    mfcq_ell: float | None = None
    fisher_mu: float | None = None


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config must be a JSON object")
    payload.update(overrides or {})
    env = payload.get("env")
    if not isinstance(env, dict) or "name" not in env:
        raise ConfigError("config needs an 'env' object with a 'name'")
    env_params = {k: v for k, v in env.items() if k != "name"}
    try:
        eta = float(payload["eta"])
        delta = float(payload["delta"])
        beta = float(payload.get("beta", 0.1))
        iterations = int(payload["iterations"])
        seed = int(payload.get("seed", 0))
        out_dir = str(payload.get("out_dir", "run_out"))
        batch_cap = payload.get("batch_cap", 20000)
        batch_cap = None if batch_cap is None else int(batch_cap)
        batch_scale = float(payload.get("batch_scale", 1.0))
        batch = payload.get("batch_size")
        batch = (
            int(batch)
            if batch is not None
            else suggested_batch_size(eta, beta, batch_scale, batch_cap)
        )
        config = RunConfig(
            env_name=str(env["name"]),
            env_params=env_params,
            eta=eta,
            delta=delta,
            beta=beta,
            batch_size=batch,
            iterations=iterations,
            seed=seed,
            out_dir=out_dir,
            policy_kind=str(payload.get("policy", "tabular_softmax")),
            oracle_audit=bool(payload.get("oracle_audit", True)),
            theta_out=str(payload.get("theta_out", "break")),
            init_mode=str(payload.get("init_mode", "safe_critical")),
            init_bias=float(payload.get("init_bias", 3.0)),
            greedy_bias=float(payload.get("greedy_bias", 2.0)),
            batch_cap=batch_cap,
            batch_scale=batch_scale,
            record_timing=bool(payload.get("record_timing", False)),
            mfcq_p=None if payload.get("p") is None else float(payload["p"]),
            mfcq_ell=None if payload.get("ell") is None else float(payload["ell"]),
            fisher_mu=None if payload.get("mu_f") is None else float(payload["mu_f"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    if config.policy_kind != "tabular_softmax":
        raise ConfigError(f"unsupported policy kind {config.policy_kind!r}")
    if config.theta_out not in ("break", "final"):
        raise ConfigError("theta_out must be 'break' or 'final'")
    if config.init_mode not in ("uniform", "safe_full", "safe_critical", "safe_greedy"):
        raise ConfigError(
            "init_mode must be 'uniform', 'safe_full', 'safe_critical' or 'safe_greedy'"
        )
    return config


def build_environment(name: str, params: dict):
    if name == "example1":
        if params:
            raise ConfigError(f"example1 takes no parameters, got {sorted(params)}")
        return example1()
    if name == "gridworld":
        try:
            spec = GridWorldSpec(
                width=int(params["width"]),
                height=int(params["height"]),
                horizon=int(params["horizon"]),
                slip=float(params.get("slip", 0.0)),
                obstacles=frozenset(tuple(c) for c in params.get("obstacles", [])),
                goals=frozenset(tuple(c) for c in params.get("goals", [])),
                bonus_cell=params.get("bonus_cell"),
            )
            return gridworld(spec)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid gridworld parameters: {exc}") from exc
    raise ConfigError(f"unknown environment {name!r}")


def initial_theta(config: RunConfig, aug, policy: TabularSoftmaxPolicy) -> np.ndarray:
    """Starting parameters tilted toward a known safe policy.

    The safe policy maximizes the constraint channel (tie-broken toward low
    action indices). `safe_full` tilts every slice toward it; `safe_critical`
    tilts only the slices where the action choice changes the achievable
    constraint value, leaving all other slices uniform. `safe_greedy` adds a
    reward-greedy tilt on the decided slices (auxiliary status 0 or 2): there
    the reach-avoid outcome is already settled, so no action can affect the
    constraint and seeking reward is free.
    """
    theta = np.zeros(policy.dim)
    if config.init_mode == "uniform":
        return theta
    m = aug.mdp
    w = aug.terminal_constraint.astype(np.float64)
    q_by_t = [None] * m.horizon
    for t in reversed(range(m.horizon)):
        q = m.kernel @ w
        q_by_t[t] = q
        w = q.max(axis=1)
    view = theta.reshape(m.horizon, m.num_states, m.num_actions)
    for t in range(m.horizon):
        q = q_by_t[t]
        best = np.argmax(q, axis=1)
        if config.init_mode == "safe_full":
            affected = np.ones(m.num_states, dtype=bool)
        else:
            affected = (q.max(axis=1) - q.min(axis=1)) > 1e-12
        view[t, affected, best[affected]] = config.init_bias
    if config.init_mode == "safe_greedy":
        # decided slices form closed blocks, so the reward-optimal action
        # there is independent of anything the pending block does
        decided = (np.arange(m.num_states) % 3) != 1
        w_r = m.terminal_reward.astype(np.float64)
        greedy_by_t = [None] * m.horizon
        for t in reversed(range(m.horizon)):
            q_r = m.stage_rewards[t] + m.kernel @ w_r
            greedy_by_t[t] = np.argmax(q_r, axis=1)
            w_r = q_r.max(axis=1)
        for t in range(m.horizon):
            view[t, decided, :] = 0.0
            view[t, decided, greedy_by_t[t][decided]] = config.greedy_bias
    return theta


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.17g}"


def write_iterates_csv(path, records) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        lines.append(
            ",".join(
                [
                    str(r.iteration),
                    _fmt(r.vc_hat),
                    _fmt(r.alpha_lower),
                    _fmt(r.beta_upper),
                    _fmt(r.m_hat),
                    _fmt(r.gamma),
                    _fmt(r.grad_norm),
                    _fmt(r.vr_exact),
                    _fmt(r.vc_exact),
                    _fmt(r.wall_ms),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _audit_closure(aug, policy, init_state: int = 0):
    start = aug.initial_state(init_state)

    def audit(theta):
        values = exact_policy_eval(aug, policy.with_theta(theta))
        return float(values.v_r[0, start]), float(values.v_c[0, start])

    return audit


def _config_payload(config: RunConfig) -> dict:
    payload = {
        "env": {"name": config.env_name, **config.env_params},
        "policy": config.policy_kind,
        "eta": config.eta,
        "delta": config.delta,
        "beta": config.beta,
        "batch_size": config.batch_size,
        "iterations": config.iterations,
        "seed": config.seed,
        "out_dir": config.out_dir,
        "oracle_audit": config.oracle_audit,
        "theta_out": config.theta_out,
        "init_mode": config.init_mode,
        "init_bias": config.init_bias,
        "greedy_bias": config.greedy_bias,
        "batch_cap": config.batch_cap,
        "batch_scale": config.batch_scale,
        "record_timing": config.record_timing,
        "p": config.mfcq_p,
        "ell": config.mfcq_ell,
        "mu_f": config.fisher_mu,
    }
    return payload


def run_experiment(config: RunConfig) -> int:
    """Execute one run and write iterates.csv, summary.json and the parameters."""
    mdp, spec = build_environment(config.env_name, config.env_params)
    env = AugmentedEnv(mdp, spec)
    aug = build_augmented_finite(mdp, spec)
    policy = TabularSoftmaxPolicy(mdp.horizon, env.num_aug_states, mdp.num_actions)

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    check = slater_check(aug, config.delta, env.init_state)
    if not check.satisfied:
        print(
            f"infeasible: best achievable constraint value {check.max_value!r} "
            f"is not above delta={config.delta!r}",
            file=sys.stderr,
        )
        return EXIT_INFEASIBLE_START

    theta0 = initial_theta(config, aug, policy)
    barrier = BarrierConfig(
        eta=config.eta,
        delta=config.delta,
        beta=config.beta,
        batch_size=config.batch_size,
        max_iterations=config.iterations,
        mfcq_p=config.mfcq_p,
        mfcq_ell=config.mfcq_ell,
        slater_margin=check.margin,
    )
    audit = _audit_closure(aug, policy, env.init_state) if config.oracle_audit else None
    result = lbsgd_run(
        env,
        policy,
        theta0,
        barrier,
        seed=config.seed,
        audit=audit,
        theta_out=config.theta_out,
        record_timing=config.record_timing,
    )

    write_iterates_csv(out / "iterates.csv", result.records)
    np.savez(out / "theta_history.npz", theta_history=result.theta_history)
    save_policy(out / "theta_out.json", policy.with_theta(result.theta_out))

    summary = summarize(config, aug, policy, result, check.margin)
    (out / "summary.json").write_text(json.dumps(summary, indent=1), encoding="utf-8")

    if result.exit_reason == EXIT_INFEASIBLE and result.num_iterations == 1:
        print("infeasible start: the first feasibility lower bound was not positive", file=sys.stderr)
        return EXIT_INFEASIBLE_START
    return EXIT_OK


def summarize(config: RunConfig, aug, policy, result: RunResult, slater_margin: float) -> dict:
    audit = _audit_closure(aug, policy)
    final_vr, final_vc = audit(result.theta_out)
    # same iterate set audit_run recounts later, so the fractions must agree
    exact_values = [audit(theta)[1] for theta in result.theta_history]
    safe_fraction = float(np.mean([v >= config.delta for v in exact_values]))
    min_margin = float(min(exact_values) - config.delta)
    summary = {
        "config": _config_payload(config),
        "exit_reason": result.exit_reason,
        "iterations_run": result.num_iterations,
        "break_iteration": result.break_iteration,
        "slater_margin": slater_margin,
        "final_vr_exact": final_vr,
        "final_vc_exact": final_vc,
        "safe_iterate_fraction": safe_fraction,
        "min_constraint_margin": min_margin,
    }
    if config.mfcq_ell is not None:
        consts = smoothness_constants(policy.score_bounds(), aug.mdp.horizon)
        summary["convergence_constants"] = convergence_constants(
            consts,
            ell=config.mfcq_ell,
            eta=config.eta,
            m_g=policy.score_bounds().m_g,
            horizon=aug.mdp.horizon,
            p=config.mfcq_p,
            mu_f=config.fisher_mu,
            nu_s=slater_margin,
        )
    return summary


def audit_run(run_dir) -> dict:
    """Recompute exact constraint values for every iterate of a finished run."""
    run_dir = Path(run_dir)
    summary_path = run_dir / "summary.json"
    history_path = run_dir / "theta_history.npz"
    if not summary_path.exists() or not history_path.exists():
        raise FileNotFoundError(f"{run_dir} does not contain a completed run")
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    cfg = summary["config"]
    mdp, spec = build_environment(cfg["env"]["name"], {k: v for k, v in cfg["env"].items() if k != "name"})
    aug = build_augmented_finite(mdp, spec)
    policy = TabularSoftmaxPolicy(mdp.horizon, 3 * mdp.num_states, mdp.num_actions)
    history = np.load(history_path)["theta_history"]
    delta = float(cfg["delta"])
    audit = _audit_closure(aug, policy)
    values = [audit(theta)[1] for theta in history]
    margins = [v - delta for v in values]
    report = {
        "num_iterates": len(values),
        "safe_iterate_fraction": float(np.mean([v >= delta for v in values])),
        "min_constraint_margin": float(min(margins)),
        "delta": delta,
    }
    if cfg.get("ell") is not None:
        consts = smoothness_constants(policy.score_bounds(), mdp.horizon)
        constants = convergence_constants(
            consts,
            ell=float(cfg["ell"]),
            eta=float(cfg["eta"]),
            m_g=policy.score_bounds().m_g,
            horizon=mdp.horizon,
            p=cfg.get("p"),
            mu_f=cfg.get("mu_f"),
            nu_s=summary.get("slater_margin"),
        )
        report["margin_target"] = constants["margin_target"]
        report["margin_target_met"] = bool(report["min_constraint_margin"] >= constants["margin_target"])
    return report


def solve_config(config: RunConfig) -> dict:
    """Exact constrained optimum of the configured environment."""
    from .oracle import solve_cmdp

    mdp, spec = build_environment(config.env_name, config.env_params)
    aug = build_augmented_finite(mdp, spec)
    solution = solve_cmdp(aug, config.delta)
    return {
        "value": solution.value,
        "achieved_constraint": solution.achieved_constraint,
        "dual": solution.dual,
        "weights": solution.weights,
        "num_policies": len(solution.policies),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="reachbarrier", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the barrier ascent from a config file")
    run_p.add_argument("config")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--audit", action="store_true", help="force oracle auditing on")
    run_p.add_argument("--theta-out", choices=("break", "final"), default=None)

    audit_p = sub.add_parser("audit", help="recheck every iterate of a finished run")
    audit_p.add_argument("run_dir")

    solve_p = sub.add_parser("solve", help="print the exact constrained optimum")
    solve_p.add_argument("config")

    args = parser.parse_args(argv)

    if args.command == "run":
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out_dir"] = args.out
        if args.audit:
            overrides["oracle_audit"] = True
        if args.theta_out is not None:
            overrides["theta_out"] = args.theta_out
        try:
            config = load_config(args.config, overrides)
            return run_experiment(config)
        except (ConfigError, ValueError, OSError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
    if args.command == "audit":
        try:
            report = audit_run(args.run_dir)
        except FileNotFoundError as exc:
            print(f"audit error: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        print(json.dumps(report, indent=1))
        return EXIT_OK
    if args.command == "solve":
        try:
            config = load_config(args.config)
            report = solve_config(config)
        except (ConfigError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        print(json.dumps(report, indent=1))
        return EXIT_OK
    return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
