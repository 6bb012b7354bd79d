import json

import numpy as np
import pytest

from reachbarrier.harness import (
    EXIT_CONFIG_ERROR,
    EXIT_INFEASIBLE_START,
    EXIT_OK,
    audit_run,
    initial_theta,
    load_config,
    main,
    run_experiment,
)
from reachbarrier import (
    TabularSoftmaxPolicy,
    build_augmented_finite,
    example1,
    load_policy,
)


def write_config(path, **overrides):
    payload = {
        "env": {"name": "example1"},
        "eta": 0.05,
        "delta": 0.25,
        "beta": 0.1,
        "batch_size": 500,
        "iterations": 8,
        "seed": 12,
        "out_dir": str(path.parent / "out"),
        "oracle_audit": True,
    }
    payload.update(overrides)
    path.write_text(json.dumps(payload))
    return path


def test_run_writes_artifacts(tmp_path):
    config_path = write_config(tmp_path / "config.json")
    config = load_config(config_path)
    assert run_experiment(config) == EXIT_OK
    out = tmp_path / "out"
    assert (out / "iterates.csv").exists()
    assert (out / "summary.json").exists()
    assert (out / "theta_out.json").exists()
    assert (out / "theta_history.npz").exists()

    csv_lines = (out / "iterates.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "iter,vc_hat,alpha_lower,beta_upper,m_hat,gamma,grad_norm,vr_exact,vc_exact,wall_ms"
    assert len(csv_lines) == 1 + 8

    summary = json.loads((out / "summary.json").read_text())
    assert summary["exit_reason"] in ("iteration_cap", "break")
    assert summary["safe_iterate_fraction"] is not None
    assert summary["final_vr_exact"] is not None

    policy = load_policy(out / "theta_out.json")
    assert isinstance(policy, TabularSoftmaxPolicy)
    assert policy.dim == 3 * 18 * 2


def test_run_is_byte_identical(tmp_path):
    config_path = write_config(tmp_path / "config.json", out_dir=str(tmp_path / "a"))
    assert run_experiment(load_config(config_path)) == EXIT_OK
    first = (tmp_path / "a" / "iterates.csv").read_bytes()
    config_path2 = write_config(tmp_path / "config2.json", out_dir=str(tmp_path / "b"))
    assert run_experiment(load_config(config_path2)) == EXIT_OK
    second = (tmp_path / "b" / "iterates.csv").read_bytes()
    assert first == second


def test_run_infeasible_delta_exits_2(tmp_path):
    config_path = write_config(tmp_path / "config.json", delta=0.9)
    assert run_experiment(load_config(config_path)) == EXIT_INFEASIBLE_START


def test_cli_run_and_flags(tmp_path):
    config_path = write_config(tmp_path / "config.json")
    out = tmp_path / "cli_out"
    code = main(["run", str(config_path), "--seed", "99", "--out", str(out), "--theta-out", "final"])
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seed"] == 99
    assert summary["config"]["theta_out"] == "final"


def test_cli_malformed_config_exits_3(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == EXIT_CONFIG_ERROR
    missing_keys = tmp_path / "missing.json"
    missing_keys.write_text(json.dumps({"env": {"name": "example1"}}))
    assert main(["run", str(missing_keys)]) == EXIT_CONFIG_ERROR
    unknown_env = tmp_path / "unknown.json"
    write_config(unknown_env, env={"name": "mystery"})
    assert main(["run", str(unknown_env)]) == EXIT_CONFIG_ERROR


def test_cli_solve_prints_optimum(tmp_path, capsys):
    config_path = write_config(tmp_path / "config.json", delta=0.4)
    assert main(["solve", str(config_path)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["value"] == pytest.approx(0.6, abs=1e-9)
    assert report["achieved_constraint"] == pytest.approx(0.4, abs=1e-9)


def test_audit_matches_summary_fraction(tmp_path):
    config_path = write_config(tmp_path / "config.json")
    assert run_experiment(load_config(config_path)) == EXIT_OK
    report = audit_run(tmp_path / "out")
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert report["safe_iterate_fraction"] == pytest.approx(summary["safe_iterate_fraction"])
    assert report["min_constraint_margin"] == pytest.approx(summary["min_constraint_margin"])


def test_audit_counts_synthetic_infeasible_iterate(tmp_path):
    config_path = write_config(tmp_path / "config.json")
    assert run_experiment(load_config(config_path)) == EXIT_OK
    out = tmp_path / "out"
    history = np.load(out / "theta_history.npz")["theta_history"]
    feasible = history[0]
    unsafe = np.zeros((3, 18, 2))
    unsafe[2, 3 * 3 + 1, 1] = 40.0  # always pick the violating action where it counts
    doctored = np.stack([feasible] * 9 + [unsafe.ravel()])
    np.savez(out / "theta_history.npz", theta_history=doctored)
    report = audit_run(out)
    assert report["num_iterates"] == 10
    assert report["safe_iterate_fraction"] == pytest.approx(0.9)
    assert report["min_constraint_margin"] < 0


def test_audit_missing_run_dir(tmp_path):
    assert main(["audit", str(tmp_path / "nowhere")]) == EXIT_CONFIG_ERROR


def test_audit_reports_margin_target_with_ell(tmp_path):
    config_path = write_config(tmp_path / "config.json", ell=0.5, p=0.05, mu_f=0.4)
    assert run_experiment(load_config(config_path)) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert "convergence_constants" in summary
    assert summary["convergence_constants"]["margin_target"] > 0
    report = audit_run(tmp_path / "out")
    assert "margin_target_met" in report


def test_initial_theta_modes(tmp_path):
    mdp, spec = example1()
    aug = build_augmented_finite(mdp, spec)
    policy = TabularSoftmaxPolicy(3, 18, 2)
    config_path = write_config(tmp_path / "config.json", init_mode="uniform")
    assert np.array_equal(
        initial_theta(load_config(config_path), aug, policy), np.zeros(policy.dim)
    )
    config_path = write_config(tmp_path / "c2.json", init_mode="safe_critical", init_bias=2.5)
    theta = initial_theta(load_config(config_path), aug, policy).reshape(3, 18, 2)
    # only slices where the safe action changes the achievable constraint are
    # tilted: state (3, pending) at each timestep, nothing else
    assert theta[2, 3 * 3 + 1, 0] == 2.5
    assert np.count_nonzero(theta[:, : 3 * 3]) == 0
    assert np.count_nonzero(theta[:, 3 * 3 + 2 :]) == 0
    assert np.count_nonzero(theta) == 3
    config_path = write_config(tmp_path / "c3.json", init_mode="safe_full", init_bias=2.5)
    theta_full = initial_theta(load_config(config_path), aug, policy).reshape(3, 18, 2)
    assert np.count_nonzero(theta_full) == 3 * 18


def test_gridworld_config_round_trip(tmp_path):
    config_path = write_config(
        tmp_path / "grid.json",
        env={
            "name": "gridworld",
            "width": 3,
            "height": 3,
            "horizon": 3,
            "slip": 0.1,
            "obstacles": [[1, 1]],
            "goals": [[2, 1]],
            "bonus_cell": [0, 2],
        },
        delta=0.1,
        eta=0.05,
        batch_size=200,
        iterations=3,
        out_dir=str(tmp_path / "grid_out"),
    )
    assert run_experiment(load_config(config_path)) == EXIT_OK
    summary = json.loads((tmp_path / "grid_out" / "summary.json").read_text())
    assert summary["config"]["env"]["name"] == "gridworld"
