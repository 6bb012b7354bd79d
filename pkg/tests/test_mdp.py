import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reachbarrier import (
    FiniteMdp,
    ReachAvoidSpec,
    Trajectory,
    counter_rng,
    example1,
    load_mdp,
    sample_next,
    satisfies_reach_avoid,
    save_mdp,
    validate_mdp,
)

SPEC = ReachAvoidSpec(frozenset({0, 1, 3, 4}), frozenset({4}))


def brute_force_reach_avoid(states, spec):
    """Independent oracle: scan every prefix for the defining condition."""
    for t in range(len(states)):
        if states[t] in spec.goal_set and all(
            s in spec.safe_set and s not in spec.goal_set for s in states[:t]
        ):
            return True
    return False


def test_example1_validates_clean():
    mdp, spec = example1()
    assert validate_mdp(mdp, spec) == []


def test_row_sum_violation_reported():
    mdp, spec = example1()
    kernel = np.array(mdp.kernel)
    kernel[0, 0] *= 0.9
    broken = FiniteMdp(6, 2, 3, kernel, mdp.stage_rewards, mdp.terminal_reward)
    report = validate_mdp(broken, spec)
    assert any("(s=0, a=0)" in line and "sums to" in line for line in report)


def test_goal_outside_safe_reported():
    mdp, _ = example1()
    report = validate_mdp(mdp, ReachAvoidSpec(frozenset({0, 1, 3}), frozenset({4})))
    assert any("not contained in the safe set" in line for line in report)


def test_reward_range_reported():
    mdp, spec = example1()
    terminal = np.array(mdp.terminal_reward)
    terminal[5] = 1.5
    broken = FiniteMdp(6, 2, 3, mdp.kernel, mdp.stage_rewards, terminal)
    assert any("terminal" in line for line in validate_mdp(broken, spec))


def test_reach_avoid_on_figure_paths():
    assert satisfies_reach_avoid(np.array([0, 1, 3, 4]), SPEC)
    assert not satisfies_reach_avoid(np.array([0, 2, 3, 4]), SPEC)


def test_reach_avoid_goal_at_start():
    assert satisfies_reach_avoid(np.array([4, 2, 2, 2]), SPEC)


def test_reach_avoid_matches_brute_force_exhaustively():
    # every state sequence of length <= 5 over 6 states
    for length in range(1, 6):
        for states in itertools.product(range(6), repeat=length):
            assert satisfies_reach_avoid(np.array(states), SPEC) == brute_force_reach_avoid(
                states, SPEC
            ), states


@given(st.lists(st.integers(min_value=0, max_value=5), min_size=1, max_size=8))
@settings(max_examples=300, deadline=None)
def test_reach_avoid_matches_brute_force_random(states):
    assert satisfies_reach_avoid(np.array(states), SPEC) == brute_force_reach_avoid(states, SPEC)


def test_sample_next_deterministic_edge():
    mdp, _ = example1()
    rng = counter_rng(7)
    for a in range(2):
        assert sample_next(mdp, 1, a, rng) == 3


def test_sample_next_branch_frequencies():
    mdp, _ = example1()
    rng = counter_rng(11)
    draws = 100_000
    hits = sum(sample_next(mdp, 0, 0, rng) == 1 for _ in range(draws))
    sigma = np.sqrt(0.5 * 0.5 / draws)
    assert abs(hits / draws - 0.5) <= 3 * sigma


def test_sample_next_matches_full_row_distribution():
    mdp, _ = example1()
    rng = counter_rng(13)
    draws = 100_000
    samples = np.array([sample_next(mdp, 3, 1, rng) for _ in range(draws)])
    counts = np.bincount(samples, minlength=6) / draws
    for s in range(6):
        p = mdp.kernel[3, 1, s]
        sigma = np.sqrt(max(p * (1 - p), 1e-12) / draws)
        assert abs(counts[s] - p) <= 3 * sigma + 1e-12


def test_sample_next_single_support():
    kernel = np.ones((1, 1, 1))
    mdp = FiniteMdp(1, 1, 1, kernel, np.zeros((1, 1, 1)), np.zeros(1))
    assert sample_next(mdp, 0, 0, counter_rng(0)) == 0


def test_sample_next_out_of_range():
    mdp, _ = example1()
    with pytest.raises(IndexError):
        sample_next(mdp, 6, 0, counter_rng(0))


def test_trajectory_length_consistency():
    with pytest.raises(ValueError):
        Trajectory(states=np.arange(3), actions=np.arange(3), rewards=np.zeros(3))


def test_file_round_trip_bit_exact(tmp_path):
    mdp, spec = example1()
    path = tmp_path / "env.json"
    save_mdp(path, mdp, spec)
    loaded_mdp, loaded_spec = load_mdp(path)
    assert np.array_equal(loaded_mdp.kernel, mdp.kernel)
    assert np.array_equal(loaded_mdp.stage_rewards, mdp.stage_rewards)
    assert np.array_equal(loaded_mdp.terminal_reward, mdp.terminal_reward)
    assert loaded_spec == spec
    # second round trip is byte-identical
    path2 = tmp_path / "env2.json"
    save_mdp(path2, loaded_mdp, loaded_spec)
    assert path.read_bytes() == path2.read_bytes()


def test_load_renormalizes_within_tolerance(tmp_path):
    mdp, spec = example1()
    path = tmp_path / "env.json"
    save_mdp(path, mdp, spec)
    import json

    payload = json.loads(path.read_text())
    payload["kernel"][0][0][1] = 0.5 + 2e-10
    path.write_text(json.dumps(payload))
    loaded, _ = load_mdp(path)
    assert np.allclose(loaded.kernel.sum(axis=2), 1.0, atol=1e-15)


def test_load_rejects_rows_beyond_tolerance(tmp_path):
    mdp, spec = example1()
    path = tmp_path / "env.json"
    save_mdp(path, mdp, spec)
    import json

    payload = json.loads(path.read_text())
    payload["kernel"][0][0][1] = 0.6
    path.write_text(json.dumps(payload))
    with pytest.raises(ValueError):
        load_mdp(path)


def test_counter_rng_streams_are_reproducible_and_distinct():
    a = counter_rng(5, 1).random(4)
    b = counter_rng(5, 1).random(4)
    c = counter_rng(5, 2).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
