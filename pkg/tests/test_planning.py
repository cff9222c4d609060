import numpy as np
import pytest

from implicitrl import gridworld as gw
from implicitrl import planning as pl


def dp_oracle(static_map, spec, horizon, gamma=pl.GAMMA):
    """Finite-horizon DP over (cell, heading), independent of value_iterate."""
    next_idx, rewards = pl.build_transitions(static_map, spec)
    v = np.zeros(rewards.shape[0])
    for _ in range(horizon):
        v = (rewards + gamma * v[next_idx]).max(axis=1)
    return v, next_idx, rewards


def test_transitions_match_env_dynamics():
    state = gw.new_episode(seed=2)
    snap = gw.static_snapshot(state)
    next_idx, rewards = pl.build_transitions(snap, state.spec)
    obj = {(r, c): t for r, c, t in snap.objects}
    for row in range(8):
        for col in range(8):
            for heading in gw.HEADINGS:
                s = pl._state_index(row, col, heading, 8)
                for a, action in enumerate(gw.ACTIONS):
                    h2 = gw.resolve_heading(row, col, heading, action, 8, "left")
                    r2, c2 = gw.forward_cell(row, col, h2)
                    assert next_idx[s, a] == pl._state_index(r2, c2, h2, 8)
                    expected = state.spec.get(obj.get((r2, c2)), 0) if (r2, c2) in obj else 0
                    assert rewards[s, a] == expected


def test_value_iteration_residual_below_tolerance():
    state = gw.new_episode(seed=0)
    vf = pl.value_iterate(gw.static_snapshot(state), state.spec)
    assert vf.bellman_residual() < pl.VI_TOL
    assert vf.sweeps < pl.MAX_SWEEPS


def test_value_iteration_nonconvergence_reported():
    state = gw.new_episode(seed=0)
    with pytest.raises(pl.ValueIterationError):
        pl.value_iterate(gw.static_snapshot(state), state.spec, max_sweeps=2)


def test_hand_checked_3x3_values():
    # Single passenger on a 3x3 grid: the discounted value of standing one
    # step away, facing it, is exactly the reward (6) plus the discounted
    # value of the post-pickup loop. With persisting objects the agent can
    # re-enter the reward cell every 4 steps (tightest loop through a cell
    # off the wall), so V(s) solves V = 6 + gamma^4 * 6 + ... on the loop.
    snap = gw.StaticMap(size=3, objects=((1, 1, gw.PASSENGER),))
    vf = pl.value_iterate(snap, gw.GROUND_TRUTH_SPEC)
    q = vf.q_values(1, 0, "E")[gw.ACTIONS.index(gw.MAINTAIN)]
    loop_value = 6.0 / (1.0 - pl.GAMMA ** 4)
    assert q == pytest.approx(loop_value, abs=1e-4)


def test_greedy_matches_finite_horizon_dp():
    for seed in range(5):
        state = gw.new_episode(seed)
        snap = gw.static_snapshot(state)
        vf = pl.value_iterate(snap, state.spec)
        v, next_idx, rewards = dp_oracle(snap, state.spec, horizon=200)
        q = rewards + pl.GAMMA * v[next_idx]
        gap = np.sort(q, axis=1)
        decisive = (gap[:, -1] - gap[:, -2]) > 1e-6
        vi_q = vf.rewards + pl.GAMMA * vf.values[vf.next_idx]
        assert (vi_q.argmax(axis=1)[decisive] == q.argmax(axis=1)[decisive]).all()


def test_greedy_policy_table_covers_all_states():
    state = gw.new_episode(seed=1)
    vf = pl.value_iterate(gw.static_snapshot(state), state.spec)
    table = pl.greedy_policy(vf, state.spec)
    assert len(table.actions) == 8 * 8 * 4
    assert table.action(0, 0, "N") in gw.ACTIONS


def test_behavior_policy_switches_on_pickup():
    bp = pl.BehaviorPolicy.seeded(0)
    bp.switch_prob = 0.0  # isolate the pickup trigger
    state = gw.new_episode(seed=0)
    seen = set()
    for trial in range(40):
        bp.rng = np.random.default_rng(trial)
        bp.step(state, just_picked_up=True)
        seen.add(bp.spec_index)
    assert seen == {0, 1, 2}


def test_behavior_policy_switch_rate():
    bp = pl.BehaviorPolicy.seeded(1)
    state = gw.new_episode(seed=1)
    switches = 0
    prev = bp.spec_index
    n = 600
    for _ in range(n):
        bp.step(state, just_picked_up=False)
        # A reselect draws uniformly, so 1/3 of switches are invisible;
        # count draw events via the spec index trace plus rng behavior.
        if bp.spec_index != prev:
            switches += 1
        prev = bp.spec_index
    # P(visible switch) = 0.1 * 2/3; allow generous slack.
    assert 0.02 < switches / n < 0.14


def test_behavior_policy_is_deterministic_given_seed():
    log_a = gw.run_episode(5, pl.BehaviorPolicy.seeded(5), episode_len=60)
    log_b = gw.run_episode(5, pl.BehaviorPolicy.seeded(5), episode_len=60)
    assert log_a.to_jsonl() == log_b.to_jsonl()


def test_mc_estimate_deterministic_and_bounded():
    state = gw.new_episode(seed=3)
    a = pl.mc_estimate(state, gw.MAINTAIN, pl.BehaviorPolicy.seeded(3), state.spec,
                       n_rollouts=30, horizon=40, seed=11)
    b = pl.mc_estimate(state, gw.MAINTAIN, pl.BehaviorPolicy.seeded(3), state.spec,
                       n_rollouts=30, horizon=40, seed=11)
    assert a.mean == b.mean and a.se == b.se
    bound = 6 / (1 - pl.GAMMA)
    assert -bound <= a.mean <= bound
    assert a.se > 0


def test_task_statistics_identities():
    state = gw.new_episode(seed=4)
    bp = pl.BehaviorPolicy.seeded(4)
    ts = pl.task_statistics(state, gw.MAINTAIN, bp, state.spec,
                            n_rollouts=20, horizon=30, seed=0)
    assert ts.advantage_star == pytest.approx(ts.q_star - max(
        pl.value_iterate(gw.static_snapshot(state), state.spec)
        .q_values(state.agent.row, state.agent.col, state.agent.heading)))
    assert ts.advantage_star <= 1e-9
    assert ts.optimality in (0, 1)
    assert (ts.advantage_star > -1e-9) == bool(ts.optimality)
    assert ts.surprise == pytest.approx(ts.q_behavior - ts.q_star)
