import numpy as np
import pytest

from rgbd_panoptic.scheduler import Decision, DropState, next_drop, simulate


def _run(state, n):
    decisions = []
    for _ in range(n):
        d, state = next_drop(state)
        decisions.append(d)
    return decisions, state


def test_never_drops_at_zero():
    decisions, state = _run(DropState.initial(0.0, seed=1), 500)
    assert set(decisions) == {Decision.KEEP_BOTH}
    assert (state.n_rgb_dropped, state.n_depth_dropped) == (0, 0)


def test_always_drops_at_one_and_balances():
    decisions, state = _run(DropState.initial(1.0, seed=2), 2000)
    assert Decision.KEEP_BOTH not in decisions
    assert state.n_rgb_dropped + state.n_depth_dropped == 2000
    assert abs(state.n_rgb_dropped - state.n_depth_dropped) / 2000 < 0.05


def test_adaptive_probability():
    assert DropState(1.0).p_drop_rgb == 0.5
    assert DropState(1.0, 10, 0).p_drop_rgb == pytest.approx(1 / 12)
    assert DropState(1.0, 0, 10).p_drop_rgb == pytest.approx(11 / 12)


def test_adaptive_probability_empirical():
    # 20000 independent draws from the (10, 0) state: sd of the frequency is ~0.002
    rgb = 0
    for seed in range(20000):
        d, _ = next_drop(DropState(1.0, 10, 0, np.random.PCG64(seed).state))
        rgb += d is Decision.DROP_RGB
    assert rgb / 20000 == pytest.approx(1 / 12, abs=0.01)


def test_marginal_drop_rate_independent_of_counters():
    for counters in [(0, 0), (50, 3), (3, 50)]:
        drops = sum(
            next_drop(DropState(0.3, *counters, np.random.PCG64(s).state))[0] is not Decision.KEEP_BOTH
            for s in range(10000)
        )
        assert drops / 10000 == pytest.approx(0.3, abs=0.02)


def test_state_is_immutable_and_counters_monotone():
    state = DropState.initial(0.7, seed=4)
    prev = state
    for _ in range(200):
        _, nxt = next_drop(prev)
        assert nxt.n_rgb_dropped >= prev.n_rgb_dropped and nxt.n_depth_dropped >= prev.n_depth_dropped
        prev = nxt
    d1, s1 = next_drop(state)
    d2, s2 = next_drop(state)
    assert d1 == d2 and s1 == s2


def test_reproducible():
    assert _run(DropState.initial(0.5, 9), 300)[0] == _run(DropState.initial(0.5, 9), 300)[0]
    assert _run(DropState.initial(0.5, 9), 300)[0] != _run(DropState.initial(0.5, 10), 300)[0]


def test_validation():
    with pytest.raises(ValueError):
        DropState(1.5)
    with pytest.raises(ValueError):
        DropState(0.5, -1, 0)
    with pytest.raises(ValueError):
        simulate(0.5, 0)


def test_simulate_summary():
    assert simulate(0.0, 1, 0)["total_drops"] == 0
    s = simulate(0.5, 10000, seed=3)
    assert 0.48 <= s["drop_frequency"] <= 0.52
    assert s["imbalance_fraction"] <= 0.05
    assert s["rgb_drops"] + s["depth_drops"] == s["total_drops"]
    assert simulate(0.5, 500, seed=3) == simulate(0.5, 500, seed=3)
