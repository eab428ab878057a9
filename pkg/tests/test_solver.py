"""Solver tests: iteration mechanics, greedy extraction, serialization."""

import numpy as np
import pytest

from aoi_energy import (
    ConvergenceError,
    PolicyTable,
    QTable,
    SolverConfig,
    State,
    SystemParams,
    ThresholdStructureError,
    bellman_qvalues,
    check_truncation_adequacy,
    extract_thresholds,
    greedy_policy,
    greedy_policy_shortcircuit,
    read_value_csv,
    solve,
    write_value_csv,
)
from conftest import BENCH, EPSILON

SMALL = SystemParams(
    erasure_prob=0.3,
    harvest_prob=0.4,
    energy_weight=2.0,
    backup_cost=1.5,
    battery_cap=4,
    aoi_cap=60,
)

# At cap 6 the empty-battery threshold of this instance sits beyond the grid;
# doubling the cap reveals it, so the adequacy check must fail.
CRAMPED = SystemParams(
    erasure_prob=0.2,
    harvest_prob=0.3,
    energy_weight=5.0,
    backup_cost=2.0,
    battery_cap=2,
    aoi_cap=6,
)


def test_free_transmission_chain_has_geometric_age():
    """With a free backup the solver must transmit everywhere.

    The age then renews each delivery, so the long-run average age (and the
    whole cost) is 1/(1-p). Independent closed form, no solver input.
    """
    params = SystemParams(
        erasure_prob=0.2,
        harvest_prob=0.5,
        energy_weight=0.0,
        backup_cost=2.0,
        battery_cap=3,
        aoi_cap=60,
    )
    v, q = solve(params, SolverConfig())
    assert v.gain == pytest.approx(1.0 / (1.0 - params.erasure_prob), abs=1e-6)
    assert greedy_policy(v, q, params).actions.all()


def test_converged_tables_satisfy_fixed_point(bench_solution):
    v, q = bench_solution
    residual = np.abs(q.values.min(axis=-1) - v.gain - v.values).max()
    assert residual <= 10 * EPSILON
    assert v.final_span <= EPSILON
    assert v.values[0, BENCH.battery_cap] == 0.0  # reference entry pinned
    assert v.gain >= 1.0  # the age term alone contributes one per slot


def test_benchmark_policy_is_threshold_shaped(bench_solution):
    v, q = bench_solution
    thresholds = extract_thresholds(greedy_policy(v, q, BENCH), BENCH)
    assert len(thresholds.thresholds) == BENCH.battery_cap + 1
    for t in thresholds.thresholds:
        assert t is not None and 1 <= t < BENCH.aoi_cap


def test_benchmark_policy_idles_on_fresh_updates(bench_solution):
    """A just-delivered update is not worth re-sending unless the battery is
    full, where idling would waste the next harvested unit."""
    v, q = bench_solution
    policy = greedy_policy(v, q, BENCH)
    for battery in range(1, BENCH.battery_cap):
        assert policy.action(State(1, battery)) == 0
    assert policy.action(State(1, BENCH.battery_cap)) == 1


def test_greedy_matches_thresholds_everywhere(bench_solution):
    v, q = bench_solution
    policy = greedy_policy(v, q, BENCH)
    thresholds = extract_thresholds(policy, BENCH)
    assert np.array_equal(policy.actions, thresholds.to_table(BENCH).actions)


def test_greedy_ties_resolve_to_idle():
    from aoi_energy import ValueTable

    params = SystemParams(
        erasure_prob=0.2,
        harvest_prob=0.5,
        energy_weight=1.0,
        backup_cost=1.0,
        battery_cap=2,
        aoi_cap=4,
    )
    v = ValueTable(values=np.zeros((4, 3)), gain=0.0, iterations=0, final_span=0.0)
    policy = greedy_policy(v, QTable(values=np.zeros((4, 3, 2))), params)
    assert not policy.actions.any()


def test_shortcircuit_extraction_agrees_with_argmin(bench_solution):
    v, q = bench_solution
    fast = greedy_policy_shortcircuit(q, BENCH)
    full = greedy_policy(v, q, BENCH)
    assert np.array_equal(fast.actions, full.actions)


def test_gain_monotone_in_energy_weight():
    gains = []
    for omega in (0.5, 2.0, 8.0):
        params = SystemParams(
            erasure_prob=0.3,
            harvest_prob=0.4,
            energy_weight=omega,
            backup_cost=1.5,
            battery_cap=4,
            aoi_cap=60,
        )
        v, _ = solve(params, SolverConfig())
        gains.append(v.gain)
    assert gains == sorted(gains)


def test_solve_is_bitwise_reproducible():
    va, qa = solve(SMALL, SolverConfig())
    vb, qb = solve(SMALL, SolverConfig())
    assert np.array_equal(va.values, vb.values)
    assert np.array_equal(qa.values, qb.values)
    assert va.gain == vb.gain and va.iterations == vb.iterations


def test_solve_reports_non_convergence_with_span():
    with pytest.raises(ConvergenceError) as err:
        solve(SMALL, SolverConfig(max_iters=3))
    assert err.value.iterations == 3
    assert err.value.span > 0.0


def test_reference_state_only_shifts_values():
    ref = State(5, 0)
    v_default, _ = solve(SMALL, SolverConfig())
    v_moved, _ = solve(SMALL, SolverConfig(reference_state=ref))
    assert v_moved.values[ref.aoi - 1, ref.battery] == 0.0
    assert v_moved.gain == pytest.approx(v_default.gain, abs=1e-6)
    shifted = v_default.values - v_default.values[ref.aoi - 1, ref.battery]
    assert np.allclose(v_moved.values, shifted, atol=1e-6)


def test_solve_rejects_bad_inputs():
    degenerate = SystemParams(
        erasure_prob=0.0,
        harvest_prob=0.5,
        energy_weight=1.0,
        backup_cost=1.0,
        battery_cap=2,
        aoi_cap=4,
    )
    with pytest.raises(ValueError):
        solve(degenerate, SolverConfig())
    with pytest.raises(ValueError):
        solve(SMALL, SolverConfig(reference_state=State(99, 0)))
    with pytest.raises(ValueError):
        SolverConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)


def test_bellman_qvalues_shape_guard():
    with pytest.raises(ValueError):
        bellman_qvalues(np.zeros((3, 3)), SMALL)


# ---------------------------------------------------------------------------
# threshold extraction


def test_extract_thresholds_uniform_tables():
    params = SystemParams(
        erasure_prob=0.2,
        harvest_prob=0.5,
        energy_weight=1.0,
        backup_cost=1.0,
        battery_cap=2,
        aoi_cap=5,
    )
    ones = PolicyTable(np.ones(params.grid_shape, dtype=np.int8))
    assert extract_thresholds(ones, params).thresholds == (1, 1, 1)
    zeros = PolicyTable(np.zeros(params.grid_shape, dtype=np.int8))
    assert extract_thresholds(zeros, params).thresholds == (None, None, None)


def test_extract_thresholds_flags_gap_with_witnesses():
    params = SystemParams(
        erasure_prob=0.2,
        harvest_prob=0.5,
        energy_weight=1.0,
        backup_cost=1.0,
        battery_cap=1,
        aoi_cap=5,
    )
    actions = np.zeros(params.grid_shape, dtype=np.int8)
    actions[:, 0] = [0, 1, 0, 1, 1]  # transmit at age 2, idle again at age 3
    with pytest.raises(ThresholdStructureError) as err:
        extract_thresholds(PolicyTable(actions), params)
    assert err.value.witnesses == [State(2, 0), State(3, 0)]


# ---------------------------------------------------------------------------
# truncation adequacy


def test_truncation_adequacy_at_benchmark(bench_solution):
    v, q = bench_solution
    thresholds = extract_thresholds(greedy_policy(v, q, BENCH), BENCH)
    assert check_truncation_adequacy(thresholds, BENCH, SolverConfig())


def test_truncation_inadequacy_detected():
    v, q = solve(CRAMPED, SolverConfig())
    thresholds = extract_thresholds(greedy_policy(v, q, CRAMPED), CRAMPED)
    assert thresholds.thresholds[0] is None  # the cap hides this threshold
    assert not check_truncation_adequacy(thresholds, CRAMPED, SolverConfig())


def test_truncation_adequate_once_cap_covers_thresholds():
    import dataclasses

    roomy = dataclasses.replace(CRAMPED, aoi_cap=20)
    v, q = solve(roomy, SolverConfig())
    thresholds = extract_thresholds(greedy_policy(v, q, roomy), roomy)
    assert thresholds.thresholds == (5, 4, 2)
    assert check_truncation_adequacy(thresholds, roomy, SolverConfig())


# ---------------------------------------------------------------------------
# value table serialization


def test_value_csv_round_trip(tmp_path, bench_solution):
    v, _ = bench_solution
    path = tmp_path / "values.csv"
    write_value_csv(str(path), v)
    back = read_value_csv(str(path))
    assert back.shape == v.values.shape
    assert np.array_equal(back, v.values)  # repr round-trips floats exactly


def test_value_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        read_value_csv(str(path))


def test_value_csv_rejects_empty(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("delta,q,value\n")
    with pytest.raises(ValueError):
        read_value_csv(str(path))
