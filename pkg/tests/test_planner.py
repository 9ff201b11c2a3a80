import math

import numpy as np
import pytest

from predalloc.channel import gain_from_distance
from predalloc.numerics import Status
from predalloc.planner import (HeuristicState, QoSAdmissionError, RadioLimits,
                               advance_heuristic_state, apply_multicell_constraints, baseline1_window,
                               baseline2_plan, baseline3_plan, build_problem, degrade_until_feasible,
                               heuristic_segment_decision, plan_heuristic_frame, plan_heuristic_window,
                               plan_optimal_window, plan_rt_per_frame, plan_window, service_rates, solve_problem,
                               write_plan)

import oracles
from helpers import LIM, RT_BETA, RT_DEMAND, make_inputs

REL = 1e-3  # oracle agreement on the objective


def snr(d):
    return float(LIM.snr_per_watt(gain_from_distance(d)))


# -- window-optimal ---------------------------------------------------------------------

@pytest.mark.parametrize("dists", [(150.0, 150.0), (120.0, 260.0), (300.0, 110.0)])
def test_single_vod_window_matches_oracle(dists):
    alpha = [[gain_from_distance(d) for d in dists]]
    sizes = [np.array([1.0e6, 2.2e6, 1.6e6])]
    plan = plan_optimal_window(make_inputs(alpha, 1, sizes))
    assert plan.status is Status.OPTIMAL
    oracle = oracles.vod_window_cost((2.2e6, 1.6e6), [snr(d) for d in dists], LIM)
    assert plan.objective == pytest.approx(oracle, rel=REL)
    assert plan.objective <= oracle * (1 + 1e-6)  # the solver is never worse than the grid


def test_window_plan_meets_cumulative_demand():
    alpha = [[gain_from_distance(d) for d in (300.0, 120.0, 200.0)]]
    sizes = [np.array([1e6, 2e6, 1.5e6, 2.5e6])]
    plan = plan_optimal_window(make_inputs(alpha, 1, sizes))
    rates = service_rates(plan.power, plan.subcarriers, plan.planned_alpha, LIM)[0]
    need = np.cumsum(sizes[0][1:])
    assert np.all(np.cumsum(rates) >= need * (1 - 1e-8))
    # the bad first frame is served at the minimum; the good second frame works ahead
    assert rates[0] == pytest.approx(2e6, rel=1e-6)
    assert rates[1] > 1.5e6


def test_constant_channel_plan_is_frame_symmetric():
    # service is homogeneous in (P, K), so only the per-subcarrier power and the cost are pinned down
    alpha = np.full((1, 3), gain_from_distance(180.0))
    plan = plan_optimal_window(make_inputs(alpha, 1))
    per_sub = plan.power[0] / plan.subcarriers[0]
    np.testing.assert_allclose(per_sub, per_sub[0], rtol=1e-4)
    single = oracles.frame_cost(2e6, snr(180.0), LIM)[0]
    assert plan.objective == pytest.approx(3 * single, rel=REL)


def test_rt_only_window_decomposes_into_frames():
    alpha = [[gain_from_distance(d) for d in (130.0, 240.0, 180.0)],
             [gain_from_distance(d) for d in (260.0, 110.0, 150.0)]]
    inp = make_inputs(alpha, 0, n_rt=2)
    plan = plan_optimal_window(inp)
    per_frame = [plan_rt_per_frame(inp, i) for i in range(3)]
    assert plan.objective == pytest.approx(sum(s.objective for s in per_frame), rel=1e-6)
    np.testing.assert_allclose(plan.power, np.hstack([s.power for s in per_frame]), rtol=1e-4)


# -- per-frame RT --------------------------------------------------------------------------

@pytest.mark.parametrize("d", [110.0, 180.0, 270.0])
def test_single_rt_user_matches_oracle(d):
    sol = plan_rt_per_frame(make_inputs([[gain_from_distance(d)]], 0, n_rt=1), 0)
    oracle, p, k = oracles.frame_cost(RT_DEMAND, snr(d), LIM, RT_BETA)
    assert sol.objective == pytest.approx(oracle, rel=REL)
    assert sol.subcarriers[0, 0] == pytest.approx(k, rel=0.05)


def test_better_channel_needs_less_power():
    a = gain_from_distance(200.0)
    p1 = plan_rt_per_frame(make_inputs([[a]], 0, n_rt=1), 0).power[0, 0]
    p2 = plan_rt_per_frame(make_inputs([[2 * a]], 0, n_rt=1), 0).power[0, 0]
    assert p2 < p1


def test_no_users_is_an_empty_plan():
    inp = make_inputs(np.zeros((0, 2)) + 1.0, 0)
    sol = plan_rt_per_frame(inp, 0)
    assert sol.objective == 0.0 and sol.power.size == 0


def test_rt_admission_failure():
    # a user far beyond the cell cannot reach its effective bandwidth
    with pytest.raises(QoSAdmissionError):
        plan_rt_per_frame(make_inputs([[gain_from_distance(5e4)]], 0, n_rt=1), 0)


# -- heuristic ----------------------------------------------------------------------------

SIZES = [10.0, 11.0, 12.0, 13.0, 14.0, 15.0]


def test_good_channel_ample_buffer_sends_two():
    st = HeuristicState(alpha_med=1.0, last_sent=2, buffer=10.0, q_max=100.0)
    rate, n = heuristic_segment_decision(st, 2.0, SIZES, 2)
    assert n == 2 and rate == pytest.approx(12.0 + 13.0)


def test_good_channel_tight_buffer_sends_one_or_none():
    st = HeuristicState(alpha_med=1.0, last_sent=2, buffer=10.0, q_max=13.0)
    assert heuristic_segment_decision(st, 2.0, SIZES, 2) == (12.0, 1)
    st = HeuristicState(alpha_med=1.0, last_sent=2, buffer=10.0, q_max=10.5)
    assert heuristic_segment_decision(st, 2.0, SIZES, 2) == (0.0, 0)


def test_bad_channel_ahead_sends_nothing():
    st = HeuristicState(alpha_med=1.0, last_sent=4, buffer=30.0)
    assert heuristic_segment_decision(st, 0.5, SIZES, 2) == (0.0, 0)


def test_bad_channel_just_in_time_sends_next_segment():
    st = HeuristicState(alpha_med=1.0, last_sent=2, buffer=10.0)
    assert heuristic_segment_decision(st, 0.5, SIZES, 2) == (12.0, 1)


def test_heuristic_never_requests_beyond_the_window():
    st = HeuristicState(alpha_med=1.0, last_sent=5, buffer=10.0)
    rate, n = heuristic_segment_decision(st, 2.0, SIZES, 5)
    assert n == 1 and rate == 15.0
    st = advance_heuristic_state(st, SIZES, 5, 1)
    assert st.last_sent == 6
    assert heuristic_segment_decision(st, 2.0, SIZES, 6) == (0.0, 0)


def test_buffer_state_advances():
    st = HeuristicState(alpha_med=1.0, last_sent=1, buffer=10.0)
    nxt = advance_heuristic_state(st, SIZES, 1, 2)
    assert nxt.last_sent == 3 and nxt.buffer == pytest.approx(10 + 11 + 12 - 10)


def test_heuristic_frame_one_vod_one_rt_matches_oracle():
    d = (140.0, 230.0)
    inp = make_inputs([[gain_from_distance(d[0])], [gain_from_distance(d[1])]], 1, n_rt=1)
    sol = plan_heuristic_frame(inp, 0, np.array([3.1e6]))
    oracle = oracles.two_user_shared_frame_cost((3.1e6, RT_DEMAND), (snr(d[0]), snr(d[1])), LIM,
                                                (None, RT_BETA))
    assert sol.objective == pytest.approx(oracle, rel=REL)


def test_shared_subcarrier_budget_matches_oracle():
    lim = RadioLimits(k_max=48.0)
    d = (150.0, 210.0)
    inp = make_inputs([[gain_from_distance(d[0])], [gain_from_distance(d[1])]], 2, limits=lim)
    rates = np.array([2.6e6, 2.0e6])
    sol = plan_heuristic_frame(inp, 0, rates)
    assert sol.status is Status.OPTIMAL
    assert sol.subcarriers.sum() == pytest.approx(48.0, rel=1e-6)  # the budget binds
    oracle = oracles.two_user_shared_frame_cost(rates, (snr(d[0]), snr(d[1])), lim)
    assert sol.objective == pytest.approx(oracle, rel=REL)


def test_zero_rates_and_no_rt_is_zero_plan():
    inp = make_inputs([[gain_from_distance(150.0)]], 1)
    sol = plan_heuristic_frame(inp, 0, np.zeros(1))
    assert sol.objective == 0.0
    assert np.all(sol.power == 0) and np.all(sol.subcarriers == 0)


def test_heuristic_frame_with_only_rt_equals_rt_plan():
    inp = make_inputs([[gain_from_distance(170.0)]], 0, n_rt=1)
    a = plan_heuristic_frame(inp, 0, np.zeros(0))
    b = plan_rt_per_frame(inp, 0)
    assert a.objective == pytest.approx(b.objective, rel=1e-12)


def test_heuristic_window_respects_buffer_cap():
    alpha = [[gain_from_distance(d) for d in (300, 120, 110, 250, 130, 280)]]
    sizes = [np.full(7, 2e6)]
    q_max = 5e6
    plan = plan_heuristic_window(make_inputs(alpha, 1, sizes, q_max=q_max))
    assert plan.status is Status.OPTIMAL
    delivered = plan.frame_rates[0] * LIM.frame_duration
    buffer = sizes[0][0] + np.cumsum(delivered) - np.cumsum(sizes[0][:6])
    assert np.all(buffer <= q_max + 1e-6)
    assert np.all(np.cumsum(delivered) >= np.cumsum(sizes[0][1:]) - 1e-6)  # never starves playback


# -- baselines --------------------------------------------------------------------------------

def test_baseline1_equals_optimal_on_constant_instance():
    alpha = np.full((2, 3), gain_from_distance(170.0))
    inp = make_inputs(alpha, 1, n_rt=1)
    assert baseline1_window(inp).objective == pytest.approx(plan_optimal_window(inp).objective, rel=1e-6)


def test_baseline1_matches_heuristic_when_every_frame_is_bad():
    # a falling gain keeps every frame below the window median except the first
    alpha = [[gain_from_distance(d) for d in (100.0, 150.0, 200.0)]]
    inp = make_inputs(alpha, 1, [np.array([1e6, 2e6, 2.1e6, 2.2e6])])
    b1 = baseline1_window(inp)
    assert b1.status is Status.OPTIMAL
    np.testing.assert_allclose(b1.frame_rates[0], [2e6, 2.1e6, 2.2e6])


def test_baseline2_coincides_with_optimal_at_cell_edge():
    edge = gain_from_distance(math.hypot(250, 100))
    alpha = np.array([[gain_from_distance(150.0)] * 2, [edge] * 2])
    inp = make_inputs(alpha, 1, n_rt=1, edge_gain=edge)
    b2 = baseline2_plan(inp)
    opt = plan_optimal_window(inp)
    assert b2.objective == pytest.approx(opt.objective, rel=1e-6)


def test_baseline2_spends_more_rt_power():
    edge = gain_from_distance(math.hypot(250, 100))
    alpha = np.array([[gain_from_distance(150.0)] * 2, [gain_from_distance(120.0), gain_from_distance(200.0)]])
    inp = make_inputs(alpha, 1, n_rt=1, edge_gain=edge)
    b2 = baseline2_plan(inp)
    opt = plan_optimal_window(inp)
    assert np.all(b2.power[1] >= opt.power[1])
    assert b2.adjust.tolist() == [True, False]


def test_baseline3_is_a_fixed_power_lp():
    alpha = [[gain_from_distance(d) for d in (150.0, 220.0)], [gain_from_distance(d) for d in (200.0, 130.0)]]
    inp = make_inputs(alpha, 1, n_rt=1)
    plan = baseline3_plan(inp)
    assert plan.status is Status.OPTIMAL
    np.testing.assert_allclose(plan.power, plan.subcarriers * LIM.p_unit)
    assert np.all(plan.subcarriers.sum(axis=0) <= LIM.k_max * (1 + 1e-9))
    # it cannot beat the jointly optimised plan
    assert plan.objective >= plan_optimal_window(inp).objective * (1 - 1e-9)
    rates = service_rates(plan.power, plan.subcarriers, inp.alpha, LIM)
    assert np.all(np.cumsum(rates[0]) >= np.cumsum([2e6, 2e6]) * (1 - 1e-6))


def test_unknown_policy():
    with pytest.raises(ValueError):
        plan_window("greedy", make_inputs([[1e-10]], 0, n_rt=1))


# -- multi-cell -----------------------------------------------------------------------------------

def test_disjoint_cells_separate():
    lim = RadioLimits(k_max=40.0)
    alpha = np.array([[gain_from_distance(150.0)], [gain_from_distance(160.0)]])
    rates = np.array([2.4e6, 2.4e6])
    joint = make_inputs(alpha, 2, limits=lim, bs_index=np.array([[0], [1]]), n_bs=2)
    sol = plan_heuristic_frame(joint, 0, rates)
    singles = [plan_heuristic_frame(make_inputs(alpha[[m]], 1, limits=lim), 0, rates[[m]]) for m in range(2)]
    assert sol.objective == pytest.approx(sum(s.objective for s in singles), rel=1e-6)
    for m in range(2):
        assert sol.subcarriers[m, 0] == pytest.approx(singles[m].subcarriers[0, 0], rel=1e-4)
    # sharing one cell instead forces a costlier compromise
    shared = plan_heuristic_frame(make_inputs(alpha, 2, limits=lim), 0, rates)
    assert shared.objective > sol.objective


def test_multicell_caps_partition_users():
    alpha = np.full((3, 2), 1e-10)
    bs = np.array([[0, 1], [0, 0], [1, 1]])
    prob = build_problem(alpha, LIM, rt_users=[0, 1, 2], rt_beta=[RT_BETA] * 3, rt_demand=[RT_DEMAND] * 3)
    prob = apply_multicell_constraints(prob, bs, 2)
    A = prob.caps.A
    # 2 frames x 2 cells x (power, subcarriers) rows; every entry appears in exactly one power row
    assert A.shape[0] == 8
    power_rows = A[:, prob.layout.power_index()]
    assert np.all((power_rows != 0).sum(axis=0) == 1)


def test_single_cell_multicell_is_identity():
    alpha = np.array([[gain_from_distance(150.0)] * 2])
    prob = build_problem(alpha, LIM, rt_users=[0], rt_beta=[RT_BETA], rt_demand=[RT_DEMAND])
    again = apply_multicell_constraints(prob, np.zeros((1, 2), dtype=int), 1)
    np.testing.assert_array_equal(prob.caps.A, again.caps.A)
    assert solve_problem(again).objective == pytest.approx(solve_problem(prob).objective, rel=1e-9)


# -- quality degradation ------------------------------------------------------------------------

def test_feasible_plan_keeps_full_quality():
    inp = make_inputs([[gain_from_distance(150.0)] * 2], 1)
    plan, level = degrade_until_feasible(inp, plan_optimal_window)
    assert level == 5 and plan.quality_level == 5


def test_quality_falls_with_load_then_na():
    lim = RadioLimits(k_max=64.0, p_ave=4.0)
    alpha = gain_from_distance(240.0)
    levels = []
    for n in (1, 2, 4, 8, 16):
        inp = make_inputs(np.full((n, 2), alpha), n, limits=lim)
        levels.append(degrade_until_feasible(inp, plan_optimal_window)[1])
    as_num = [-1 if lv is None else lv for lv in levels]
    assert all(a >= b for a, b in zip(as_num, as_num[1:]))
    assert levels[0] == 5 and levels[-1] is None


def test_write_plan(tmp_path):
    inp = make_inputs([[gain_from_distance(150.0)] * 2], 1)
    plan = plan_optimal_window(inp)
    path = tmp_path / "plan.csv"
    write_plan(path, [plan])
    lines = path.read_text().splitlines()
    assert lines[0] == "policy,user,frame,power_W,subcarriers,quality_level"
    assert len(lines) == 3
