"""Planning policies: window-optimal, per-frame RT, buffer-aware heuristic, and three baselines."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .. import linkmodel
from ..numerics.convex import SolverOptions, Status
from ..traffic import N_ENHANCEMENT, VideoTrace, reduce_quality
from .problem import RadioLimits, SolvedAllocation, build_problem, solve_problem

log = logging.getLogger(__name__)

POLICIES = ("optimal", "optimal-adjusted", "heuristic", "baseline1", "baseline2", "baseline3")


class QoSAdmissionError(RuntimeError):
    """RT users cannot be served within the frame's budgets."""


@dataclass
class PlanningInputs:
    """Everything a planner may look at.  VoD users come first, then RT users.

    ``alpha`` holds the gains the planner assumes for the window (predicted);
    ``current_alpha`` the gains revealed at the start of each frame, used by the
    per-frame policies.  Both are (n_users, n_frames).
    """

    alpha: np.ndarray
    bs_index: np.ndarray
    videos: Sequence[VideoTrace]
    rt_beta: np.ndarray
    rt_demand: np.ndarray
    limits: RadioLimits = field(default_factory=RadioLimits)
    n_bs: int = 1
    current_alpha: Optional[np.ndarray] = None
    current_bs_index: Optional[np.ndarray] = None
    q_max: float = math.inf
    edge_gain: Optional[float] = None

    def __post_init__(self):
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        self.bs_index = np.asarray(self.bs_index, dtype=int).reshape(self.alpha.shape)
        self.rt_beta = np.asarray(self.rt_beta, dtype=float).reshape(-1)
        self.rt_demand = np.asarray(self.rt_demand, dtype=float).reshape(-1)
        if self.current_alpha is None:
            self.current_alpha = self.alpha
            self.current_bs_index = self.bs_index
        self.current_alpha = np.asarray(self.current_alpha, dtype=float).reshape(self.alpha.shape)
        if self.current_bs_index is None:
            self.current_bs_index = self.bs_index
        self.current_bs_index = np.asarray(self.current_bs_index, dtype=int).reshape(self.alpha.shape)
        if len(self.videos) + self.rt_beta.size != self.alpha.shape[0]:
            raise ValueError("gain rows must equal the number of VoD plus RT users")
        if self.rt_beta.size != self.rt_demand.size:
            raise ValueError("rt_beta and rt_demand must have equal length")
        if np.any(self.alpha <= 0) or np.any(self.current_alpha <= 0):
            raise ValueError("large-scale gains must be positive")
        for v in self.videos:
            if len(v) < self.n_frames + 1:
                raise ValueError("each video trace needs N_L + 1 segments")

    @property
    def n_vod(self) -> int:
        return len(self.videos)

    @property
    def n_rt(self) -> int:
        return self.rt_beta.size

    @property
    def n_users(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_frames(self) -> int:
        return self.alpha.shape[1]

    @property
    def rt_users(self) -> list[int]:
        return list(range(self.n_vod, self.n_users))

    @property
    def quality_level(self) -> int:
        return min((v.level for v in self.videos), default=N_ENHANCEMENT)

    def segment_sizes(self) -> np.ndarray:
        """(n_vod, N_L + 1) segment sizes R_1..R_{N_L+1} at the current quality level."""
        if not self.videos:
            return np.zeros((0, self.n_frames + 1))
        return np.array([v.sizes[: self.n_frames + 1] for v in self.videos])

    def with_level(self, level: int) -> "PlanningInputs":
        return dataclasses.replace(self, videos=[reduce_quality(v, level) for v in self.videos])


@dataclass
class WindowPlan:
    """Per (user, frame) average power and subcarrier count for one window."""

    policy: str
    power: np.ndarray
    subcarriers: np.ndarray
    planned_alpha: np.ndarray  # gains the powers were computed for
    quality_level: Optional[int]
    objective: float
    status: Status = Status.OPTIMAL
    adjust: Optional[np.ndarray] = None  # per-user flag: rescale power by planned/actual gain at run time
    n_vod: int = 0
    frame_rates: Optional[np.ndarray] = None  # heuristic / baseline 1 VoD rate floors (bits/s)

    @property
    def feasible(self) -> bool:
        return self.status is Status.OPTIMAL and self.quality_level is not None

    def __post_init__(self):
        if self.adjust is None:
            self.adjust = np.zeros(self.power.shape[0], dtype=bool)


# -- helpers ---------------------------------------------------------------

def _vod_window_rows(inputs: PlanningInputs):
    sizes = inputs.segment_sizes()
    rows = []
    for m in range(inputs.n_vod):
        for l in range(1, inputs.n_frames + 1):
            rows.append((m, list(range(l)), float(sizes[m, 1 : l + 1].sum())))
    return rows


def _solve_window(inputs: PlanningInputs, alpha: np.ndarray, opts=None) -> SolvedAllocation:
    problem = build_problem(alpha, inputs.limits, vod_users=range(inputs.n_vod), vod_rows=_vod_window_rows(inputs),
                            rt_users=inputs.rt_users, rt_beta=inputs.rt_beta, rt_demand=inputs.rt_demand,
                            bs_index=inputs.bs_index, n_bs=inputs.n_bs)
    return solve_problem(problem, opts)


def _solve_frame(inputs: PlanningInputs, i: int, vod_rates: np.ndarray, include_rt: bool = True,
                 opts=None) -> SolvedAllocation:
    alpha = inputs.current_alpha[:, [i]]
    dT = inputs.limits.frame_duration
    rows = [(m, [0], float(vod_rates[m]) * dT) for m in range(inputs.n_vod) if vod_rates[m] > 0]
    rt = inputs.rt_users if include_rt else []
    problem = build_problem(alpha, inputs.limits, vod_users=range(inputs.n_vod), vod_rows=rows,
                            rt_users=rt, rt_beta=inputs.rt_beta if include_rt else [],
                            rt_demand=inputs.rt_demand if include_rt else [],
                            bs_index=inputs.current_bs_index[:, [i]], n_bs=inputs.n_bs)
    return solve_problem(problem, opts)


# -- window-optimal ---------------------------------------------------------

def plan_optimal_window(inputs: PlanningInputs, opts: Optional[SolverOptions] = None,
                        policy: str = "optimal") -> WindowPlan:
    """Jointly plan all frames of the window from the predicted gains."""
    sol = _solve_window(inputs, inputs.alpha, opts)
    adjust = np.full(inputs.n_users, policy == "optimal-adjusted")
    return WindowPlan(policy, sol.power, sol.subcarriers, inputs.alpha.copy(), inputs.quality_level,
                      sol.objective, sol.status, adjust, inputs.n_vod)


def plan_rt_per_frame(inputs: PlanningInputs, i: int, opts: Optional[SolverOptions] = None) -> SolvedAllocation:
    """RT users only, frame ``i``, current gains.  Raises QoSAdmissionError when infeasible."""
    sol = _solve_frame(inputs, i, np.zeros(inputs.n_vod), True, opts)
    if sol.status is not Status.OPTIMAL:
        raise QoSAdmissionError(f"RT users cannot be admitted in frame {i}")
    return sol


# -- heuristic ----------------------------------------------------------------

@dataclass
class HeuristicState:
    """Buffer bookkeeping of one VoD user; ``last_sent`` is the 1-based index of the last delivered segment."""

    alpha_med: float
    last_sent: int
    buffer: float
    q_max: float = math.inf

    def __post_init__(self):
        if not 0 <= self.buffer <= self.q_max * (1 + 1e-12):
            raise ValueError("buffer occupancy must lie in [0, q_max]")


def heuristic_segment_decision(state: HeuristicState, alpha_i: float, sizes: Sequence[float], i: int,
                               frame_duration: float = 1.0):
    """Number of segments to send in (1-based) frame ``i`` and the required rate.

    ``sizes[k-1]`` is R_k.  Returns ``(rate, n_segments)``; the state is not modified.
    Segments beyond the end of the window are never requested.
    """
    last = state.last_sent
    top = len(sizes)

    def seg(k):
        return sizes[k - 1] if k <= top else math.inf

    played = sizes[i - 1]
    if alpha_i >= state.alpha_med:
        two = seg(last + 1) + seg(last + 2)
        if last + 2 <= top and state.buffer + two - played <= state.q_max:
            return two / frame_duration, 2
        if last + 1 <= top and state.buffer + seg(last + 1) - played <= state.q_max:
            return seg(last + 1) / frame_duration, 1
        return 0.0, 0
    if last >= i + 1 or last + 1 > top:
        return 0.0, 0
    return seg(i + 1) / frame_duration, 1


def advance_heuristic_state(state: HeuristicState, sizes: Sequence[float], i: int, n_segments: int) -> HeuristicState:
    sent = float(sum(sizes[state.last_sent: state.last_sent + n_segments]))
    return HeuristicState(state.alpha_med, state.last_sent + n_segments,
                          max(state.buffer + sent - sizes[i - 1], 0.0), state.q_max)


def plan_heuristic_frame(inputs: PlanningInputs, i: int, rates: np.ndarray,
                         opts: Optional[SolverOptions] = None) -> SolvedAllocation:
    """Per-frame program with VoD rate floors ``rates`` (bits/s) and RT effective-capacity floors."""
    return _solve_frame(inputs, i, np.asarray(rates, dtype=float), True, opts)


def _per_frame_window(inputs: PlanningInputs, policy: str, opts=None) -> WindowPlan:
    sizes = inputs.segment_sizes()
    dT = inputs.limits.frame_duration
    M, N = inputs.n_users, inputs.n_frames
    power = np.zeros((M, N))
    count = np.zeros((M, N))
    rates = np.zeros((inputs.n_vod, N))
    objective = 0.0
    states = []
    if policy == "heuristic":
        from ..channel import median_gain
        for m in range(inputs.n_vod):
            states.append(HeuristicState(median_gain(inputs.alpha[m]), 1, float(sizes[m, 0]), inputs.q_max))
    for i in range(1, N + 1):
        if policy == "heuristic":
            decisions = [heuristic_segment_decision(states[m], inputs.current_alpha[m, i - 1], sizes[m], i, dT)
                         for m in range(inputs.n_vod)]
            nseg = np.array([d[1] for d in decisions], dtype=int)
        else:
            nseg = np.ones(inputs.n_vod, dtype=int)
        good = np.array([inputs.current_alpha[m, i - 1] >= states[m].alpha_med for m in range(inputs.n_vod)]) \
            if policy == "heuristic" else np.zeros(inputs.n_vod, dtype=bool)

        def rates_for(ns):
            if policy != "heuristic":
                return sizes[:, i] / dT if inputs.n_vod else np.zeros(0)
            out = np.zeros(inputs.n_vod)
            for m in range(inputs.n_vod):
                last = states[m].last_sent
                out[m] = sizes[m, last: last + ns[m]].sum() / dT
            return out

        sol = _solve_frame(inputs, i - 1, rates_for(nseg), True, opts)
        if sol.status is not Status.OPTIMAL and policy == "heuristic":
            # shed extra segments of good-channel users: two -> one, then one -> zero where no stall follows
            for stage in (2, 1):
                shed = good & (nseg == stage)
                if stage == 1:
                    shed &= np.array([states[m].last_sent >= i + 1 for m in range(inputs.n_vod)], dtype=bool)
                if not shed.any():
                    continue
                nseg = np.where(shed, stage - 1, nseg)
                sol = _solve_frame(inputs, i - 1, rates_for(nseg), True, opts)
                if sol.status is Status.OPTIMAL:
                    break
        if sol.status is not Status.OPTIMAL:
            return WindowPlan(policy, power, count, inputs.current_alpha.copy(), inputs.quality_level, math.inf,
                              sol.status, None, inputs.n_vod, rates)
        r = rates_for(nseg)
        rates[:, i - 1] = r
        power[:, i - 1] = sol.power[:, 0]
        count[:, i - 1] = sol.subcarriers[:, 0]
        objective += sol.objective
        if policy == "heuristic":
            states = [advance_heuristic_state(states[m], sizes[m], i, int(nseg[m])) for m in range(inputs.n_vod)]
    return WindowPlan(policy, power, count, inputs.current_alpha.copy(), inputs.quality_level, objective,
                      Status.OPTIMAL, None, inputs.n_vod, rates)


def plan_heuristic_window(inputs: PlanningInputs, opts: Optional[SolverOptions] = None) -> WindowPlan:
    return _per_frame_window(inputs, "heuristic", opts)


# -- baselines ----------------------------------------------------------------

def baseline1_plan(inputs: PlanningInputs, i: int, opts: Optional[SolverOptions] = None) -> SolvedAllocation:
    """Frame ``i`` (0-based) delivers exactly the segment played next: rate R_{i+2}/dT in 1-based terms."""
    sizes = inputs.segment_sizes()
    rates = sizes[:, i + 1] / inputs.limits.frame_duration if inputs.n_vod else np.zeros(0)
    return _solve_frame(inputs, i, rates, True, opts)


def baseline1_window(inputs: PlanningInputs, opts: Optional[SolverOptions] = None) -> WindowPlan:
    return _per_frame_window(inputs, "baseline1", opts)


def baseline2_plan(inputs: PlanningInputs, opts: Optional[SolverOptions] = None) -> WindowPlan:
    """Window plan with every RT user assumed at the cell edge in every frame."""
    if inputs.edge_gain is None:
        raise ValueError("baseline 2 needs the cell-edge gain")
    alpha = inputs.alpha.copy()
    alpha[inputs.n_vod:, :] = inputs.edge_gain
    sol = _solve_window(inputs, alpha, opts)
    adjust = np.zeros(inputs.n_users, dtype=bool)
    adjust[: inputs.n_vod] = True
    return WindowPlan("baseline2", sol.power, sol.subcarriers, alpha, inputs.quality_level, sol.objective,
                      sol.status, adjust, inputs.n_vod)


def baseline3_plan(inputs: PlanningInputs) -> WindowPlan:
    """Bandwidth-only plan with the total power spread evenly over all subcarriers.

    With the per-subcarrier power fixed at P_ave/K_max, both service maps are
    constants per entry and the program is a linear program in K.
    """
    lim = inputs.limits
    p_sub = lim.p_ave / lim.k_max
    M, N = inputs.n_users, inputs.n_frames
    x = lim.snr_per_watt(inputs.alpha) * p_sub
    per_k = np.empty((M, N))
    if inputs.n_vod:
        per_k[: inputs.n_vod] = linkmodel.vod_terms(x[: inputs.n_vod], lim.bandwidth)[0]
    if inputs.n_rt:
        beta = np.broadcast_to(inputs.rt_beta[:, None], (inputs.n_rt, N))
        per_k[inputs.n_vod:] = linkmodel.rt_terms(x[inputs.n_vod:], beta, lim.bandwidth)[0]
    n = M * N
    idx = np.arange(n).reshape(M, N)
    A, b = [], []
    sizes = inputs.segment_sizes()
    for m in range(inputs.n_vod):
        for l in range(1, N + 1):
            row = np.zeros(n)
            row[idx[m, :l]] = -lim.frame_duration * per_k[m, :l]
            A.append(row)
            b.append(-float(sizes[m, 1: l + 1].sum()))
    for j, m in enumerate(inputs.rt_users):
        for i in range(N):
            row = np.zeros(n)
            row[idx[m, i]] = -per_k[m, i]
            A.append(row)
            b.append(-float(inputs.rt_demand[j]))
    for i in range(N):
        for c in range(inputs.n_bs):
            members = [m for m in range(M) if inputs.bs_index[m, i] == c]
            if members:
                row = np.zeros(n)
                row[idx[members, i]] = 1.0
                A.append(row)
                b.append(lim.k_max)
    cost = np.full(n, p_sub / lim.rho + lim.p_c)
    if not A:
        return WindowPlan("baseline3", np.zeros((M, N)), np.zeros((M, N)), inputs.alpha.copy(),
                          inputs.quality_level, 0.0, Status.OPTIMAL, np.ones(M, dtype=bool), inputs.n_vod)
    A = np.array(A)
    b = np.array(b)
    # rows are scaled to unit norm so the LP tolerances act relatively
    scale = np.maximum(np.abs(A).max(axis=1), 1e-300)
    res = linprog(cost, A_ub=A / scale[:, None], b_ub=b / scale, bounds=[(0, None)] * n, method="highs")
    if res.status != 0:
        return WindowPlan("baseline3", np.zeros((M, N)), np.zeros((M, N)), inputs.alpha.copy(),
                          inputs.quality_level, math.inf, Status.INFEASIBLE, np.ones(M, dtype=bool), inputs.n_vod)
    k = np.maximum(res.x.reshape(M, N), 0.0)
    return WindowPlan("baseline3", p_sub * k, k, inputs.alpha.copy(), inputs.quality_level, float(res.fun),
                      Status.OPTIMAL, np.ones(M, dtype=bool), inputs.n_vod)


# -- dispatch and degradation ---------------------------------------------------

def plan_window(policy: str, inputs: PlanningInputs, opts: Optional[SolverOptions] = None) -> WindowPlan:
    if policy in ("optimal", "optimal-adjusted"):
        return plan_optimal_window(inputs, opts, policy)
    if policy == "heuristic":
        return plan_heuristic_window(inputs, opts)
    if policy == "baseline1":
        return baseline1_window(inputs, opts)
    if policy == "baseline2":
        return baseline2_plan(inputs, opts)
    if policy == "baseline3":
        return baseline3_plan(inputs)
    raise ValueError(f"unknown policy {policy!r}; expected one of {', '.join(POLICIES)}")


def degrade_until_feasible(inputs: PlanningInputs, planner: Callable[[PlanningInputs], WindowPlan],
                           start_level: int = N_ENHANCEMENT):
    """Lower the quality of all VoD users together until ``planner`` succeeds.

    Returns ``(plan, level)``; ``level`` is None (and the last attempt is
    returned) when even the base layer alone cannot be served.
    """
    plan = None
    for level in range(start_level, -1, -1):
        plan = planner(inputs.with_level(level))
        if plan.status is Status.OPTIMAL:
            return plan, level
        if inputs.n_vod == 0:
            break
    if plan is not None:
        plan.quality_level = None
    return plan, None


PLAN_COLUMNS = ("policy", "user", "frame", "power_W", "subcarriers", "quality_level")


def write_plan(path, plans: Sequence[WindowPlan], append: bool = False) -> None:
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(PLAN_COLUMNS)
        for plan in plans:
            level = "NA" if plan.quality_level is None else plan.quality_level
            for m in range(plan.power.shape[0]):
                for i in range(plan.power.shape[1]):
                    w.writerow([plan.policy, m, i, repr(float(plan.power[m, i])),
                                repr(float(plan.subcarriers[m, i])), level])
