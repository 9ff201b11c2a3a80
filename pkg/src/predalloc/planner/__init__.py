"""Planning policies and the convex programs behind them."""

from .policies import (POLICIES, HeuristicState, PlanningInputs, QoSAdmissionError, WindowPlan,
                       advance_heuristic_state, baseline1_plan, baseline1_window, baseline2_plan, baseline3_plan,
                       degrade_until_feasible, heuristic_segment_decision, plan_heuristic_frame,
                       plan_heuristic_window, plan_optimal_window, plan_rt_per_frame, plan_window, write_plan)
from .problem import (AllocationProblem, RadioLimits, SolvedAllocation, apply_multicell_constraints, build_problem,
                      service_rates, solve_problem)

__all__ = [
    "POLICIES", "HeuristicState", "PlanningInputs", "QoSAdmissionError", "WindowPlan", "advance_heuristic_state",
    "baseline1_plan", "baseline1_window", "baseline2_plan", "baseline3_plan", "degrade_until_feasible",
    "heuristic_segment_decision", "plan_heuristic_frame", "plan_heuristic_window", "plan_optimal_window",
    "plan_rt_per_frame", "plan_window", "write_plan", "AllocationProblem", "RadioLimits", "SolvedAllocation",
    "apply_multicell_constraints", "build_problem", "service_rates", "solve_problem",
]
