"""Small builders shared by the planner, simulator and acceptance tests."""

import numpy as np

from predalloc.planner import PlanningInputs, RadioLimits
from predalloc.traffic import QoSSpec, RTArrivalSpec, VideoTrace, effective_bandwidth, solve_qos_exponent

LIM = RadioLimits()
QOS = solve_qos_exponent(RTArrivalSpec(), QoSSpec(), 5e-3, 15e3)
RT_BETA = QOS.beta
RT_DEMAND = effective_bandwidth(RTArrivalSpec(), QOS.theta)


def video(sizes):
    """Trace whose full-quality segment sizes are ``sizes`` (base 40 %, five 12 % layers)."""
    sizes = np.asarray(sizes, dtype=float)
    return VideoTrace(np.column_stack([0.4 * sizes] + [0.12 * sizes] * 5))


def make_inputs(alpha, n_vod=0, sizes=None, n_rt=0, limits=LIM, bs_index=None, n_bs=1, **kw):
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    n_frames = alpha.shape[1]
    if sizes is None:
        sizes = [np.full(n_frames + 1, 2e6)] * n_vod
    videos = [video(s) for s in sizes]
    bs = np.zeros(alpha.shape, dtype=int) if bs_index is None else bs_index
    return PlanningInputs(alpha, bs, videos, np.full(n_rt, RT_BETA), np.full(n_rt, RT_DEMAND), limits, n_bs, **kw)
