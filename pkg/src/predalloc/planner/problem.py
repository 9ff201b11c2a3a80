"""Assembly of the average-power allocation programs shared by all planning policies.

Decision variables come in pairs per active (user, frame) entry: the average
transmit power, measured in units of ``p_unit = P_ave / K_max`` so that it has
the same magnitude as the subcarrier count, and the (continuous) subcarrier
count itself.  Every service constraint is a sum of perspective terms

    K * f(a * u / K)

where ``f`` is the per-subcarrier VoD average rate or the RT log-Laplace map
and ``a`` converts ``u / K`` into the normalised SNR of the entry.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import linkmodel
from ..numerics.convex import (ConstraintBlock, ConvexProgram, LinearBlock, SolverOptions, Status,
                               minimize_convex)


@dataclass(frozen=True)
class RadioLimits:
    """Per-BS limits and the power model.  Defaults follow a 512-subcarrier, 15 kHz OFDMA carrier."""

    p_ave: float = 40.0
    k_max: float = 512.0
    p_c: float = 72e-3 * 15e3 / 1e6
    p_0: float = 136e-3 * 512 * 15e3 / 1e6
    rho: float = 0.388
    bandwidth: float = 15e3
    noise_power: float = 10 ** (-173.0 / 10) * 1e-3 * 15e3
    phi: float = 1.0
    frame_duration: float = 1.0

    def __post_init__(self):
        if not self.p_ave > 0:
            raise ValueError("p_ave must be positive")
        if not self.k_max >= 1:
            raise ValueError("k_max must be >= 1")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if self.p_c < 0 or self.p_0 < 0:
            raise ValueError("circuit powers must be nonnegative")
        if self.phi < 1:
            raise ValueError("phi must be >= 1")

    @property
    def p_unit(self) -> float:
        return self.p_ave / self.k_max

    def link(self, alpha: float) -> linkmodel.LinkParams:
        return linkmodel.LinkParams(alpha=alpha, phi=self.phi, noise_power=self.noise_power,
                                    bandwidth=self.bandwidth)

    def snr_per_watt(self, alpha):
        """alpha / (phi sigma0^2): normalised SNR produced by one watt per subcarrier."""
        return np.asarray(alpha, dtype=float) / (self.phi * self.noise_power)


VOD = "vod"
RT = "rt"


@dataclass
class EntryLayout:
    """Maps active (user, frame) pairs to variable positions."""

    users: np.ndarray
    frames: np.ndarray
    n_users: int
    n_frames: int

    @property
    def size(self) -> int:
        return self.users.size

    @property
    def dimension(self) -> int:
        return 2 * self.size

    def power_index(self) -> np.ndarray:
        return 2 * np.arange(self.size)

    def count_index(self) -> np.ndarray:
        return 2 * np.arange(self.size) + 1

    @classmethod
    def from_mask(cls, active: np.ndarray) -> "EntryLayout":
        users, frames = np.nonzero(active)
        return cls(users, frames, active.shape[0], active.shape[1])


class PerspectiveBlock(ConstraintBlock):
    """Rows ``sum_e S[r, e] * K_e f_e(a_e u_e / K_e) - 1 >= 0``.

    ``kind`` selects the per-subcarrier map of each entry: VoD average rate or
    the RT effective-capacity integrand (which needs ``beta``).
    """

    def __init__(self, layout: EntryLayout, weights: np.ndarray, gain: np.ndarray,
                 is_rt: np.ndarray, beta: np.ndarray, bandwidth: float):
        self.layout = layout
        self.S = np.asarray(weights, dtype=float)
        self.size = self.S.shape[0]
        self.gain = np.asarray(gain, dtype=float)
        self.is_rt = np.asarray(is_rt, dtype=bool)
        self.beta = np.asarray(beta, dtype=float)
        self.bandwidth = bandwidth
        self._iu = layout.power_index()
        self._ik = layout.count_index()
        # last water levels, only used to warm-start the level solver
        self._nu = np.full(layout.size, np.nan)

    def _terms(self, x):
        f = np.empty_like(x)
        d1 = np.empty_like(x)
        d2 = np.empty_like(x)
        nu = np.empty_like(x)
        v = ~self.is_rt
        if v.any():
            f[v], d1[v], d2[v], nu[v] = linkmodel.vod_terms(x[v], self.bandwidth, self._nu[v])
        if self.is_rt.any():
            r = self.is_rt
            f[r], d1[r], d2[r], nu[r] = linkmodel.rt_terms(x[r], self.beta[r], self.bandwidth, self._nu[r])
        self._nu = nu
        return f, d1, d2

    def _split(self, z):
        u = z[self._iu]
        k = z[self._ik]
        return u, k, self.gain * u / k

    def values(self, z):
        u, k, x = self._split(z)
        f, _, _ = self._terms(x)
        return self.S @ (k * f) - 1.0

    def derivatives(self, z):
        u, k, x = self._split(z)
        f, d1, d2 = self._terms(x)
        vals = self.S @ (k * f) - 1.0
        n = z.size
        J = np.zeros((self.size, n))
        J[:, self._iu] = self.S * (self.gain * d1)
        J[:, self._ik] = self.S * (f - x * d1)
        a = self.gain

        def weighted(w):
            c = (self.S.T @ w) * d2 / k
            H = np.zeros((n, n))
            H[self._iu, self._iu] = c * a * a
            H[self._iu, self._ik] = -c * a * x
            H[self._ik, self._iu] = -c * a * x
            H[self._ik, self._ik] = c * x * x
            return H

        return vals, J, weighted


@dataclass
class AllocationProblem:
    """A convex average-power allocation problem over a set of frames."""

    layout: EntryLayout
    limits: RadioLimits
    service: Optional[PerspectiveBlock]
    caps: LinearBlock
    alpha: np.ndarray  # (n_users, n_frames) gains assumed by the plan
    bs_index: np.ndarray  # (n_users, n_frames)
    n_bs: int = 1
    start: Optional[np.ndarray] = None

    def objective_gradient(self) -> np.ndarray:
        c = np.zeros(self.layout.dimension)
        c[self.layout.power_index()] = self.limits.p_unit / self.limits.rho
        c[self.layout.count_index()] = self.limits.p_c
        return c

    def program(self) -> ConvexProgram:
        blocks = [b for b in (self.service, self.caps) if b is not None and b.size > 0]
        return ConvexProgram(self.layout.dimension, self.objective_gradient(), blocks,
                             box_lower=np.zeros(self.layout.dimension), start=self.start)


def cap_block(layout: EntryLayout, limits: RadioLimits, bs_index: Optional[np.ndarray] = None,
              n_bs: int = 1) -> LinearBlock:
    """Per-frame (and per-BS) power and subcarrier budgets, normalised to 1."""
    if bs_index is None:
        cell = np.zeros(layout.size, dtype=int)
        n_bs = 1
    else:
        cell = np.asarray(bs_index)[layout.users, layout.frames]
    group = layout.frames * n_bs + cell
    groups = np.unique(group)
    rows = []
    for g in groups:
        members = np.nonzero(group == g)[0]
        p_row = np.zeros(layout.dimension)
        p_row[2 * members] = -limits.p_unit / limits.p_ave
        k_row = np.zeros(layout.dimension)
        k_row[2 * members + 1] = -1.0 / limits.k_max
        rows += [p_row, k_row]
    if not rows:
        return LinearBlock(np.zeros((0, layout.dimension)), np.zeros(0))
    A = np.array(rows)
    return LinearBlock(A, np.ones(A.shape[0]))


def apply_multicell_constraints(problem: AllocationProblem, bs_index: np.ndarray, n_bs: int) -> AllocationProblem:
    """Replace the shared budgets with one power and one subcarrier budget per (frame, BS)."""
    bs_index = np.asarray(bs_index, dtype=int)
    if bs_index.shape != (problem.layout.n_users, problem.layout.n_frames):
        raise ValueError("association array must be (n_users, n_frames)")
    caps = cap_block(problem.layout, problem.limits, bs_index, n_bs)
    start = _default_start(problem.layout, problem.limits, bs_index, n_bs)
    return dataclasses.replace(problem, caps=caps, bs_index=bs_index, n_bs=n_bs, start=start)


def _default_start(layout: EntryLayout, limits: RadioLimits, bs_index, n_bs) -> np.ndarray:
    cell = np.zeros(layout.size, dtype=int) if bs_index is None else np.asarray(bs_index)[layout.users, layout.frames]
    group = layout.frames * max(n_bs, 1) + cell
    counts = np.bincount(group, minlength=group.max() + 1 if group.size else 0)
    share = 0.5 * limits.k_max / counts[group] if group.size else np.zeros(0)
    z = np.empty(layout.dimension)
    z[layout.power_index()] = share
    z[layout.count_index()] = share
    return z


def build_problem(alpha: np.ndarray, limits: RadioLimits, *,
                  vod_users: Sequence[int] = (), vod_rows: Sequence[tuple[int, Sequence[int], float]] = (),
                  rt_users: Sequence[int] = (), rt_beta: Sequence[float] = (), rt_demand: Sequence[float] = (),
                  rt_frames: Optional[Sequence[int]] = None,
                  bs_index: Optional[np.ndarray] = None, n_bs: int = 1) -> AllocationProblem:
    """Generic builder.

    ``vod_rows`` lists ``(user, frames, bits)``: the user must receive at least
    ``bits`` over the listed frames (each frame contributing ``dT * K F_D``).
    RT users need ``K h >= E_B`` in each of ``rt_frames`` (default: all frames).
    """
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    n_users, n_frames = alpha.shape
    rt_frames = list(range(n_frames)) if rt_frames is None else list(rt_frames)
    active = np.zeros((n_users, n_frames), dtype=bool)
    for m, frames, bits in vod_rows:
        if bits > 0:
            active[m, list(frames)] = True
    for m in rt_users:
        active[m, rt_frames] = True
    layout = EntryLayout.from_mask(active)
    pos = {(int(m), int(i)): e for e, (m, i) in enumerate(zip(layout.users, layout.frames))}

    is_rt = np.zeros(layout.size, dtype=bool)
    beta = np.ones(layout.size)
    rt_set = {int(m): (float(b), float(d)) for m, b, d in zip(rt_users, rt_beta, rt_demand)}
    for e, m in enumerate(layout.users):
        if int(m) in rt_set:
            is_rt[e] = True
            beta[e] = rt_set[int(m)][0]

    rows = []
    dT = limits.frame_duration
    for m, frames, bits in vod_rows:
        if bits <= 0:
            continue
        r = np.zeros(layout.size)
        for i in frames:
            r[pos[(int(m), int(i))]] = dT / bits
        rows.append(r)
    for m in rt_users:
        _, demand = rt_set[int(m)]
        for i in rt_frames:
            r = np.zeros(layout.size)
            r[pos[(int(m), int(i))]] = 1.0 / demand
            rows.append(r)

    gain = limits.snr_per_watt(alpha[layout.users, layout.frames]) * limits.p_unit
    service = None
    if rows:
        service = PerspectiveBlock(layout, np.array(rows), gain, is_rt, beta, limits.bandwidth)
    if bs_index is None:
        bs_index = np.zeros((n_users, n_frames), dtype=int)
        n_bs = 1
    bs_index = np.asarray(bs_index, dtype=int)
    caps = cap_block(layout, limits, bs_index, n_bs)
    return AllocationProblem(layout, limits, service, caps, alpha, bs_index, n_bs,
                             _default_start(layout, limits, bs_index, n_bs))


@dataclass
class SolvedAllocation:
    status: Status
    power: np.ndarray  # (n_users, n_frames) W
    subcarriers: np.ndarray  # (n_users, n_frames)
    objective: float  # sum over frames of P/rho + P_c K (W)
    max_violation: float = 0.0


def solve_problem(problem: AllocationProblem, opts: Optional[SolverOptions] = None) -> SolvedAllocation:
    lay = problem.layout
    power = np.zeros((lay.n_users, lay.n_frames))
    count = np.zeros((lay.n_users, lay.n_frames))
    if lay.size == 0:
        return SolvedAllocation(Status.OPTIMAL, power, count, 0.0)
    res = minimize_convex(problem.program(), opts)
    z = res.point
    power[lay.users, lay.frames] = z[lay.power_index()] * problem.limits.p_unit
    count[lay.users, lay.frames] = z[lay.count_index()]
    viol = 0.0
    if res.status is Status.OPTIMAL:
        vals = problem.program().constraint_values(z)
        viol = float(max(0.0, -vals.min())) if vals.size else 0.0
    return SolvedAllocation(res.status, power, count, float(res.objective), viol)


def frame_energy_objective(power: np.ndarray, subcarriers: np.ndarray, limits: RadioLimits) -> float:
    return float(np.sum(power) / limits.rho + limits.p_c * np.sum(subcarriers))


def service_rates(power: np.ndarray, subcarriers: np.ndarray, alpha: np.ndarray, limits: RadioLimits,
                  beta: Optional[np.ndarray] = None) -> np.ndarray:
    """Planned per-entry rate: K F_D for VoD rows (beta None/0) or effective capacity for RT rows."""
    power = np.asarray(power, dtype=float)
    k = np.asarray(subcarriers, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), power.shape)
    live = (power > 0) & (k > 0)
    x = np.where(live, limits.snr_per_watt(alpha) * power / np.where(live, k, 1.0), 1.0)
    if beta is None:
        f = linkmodel.vod_terms(x, limits.bandwidth)[0]
    else:
        b = np.broadcast_to(np.asarray(beta, dtype=float), power.shape)
        f = linkmodel.rt_terms(x, b, limits.bandwidth)[0]
    return np.where(live, k * f, 0.0)


def cell_edge_gain(geometry) -> float:
    from ..channel import gain_from_distance
    return float(gain_from_distance(geometry.cell_radius))


__all__ = [
    "RadioLimits", "EntryLayout", "PerspectiveBlock", "AllocationProblem", "SolvedAllocation",
    "build_problem", "solve_problem", "apply_multicell_constraints", "cap_block",
    "frame_energy_objective", "service_rates", "cell_edge_gain", "VOD", "RT",
]
