"""Slot-level Monte Carlo engine: applies window plans to sampled fading and traffic.

Each frame of ``N_S`` slots is simulated per user with the water-filling law
of its service.  VoD deliveries feed a playback model that counts stalls;
RT service capacities feed a fluid FIFO queue whose per-bit delays are
audited against the delay bound once the whole run is known.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import linkmodel
from .channel import STREAM_ARRIVALS, FadingSampler, philox
from .planner.policies import WindowPlan
from .planner.problem import RadioLimits
from .traffic import RTArrivalSpec, SlotArrivals, sample_arrivals

VOD_DELIVERY_MODES = ("coded", "realized")


@dataclass(frozen=True)
class SimSettings:
    slot_duration: float = 5e-3
    slots_per_frame: int = 200
    d_max: float = 0.05
    vod_delivery: str = "coded"

    def __post_init__(self):
        if self.slot_duration <= 0 or self.slots_per_frame < 1:
            raise ValueError("slot duration and slots per frame must be positive")
        if self.vod_delivery not in VOD_DELIVERY_MODES:
            raise ValueError(f"vod_delivery must be one of {VOD_DELIVERY_MODES}")


@dataclass
class EnergyLedger:
    transmit_J: float = 0.0
    circuit_J: float = 0.0
    fixed_J: float = 0.0

    @property
    def total_J(self) -> float:
        return self.transmit_J + self.circuit_J + self.fixed_J

    def __iadd__(self, other: "EnergyLedger"):
        self.transmit_J += other.transmit_J
        self.circuit_J += other.circuit_J
        self.fixed_J += other.fixed_J
        return self


def compute_ee(ledger: EnergyLedger, bits: float) -> float:
    """Bits per joule; 0 when no energy was spent."""
    total = ledger.total_J
    return float(bits / total) if total > 0 else 0.0


def adjust_plan_runtime(power, alpha_hat, alpha):
    """Rescale planned power so that (actual gain) x (power) equals the planned product."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("estimated gain must be positive")
    out = np.asarray(alpha_hat, dtype=float) * np.asarray(power, dtype=float) / alpha
    return float(out) if out.ndim == 0 else out


def active_counts(k: float, n_slots: int) -> np.ndarray:
    """Number of active subcarriers in each slot so that their mean over the frame is ``k``.

    A fractional count is time-shared: floor(k) or floor(k)+1 subcarriers, with
    the extra one spread evenly over the frame.
    """
    if k <= 0:
        return np.zeros(n_slots, dtype=int)
    j = np.arange(n_slots + 1)
    edges = np.floor(j * k + 1e-9)
    return np.diff(edges).astype(int)


# -- VoD playback ---------------------------------------------------------------

@dataclass
class PlaybackResult:
    stalls: int
    stall_time: float
    delivered_bits: float


def playback_stalls(delivered: np.ndarray, sizes: np.ndarray, frame_duration: float = 1.0,
                    rel_tol: float = 1e-7) -> PlaybackResult:
    """Stall count and total rebuffering time for one user over one window.

    ``delivered[i]`` bits arrive uniformly during frame i (0-based);
    ``sizes`` holds R_1..R_{N+1} with R_1 already buffered.  Segment k
    (1-based, k >= 2) may start once all of R_2..R_k have arrived; a stall
    occurs when that happens later than the end of the previous segment.
    """
    delivered = np.asarray(delivered, dtype=float)
    n = delivered.size
    edges = np.concatenate([[0.0], np.cumsum(delivered)])
    need = np.cumsum(sizes[1:])  # bits needed before segment k = 2..N+1 starts
    scale = max(float(np.max(sizes)), 1.0)
    stalls = 0
    stall_time = 0.0
    clock = frame_duration  # end of segment 1
    horizon = n * frame_duration
    for k_idx, req in enumerate(need):
        # shortfalls below rel_tol of the cumulative demand are numerical noise
        tol = rel_tol * max(req, scale)
        if edges[-1] + tol < req:
            # never completes within the window: a stall that lasts to the window end
            if clock < horizon:
                stalls += 1
                stall_time += horizon - clock
            break
        # first time the delivery curve reaches req - tol
        target = max(req - tol, 0.0)
        f = int(np.searchsorted(edges, target, side="left"))
        if f == 0:
            ready = 0.0
        else:
            lo, hi = edges[f - 1], edges[f]
            frac = 1.0 if hi <= lo else (target - lo) / (hi - lo)
            ready = (f - 1 + frac) * frame_duration
        if ready > clock + rel_tol * frame_duration:
            stalls += 1
            stall_time += ready - clock
            clock = ready
        clock += frame_duration
    return PlaybackResult(stalls, stall_time, float(edges[-1]))


# -- RT queue -------------------------------------------------------------------

@dataclass
class RTStats:
    arrived_bits: float
    departed_bits: float
    backlog_bits: float
    counted_bits: float
    violating_bits: float
    slots: int

    @property
    def violation_probability(self) -> float:
        return self.violating_bits / self.counted_bits if self.counted_bits > 0 else 0.0


class RTQueue:
    """Fluid FIFO queue of one RT user, audited per bit.

    Discrete-time convention: bits arriving during slot j join the queue at
    the start of slot j and may be served in that slot; a bit served in slot
    j' has waited (j' - j) slots, and violates the bound when
    (j' - j) * tau > d_max.  Service capacities (bits per slot) and packet
    arrivals are appended block by block.  ``step`` serves one slot
    explicitly (reference path); ``stats`` evaluates the whole record in
    closed form.
    """

    def __init__(self, slot_duration: float, d_max: float):
        self.tau = slot_duration
        self.d_max = d_max
        self._cap: list[np.ndarray] = []
        self._times: list[np.ndarray] = []
        self._sizes: list[np.ndarray] = []
        self.n_slots = 0
        # explicit FIFO state for ``step``
        self.fifo: deque = deque()
        self.served_bits = 0.0
        self.arrived_bits = 0.0

    def extend(self, capacity: np.ndarray, arrivals: SlotArrivals) -> None:
        capacity = np.asarray(capacity, dtype=float)
        t0 = self.n_slots * self.tau
        self._cap.append(capacity)
        self._times.append(t0 + arrivals.times)
        self._sizes.append(arrivals.sizes)
        self.n_slots += capacity.size

    def step(self, capacity_bits: float, arrival_times: Sequence[float], arrival_sizes: Sequence[float]) -> float:
        """Enqueue this slot's arrivals, then serve the slot FIFO (fluid within packets)."""
        for t, b in zip(arrival_times, arrival_sizes):
            self.fifo.append((t, float(b)))
            self.arrived_bits += float(b)
        budget = capacity_bits
        served = 0.0
        while budget > 0 and self.fifo:
            t, rem = self.fifo[0]
            take = min(rem, budget)
            budget -= take
            served += take
            if take >= rem:
                self.fifo.popleft()
            else:
                self.fifo[0] = (t, rem - take)
        self.served_bits += served
        return served

    @property
    def backlog(self) -> float:
        return float(sum(r for _, r in self.fifo))

    def departures(self) -> np.ndarray:
        """Cumulative departed bits at the end of each slot."""
        cap = np.concatenate(self._cap) if self._cap else np.zeros(0)
        times = np.concatenate(self._times) if self._times else np.zeros(0)
        sizes = np.concatenate(self._sizes) if self._sizes else np.zeros(0)
        n = cap.size
        slot_of = np.minimum((times / self.tau).astype(np.int64), max(n - 1, 0))
        per_slot = np.bincount(slot_of, weights=sizes, minlength=n)[:n] if n else np.zeros(0)
        eligible = np.cumsum(per_slot)
        C = np.cumsum(cap)
        return C + np.minimum(0.0, np.minimum.accumulate(eligible - C)) if n else np.zeros(0)

    def stats(self) -> RTStats:
        times = np.concatenate(self._times) if self._times else np.zeros(0)
        sizes = np.concatenate(self._sizes) if self._sizes else np.zeros(0)
        D = self.departures()
        n = D.size
        arrived = float(sizes.sum())
        departed = float(D[-1]) if n else 0.0
        if sizes.size == 0:
            return RTStats(arrived, departed, arrived - departed, 0.0, 0.0, n)
        end = np.cumsum(sizes)
        start = end - sizes
        # last slot in which a bit can leave without exceeding the bound
        slot_of = (times / self.tau).astype(np.int64)
        jd = slot_of + int(math.floor(self.d_max / self.tau + 1e-9))
        counted = jd < n
        jd_c = np.clip(jd, 0, max(n - 1, 0))
        served_by_deadline = np.where(jd >= 0, D[jd_c], 0.0)
        on_time = np.clip(served_by_deadline - start, 0.0, sizes)
        late = sizes - on_time
        return RTStats(arrived, departed, arrived - departed, float(sizes[counted].sum()),
                       float(late[counted].sum()), n)


# -- one window -----------------------------------------------------------------

@dataclass
class WindowOutcome:
    vod_bits: float
    energy: EnergyLedger
    stalls: int
    stall_time: float
    mean_power: np.ndarray  # realised time-average transmit power per (user, frame), W
    vod_delivered: np.ndarray  # (n_vod, N_L) bits
    rt_capacity_bits: np.ndarray  # (n_rt, N_L * N_S)


def _frame_levels(plan: WindowPlan, true_alpha: np.ndarray, limits: RadioLimits, rt_beta: np.ndarray):
    """Commanded power (after any run-time adjustment) and resulting water levels."""
    power = plan.power.copy()
    adj = plan.adjust
    if adj is not None and adj.any():
        power[adj] = adjust_plan_runtime(plan.power[adj], plan.planned_alpha[adj], true_alpha[adj])
    k = plan.subcarriers
    live = (power > 0) & (k > 0)
    x = np.where(live, limits.snr_per_watt(true_alpha) * power / np.where(live, k, 1.0), 0.0)
    nu = np.full(power.shape, np.inf)
    nv = plan.n_vod
    if nv:
        lv = live[:nv]
        nu[:nv][lv] = linkmodel.vod_level_from_normalised(x[:nv][lv])
    if power.shape[0] > nv:
        beta = np.broadcast_to(rt_beta[:, None], power[nv:].shape)
        lr = live[nv:]
        nu[nv:][lr] = linkmodel.rt_level_from_normalised(x[nv:][lr], beta[lr])
    return power, x, nu, live


def run_window(plan: WindowPlan, true_alpha: np.ndarray, sizes: np.ndarray, rt_beta: np.ndarray,
               limits: RadioLimits, settings: SimSettings, sampler: FadingSampler,
               rt_queues: Sequence[RTQueue] = (), arrival_spec: Optional[RTArrivalSpec] = None,
               seed: int = 0, window: int = 0, n_bs: int = 1, q_max: float = math.inf) -> WindowOutcome:
    """Simulate one prediction window of ``plan`` over the true gains.

    ``sizes`` are the (n_vod, N_L+1) segment sizes at the plan's quality level.
    RT capacities and arrivals are appended to ``rt_queues`` (one per RT user).
    """
    true_alpha = np.atleast_2d(np.asarray(true_alpha, dtype=float))
    M, N = plan.power.shape
    if true_alpha.shape != (M, N):
        raise ValueError(f"plan shape {plan.power.shape} does not match gain traces {true_alpha.shape}")
    nv = plan.n_vod
    if sizes.shape[0] != nv or (nv and sizes.shape[1] < N + 1):
        raise ValueError("segment sizes must be (n_vod, N_L + 1)")
    rt_beta = np.asarray(rt_beta, dtype=float).reshape(-1)
    if len(rt_queues) not in (0, M - nv) or rt_beta.size != M - nv:
        raise ValueError("one RT queue and one beta per RT user required")

    NS = settings.slots_per_frame
    tau = settings.slot_duration
    dT = limits.frame_duration
    if not math.isclose(NS * tau, dT, rel_tol=1e-9):
        raise ValueError("slots_per_frame * slot_duration must equal the frame duration")
    if sampler.slots_per_frame != NS:
        raise ValueError("fading sampler is laid out for a different number of slots per frame")

    power, x, nu, live = _frame_levels(plan, true_alpha, limits, rt_beta)
    ledger = EnergyLedger(fixed_J=n_bs * N * dT * limits.p_0)
    mean_power = np.zeros((M, N))
    vod_planned = np.zeros((nv, N))
    vod_realized = np.zeros((nv, N))
    rt_cap = np.zeros((M - nv, N * NS))

    for m in range(M):
        for i in range(N):
            if not live[m, i]:
                continue
            k = plan.subcarriers[m, i]
            ledger.circuit_J += dT * limits.p_c * k
            if m < nv:
                # frame-level delivery of a rate-K*F_D code; independent of the slot pattern
                vod_planned[m, i] = dT * k * linkmodel.vod_terms(np.array([x[m, i]]), limits.bandwidth)[0][0]
            counts = active_counts(k, NS)
            n_max = int(counts.max())
            if n_max == 0:
                continue
            link = limits.link(true_alpha[m, i])
            g = sampler.block(m, i, n_max, window)
            mask = np.arange(n_max)[None, :] < counts[:, None]
            g_act = np.where(mask, g, 0.0)
            beta = None if m < nv else rt_beta[m - nv]
            p = linkmodel.allocate_slot_power(nu[m, i], g_act, link, beta)
            slot_total = p.sum(axis=1)
            mean_power[m, i] = slot_total.mean()
            ledger.transmit_J += tau * slot_total.sum() / limits.rho
            rates = linkmodel.slot_rate(nu[m, i], g_act, limits.bandwidth, beta, axis=1)
            if m < nv:
                vod_realized[m, i] = tau * rates.sum()
            else:
                rt_cap[m - nv, i * NS:(i + 1) * NS] = tau * rates

    # VoD deliveries, capped by the remaining video and (when finite) the user buffer
    delivered = np.zeros((nv, N))
    stalls = 0
    stall_time = 0.0
    raw = vod_planned if settings.vod_delivery == "coded" else vod_realized
    for m in range(nv):
        remaining = float(sizes[m, 1:N + 1].sum())
        buffer = float(sizes[m, 0])
        for i in range(N):
            room = remaining
            if math.isfinite(q_max):
                room = min(room, max(q_max - buffer + sizes[m, i], 0.0))
            d = min(raw[m, i], room)
            delivered[m, i] = d
            remaining -= d
            buffer = max(buffer + d - sizes[m, i], 0.0)
        pb = playback_stalls(delivered[m], sizes[m, :N + 1], dT)
        stalls += pb.stalls
        stall_time += pb.stall_time

    if rt_queues:
        spec = arrival_spec or RTArrivalSpec()
        for j, q in enumerate(rt_queues):
            user = nv + j
            for i in range(N):
                rng = philox(seed, STREAM_ARRIVALS, i, user, window)
                arr = sample_arrivals(spec, tau, rng, NS)
                q.extend(rt_cap[j, i * NS:(i + 1) * NS], arr)

    return WindowOutcome(float(delivered.sum()), ledger, stalls, stall_time, mean_power, delivered, rt_cap)


# -- single-slot reference step ----------------------------------------------------

@dataclass
class SlotRecord:
    rates: np.ndarray  # bits/s per user
    powers: np.ndarray  # total W per user
    served_bits: np.ndarray  # bits moved per user this slot


def step_slot(nu: np.ndarray, gains: Sequence[np.ndarray], alpha: np.ndarray, limits: RadioLimits,
              n_vod: int, rt_beta: np.ndarray, vod_remaining: np.ndarray, rt_queues: Sequence[RTQueue],
              arrivals: Sequence[tuple[Sequence[float], Sequence[float]]], slot_duration: float) -> SlotRecord:
    """Advance every user by one slot.

    ``gains[m]`` holds the fading of the user's active subcarriers; VoD bits
    are taken from ``vod_remaining`` (modified in place), RT queues first take
    in ``arrivals[j] = (times, sizes)`` and are then served FIFO.
    """
    M = len(gains)
    rates = np.zeros(M)
    powers = np.zeros(M)
    served = np.zeros(M)
    for m in range(M):
        g = np.asarray(gains[m], dtype=float)
        beta = None if m < n_vod else rt_beta[m - n_vod]
        if g.size and np.isfinite(nu[m]):
            link = limits.link(alpha[m])
            powers[m] = float(np.sum(linkmodel.allocate_slot_power(nu[m], g, link, beta)))
            rates[m] = float(linkmodel.slot_rate(nu[m], g, limits.bandwidth, beta))
        bits = rates[m] * slot_duration
        if m < n_vod:
            take = min(bits, vod_remaining[m])
            vod_remaining[m] -= take
            served[m] = take
        else:
            j = m - n_vod
            times, sizes = arrivals[j]
            served[m] = rt_queues[j].step(bits, times, sizes)
    return SlotRecord(rates, powers, served)


# -- reports -------------------------------------------------------------------------

@dataclass
class QoSVerdict:
    stalls: int
    stall_time: float
    rt_violation: list[float] = field(default_factory=list)
    rt_ok: list[bool] = field(default_factory=list)
    low_confidence: bool = False


def audit_qos(stalls: int, stall_time: float, rt_stats: Sequence[RTStats], eps_d: float,
              min_slots: int = 10**6) -> QoSVerdict:
    viol = [s.violation_probability for s in rt_stats]
    low = any(s.slots < min_slots for s in rt_stats)
    return QoSVerdict(stalls, stall_time, viol, [v <= eps_d for v in viol], low)


@dataclass
class EEReport:
    bits: float
    energy: EnergyLedger
    stalls: int
    stall_time: float
    rt_violation: list[float]
    quality_level: Optional[float]

    @property
    def ee(self) -> float:
        return compute_ee(self.energy, self.bits)

    @property
    def max_rt_violation(self) -> float:
        return max(self.rt_violation, default=0.0)
