"""Experiment orchestration: scenario generation, planning, simulation and result tables."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .channel import (STREAM_MOBILITY, STREAM_SCENARIO, FadingSampler, Geometry, VelocityChain, gain_from_distance,
                      large_scale_trace, philox, predict_trace, sample_mobility)
from .config import ScenarioConfig, SweepSpec
from .planner.policies import PlanningInputs, WindowPlan, degrade_until_feasible, plan_window
from .simulator import EnergyLedger, RTQueue, SimSettings, audit_qos, compute_ee, run_window
from .traffic import (QoSSpec, RTArrivalSpec, VideoTrace, effective_bandwidth, read_video_trace,
                      solve_qos_exponent, synthetic_video)

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("policy", "seed", "point", "M_D", "M_R", "q", "quality_level", "bits", "energy_J",
                  "EE_bits_per_J", "stalls", "stall_time_s", "max_rt_violation")
SUMMARY_COLUMNS = ("point", "policy", "runs", "mean_EE_bits_per_J", "ci95_half_width", "mean_quality_level",
                   "total_stalls", "max_rt_violation")


@dataclass
class WindowScenario:
    """Everything drawn for one prediction window."""

    inputs: PlanningInputs
    true_alpha: np.ndarray
    sizes_full: list  # VideoTrace per VoD user at full quality


@dataclass
class RunResult:
    policy: str
    seed: int
    point: str
    n_vod: int
    n_rt: int
    q: float
    quality_level: Optional[float]
    bits: float
    energy: EnergyLedger
    stalls: int
    stall_time: float
    max_rt_violation: float

    @property
    def ee(self) -> float:
        return compute_ee(self.energy, self.bits)

    def row(self) -> list:
        ql = "NA" if self.quality_level is None else _fmt(self.quality_level)
        return [self.policy, self.seed, self.point, self.n_vod, self.n_rt, _fmt(self.q), ql, _fmt(self.bits),
                _fmt(self.energy.total_J), _fmt(self.ee), self.stalls, _fmt(self.stall_time),
                _fmt(self.max_rt_violation)]


def _fmt(x: float) -> str:
    return repr(float(x))


class ScenarioBuilder:
    """Draws positions, videos and trajectories for each window of one replication."""

    def __init__(self, cfg: ScenarioConfig, seed: int):
        self.cfg = cfg
        self.seed = int(seed)
        self.scenario_seed = int(cfg.simulation.scenario_seed if cfg.simulation.scenario_seed is not None else seed)
        g = cfg.geometry
        self.geometry = Geometry(g.n_bs, g.bs_spacing, g.road_offset)
        m = cfg.mobility
        self.chain = VelocityChain(m.q, m.v_min, m.v_max, m.dv, cfg.window.frame_duration)
        self.limits = cfg.radio.limits(cfg.window.frame_duration)
        t = cfg.traffic
        self.arrivals = RTArrivalSpec(t.arrival_rate, 1.0 / t.mean_packet_bits)
        self.qos = QoSSpec(t.d_max, t.eps_d)
        self.exponent = solve_qos_exponent(self.arrivals, self.qos, cfg.window.slot_duration, cfg.radio.bandwidth)
        self.eb = effective_bandwidth(self.arrivals, self.exponent.theta)
        self._video_file: Optional[VideoTrace] = None
        if t.video.source == "file":
            self._video_file = read_video_trace(t.video.path)
        u = cfg.users
        self.q_max = u.q_max_segments * (t.video.base_rate + 5 * t.video.enhancement_rate) * cfg.window.frame_duration

    @property
    def n_users(self) -> int:
        return self.cfg.users.n_vod + self.cfg.users.n_rt

    def positions(self, window: int) -> np.ndarray:
        if self.cfg.users.initial_positions is not None:
            return np.asarray(self.cfg.users.initial_positions, dtype=float)
        lo, hi = 0.0, self.geometry.bs_spacing  # first cell along the road
        rng = philox(self.scenario_seed, STREAM_SCENARIO, window, 0)
        return rng.uniform(lo, hi, self.n_users)

    def videos(self, window: int) -> list:
        n = self.cfg.window.n_frames + 1
        v = self.cfg.traffic.video
        if self._video_file is not None:
            total = len(self._video_file)
            idx = (window * self.cfg.window.n_frames + np.arange(n)) % total
            return [VideoTrace(self._video_file.layers[idx]) for _ in range(self.cfg.users.n_vod)]
        out = []
        for m in range(self.cfg.users.n_vod):
            rng = philox(self.scenario_seed, STREAM_SCENARIO, window, 1, m)
            out.append(synthetic_video(n, rng, self.cfg.window.frame_duration, v.base_rate, v.enhancement_rate,
                                       v.jitter))
        return out

    def window(self, w: int) -> WindowScenario:
        N = self.cfg.window.n_frames
        v0 = self.cfg.users.initial_velocity
        pos = self.positions(w)
        true_tr, pred_tr = [], []
        for m in range(self.n_users):
            rng = philox(self.seed, STREAM_MOBILITY, w, m)
            mob = sample_mobility(self.chain, float(pos[m]), v0, N, rng)
            true_tr.append(large_scale_trace(self.geometry, mob))
            pred_tr.append(predict_trace(self.geometry, float(pos[m]), v0, N, self.cfg.window.frame_duration))
        videos = self.videos(w)
        n_rt = self.cfg.users.n_rt
        inputs = PlanningInputs(
            alpha=np.array([t.alpha for t in pred_tr]).reshape(self.n_users, N),
            bs_index=np.array([t.bs_index for t in pred_tr]).reshape(self.n_users, N),
            videos=videos,
            rt_beta=np.full(n_rt, self.exponent.beta),
            rt_demand=np.full(n_rt, self.eb),
            limits=self.limits,
            n_bs=self.geometry.n_bs,
            current_alpha=np.array([t.alpha for t in true_tr]).reshape(self.n_users, N),
            current_bs_index=np.array([t.bs_index for t in true_tr]).reshape(self.n_users, N),
            q_max=self.q_max,
            edge_gain=float(gain_from_distance(self.geometry.cell_radius)),
        )
        return WindowScenario(inputs, inputs.current_alpha, videos)


def _plan(policy: str, inputs: PlanningInputs, cache: dict):
    """Plan with quality degradation; the two optimal variants share one solve."""
    key = "optimal" if policy in ("optimal", "optimal-adjusted") else policy
    if key not in cache:
        cache[key] = degrade_until_feasible(inputs, lambda inp: plan_window(key, inp))
    plan, level = cache[key]
    if plan is not None and key == "optimal":
        plan = dataclasses.replace(plan, policy=policy,
                                   adjust=np.full(inputs.n_users, policy == "optimal-adjusted"))
    return plan, level


def run_replication(cfg: ScenarioConfig, seed: int, point: str = "") -> list[RunResult]:
    """All policies of ``cfg`` on one seed, sharing fading and arrivals (paired)."""
    builder = ScenarioBuilder(cfg, seed)
    settings = SimSettings(cfg.window.slot_duration, cfg.window.slots_per_frame, cfg.traffic.d_max,
                           cfg.simulation.vod_delivery)
    sampler = FadingSampler(seed, cfg.window.slots_per_frame)
    n_rt = cfg.users.n_rt
    acc = {p: dict(bits=0.0, energy=EnergyLedger(), stalls=0, stall_time=0.0, levels=[], na=False,
                   queues=[RTQueue(settings.slot_duration, settings.d_max) for _ in range(n_rt)])
           for p in cfg.policies}
    for w in range(cfg.window.n_windows):
        scen = builder.window(w)
        cache: dict = {}
        for policy in cfg.policies:
            a = acc[policy]
            plan, level = _plan(policy, scen.inputs, cache)
            if level is None:
                a["na"] = True
                log.info("seed %d window %d: %s infeasible at every quality level", seed, w, policy)
                continue
            sizes = scen.inputs.with_level(level).segment_sizes()
            out = run_window(plan, scen.true_alpha, sizes, scen.inputs.rt_beta, builder.limits, settings, sampler,
                             a["queues"], builder.arrivals, seed, w, builder.geometry.n_bs,
                             builder.q_max if policy == "heuristic" else math.inf)
            a["bits"] += out.vod_bits
            a["energy"] += out.energy
            a["stalls"] += out.stalls
            a["stall_time"] += out.stall_time
            a["levels"].append(level)
    results = []
    for policy in cfg.policies:
        a = acc[policy]
        rt_stats = [q.stats() for q in a["queues"]]
        verdict = audit_qos(a["stalls"], a["stall_time"], rt_stats, cfg.traffic.eps_d)
        bits = a["bits"] + sum(s.departed_bits for s in rt_stats)
        level = None if a["na"] or not a["levels"] else float(np.mean(a["levels"]))
        results.append(RunResult(policy, int(seed), point, cfg.users.n_vod, n_rt, cfg.mobility.q, level, bits,
                                 a["energy"], a["stalls"], a["stall_time"], max(verdict.rt_violation, default=0.0)))
    return results


def run_experiment(cfg: ScenarioConfig, sweep: Optional[SweepSpec] = None,
                   seeds: Optional[Sequence[int]] = None) -> list[RunResult]:
    seeds = list(seeds) if seeds is not None else list(cfg.simulation.seeds)
    points = [({}, "")]
    if sweep is not None:
        points = [(p, ";".join(f"{k}={v}" for k, v in p.items())) for p in sweep.points()]
    results = []
    for overrides, label in points:
        c = cfg.replace(**overrides) if overrides else cfg
        for seed in seeds:
            try:
                results.extend(run_replication(c, seed, label))
            except Exception as exc:  # keep the sweep going; the failure becomes NA rows
                log.error("run failed at %s seed %d: %s", label or "base", seed, exc)
                for policy in c.policies:
                    results.append(RunResult(policy, int(seed), label, c.users.n_vod, c.users.n_rt, c.mobility.q,
                                             None, 0.0, EnergyLedger(), 0, 0.0, math.nan))
    return results


def write_results(results: Iterable[RunResult], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        w.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError("result file header does not match the expected columns")
        return list(r)


def summarize(rows: Sequence[dict]) -> list[dict]:
    """Per (point, policy): mean EE with a 95% t half-width, mean quality (NA if any run is NA), stalls, worst RT."""
    if not rows:
        raise ValueError("nothing to summarize")
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["point"], row["policy"]), []).append(row)
    out = []
    for (point, policy), rs in groups.items():
        ee = np.array([float(r["EE_bits_per_J"]) for r in rs])
        n = ee.size
        half = 0.0
        if n > 1:
            half = float(stats.t.ppf(0.975, n - 1) * ee.std(ddof=1) / math.sqrt(n))
        levels = [r["quality_level"] for r in rs]
        quality = "NA" if any(lv == "NA" for lv in levels) else _fmt(np.mean([float(lv) for lv in levels]))
        viol = [float(r["max_rt_violation"]) for r in rs]
        out.append({
            "point": point, "policy": policy, "runs": n, "mean_EE_bits_per_J": _fmt(ee.mean()),
            "ci95_half_width": _fmt(half), "mean_quality_level": quality,
            "total_stalls": int(sum(int(r["stalls"]) for r in rs)), "max_rt_violation": _fmt(max(viol)),
        })
    return out


def write_summary(summary: Sequence[dict], path=None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in summary:
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
