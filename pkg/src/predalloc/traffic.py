"""VoD segment traces, compound-Poisson RT arrivals, effective bandwidth and QoS exponents."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .numerics.roots import BracketedFunction, find_root

N_ENHANCEMENT = 5


class QoSInfeasibleArrival(ValueError):
    pass


@dataclass
class VideoTrace:
    """Per-segment layer sizes in bits; ``layers[:, 0]`` is the base layer."""

    layers: np.ndarray  # (n_segments, 1 + N_ENHANCEMENT)
    level: int = N_ENHANCEMENT

    def __post_init__(self):
        self.layers = np.asarray(self.layers, dtype=float)
        if self.layers.ndim != 2 or self.layers.shape[1] != 1 + N_ENHANCEMENT:
            raise ValueError("layers must have shape (n_segments, 6)")
        if np.any(self.layers <= 0):
            raise ValueError("layer sizes must be positive")
        if not 0 <= self.level <= N_ENHANCEMENT:
            raise ValueError("quality level must be in 0..5")

    @property
    def sizes(self) -> np.ndarray:
        """R_i at the current quality level."""
        return self.layers[:, : self.level + 1].sum(axis=1)

    def __len__(self):
        return self.layers.shape[0]


def reduce_quality(trace: VideoTrace, level: int) -> VideoTrace:
    if not 0 <= level <= N_ENHANCEMENT:
        raise ValueError("quality level must be in 0..5")
    return VideoTrace(trace.layers, level)


def synthetic_video(n_segments: int, rng: np.random.Generator, segment_duration: float = 1.0,
                    base_rate: float = 800e3, enh_rate: float = 240e3, jitter: float = 0.2) -> VideoTrace:
    """Layered segments: base + 5 enhancement layers, each scaled by U(1-jitter, 1+jitter)."""
    nominal = np.array([base_rate] + [enh_rate] * N_ENHANCEMENT) * segment_duration
    scale = rng.uniform(1.0 - jitter, 1.0 + jitter, size=(n_segments, 1 + N_ENHANCEMENT))
    return VideoTrace(nominal * scale)


VIDEO_COLUMNS = ("segment_index", "base_bits") + tuple(f"enh{k}_bits" for k in range(1, N_ENHANCEMENT + 1))


def write_video_trace(path, trace: VideoTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(VIDEO_COLUMNS)
        for i, row in enumerate(trace.layers):
            w.writerow([i] + [repr(float(v)) for v in row])


def read_video_trace(path) -> VideoTrace:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != VIDEO_COLUMNS:
            raise ValueError(f"video trace header must be {','.join(VIDEO_COLUMNS)}")
        rows = sorted((int(x["segment_index"]), [float(x[c]) for c in VIDEO_COLUMNS[1:]]) for x in r)
    return VideoTrace(np.array([v for _, v in rows]))


@dataclass(frozen=True)
class RTArrivalSpec:
    """Poisson packet arrivals (``rate`` packets/s) with Exp sizes of mean ``1/size_rate`` bits."""

    rate: float = 500.0
    size_rate: float = 1.0 / 4000.0

    def __post_init__(self):
        if self.rate <= 0 or self.size_rate <= 0:
            raise ValueError("arrival and size rates must be positive")

    @property
    def mean_bits_per_second(self) -> float:
        return self.rate / self.size_rate


@dataclass(frozen=True)
class QoSSpec:
    d_max: float = 0.05
    eps_d: float = 0.02

    def __post_init__(self):
        if not 0.0 < self.eps_d < 1.0:
            raise ValueError(f"eps_d must lie in (0, 1), got {self.eps_d}")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")

    def check_timescales(self, slot: float, frame: float) -> bool:
        ok = slot < self.d_max < frame
        if not ok:
            warnings.warn(f"delay bound {self.d_max}s should sit between slot {slot}s and frame {frame}s",
                          stacklevel=2)
        return ok


@dataclass(frozen=True)
class QoSExponent:
    theta: float  # 1/bit
    beta: float


def effective_bandwidth(spec: RTArrivalSpec, theta: float) -> float:
    """lambda_a / (lambda_u - theta) bits/s for compound Poisson with exponential sizes."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    if theta >= spec.size_rate:
        raise QoSInfeasibleArrival("theta >= lambda_u: moment generating function diverges")
    return spec.rate / (spec.size_rate - theta)


def solve_qos_exponent(spec: RTArrivalSpec, qos: QoSSpec, slot: float = 5e-3,
                       bandwidth: float = 15e3) -> QoSExponent:
    """theta with theta * E_B(theta) * D_max = ln(1/eps_D); beta = theta*tau*B/ln 2."""
    target = math.log(1.0 / qos.eps_d)

    def resid(theta):
        return theta * spec.rate / (spec.size_rate - theta) * qos.d_max - target

    hi = spec.size_rate * (1.0 - 1e-12)
    if resid(hi) <= 0:
        raise QoSInfeasibleArrival("no QoS exponent below lambda_u satisfies the delay target")
    # closed-form root doubles as a tight bracket centre
    guess = target * spec.size_rate / (spec.rate * qos.d_max + target)
    lo = guess * (1 - 1e-6)
    up = min(guess * (1 + 1e-6), hi)
    if resid(lo) > 0 or resid(up) < 0:
        lo, up = 1e-300, hi
    theta = find_root(BracketedFunction(resid, lo, up), tol=1e-300)
    return QoSExponent(theta, theta * slot * bandwidth / math.log(2.0))


@dataclass
class SlotArrivals:
    counts: np.ndarray  # packets per slot
    sizes: np.ndarray  # bits per packet, in arrival order
    times: np.ndarray  # arrival instants relative to the start of the sampled block (s)

    @property
    def bits_per_slot(self) -> np.ndarray:
        slot_of = np.repeat(np.arange(self.counts.size), self.counts)
        return np.bincount(slot_of, weights=self.sizes, minlength=self.counts.size)


def sample_arrivals(spec: RTArrivalSpec, slot: float, rng: np.random.Generator, n_slots: int = 1) -> SlotArrivals:
    counts = rng.poisson(spec.rate * slot, size=n_slots)
    total = int(counts.sum())
    sizes = rng.exponential(1.0 / spec.size_rate, size=total)
    offsets = rng.random(total) * slot
    slot_of = np.repeat(np.arange(n_slots), counts)
    # FIFO order inside each slot follows the arrival instant
    order = np.lexsort((offsets, slot_of))
    times = slot_of[order] * slot + offsets[order]
    return SlotArrivals(counts, sizes[order], times)
