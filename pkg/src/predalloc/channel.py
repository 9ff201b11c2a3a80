"""Road geometry, Markov velocity mobility, large-scale gains and Rayleigh fading streams."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

# key words of the counter-based generator; one per kind of randomness
STREAM_FADING = 0
STREAM_ARRIVALS = 1
STREAM_MOBILITY = 2
STREAM_SCENARIO = 3

MIN_DISTANCE_M = 1.0


def philox(seed: int, stream: int, *counter_words: int) -> np.random.Generator:
    """Generator addressed by (seed, stream) key and up to three counter words.

    The low counter word is left at zero so each addressed stream owns 2**64
    blocks before it could touch another one.
    """
    words = list(counter_words)[:3]
    words += [0] * (3 - len(words))
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    counter = np.array([0] + [w & 0xFFFFFFFFFFFFFFFF for w in words], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class Geometry:
    """Straight road along the x axis starting at A = (0, 0); BSs sit mid-cell at ``road_offset`` from it."""

    n_bs: int = 4
    bs_spacing: float = 500.0
    road_offset: float = 100.0

    def __post_init__(self):
        if self.bs_spacing <= 0 or self.road_offset <= 0 or self.n_bs < 1:
            raise ValueError("bs_spacing, road_offset must be positive and n_bs >= 1")

    @property
    def bs_positions(self) -> np.ndarray:
        xs = (np.arange(self.n_bs) + 0.5) * self.bs_spacing
        return np.column_stack([xs, np.full(self.n_bs, self.road_offset)])

    @property
    def road_length(self) -> float:
        return self.n_bs * self.bs_spacing

    @property
    def cell_radius(self) -> float:
        """Distance from a BS to the farthest road point of its own cell."""
        return math.hypot(self.bs_spacing / 2.0, self.road_offset)

    def first_cell(self) -> tuple[float, float]:
        return 0.0, self.bs_spacing


@dataclass(frozen=True)
class VelocityChain:
    q: float
    v_min: float = 0.0
    v_max: float = 30.0
    dv: float = 1.0
    frame_duration: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.q <= 0.5:
            raise ValueError(f"q must lie in [0, 0.5], got {self.q}")
        if self.dv <= 0 or self.v_max < self.v_min:
            raise ValueError("invalid velocity grid")

    @property
    def states(self) -> np.ndarray:
        n = int(round((self.v_max - self.v_min) / self.dv)) + 1
        return self.v_min + self.dv * np.arange(n)

    def matrix(self) -> np.ndarray:
        return build_transition_matrix(self.q, len(self.states))

    def state_index(self, velocity: float) -> int:
        idx = int(round((velocity - self.v_min) / self.dv))
        if idx < 0 or idx >= len(self.states) or not math.isclose(self.states[idx], velocity, abs_tol=1e-9):
            raise ValueError(f"velocity {velocity} is not a state of the chain")
        return idx


def build_transition_matrix(q: float, n_states: int) -> np.ndarray:
    """Tridiagonal birth-death matrix with reflecting ends (diagonal 1-q at the ends, 1-2q inside)."""
    if not 0.0 <= q <= 0.5:
        raise ValueError(f"q must lie in [0, 0.5], got {q}")
    if n_states < 1:
        raise ValueError("need at least one state")
    P = np.zeros((n_states, n_states))
    if n_states == 1:
        P[0, 0] = 1.0
        return P
    idx = np.arange(n_states - 1)
    P[idx, idx + 1] = q
    P[idx + 1, idx] = q
    np.fill_diagonal(P, 1.0 - 2.0 * q)
    P[0, 0] = P[-1, -1] = 1.0 - q
    return P


@dataclass
class MobilityTrace:
    positions: np.ndarray  # x coordinate at the start of each frame (m)
    velocities: np.ndarray  # V_i held during frame i (m/s)
    frame_duration: float


def sample_mobility(chain: VelocityChain, initial_position: float, initial_velocity: float,
                    n_frames: int, rng: np.random.Generator) -> MobilityTrace:
    states = chain.states
    P = chain.matrix()
    cum = np.cumsum(P, axis=1)
    state = chain.state_index(initial_velocity)
    vel_idx = np.empty(n_frames, dtype=int)
    draws = rng.random(n_frames)
    for i in range(n_frames):
        vel_idx[i] = state
        state = min(int(np.searchsorted(cum[state], draws[i], side="right")), len(states) - 1)
    velocities = states[vel_idx]
    positions = initial_position + chain.frame_duration * np.concatenate([[0.0], np.cumsum(velocities)[:-1]])
    return MobilityTrace(positions, velocities, chain.frame_duration)


def sample_velocity_path(chain: VelocityChain, initial_velocity: float, n_steps: int,
                         rng: np.random.Generator) -> np.ndarray:
    """State indices of a long run of the chain (used for stationarity checks)."""
    cum = np.cumsum(chain.matrix(), axis=1)
    state = chain.state_index(initial_velocity)
    out = np.empty(n_steps, dtype=np.int64)
    draws = rng.random(n_steps)
    n = cum.shape[0]
    for i in range(n_steps):
        out[i] = state
        state = min(int(np.searchsorted(cum[state], draws[i], side="right")), n - 1)
    return out


def pathloss_db(distance_m):
    d = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M)
    out = 35.3 + 37.6 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def gain_from_distance(distance_m):
    out = 10.0 ** (-np.asarray(pathloss_db(distance_m)) / 10.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class LargeScaleTrace:
    alpha: np.ndarray  # (n_frames,)
    bs_index: np.ndarray  # (n_frames,) int
    predicted: bool = False
    positions: Optional[np.ndarray] = field(default=None, repr=False)


def _associate(geometry: Geometry, positions: np.ndarray):
    bs = geometry.bs_positions
    dx = positions[:, None] - bs[None, :, 0]
    dist = np.hypot(dx, bs[None, :, 1])
    # argmin keeps the first (lowest) index on ties
    idx = np.argmin(dist, axis=1)
    return idx, dist[np.arange(len(positions)), idx]


def large_scale_trace(geometry: Geometry, mobility: MobilityTrace) -> LargeScaleTrace:
    pos = np.asarray(mobility.positions, dtype=float)
    idx, d = _associate(geometry, pos)
    return LargeScaleTrace(np.asarray(gain_from_distance(d), dtype=float).reshape(-1), idx, False, pos)


def predict_trace(geometry: Geometry, initial_position: float, initial_velocity: float,
                  n_frames: int, frame_duration: float = 1.0) -> LargeScaleTrace:
    pos = initial_position + initial_velocity * frame_duration * np.arange(n_frames)
    idx, d = _associate(geometry, pos)
    return LargeScaleTrace(np.asarray(gain_from_distance(d), dtype=float).reshape(-1), idx, True, pos)


def median_gain(trace) -> float:
    """Lower median of the per-frame gains."""
    a = np.sort(np.asarray(getattr(trace, "alpha", trace), dtype=float).reshape(-1))
    if a.size == 0:
        raise ValueError("empty trace")
    return float(a[(a.size - 1) // 2])


class FadingSampler:
    """Unit-mean exponential small-scale gains addressed by (user, frame, slot, subcarrier).

    Each (window, user, frame) owns a Philox stream.  Inside it, draws are laid
    out subcarrier-major: the gain of (slot j, subcarrier k) is the draw at
    position ``k * slots_per_frame + j``, obtained by inverse CDF so every
    position consumes exactly one 64-bit output.  A user served on K
    subcarriers therefore reads a prefix of the stream, and two policies using
    different K see identical gains on the subcarriers they share.
    """

    def __init__(self, seed: int, slots_per_frame: int = 200):
        if slots_per_frame < 1:
            raise ValueError("slots_per_frame must be >= 1")
        self.seed = int(seed)
        self.slots_per_frame = int(slots_per_frame)

    def _stream(self, user, frame, window):
        return philox(self.seed, STREAM_FADING, frame, user, window)

    def block(self, user: int, frame: int, n_sub: int, window: int = 0) -> np.ndarray:
        """(slots_per_frame, n_sub) gains of the first ``n_sub`` subcarriers."""
        n = self.slots_per_frame
        u = self._stream(user, frame, window).random(int(n_sub) * n)
        return -np.log1p(-u.reshape(int(n_sub), n).T)

    def sample(self, user: int, frame: int, slot: int, subcarrier: int, window: int = 0) -> float:
        if not 0 <= slot < self.slots_per_frame:
            raise IndexError("slot outside the frame")
        pos = subcarrier * self.slots_per_frame + slot
        rng = self._stream(user, frame, window)
        if pos:
            rng.random(pos)  # skip to the addressed position
        return float(-np.log1p(-rng.random(1))[0])  # same ufunc as ``block``: bit-identical


def sample_fading(sampler: FadingSampler, user: int, frame: int, slot: int, subcarrier: int,
                  window: int = 0) -> float:
    return sampler.sample(user, frame, slot, subcarrier, window)


TRACE_COLUMNS = ("user", "frame", "alpha", "bs_index")


def write_traces(path, traces: Iterable[LargeScaleTrace]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for m, tr in enumerate(traces):
            for i, (a, b) in enumerate(zip(tr.alpha, tr.bs_index)):
                w.writerow([m, i, repr(float(a)), int(b)])


def read_traces(path, predicted: bool = False) -> list[LargeScaleTrace]:
    rows: dict[int, list] = {}
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"trace file header must be {','.join(TRACE_COLUMNS)}")
        for row in r:
            rows.setdefault(int(row["user"]), []).append((int(row["frame"]), float(row["alpha"]), int(row["bs_index"])))
    out = []
    for m in sorted(rows):
        recs = sorted(rows[m])
        out.append(LargeScaleTrace(np.array([a for _, a, _ in recs]), np.array([b for _, _, b in recs]), predicted))
    return out
