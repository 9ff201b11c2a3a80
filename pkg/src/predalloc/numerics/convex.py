"""Log-barrier interior-point solver for linear objectives under concave constraints.

Problems have the form

    minimize    c^T x
    subject to  h_j(x) >= 0     (h_j concave)
                x > box_lower   (componentwise; -inf disables a bound)

A phase-I problem (minimize s subject to h_j(x) + s >= 0) finds a strictly
feasible start or certifies infeasibility.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"


@dataclass
class ConcaveConstraint:
    """Single constraint value(x) >= 0. ``hessian`` may be omitted (treated as zero)."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None


class ConstraintBlock:
    """A batch of concave constraints evaluated together.

    Subclasses implement ``values`` and ``derivatives``; the latter returns
    (values, jacobian, weighted_hessian) where ``weighted_hessian(w)`` gives
    sum_j w_j * Hess h_j(x).
    """

    size: int

    def values(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivatives(self, x: np.ndarray):
        raise NotImplementedError


class _ScalarBlock(ConstraintBlock):
    def __init__(self, constraints: Sequence[ConcaveConstraint], n: int):
        self.items = list(constraints)
        self.size = len(self.items)
        self.n = n

    def values(self, x):
        return np.array([c.value(x) for c in self.items], dtype=float)

    def derivatives(self, x):
        vals = self.values(x)
        jac = np.array([np.asarray(c.gradient(x), dtype=float) for c in self.items]).reshape(self.size, self.n)
        hess = [c.hessian(x) if c.hessian is not None else None for c in self.items]

        def weighted(w):
            out = np.zeros((self.n, self.n))
            for wj, hj in zip(w, hess):
                if hj is not None:
                    out += wj * np.asarray(hj, dtype=float)
            return out

        return vals, jac, weighted


class LinearBlock(ConstraintBlock):
    """Rows A x + b >= 0."""

    def __init__(self, A: np.ndarray, b: np.ndarray):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.size = self.A.shape[0]

    def values(self, x):
        return self.A @ x + self.b

    def derivatives(self, x):
        n = self.A.shape[1]
        return self.values(x), self.A, lambda w: np.zeros((n, n))


@dataclass
class ConvexProgram:
    dimension: int
    objective_gradient: np.ndarray
    constraints: list = field(default_factory=list)
    box_lower: Optional[np.ndarray] = None
    start: Optional[np.ndarray] = None

    def __post_init__(self):
        self.objective_gradient = np.asarray(self.objective_gradient, dtype=float).reshape(self.dimension)
        if self.box_lower is None:
            self.box_lower = np.full(self.dimension, -np.inf)
        self.box_lower = np.asarray(self.box_lower, dtype=float).reshape(self.dimension)

    def blocks(self) -> list[ConstraintBlock]:
        scalars = [c for c in self.constraints if isinstance(c, ConcaveConstraint)]
        out = [c for c in self.constraints if isinstance(c, ConstraintBlock)]
        if scalars:
            out.append(_ScalarBlock(scalars, self.dimension))
        return out

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        vals = [b.values(x) for b in self.blocks()]
        return np.concatenate(vals) if vals else np.zeros(0)


@dataclass
class SolverOptions:
    gap_rel: float = 1e-9
    gap_abs: float = 1e-12
    mu: float = 20.0
    newton_tol: float = 1e-10
    max_newton: int = 100
    max_outer: int = 80
    feas_tol: float = 1e-9
    kkt_tol: float = 1e-6


@dataclass
class SolverResult:
    status: Status
    point: np.ndarray
    objective: float
    kkt_residual: float
    duality_gap: float = np.inf
    newton_steps: int = 0


class _Barrier:
    """Barrier state for one (possibly augmented) program."""

    def __init__(self, c, blocks, lower):
        self.c = c
        self.blocks = blocks
        self.lower = lower
        self.boxed = np.isfinite(lower)
        self.m = sum(b.size for b in blocks) + int(self.boxed.sum())

    def strictly_inside(self, x) -> bool:
        if not np.all(np.isfinite(x)):
            return False
        if np.any(x[self.boxed] <= self.lower[self.boxed]):
            return False
        for b in self.blocks:
            v = b.values(x)
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                return False
        return True

    def phi(self, x, t) -> float:
        val = t * float(self.c @ x)
        slack = x[self.boxed] - self.lower[self.boxed]
        if np.any(slack <= 0):
            return np.inf
        val -= float(np.sum(np.log(slack)))
        for b in self.blocks:
            v = b.values(x)
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                return np.inf
            val -= float(np.sum(np.log(v)))
        return val

    def newton_system(self, x, t):
        n = x.size
        grad = t * self.c.copy()
        H = np.zeros((n, n))
        slack = x[self.boxed] - self.lower[self.boxed]
        grad[self.boxed] -= 1.0 / slack
        H[np.flatnonzero(self.boxed), np.flatnonzero(self.boxed)] += 1.0 / slack**2
        for b in self.blocks:
            v, J, whess = b.derivatives(x)
            inv = 1.0 / v
            grad -= J.T @ inv
            Js = J * inv[:, None]
            H += Js.T @ Js
            H -= whess(inv)
        return grad, H

    def dual_residual(self, x, t) -> float:
        r = self.c.copy()
        slack = x[self.boxed] - self.lower[self.boxed]
        r[self.boxed] -= 1.0 / (t * slack)
        for b in self.blocks:
            v, J, _ = b.derivatives(x)
            r -= J.T @ (1.0 / (t * v))
        return float(np.max(np.abs(r)) / (1.0 + np.max(np.abs(self.c))))


def _solve_newton(H, grad):
    d = np.sqrt(np.abs(np.diag(H)))
    d[d == 0] = 1.0
    Hs = H / d[:, None] / d[None, :]
    rhs = -grad / d
    jitter = 0.0
    for _ in range(8):
        try:
            cf = scipy.linalg.cho_factor(Hs + jitter * np.eye(len(d)), check_finite=False)
            y = scipy.linalg.cho_solve(cf, rhs, check_finite=False)
            if np.all(np.isfinite(y)):
                return y / d
        except (np.linalg.LinAlgError, ValueError):
            pass
        jitter = 1e-14 if jitter == 0.0 else jitter * 100
    y = np.linalg.lstsq(Hs, rhs, rcond=None)[0]
    return y / d


def _max_box_step(x, dx, bar: _Barrier) -> float:
    neg = bar.boxed & (dx < 0)
    if not np.any(neg):
        return 1.0
    ratios = (bar.lower[neg] - x[neg]) / dx[neg]
    return float(min(1.0, 0.99 * ratios.min()))


def _center(bar: _Barrier, x, t, opts: SolverOptions, stop: Optional[Callable] = None):
    """Damped Newton on the barrier; returns (x, steps, early_stop)."""
    steps = 0
    for _ in range(opts.max_newton):
        grad, H = bar.newton_system(x, t)
        dx = _solve_newton(H, grad)
        dec = float(-grad @ dx)
        f0 = bar.phi(x, t)
        # the barrier value carries rounding noise proportional to its size;
        # decrements below that level cannot be resolved any further
        noise = 64.0 * np.finfo(float).eps * (abs(f0) + t * abs(float(bar.c @ x)))
        if dec / 2.0 <= max(opts.newton_tol, noise):
            break
        s = _max_box_step(x, dx, bar)
        while s > 1e-16:
            xn = x + s * dx
            fn = bar.phi(xn, t)
            if np.isfinite(fn) and fn <= f0 - 0.01 * s * dec + noise:
                break
            s *= 0.5
        else:
            break
        if not np.isfinite(fn) or fn > f0 + noise:
            break
        x = xn
        steps += 1
        if stop is not None and stop(x):
            return x, steps, True
    return x, steps, False


def _initial_t(bar: _Barrier, x) -> float:
    grad, _ = bar.newton_system(x, 0.0)
    cc = float(bar.c @ bar.c)
    if cc == 0:
        return 1.0
    t0 = -float(bar.c @ grad) / cc
    if not np.isfinite(t0) or t0 <= 0:
        t0 = bar.m / max(abs(float(bar.c @ x)), 1e-6)
    return max(t0, 1e-8)


def _default_start(lower: np.ndarray) -> np.ndarray:
    x = np.ones_like(lower)
    fin = np.isfinite(lower)
    x[fin] = lower[fin] + 1.0
    return x


def _phase_one(prog: ConvexProgram, blocks, x0, opts: SolverOptions):
    """Return (status, x, steps). status OPTIMAL means x is strictly feasible."""
    n = prog.dimension
    vals = np.concatenate([b.values(x0) for b in blocks]) if blocks else np.zeros(0)
    if vals.size == 0 or np.min(vals) > 0:
        return Status.OPTIMAL, x0, 0
    s0 = max(-float(np.min(vals)), 0.0) * 1.1 + 1.0

    aug_blocks = [_ShiftedBlock(b, n) for b in blocks]
    c = np.zeros(n + 1)
    c[-1] = 1.0
    lower = np.append(prog.box_lower, -np.inf)
    bar = _Barrier(c, aug_blocks, lower)
    z = np.append(x0, s0)
    t = _initial_t(bar, z)
    steps = 0
    scale = max(1.0, s0)
    for _ in range(opts.max_outer):
        z, k, hit = _center(bar, z, t, opts, stop=lambda zz: zz[-1] < 0)
        steps += k
        if hit or z[-1] < 0:
            return Status.OPTIMAL, z[:-1], steps
        gap = bar.m / t
        if z[-1] - gap > opts.feas_tol * scale:
            return Status.INFEASIBLE, z[:-1], steps
        if gap < opts.feas_tol * scale:
            return Status.INFEASIBLE, z[:-1], steps
        t *= opts.mu
    return Status.MAX_ITERATIONS, z[:-1], steps


class _ShiftedBlock(ConstraintBlock):
    """h(x) + s >= 0 over the augmented variable (x, s)."""

    def __init__(self, inner: ConstraintBlock, n: int):
        self.inner = inner
        self.size = inner.size
        self.n = n

    def values(self, z):
        return self.inner.values(z[:-1]) + z[-1]

    def derivatives(self, z):
        v, J, whess = self.inner.derivatives(z[:-1])
        Ja = np.hstack([J, np.ones((J.shape[0], 1))])

        def weighted(w):
            H = np.zeros((self.n + 1, self.n + 1))
            H[: self.n, : self.n] = whess(w)
            return H

        return v + z[-1], Ja, weighted


def minimize_convex(prog: ConvexProgram, opts: Optional[SolverOptions] = None) -> SolverResult:
    opts = opts or SolverOptions()
    blocks = prog.blocks()
    x0 = prog.start if prog.start is not None else _default_start(prog.box_lower)
    x0 = np.asarray(x0, dtype=float).copy()
    fin = np.isfinite(prog.box_lower)
    bad = fin & (x0 <= prog.box_lower)
    x0[bad] = prog.box_lower[bad] + 1.0

    status, x, steps = _phase_one(prog, blocks, x0, opts)
    if status is not Status.OPTIMAL:
        obj = float(prog.objective_gradient @ x)
        return SolverResult(status, x, obj, np.inf, np.inf, steps)

    bar = _Barrier(prog.objective_gradient, blocks, prog.box_lower)
    t = _initial_t(bar, x)
    gap = np.inf
    for _ in range(opts.max_outer):
        x, k, _ = _center(bar, x, t, opts)
        steps += k
        gap = bar.m / t
        obj = float(prog.objective_gradient @ x)
        if not np.isfinite(obj) or obj < -1e30:
            break
        if gap <= max(opts.gap_abs, opts.gap_rel * abs(obj)):
            kkt = bar.dual_residual(x, t)
            return SolverResult(Status.OPTIMAL, x, obj, kkt, gap, steps)
        t *= opts.mu
    obj = float(prog.objective_gradient @ x)
    log.debug("barrier stopped without certificate: gap=%g", gap)
    return SolverResult(Status.MAX_ITERATIONS, x, obj, np.inf, gap, steps)
