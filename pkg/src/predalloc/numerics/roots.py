"""Bracketed scalar root finding and finite-difference gradient checks."""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class BracketedFunction:
    evaluator: Callable[[float], float]
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise BracketError(f"empty bracket [{self.lo}, {self.hi}]")


def find_root(f: BracketedFunction, tol: float = 1e-12, maxiter: int = 500) -> float:
    flo = f.evaluator(f.lo)
    fhi = f.evaluator(f.hi)
    if flo == 0.0:
        return float(f.lo)
    if fhi == 0.0:
        return float(f.hi)
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(f"no sign change on [{f.lo}, {f.hi}]: f={flo:.3g}, {fhi:.3g}")
    root = brentq(f.evaluator, f.lo, f.hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=maxiter)
    return float(min(max(root, f.lo), f.hi))


def check_gradient(f, g, x, rel_step: float = 1e-6) -> float:
    """Max over coordinates of |analytic - fd| / |fd|, fd being the central difference.

    Central differences with the step scaled to each coordinate's magnitude.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    analytic = np.atleast_1d(np.asarray(g(x if x.size > 1 else x[0]), dtype=float))
    worst = 0.0
    for k in range(x.size):
        h = rel_step * max(abs(x[k]), 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        fp = f(xp if x.size > 1 else xp[0])
        fm = f(xm if x.size > 1 else xm[0])
        fd = (fp - fm) / (2 * h)
        denom = abs(fd) if abs(fd) > 1e-300 else 1.0
        worst = max(worst, abs(fd - analytic[k]) / denom)
    return worst
