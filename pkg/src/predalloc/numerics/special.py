"""Exponential integral and upper incomplete gamma on the ranges the link model needs."""

import numpy as np
from scipy import special as _sp


class DomainError(ValueError):
    pass


def exp_integral_e1(x):
    """E1(x) = int_x^inf exp(-t)/t dt for x > 0.

    Accepts scalars or arrays; scalars come back as float.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("E1 requires x > 0")
    out = _sp.exp1(arr)
    return float(out) if out.ndim == 0 else out


def upper_incomplete_gamma(s, x):
    """Non-normalised upper incomplete gamma Gamma(s, x) for 0 < s <= 1, x >= 0."""
    s_arr = np.asarray(s, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if np.any(~((s_arr > 0) & (s_arr <= 1))):
        raise DomainError("Gamma(s, x) supported only for 0 < s <= 1")
    if np.any(~(x_arr >= 0)):
        raise DomainError("Gamma(s, x) requires x >= 0")
    out = _sp.gammaincc(s_arr, x_arr) * _sp.gamma(s_arr)
    return float(out) if np.ndim(out) == 0 else out


def log_upper_incomplete_gamma(s, x):
    """ln Gamma(s, x), finite where Gamma(s, x) itself underflows (large x)."""
    s_arr = np.asarray(s, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    reg = _sp.gammaincc(s_arr, x_arr)
    with np.errstate(divide="ignore"):
        out = np.log(reg) + _sp.gammaln(s_arr)
    # asymptotic tail: Gamma(s,x) ~ x^(s-1) e^-x (1 + (s-1)/x + (s-1)(s-2)/x^2)
    tail = (reg < 1e-280) & (x_arr > 1.0)
    if np.any(tail):
        xt = np.broadcast_to(x_arr, out.shape)[tail]
        st = np.broadcast_to(s_arr, out.shape)[tail]
        series = 1.0 + (st - 1) / xt + (st - 1) * (st - 2) / xt**2 + (st - 1) * (st - 2) * (st - 3) / xt**3
        out = np.array(out, copy=True)
        out[tail] = (st - 1) * np.log(xt) - xt + np.log(series)
    return float(out) if np.ndim(out) == 0 else out
