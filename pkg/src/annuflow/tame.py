"""One-dimensional smoothing, extension, inversion, and the empirical
norm-inequality checks used to monitor the graded-norm machinery.

The smoothing family S(t) acts by even reflection about both endpoints
(cosine transform, so constants are preserved exactly) followed by a
raised-cosine low-pass: full transmission below mode 0.8*t, zero above
1.2*t.  Mode m means cos(pi*m*(x-a)/(b-a)) on the curve's own interval,
so a pure cosine mode is a single transform bin and is cut exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, idct

from .curves import Curve1D, Monotone1D, MonotoneInverse
from .errors import DegenerateNormError, NotMonotoneError
from .grid import holder_norm


@dataclass(frozen=True)
class SmoothingFamily:
    """Parameters of the smoothing/extension operators."""

    margin: float = 0.25        # extension margin as a fraction of length
    taper_width: float = 0.4    # raised-cosine transition width, in units of t
    alpha: float = 0.5          # Hoelder exponent used by the monitors


DEFAULTS = SmoothingFamily()


def _lowpass_window(nmodes, t, taper_width):
    m = np.arange(nmodes, dtype=float)
    lo = (1.0 - taper_width / 2.0) * t
    hi = (1.0 + taper_width / 2.0) * t
    w = np.zeros(nmodes)
    w[m <= lo] = 1.0
    band = (m > lo) & (m < hi)
    w[band] = 0.5 * (1.0 + np.cos(np.pi * (m[band] - lo) / (hi - lo)))
    return w


_ramp_cache: dict = {}


def _ramp_data(n):
    """Unit-interval cubic ramps with unit endpoint slopes, their cosine
    coefficients, and the weighted tail-fit matrix; cached per size."""
    data = _ramp_cache.get(n)
    if data is None:
        u = np.linspace(0.0, 1.0, n)
        q0 = u * (1 - u) ** 2
        q1 = u**2 * (u - 1)
        c0 = dct(q0, type=1)
        c1 = dct(q1, type=1)
        m = np.arange(n)
        band = (m >= max(8, n // 2)) & (m <= n - 4)
        w = m[band].astype(float) ** 2
        A = np.stack([c0[band] * w, c1[band] * w], axis=1)
        data = (q0, q1, band, w, A, np.linalg.pinv(A))
        _ramp_cache[n] = data
    return data


def _endpoint_ramp(values):
    """Cubic ramp matching the even-periodization kink of the samples.

    The slopes are fitted to the 1/m^2 tail of the cosine coefficients, so
    the ramp vanishes (to rounding) for constants and for band-limited
    cosine content, and removes the kink for generic smooth data."""
    n = values.size
    q0, q1, band, w, _A, pinv = _ramp_data(n)
    c = dct(values, type=1)
    coef = pinv @ (c[band] * w)
    return coef[0] * q0 + coef[1] * q1


def smooth(f: Curve1D, t: float, family: SmoothingFamily = DEFAULTS) -> Curve1D:
    """Low-pass f at cutoff t; S(t)f -> f as t exceeds the grid Nyquist.

    The even reflection about both endpoints (cosine transform) would put
    a derivative kink at the seams; its fitted cubic ramp passes through
    the operator unchanged and the remainder is windowed in mode space."""
    if t <= 0:
        raise ValueError("t must be positive")
    ramp = _endpoint_ramp(f.values)
    coeff = dct(f.values - ramp, type=1)
    coeff *= _lowpass_window(coeff.size, t, family.taper_width)
    return f.with_values(idct(coeff, type=1) + ramp)


def verify_smoothing(f: Curve1D, m: int, l: int, ts, family: SmoothingFamily = DEFAULTS):
    """Empirical constants for |S(t)f|_m <= C t^(m-l) |f|_l and
    |f - S(t)f|_l <= C t^(l-m) |f|_m; zero-norm inputs report 0."""
    if not (m >= l >= 0):
        raise ValueError("need m >= l >= 0")
    a = family.alpha
    norm_l = holder_norm(f, l, a)
    norm_m = holder_norm(f, m, a)
    ratio_smooth = 0.0
    ratio_remain = 0.0
    for t in ts:
        sf = smooth(f, t, family)
        if norm_l > 1e-14:
            ratio_smooth = max(ratio_smooth,
                               holder_norm(sf, m, a) / (t ** (m - l) * norm_l))
        if norm_m > 1e-14:
            rem = f - sf
            ratio_remain = max(ratio_remain,
                               holder_norm(rem, l, a) / (t ** (l - m) * norm_m))
    return {"smooth_ratio": ratio_smooth, "remainder_ratio": ratio_remain,
            "m": m, "l": l, "ts": list(ts)}


def interp_check(f, i: int, m: int, l: int, alpha: float = 0.5) -> float:
    """Ratio |f|_i / (|f|_m^((l-i)/(l-m)) |f|_l^((i-m)/(l-m)))."""
    if not (m <= i <= l):
        raise ValueError("need m <= i <= l")
    if m == l:
        return 1.0
    nm = holder_norm(f, m, alpha)
    nl = holder_norm(f, l, alpha)
    if nm < 1e-14 or nl < 1e-14:
        raise DegenerateNormError("norm below 1e-14", nm=nm, nl=nl)
    ni = holder_norm(f, i, alpha)
    return ni / (nm ** ((l - i) / (l - m)) * nl ** ((i - m) / (l - m)))


def _cutoff(u):
    """C^1 smoothstep: 0 at 0, 1 at 1, flat at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def extend(f: Curve1D, margin: float = None) -> Curve1D:
    """Reflection extension to [a-D, b+D], tapered to 0 at the new endpoints
    by a smooth cutoff that equals 1 on the original interval."""
    L = f.b - f.a
    D = DEFAULTS.margin * L if margin is None else float(margin)
    if D <= 0:
        raise ValueError("margin must be positive")
    n = f.values.size
    h = L / (n - 1)
    M = min(int(np.ceil(D / h)), n - 1)
    D = M * h
    left = f.values[M:0:-1]
    right = f.values[-2:-M - 2:-1]
    vals = np.concatenate([left, f.values, right])
    x = np.linspace(f.a - D, f.b + D, vals.size)
    chi = np.ones_like(x)
    lmask = x < f.a
    rmask = x > f.b
    chi[lmask] = _cutoff((x[lmask] - (f.a - D)) / D)
    chi[rmask] = _cutoff(((f.b + D) - x[rmask]) / D)
    return Curve1D(f.a - D, f.b + D, vals * chi)


def invert_monotone(f: Curve1D, slope_floor: float = 1e-10) -> Curve1D:
    """Inverse of a strictly increasing curve; g(f(x)) = x at solver
    tolerance on the sample range."""
    slopes = np.diff(f.values) / np.diff(f.grid_x())
    if slopes.min() <= slope_floor:
        raise NotMonotoneError(
            f"min sampled slope {slopes.min():.3e} <= {slope_floor:.1e}"
        )
    mono = f if isinstance(f, Monotone1D) else Monotone1D(f.a, f.b, f.values)
    return MonotoneInverse(mono)
