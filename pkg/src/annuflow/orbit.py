"""Level-set geometry of boundary-constant fields without critical points:
gradient-curve charts, loop integrals over level sets, distribution
functions and their first two derivatives, area-preserving pushforward,
and the tangency calculus of co-adjoint orbits.

The chart z(t,s) follows the gradient flow dz/dt = range * grad(w)/|grad w|^2
from seeds on the inner circle, so w(z(t,s)) = min w + t*(max w - min w) and
the s-curves are the level sets.  All level-set quantities are periodic
trapezoid sums over s, with field values interpolated bicubically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .curves import Curve1D, Monotone1D
from .elliptic import solve_ve
from .errors import (AreaMismatchError, CriticalPointError, NotInFplusError,
                     NotTangentError, NonpositiveFprimeError, TrajectoryExitError)
from .grid import Field2D, divergence, gradient, integrate, poisson_bracket

CHART_TOL = 1e-7
GRAD_FLOOR_REL = 1e-6
AREA_TOL_REL = 5e-3

_PAD = 4


class FieldSpline:
    """Bicubic interpolant of a Field2D, periodic in theta."""

    def __init__(self, f: Field2D):
        g = f.grid
        theta_ext = np.concatenate([g.theta[-_PAD:] - 2 * np.pi, g.theta,
                                    g.theta[:_PAD] + 2 * np.pi])
        vals_ext = np.concatenate([f.values[:, -_PAD:], f.values,
                                   f.values[:, :_PAD]], axis=1)
        self._spl = RectBivariateSpline(g.r, theta_ext, vals_ext, kx=3, ky=3)
        self.grid = g

    def _wrap(self, r, theta):
        return np.clip(r, self.grid.Ri, self.grid.Ro), np.mod(theta, 2 * np.pi)

    def val(self, r, theta):
        r, theta = self._wrap(r, theta)
        return self._spl.ev(r, theta)

    def dr(self, r, theta):
        r, theta = self._wrap(r, theta)
        return self._spl.ev(r, theta, dx=1)

    def dtheta(self, r, theta):
        r, theta = self._wrap(r, theta)
        return self._spl.ev(r, theta, dy=1)


@dataclass(frozen=True, eq=False)
class LevelChart:
    """Gradient-curve coordinates: row t is the level set at
    min w + t*(max w - min w); row 0 on the inner circle, row 1 on the
    outer one."""

    grid: object
    t: np.ndarray                 # (Nt,)
    r: np.ndarray                 # (Nt, Ns) radial positions
    theta: np.ndarray             # (Nt, Ns) unwrapped angular positions
    grad_norm: np.ndarray         # |grad w| at chart nodes
    arc_weight: np.ndarray        # |dz/ds| at chart nodes
    omega_min: float
    omega_max: float
    spline: FieldSpline = field(repr=False)

    @property
    def levels(self):
        return self.omega_min + self.t * (self.omega_max - self.omega_min)

    @property
    def ds(self):
        return 1.0 / self.r.shape[1]

    def residual(self):
        target = self.levels[:, None]
        return float(np.abs(self.spline.val(self.r, self.theta) - target).max())


def chart_to_json(chart: LevelChart) -> str:
    import json

    return json.dumps({
        "t": chart.t.tolist(),
        "r": chart.r.tolist(),
        "theta": chart.theta.tolist(),
        "grad_norm": chart.grad_norm.tolist(),
        "arc_weight": chart.arc_weight.tolist(),
        "omega_min": chart.omega_min,
        "omega_max": chart.omega_max,
    })


def _boundary_levels(omega: Field2D, tol_rel=1e-6):
    scale = max(float(np.ptp(omega.values)), 1e-300)
    wi = omega.values[0, :]
    wo = omega.values[-1, :]
    if np.ptp(wi) > tol_rel * scale or np.ptp(wo) > tol_rel * scale:
        raise NotInFplusError("field is not constant on the boundary circles",
                              inner_spread=float(np.ptp(wi)),
                              outer_spread=float(np.ptp(wo)))
    wmin, wmax = float(wi.mean()), float(wo.mean())
    if wmin >= wmax:
        raise NotInFplusError("inner boundary value must be below outer",
                              inner=wmin, outer=wmax)
    return wmin, wmax


def level_chart(omega: Field2D, Nt=None, chart_tol=CHART_TOL,
                grad_floor_rel=GRAD_FLOOR_REL) -> LevelChart:
    """Integrate the gradient-curve chart of a boundary-constant field
    with no critical points (inner value below outer value)."""
    g = omega.grid
    Nt = g.Nr if Nt is None else int(Nt)
    wmin, wmax = _boundary_levels(omega)
    rng = wmax - wmin
    floor = grad_floor_rel * rng

    gr, gt = gradient(omega)
    gn_grid = np.sqrt(gr.values**2 + gt.values**2)
    if gn_grid.min() < floor:
        raise CriticalPointError(
            f"|grad| {gn_grid.min():.3e} below floor {floor:.3e} on the grid")

    spl = FieldSpline(omega)
    Ns = g.Ns

    def rhs(_t, y):
        r = y[:Ns]
        th = y[Ns:]
        wr = spl.dr(r, th)
        wt = spl.dtheta(r, th)
        gradsq = wr**2 + (wt / r) ** 2
        if gradsq.min() < floor**2:
            raise CriticalPointError(
                f"|grad| fell below {floor:.3e} along a trajectory")
        return np.concatenate([rng * wr / gradsq, rng * wt / (r**2 * gradsq)])

    y0 = np.concatenate([np.full(Ns, g.Ri), g.theta.astype(float)])
    t_eval = np.linspace(0.0, 1.0, Nt)
    sol = solve_ivp(rhs, (0.0, 1.0), y0, t_eval=t_eval, rtol=1e-11, atol=1e-12,
                    max_step=0.1, dense_output=False)
    if not sol.success:
        raise CriticalPointError(f"chart integration failed: {sol.message}")
    r = sol.y[:Ns, :].T.copy()              # (Nt, Ns)
    theta = sol.y[Ns:, :].T.copy()
    overshoot = max(float((g.Ri - r).max()), float((r - g.Ro).max()))
    if overshoot > g.hr:
        raise TrajectoryExitError(f"chart left the annulus by {overshoot:.3e}")
    r = np.clip(r, g.Ri, g.Ro)
    r[0, :] = g.Ri
    r[-1, :] = np.where(np.abs(r[-1, :] - g.Ro) < 1e-5 * (g.Ro - g.Ri),
                        g.Ro, r[-1, :])

    wr = spl.dr(r, theta)
    wt = spl.dtheta(r, theta)
    gn = np.sqrt(wr**2 + (wt / r) ** 2)

    ds = 1.0 / Ns
    dr_ds = (np.roll(r, -1, axis=1) - np.roll(r, 1, axis=1)) / (2 * ds)
    dth = np.roll(theta, -1, axis=1) - np.roll(theta, 1, axis=1)
    dth = np.mod(dth + np.pi, 2 * np.pi) - np.pi
    dth_ds = dth / (2 * ds)
    arc = np.sqrt(dr_ds**2 + (r * dth_ds) ** 2)

    chart = LevelChart(g, t_eval, r, theta, gn, arc, wmin, wmax, spl)
    res = chart.residual()
    if res > chart_tol:
        raise CriticalPointError(
            f"chart level residual {res:.3e} exceeds {chart_tol:.1e}")
    if gn.min() <= 0:
        raise CriticalPointError("vanishing gradient at a chart node")
    return chart


# ---------------------------------------------------------------------------
# loop integrals over level sets
# ---------------------------------------------------------------------------

def _loop_sum(chart: LevelChart, node_values):
    """Periodic trapezoid of a chart-node sampled integrand over s."""
    return node_values.sum(axis=1) * chart.ds


def chart_values(chart: LevelChart, u: Field2D):
    return FieldSpline(u).val(chart.r, chart.theta)


def j_functional(chart: LevelChart, u: Field2D) -> Curve1D:
    """J u (lambda) = loop integral of u over the level set at lambda."""
    vals = chart_values(chart, u) * chart.arc_weight
    return Curve1D(chart.omega_min, chart.omega_max, _loop_sum(chart, vals))


def j_over_grad(chart: LevelChart, u: Field2D) -> Curve1D:
    """J(u/|grad w|): the loop integral weighted by travel time."""
    vals = chart_values(chart, u) / chart.grad_norm * chart.arc_weight
    return Curve1D(chart.omega_min, chart.omega_max, _loop_sum(chart, vals))


def _aprime_values(chart: LevelChart):
    vals = chart.arc_weight / chart.grad_norm
    return _loop_sum(chart, vals)


def dist_fn(omega: Field2D, chart: LevelChart = None, area_tol=AREA_TOL_REL):
    """Distribution function A(lambda) = |{w < lambda}| and its inverse.

    A is the cumulative integral of the travel-time loop integral; the raw
    endpoint is renormalized onto the exact annulus area (error if the
    discrepancy exceeds area_tol, which signals an under-resolved chart).
    """
    if chart is None:
        # internal charts take at least 64 rows: the travel-time integrand
        # can vary by two orders of magnitude across levels
        chart = level_chart(omega, Nt=max(omega.grid.Nr, 64))
    lam = chart.levels
    integrand = _aprime_values(chart)
    raw = CubicSpline(lam, integrand).antiderivative()(lam)
    total = chart.grid.area
    disc = (raw[-1] - total) / total
    if abs(disc) > area_tol:
        raise AreaMismatchError(
            f"raw area misses |domain| by {disc:.2%}", discrepancy=disc)
    vals = raw * (total / raw[-1])
    A = Monotone1D(chart.omega_min, chart.omega_max, vals)
    A.area_discrepancy = float(disc)
    Ainv = A.inverse()
    return A, Ainv


# ---------------------------------------------------------------------------
# pushforward along an area-preserving flow
# ---------------------------------------------------------------------------

def pushforward(omega: Field2D, alpha: Field2D, eps: float) -> Field2D:
    """Composition of w with the time-eps flow of the divergence-free field
    rot(alpha); alpha must be constant on each boundary circle so the flow
    is tangent to the boundary."""
    g = omega.grid
    if eps == 0.0:
        return g.field(omega.values.copy())
    aspl = FieldSpline(alpha)
    R, T = np.meshgrid(g.r, g.theta, indexing="ij")
    y0 = np.concatenate([R.ravel(), T.ravel()])
    n = R.size

    def rhs(_t, y):
        r = np.clip(y[:n], g.Ri, g.Ro)
        th = y[n:]
        ar = aspl.dr(r, th)
        at = aspl.dtheta(r, th)
        return np.concatenate([-at / r, ar / r])

    sol = solve_ivp(rhs, (0.0, eps), y0, rtol=1e-10, atol=1e-11,
                    max_step=abs(eps) / 4)
    if not sol.success:
        raise TrajectoryExitError(f"flow integration failed: {sol.message}")
    r_end = sol.y[:n, -1]
    th_end = sol.y[n:, -1]
    cell = g.hr
    if (g.Ri - r_end).max() > cell or (r_end - g.Ro).max() > cell:
        raise TrajectoryExitError("a trajectory left the annulus by more "
                                  "than one cell")
    wspl = FieldSpline(omega)
    vals = wspl.val(np.clip(r_end, g.Ri, g.Ro), th_end).reshape(g.Nr, g.Ns)
    # boundary rings are flow-invariant: keep their exact values
    vals[0, :] = omega.values[0, :]
    vals[-1, :] = omega.values[-1, :]
    return g.field(vals)


# ---------------------------------------------------------------------------
# first and second derivatives of the inverse distribution function
# ---------------------------------------------------------------------------

N_MU = 129


def _mu_grid(chart: LevelChart, n_mu):
    return np.linspace(0.0, chart.grid.area, n_mu)


def _compose_mu(chart: LevelChart, curve_vals, Ainv, n_mu):
    """Evaluate a level-grid curve at lambda(mu) on the uniform mu grid."""
    mu = _mu_grid(chart, n_mu)
    lam = Ainv(mu)
    spl = CubicSpline(chart.levels, curve_vals)
    return spl(np.clip(lam, chart.omega_min, chart.omega_max))


def dq(omega: Field2D, chart: LevelChart, nu: Field2D, n_mu=N_MU) -> Curve1D:
    """First derivative of the inverse distribution function in the
    direction nu: the level mean of nu, transported to the area variable."""
    _, Ainv = dist_fn(omega, chart)
    jnu = j_over_grad(chart, nu).values
    j1 = _aprime_values(chart)
    num = _compose_mu(chart, jnu, Ainv, n_mu)
    den = _compose_mu(chart, j1, Ainv, n_mu)
    return Curve1D(0.0, chart.grid.area, num / den)


def d2q(omega: Field2D, chart: LevelChart, nu1: Field2D, nu2: Field2D,
        n_mu=N_MU) -> Curve1D:
    """Second derivative of the inverse distribution function: the
    four-term closed form built from loop integrals of div(nu N/|grad w|)."""
    g = omega.grid
    _, Ainv = dist_fn(omega, chart)
    gr, gt = gradient(omega)
    gn = np.sqrt(gr.values**2 + gt.values**2)
    nr = g.field(gr.values / gn)
    nt = g.field(gt.values / gn)

    def div_term(weight_values):
        vr = g.field(weight_values / gn * nr.values)
        vt = g.field(weight_values / gn * nt.values)
        return divergence(vr, vt)

    w1 = div_term(nu1.values)
    w2 = div_term(nu2.values)
    w12 = div_term(nu1.values * nu2.values)
    w0 = div_term(np.ones_like(gn))

    def comp(curve):
        return _compose_mu(chart, curve.values, Ainv, n_mu)

    j1 = comp(Curve1D(chart.omega_min, chart.omega_max, _aprime_values(chart)))
    jn1 = comp(j_over_grad(chart, nu1))
    jn2 = comp(j_over_grad(chart, nu2))
    jw1 = comp(j_over_grad(chart, w1))
    jw2 = comp(j_over_grad(chart, w2))
    jw12 = comp(j_over_grad(chart, w12))
    jw0 = comp(j_over_grad(chart, w0))

    vals = (jn1 * jw2 / j1**2 + jn2 * jw1 / j1**2
            - jw0 * jn1 * jn2 / j1**3 - jw12 / j1)
    return Curve1D(0.0, chart.grid.area, vals)


# ---------------------------------------------------------------------------
# orbit tangency
# ---------------------------------------------------------------------------

def tangency_defect(chart: LevelChart, nu: Field2D) -> Curve1D:
    """Loop integrals of nu/|grad w|; identically zero exactly when nu is
    tangent to the orbit (a bracket {w, alpha} for some stream alpha)."""
    return j_over_grad(chart, nu)


def tangent_tolerance(chart: LevelChart, nu: Field2D, rel=1e-6):
    return rel * max(np.abs(nu.values).max(), 1e-300) * chart.grid.area


def is_tangent(chart: LevelChart, nu: Field2D, rel=1e-6) -> bool:
    return tangency_defect(chart, nu).max_norm() < tangent_tolerance(chart, nu, rel)


def project_tangent(chart: LevelChart, nu: Field2D) -> Field2D:
    """Remove the level means of nu so the compatibility integrals vanish."""
    g = chart.grid
    mean_vals = j_over_grad(chart, nu).values / _aprime_values(chart)
    spl = CubicSpline(chart.levels, mean_vals)
    R, T = np.meshgrid(g.r, g.theta, indexing="ij")
    omega_vals = chart.spline.val(R, T)
    return g.field(nu.values - spl(np.clip(omega_vals, chart.omega_min,
                                           chart.omega_max)))


def reconstruct_alpha(chart: LevelChart, nu: Field2D, tol_rel=1e-5) -> Field2D:
    """Solve {w, alpha} = nu for a stream function alpha by integrating
    nu/|grad w| along each level ring; alpha is normalized to zero
    arclength mean on every level (the additive function-of-w gauge)."""
    defect = tangency_defect(chart, nu)
    tol = tol_rel * max(np.abs(nu.values).max(), 1e-300) * chart.grid.area
    if defect.max_norm() > tol:
        raise NotTangentError(
            f"compatibility defect {defect.max_norm():.3e} exceeds {tol:.3e}",
            defect=defect.max_norm(), tol=tol)
    g = chart.grid
    integrand = chart_values(chart, nu) / chart.grad_norm * chart.arc_weight
    ds = chart.ds
    # cumulative trapezoid around each ring, starting at s = 0
    mid = 0.5 * (integrand + np.roll(integrand, -1, axis=1)) * ds
    alpha_chart = np.concatenate(
        [np.zeros((integrand.shape[0], 1)), np.cumsum(mid, axis=1)[:, :-1]],
        axis=1)
    ring_mean = (alpha_chart * chart.arc_weight).sum(axis=1) / chart.arc_weight.sum(axis=1)
    alpha_chart -= ring_mean[:, None]

    # resample ring values onto the uniform angular grid
    Nt = chart.t.size
    alpha_rows = np.empty((Nt, g.Ns))
    for i in range(Nt):
        th = np.mod(chart.theta[i], 2 * np.pi)
        order = np.argsort(th)
        th_s = th[order]
        va_s = alpha_chart[i, order]
        th_ext = np.concatenate([th_s[-_PAD:] - 2 * np.pi, th_s,
                                 th_s[:_PAD] + 2 * np.pi])
        va_ext = np.concatenate([va_s[-_PAD:], va_s, va_s[:_PAD]])
        alpha_rows[i] = CubicSpline(th_ext, va_ext)(g.theta)

    # interpolate rows in t at each node's own level coordinate
    R, T = np.meshgrid(g.r, g.theta, indexing="ij")
    tvals = (chart.spline.val(R, T) - chart.omega_min) / (chart.omega_max - chart.omega_min)
    tvals = np.clip(tvals, 0.0, 1.0)
    col_spl = CubicSpline(chart.t, alpha_rows, axis=0)
    out = np.empty((g.Nr, g.Ns))
    for k in range(g.Ns):
        out[:, k] = col_spl(tvals[:, k])[:, k]
    return g.field(out)


# ---------------------------------------------------------------------------
# energy second variation and the orbit-transversality check
# ---------------------------------------------------------------------------

def second_variation(state, alpha: Field2D) -> float:
    """Second derivative of the kinetic energy along the flow generated by
    alpha at a steady state: int |grad phi|^2 + int nu^2 / F'(psi) with
    nu = {w, alpha} and phi the zero-circulation stream function of nu."""
    fprime = state.F.d1(state.psi.values)
    if fprime.min() <= 0:
        raise NonpositiveFprimeError(
            f"F' must be positive on range(psi); min {fprime.min():.3e}")
    g = state.psi.grid
    nu = poisson_bracket(state.omega, alpha)
    phi = solve_ve(g.constant(0.0), nu)
    gr, gt = gradient(phi)
    return integrate(gr * gr + gt * gt) + integrate(nu * nu / g.field(fprime))


def check_nd2(state, threshold=1e-6, n_mu=N_MU):
    """Transversality of the steady-state family to the orbit foliation:
    smallest singular value of the assembled identity-plus-compact
    collocation matrix."""
    from . import moser
    from .elliptic import NdReport

    M = moser.assemble_id_plus_k(state, n_mu=n_mu)
    sv = np.linalg.svd(M, compute_uv=False)
    sigma, opnorm = float(sv[-1]), float(sv[0])
    return NdReport(sigma, opnorm, threshold, sigma > threshold * opnorm)
