"""Nonlinear steady solver: psi with Delta(psi) = F(psi), zero outer trace,
constant inner trace, prescribed circulation, plus its first and second
derivatives with respect to the profile F.

Newton linearization: the correction phi solves
Delta(phi) - F'(psi)phi = F(psi) - Delta(psi) under the zero-circulation
conditions, so each step is one bordered elliptic solve.  Full steps with
residual-halving damping (at most 5 halvings per step).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .elliptic import bordered_system, bordered_solve, solve_poisson
from .errors import NoConvergenceError, NotMonotoneError, RangeEscapeError
from .grid import Field2D, gradient, integrate, laplacian, make_annulus

TOL_NEWTON = 1e-9
MAX_NEWTON = 50


class Profile1D:
    """Function F on a fixed interval [cbar, 0] given by uniform samples
    and a C^2 cubic interpolant (so F' and F'' are available)."""

    def __init__(self, cbar, samples, strictly_monotone=False):
        if cbar >= 0:
            raise ValueError("interval must be [cbar, 0] with cbar < 0")
        samples = np.asarray(samples, dtype=float)
        if not np.all(np.isfinite(samples)):
            raise ValueError("non-finite profile samples")
        self.cbar = float(cbar)
        self.samples = samples
        self._spline = CubicSpline(self.grid_s(), samples)
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)
        self.strictly_monotone = bool(strictly_monotone)
        if strictly_monotone:
            s = self.grid_s()
            probe = np.sort(np.concatenate([s, 0.5 * (s[1:] + s[:-1])]))
            if self._d1(probe).min() <= 0:
                raise NotMonotoneError("profile flagged strictly-monotone but "
                                       "F' <= 0 at a node or midpoint")

    @classmethod
    def from_callable(cls, fn, cbar, n=513, strictly_monotone=False):
        s = np.linspace(cbar, 0.0, n)
        return cls(cbar, fn(s), strictly_monotone=strictly_monotone)

    def grid_s(self):
        return np.linspace(self.cbar, 0.0, self.samples.size)

    def __call__(self, s):
        return self._spline(s)

    def d1(self, s):
        return self._d1(s)

    def d2(self, s):
        return self._d2(s)

    def with_samples(self, samples, strictly_monotone=None):
        if strictly_monotone is None:
            strictly_monotone = self.strictly_monotone
        return Profile1D(self.cbar, samples, strictly_monotone=strictly_monotone)

    def min_slope(self):
        return float(np.min(np.diff(self.samples)) / (abs(self.cbar) / (self.samples.size - 1)))


@dataclass(frozen=True, eq=False)
class SteadyState:
    """Converged steady bundle; omega = F(psi) node-wise by construction."""

    F: Profile1D
    psi: Field2D
    omega: Field2D
    gamma: float
    inner_value: float
    newton_residual: float


def _interior_residual(psi: Field2D, F: Profile1D) -> float:
    res = laplacian(psi).values - F(psi.values)
    return float(np.abs(res[1:-1, :]).max())


def solve_steady(F: Profile1D, gamma: float, psi0: Field2D | None = None,
                 grid=None, tol=TOL_NEWTON, max_iter=MAX_NEWTON) -> SteadyState:
    """Newton iteration for the steady state on a prescribed orbit class.

    psi0 defaults to the stream function of the constant vorticity F(0).
    Raises range-escape if an iterate leaves the profile interval, and
    no-convergence after max_iter steps.
    """
    if psi0 is None:
        if grid is None:
            raise ValueError("pass psi0 or grid")
        omega0 = grid.constant(F(0.0))
        psi, _ = solve_poisson(omega0, gamma)
    else:
        psi = psi0
        grid = psi0.grid

    # Profiles live on [cbar, 0]; iterates may poke slightly above 0 (the
    # spline extrapolates there), bounded by a fixed fraction of |cbar|.
    upper_margin = 0.15 * abs(F.cbar)

    def check_range(p):
        lo, hi = p.values.min(), p.values.max()
        if lo <= F.cbar or hi > upper_margin:
            raise RangeEscapeError(
                f"iterate range [{lo:.4g}, {hi:.4g}] escapes ({F.cbar:.4g}, "
                f"{upper_margin:.4g}]", lo=lo, hi=hi)

    check_range(psi)
    residual = _interior_residual(psi, F)
    for _ in range(max_iter):
        if residual < tol:
            break
        c = grid.field(-F.d1(psi.values))
        system = bordered_system(grid, c)
        rhs = grid.field(F(psi.values) - laplacian(psi).values)
        phi, _ = bordered_solve(system, rhs)
        step = 1.0
        for _ in range(6):
            cand = grid.field(psi.values + step * phi.values)
            cand_res = _interior_residual(cand, F)
            if cand_res < residual:
                break
            step *= 0.5
        else:
            raise NoConvergenceError("damping failed to reduce the residual",
                                     residual=residual)
        psi = cand
        check_range(psi)
        residual = cand_res
    else:
        raise NoConvergenceError(f"no convergence after {max_iter} iterations",
                                 residual=residual)
    # clamp the outer trace exactly (solver keeps it at rounding level)
    vals = psi.values.copy()
    vals[-1, :] = 0.0
    psi = grid.field(vals)
    omega = grid.field(F(psi.values))
    inner_value = float(psi.values[0, :].mean())
    return SteadyState(F, psi, omega, float(gamma), inner_value, residual)


def ds(state: SteadyState, f) -> Field2D:
    """First derivative of the steady state in a profile direction f:
    solves Delta(phi) - F'(psi)phi = f(psi) with zero-circulation data."""
    g = state.psi.grid
    c = g.field(-state.F.d1(state.psi.values))
    system = bordered_system(g, c)
    rhs = g.field(_eval_direction(f, state.psi.values))
    phi, _ = bordered_solve(system, rhs)
    return phi


def d2s(state: SteadyState, f1, f2) -> Field2D:
    """Second derivative: solves the linearized equation with source
    F''(psi) phi1 phi2 + f2'(psi) phi1 + f1'(psi) phi2."""
    g = state.psi.grid
    psi = state.psi.values
    c = g.field(-state.F.d1(psi))
    system = bordered_system(g, c)
    phi1 = bordered_solve(system, g.field(_eval_direction(f1, psi)))[0]
    phi2 = bordered_solve(system, g.field(_eval_direction(f2, psi)))[0]
    src = (state.F.d2(psi) * phi1.values * phi2.values
           + _eval_direction_d1(f2, psi) * phi1.values
           + _eval_direction_d1(f1, psi) * phi2.values)
    phi12, _ = bordered_solve(system, g.field(src))
    return phi12


def _eval_direction(f, x):
    # directions are Profile1D or Curve1D; both are callable
    return f(x)


def _eval_direction_d1(f, x):
    return f.d1(x)


def energy(state_or_omega, gamma=None) -> float:
    """Kinetic energy 0.5*int(|grad psi|^2), cross-checked against the
    vorticity form -0.5*int(omega psi) + 0.5*gamma*psi_inner."""
    if isinstance(state_or_omega, SteadyState):
        psi, omega = state_or_omega.psi, state_or_omega.omega
        gamma = state_or_omega.gamma
        inner_value = state_or_omega.inner_value
    else:
        if gamma is None:
            raise ValueError("gamma required when passing a vorticity field")
        psi, inner_value = solve_poisson(state_or_omega, gamma)
        omega = state_or_omega
    gr, gt = gradient(psi)
    e_grad = 0.5 * integrate(gr * gr + gt * gt)
    e_vort = -0.5 * integrate(omega * psi) + 0.5 * gamma * inner_value
    h2 = psi.grid.h**2
    scale = max(abs(e_grad), abs(e_vort), 1.0)
    if abs(e_grad - e_vort) > 200.0 * h2 * scale:
        import warnings

        warnings.warn(f"energy identity gap {abs(e_grad - e_vort):.3e} "
                      f"exceeds the discretization budget", stacklevel=2)
    return e_grad


def energy_pair(state: SteadyState):
    """Both energy formulas (gradient form, vorticity form)."""
    gr, gt = gradient(state.psi)
    e_grad = 0.5 * integrate(gr * gr + gt * gt)
    e_vort = (-0.5 * integrate(state.omega * state.psi)
              + 0.5 * state.gamma * state.inner_value)
    return e_grad, e_vort


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def state_to_json(state: SteadyState) -> str:
    g = state.psi.grid
    return json.dumps({
        "Ri": g.Ri, "Ro": g.Ro, "Nr": g.Nr, "Ns": g.Ns,
        "gamma": state.gamma,
        "inner_value": state.inner_value,
        "newton_residual": state.newton_residual,
        "profile_cbar": state.F.cbar,
        "profile_samples": state.F.samples.tolist(),
        "profile_monotone": state.F.strictly_monotone,
        "psi": state.psi.values.ravel().tolist(),
        "omega": state.omega.values.ravel().tolist(),
    })


def state_from_json(text: str) -> SteadyState:
    d = json.loads(text)
    g = make_annulus(d["Ri"], d["Ro"], d["Nr"], d["Ns"])
    F = Profile1D(d["profile_cbar"], np.array(d["profile_samples"]),
                  strictly_monotone=d.get("profile_monotone", False))
    psi = g.field(np.array(d["psi"]).reshape(g.Nr, g.Ns))
    omega = g.field(np.array(d["omega"]).reshape(g.Nr, g.Ns))
    return SteadyState(F, psi, omega, d["gamma"], d["inner_value"],
                       d["newton_residual"])


def default_cbar(grid, F0_at_zero, gamma):
    """Reference interval depth: twice the minimum of the constant-vorticity
    stream function (so perturbed solutions stay inside the interval)."""
    psi, _ = solve_poisson(grid.constant(F0_at_zero), gamma)
    m = float(psi.values.min())
    if m >= 0:
        m = -1.0
    return 2.0 * m
