"""Profile-to-orbit map T(F) (the inverse distribution function of the
steady vorticity), its derivative, a tame right-inverse, and the smoothed
Newton iteration that inverts T near a nondegenerate reference state.

The derivative splits as DT(F)f = B(F)f + KT(F)f with B(F)f the
composition with the stream distribution inverse (invertible up to the
gauge below min psi) and KT a smoothing remainder driven by one linear
elliptic solve.  Solving DT(F)f = h uses the factorization through
M(F) = Id + K(F), K(F) = KT(F) VB(F): assemble M by collocation on the
area grid, invert densely, and map back with VB.

The iteration is the smoothed Newton scheme
    F_{n+1} = F_n - S(t_n) L(F_n) (T(F_n) - g_target),   t_n = A**(kappa**n)
whose parameters must satisfy the convergence constraints checked by
MoserConfig.validate().
"""

from __future__ import annotations

import io
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .curves import Curve1D, Monotone1D
from .elliptic import bordered_solve, bordered_system
from .errors import (DivergedError, InnerSolveFailureError, NotMonotoneError,
                     SingularIdPlusKError)
from .orbit import (LevelChart, _aprime_values, dist_fn, j_over_grad,
                    level_chart)
from .steady import Profile1D, SteadyState, solve_steady
from .tame import smooth

N_MU = 129


@dataclass(frozen=True)
class MoserConfig:
    A: float = 2.0
    kappa: float = 1.35
    mu: float = 1.6
    beta: float = 3.0
    j: int = 9
    max_iter: int = 30
    floor_tol: float = 1e-8

    def validate(self):
        if not (1.0 < self.kappa < 2.0):
            raise ValueError(f"need 1 < kappa < 2, got {self.kappa}")
        if self.mu < 1.0 / (2.0 - self.kappa):
            raise ValueError(f"need mu >= 1/(2-kappa) = "
                             f"{1.0/(2.0-self.kappa):.4g}, got {self.mu}")
        if -self.beta * (self.kappa - 1.0) + 1.0 >= 0:
            raise ValueError(f"need beta > 1/(kappa-1) = "
                             f"{1.0/(self.kappa-1.0):.4g}, got {self.beta}")
        gap = self.mu * self.kappa**2 + self.kappa + 1.0 - self.j + self.beta
        if gap >= 0:
            raise ValueError(f"need mu*kappa^2 + kappa + 1 - j + beta < 0, "
                             f"got {gap:.4g}")
        if self.A <= 1.0:
            raise ValueError("need A > 1")
        return self

    def schedule(self, n):
        # exact while representable; far beyond any grid Nyquist the
        # smoothing is the identity, so the cap is inert
        exponent = self.kappa**n * np.log(self.A)
        if exponent > np.log(1e12):
            return 1e12
        return self.A ** (self.kappa ** n)


@dataclass
class MoserTrace:
    columns = ("n", "t_n", "residual", "update_norm", "flags")
    rows: list = field(default_factory=list)
    final_cross_check: float = np.nan

    def add(self, n, t_n, residual, update_norm, flags=""):
        self.rows.append((n, t_n, residual, update_norm, flags))

    @property
    def residuals(self):
        return np.array([r[2] for r in self.rows])

    @property
    def repair_count(self):
        return sum(1 for r in self.rows if "repair" in r[4])

    def to_csv(self, path_or_buf):
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for n, t, res, up, fl in self.rows:
            buf.write(f"{n},{float(t)!r},{float(res)!r},{float(up)!r},{fl}\n")
        text = buf.getvalue()
        if isinstance(path_or_buf, (str, bytes)):
            with open(path_or_buf, "w", newline="\n") as fh:
                fh.write(text)
        else:
            path_or_buf.write(text)
        return text


# ---------------------------------------------------------------------------
# per-state workspace: stream chart, distribution, factorized linearization
# ---------------------------------------------------------------------------

class StateWorkspace:
    def __init__(self, state: SteadyState, n_mu=N_MU):
        g = state.psi.grid
        self.state = state
        self.n_mu = n_mu
        # the stream travel time varies by orders of magnitude across
        # levels, so the chart takes extra rows to hold the area budget
        self.chart: LevelChart = level_chart(state.psi, Nt=max(2 * g.Nr, 128))
        self.A_psi, self.A_psi_inv = dist_fn(state.psi, self.chart)
        self.mu = np.linspace(0.0, g.area, n_mu)
        self.lam_mu = self.A_psi_inv(self.mu)           # psi-levels at mu
        j1 = _aprime_values(self.chart)                 # A_psi'(lambda)
        self._j1_spline = CubicSpline(self.chart.levels, j1)
        self.j1_mu = self._j1_spline(self.lam_mu)
        # (d/dmu) A_omega^{-1} = F'(lambda(mu)) / A_psi'(lambda(mu))
        self.dainv_omega = state.F.d1(self.lam_mu) / self.j1_mu
        self.ve_system = bordered_system(
            g, g.field(-state.F.d1(state.psi.values)))
        self._id_plus_k = None

    def t_values(self):
        """T(F) samples on the area grid: F composed with the stream
        distribution inverse."""
        return self.state.F(self.lam_mu)

    def ktilde(self, phi):
        """Smoothing part of DT: (d A_omega^{-1}/dmu) times the level mean
        transport of phi."""
        jphi = j_over_grad(self.chart, phi).values
        jphi_mu = CubicSpline(self.chart.levels, jphi)(self.lam_mu)
        return self.dainv_omega * jphi_mu

    def linearized_solve(self, source_field):
        phi, _ = bordered_solve(self.ve_system, source_field)
        return phi

    def assembled_id_plus_k(self):
        if self._id_plus_k is None:
            n = self.n_mu
            M = np.eye(n)
            for jcol in range(n):
                e = np.zeros(n)
                e[jcol] = 1.0
                M[:, jcol] += _k_values(self, Curve1D(0.0, self.mu[-1], e))
            self._id_plus_k = M
        return self._id_plus_k


_workspaces: "weakref.WeakKeyDictionary[SteadyState, StateWorkspace]" = (
    weakref.WeakKeyDictionary())


def workspace(state: SteadyState, n_mu=N_MU) -> StateWorkspace:
    ws = _workspaces.get(state)
    if ws is None or ws.n_mu != n_mu:
        ws = StateWorkspace(state, n_mu)
        _workspaces[state] = ws
    return ws


# ---------------------------------------------------------------------------
# T, DT, VB, K, VM, L
# ---------------------------------------------------------------------------

def t_map(F: Profile1D, gamma: float, grid=None, psi0=None, n_mu=N_MU,
          cross_check=True, mismatch_rel=None):
    """Orbit label of the steady state of profile F: the inverse
    distribution function of its vorticity on [0, |domain|].

    Computed through the stream-function chart (regularized by the
    elliptic solve); the direct vorticity-chart computation is used as a
    cross-check and a mismatch beyond ~5 h^2 relative is reported.
    """
    import warnings

    state = solve_steady(F, gamma, psi0=psi0, grid=grid)
    ws = workspace(state, n_mu)
    vals = ws.t_values()
    curve = Monotone1D(0.0, state.psi.grid.area, vals)
    if cross_check:
        _, ainv_direct = dist_fn(state.omega)
        direct = ainv_direct(ws.mu)
        scale = max(float(np.ptp(vals)), 1e-300)
        tol = (5 * state.psi.grid.h**2) if mismatch_rel is None else mismatch_rel
        gap = float(np.abs(direct - vals).max()) / scale
        if gap > tol:
            warnings.warn(f"distribution paths disagree by {gap:.2e} "
                          f"(relative), tolerance {tol:.2e}", stacklevel=2)
    return curve, state


def dt(state: SteadyState, f, n_mu=N_MU) -> Curve1D:
    """Derivative of the orbit label in the profile direction f."""
    ws = workspace(state, n_mu)
    g = state.psi.grid
    b_part = f(ws.lam_mu)
    phi = ws.linearized_solve(g.field(f(state.psi.values)))
    return Curve1D(0.0, g.area, b_part + ws.ktilde(phi))


class VbDirection(Curve1D):
    """Profile direction g(A_psi(s)) on range(psi), continued below
    min(psi) linearly (slope matched at the junction, where the gauge is
    free).  Evaluates through the exact composition; the uniform samples
    exist for smoothing and arithmetic."""

    def __init__(self, gcurve, a_psi, m, cbar, n_samples):
        self._g = gcurve
        self._a_psi = a_psi
        self._m = float(m)
        self._slope0 = float(gcurve.d1(a_psi.values[0])) * \
            float(a_psi.d1(np.array([m]))[0])
        self._anchor = float(gcurve(a_psi.values[0]))
        s = np.linspace(cbar, 0.0, n_samples)
        super().__init__(cbar, 0.0, self._compose(s))

    def _compose(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        above = x >= self._m
        out[above] = self._g(np.asarray(self._a_psi(np.clip(x[above], self._m, 0.0))))
        out[~above] = self._anchor + self._slope0 * (x[~above] - self._m)
        return out

    def __call__(self, x):
        return self._compose(x)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        above = x >= self._m
        xa = np.clip(x[above], self._m, 0.0)
        out[above] = self._g.d1(np.asarray(self._a_psi(xa))) * self._a_psi.d1(xa)
        out[~above] = self._slope0
        return out

    def with_values(self, values):
        return Curve1D(self.a, self.b, values)


def vb(state: SteadyState, gcurve: Curve1D, n_mu=N_MU):
    """Right-inverse of the composition part of DT."""
    ws = workspace(state, n_mu)
    return VbDirection(gcurve, ws.A_psi, ws.chart.omega_min,
                       state.F.cbar, state.F.samples.size)


def _k_values(ws: StateWorkspace, gcurve: Curve1D):
    state = ws.state
    f = vb(state, gcurve, ws.n_mu)
    phi = ws.linearized_solve(state.psi.grid.field(f(state.psi.values)))
    return ws.ktilde(phi)


def k_apply(state: SteadyState, gcurve: Curve1D, n_mu=N_MU) -> Curve1D:
    """Compact part of the normalized derivative: K(F)g = DT(F)VB(F)g - g."""
    ws = workspace(state, n_mu)
    return Curve1D(0.0, state.psi.grid.area, _k_values(ws, gcurve))


def assemble_id_plus_k(state: SteadyState, n_mu=N_MU):
    return workspace(state, n_mu).assembled_id_plus_k()


def vm(state: SteadyState, h: Curve1D, n_mu=N_MU, sigma_floor=1e-8) -> Curve1D:
    """Solve (Id + K(F)) g = h by dense collocation on the area grid."""
    ws = workspace(state, n_mu)
    M = ws.assembled_id_plus_k()
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] < sigma_floor * sv[0]:
        raise SingularIdPlusKError(
            f"Id+K nearly singular: sigma_min/sigma_max = {sv[-1]/sv[0]:.3e}",
            sigma_min=float(sv[-1]))
    g = np.linalg.solve(M, h(ws.mu))
    return Curve1D(0.0, state.psi.grid.area, g)


def right_inverse(state: SteadyState, h: Curve1D, n_mu=N_MU):
    """L(F)h = VB(F) VM(F) h; satisfies dt(state, L h) = h up to
    collocation accuracy."""
    return vb(state, vm(state, h, n_mu), n_mu)


# ---------------------------------------------------------------------------
# the smoothed Newton iteration
# ---------------------------------------------------------------------------

def _repair_monotone(samples, h_s, floor_slope):
    out = samples.copy()
    for i in range(out.size - 1):
        lo = out[i] + floor_slope * h_s
        if out[i + 1] < lo:
            out[i + 1] = lo
    return out


def moser_solve(F0: Profile1D, gamma: float, g_target: Monotone1D,
                cfg: MoserConfig = MoserConfig(), grid=None, n_mu=N_MU):
    """Invert the orbit label map: find F with T(F) = g_target near F0.

    Returns (profile, steady state, trace).  The residual trace records
    t_n, the sup-norm residual, the C1 update norm, and repair flags; the
    final state carries the direct vorticity-chart cross-check in
    trace.final_cross_check.
    """
    cfg.validate()
    F = F0
    ref_slope = F0.min_slope()
    if ref_slope <= 0:
        raise NotMonotoneError("initial profile must be strictly increasing")
    h_s = abs(F0.cbar) / (F0.samples.size - 1)
    trace = MoserTrace()
    prev_residual = np.inf
    grow_count = 0
    state = None
    psi0 = None
    for n in range(cfg.max_iter):
        try:
            state = solve_steady(F, gamma, psi0=psi0, grid=grid)
        except Exception as exc:
            raise InnerSolveFailureError(
                f"steady solve failed at iteration {n}: {exc}",
                iteration=n) from exc
        psi0 = state.psi
        ws = workspace(state, n_mu)
        resid_vals = ws.t_values() - g_target(ws.mu)
        residual = float(np.abs(resid_vals).max())
        t_n = cfg.schedule(n)
        if residual < cfg.floor_tol:
            trace.add(n, t_n, residual, 0.0, "converged")
            break
        if residual > prev_residual:
            grow_count += 1
            if grow_count >= 3:
                trace.add(n, t_n, residual, 0.0, "diverged")
                raise DivergedError(
                    f"residual grew 3 consecutive steps (now {residual:.3e})",
                    trace=trace)
        else:
            grow_count = 0
        prev_residual = residual

        h_curve = Curve1D(0.0, state.psi.grid.area, resid_vals)
        f_dir = right_inverse(state, h_curve, n_mu)
        update = smooth(f_dir, t_n)
        flags = []
        trunc = np.abs(f_dir.values - update.values).max()
        if trunc > 0.1 * max(np.abs(f_dir.values).max(), 1e-300):
            flags.append("truncated")
        new_samples = F.samples - update.values
        slopes = np.diff(new_samples) / h_s
        if slopes.min() < 0.1 * ref_slope:
            new_samples = _repair_monotone(new_samples, h_s, 0.1 * ref_slope)
            flags.append("repair")
        flags = "+".join(flags)
        update_norm = Curve1D(F.cbar, 0.0, new_samples - F.samples).c1_norm()
        trace.add(n, t_n, residual, update_norm, flags)
        F = F.with_samples(new_samples, strictly_monotone=False)
    else:
        # max_iter exhausted without reaching the floor
        pass
    # cross-check the recovered state against the direct vorticity path
    _, ainv_direct = dist_fn(state.omega)
    ws = workspace(state, n_mu)
    trace.final_cross_check = float(
        np.abs(ainv_direct(ws.mu) - g_target(ws.mu)).max())
    return F, state, trace


@dataclass(frozen=True)
class UniquenessReport:
    q_distance: float
    psi_distance: float
    tol: float
    calibration: float

    @property
    def same_orbit(self):
        return self.q_distance < self.tol

    @property
    def same_state(self):
        return self.psi_distance < 10 * self.tol * self.calibration

    @property
    def verdict(self):
        if not self.same_orbit:
            return "different-orbits"
        return "same-orbit-same-state" if self.same_state else "same-orbit-distinct-states"


def uniqueness_probe(state_a: SteadyState, state_b: SteadyState, tol,
                     calibration=1.0, n_mu=N_MU) -> UniquenessReport:
    """Compare orbit labels and stream functions of two nearby states:
    on a shared orbit the states must agree."""
    _, qa = dist_fn(state_a.omega)
    _, qb = dist_fn(state_b.omega)
    mu = np.linspace(0.0, state_a.psi.grid.area, n_mu)
    q_dist = float(np.abs(qa(mu) - qb(mu)).max())
    psi_dist = float(np.abs(state_a.psi.values - state_b.psi.values).max())
    return UniquenessReport(q_dist, psi_dist, float(tol), float(calibration))


# ---------------------------------------------------------------------------
# config file I/O: flat key=value lines
# ---------------------------------------------------------------------------

def config_to_text(cfg: MoserConfig) -> str:
    return "".join(f"{k}={getattr(cfg, k)}\n" for k in
                   ("A", "kappa", "mu", "beta", "j", "max_iter", "floor_tol"))


def config_from_text(text: str) -> MoserConfig:
    kw = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key in ("j", "max_iter"):
            kw[key] = int(val)
        elif key in ("A", "kappa", "mu", "beta", "floor_tol"):
            kw[key] = float(val)
        else:
            raise ValueError(f"unknown config key {key!r}")
    return MoserConfig(**kw)
