"""Linear elliptic solves on the annulus with circulation boundary data.

Two boundary-value problems appear throughout:

* the Poisson problem: Delta(psi) = omega, psi = 0 on the outer circle,
  psi constant (unknown) on the inner circle, prescribed circulation.
  Solved by splitting psi = u + c*g with Delta(u) = omega, u = 0 on the
  whole boundary, Delta(g) = 0, g = 1 inside / 0 outside, and c fixed by
  the circulation constraint (linear in c).

* the bordered family E(c)phi = Delta(phi) + c*phi = k with the same
  homogeneous conditions and zero circulation.  The unknown inner trace
  is an explicit scalar unknown and the circulation functional is an
  explicit constraint row, so the system is square and solved by direct
  sparse LU.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NearSingularOperatorError, SingularSystemError
from .grid import AnnulusGrid, Field2D, circulation_row

_ND_THRESHOLD = 1e-6


def _interior_laplacian_entries(grid: AnnulusGrid):
    """COO entries of the 5-point polar Laplacian on interior rows."""
    Nr, Ns = grid.Nr, grid.Ns
    hr, ht = grid.hr, grid.htheta
    r = grid.r

    def idx(j, k):
        return j * Ns + (k % Ns)

    rows, cols, vals = [], [], []
    for j in range(1, Nr - 1):
        rj = r[j]
        c_rr = 1.0 / hr**2
        c_r = 1.0 / (2 * hr * rj)
        c_tt = 1.0 / (ht**2 * rj**2)
        for k in range(Ns):
            row = idx(j, k)
            rows += [row] * 5
            cols += [idx(j + 1, k), idx(j - 1, k), idx(j, k + 1), idx(j, k - 1), row]
            vals += [c_rr + c_r, c_rr - c_r, c_tt, c_tt, -2 * c_rr - 2 * c_tt]
    return rows, cols, vals


class _DirichletOperator:
    """Laplacian with Dirichlet rows on both circles; cached factorization."""

    def __init__(self, grid: AnnulusGrid):
        Nr, Ns = grid.Nr, grid.Ns
        n = Nr * Ns
        rows, cols, vals = _interior_laplacian_entries(grid)
        for k in range(Ns):                      # boundary rows: identity
            rows += [k, (Nr - 1) * Ns + k]
            cols += [k, (Nr - 1) * Ns + k]
            vals += [1.0, 1.0]
        A = sp.csc_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))
        self.grid = grid
        self.lu = spla.splu(A)

    def solve(self, rhs_interior, inner_value, outer_value):
        g = self.grid
        rhs = rhs_interior.copy()
        rhs[0, :] = inner_value
        rhs[-1, :] = outer_value
        sol = self.lu.solve(rhs.ravel())
        return g.field(sol.reshape(g.Nr, g.Ns))


_dirichlet_cache: dict = {}


def _dirichlet(grid: AnnulusGrid) -> _DirichletOperator:
    key = id(grid)
    op = _dirichlet_cache.get(key)
    if op is None:
        op = _DirichletOperator(grid)
        _dirichlet_cache[key] = op
    return op


def solve_poisson(omega: Field2D, gamma: float):
    """Stream function of a vorticity field with prescribed circulation.

    Returns (psi, inner_value); the discrete circulation of psi equals
    gamma to rounding because c solves the constraint exactly.
    """
    grid = omega.grid
    op = _dirichlet(grid)
    u = op.solve(omega.values, 0.0, 0.0)
    gblend = op.solve(np.zeros_like(omega.values), 1.0, 0.0)
    crow = circulation_row(grid)
    circ_u = float(np.sum(crow * u.values))
    circ_g = float(np.sum(crow * gblend.values))
    if abs(circ_g) < 1e-12:
        raise SingularSystemError("harmonic blend has zero circulation")
    c = (gamma - circ_u) / circ_g
    psi = grid.field(u.values + c * gblend.values)
    return psi, c


@dataclass(frozen=True, eq=False)
class BorderedSystem:
    """Discrete Delta + c with the zero-trace/zero-circulation conditions,
    bordered by the unknown inner-boundary constant."""

    grid: AnnulusGrid
    matrix: object            # csc
    lu: object = None

    @property
    def n_unknowns(self):
        return self.grid.Nr * self.grid.Ns + 1


def bordered_system(grid: AnnulusGrid, c: Field2D | None, factorize=True) -> BorderedSystem:
    Nr, Ns = grid.Nr, grid.Ns
    n = Nr * Ns
    rows, cols, vals = _interior_laplacian_entries(grid)
    if c is not None:
        for j in range(1, Nr - 1):
            for k in range(Ns):
                rows.append(j * Ns + k)
                cols.append(j * Ns + k)
                vals.append(c.values[j, k])
    for k in range(Ns):                 # outer Dirichlet rows
        row = (Nr - 1) * Ns + k
        rows.append(row)
        cols.append(row)
        vals.append(1.0)
    for k in range(Ns):                 # inner rows tie the trace to the scalar
        rows += [k, k]
        cols += [k, n]
        vals += [1.0, -1.0]
    crow = circulation_row(grid)        # constraint row
    jj, kk = np.nonzero(crow)
    for j, k in zip(jj, kk):
        rows.append(n)
        cols.append(j * Ns + k)
        vals.append(crow[j, k])
    A = sp.csc_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n + 1, n + 1)))
    lu = spla.splu(A) if factorize else None
    return BorderedSystem(grid, A, lu)


def bordered_solve(system: BorderedSystem, k: Field2D, circulation_value=0.0):
    """Solve the bordered system; returns (phi, inner_value)."""
    grid = system.grid
    rhs = np.zeros(system.n_unknowns)
    rhs[:-1] = k.values.ravel()
    rhs[: grid.Ns] = 0.0                       # inner tie rows
    rhs[(grid.Nr - 1) * grid.Ns: grid.Nr * grid.Ns] = 0.0
    rhs[-1] = circulation_value
    sol = system.lu.solve(rhs)
    phi = grid.field(sol[:-1].reshape(grid.Nr, grid.Ns))
    return phi, float(sol[-1])


def solve_ve(c: Field2D, k: Field2D, system: BorderedSystem | None = None) -> Field2D:
    """Inverse of the family Delta + c under the zero-circulation conditions.

    Raises near-singular-operator (with the sigma_min estimate) when the
    bordered matrix is numerically singular, which is the discrete signal
    that c left the invertible neighborhood.
    """
    if system is None:
        system = bordered_system(c.grid, c)
    try:
        phi, _ = bordered_solve(system, k)
    except RuntimeError as exc:  # splu singular
        raise NearSingularOperatorError(str(exc), sigma_min=0.0) from exc
    rhs_norm = max(np.abs(k.values).max(), 1e-300)
    if not np.all(np.isfinite(phi.values)) or np.abs(phi.values).max() > 1e14 * rhs_norm:
        est = sigma_min_estimate(system)
        raise NearSingularOperatorError("bordered solve blew up", sigma_min=est)
    return phi


def sigma_min_estimate(system: BorderedSystem, iterations=20, tol=1e-8):
    """Smallest singular value by inverse power iteration on A^T A."""
    lu = system.lu
    n = system.n_unknowns
    rng = np.random.default_rng(7)
    x = rng.normal(size=n)
    x /= np.linalg.norm(x)
    prev = np.inf
    sigma = np.inf
    for _ in range(iterations):
        y = lu.solve(x)                 # A^{-1} x
        z = lu.solve(y, trans="T")      # A^{-T} A^{-1} x
        nz = np.linalg.norm(z)
        if nz == 0 or not np.isfinite(nz):
            return 0.0
        sigma = 1.0 / np.sqrt(nz)
        x = z / nz
        if abs(sigma - prev) < tol * max(sigma, 1e-300):
            break
        prev = sigma
    return float(sigma)


def operator_norm_estimate(system: BorderedSystem):
    return float(spla.onenormest(system.matrix))


@dataclass(frozen=True)
class NdReport:
    sigma_min: float
    op_norm: float
    threshold: float
    nondegenerate: bool


def check_nd1(state, threshold=_ND_THRESHOLD, dense=False) -> NdReport:
    """Invertibility margin of Delta - F'(psi) with the zero-circulation
    conditions at a steady state: smallest singular value of the bordered
    matrix, relative to its operator norm."""
    grid = state.psi.grid
    c = grid.field(-state.F.d1(state.psi.values))
    system = bordered_system(grid, c)
    if dense:
        sv = np.linalg.svd(system.matrix.toarray(), compute_uv=False)
        sigma, opnorm = float(sv[-1]), float(sv[0])
    else:
        sigma = sigma_min_estimate(system)
        opnorm = operator_norm_estimate(system)
    return NdReport(sigma, opnorm, threshold, sigma > threshold * opnorm)


def principal_eigenvalue(grid: AnnulusGrid, n_check=4):
    """Smallest lam > 0 making Delta + lam singular under the
    zero-circulation conditions; dense generalized eigensolve (coarse
    grids only)."""
    import scipy.linalg as la

    system = bordered_system(grid, None, factorize=False)
    A = system.matrix.toarray()
    n = grid.Nr * grid.Ns
    E = np.zeros_like(A)
    mask = np.zeros(n + 1, dtype=bool)
    for j in range(1, grid.Nr - 1):
        mask[j * grid.Ns:(j + 1) * grid.Ns] = True
    E[np.where(mask)[0], np.where(mask)[0]] = 1.0
    vals = la.eig(A, -E, right=False)
    vals = vals[np.isfinite(vals)]
    real = vals[np.abs(vals.imag) < 1e-8].real
    pos = np.sort(real[real > 1e-10])
    if pos.size == 0:
        raise SingularSystemError("no positive eigenvalue found")
    return float(pos[0])
