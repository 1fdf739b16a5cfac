"""Assembly and direct solution of the discrete Stokes problem.

Unknowns are ordered velocity (component-major), pressure, then one scalar
multiplier enforcing ``int p_h = 0``::

    [ A   B^T  0 ] [u]   [0]
    [ B   0    m ] [p] = [0]
    [ 0   m^T  0 ] [l]   [0]

with ``A`` the vector Laplacian, ``B_ij = -(q_i, div v_j)`` and
``m_i = int q_i``.  Boundary velocities are fixed to the lift of ``g_h``.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .boundary import BoundaryField, IncompatibleDatumError, compatibility_defect
from .linalg import solve_symmetric
from .quadrature import triangle_rule
from .spaces import build_space, shape_dlam, shape_values

SOLVER_TOL = 1e-9
COMPAT_TOL = 1e-10
THREADS_ENV = "STOKES_ROUGHBC_THREADS"

METHODS = {"mini": "P1Bubble", "hood-taylor": "P2"}
_ALIASES = {"mini": "mini", "Mini": "mini", "hood-taylor": "hood-taylor", "HoodTaylor": "hood-taylor",
            "taylor-hood": "hood-taylor"}
_STABLE = {("P1Bubble", "P1Pressure"), ("P2", "P1Pressure")}
_CHUNK = 20000


class UnstablePairError(ValueError):
    pass


class SolverBreakdownError(RuntimeError):
    pass


def canonical_method(method):
    try:
        return _ALIASES[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; expected 'mini' or 'hood-taylor'") from None


def _threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _chunked(fn, n):
    """Apply ``fn(slice)`` over element chunks; results are kept in element order."""
    slices = [slice(i, min(i + _CHUNK, n)) for i in range(0, n, _CHUNK)] or [slice(0, 0)]
    nthreads = min(_threads(), len(slices))
    if nthreads == 1:
        parts = [fn(s) for s in slices]
    else:
        with ThreadPoolExecutor(nthreads) as pool:
            parts = list(pool.map(fn, slices))
    return [np.concatenate(p) for p in zip(*parts)]


def physical_gradients(mesh, family, lam, tris=slice(None)):
    """(nt, nq, nloc, 2) shape-function gradients at barycentric points ``lam``."""
    dl = shape_dlam(family, lam)
    return np.einsum("qlk,tkd->tqld", dl, mesh.grad_barycentric[tris])


def element_matrices(space_v, space_p, tris=slice(None)):
    """Local stiffness (nt, nl, nl), divergence (nt, 2, 3, nl) and mass-against-1 (nt, 3)."""
    mesh = space_v.mesh
    rule = triangle_rule(4)
    lam = rule.barycentric
    dphi = physical_gradients(mesh, space_v.family, lam, tris)
    psi = shape_values("P1", lam)
    wdet = 2.0 * mesh.signed_areas[tris, None] * rule.weights[None, :]
    stiff = np.einsum("tq,tqid,tqjd->tij", wdet, dphi, dphi)
    div = -np.einsum("tq,qi,tqjc->tcij", wdet, psi, dphi)
    mass1 = wdet @ psi
    return stiff, div, mass1


@dataclass
class SparseSystem:
    A: sp.csr_matrix
    B: sp.csr_matrix
    m: np.ndarray
    space_v: object = field(repr=False)
    space_p: object = field(repr=False)

    @property
    def nu(self):
        return self.A.shape[0]

    @property
    def np(self):
        return self.B.shape[0]

    @property
    def matrix(self):
        mcol = sp.csr_matrix(self.m[:, None])
        return sp.bmat([
            [self.A, self.B.T, None],
            [self.B, None, mcol],
            [None, mcol.T, None],
        ], format="csr")

    def labels(self):
        """Row/column labels: ('u', comp, dof), ('p', dof) and ('multiplier',)."""
        ns = self.space_v.nscalar
        out = [("u", c, i) for c in range(2) for i in range(ns)]
        out += [("p", i) for i in range(self.np)]
        return out + [("multiplier",)]


def assemble(space_v, space_p):
    """Velocity stiffness, divergence coupling and pressure mean vector."""
    if space_v.mesh is not space_p.mesh:
        raise ValueError("velocity and pressure spaces must share a mesh")
    if (space_v.family, space_p.family) not in _STABLE:
        raise UnstablePairError(f"{space_v.family}/{space_p.family} is not an inf-sup stable pair")
    stiff, div, mass1 = _chunked(lambda s: element_matrices(space_v, space_p, s), space_v.mesh.nt)
    c2d = space_v.cell_to_dof
    pc2d = space_p.cell_to_dof
    ns, npr = space_v.nscalar, space_p.nscalar
    nl = c2d.shape[1]

    rows = np.repeat(c2d, nl, axis=1).ravel()
    cols = np.tile(c2d, (1, nl)).ravel()
    a1 = sp.csr_matrix((stiff.ravel(), (rows, cols)), shape=(ns, ns))
    A = sp.block_diag([a1, a1], format="csr")

    brows = np.repeat(pc2d, nl, axis=1).ravel()
    bcols = np.tile(c2d, (1, 3)).ravel()
    blocks = [sp.csr_matrix((div[:, c].ravel(), (brows, bcols)), shape=(npr, ns)) for c in range(2)]
    B = sp.hstack(blocks, format="csr")
    m = np.bincount(pc2d.ravel(), weights=mass1.ravel(), minlength=npr)
    return SparseSystem(A, B, m, space_v, space_p)


@dataclass
class StokesSolution:
    mesh: object
    method: str
    space_v: object
    space_p: object
    u: np.ndarray
    p: np.ndarray
    multiplier: float
    gh: BoundaryField = None
    residual: float = 0.0

    def velocity(self, tri_ids, lam):
        return self.space_v.evaluate(self.u, tri_ids, lam)

    def velocity_gradient(self, tri_ids, lam):
        return self.space_v.gradient(self.u, tri_ids, lam)

    def pressure(self, tri_ids, lam):
        return self.space_p.evaluate(self.p, tri_ids, lam)[:, 0]

    def vertex_velocity(self):
        """(nv, 2) nodal velocity values at the mesh vertices."""
        u = self.space_v.split(self.u)
        return u[:, :self.mesh.nv].T.copy()


def lift_values(space_v, gh):
    """Boundary DOFs and their prescribed values so that the trace equals ``g_h``."""
    tr = gh.trace
    ns = space_v.nscalar
    dofs = [tr.nodes]
    vals = [gh.values]
    if space_v.family == "P2":
        dofs.append(space_v.mesh.nv + tr.edge_ids)
        vals.append(0.5 * (gh.values + np.roll(gh.values, -1, axis=0)))
    dofs = np.concatenate(dofs)
    vals = np.vstack(vals)
    return np.concatenate([dofs, ns + dofs]), np.concatenate([vals[:, 0], vals[:, 1]])


def spaces_for(mesh, method):
    method = canonical_method(method)
    return build_space(mesh, METHODS[method]), build_space(mesh, "P1Pressure")


def solve(mesh, method, gh, check_compatibility=True):
    """Discrete Stokes solution with ``u_h = g_h`` on the boundary and zero-mean pressure."""
    method = canonical_method(method)
    if check_compatibility:
        defect = compatibility_defect(gh)
        scale = (1.0 + np.abs(gh.values).max()) * gh.trace.length
        if abs(defect) > COMPAT_TOL * scale:
            raise IncompatibleDatumError(f"boundary field has net flux {defect:.3e}")
    space_v, space_p = spaces_for(mesh, method)
    system = assemble(space_v, space_p)
    K = system.matrix.tocsr()
    n = K.shape[0]
    bdofs, bvals = lift_values(space_v, gh)
    x = np.zeros(n)
    x[bdofs] = bvals
    free = np.ones(n, dtype=bool)
    free[bdofs] = False
    rhs = -(K[free][:, bdofs] @ bvals)
    Kff = K[free][:, free]
    if np.linalg.norm(rhs) == 0.0:
        rel = 0.0
    else:
        try:
            x[free], rel = solve_symmetric(Kff, rhs)
        except (RuntimeError, ValueError) as exc:
            raise SolverBreakdownError(f"factorization failed: {exc}") from exc
    if not np.isfinite(rel) or rel > SOLVER_TOL:
        raise SolverBreakdownError(f"linear solve residual {rel:.2e} exceeds {SOLVER_TOL}")
    nu = system.nu
    return StokesSolution(mesh, method, space_v, space_p, x[:nu], x[nu:nu + system.np], float(x[-1]),
                          gh, float(rel))


def interior_residual(sol):
    """Residual of the assembled system in the rows of the free unknowns."""
    system = assemble(sol.space_v, sol.space_p)
    x = np.concatenate([sol.u, sol.p, [sol.multiplier]])
    r = system.matrix @ x
    bdofs, _ = lift_values(sol.space_v, sol.gh)
    free = np.ones(len(x), dtype=bool)
    free[bdofs] = False
    return r[free]
