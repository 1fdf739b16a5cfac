"""Residual error indicator for the velocity in L2 and the pressure in H^-1.

For every triangle ``T`` with diameter ``h_T``::

    eta_T^2 = h_T^4 ||-lap u_h + grad p_h||_T^2 + h_T^2 ||div u_h||_T^2
              + 1/2 sum_{interior e in dT} h_T^3 ||J_e||_e^2

where ``J_e`` is the jump of the normal stress ``du_h/dn - p_h n`` across
``e``.  Boundary edges carry no jump term.
"""
import math
from dataclasses import dataclass

import numpy as np

from .quadrature import segment_rule, triangle_rule
from .solver import physical_gradients
from .spaces import shape_d2lam


class BoundaryEdgeError(ValueError):
    pass


class InsufficientLevelsError(ValueError):
    pass


@dataclass
class IndicatorField:
    residual_term: np.ndarray
    div_term: np.ndarray
    jump_term: np.ndarray
    h: np.ndarray

    @property
    def eta_T(self):
        return np.sqrt(self.residual_term + self.div_term + self.jump_term)

    @property
    def eta_T_squared(self):
        return self.residual_term + self.div_term + self.jump_term

    @property
    def eta(self):
        return math.sqrt(math.fsum(self.eta_T_squared))


def outward_normals(mesh, edge_ids, tris):
    """Unit normal of each edge pointing out of the paired triangle."""
    e = mesh.edges[edge_ids]
    va, vb = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    d = vb - va
    n = np.column_stack([d[:, 1], -d[:, 0]]) / np.linalg.norm(d, axis=1)[:, None]
    centroid = mesh.vertices[mesh.triangles[tris]].mean(axis=1)
    flip = np.einsum("ij,ij->i", centroid - va, n) > 0
    n[flip] *= -1.0
    return n


def edge_barycentric(mesh, edge_ids, tris, s):
    """Barycentric coords in ``tris`` of the points ``(1-s) a + s b`` on each edge (a, b).

    Returns (len(edge_ids), len(s), 3).
    """
    e = mesh.edges[edge_ids]
    local = mesh.triangles[tris]
    ia = np.argmax(local == e[:, [0]], axis=1)
    ib = np.argmax(local == e[:, [1]], axis=1)
    lam = np.zeros((len(edge_ids), len(s), 3))
    rows = np.arange(len(edge_ids))
    lam[rows, :, ia] = 1.0 - s[None, :]
    lam[rows, :, ib] = s[None, :]
    return lam


def normal_stress(grad_u, p, n):
    """``grad_u n - p n`` with grad_u[..., c, d] = d u_c / d x_d."""
    return np.einsum("...cd,...d->...c", grad_u, n) - p[..., None] * n


def _side_stress(sol, edge_ids, tris, s):
    mesh = sol.mesh
    lam = edge_barycentric(mesh, edge_ids, tris, s)
    ne, nq = lam.shape[:2]
    tt = np.repeat(tris, nq)
    flat = lam.reshape(-1, 3)
    g = sol.velocity_gradient(tt, flat).reshape(ne, nq, 2, 2)
    p = sol.pressure(tt, flat).reshape(ne, nq)
    n = outward_normals(mesh, edge_ids, tris)
    return normal_stress(g, p, n[:, None, :])


def jump_values(sol, edge_ids, s):
    """``J_e`` at parameters ``s`` along each interior edge: (ne, ns, 2)."""
    edge_ids = np.atleast_1d(edge_ids)
    et = sol.mesh.edge_tris[edge_ids]
    if np.any(et[:, 1] < 0):
        raise BoundaryEdgeError("the normal-stress jump is only defined on interior edges")
    s = np.asarray(s, dtype=float)
    return _side_stress(sol, edge_ids, et[:, 0], s) + _side_stress(sol, edge_ids, et[:, 1], s)


class EdgeJump:
    """``J_e`` on one interior edge, parameterised by ``s`` in [0, 1] from ``edges[e][0]``."""

    def __init__(self, sol, e):
        self.sol = sol
        self.edge = int(e)
        a, b = sol.mesh.edges[self.edge]
        self.length = float(np.linalg.norm(sol.mesh.vertices[b] - sol.mesh.vertices[a]))
        jump_values(sol, [self.edge], [0.5])  # fail early on boundary edges

    def __call__(self, s):
        return jump_values(self.sol, [self.edge], np.atleast_1d(s))[0]

    @property
    def coefficients(self):
        """Monomial coefficients in ``s`` per component (degree <= 2), lowest first."""
        s = np.array([0.0, 0.5, 1.0])
        return np.polynomial.polynomial.polyfit(s, self(s), 2)

    def norm_squared(self):
        rule = segment_rule(5)
        return self.length * float(rule.weights @ np.sum(self(rule.points) ** 2, axis=1))


def edge_jump(sol, e):
    return EdgeJump(sol, e)


def indicators(sol):
    """Per-element indicator terms for a computed Stokes solution."""
    mesh = sol.mesh
    sv = sol.space_v
    rule = triangle_rule(4)
    lam = rule.barycentric
    h = mesh.diameters
    wdet = 2.0 * mesh.signed_areas[:, None] * rule.weights[None, :]
    glam = mesh.grad_barycentric
    local_u = sv.split(sol.u)[:, sv.cell_to_dof]  # (2, nt, nl)

    metric = np.einsum("tjd,tkd->tjk", glam, glam)
    lap_phi = np.einsum("qljk,tjk->tql", shape_d2lam(sv.family, lam), metric)
    lap_u = np.einsum("ctl,tql->tqc", local_u, lap_phi)
    grad_p = np.einsum("ti,tid->td", sol.p[mesh.triangles], glam)
    resid = -lap_u + grad_p[:, None, :]
    residual_term = h**4 * np.einsum("tq,tq->t", wdet, np.sum(resid**2, axis=2))

    dphi = physical_gradients(mesh, sv.family, lam)
    div = np.einsum("ctl,tqlc->tq", local_u, dphi)
    div_term = h**2 * np.einsum("tq,tq->t", wdet, div**2)

    jump_term = np.zeros(mesh.nt)
    interior = mesh.interior_edges
    if interior.size:
        srule = segment_rule(5)
        J = jump_values(sol, interior, srule.points)
        e = mesh.edges[interior]
        length = np.linalg.norm(mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]], axis=1)
        jn2 = length * np.einsum("q,eq->e", srule.weights, np.sum(J**2, axis=2))
        et = mesh.edge_tris[interior]
        for side in (0, 1):
            t = et[:, side]
            np.add.at(jump_term, t, 0.5 * h[t] ** 3 * jn2)
    return IndicatorField(residual_term, div_term, jump_term, h)


def estimate(sol):
    """Global estimator ``eta``."""
    return indicators(sol).eta


def effectivity(sol_seq):
    """``eta_k / err_k`` along a sequence of solutions on nested meshes.

    ``err_k`` is the consecutive-solution velocity error as paired with
    level ``k`` by :func:`stokes_roughbc.adaptivity.level_errors`.  Values
    at round-off level count as zero.  When both vanish the ratio is
    reported as 0.0; a zero error with a positive estimate gives ``inf``.
    """
    from .adaptivity import ROUNDOFF_FLOOR, level_errors

    if len(sol_seq) < 3:
        raise InsufficientLevelsError("effectivity needs at least three nested levels")
    errs = level_errors(sol_seq)
    out = []
    for sol, err in zip(sol_seq, errs):
        if err is None:
            continue
        eta = estimate(sol)
        if err <= ROUNDOFF_FLOOR:
            out.append(0.0 if eta <= ROUNDOFF_FLOOR else math.inf)
        else:
            out.append(eta / err)
    return out
