"""Lagrange finite element spaces on a :class:`~stokes_roughbc.mesh.Mesh`.

Shape functions are written as polynomials in the barycentric coordinates
``lam = (lam0, lam1, lam2)``; physical derivatives follow from the chain rule
with the (constant) barycentric gradients of each triangle.

Local numbering: P1 -> vertices 0..2; P1Bubble -> vertices then the bubble
``27 lam0 lam1 lam2``; P2 -> vertices then the midpoints of local edges 0..2
(edge i is opposite vertex i).
"""
from functools import cached_property

import numpy as np

VELOCITY_FAMILIES = ("P1", "P1Bubble", "P2")
FAMILIES = VELOCITY_FAMILIES + ("P1Pressure",)
_NLOC = {"P1": 3, "P1Bubble": 4, "P2": 6, "P1Pressure": 3}
_REF_GRAD_LAM = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_EDGE_VERTS = ((1, 2), (2, 0), (0, 1))


def _check_family(family):
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    return "P1" if family == "P1Pressure" else family


def shape_values(family, lam):
    fam = _check_family(family)
    lam = np.atleast_2d(lam)
    l0, l1, l2 = lam.T
    if fam == "P1":
        return lam.copy()
    if fam == "P1Bubble":
        return np.column_stack([l0, l1, l2, 27.0 * l0 * l1 * l2])
    cols = [lam[:, i] * (2.0 * lam[:, i] - 1.0) for i in range(3)]
    cols += [4.0 * lam[:, j] * lam[:, k] for j, k in _EDGE_VERTS]
    return np.column_stack(cols)


def shape_dlam(family, lam):
    """(npts, nloc, 3) partial derivatives with respect to lam0, lam1, lam2."""
    fam = _check_family(family)
    lam = np.atleast_2d(lam)
    npts = len(lam)
    d = np.zeros((npts, _NLOC[fam], 3))
    if fam in ("P1", "P1Bubble"):
        d[:, [0, 1, 2], [0, 1, 2]] = 1.0
        if fam == "P1Bubble":
            d[:, 3, 0] = 27.0 * lam[:, 1] * lam[:, 2]
            d[:, 3, 1] = 27.0 * lam[:, 0] * lam[:, 2]
            d[:, 3, 2] = 27.0 * lam[:, 0] * lam[:, 1]
        return d
    for i in range(3):
        d[:, i, i] = 4.0 * lam[:, i] - 1.0
    for e, (j, k) in enumerate(_EDGE_VERTS):
        d[:, 3 + e, j] = 4.0 * lam[:, k]
        d[:, 3 + e, k] = 4.0 * lam[:, j]
    return d


def shape_d2lam(family, lam):
    """(npts, nloc, 3, 3) second derivatives with respect to the lam's."""
    fam = _check_family(family)
    lam = np.atleast_2d(lam)
    npts = len(lam)
    d2 = np.zeros((npts, _NLOC[fam], 3, 3))
    if fam == "P1Bubble":
        for j, k in _EDGE_VERTS:
            i = 3 - j - k
            d2[:, 3, j, k] = d2[:, 3, k, j] = 27.0 * lam[:, i]
    elif fam == "P2":
        for i in range(3):
            d2[:, i, i, i] = 4.0
        for e, (j, k) in enumerate(_EDGE_VERTS):
            d2[:, 3 + e, j, k] = d2[:, 3 + e, k, j] = 4.0
    return d2


def eval_basis(family, bary):
    """Shape function values and gradients on the reference triangle.

    ``bary`` holds barycentric coordinates (one point or an array of them);
    the reference triangle has vertices (0,0), (1,0), (0,1).  Returns arrays
    of shape (npts, nloc) and (npts, nloc, 2).
    """
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    if np.any(np.abs(bary.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("barycentric coordinates must sum to 1")
    return shape_values(family, bary), shape_dlam(family, bary) @ _REF_GRAD_LAM


class FESpace:
    """Continuous Lagrange space, scalar or with ``ncomp`` components.

    Scalar DOFs are numbered vertices first, then edges (P2), then bubbles
    (P1Bubble, one per triangle).  Vector DOF ``c * nscalar + i`` is
    component ``c`` of scalar DOF ``i``.
    """

    def __init__(self, mesh, family, ncomp):
        _check_family(family)
        self.mesh = mesh
        self.family = family
        self.ncomp = ncomp
        nv, nt = mesh.nv, mesh.nt
        if family == "P2":
            self.cell_to_dof = np.hstack([mesh.triangles, nv + mesh.tri_edges])
            self.nscalar = nv + len(mesh.edges)
        elif family == "P1Bubble":
            self.cell_to_dof = np.hstack([mesh.triangles, nv + np.arange(nt)[:, None]])
            self.nscalar = nv + nt
        else:
            self.cell_to_dof = mesh.triangles.copy()
            self.nscalar = nv
        self.cell_to_dof.flags.writeable = False

    def __repr__(self):
        return f"FESpace({self.family}, ncomp={self.ncomp}, dofs={self.dof_count})"

    @property
    def dof_count(self):
        return self.ncomp * self.nscalar

    @property
    def nloc(self):
        return self.cell_to_dof.shape[1]

    @property
    def degree(self):
        return {"P1": 1, "P1Pressure": 1, "P2": 2, "P1Bubble": 3}[self.family]

    @cached_property
    def nodal_points(self):
        """Coordinates of the scalar DOF nodes (bubble nodes at barycenters)."""
        m = self.mesh
        pts = [m.vertices]
        if self.family == "P2":
            pts.append(0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]]))
        elif self.family == "P1Bubble":
            pts.append(m.vertices[m.triangles].mean(axis=1))
        return np.vstack(pts)

    @cached_property
    def boundary_scalar_dofs(self):
        m = self.mesh
        dofs = [m.boundary_vertices]
        if self.family == "P2":
            dofs.append(m.nv + np.sort(m.boundary_edge_ids))
        return np.concatenate(dofs)

    @cached_property
    def boundary_dofs(self):
        b = self.boundary_scalar_dofs
        return np.concatenate([c * self.nscalar + b for c in range(self.ncomp)])

    def vector_cell_dofs(self):
        """(nt, ncomp * nloc) global DOFs, component-major within the cell."""
        return np.hstack([c * self.nscalar + self.cell_to_dof for c in range(self.ncomp)])

    def split(self, coeffs):
        """Coefficient vector -> (ncomp, nscalar) view."""
        return np.asarray(coeffs).reshape(self.ncomp, self.nscalar)

    def evaluate(self, coeffs, tri_ids, lam):
        """Values at points given by triangle ids and barycentric coords.

        ``lam`` has shape (n, 3) matching ``tri_ids``; returns (n, ncomp).
        """
        phi = shape_values(self.family, lam)
        local = self.split(coeffs)[:, self.cell_to_dof[tri_ids]]  # (ncomp, n, nloc)
        return np.einsum("cnl,nl->nc", local, phi)

    def gradient(self, coeffs, tri_ids, lam):
        """Gradients (n, ncomp, 2) at the given points."""
        dl = shape_dlam(self.family, lam)  # (n, nloc, 3)
        glam = self.mesh.grad_barycentric[tri_ids]  # (n, 3, 2)
        dphi = np.einsum("nlk,nkd->nld", dl, glam)
        local = self.split(coeffs)[:, self.cell_to_dof[tri_ids]]
        return np.einsum("cnl,nld->ncd", local, dphi)


def build_space(mesh, family, ncomp=None):
    """Velocity families default to 2 components, ``P1Pressure`` to 1."""
    if ncomp is None:
        ncomp = 1 if family == "P1Pressure" else 2
    return FESpace(mesh, family, ncomp)


def interpolate_nodal(space, f):
    """Nodal interpolant of ``f``: (n, 2) points -> (n, ncomp) or (n,) values.

    The bubble coefficient makes the interpolant exact at the barycenter.
    """
    m = space.mesh
    pts = space.nodal_points
    vals = np.asarray(f(pts), dtype=float).reshape(len(pts), space.ncomp)
    if space.family == "P1Bubble":
        vbar = vals[m.triangles].mean(axis=1)
        vals[m.nv:] -= vbar
    return vals.T.ravel()


class BoundaryTraceSpace:
    """Boundary nodes ``B_1..B_M`` in counterclockwise order.

    Edge ``i`` joins ``B_i`` to ``B_{i+1}`` (cyclically), has length
    ``h[i]``, lies on polygon side ``segments[i]`` and has outward unit
    normal ``normals[i]``.  The cycle starts at the lowest-index boundary
    vertex.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        succ = {int(a): (int(b), int(s)) for (a, b), s in zip(mesh.boundary_edges, mesh.boundary_segments)}
        start = int(mesh.boundary_edges.min())
        nodes, segs = [start], []
        cur = start
        while True:
            nxt, s = succ[cur]
            segs.append(s)
            if nxt == start:
                break
            nodes.append(nxt)
            cur = nxt
            if len(nodes) > len(succ):
                raise ValueError("boundary edges do not form a single cycle")
        if len(nodes) != len(succ):
            raise ValueError("boundary has more than one component")
        self.nodes = np.array(nodes)
        self.segments = np.array(segs)
        self.points = mesh.vertices[self.nodes]
        d = np.roll(self.points, -1, axis=0) - self.points
        self.h = np.linalg.norm(d, axis=1)
        self.normals = mesh.segment_normals[self.segments]
        self.tangents = np.column_stack([-self.normals[:, 1], self.normals[:, 0]])
        self.prev_segment = np.roll(self.segments, 1)
        self.is_corner = self.prev_segment != self.segments

    def __len__(self):
        return len(self.nodes)

    @cached_property
    def edge_ids(self):
        """Global mesh edge id of trace edge i."""
        pairs = np.column_stack([self.nodes, np.roll(self.nodes, -1)])
        return self.mesh.edge_ids(pairs)

    @property
    def length(self):
        return self.h.sum()


def build_trace_space(mesh):
    return BoundaryTraceSpace(mesh)
