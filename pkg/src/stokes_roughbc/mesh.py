"""Conforming triangulations of polygons with red and newest-vertex refinement.

Conventions used throughout the package:

* triangles are stored counterclockwise; local vertex 0 is the *newest
  vertex*, so the refinement edge is always local edge 0;
* local edge ``i`` is the edge opposite local vertex ``i``;
* boundary edges are oriented counterclockwise along the domain boundary and
  carry the id of the straight polygon side (segment) they lie on.  Segment
  ``i`` runs from ``corners[i]`` to ``corners[i + 1]``.
"""
from functools import cached_property

import numpy as np

GEOM_TOL = 1e-14
LOCATE_TOL = 1e-12

_LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class MeshError(ValueError):
    pass


class PointOutsideDomainError(MeshError):
    pass


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


class Mesh:
    """Immutable triangulation; refinement returns a new mesh.

    ``parent_of[t]`` is the index of the triangle of the previous mesh that
    contains triangle ``t`` (``None`` for a mesh with no recorded history).
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_segments, corners,
                 parent_of=None):
        self.vertices = _frozen(vertices, float)
        self.triangles = _frozen(triangles, np.int64).reshape(-1, 3)
        self.boundary_edges = _frozen(boundary_edges, np.int64).reshape(-1, 2)
        self.boundary_segments = _frozen(boundary_segments, np.int64)
        self.corners = _frozen(corners, float).reshape(-1, 2)
        self.parent_of = None if parent_of is None else _frozen(parent_of, np.int64)
        if np.any(self.signed_areas <= GEOM_TOL * self.diameters**2):
            raise MeshError("mesh has non-positively oriented triangles")

    def __repr__(self):
        return f"Mesh(nv={self.nv}, nt={self.nt}, nbe={len(self.boundary_edges)})"

    @property
    def nv(self):
        return len(self.vertices)

    @property
    def nt(self):
        return len(self.triangles)

    @property
    def refinement_edge(self):
        """Local index of the refinement edge of every triangle (always 0 here)."""
        return np.zeros(self.nt, dtype=np.int64)

    # -- edge topology -------------------------------------------------

    @cached_property
    def _edge_data(self):
        pairs = np.sort(self.triangles[:, _LOCAL_EDGES].reshape(-1, 2), axis=1)
        keys = pairs[:, 0] * self.nv + pairs[:, 1]
        ukeys, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        edges = pairs[first]
        tri_edges = inverse.reshape(-1, 3)
        counts = np.bincount(inverse, minlength=len(ukeys))
        if counts.max() > 2:
            raise MeshError("an edge is shared by more than two triangles")
        edge_tris = np.full((len(ukeys), 2), -1, dtype=np.int64)
        owner = np.repeat(np.arange(self.nt), 3)
        order = np.argsort(inverse, kind="stable")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        edge_tris[:, 0] = owner[order[starts]]
        two = counts == 2
        edge_tris[two, 1] = owner[order[starts[two] + 1]]
        for a in (edges, tri_edges, edge_tris, ukeys):
            a.flags.writeable = False
        return edges, tri_edges, edge_tris, ukeys

    @property
    def edges(self):
        """(ne, 2) vertex pairs, sorted within each pair and lexicographically."""
        return self._edge_data[0]

    @property
    def tri_edges(self):
        """(nt, 3) global edge id of local edge i (opposite local vertex i)."""
        return self._edge_data[1]

    @property
    def edge_tris(self):
        """(ne, 2) incident triangles, lower id first; -1 marks a boundary edge."""
        return self._edge_data[2]

    def edge_ids(self, pairs):
        """Global edge ids of vertex pairs (any orientation)."""
        pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        keys = pairs[:, 0] * self.nv + pairs[:, 1]
        ukeys = self._edge_data[3]
        idx = np.searchsorted(ukeys, keys)
        if np.any(idx >= len(ukeys)) or np.any(ukeys[np.minimum(idx, len(ukeys) - 1)] != keys):
            raise MeshError("vertex pair is not an edge of the mesh")
        return idx

    @cached_property
    def interior_edges(self):
        return np.flatnonzero(self.edge_tris[:, 1] >= 0)

    @cached_property
    def boundary_edge_ids(self):
        return self.edge_ids(self.boundary_edges)

    @cached_property
    def boundary_vertices(self):
        return np.unique(self.boundary_edges)

    # -- geometry ------------------------------------------------------

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self):
        return self.signed_areas

    @cached_property
    def edge_lengths_local(self):
        """(nt, 3) length of local edge i."""
        p = self.vertices[self.triangles]
        return np.linalg.norm(p[:, _LOCAL_EDGES[:, 1]] - p[:, _LOCAL_EDGES[:, 0]], axis=2)

    @cached_property
    def diameters(self):
        return self.edge_lengths_local.max(axis=1)

    @cached_property
    def min_angles(self):
        ell = self.edge_lengths_local
        # law of cosines for the angle at vertex i, opposite local edge i
        a, b, c = ell[:, 0], ell[:, 1], ell[:, 2]
        cosines = np.column_stack([
            (b**2 + c**2 - a**2) / (2 * b * c),
            (c**2 + a**2 - b**2) / (2 * c * a),
            (a**2 + b**2 - c**2) / (2 * a * b),
        ])
        return np.arccos(np.clip(cosines, -1.0, 1.0)).min(axis=1)

    @cached_property
    def grad_barycentric(self):
        """(nt, 3, 2) constant gradients of the barycentric coordinates."""
        p = self.vertices[self.triangles]
        area2 = 2.0 * self.signed_areas
        g = np.empty((self.nt, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            e = p[:, k] - p[:, j]
            g[:, i, 0] = -e[:, 1] / area2
            g[:, i, 1] = e[:, 0] / area2
        return g

    @property
    def domain_area(self):
        x, y = self.corners[:, 0], self.corners[:, 1]
        return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)

    @cached_property
    def segment_lengths(self):
        return np.linalg.norm(np.roll(self.corners, -1, axis=0) - self.corners, axis=1)

    @cached_property
    def segment_normals(self):
        d = np.roll(self.corners, -1, axis=0) - self.corners
        d /= np.linalg.norm(d, axis=1)[:, None]
        return np.column_stack([d[:, 1], -d[:, 0]])

    @cached_property
    def boundary_arclength(self):
        """(nbe, 2) arclength range of each boundary edge along its segment."""
        start = self.corners[self.boundary_segments]
        p = self.vertices[self.boundary_edges]
        return np.linalg.norm(p - start[:, None, :], axis=2)

    def to_barycentric(self, tri_ids, points):
        """Barycentric coordinates of ``points[i]`` w.r.t. triangle ``tri_ids[i]``."""
        tri_ids = np.asarray(tri_ids)
        points = np.asarray(points, dtype=float)
        p = self.vertices[self.triangles[tri_ids]]
        d1, d2 = p[..., 1, :] - p[..., 0, :], p[..., 2, :] - p[..., 0, :]
        r = points - p[..., 0, :]
        det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        l1 = (r[..., 0] * d2[..., 1] - r[..., 1] * d2[..., 0]) / det
        l2 = (d1[..., 0] * r[..., 1] - d1[..., 1] * r[..., 0]) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


# -- construction -------------------------------------------------------


def _orient_longest(vertices, triangles):
    """Rotate each triangle so that its longest edge is local edge 0."""
    p = vertices[triangles]
    ell = np.linalg.norm(p[:, _LOCAL_EDGES[:, 1]] - p[:, _LOCAL_EDGES[:, 0]], axis=2)
    # first index attaining the max, with a relative tolerance for exact ties
    k = np.argmax(ell >= ell.max(axis=1, keepdims=True) * (1 - 1e-12), axis=1)
    idx = (k[:, None] + np.arange(3)[None, :]) % 3
    return np.take_along_axis(triangles, idx, axis=1)


UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
SEGMENT_NAMES = ("bottom", "right", "top", "left")


def build_structured_unit_square(n):
    """(n+1)^2-vertex grid on [0,1]^2, every square cut from bottom-left to top-right.

    Boundary segments are 0=bottom, 1=right, 2=top, 3=left.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    vid = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # vid[j, i] at (x_i, y_j)
    v00, v10 = vid[:-1, :-1].ravel(), vid[:-1, 1:].ravel()
    v01, v11 = vid[1:, :-1].ravel(), vid[1:, 1:].ravel()
    lower = np.column_stack([v10, v11, v00])  # newest vertex v10, diagonal refinement edge
    upper = np.column_stack([v01, v00, v11])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    r = np.arange(n)
    bottom = np.column_stack([vid[0, r], vid[0, r + 1]])
    right = np.column_stack([vid[r, n], vid[r + 1, n]])
    top = np.column_stack([vid[n, n - r], vid[n, n - r - 1]])
    left = np.column_stack([vid[n - r, 0], vid[n - r - 1, 0]])
    bedges = np.vstack([bottom, right, top, left])
    bseg = np.repeat(np.arange(4), n)
    return Mesh(vertices, triangles, bedges, bseg, UNIT_SQUARE)


def mesh_from_arrays(vertices, triangles, boundary_edges, boundary_segments):
    """Build a mesh from raw arrays, fixing orientation and refinement edges.

    Triangles are made counterclockwise and rotated so their longest edge
    becomes the refinement edge; boundary edges are oriented
    counterclockwise; polygon corners are recovered from the segment ids.
    """
    vertices = np.asarray(vertices, dtype=float)
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3).copy()
    p = vertices[tris]
    cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    tris[cross < 0] = tris[cross < 0][:, [0, 2, 1]]
    tris = _orient_longest(vertices, tris)

    directed = {}
    for t in tris:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            directed[(int(a), int(b))] = True
    bedges = np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2).copy()
    bseg = np.asarray(boundary_segments, dtype=np.int64)
    for i, (a, b) in enumerate(bedges):
        if (int(a), int(b)) not in directed:
            if (int(b), int(a)) not in directed:
                raise MeshError(f"boundary edge ({a}, {b}) is not an edge of the mesh")
            bedges[i] = (b, a)

    nseg = int(bseg.max()) + 1
    corners = np.empty((nseg, 2))
    for s in range(nseg):
        e = bedges[bseg == s]
        if len(e) == 0:
            raise MeshError(f"segment {s} has no boundary edges")
        starts = set(e[:, 0].tolist()) - set(e[:, 1].tolist())
        if len(starts) != 1:
            raise MeshError(f"segment {s} is not a single chain of edges")
        corners[s] = vertices[starts.pop()]
    return Mesh(vertices, tris, bedges, bseg, corners)


# -- refinement ------------------------------------------------------------


def refine_uniform(mesh):
    """Red refinement: every triangle into four similar children.

    Child ``4 * t + k`` descends from triangle ``t``.
    """
    nv = mesh.nv
    edges = mesh.edges
    vertices = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])])
    a, b, c = mesh.triangles.T
    m0, m1, m2 = (nv + mesh.tri_edges).T
    children = np.stack([
        np.column_stack([a, m2, m1]),
        np.column_stack([m2, b, m0]),
        np.column_stack([m1, m0, c]),
        np.column_stack([m0, m1, m2]),
    ], axis=1).reshape(-1, 3)
    children = _orient_longest(vertices, children)

    mids = nv + mesh.boundary_edge_ids
    u, v = mesh.boundary_edges.T
    bedges = np.stack([np.column_stack([u, mids]), np.column_stack([mids, v])], axis=1).reshape(-1, 2)
    bseg = np.repeat(mesh.boundary_segments, 2)
    parent = np.repeat(np.arange(mesh.nt), 4)
    return Mesh(vertices, children, bedges, bseg, mesh.corners, parent)


def closure_edges(mesh, marked, all_edges=False):
    """Edges bisected by newest-vertex refinement of ``marked`` plus closure.

    With ``all_edges`` every edge of a marked triangle is split (three
    bisections, four children), otherwise only its refinement edge.
    Returns (edge flags, number of triangles added by the closure).
    """
    te = mesh.tri_edges
    flag = np.zeros(len(mesh.edges), dtype=bool)
    flag[te[marked] if all_edges else te[marked, 0]] = True
    while True:
        need = flag[te].any(axis=1) & ~flag[te[:, 0]]
        if not need.any():
            break
        flag[te[need, 0]] = True
    touched = flag[te].any(axis=1)
    extra = np.count_nonzero(touched) - len(marked)
    return flag, extra


def refine_marked(mesh, marked, all_edges=False):
    """Newest-vertex bisection of the marked triangles with conforming closure.

    Each marked triangle is bisected at least once (three times, splitting
    all its edges, with ``all_edges``); neighbours are bisected as needed
    to remove hanging nodes.  Children replace their parent in place,
    keeping order.
    """
    marked = np.unique(np.asarray(sorted(marked), dtype=np.int64))
    if marked.size and (marked[0] < 0 or marked[-1] >= mesh.nt):
        raise IndexError("marked triangle id out of range")
    if marked.size == 0:
        return Mesh(mesh.vertices, mesh.triangles, mesh.boundary_edges,
                    mesh.boundary_segments, mesh.corners, np.arange(mesh.nt))

    flag, _ = closure_edges(mesh, marked, all_edges)
    mid = np.full(len(mesh.edges) + 1, -1, dtype=np.int64)  # slot -1 -> "no edge"
    split_edges = np.flatnonzero(flag)
    mid[split_edges] = mesh.nv + np.arange(split_edges.size)
    e = mesh.edges[split_edges]
    vertices = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])])

    tris = mesh.triangles.copy()
    eids = mesh.tri_edges.copy()
    parent = np.arange(mesh.nt)
    while True:
        split = mid[eids[:, 0]] >= 0
        if not split.any():
            break
        counts = np.where(split, 2, 1)
        pos = np.concatenate([[0], np.cumsum(counts)[:-1]])
        n_new = counts.sum()
        new_tris = np.empty((n_new, 3), dtype=np.int64)
        new_eids = np.full((n_new, 3), -1, dtype=np.int64)
        new_parent = np.repeat(parent, counts)
        keep = ~split
        new_tris[pos[keep]] = tris[keep]
        new_eids[pos[keep]] = eids[keep]
        a, b, c = tris[split].T
        m = mid[eids[split, 0]]
        p1, p2 = pos[split], pos[split] + 1
        new_tris[p1] = np.column_stack([m, c, a])
        new_eids[p1, 0] = eids[split, 1]
        new_tris[p2] = np.column_stack([m, a, b])
        new_eids[p2, 0] = eids[split, 2]
        tris, eids, parent = new_tris, new_eids, new_parent

    bmid = mid[mesh.boundary_edge_ids]
    rows, segs = [], []
    for (u, v), s, mm in zip(mesh.boundary_edges, mesh.boundary_segments, bmid):
        if mm >= 0:
            rows += [(u, mm), (mm, v)]
            segs += [s, s]
        else:
            rows.append((u, v))
            segs.append(s)
    return Mesh(vertices, tris, np.array(rows), np.array(segs), mesh.corners, parent)


# -- queries ---------------------------------------------------------------


def edge_audit(mesh):
    """Conformity check: returns a list of problems (empty when conforming).

    Every edge must have one or two incident triangles, and the edges with
    exactly one are precisely the boundary edges.
    """
    problems = []
    single = np.flatnonzero(mesh.edge_tris[:, 1] < 0)
    bids = np.sort(mesh.edge_ids(mesh.boundary_edges))
    if len(np.unique(bids)) != len(bids):
        problems.append("duplicate boundary edges")
    if not np.array_equal(np.sort(single), np.unique(bids)):
        problems.append(f"{len(single)} single-triangle edges vs {len(bids)} boundary edges "
                        "(hanging node or missing boundary tag)")
    if np.any(mesh.signed_areas <= 0):
        problems.append("non-positive triangle area")
    return problems


def locate_point(mesh, p, ancestor=None):
    """Containing triangle and barycentric coordinates of ``p``.

    ``ancestor`` restricts the search to the children of that triangle of
    the previous mesh in the hierarchy.  Ties (points on edges or vertices)
    go to the lowest triangle id.
    """
    p = np.asarray(p, dtype=float)
    if ancestor is None or mesh.parent_of is None:
        candidates = np.arange(mesh.nt)
    else:
        candidates = np.flatnonzero(mesh.parent_of == ancestor)
    lam = mesh.to_barycentric(candidates, np.broadcast_to(p, (len(candidates), 2)))
    scale = mesh.diameters[candidates]
    # the barycentric deficit times the diameter bounds the distance to the triangle
    inside = lam.min(axis=1) * scale >= -LOCATE_TOL
    hits = np.flatnonzero(inside)
    if hits.size == 0:
        if ancestor is not None:
            return locate_point(mesh, p)
        raise PointOutsideDomainError(f"point {p.tolist()} is outside the domain")
    t = hits[0]
    lam_t = np.clip(lam[t], 0.0, 1.0)
    return int(candidates[t]), lam_t / lam_t.sum()


# -- text format -----------------------------------------------------------


def write_mesh(mesh, path):
    """``nv nt nbe`` header, then vertices, triangles and tagged boundary edges."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.nv} {mesh.nt} {len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        for (a, b), s in zip(mesh.boundary_edges, mesh.boundary_segments):
            fh.write(f"{a} {b} {s}\n")


def read_mesh(path):
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    try:
        nv, nt, nbe = (int(v) for v in lines[0])
        vertices = np.array([[float(v) for v in ln] for ln in lines[1:1 + nv]])
        tris = np.array([[int(v) for v in ln] for ln in lines[1 + nv:1 + nv + nt]])
        b = np.array([[int(v) for v in ln] for ln in lines[1 + nv + nt:1 + nv + nt + nbe]])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if vertices.shape != (nv, 2) or tris.shape != (nt, 3) or b.shape != (nbe, 3):
        raise MeshError(f"malformed mesh file {path}: counts do not match header")
    return mesh_from_arrays(vertices, tris, b[:, :2], b[:, 2])
