"""Rough Dirichlet data on a polygon and its compatible piecewise-linear regularizations.

A :class:`BoundaryDatum` is smooth on every polygon side and may jump at the
corners.  The regularizers below return a :class:`BoundaryField`, i.e. nodal
values of a continuous piecewise-linear field on the boundary mesh, whose
flux ``int_Gamma g_h . n`` vanishes to round-off.
"""
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quadrature import segment_rule
from .mesh import UNIT_SQUARE

JUMP_POLICIES = ("pointwise", "left", "right", "average", "lower-segment")
_POLICY_ALIASES = {"left_limit": "left", "right_limit": "right", "left-limit": "left",
                   "right-limit": "right", "lower_segment": "lower-segment"}
DEFAULT_JUMP_POLICY = "pointwise"
FLUX_TOL = 1e-10
_FLUX_SUBDIVISIONS = 64


class IncompatibleDatumError(ValueError):
    pass


class NoAdmissibleNodeError(ValueError):
    pass


class SingularSystemError(ArithmeticError):
    pass


class BoundaryDatum:
    """Vector field on the boundary of the polygon ``corners``.

    ``pieces[i]`` maps an (n, 2) array of points on side ``i`` (from
    ``corners[i]`` to ``corners[i+1]``) to (n, 2) values.  Nodal evaluation
    at a corner where the two sides disagree follows ``jump_policy``:

    ``pointwise`` the value the datum assigns to the corner itself
                  (``corner_values``); the average when none is given
    ``left``      limit along the preceding side (counterclockwise order)
    ``right``     limit along the following side
    ``average``   mean of the two limits
    ``lower-segment``  limit along the side with the lower index
    """

    def __init__(self, pieces, corners=UNIT_SQUARE, jump_policy=DEFAULT_JUMP_POLICY, name="custom",
                 check=True, corner_values=None):
        self.corners = np.asarray(corners, dtype=float)
        self.pieces = tuple(pieces)
        if len(self.pieces) != len(self.corners):
            raise ValueError("need one piece per polygon side")
        self.jump_policy = canonical_policy(jump_policy)
        self.corner_values = {int(i): np.asarray(v, dtype=float) for i, v in (corner_values or {}).items()}
        self.name = name
        if check:
            flux = self.flux()
            if abs(flux) > FLUX_TOL * (1.0 + self.scale()):
                raise IncompatibleDatumError(f"datum {name!r} has net flux {flux:.3e}")

    def __repr__(self):
        return f"BoundaryDatum({self.name!r}, jump_policy={self.jump_policy!r})"

    def with_policy(self, jump_policy):
        return BoundaryDatum(self.pieces, self.corners, jump_policy, self.name, check=False,
                             corner_values=self.corner_values)

    def scaled(self, s):
        pieces = [lambda x, f=f: s * np.asarray(f(x), dtype=float) for f in self.pieces]
        cv = {i: s * v for i, v in self.corner_values.items()}
        return BoundaryDatum(pieces, self.corners, self.jump_policy, f"{s}*{self.name}", check=False,
                             corner_values=cv)

    def on_segment(self, seg, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        vals = np.asarray(self.pieces[seg](points), dtype=float)
        return np.broadcast_to(vals, points.shape).copy()

    def _sides(self):
        nseg = len(self.corners)
        start = self.corners
        end = np.roll(self.corners, -1, axis=0)
        d = end - start
        length = np.linalg.norm(d, axis=1)
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        return nseg, start, end, length, normal

    def _side_samples(self, seg):
        _, start, end, length, _ = self._sides()
        rule = segment_rule(9)
        k = _FLUX_SUBDIVISIONS
        t = ((np.arange(k)[:, None] + rule.points[None, :]) / k).ravel()
        w = np.tile(rule.weights, k) / k * length[seg]
        pts = start[seg] + t[:, None] * (end[seg] - start[seg])
        return pts, w

    def flux(self):
        """``int_Gamma g . n`` by composite Gauss quadrature on every side."""
        nseg, *_, normal = self._sides()
        total = 0.0
        for s in range(nseg):
            pts, w = self._side_samples(s)
            total += w @ (self.on_segment(s, pts) @ normal[s])
        return total

    def scale(self):
        """Max |g| over the quadrature samples, a size reference for tolerances."""
        return max(np.abs(self.on_segment(s, self._side_samples(s)[0])).max()
                   for s in range(len(self.corners)))

    def corner_limits(self, i):
        """(left, right) limits at corner ``i``, between sides ``i-1`` and ``i``."""
        c = self.corners[i]
        prev = (i - 1) % len(self.corners)
        return self.on_segment(prev, c)[0], self.on_segment(i, c)[0]

    @property
    def jump_points(self):
        """Indices of corners where the adjacent pieces disagree."""
        out = []
        for i in range(len(self.corners)):
            left, right = self.corner_limits(i)
            if not np.allclose(left, right, rtol=0, atol=1e-14):
                out.append(i)
        return out

    def nodal_values(self, trace):
        """Values at the boundary nodes ``B_j`` of ``trace``, applying the jump policy."""
        vals = np.empty((len(trace), 2))
        inner = ~trace.is_corner
        segs = trace.segments
        for s in np.unique(segs[inner]):
            sel = inner & (segs == s)
            vals[sel] = self.on_segment(s, trace.points[sel])
        for j in np.flatnonzero(trace.is_corner):
            p = trace.points[j]
            sp_, sn = trace.prev_segment[j], segs[j]
            left, right = self.on_segment(sp_, p)[0], self.on_segment(sn, p)[0]
            if self.jump_policy == "pointwise" and sn in self.corner_values:
                vals[j] = self.corner_values[sn]
            elif self.jump_policy == "left":
                vals[j] = left
            elif self.jump_policy == "right":
                vals[j] = right
            elif self.jump_policy in ("average", "pointwise"):
                vals[j] = 0.5 * (left + right)
            else:
                vals[j] = left if sp_ < sn else right
        return vals


def canonical_policy(name):
    name = _POLICY_ALIASES.get(name, name)
    if name not in JUMP_POLICIES:
        raise ValueError(f"unknown jump policy {name!r}; expected one of {JUMP_POLICIES}")
    return name


class BoundaryField:
    """Continuous piecewise-linear boundary field given by its nodal values."""

    def __init__(self, trace, values, correction_node=None, l1_value=None):
        self.trace = trace
        self.values = np.asarray(values, dtype=float).reshape(len(trace), 2)
        self.correction_node = correction_node
        self.l1_value = l1_value

    def __repr__(self):
        return f"BoundaryField(M={len(self.trace)}, max={np.abs(self.values).max():.4g})"

    def edge_values(self, t):
        """Values along every trace edge at parameters ``t`` in [0, 1]: (M, nt, 2)."""
        t = np.asarray(t, dtype=float)
        v0, v1 = self.values, np.roll(self.values, -1, axis=0)
        return (1.0 - t)[None, :, None] * v0[:, None, :] + t[None, :, None] * v1[:, None, :]

    def as_datum(self, jump_policy=DEFAULT_JUMP_POLICY):
        """The same field seen as a :class:`BoundaryDatum` on the mesh polygon."""
        tr = self.trace
        corners = tr.mesh.corners
        vals = self.values
        pieces = []
        for s in range(len(corners)):
            on = np.flatnonzero(tr.segments == s)
            idx = np.append(on, (on[-1] + 1) % len(tr))
            pts = tr.points[idx]
            arc = np.concatenate([[0.0], np.cumsum(tr.h[on])])

            def piece(x, pts=pts, arc=arc, v=vals[idx]):
                x = np.atleast_2d(x)
                r = np.linalg.norm(x - pts[0], axis=1)
                return np.column_stack([np.interp(r, arc, v[:, 0]), np.interp(r, arc, v[:, 1])])

            pieces.append(piece)
        return BoundaryDatum(pieces, corners, jump_policy, "field", check=False)


def lagrange_interpolant(datum, trace):
    """Plain nodal interpolation (no compatibility enforcement)."""
    return BoundaryField(trace, datum.nodal_values(trace))


def compatibility_defect(gh):
    """``int_Gamma g_h . n``; the edgewise trapezoid rule is exact here."""
    tr = gh.trace
    v = gh.values
    avg = 0.5 * (v + np.roll(v, -1, axis=0))
    return float(np.sum(tr.h * np.einsum("ij,ij->i", avg, tr.normals)))


def correction_node(trace):
    """Node ``B_k`` used to restore compatibility.

    Neither ``B_k`` nor its neighbours may be polygon corners; among the
    admissible nodes the one maximising ``min(h_{k-1}, h_k)`` wins, lowest
    index on ties.
    """
    c = trace.is_corner
    ok = ~(c | np.roll(c, 1) | np.roll(c, -1))
    if not ok.any():
        raise NoAdmissibleNodeError("no boundary node away from the corners; refine the mesh")
    score = np.where(ok, np.minimum(np.roll(trace.h, 1), trace.h), -np.inf)
    return int(np.argmax(score >= score.max() * (1 - 1e-12)))


def _correct(trace, values, zero_tangential):
    """Reset the value at ``B_k`` so that the discrete flux vanishes."""
    k = correction_node(trace)
    m = len(trace)
    km, kp = (k - 1) % m, (k + 1) % m
    hm, hk = trace.h[km], trace.h[k]
    n = trace.normals[k]
    t = trace.tangents[k]
    trial = values.copy()
    trial[k] = 0.0
    # flux with g_h(B_k) = 0 is the flux away from B_k plus the two
    # neighbour halves 1/2 [h_{k-1} g(B_{k-1}) + h_k g(B_{k+1})] . n
    l1 = -compatibility_defect(BoundaryField(trace, trial))
    out = values.copy()
    tangential = 0.0 if zero_tangential else values[k] @ t
    out[k] = l1 / (0.5 * (hm + hk)) * n + tangential * t
    return BoundaryField(trace, out, correction_node=k, l1_value=l1)


def modified_lagrange(datum, trace, zero_tangential=False):
    """Nodal interpolant with one node adjusted to enforce zero net flux.

    The normal component at ``B_k`` absorbs the flux defect of the nodal
    interpolant.  The tangential component keeps the nodal value unless
    ``zero_tangential`` is set, in which case it is zeroed.
    """
    return _correct(trace, datum.nodal_values(trace), zero_tangential)


def _edge_moments(datum, trace, degree=9):
    """Per-edge ``int g phi_i`` and ``int g phi_{i+1}``: two (M, 2) arrays."""
    rule = segment_rule(degree)
    t, w = rule.points, rule.weights
    p0 = trace.points
    p1 = np.roll(trace.points, -1, axis=0)
    m0 = np.empty((len(trace), 2))
    m1 = np.empty((len(trace), 2))
    for s in np.unique(trace.segments):
        sel = np.flatnonzero(trace.segments == s)
        pts = p0[sel, None, :] + t[None, :, None] * (p1[sel] - p0[sel])[:, None, :]
        g = datum.on_segment(s, pts.reshape(-1, 2)).reshape(len(sel), len(t), 2)
        hw = trace.h[sel, None] * w[None, :]
        m0[sel] = np.einsum("eq,eqc->ec", hw * (1.0 - t), g)
        m1[sel] = np.einsum("eq,eqc->ec", hw * t, g)
    return m0, m1


def _cyclic_mass(trace):
    m = len(trace)
    h = trace.h
    i = np.arange(m)
    j = (i + 1) % m
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([h / 3, h / 3, h / 6, h / 6])
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))


def l2_projection(datum, trace):
    """Flux-constrained L2(Gamma) projection onto continuous piecewise linears.

    Solves the KKT system ``[[M, N], [N^T, 0]]`` with the boundary mass
    matrix ``M`` (per component) and ``N_j = int phi_j n``.  The multiplier
    is stored on the result as ``multiplier``.
    """
    m = len(trace)
    mass = _cyclic_mass(trace)
    m0, m1 = _edge_moments(datum, trace)
    rhs = m0 + np.roll(m1, 1, axis=0)  # (M, 2)
    hn = 0.5 * trace.h[:, None] * trace.normals
    nvec = hn + np.roll(hn, 1, axis=0)  # int phi_j n, (M, 2)
    big = sp.bmat([
        [mass, None, sp.csr_matrix(nvec[:, [0]])],
        [None, mass, sp.csr_matrix(nvec[:, [1]])],
        [sp.csr_matrix(nvec[:, [0]].T), sp.csr_matrix(nvec[:, [1]].T), None],
    ], format="csc")
    b = np.concatenate([rhs[:, 0], rhs[:, 1], [0.0]])
    try:
        x = spla.spsolve(big, b)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("boundary projection system is singular")
    field = BoundaryField(trace, np.column_stack([x[:m], x[m:2 * m]]))
    field.multiplier = float(x[-1])
    return field


def carstensen(datum, trace, zero_tangential=False):
    """Hat-weighted local averages ``int g phi_j / int phi_j`` plus the flux correction."""
    m0, m1 = _edge_moments(datum, trace)
    num = m0 + np.roll(m1, 1, axis=0)
    den = 0.5 * (trace.h + np.roll(trace.h, 1))
    return _correct(trace, num / den[:, None], zero_tangential)


REGULARIZERS = {
    "modified-lagrange": modified_lagrange,
    "l2-projection": l2_projection,
    "carstensen": carstensen,
}


def regularize(datum, trace, method="modified-lagrange"):
    try:
        fn = REGULARIZERS[method]
    except KeyError:
        raise ValueError(f"unknown regularizer {method!r}; expected one of {tuple(REGULARIZERS)}") from None
    return fn(datum, trace)


def boundary_l2_error(datum, gh, degree=9):
    """``||g - g_h||_{0,Gamma}`` by Gauss quadrature on every boundary edge."""
    tr = gh.trace
    rule = segment_rule(degree)
    t, w = rule.points, rule.weights
    p0, p1 = tr.points, np.roll(tr.points, -1, axis=0)
    ghv = gh.edge_values(t)
    total = 0.0
    for s in np.unique(tr.segments):
        sel = np.flatnonzero(tr.segments == s)
        pts = p0[sel, None, :] + t[None, :, None] * (p1[sel] - p0[sel])[:, None, :]
        g = datum.on_segment(s, pts.reshape(-1, 2)).reshape(len(sel), len(t), 2)
        err2 = np.sum((g - ghv[sel]) ** 2, axis=2)
        total += np.sum(tr.h[sel, None] * w[None, :] * err2)
    return float(np.sqrt(total))


# -- named data -------------------------------------------------------------


def _const(v):
    v = np.asarray(v, dtype=float)
    return lambda x: np.broadcast_to(v, np.atleast_2d(x).shape).copy()


def cavity(jump_policy=DEFAULT_JUMP_POLICY):
    """Lid-driven cavity: (1, 0) on the open top side, zero elsewhere including the corners."""
    zero = _const((0.0, 0.0))
    return BoundaryDatum([zero, zero, _const((1.0, 0.0)), zero], UNIT_SQUARE, jump_policy, "cavity",
                         corner_values={i: (0.0, 0.0) for i in range(4)})


def linear(jump_policy=DEFAULT_JUMP_POLICY):
    """Trace of the divergence-free field (x, -y)."""
    f = lambda x: np.column_stack([np.atleast_2d(x)[:, 0], -np.atleast_2d(x)[:, 1]])
    return BoundaryDatum([f] * 4, UNIT_SQUARE, jump_policy, "linear")


def parabolic_normal(jump_policy=DEFAULT_JUMP_POLICY):
    """Continuous datum whose only normal flux is ``x(1-x) - 1/6`` on the top side."""
    def top(x):
        x = np.atleast_2d(x)
        return np.column_stack([np.zeros(len(x)), x[:, 0] * (1 - x[:, 0]) - 1 / 6])

    def wall(x):
        x = np.atleast_2d(x)
        return np.column_stack([np.zeros(len(x)), -x[:, 1] / 6])

    return BoundaryDatum([_const((0.0, 0.0)), wall, top, wall], UNIT_SQUARE, jump_policy,
                         "parabolic-normal")


def smooth_lid(jump_policy=DEFAULT_JUMP_POLICY):
    """Continuous lid profile ``(sin(pi x), 0)`` on top, no-slip elsewhere."""
    def top(x):
        x = np.atleast_2d(x)
        return np.column_stack([np.sin(np.pi * x[:, 0]), np.zeros(len(x))])

    zero = _const((0.0, 0.0))
    return BoundaryDatum([zero, zero, top, zero], UNIT_SQUARE, jump_policy, "smooth-lid")


NAMED_DATA = {
    "cavity": cavity,
    "linear": linear,
    "parabolic-normal": parabolic_normal,
    "smooth-lid": smooth_lid,
}


_EXPR_NAMESPACE = {name: getattr(np, name) for name in
                   ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "pi", "tanh", "arctan", "where")}


def expression_datum(expressions, corners=UNIT_SQUARE, jump_policy=DEFAULT_JUMP_POLICY):
    """Datum from per-side expression pairs such as ``"x*(1-x), 0"``.

    Expressions may use ``x``, ``y`` and common numpy functions.
    """
    pieces = []
    for src in expressions:
        parts = [p.strip() for p in src.split(",")]
        if len(parts) != 2:
            raise ValueError(f"expected two comma-separated components, got {src!r}")
        codes = [compile(p, "<datum>", "eval") for p in parts]

        def piece(x, codes=codes):
            x = np.atleast_2d(x)
            env = dict(_EXPR_NAMESPACE, x=x[:, 0], y=x[:, 1])
            cols = [np.broadcast_to(np.asarray(eval(c, {"__builtins__": {}}, env), dtype=float), (len(x),))
                    for c in codes]
            return np.column_stack(cols)

        pieces.append(piece)
    return BoundaryDatum(pieces, corners, jump_policy, "expression")
