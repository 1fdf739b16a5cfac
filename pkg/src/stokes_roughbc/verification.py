"""Self-checks against independent oracles, grouped in named suites.

Each suite returns a list of :class:`Check`; the ``verify`` subcommand runs
them and reports the failing suites by name.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import adaptivity, boundary, estimator, quadrature, solver
from .mesh import Mesh, build_structured_unit_square, mesh_from_arrays
from .spaces import build_space, build_trace_space


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


def _monomial_exact(a, b):
    """int_T x^a y^b over the reference triangle (0,0), (1,0), (0,1)."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def suite_quadrature():
    out = []
    for deg in range(1, 9):
        rule = quadrature.triangle_rule(deg)
        worst = 0.0
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                got = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b)
                worst = max(worst, abs(got - _monomial_exact(a, b)))
        out.append(Check(f"triangle degree {deg}", worst <= 1e-14, f"max error {worst:.2e}"))
    for deg in range(1, 10):
        rule = quadrature.segment_rule(deg)
        worst = max(abs(rule.weights @ rule.points**k - 1.0 / (k + 1)) for k in range(deg + 1))
        out.append(Check(f"segment degree {deg}", worst <= 1e-14, f"max error {worst:.2e}"))
    return out


def reference_mesh():
    """The single triangle (0,0), (1,0), (0,1) with local vertex 0 at the origin."""
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return Mesh(v, [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], [0, 1, 2], v)


P1_STIFFNESS = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
P2_STIFFNESS = np.array([
    [1, 1 / 6, 1 / 6, 0, -2 / 3, -2 / 3],
    [1 / 6, 1 / 2, 0, 0, 0, -2 / 3],
    [1 / 6, 0, 1 / 2, 0, -2 / 3, 0],
    [0, 0, 0, 8 / 3, -4 / 3, -4 / 3],
    [-2 / 3, 0, -2 / 3, -4 / 3, 8 / 3, 0],
    [-2 / 3, -2 / 3, 0, -4 / 3, 0, 8 / 3],
])
BUBBLE_STIFFNESS = 81 / 10


def suite_local_matrices():
    mesh = reference_mesh()
    sp_ = build_space(mesh, "P1Pressure")
    out = []
    for fam, ref in (("P1Bubble", P1_STIFFNESS), ("P2", P2_STIFFNESS)):
        stiff, div, mass1 = solver.element_matrices(build_space(mesh, fam), sp_)
        k = stiff[0]
        if fam == "P1Bubble":
            err = max(np.abs(k[:3, :3] - ref).max(), abs(k[3, 3] - BUBBLE_STIFFNESS), np.abs(k[3, :3]).max())
        else:
            err = np.abs(k - ref).max()
        out.append(Check(f"{fam} stiffness", err <= 1e-13, f"max error {err:.2e}"))
        # a constant velocity has zero divergence: rows of B against the
        # vertex (and edge) coefficients of a constant field sum to zero
        nvtx = 6 if fam == "P2" else 3
        const = np.abs(div[0][:, :, :nvtx].sum(axis=2)).max()
        out.append(Check(f"{fam} divergence of constants", const <= 1e-14, f"{const:.2e}"))
    m_err = np.abs(mass1[0] - 1 / 6).max()
    out.append(Check("P1 mass against one", m_err <= 1e-15, f"{m_err:.2e}"))
    return out


def _quadratic_fit(points, values):
    """Coefficients of c0 + c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2 through 6 points."""
    x, y = points[:, 0], points[:, 1]
    V = np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y])
    return np.linalg.solve(V, values)


def _quadratic_grad(c, p):
    x, y = p
    return np.array([c[1] + 2 * c[3] * x + c[4] * y, c[2] + c[4] * x + 2 * c[5] * y])


def suite_jumps(seed=7):
    """Normal-stress jumps on two-triangle meshes against per-triangle polynomial fits."""
    rng = np.random.default_rng(seed)
    out = []
    meshes = [build_structured_unit_square(1),
              mesh_from_arrays([[0, 0], [2, 0], [0.7, 1.3], [1.6, -1.1]], [[0, 1, 2], [0, 3, 1]],
                               [[1, 2], [2, 0], [0, 3], [3, 1]], [0, 1, 2, 3])]
    for mi, mesh in enumerate(meshes):
        sv = build_space(mesh, "P2")
        sp_ = build_space(mesh, "P1Pressure")
        u = rng.standard_normal(sv.dof_count)
        p = rng.standard_normal(sp_.dof_count)
        sol = solver.StokesSolution(mesh, "hood-taylor", sv, sp_, u, p, 0.0)
        e = int(mesh.interior_edges[0])
        a, b = mesh.edges[e]
        s = np.array([0.0, 0.3, 0.5, 1.0])
        pts = (1 - s)[:, None] * mesh.vertices[a] + s[:, None] * mesh.vertices[b]
        expected = np.zeros((len(s), 2))
        ucomp = sv.split(u)
        nodes = sv.nodal_points
        for t in mesh.edge_tris[e]:
            dofs = sv.cell_to_dof[t]
            centroid = mesh.vertices[mesh.triangles[t]].mean(axis=0)
            d = mesh.vertices[b] - mesh.vertices[a]
            n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
            if (centroid - mesh.vertices[a]) @ n > 0:
                n = -n
            coeffs = [_quadratic_fit(nodes[dofs], ucomp[c, dofs]) for c in range(2)]
            pv = mesh.vertices[mesh.triangles[t]]
            pc = np.linalg.solve(np.column_stack([np.ones(3), pv]), p[mesh.triangles[t]])
            for i, q in enumerate(pts):
                grad = np.array([_quadratic_grad(c, q) for c in coeffs])
                pq = pc[0] + pc[1:] @ q
                expected[i] += grad @ n - pq * n
        got = estimator.jump_values(sol, [e], s)[0]
        err = np.abs(got - expected).max()
        out.append(Check(f"P2 jump mesh {mi}", err <= 1e-12, f"max error {err:.2e}"))
    return out


def random_compatible_datum(rng, jump_policy="average"):
    """Unit-square datum, smooth per side with random corner jumps and zero net flux."""
    coef = rng.standard_normal((4, 2, 3))
    freq = rng.uniform(0.5, 3.0, size=(4, 2))

    def make(side, shift):
        def piece(x):
            x = np.atleast_2d(x)
            s = x[:, 0] + x[:, 1]
            cols = []
            for c in range(2):
                a0, a1, a2 = coef[side, c]
                cols.append(a0 + a1 * s + a2 * np.sin(freq[side, c] * np.pi * s))
            out = np.column_stack(cols)
            out[:, 1] += shift
            return out
        return piece

    raw = boundary.BoundaryDatum([make(i, 0.0) for i in range(4)], jump_policy=jump_policy, check=False)
    # shift the vertical component on the bottom side (normal (0, -1)) to cancel the flux
    flux = raw.flux()
    pieces = [make(0, flux)] + [make(i, 0.0) for i in range(1, 4)]
    return boundary.BoundaryDatum(pieces, jump_policy=jump_policy, name="random")


def suite_compatibility(seed=11, ndata=5, sizes=(4, 8, 16)):
    rng = np.random.default_rng(seed)
    data = [random_compatible_datum(rng) for _ in range(ndata)] + [boundary.cavity(), boundary.parabolic_normal()]
    out = []
    for n in sizes:
        trace = build_trace_space(build_structured_unit_square(n))
        for d_i, datum in enumerate(data):
            for name, fn in boundary.REGULARIZERS.items():
                gh = fn(datum, trace)
                defect = boundary.compatibility_defect(gh)
                scale = (1.0 + np.abs(gh.values).max()) * trace.length
                out.append(Check(f"{name} datum {d_i} n={n}", abs(defect) <= 1e-11 * scale,
                                 f"defect {defect:.2e}"))
    return out


def suite_dorfler(seed=3, trials=100):
    rng = np.random.default_rng(seed)
    out = []
    bad = 0
    for _ in range(trials):
        n = int(rng.integers(1, 60))
        etas = rng.exponential(size=n) * (rng.random(n) < 0.9)
        if not np.any(etas > 0):
            etas[0] = 1.0
        theta = float(rng.uniform(0.05, 0.95))
        marked = adaptivity.dorfler_mark(etas, theta)
        e2 = etas**2
        total = e2.sum()
        got = e2[marked].sum()
        smallest = e2[marked].min()
        # brute force: sort descending, accumulate until the bulk criterion holds
        ref_count = np.argmax(np.cumsum(np.sort(e2)[::-1]) >= theta * total * (1 - 1e-14)) + 1
        ok = got >= theta * total * (1 - 1e-14) and got - smallest < theta * total and len(marked) == ref_count
        bad += not ok
    out.append(Check(f"minimality on {trials} random vectors", bad == 0, f"{bad} failures"))
    return out


MINI_UNIFORM_ORDERS_U = (0.51724, 0.51049, 0.50553, 0.50281)
MINI_UNIFORM_ORDERS_ETA = (0.51818, 0.5091, 0.50449, 0.5022)


def suite_mini_rates():
    from .config import RunConfig

    rec = adaptivity.run_uniform(RunConfig(method="mini", levels=5))
    out = []
    for col, ref in (("order_u", MINI_UNIFORM_ORDERS_U), ("order_eta", MINI_UNIFORM_ORDERS_ETA)):
        got = rec.column(col)[1:]
        dev = np.abs(got - np.array(ref)).max()
        out.append(Check(f"uniform Mini {col}", dev <= 0.05, f"max deviation {dev:.4f}"))
    return out


SUITES = {
    "quadrature": suite_quadrature,
    "local-matrices": suite_local_matrices,
    "jumps": suite_jumps,
    "compatibility": suite_compatibility,
    "dorfler": suite_dorfler,
    "mini-rates": suite_mini_rates,
}
DEFAULT_SUITES = ("quadrature", "local-matrices", "jumps", "compatibility", "dorfler")
