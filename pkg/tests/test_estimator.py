import numpy as np
import pytest

from stokes_roughbc.boundary import cavity, linear, modified_lagrange
from stokes_roughbc.estimator import (BoundaryEdgeError, InsufficientLevelsError, edge_jump, effectivity,
                                      estimate, indicators, jump_values)
from stokes_roughbc.mesh import build_structured_unit_square, mesh_from_arrays, refine_uniform
from stokes_roughbc.solver import StokesSolution, solve
from stokes_roughbc.spaces import build_space, build_trace_space, interpolate_nodal, shape_d2lam


def two_triangle_solution(family, u=None, p=None):
    m = build_structured_unit_square(1)
    sv = build_space(m, family)
    sp = build_space(m, "P1Pressure")
    u = np.zeros(sv.dof_count) if u is None else u
    p = np.zeros(sp.dof_count) if p is None else p
    return StokesSolution(m, "mini" if family == "P1Bubble" else "hood-taylor", sv, sp, u, p, 0.0)


def test_linear_field_constant_pressure_has_no_jump():
    sol = two_triangle_solution("P2")
    sol.u[:] = interpolate_nodal(sol.space_v, lambda x: np.column_stack([2 * x[:, 0] + x[:, 1], -3 * x[:, 1]]))
    sol.p[:] = 1.7
    e = sol.mesh.interior_edges[0]
    np.testing.assert_allclose(jump_values(sol, [e], np.linspace(0, 1, 7)), 0.0, atol=1e-14)


def test_hat_function_jump_across_diagonal():
    """u = (hat at vertex (1,0), 0) on the two-triangle square, p = 0."""
    sol = two_triangle_solution("P2")
    m = sol.mesh
    k = int(np.flatnonzero((m.vertices == [1, 0]).all(axis=1))[0])
    sol.u[k] = 1.0
    # midpoints of the edges at vertex k carry 1/2 so the P2 field equals the P1 hat
    for e, (a, b) in enumerate(m.edges):
        if k in (a, b):
            sol.u[m.nv + e] = 0.5
    e = m.interior_edges[0]
    J = jump_values(sol, [e], np.array([0.0, 0.5, 1.0]))[0]
    # lower triangle (0,0),(1,0),(1,1): hat = x - y, gradient (1,-1), outward normal on the
    # diagonal (-1,1)/sqrt2 gives -2/sqrt2; the hat vanishes on the upper triangle
    np.testing.assert_allclose(J, [[-2 / np.sqrt(2), 0.0]] * 3, atol=1e-14)


def test_unit_normal_stress_jump_norm_equals_edge_length():
    """A kink u = max(x.n - c, 0) n across e has grad u n = n on one side only, so |J_e| = 1.

    (A continuous P1 pressure cannot jump, so the unit jump is produced by the velocity.)
    """
    sol = two_triangle_solution("P2")
    m = sol.mesh
    e = m.interior_edges[0]
    a, b = m.edges[e]
    d = m.vertices[b] - m.vertices[a]
    n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
    f = lambda x: np.outer(np.maximum(x @ n - m.vertices[a] @ n, 0.0), n)
    sol.u[:] = interpolate_nodal(sol.space_v, f)
    jl = edge_jump(sol, e)
    assert jl.norm_squared() == pytest.approx(jl.length, rel=1e-13)
    assert jl.length == pytest.approx(np.sqrt(2))


def test_boundary_edge_rejected():
    sol = two_triangle_solution("P2")
    with pytest.raises(BoundaryEdgeError):
        edge_jump(sol, sol.mesh.boundary_edge_ids[0])


def test_edge_jump_polynomial_coefficients(rng):
    sol = two_triangle_solution("P2", u=rng.standard_normal(18), p=rng.standard_normal(4))
    ej = edge_jump(sol, sol.mesh.interior_edges[0])
    c = ej.coefficients
    s = rng.random(6)
    np.testing.assert_allclose(np.polynomial.polynomial.polyval(s, c).T, ej(s), atol=1e-12)


@pytest.mark.parametrize("method", ["mini", "hood-taylor"])
def test_patch_solution_has_zero_estimator(method):
    m = build_structured_unit_square(6)
    sol = solve(m, method, modified_lagrange(linear(), build_trace_space(m)))
    ind = indicators(sol)
    assert ind.eta <= 1e-9
    assert np.all(ind.eta_T >= 0)


@pytest.mark.parametrize("method", ["mini", "hood-taylor"])
def test_terms_and_audits(method, cavity_solutions):
    sol = cavity_solutions[method]
    ind = indicators(sol)
    m = sol.mesh
    for t in (ind.residual_term, ind.div_term, ind.jump_term):
        assert np.all(t >= 0)
    assert ind.eta**2 == pytest.approx(np.sum(ind.eta_T_squared), rel=1e-14)
    # each interior edge appears in exactly two element sums with their own h_T
    h = m.diameters
    total = 0.0
    for e in m.interior_edges:
        t0, t1 = m.edge_tris[e]
        total += 0.5 * (h[t0] ** 3 + h[t1] ** 3) * edge_jump(sol, e).norm_squared()
    assert ind.jump_term.sum() == pytest.approx(total, rel=1e-13)
    np.testing.assert_allclose(ind.h, m.diameters)


def test_bubble_laplacian_against_finite_differences():
    """Second derivatives of the bubble in barycentric form, mapped to x, vs a 5-point stencil."""
    b = lambda x, y: 27 * x * y * (1 - x - y)
    x0, y0, step = 0.3, 0.25, 1e-3
    lap_fd = (b(x0 + step, y0) + b(x0 - step, y0) + b(x0, y0 + step) + b(x0, y0 - step) - 4 * b(x0, y0)) / step**2
    glam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    metric = glam @ glam.T
    d2 = shape_d2lam("P1Bubble", [[1 - x0 - y0, x0, y0]])[0, 3]
    assert np.sum(d2 * metric) == pytest.approx(lap_fd, rel=1e-6)


def test_estimator_scaling():
    m = build_structured_unit_square(8)
    tr = build_trace_space(m)
    base = estimate(solve(m, "mini", modified_lagrange(cavity(), tr)))
    for s in (-2.0, 0.5, 10.0):
        eta = estimate(solve(m, "mini", modified_lagrange(cavity().scaled(s), tr)))
        assert eta == pytest.approx(abs(s) * base, rel=1e-11)


def test_estimator_renumbering_invariance(rng):
    base = build_structured_unit_square(5)
    perm = rng.permutation(base.nv)
    v = np.empty_like(base.vertices)
    v[perm] = base.vertices
    m2 = mesh_from_arrays(v, perm[base.triangles][rng.permutation(base.nt)], perm[base.boundary_edges],
                          base.boundary_segments)
    e1 = estimate(solve(base, "hood-taylor", modified_lagrange(cavity(), build_trace_space(base))))
    e2 = estimate(solve(m2, "hood-taylor", modified_lagrange(cavity(), build_trace_space(m2))))
    assert e2 == pytest.approx(e1, rel=1e-13)


def test_effectivity_sequence():
    m = build_structured_unit_square(4)
    sols = []
    for _ in range(3):
        sols.append(solve(m, "mini", modified_lagrange(cavity(), build_trace_space(m))))
        m = refine_uniform(m)
    eff = effectivity(sols)
    assert len(eff) == 2
    assert all(e > 0 for e in eff)
    with pytest.raises(InsufficientLevelsError):
        effectivity(sols[:2])


def test_effectivity_patch_sentinel():
    m = build_structured_unit_square(4)
    sols = []
    for _ in range(3):
        sols.append(solve(m, "hood-taylor", modified_lagrange(linear(), build_trace_space(m))))
        m = refine_uniform(m)
    # err and eta are both at round-off level and reported as the exact-zero sentinel
    assert effectivity(sols) == [0.0, 0.0]
