"""Bulk marking, refinement loops and convergence tables."""
import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import NoAdmissibleNodeError, regularize
from .estimator import indicators
from .mesh import build_structured_unit_square, read_mesh, refine_marked, refine_uniform
from .quadrature import triangle_rule
from .solver import solve
from .spaces import build_trace_space

log = logging.getLogger(__name__)

ROUNDOFF_FLOOR = 1e-12


class NotNestedError(ValueError):
    pass


def consecutive_error(coarse, fine):
    """``||u_fine - u_coarse||_{0,Omega}`` integrated on the fine mesh.

    The coarse solution is evaluated inside the parent triangle recorded in
    the fine mesh's hierarchy, so no global point search is needed.
    """
    fm, cm = fine.mesh, coarse.mesh
    parent = fm.parent_of
    if parent is None or len(parent) != fm.nt or parent.max() >= cm.nt:
        raise NotNestedError("fine mesh carries no hierarchy link to the coarse mesh")
    rule = triangle_rule(6)
    lam = rule.barycentric
    nq = len(lam)
    pts = np.einsum("qk,tkd->tqd", lam, fm.vertices[fm.triangles])
    tt = np.repeat(np.arange(fm.nt), nq)
    uf = fine.velocity(tt, np.tile(lam, (fm.nt, 1)))
    pt = np.repeat(parent, nq)
    clam = cm.to_barycentric(pt, pts.reshape(-1, 2))
    uc = coarse.velocity(pt, clam)
    w = (2.0 * fm.signed_areas[:, None] * rule.weights[None, :]).ravel()
    return float(np.sqrt(w @ np.sum((uf - uc) ** 2, axis=1)))


class ZeroIndicatorsError(ValueError):
    """All indicators vanish: nothing to mark (the discrete solution is already exact)."""


def dorfler_mark(etas, theta):
    """Minimal set of largest indicators whose squares reach ``theta * eta^2``.

    ``etas`` are the per-element indicators ``eta_T`` (not squared).  Equal
    values are taken in ascending element id.  Returns sorted element ids.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    e2 = np.asarray(etas, dtype=float) ** 2
    total = math.fsum(e2)
    if not total > 0.0:
        raise ZeroIndicatorsError("all indicators are zero")
    order = np.lexsort((np.arange(len(e2)), -e2))
    csum = np.cumsum(e2[order])
    # a running sum is monotone, so the first crossing gives the minimal count
    n = int(np.searchsorted(csum, theta * total * (1 - 1e-14), side="left")) + 1
    return np.sort(order[:min(n, len(e2))])


@dataclass
class LevelRow:
    nv: int
    err_u: float = math.nan
    eta: float = math.nan
    order_u: float = math.nan
    order_eta: float = math.nan


@dataclass
class ConvergenceRecord:
    rows: list = field(default_factory=list)
    method: str = "mini"
    mode: str = "uniform"
    theta: float = None
    jump_policy: str = None
    regularizer: str = None
    datum: str = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def nv(self):
        return np.array([r.nv for r in self.rows], dtype=int)

    def fill_orders(self):
        """Fill ``order_u``/``order_eta``; rows whose ratio is undefined get NaN.

        Values at round-off level (below ``ROUNDOFF_FLOOR``) carry no rate,
        e.g. for data the discretization reproduces exactly.
        """
        for col, dest in (("err_u", "order_u"), ("eta", "order_eta")):
            vals = self.column(col)
            for k, r in enumerate(self.rows):
                o = math.nan
                if k > 0 and vals[k - 1] > ROUNDOFF_FLOOR and vals[k] > ROUNDOFF_FLOOR:
                    o = _order(vals[k - 1], vals[k], self.rows[k - 1].nv, r.nv)
                setattr(r, dest, o)
        return self


def _order(v0, v1, n0, n1):
    return math.log(v0 / v1) / math.log(n1 / n0)


def convergence_order(rec, column):
    """``log(v_{k-1} / v_k) / log(nv_k / nv_{k-1})`` for k = 1.. (one fewer entry than rows).

    ``rec`` is a :class:`ConvergenceRecord` or a pair ``(nv, values)``.
    """
    if isinstance(rec, ConvergenceRecord):
        nv, vals = rec.nv, rec.column(column)
    else:
        nv, vals = (np.asarray(a, dtype=float) for a in rec)
    if len(vals) < 2:
        raise ValueError("convergence orders need at least two levels")
    if not np.all(vals > 0):
        raise ValueError(f"{column} has nonpositive or undefined entries; orders are undefined")
    return [_order(vals[k - 1], vals[k], nv[k - 1], nv[k]) for k in range(1, len(vals))]


def level_errors(sol_seq):
    """Consecutive errors paired with the finer level: entry k is ``||u_k - u_{k-1}||``.

    The first entry is ``None`` (no predecessor).
    """
    return [None] + [consecutive_error(c, f) for c, f in zip(sol_seq, sol_seq[1:])]


def _initial_mesh(config):
    if config.mesh_file is not None:
        return read_mesh(config.mesh_file)
    return build_structured_unit_square(config.n)


def solve_level(mesh, config, datum):
    trace = build_trace_space(mesh)
    gh = regularize(datum, trace, config.regularizer)
    sol = solve(mesh, config.method, gh)
    return sol, indicators(sol)


def _record(config):
    return ConvergenceRecord(method=config.method, mode=config.mode, theta=config.theta,
                             jump_policy=config.jump_policy, regularizer=config.regularizer,
                             datum=config.datum)


def run_uniform(config, callback=None):
    """Uniform red refinement for ``config.levels`` tabulated levels.

    With a structured start of even ``n`` the half-resolution mesh is solved
    first (untabulated) so the first row already carries a consecutive
    error; its red refinement coincides geometrically with the ``n`` mesh.
    The half mesh is skipped when it is too coarse to carry the flux
    correction.
    ``callback(level, sol, ind)`` is invoked for every tabulated level.
    """
    config = config.validated()
    datum = config.make_datum()
    rec = _record(config)
    prev = None
    mesh = _initial_mesh(config)
    if config.mesh_file is None and config.n % 2 == 0:
        coarse = build_structured_unit_square(config.n // 2)
        try:
            prev, _ = solve_level(coarse, config, datum)
            mesh = refine_uniform(coarse)
        except NoAdmissibleNodeError:
            prev = None
    for level in range(config.levels):
        if level > 0:
            mesh = refine_uniform(mesh)
        sol, ind = solve_level(mesh, config, datum)
        err = consecutive_error(prev, sol) if prev is not None else math.nan
        rec.rows.append(LevelRow(mesh.nv, err, ind.eta))
        log.info("level %d nv=%d err=%.6g eta=%.6g", level, mesh.nv, err, ind.eta)
        if callback is not None:
            callback(level, sol, ind)
        prev = sol
    return rec.fill_orders()


def run_adaptive(config, callback=None, all_edges=True):
    """Solve, estimate, mark (bulk criterion with ``theta``), bisect; repeat.

    Marked triangles have all three edges split by default; with
    ``all_edges=False`` only their refinement edge is bisected, which makes
    the per-step rates alternate between odd and even steps.  Stops after
    ``max_iters`` solves or when the next mesh would exceed ``max_dofs``
    vertices.  The first row has no consecutive error.
    """
    config = config.validated()
    datum = config.make_datum()
    rec = _record(config)
    mesh = _initial_mesh(config)
    prev = None
    for it in range(config.max_iters):
        sol, ind = solve_level(mesh, config, datum)
        err = consecutive_error(prev, sol) if prev is not None else math.nan
        rec.rows.append(LevelRow(mesh.nv, err, ind.eta))
        log.info("iteration %d nv=%d err=%.6g eta=%.6g", it, mesh.nv, err, ind.eta)
        if callback is not None:
            callback(it, sol, ind)
        if it + 1 == config.max_iters:
            break
        try:
            marked = dorfler_mark(ind.eta_T, config.theta)
        except ZeroIndicatorsError:
            break
        fine = refine_marked(mesh, marked, all_edges=all_edges)
        if fine.nv > config.max_dofs:
            break
        prev, mesh = sol, fine
    return rec.fill_orders()


def run(config, callback=None):
    if config.mode == "adaptive":
        return run_adaptive(config, callback)
    return run_uniform(config, callback)


def _fmt(v):
    return "" if v is None or not math.isfinite(v) else f"{v:.6g}"


CSV_HEADER = "nv,err_u,eta,order_u,order_eta"


def record_csv(rec):
    lines = [CSV_HEADER]
    for r in rec.rows:
        lines.append(",".join([str(r.nv), _fmt(r.err_u), _fmt(r.eta), _fmt(r.order_u), _fmt(r.order_eta)]))
    return "\n".join(lines) + "\n"


def write_csv(rec, path):
    with open(path, "w", newline="") as fh:
        fh.write(record_csv(rec))


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv` (blank cells become NaN)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for d in reader:
            f = lambda k: float(d[k]) if d[k] else math.nan
            rows.append(LevelRow(int(d["nv"]), f("err_u"), f("eta"), f("order_u"), f("order_eta")))
    return rows


def format_table(rec):
    """Console table in the column order nv, error, eta, orders."""
    head = f"{'nv':>8}  {'L2 error in u':>14}  {'eta':>12}  {'order in u':>11}  {'order in eta':>12}"
    out = [head, "-" * len(head)]
    for r in rec.rows:
        out.append(f"{r.nv:>8}  {_fmt(r.err_u):>14}  {_fmt(r.eta):>12}  {_fmt(r.order_u):>11}  "
                   f"{_fmt(r.order_eta):>12}")
    return "\n".join(out)
