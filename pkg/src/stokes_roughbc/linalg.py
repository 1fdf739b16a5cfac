"""Sparse symmetric-indefinite direct solves.

PARDISO (through pypardiso) is used when MKL can be loaded; it handles the
zero pressure block and the dense multiplier row with weighted matching and
symmetric scaling.  SuperLU from scipy is the fallback: correct, but its
column orderings are poor for saddle-point systems, so it is only practical
for small meshes.
"""
import importlib.metadata
import logging
import os

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

_PARDISO = None


def _find_mkl_rt():
    try:
        dist = importlib.metadata.distribution("mkl")
    except importlib.metadata.PackageNotFoundError:
        return None
    for f in dist.files or ():
        if "libmkl_rt" in f.name:
            path = os.path.realpath(dist.locate_file(f))
            if os.path.exists(path):
                return path
    return None


def _pardiso_class():
    global _PARDISO
    if _PARDISO is None:
        if "PYPARDISO_MKL_RT" not in os.environ:
            path = _find_mkl_rt()
            if path:
                os.environ["PYPARDISO_MKL_RT"] = path
        try:
            from pypardiso import PyPardisoSolver
            PyPardisoSolver()
            _PARDISO = PyPardisoSolver
        except (ImportError, OSError) as exc:
            log.warning("PARDISO unavailable (%s); falling back to SuperLU", exc)
            _PARDISO = False
    return _PARDISO


def backend():
    return "pardiso" if _pardiso_class() else "superlu"


def _upper_with_diagonal(K):
    """Upper triangle in CSR with every diagonal entry stored (PARDISO requirement)."""
    n = K.shape[0]
    U = sp.triu(K, format="coo")
    rows = np.concatenate([U.row, np.arange(n)])
    cols = np.concatenate([U.col, np.arange(n)])
    data = np.concatenate([U.data, np.zeros(n)])
    out = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    out.sort_indices()
    return out


def solve_symmetric(K, rhs, refine_tol=1e-13, max_refine=3):
    """Solve ``K x = rhs`` for symmetric (possibly indefinite) sparse ``K``.

    A few steps of iterative refinement against ``K`` follow the direct
    solve; the relative residual is returned alongside ``x``.
    """
    K = sp.csr_matrix(K)
    bnorm = np.linalg.norm(rhs)
    solver_cls = _pardiso_class()
    if solver_cls:
        ps = solver_cls(mtype=-2)
        # 1: custom iparm; 2: METIS ordering; 8: refinement steps;
        # 10: pivot perturbation 1e-13; 11/13: scaling and weighted matching
        for i, v in ((1, 1), (2, 2), (8, 10), (10, 13), (11, 1), (13, 1)):
            ps.iparm[i - 1] = v
        U = _upper_with_diagonal(K)
        ps.factorize(U)
        step = lambda r: ps.solve(U, r)
    else:
        lu = spla.splu(K.tocsc(), permc_spec="COLAMD")
        ps = None
        step = lu.solve
    try:
        x = step(rhs)
        for _ in range(max_refine):
            r = rhs - K @ x
            if np.linalg.norm(r) <= refine_tol * bnorm:
                break
            x = x + step(r)
    finally:
        if ps is not None:
            ps.free_memory(everything=True)
    rel = np.linalg.norm(rhs - K @ x) / bnorm if bnorm > 0 else 0.0
    return x, rel
