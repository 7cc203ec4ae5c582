"""Adapter for the native Clarabel interior-point solver."""

from __future__ import annotations

import clarabel
import numpy as np
from scipy import sparse

_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "MaxIterations": "iteration_limit",
    "MaxTime": "iteration_limit",
}


def solve_socp(c, G, h, n_lin, soc_dims, *, feastol=1e-8, abstol=1e-8, reltol=1e-8, max_iters=200):
    n = G.shape[1]
    P = sparse.csc_matrix((n, n))
    cones = []
    if n_lin:
        cones.append(clarabel.NonnegativeConeT(int(n_lin)))
    cones += [clarabel.SecondOrderConeT(int(d)) for d in soc_dims]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = int(max_iters)
    settings.tol_feas = feastol
    settings.tol_gap_abs = abstol
    settings.tol_gap_rel = reltol
    solver = clarabel.DefaultSolver(P, np.asarray(c, float), sparse.csc_matrix(G), np.asarray(h, float),
                                    cones, settings)
    sol = solver.solve()
    status = _STATUS.get(str(sol.status).split(".")[-1], "numerical_failure")
    return status, np.asarray(sol.x, dtype=float), int(sol.iterations)
