"""Conic programs (LP + second-order cones) and a pluggable interior-point solve.

The backend is chosen at import: the native Clarabel solver when it can be
imported, else the pure numpy implementation in ``ipm``.  Set
``RSMA_ISTN_CONIC_BACKEND`` to ``clarabel`` or ``python`` to force one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import ipm
from .program import Affine, ComplexAffine, ConicProgram, Soc

STATUSES = ("optimal", "infeasible", "unbounded", "numerical_failure", "iteration_limit")
VIOLATION_TOL = 1e-7

_BACKENDS = {"python": ipm.solve_socp}
try:
    from . import _clarabel

    _BACKENDS["clarabel"] = _clarabel.solve_socp
except ImportError:  # pragma: no cover - depends on the environment
    pass

DEFAULT_BACKEND = os.environ.get("RSMA_ISTN_CONIC_BACKEND") or (
    "clarabel" if "clarabel" in _BACKENDS else "python")
if DEFAULT_BACKEND not in _BACKENDS:
    raise ImportError(f"conic backend {DEFAULT_BACKEND!r} is not available")


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


@dataclass
class SolveResult:
    status: str
    x: np.ndarray
    objective_value: float
    solver_iterations: int
    max_violation: float = np.nan
    backend: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def solve(prog: ConicProgram, backend: str | None = None, *, feastol: float = 1e-8,
          abstol: float = 1e-8, reltol: float = 1e-8, max_iters: int = 200) -> SolveResult:
    """Maximize ``prog`` and re-check the returned point with ``prog.violations``.

    An "optimal" report whose point violates a stored row by more than
    ``VIOLATION_TOL`` (scaled) is downgraded to ``numerical_failure``.
    Exceptions raised inside a backend are reported the same way.
    """
    name = backend or DEFAULT_BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"unknown conic backend {name!r}; available: {available_backends()}")
    c, G, h, n_lin, soc_dims = prog.standard_form()
    try:
        status, x, iters = _BACKENDS[name](c, G, h, n_lin, soc_dims, feastol=feastol, abstol=abstol,
                                           reltol=reltol, max_iters=max_iters)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError):
        return SolveResult("numerical_failure", np.full(prog.n, np.nan), np.nan, 0, np.inf, name)
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        viol = np.inf
    else:
        viol = prog.max_violation(x)
    if status == "optimal" and not viol <= VIOLATION_TOL:
        status = "numerical_failure"
    obj = prog.objective_value(x) if np.all(np.isfinite(x)) else np.nan
    return SolveResult(status, x, obj, iters, viol, name)


__all__ = ["Affine", "ComplexAffine", "ConicProgram", "Soc", "SolveResult", "solve",
           "available_backends", "DEFAULT_BACKEND", "STATUSES", "VIOLATION_TOL"]
