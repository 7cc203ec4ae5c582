"""Conic program data model: real variables, affine rows, second-order cones.

A ``ConicProgram`` maximizes a linear objective subject to

* ``row . x <= rhs`` (affine inequalities), and
* ``||A x + b||_2 <= c . x + d`` (second-order cones).

Complex quantities are split into real and imaginary rows by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse


class Affine:
    """Sparse real affine expression ``coef . x[idx] + const``."""

    __slots__ = ("idx", "coef", "const")

    def __init__(self, idx=(), coef=(), const: float = 0.0):
        self.idx = np.asarray(idx, dtype=np.int64).ravel()
        self.coef = np.asarray(coef, dtype=float).ravel()
        self.const = float(const)
        if self.idx.shape != self.coef.shape:
            raise ValueError("idx and coef must have the same length")

    @classmethod
    def constant(cls, value: float) -> "Affine":
        return cls((), (), value)

    @classmethod
    def var(cls, index: int, coef: float = 1.0) -> "Affine":
        return cls([index], [coef])

    @classmethod
    def sum_of(cls, indices, coef: float = 1.0) -> "Affine":
        indices = np.asarray(indices, dtype=np.int64).ravel()
        return cls(indices, np.full(len(indices), coef))

    def __add__(self, other):
        if isinstance(other, Affine):
            return Affine(np.concatenate([self.idx, other.idx]), np.concatenate([self.coef, other.coef]),
                          self.const + other.const)
        return Affine(self.idx, self.coef, self.const + float(other))

    __radd__ = __add__

    def __neg__(self):
        return Affine(self.idx, -self.coef, -self.const)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, k):
        k = float(k)
        return Affine(self.idx, self.coef * k, self.const * k)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return float(self.coef @ x[self.idx] + self.const) if len(self.idx) else self.const

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        np.add.at(out, self.idx, self.coef)
        return out


class ComplexAffine:
    """Complex affine form ``a^T v`` where ``v = x[re_idx] + 1j * x[im_idx]``."""

    __slots__ = ("re", "im")

    def __init__(self, re: Affine, im: Affine):
        self.re = re
        self.im = im

    @classmethod
    def linear(cls, a: np.ndarray, re_idx: np.ndarray, im_idx: np.ndarray, const: complex = 0.0):
        a = np.asarray(a, dtype=complex)
        idx = np.concatenate([re_idx, im_idx])
        re = Affine(idx, np.concatenate([a.real, -a.imag]), np.real(const))
        im = Affine(idx, np.concatenate([a.imag, a.real]), np.imag(const))
        return cls(re, im)

    def __add__(self, other: "ComplexAffine"):
        return ComplexAffine(self.re + other.re, self.im + other.im)

    def __mul__(self, k: float):
        return ComplexAffine(self.re * k, self.im * k)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> complex:
        return self.re.value(x) + 1j * self.im.value(x)


@dataclass(frozen=True)
class Soc:
    """``||rows(x)||_2 <= t(x)``."""

    rows: tuple
    t: Affine

    @property
    def dim(self) -> int:
        return 1 + len(self.rows)


class ConicProgram:
    def __init__(self):
        self.n = 0
        self.names: dict[str, np.ndarray] = {}
        self.objective = Affine()
        self.ineqs: list[tuple[Affine, str]] = []
        self.socs: list[tuple[Soc, str]] = []

    # variables ---------------------------------------------------------
    def add_variable(self, name: str, size: int = 1) -> np.ndarray:
        if name in self.names:
            raise ValueError(f"duplicate variable {name!r}")
        idx = np.arange(self.n, self.n + int(size))
        self.names[name] = idx
        self.n += int(size)
        return idx

    def var(self, name: str) -> np.ndarray:
        return self.names[name]

    # constraints -------------------------------------------------------
    def _check(self, e: Affine):
        if len(e.idx) and (e.idx.min() < 0 or e.idx.max() >= self.n):
            raise IndexError("variable index out of range")

    def add_le(self, expr: Affine, rhs: float = 0.0, tag: str = ""):
        """``expr <= rhs``."""
        self._check(expr)
        self.ineqs.append((expr - rhs, tag))

    def add_ge(self, expr: Affine, rhs: float = 0.0, tag: str = ""):
        self.add_le(-expr, -rhs, tag)

    def add_soc(self, rows, t: Affine, tag: str = ""):
        rows = tuple(rows)
        for r in rows:
            if not isinstance(r, Affine):
                raise TypeError("SOC rows must be Affine")
            self._check(r)
        self._check(t)
        self.socs.append((Soc(rows, t), tag))

    def add_convex_quadratic_le_affine(self, terms, rhs: Affine, tag: str = "", scale: float = 1.0):
        """``sum |term|^2 <= rhs`` via ``||[2*terms; rhs - 1]|| <= rhs + 1``.

        Complex terms contribute a real and an imaginary row.  ``scale > 0``
        divides both sides (row conditioning only).
        """
        if not isinstance(rhs, Affine):
            raise TypeError("rhs must be an Affine expression")
        flat = []
        for t in terms:
            if isinstance(t, ComplexAffine):
                flat.extend([t.re, t.im])
            elif isinstance(t, Affine):
                flat.append(t)
            else:
                raise TypeError(f"non-affine term of type {type(t).__name__}")
        s = 1.0 / np.sqrt(scale)
        r = rhs * (1.0 / scale)
        rows = [2.0 * s * t for t in flat] + [r - 1.0]
        self.add_soc(rows, r + 1.0, tag)

    def maximize(self, expr: Affine):
        self._check(expr)
        self.objective = expr

    # export ------------------------------------------------------------
    def standard_form(self):
        """``min c.x  s.t.  G x + s = h,  s in R+^m_lin x Q^d1 x ...``.

        Returns ``(c, G (csc), h, n_lin, soc_dims)``.
        """
        c = -self.objective.dense(self.n)
        rows, cols, vals, h = [], [], [], []
        r = 0
        for e, _ in self.ineqs:
            rows.append(np.full(len(e.idx), r))
            cols.append(e.idx)
            vals.append(e.coef)
            h.append(-e.const)
            r += 1
        n_lin = r
        soc_dims = []
        for soc, _ in self.socs:
            for e in (soc.t,) + soc.rows:
                rows.append(np.full(len(e.idx), r))
                cols.append(e.idx)
                vals.append(-e.coef)
                h.append(e.const)
                r += 1
            soc_dims.append(soc.dim)
        if rows:
            G = sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(r, self.n))
        else:
            G = sparse.csc_matrix((0, self.n))
        G.sum_duplicates()
        return c, G, np.asarray(h, dtype=float), n_lin, soc_dims

    def violations(self, x: np.ndarray) -> dict[str, float]:
        """Scaled violation of every constraint, evaluated row by row.

        Affine rows are scaled by ``1 + |const|`` and cones by
        ``1 + max(||rows||, |t|)``.
        """
        out: dict[str, float] = {}
        for i, (e, tag) in enumerate(self.ineqs):
            v = e.value(x)
            out[f"le{i}:{tag}"] = max(0.0, v) / (1.0 + abs(e.const))
        for i, (soc, tag) in enumerate(self.socs):
            lhs = float(np.sqrt(sum(r.value(x) ** 2 for r in soc.rows)))
            t = soc.t.value(x)
            out[f"soc{i}:{tag}"] = max(0.0, lhs - t) / (1.0 + max(lhs, abs(t)))
        return out

    def max_violation(self, x: np.ndarray) -> float:
        v = self.violations(x)
        return max(v.values()) if v else 0.0

    def objective_value(self, x: np.ndarray) -> float:
        return self.objective.value(x)

    def to_cbf(self) -> str:
        """Text dump in the Conic Benchmark Format (version 3)."""
        c, G, h, n_lin, soc_dims = self.standard_form()
        A = (-G).tocoo()
        lines = ["VER", "3", "", "OBJSENSE", "MAX", "",
                 "VAR", f"{self.n} 1", f"F {self.n}", ""]
        cones = []
        if n_lin:
            cones.append(f"L+ {n_lin}")
        cones += [f"Q {d}" for d in soc_dims]
        lines += ["CON", f"{G.shape[0]} {len(cones)}", *cones, ""]
        obj = self.objective
        dense_obj = obj.dense(self.n)
        nz = np.flatnonzero(dense_obj)
        lines += ["OBJACOORD", str(len(nz)), *[f"{j} {dense_obj[j]!r}" for j in nz], ""]
        if obj.const:
            lines += ["OBJBCOORD", repr(obj.const), ""]
        keep = A.data != 0
        lines += ["ACOORD", str(int(keep.sum()))]
        lines += [f"{i} {j} {v!r}" for i, j, v in zip(A.row[keep], A.col[keep], A.data[keep])]
        nzh = np.flatnonzero(h)
        lines += ["", "BCOORD", str(len(nzh)), *[f"{i} {h[i]!r}" for i in nzh], ""]
        return "\n".join(lines)
