"""Pure numpy primal-dual interior-point method for LP + SOC cones.

Solves ``min c.x  s.t.  G x + s = h,  s in K`` through the homogeneous
self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector, following the scheme used by ECOS / CVXOPT.
Intended for small dense problems; it is the fallback when no native
conic solver is importable.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg


class _Cones:
    def __init__(self, n_lin: int, soc_dims):
        self.n_lin = int(n_lin)
        self.soc = []
        start = self.n_lin
        for d in soc_dims:
            self.soc.append((start, start + int(d)))
            start += int(d)
        self.m = start
        self.degree = self.n_lin + len(self.soc)
        e = np.zeros(self.m)
        e[: self.n_lin] = 1.0
        for a, _ in self.soc:
            e[a] = 1.0
        self.e = e

    def min_eig(self, u):
        vals = []
        if self.n_lin:
            vals.append(np.min(u[: self.n_lin]))
        for a, b in self.soc:
            vals.append(u[a] - np.linalg.norm(u[a + 1: b]))
        return min(vals) if vals else np.inf

    def circ(self, u, v):
        out = np.empty_like(u)
        out[: self.n_lin] = u[: self.n_lin] * v[: self.n_lin]
        for a, b in self.soc:
            out[a] = u[a:b] @ v[a:b]
            out[a + 1: b] = u[a] * v[a + 1: b] + v[a] * u[a + 1: b]
        return out

    def circ_solve(self, lam, d):
        """y with lam o y = d."""
        out = np.empty_like(d)
        out[: self.n_lin] = d[: self.n_lin] / lam[: self.n_lin]
        for a, b in self.soc:
            l0, l1 = lam[a], lam[a + 1: b]
            d0, d1 = d[a], d[a + 1: b]
            det = l0 * l0 - l1 @ l1
            y0 = (l0 * d0 - l1 @ d1) / det
            out[a] = y0
            out[a + 1: b] = (d1 - y0 * l1) / l0
        return out

    def max_step(self, u, du):
        alpha = np.inf
        if self.n_lin:
            neg = du[: self.n_lin] < 0
            if np.any(neg):
                alpha = min(alpha, np.min(-u[: self.n_lin][neg] / du[: self.n_lin][neg]))
        for a, b in self.soc:
            alpha = min(alpha, _soc_step(u[a:b], du[a:b]))
        return alpha


def _soc_step(u, d):
    u0, u1, d0, d1 = u[0], u[1:], d[0], d[1:]
    qa = d0 * d0 - d1 @ d1
    qb = 2.0 * (u0 * d0 - u1 @ d1)
    qc = u0 * u0 - u1 @ u1
    roots = []
    if abs(qa) <= 1e-14 * (abs(qb) + abs(qc) + 1e-300):
        if qb < 0:
            roots.append(-qc / qb)
    else:
        disc = qb * qb - 4 * qa * qc
        if disc >= 0:
            sq = np.sqrt(disc)
            q = -0.5 * (qb + np.copysign(sq, qb))
            if q != 0:
                roots += [q / qa, qc / q]
            else:
                roots.append(0.0)
    pos = [r for r in roots if r > 0]
    alpha = min(pos) if pos else np.inf
    if d0 < 0:
        alpha = min(alpha, -u0 / d0)
    return alpha


class _NTScaling:
    """Symmetric NT scaling W with W z = W^{-1} s = lambda."""

    def __init__(self, cones: _Cones, s, z):
        self.cones = cones
        n = cones.n_lin
        self.d = np.sqrt(s[:n] / z[:n])
        self.blocks = []
        for a, b in cones.soc:
            sa, za = s[a:b], z[a:b]
            s_j = sa[0] ** 2 - sa[1:] @ sa[1:]
            z_j = za[0] ** 2 - za[1:] @ za[1:]
            sbar = sa / np.sqrt(s_j)
            zbar = za / np.sqrt(z_j)
            gamma = np.sqrt(0.5 * (1.0 + sbar @ zbar))
            jz = zbar.copy()
            jz[1:] *= -1.0
            w = (sbar + jz) / (2.0 * gamma)
            eta = (s_j / z_j) ** 0.25
            self.blocks.append((a, b, eta, w))

    def _apply(self, v, inverse: bool):
        out = np.empty_like(v)
        n = self.cones.n_lin
        if v.ndim == 1:
            out[:n] = v[:n] / self.d if inverse else v[:n] * self.d
        else:
            out[:n] = v[:n] / self.d[:, None] if inverse else v[:n] * self.d[:, None]
        for a, b, eta, w in self.blocks:
            w0, w1 = w[0], w[1:]
            va = v[a:b]
            sgn = -1.0 if inverse else 1.0
            k = (1.0 / eta) if inverse else eta
            v0, v1 = va[0], va[1:]
            if v.ndim == 1:
                t = w1 @ v1
                out[a] = k * (w0 * v0 + sgn * t)
                out[a + 1: b] = k * (sgn * v0 * w1 + v1 + (t / (1.0 + w0)) * w1)
            else:
                t = w1 @ v1
                out[a] = k * (w0 * v0 + sgn * t)
                out[a + 1: b] = k * (sgn * np.outer(w1, v0) + v1 + np.outer(w1, t / (1.0 + w0)))
        return out

    def apply(self, v):
        return self._apply(v, False)

    def apply_inv(self, v):
        return self._apply(v, True)


def solve_socp(c, G, h, n_lin, soc_dims, *, feastol=1e-8, abstol=1e-8, reltol=1e-8,
               max_iters=200, step_fraction=0.99):
    """Return ``(status, x, iterations)``; status is one of the ``SolveResult`` statuses."""
    G = G.toarray() if hasattr(G, "toarray") else np.asarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    h = np.asarray(h, dtype=float)
    m, n = G.shape
    cones = _Cones(n_lin, soc_dims)
    if cones.m != m:
        raise ValueError("cone dimensions do not match G")
    if m == 0:
        if np.allclose(c, 0):
            return "optimal", np.zeros(n), 0
        return "unbounded", np.zeros(n), 0

    reg = 1e-13 * max(1.0, np.max(np.abs(G)) ** 2)

    def factor(Winv_G):
        M = Winv_G.T @ Winv_G
        bump = reg
        for _ in range(6):
            try:
                return linalg.cho_factor(M + bump * np.eye(n), lower=True, check_finite=False)
            except linalg.LinAlgError:
                # refinement on the full system absorbs the extra regularization
                bump = max(bump * 1e3, 1e-12 * max(1.0, np.max(np.abs(np.diag(M)))))
        raise linalg.LinAlgError("normal equations not positive definite")

    def reduced_solve(fac, W, Winv_G, bx, bz):
        # [0 G'; G -W^2][dx; dz] = [bx; bz] through the normal equations
        rhs = bx + Winv_G.T @ W.apply_inv(bz)
        dx = linalg.cho_solve(fac, rhs, check_finite=False)
        dz = W.apply_inv(W.apply_inv(G @ dx - bz))
        return dx, dz

    def kkt_solve(fac, W, Winv_G, bx, bz, refine=3):
        dx, dz = reduced_solve(fac, W, Winv_G, bx, bz)
        scale = 1.0 + np.linalg.norm(bx) + np.linalg.norm(bz)
        # iterative refinement on the full system; the normal equations lose
        # accuracy as the scaling becomes extreme near the boundary
        for _ in range(refine):
            ex = bx - G.T @ dz
            ez = bz - G @ dx + W.apply(W.apply(dz))
            if max(np.linalg.norm(ex), np.linalg.norm(ez)) <= 1e-15 * scale:
                break
            cx, cz = reduced_solve(fac, W, Winv_G, ex, ez)
            dx += cx
            dz += cz
        return dx, dz

    # initial point
    identity = _NTScaling(cones, cones.e, cones.e)
    try:
        fac0 = factor(G)
    except linalg.LinAlgError:
        return "numerical_failure", np.zeros(n), 0
    x, z0 = kkt_solve(fac0, identity, G, np.zeros(n), h)
    s = -z0
    _, z = kkt_solve(fac0, identity, G, -c, np.zeros(m))
    ap = -cones.min_eig(s)
    if ap >= -1e-8:
        s = s + (1.0 + max(ap, 0.0)) * cones.e
    ad = -cones.min_eig(z)
    if ad >= -1e-8:
        z = z + (1.0 + max(ad, 0.0)) * cones.e
    tau, kappa = 1.0, 1.0

    hnorm = max(1.0, np.linalg.norm(h))
    cnorm = max(1.0, np.linalg.norm(c))
    status = "iteration_limit"
    it = 0
    # best iterate meeting ten-times-looser tolerances, returned if the
    # method later stalls (reduced-accuracy exit, as in ECOS)
    fallback = None
    fallback_score = np.inf

    def stalled(reason):
        if fallback is not None:
            return "optimal", fallback, it
        return reason, x / tau, it
    for it in range(max_iters + 1):
        rx = G.T @ z + c * tau
        rz = s + G @ x - h * tau
        cx, hz = c @ x, h @ z
        rt = kappa + cx + hz
        gap = s @ z
        mu = (gap + tau * kappa) / (cones.degree + 1)
        pres = np.linalg.norm(rz) / tau / hnorm
        dres = np.linalg.norm(rx) / tau / cnorm
        pcost, dcost = cx / tau, -hz / tau
        if pcost < 0:
            relgap = gap / tau**2 / -pcost
        elif dcost > 0:
            relgap = gap / tau**2 / dcost
        else:
            relgap = np.inf
        if pres < feastol and dres < feastol and (gap / tau**2 < abstol or relgap < reltol):
            return "optimal", x / tau, it
        score = max(pres, dres, min(gap / tau**2 / abstol, relgap / reltol) * feastol)
        if score < 10 * feastol and score < fallback_score:
            fallback, fallback_score = x / tau, score
        if hz < 0 and np.linalg.norm(G.T @ z) / -hz < feastol:
            return "infeasible", np.full(n, np.nan), it
        if cx < 0 and np.linalg.norm(G @ x + s) / -cx < feastol:
            return "unbounded", np.full(n, np.nan), it
        if it == max_iters:
            break
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)) or cones.min_eig(s) <= 0 or cones.min_eig(z) <= 0:
            return stalled("numerical_failure")

        W = _NTScaling(cones, s, z)
        lam = W.apply(z)
        Winv_G = W.apply_inv(G)
        try:
            fac = factor(Winv_G)
        except linalg.LinAlgError:
            return stalled("numerical_failure")
        dx2, dz2 = kkt_solve(fac, W, Winv_G, -c, h)
        denom = c @ dx2 + h @ dz2 - kappa / tau

        def direction(eta_r, ds_target, dk_target):
            bz = -eta_r * rz - W.apply(cones.circ_solve(lam, ds_target))
            dx1, dz1 = kkt_solve(fac, W, Winv_G, -eta_r * rx, bz)
            dtau = (-eta_r * rt - dk_target / tau - c @ dx1 - h @ dz1) / denom
            dx = dx1 + dtau * dx2
            dz = dz1 + dtau * dz2
            ds = W.apply(cones.circ_solve(lam, ds_target) - W.apply(dz))
            dkappa = (dk_target - kappa * dtau) / tau
            return dx, dz, ds, dtau, dkappa

        def step_len(dz, ds, dtau, dkappa):
            a = min(cones.max_step(s, ds), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        lamlam = cones.circ(lam, lam)
        dxa, dza, dsa, dta, dka = direction(1.0, -lamlam, -tau * kappa)
        aa = min(1.0, step_len(dza, dsa, dta, dka))
        sigma = min(1.0, max(0.0, (1.0 - aa)) ** 3)
        # corrector
        corr = cones.circ(W.apply_inv(dsa), W.apply(dza))
        ds_t = -lamlam - corr + sigma * mu * cones.e
        dk_t = -tau * kappa - dta * dka + sigma * mu
        dx, dz, ds, dtau, dkappa = direction(1.0 - sigma, ds_t, dk_t)
        alpha = min(1.0, step_fraction * step_len(dz, ds, dtau, dkappa))
        if not np.isfinite(alpha) or alpha < 1e-12:
            return stalled("numerical_failure")
        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
    return stalled(status)
