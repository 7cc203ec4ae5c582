"""Successive convex approximation for the max-min fair precoding problem.

Each SCA step solves a second-order cone program in which

* every SINR-above-aux constraint ``aux * denominator <= |numerator|^2`` is
  replaced by ``denominator <= minorant`` (a first-order expansion of the
  quadratic-over-linear term), and
* every ``rate <= log(1 + aux)`` constraint becomes a conservative SOC row
  that is tight at the current aux value.

Internally the precoder variables are normalized by the square root of their
power budget and every aux variable by its current value; the iterate
objects always hold physical quantities.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import conic
from .channel import ChannelRealization
from .conic import Affine, ComplexAffine, ConicProgram
from .rates import (
    FULL_REUSE,
    LinkModel,
    PrecoderSet,
    RateAllocation,
    RateError,
    aggregate,
    fit_allocation,
    sinr_all,
)
from .scenario import ScenarioConfig

AUX_FLOOR = 1e-9
LN2 = float(np.log(2.0))
AUX_KEYS = ("alpha", "r", "a", "a_spc", "a_c", "b", "b_spc", "b_sc")


@dataclass(frozen=True)
class StreamMask:
    """Which common streams exist; private streams are always on."""

    spc: bool = True
    sc: bool = True
    bs_common: bool = True

    def restricted(self, link: LinkModel) -> "StreamMask":
        return StreamMask(self.spc and link.sat_active, self.sc and link.sat_active,
                          self.bs_common and link.bs_active)


ALL_STREAMS = StreamMask()
PRIVATE_ONLY = StreamMask(False, False, False)


@dataclass
class ScaIterate:
    precoders: PrecoderSet
    alloc: RateAllocation
    q: float
    aux: dict
    iteration: int = 0
    streams: StreamMask = ALL_STREAMS


@dataclass
class ScaOptions:
    stop_tol: float = 1e-4
    max_iters: int = 100
    min_iters: int = 1
    init_strategy: str = "matched_filter"
    infeasibility_policy: str = "average_retry"
    power_split: tuple = (0.5, 0.3, 0.2)  # private, intra-network common, super-common
    aux_floor: float = AUX_FLOOR
    backend: str | None = None
    trace_path: str | None = None

    def __post_init__(self):
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be > 0")
        if self.max_iters < 1 or self.min_iters < 0:
            raise ValueError("iteration limits must be positive")
        if self.init_strategy not in ("matched_filter", "zero_forcing"):
            raise ValueError(f"unknown init_strategy {self.init_strategy!r}")
        if self.infeasibility_policy not in ("average_retry", "stop"):
            raise ValueError(f"unknown infeasibility_policy {self.infeasibility_policy!r}")
        if len(self.power_split) != 3 or min(self.power_split) < 0 or self.power_split[0] <= 0:
            raise ValueError("power_split needs three nonnegative weights with a positive private share")


@dataclass
class ScaResult:
    iterate: ScaIterate
    trace: list
    status: str
    report: object  # rates.RateReport audited on the final precoders
    audit_violation: float
    records: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return self.iterate.iteration

    @property
    def mmf(self) -> float:
        return self.report.mmf

    def __iter__(self):
        yield self.iterate
        yield self.trace


# --------------------------------------------------------------------------
# convexification primitives


@dataclass(frozen=True)
class Minorant:
    """Affine lower bound ``Re(grad . w) + coef_a * a`` of ``|z^H w|^2 / a``."""

    grad: np.ndarray  # complex, acts on w (not on conj(w))
    coef_a: float

    def value(self, w, a) -> float:
        return float(np.real(self.grad @ np.asarray(w, dtype=complex)) + self.coef_a * a)

    def to_affine(self, re_idx, im_idx, a_idx=None, w_scale: float = 1.0, a_scale: float = 1.0) -> Affine:
        g = self.grad * w_scale
        idx = [re_idx, im_idx]
        coef = [g.real, -g.imag]
        if a_idx is not None:
            idx.append([a_idx])
            coef.append([self.coef_a * a_scale])
        return Affine(np.concatenate(idx), np.concatenate(coef))


def taylor_quadratic_over_linear(w_n, a_n: float, channel_vec) -> Minorant:
    """First-order expansion of ``|z^H w|^2 / a`` around ``(w_n, a_n)``.

    ``2 Re[w_n^H z z^H w] / a_n - |z^H w_n|^2 a / a_n^2``; it touches the
    function at the expansion point and lies below it everywhere on a > 0.
    """
    if not a_n > 0:
        raise ValueError("expansion point a_n must be > 0")
    z = np.asarray(channel_vec, dtype=complex)
    y0 = np.vdot(z, np.asarray(w_n, dtype=complex))
    grad = 2.0 * np.conj(y0) * np.conj(z) / a_n
    return Minorant(grad, -float(abs(y0) ** 2) / a_n**2)


def log_row_constants(a_n: float) -> tuple[float, float]:
    """``(v, u)`` with ``v - u / a`` the tangent-touching minorant of ``ln(1 + a)``."""
    return a_n / (a_n + 1.0) + float(np.log1p(a_n)), a_n**2 / (a_n + 1.0)


def soc_log_row(a_n: float, rate_nats: Affine, aux: Affine):
    """SOC ``||[aux + x - v, 2 sqrt(u)]|| <= aux - x + v`` encoding ``x <= v - u / aux``.

    ``rate_nats`` is the rate expression already multiplied by ln 2.  Returns
    ``(rows, t)`` ready for ``ConicProgram.add_soc``.
    """
    if not a_n > 0:
        raise ValueError("expansion point a_n must be > 0")
    v, u = log_row_constants(a_n)
    rows = (aux + rate_nats - v, Affine.constant(2.0 * np.sqrt(u)))
    return rows, aux - rate_nats + v


# --------------------------------------------------------------------------
# subproblem


class _Block:
    def __init__(self, prog: ConicProgram, name: str, shape, scale: float):
        size = int(np.prod(shape))
        self.shape = tuple(np.atleast_1d(shape))
        self.scale = float(scale)
        self.re = prog.add_variable(name + "_re", size).reshape(self.shape, order="F")
        self.im = prog.add_variable(name + "_im", size).reshape(self.shape, order="F")

    def col(self, j=None):
        if j is None:
            return self.re, self.im
        return self.re[:, j], self.im[:, j]

    def proj(self, z, j=None) -> ComplexAffine:
        """``z^H v`` for the (column ``j`` of the) block."""
        re, im = self.col(j)
        return ComplexAffine.linear(np.conj(z) * self.scale, re, im)

    def error_rows(self, std: float, j=None) -> list:
        re, im = self.col(j)
        idx = np.concatenate([np.ravel(re, order="F"), np.ravel(im, order="F")])
        return [Affine.var(i, std * self.scale) for i in idx]

    def all_vars(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.re, order="F"), np.ravel(self.im, order="F")])

    def write(self, x: np.ndarray, value: np.ndarray):
        value = np.asarray(value, dtype=complex).reshape(self.shape, order="F") / self.scale
        x[self.re] = value.real
        x[self.im] = value.imag

    def read(self, x: np.ndarray) -> np.ndarray:
        return self.scale * (x[self.re] + 1j * x[self.im])


@dataclass
class SubproblemLayout:
    blocks: dict
    scalars: dict  # name -> index array (alloc, q, r, alpha)
    aux_scale: dict  # aux name -> expansion values a_n
    aux_idx: dict
    streams: StreamMask
    link: LinkModel
    n_feeds: int
    n_bs: int
    n_cus: int

    def pack(self, it: ScaIterate, n: int) -> np.ndarray:
        """Point of the subproblem corresponding to a physical iterate."""
        x = np.zeros(n)
        pr = it.precoders
        for name, val in (("w_spc", pr.w_spc), ("w_sc", pr.w_sc), ("w_priv", pr.w_private),
                          ("p_c", pr.p_c), ("p_priv", pr.p_private)):
            if name in self.blocks:
                self.blocks[name].write(x, val)
        for name in ("c_spc", "c_sc", "c_bs"):
            if name in self.scalars:
                x[self.scalars[name]] = getattr(it.alloc, name)
        x[self.scalars["q"]] = it.q
        for name, idx in self.aux_idx.items():
            x[idx] = it.aux[name] / self.aux_scale[name]
        return x

    def unpack(self, x: np.ndarray, iteration: int) -> ScaIterate:
        prec = PrecoderSet.zeros(self.n_feeds, self.n_bs, self.n_cus)
        for name, attr in (("w_spc", "w_spc"), ("w_sc", "w_sc"), ("w_priv", "w_private"),
                           ("p_c", "p_c"), ("p_priv", "p_private")):
            if name in self.blocks:
                setattr(prec, attr, self.blocks[name].read(x))
        alloc = RateAllocation.zeros(self.n_feeds, self.n_cus)
        for name in ("c_spc", "c_sc", "c_bs"):
            if name in self.scalars:
                setattr(alloc, name, np.maximum(x[self.scalars[name]], 0.0))
        aux = {name: x[idx] * self.aux_scale[name] for name, idx in self.aux_idx.items()}
        return ScaIterate(prec, alloc, float(x[self.scalars["q"]][0]), aux, iteration, self.streams)


def _sqrt_budget(p: float) -> float:
    return float(np.sqrt(p)) if p > 0 else 1.0


def build_subproblem(it: ScaIterate, ch: ChannelRealization, cfg: ScenarioConfig,
                     streams: StreamMask | None = None, link: LinkModel = FULL_REUSE) -> ConicProgram:
    """Convex subproblem around ``it``; the returned program carries ``.layout``.

    ``streams`` defaults to the iterate's own stream set.
    """
    streams = (streams or it.streams).restricted(link)
    for name, vals in it.aux.items():
        if name in ("alpha", "r"):
            continue
        if np.any(np.asarray(vals) <= 0):
            raise ValueError(f"aux {name!r} must be > 0 at the expansion point")
    ns, ks, nt, kt = ch.n_feeds, ch.n_sus, ch.n_bs_antennas, ch.n_cus
    f, z, h = ch.f_hat, ch.z_hat, ch.h
    err_std = float(np.sqrt(ch.csit_error_var))
    beam = ch.su_beam
    pr = it.precoders
    prog = ConicProgram()
    blocks: dict = {}
    scalars: dict = {}
    aux_scale: dict = {}
    aux_idx: dict = {}

    sw = _sqrt_budget(cfg.p_sat_watt / ns)
    sp = _sqrt_budget(cfg.p_bs_watt)
    sat, bs = link.sat_active, link.bs_active
    cross = link.cross and sat and bs
    if sat:
        if streams.spc:
            blocks["w_spc"] = _Block(prog, "w_spc", ns, sw)
        if streams.sc:
            blocks["w_sc"] = _Block(prog, "w_sc", ns, sw)
        blocks["w_priv"] = _Block(prog, "w_priv", (ns, ns), sw)
    if bs:
        if streams.bs_common:
            blocks["p_c"] = _Block(prog, "p_c", nt, sp)
        blocks["p_priv"] = _Block(prog, "p_priv", (nt, kt), sp)

    for name, on, size in (("c_spc", streams.spc, ns), ("c_sc", streams.sc, ns), ("c_bs", streams.bs_common, kt)):
        if on:
            scalars[name] = prog.add_variable(name, size)
    scalars["q"] = prog.add_variable("q", 1)
    if bs:
        scalars["alpha"] = prog.add_variable("alpha", kt)
    if sat:
        scalars["r"] = prog.add_variable("r", ks)
    wanted = []
    if bs:
        wanted.append(("a", kt))
        if streams.spc and cross:
            wanted.append(("a_spc", kt))
        if streams.bs_common:
            wanted.append(("a_c", kt))
    if sat:
        wanted.append(("b", ks))
        if streams.spc:
            wanted.append(("b_spc", ks))
        if streams.sc:
            wanted.append(("b_sc", ks))
    for name, size in wanted:
        aux_idx[name] = prog.add_variable(name, size)
        aux_scale[name] = np.maximum(np.asarray(it.aux[name], dtype=float), AUX_FLOOR)
    for name in ("alpha", "r"):
        if name in scalars:
            aux_idx[name] = scalars[name]
            aux_scale[name] = np.ones(len(scalars[name]))

    q = Affine.var(scalars["q"][0])

    def aux_var(name, k):
        return Affine.var(aux_idx[name][k], aux_scale[name][k])

    def total(name):
        return Affine.sum_of(scalars[name])

    # epigraph rows
    if sat:
        for k in range(ks):
            n = beam[k]
            e = Affine.var(scalars["r"][k])
            if streams.spc:
                e = e + Affine.var(scalars["c_spc"][n])
            if streams.sc:
                e = e + Affine.var(scalars["c_sc"][n])
            prog.add_ge(e - q, 0.0, f"epi_su{k}")
    if bs:
        for k in range(kt):
            e = Affine.var(scalars["alpha"][k])
            if streams.bs_common:
                e = e + Affine.var(scalars["c_bs"][k])
            prog.add_ge(e - q, 0.0, f"epi_cu{k}")
    for name in ("c_spc", "c_sc", "c_bs"):
        if name in scalars:
            for j, i in enumerate(scalars[name]):
                prog.add_ge(Affine.var(i), 0.0, f"{name}{j}>=0")

    # log rows: rate (bits) * ln2 / band <= ln(1 + aux)
    def log_row(rate_bits: Affine, band: float, name: str, k: int):
        rows, t = soc_log_row(float(aux_scale[name][k]), rate_bits * (LN2 / band), aux_var(name, k))
        prog.add_soc(rows, t, f"log_{name}{k}")

    if sat:
        for k in range(ks):
            log_row(Affine.var(scalars["r"][k]), link.sat_band, "b", k)
            if streams.spc:
                log_row(total("c_spc"), link.sat_band, "b_spc", k)
            if streams.sc:
                log_row(total("c_sc"), link.sat_band, "b_sc", k)
    if bs:
        for k in range(kt):
            log_row(Affine.var(scalars["alpha"][k]), link.bs_band, "a", k)
            if "a_spc" in aux_idx:
                log_row(total("c_spc"), link.bs_band, "a_spc", k)
            if streams.bs_common:
                log_row(total("c_bs"), link.bs_band, "a_c", k)

    # SINR rows: interference + noise <= minorant of |signal|^2 / aux
    def sat_error(heard):
        if err_std == 0 or not sat:
            return []
        rows = []
        for name in ("w_spc", "w_sc"):
            if name in blocks:
                rows += blocks[name].error_rows(err_std)
        for j in heard:
            rows += blocks["w_priv"].error_rows(err_std, j)
        return rows

    def sinr_row(terms, noise, block, col, chan, name, k, w0):
        a0 = float(aux_scale[name][k])
        mino = taylor_quadratic_over_linear(w0, a0, chan)
        re, im = block.col(col)
        rhs = mino.to_affine(re, im, aux_idx[name][k], block.scale, a0) - noise
        touch = abs(np.vdot(chan, w0)) ** 2 / a0
        prog.add_convex_quadratic_le_affine(terms, rhs, f"sinr_{name}{k}", scale=max(1.0, touch))

    if sat:
        wp = blocks["w_priv"]
        for k in range(ks):
            fk, n = f[:, k], beam[k]
            heard = range(ns) if link.inter_beam else [n]
            others = [wp.proj(fk, j) for j in heard if j != n]
            base = others + sat_error(heard)
            own = [wp.proj(fk, n)]
            sinr_row(base, link.sat_noise, wp, n, fk, "b", k, pr.w_private[:, n])
            if streams.sc:
                sinr_row(base + own, link.sat_noise, blocks["w_sc"], None, fk, "b_sc", k, pr.w_sc)
            if streams.spc:
                extra = [blocks["w_sc"].proj(fk)] if streams.sc else []
                sinr_row(base + own + extra, link.sat_noise, blocks["w_spc"], None, fk, "b_spc", k, pr.w_spc)
    if bs:
        pp = blocks["p_priv"]
        for k in range(kt):
            hk = h[:, k]
            base = [pp.proj(hk, j) for j in range(kt) if j != k]
            if cross:
                zk = z[:, k]
                if streams.sc:
                    base.append(blocks["w_sc"].proj(zk))
                base += [blocks["w_priv"].proj(zk, j) for j in range(ns)]
                base += sat_error(range(ns))
            own = [pp.proj(hk, k)]
            sinr_row(base, link.bs_noise, pp, k, hk, "a", k, pr.p_private[:, k])
            if streams.bs_common:
                sinr_row(base + own, link.bs_noise, blocks["p_c"], None, hk, "a_c", k, pr.p_c)
            if "a_spc" in aux_idx:
                extra = [blocks["p_c"].proj(hk)] if streams.bs_common else []
                sinr_row(base + own + extra, link.bs_noise, blocks["w_spc"], None, z[:, k], "a_spc", k,
                         pr.w_spc)

    # power budgets, in normalized units
    if sat:
        for n in range(ns):
            rows = []
            for name in ("w_spc", "w_sc"):
                if name in blocks:
                    rows += [Affine.var(blocks[name].re[n]), Affine.var(blocks[name].im[n])]
            rows += [Affine.var(i) for i in np.concatenate([blocks["w_priv"].re[n], blocks["w_priv"].im[n]])]
            prog.add_soc(rows, Affine.constant(1.0 if cfg.p_sat_watt > 0 else 0.0), f"feed{n}")
    if bs:
        rows = [Affine.var(i) for name in ("p_c", "p_priv") if name in blocks for i in blocks[name].all_vars()]
        prog.add_soc(rows, Affine.constant(1.0 if cfg.p_bs_watt > 0 else 0.0), "bs_power")

    prog.maximize(q)
    prog.layout = SubproblemLayout(blocks, scalars, aux_scale, aux_idx, streams, link, ns, nt, kt)
    return prog


# --------------------------------------------------------------------------
# initialization and iterate bookkeeping


def _unit(v):
    v = np.asarray(v, dtype=complex)
    nrm = np.linalg.norm(v)
    return v / nrm if nrm > 0 else v


def _member_sum(cols):
    return _unit(sum(_unit(c) for c in cols))


def _zf_columns(H: np.ndarray) -> np.ndarray:
    """Unit-norm zero-forcing directions for the columns of ``H`` (regularized)."""
    G = H.conj().T @ H
    V = H @ np.linalg.solve(G + 1e-9 * np.trace(G).real * np.eye(G.shape[0]), np.eye(G.shape[0]))
    return V / np.maximum(np.linalg.norm(V, axis=0, keepdims=True), 1e-300)


def scale_to_budget(prec: PrecoderSet, cfg: ScenarioConfig, fill: bool = False) -> PrecoderSet:
    """Scale W and P down (or, with ``fill``, up) to the per-feed and BS budgets."""
    prec = prec.copy()
    per_feed = cfg.p_sat_watt / len(prec.w_spc)
    peak = float(np.max(prec.feed_powers()))
    if peak > 0 and (fill or peak > per_feed):
        k = np.sqrt(per_feed / peak)
        prec.w_spc, prec.w_sc, prec.w_private = prec.w_spc * k, prec.w_sc * k, prec.w_private * k
    tot = prec.bs_power()
    if tot > 0 and (fill or tot > cfg.p_bs_watt):
        k = np.sqrt(cfg.p_bs_watt / tot)
        prec.p_c, prec.p_private = prec.p_c * k, prec.p_private * k
    return prec


def initial_precoders(ch: ChannelRealization, cfg: ScenarioConfig, streams: StreamMask,
                      link: LinkModel = FULL_REUSE, strategy: str = "matched_filter",
                      power_split=(0.5, 0.3, 0.2)) -> PrecoderSet:
    streams = streams.restricted(link)
    ns, nt, kt = ch.n_feeds, ch.n_bs_antennas, ch.n_cus
    prec = PrecoderSet.zeros(ns, nt, kt)
    w_priv, w_common, w_super = power_split
    if link.sat_active:
        weights = {"priv": w_priv, "sc": w_common if streams.sc else 0.0, "spc": w_super if streams.spc else 0.0}
        norm = sum(weights.values())
        beams = [_member_sum(ch.f_hat[:, ch.su_beam == n].T) for n in range(ns)]
        if strategy == "zero_forcing":
            dirs = _zf_columns(np.column_stack(beams))
        else:
            dirs = np.column_stack(beams)
        prec.w_private = dirs * np.sqrt(weights["priv"] / norm / ns)
        if streams.sc:
            prec.w_sc = _member_sum(ch.f_hat.T) * np.sqrt(weights["sc"] / norm)
        if streams.spc:
            members = list(ch.f_hat.T) + (list(ch.z_hat.T) if link.bs_active and link.cross else [])
            prec.w_spc = _member_sum(members) * np.sqrt(weights["spc"] / norm)
    if link.bs_active:
        wc = w_common if streams.bs_common else 0.0
        norm = w_priv + wc
        dirs = _zf_columns(ch.h) if strategy == "zero_forcing" else ch.h / np.linalg.norm(ch.h, axis=0)
        prec.p_private = dirs * np.sqrt(w_priv / norm / kt)
        if streams.bs_common:
            prec.p_c = _member_sum(ch.h.T) * np.sqrt(wc / norm)
    return scale_to_budget(prec, cfg, fill=True)


def iterate_from_precoders(prec: PrecoderSet, ch: ChannelRealization, streams: StreamMask,
                           link: LinkModel = FULL_REUSE, alloc: RateAllocation | None = None,
                           iteration: int = 0, floor: float = AUX_FLOOR) -> ScaIterate:
    """Feasible iterate whose aux values are the SINRs achieved by ``prec``.

    The allocation is ``alloc`` scaled into the common-rate caps (even split
    when omitted) and ``q`` is the resulting epigraph value.
    """
    streams = streams.restricted(link)
    table = sinr_all(ch, prec, link)
    alloc = fit_allocation(table, alloc, streams)
    for name, on in (("c_spc", streams.spc), ("c_sc", streams.sc), ("c_bs", streams.bs_common)):
        if not on:
            setattr(alloc, name, np.zeros_like(getattr(alloc, name)))
    aux = {}
    if link.sat_active:
        aux["b"] = np.maximum(table.private_su, floor)
        aux["r"] = link.sat_band * np.log2(1.0 + aux["b"])
        if streams.spc:
            aux["b_spc"] = np.maximum(table.spc_su, floor)
        if streams.sc:
            aux["b_sc"] = np.maximum(table.sc_su, floor)
    if link.bs_active:
        aux["a"] = np.maximum(table.private_cu, floor)
        aux["alpha"] = link.bs_band * np.log2(1.0 + aux["a"])
        if streams.spc and link.cross and link.sat_active:
            aux["a_spc"] = np.maximum(table.spc_cu, floor)
        if streams.bs_common:
            aux["a_c"] = np.maximum(table.c_cu, floor)
    it = ScaIterate(prec.copy(), alloc, 0.0, aux, iteration, streams)
    it.q = epigraph_value(it, ch, link)
    return it


def epigraph_value(it: ScaIterate, ch: ChannelRealization, link: LinkModel = FULL_REUSE) -> float:
    vals = []
    if link.sat_active:
        b = ch.su_beam
        vals.append(np.min(it.alloc.c_spc[b] + it.alloc.c_sc[b] + it.aux["r"]))
    if link.bs_active:
        vals.append(np.min(it.alloc.c_bs + it.aux["alpha"]))
    return float(min(vals))


SAT_BACKOFF_GRID_DB = tuple(-5.0 * k for k in range(13))


def initialize(ch: ChannelRealization, cfg: ScenarioConfig, streams: StreamMask = ALL_STREAMS,
               strategy: str = "matched_filter", link: LinkModel = FULL_REUSE,
               power_split=(0.5, 0.3, 0.2)) -> ScaIterate:
    """Feasible starting point built from ``initial_precoders``.

    When the satellite and the BS share the band, the fraction of the
    satellite budget actually used (0 to -60 dB in 5 dB steps) is the one
    giving the best starting MMF: at low altitude full satellite power can
    drown every CU, a start from which the SCA barely moves.
    """
    prec = initial_precoders(ch, cfg, streams, link, strategy, power_split)
    best = iterate_from_precoders(prec, ch, streams, link)
    if not (link.sat_active and link.bs_active and link.cross):
        return best
    for db in SAT_BACKOFF_GRID_DB[1:]:
        k = 10.0 ** (db / 20.0)
        trial = prec.copy()
        trial.w_spc, trial.w_sc, trial.w_private = trial.w_spc * k, trial.w_sc * k, trial.w_private * k
        cand = iterate_from_precoders(trial, ch, streams, link)
        if cand.q > best.q:
            best = cand
    return best


def warm_start(prev: ScaIterate, ch: ChannelRealization, cfg: ScenarioConfig, streams: StreamMask,
               link: LinkModel = FULL_REUSE, inject: float = 1e-6) -> ScaIterate:
    """Seed a richer stream set from a solution of a nested problem.

    Streams switched on in ``streams`` but silent in ``prev`` get a
    matched-filter precoder carrying ``inject`` of the per-feed (or BS)
    budget, so their minorants are not identically zero; the result is
    rescaled into the budgets.  The MMF loss is of the order of ``inject``.
    """
    streams = streams.restricted(link)
    prec = prev.precoders.copy()
    per_feed = cfg.p_sat_watt / ch.n_feeds
    if streams.spc and not np.any(prec.w_spc):
        members = list(ch.f_hat.T) + (list(ch.z_hat.T) if link.bs_active and link.cross else [])
        prec.w_spc = _member_sum(members) * np.sqrt(inject * per_feed * ch.n_feeds)
    if streams.sc and not np.any(prec.w_sc):
        prec.w_sc = _member_sum(ch.f_hat.T) * np.sqrt(inject * per_feed * ch.n_feeds)
    if streams.bs_common and not np.any(prec.p_c):
        prec.p_c = _member_sum(ch.h.T) * np.sqrt(inject * cfg.p_bs_watt)
    prec = scale_to_budget(prec, cfg)
    return iterate_from_precoders(prec, ch, streams, link, alloc=prev.alloc)


def _drop_dead_streams(it: ScaIterate, ch: ChannelRealization, link: LinkModel, floor: float) -> ScaIterate:
    """Switch off common streams whose SINR fell below ``floor`` at some receiver.

    A zero precoder makes its minorant identically zero, so such a stream
    cannot be kept in the next subproblem.
    """
    s = it.streams
    keys = {"spc": ("b_spc", "a_spc"), "sc": ("b_sc",), "bs_common": ("a_c",)}
    dead = {name for name, aux_names in keys.items()
            if getattr(s, name) and any(np.any(it.aux[a] < floor) for a in aux_names if a in it.aux)}
    if not dead:
        return it
    prec = it.precoders.copy()
    alloc = it.alloc.copy()
    if "spc" in dead:
        prec.w_spc[:] = 0
        alloc.c_spc[:] = 0
    if "sc" in dead:
        prec.w_sc[:] = 0
        alloc.c_sc[:] = 0
    if "bs_common" in dead:
        prec.p_c[:] = 0
        alloc.c_bs[:] = 0
    streams = StreamMask(s.spc and "spc" not in dead, s.sc and "sc" not in dead,
                         s.bs_common and "bs_common" not in dead)
    return iterate_from_precoders(prec, ch, streams, link, alloc=alloc, iteration=it.iteration, floor=floor)


def _refresh(sol: ScaIterate, ch: ChannelRealization, link: LinkModel, floor: float) -> ScaIterate:
    """Next expansion point: solution aux clipped to the achieved SINRs, floored."""
    table = sinr_all(ch, sol.precoders, link)
    achieved = {"b": table.private_su, "b_spc": table.spc_su, "b_sc": table.sc_su,
                "a": table.private_cu, "a_spc": table.spc_cu, "a_c": table.c_cu}
    aux = {}
    for name, val in sol.aux.items():
        if name in achieved:
            aux[name] = np.maximum(np.minimum(val, achieved[name]), floor)
        else:
            aux[name] = np.asarray(val, dtype=float)
    out = replace(sol, aux=aux)
    return _drop_dead_streams(out, ch, link, floor)


# --------------------------------------------------------------------------
# audit and main loop


def audit(it: ScaIterate, ch: ChannelRealization, cfg: ScenarioConfig, link: LinkModel = FULL_REUSE):
    """Rate report of the final precoders and the largest violation of the original constraints."""
    rep = aggregate(sinr_all(ch, it.precoders, link), it.alloc, it.streams)
    power = it.precoders.power_violation(cfg.p_sat_watt, cfg.p_bs_watt)
    return rep, max(rep.violation, power)


def _average(a: ScaIterate, b: ScaIterate) -> PrecoderSet:
    pa, pb = a.precoders, b.precoders
    return PrecoderSet(*(0.5 * (x + y) for x, y in zip(
        (pa.w_spc, pa.w_sc, pa.w_private, pa.p_c, pa.p_private),
        (pb.w_spc, pb.w_sc, pb.w_private, pb.p_c, pb.p_private))))


def sca_solve(ch: ChannelRealization, cfg: ScenarioConfig, streams: StreamMask = ALL_STREAMS,
              opts: ScaOptions | None = None, link: LinkModel = FULL_REUSE,
              start: ScaIterate | None = None) -> ScaResult:
    """Iterate convex subproblems until the epigraph value ``q`` settles.

    ``start`` overrides the default initialization (warm starts).  The
    returned report is recomputed from the final precoders.
    """
    opts = opts or ScaOptions()
    streams = streams.restricted(link)
    it = start if start is not None else initialize(ch, cfg, streams, opts.init_strategy, link, opts.power_split)
    it = _drop_dead_streams(it, ch, link, opts.aux_floor)
    trace = [it.q]
    records = [{"iteration": 0, "q": it.q, "max_violation": 0.0, "solver_status": "init"}]
    status = "iteration_limit"
    previous = it
    for n in range(1, opts.max_iters + 1):
        res = None
        accepted = it
        for attempt in range(2):
            prog = build_subproblem(it, ch, cfg, it.streams, link)
            res = conic.solve(prog, opts.backend)
            if res.ok:
                break
            if opts.infeasibility_policy != "average_retry" or attempt == 1 or previous is it:
                break
            try:
                it = iterate_from_precoders(_average(it, previous), ch, it.streams, link,
                                            alloc=it.alloc, iteration=it.iteration, floor=opts.aux_floor)
            except RateError:
                break
        records.append({"iteration": n, "q": res.objective_value, "max_violation": res.max_violation,
                        "solver_status": res.status})
        # a stalled solve still returns a usable point if it is feasible and no worse
        usable = res.ok or (res.max_violation <= conic.VIOLATION_TOL and res.objective_value >= trace[-1] - 1e-9)
        if not usable:
            # report the last accepted iterate, not the averaged retry point
            it = accepted
            stalled = res.max_violation <= conic.VIOLATION_TOL and abs(res.objective_value - trace[-1]) < opts.stop_tol
            status = "converged" if stalled else f"solver_{res.status}"
            break
        sol = prog.layout.unpack(res.x, n)
        previous, it = it, _refresh(sol, ch, link, opts.aux_floor)
        trace.append(sol.q)
        if abs(trace[-1] - trace[-2]) < opts.stop_tol and n >= opts.min_iters:
            status = "converged"
            break
    rep, viol = audit(it, ch, cfg, link)
    if opts.trace_path:
        write_trace(opts.trace_path, records)
    return ScaResult(it, trace, status, rep, viol, records)


def write_trace(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["iteration", "q", "max_violation", "solver_status"])
        w.writeheader()
        w.writerows(records)


def q_upper_bound(ch: ChannelRealization, cfg: ScenarioConfig) -> float:
    """Crude per-instance bound on any achievable MMF rate."""
    fs = np.max(np.sum(np.abs(ch.f_hat) ** 2, axis=0))
    hs = np.max(np.sum(np.abs(ch.h) ** 2, axis=0))
    return float(np.log2(1.0 + cfg.p_sat_watt * fs + cfg.p_bs_watt * hs))
