"""The seven evaluated schemes as stream masks and spectrum models over one optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization
from .rates import FULL_REUSE, LinkModel
from .sca import (
    ALL_STREAMS,
    PRIVATE_ONLY,
    ScaOptions,
    ScaResult,
    StreamMask,
    iterate_from_precoders,
    sca_solve,
    warm_start,
)
from .scenario import ScenarioConfig

SRSMA_ISTN = "sRSMA-ISTN"
RSMA_ISTN = "RSMA-ISTN"
SDMA_ISTN = "SDMA-ISTN"
ADAPTIVE_RSMA_OMA = "Adaptive RSMA-OMA"
RSMA_OMA = "RSMA-OMA"
SDMA_OMA = "SDMA-OMA"
FOUR_COLOR_OMA = "4-Color-OMA"
SCHEME_LABELS = (SRSMA_ISTN, RSMA_ISTN, SDMA_ISTN, ADAPTIVE_RSMA_OMA, RSMA_OMA, SDMA_OMA, FOUR_COLOR_OMA)
ISTN_LABELS = (SDMA_ISTN, RSMA_ISTN, SRSMA_ISTN)
OMA_LABELS = (ADAPTIVE_RSMA_OMA, RSMA_OMA, SDMA_OMA, FOUR_COLOR_OMA)

RSMA_STREAMS = StreamMask(spc=False, sc=True, bs_common=True)
FIXED_SPLIT_BETA = 0.5
BETA_GRID = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))
BETA_FINE_STEP = 0.01
# colours 1..N_s go to the beams, the cellular network takes the next one
FOUR_COLOR_CELLULAR = 4


@dataclass(frozen=True)
class SchemeSpec:
    id: str
    streams: StreamMask
    spectrum: str  # "full_reuse" | "split" | "four_color"
    beta: float | None = None  # split: satellite share; None means adaptive

    @property
    def adaptive(self) -> bool:
        return self.spectrum == "split" and self.beta is None


SCHEMES = {
    SRSMA_ISTN: SchemeSpec(SRSMA_ISTN, ALL_STREAMS, "full_reuse"),
    RSMA_ISTN: SchemeSpec(RSMA_ISTN, RSMA_STREAMS, "full_reuse"),
    SDMA_ISTN: SchemeSpec(SDMA_ISTN, PRIVATE_ONLY, "full_reuse"),
    ADAPTIVE_RSMA_OMA: SchemeSpec(ADAPTIVE_RSMA_OMA, RSMA_STREAMS, "split", None),
    RSMA_OMA: SchemeSpec(RSMA_OMA, RSMA_STREAMS, "split", FIXED_SPLIT_BETA),
    SDMA_OMA: SchemeSpec(SDMA_OMA, PRIVATE_ONLY, "split", FIXED_SPLIT_BETA),
    FOUR_COLOR_OMA: SchemeSpec(FOUR_COLOR_OMA, PRIVATE_ONLY, "four_color"),
}


def get_scheme(label: str) -> SchemeSpec:
    key = {s.lower().replace(" ", "").replace(".", ""): s for s in SCHEMES}
    norm = label.lower().replace(" ", "").replace(".", "").replace("adapt-", "adaptive")
    if norm.startswith("adaptrsma"):
        norm = "adaptive" + norm[len("adapt"):]
    if norm not in key:
        raise ValueError(f"unknown scheme {label!r}; choose from {', '.join(SCHEME_LABELS)}")
    return SCHEMES[key[norm]]


@dataclass
class SpectrumPlan:
    """Independent subproblems whose MMF values are combined by a min."""

    parts: list  # (name, LinkModel, StreamMask)
    beta: float | None = None
    metadata: dict = field(default_factory=dict)


def split_rate(gamma, beta: float):
    """``beta * log2(1 + gamma / beta)``: rate on a ``beta`` share of the band.

    ``gamma`` is the full-band SNR; the noise shrinks with the occupied band
    while the transmit power stays fixed.  ``beta = 0`` gives 0.
    """
    gamma = np.asarray(gamma, dtype=float)
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    if beta == 0:
        return np.zeros_like(gamma)
    return beta * np.log2(1.0 + gamma / beta)


def split_links(beta: float) -> tuple[LinkModel, LinkModel]:
    if not 0 < beta < 1:
        raise ValueError("beta must lie strictly between 0 and 1")
    return (LinkModel(bs_active=False, cross=False, sat_band=beta),
            LinkModel(sat_active=False, cross=False, bs_band=1.0 - beta))


FOUR_COLOR_LINK = LinkModel(cross=False, inter_beam=False, sat_band=0.25, bs_band=0.25)


def apply_scheme(spec: SchemeSpec, cfg: ScenarioConfig | None = None, beta: float | None = None) -> SpectrumPlan:
    """Subproblems and spectrum model of a scheme.

    Split schemes take ``beta`` (or their fixed share); four-colour needs
    ``N_s <= 3`` so that the cellular network can have a colour of its own.
    """
    if spec.spectrum == "full_reuse":
        return SpectrumPlan([("joint", FULL_REUSE, spec.streams)])
    if spec.spectrum == "split":
        b = spec.beta if beta is None else beta
        if b is None:
            raise ValueError("adaptive split needs beta (see adaptive_beta_search)")
        sat, bs = split_links(float(b))
        return SpectrumPlan([("satellite", sat, spec.streams), ("cellular", bs, spec.streams)], float(b))
    if spec.spectrum == "four_color":
        if cfg is not None and cfg.n_sat_feeds > 3:
            raise ValueError("four-colour reuse with a dedicated cellular colour needs N_s <= 3")
        return SpectrumPlan([("joint", FOUR_COLOR_LINK, spec.streams)],
                            metadata={"cellular_color": FOUR_COLOR_CELLULAR})
    raise ValueError(f"unknown spectrum model {spec.spectrum!r}")


@dataclass
class SchemeResult:
    scheme: str
    mmf: float
    q_final: float
    iterations: int
    audit_violation: float
    status: str
    parts: dict
    beta: float | None = None
    spc_power_fraction: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def clean(self) -> bool:
        return self.status in ("converged", "iteration_limit") and self.audit_violation <= 1e-5


def spc_power_fraction(res: ScaResult, cfg: ScenarioConfig) -> float:
    """``||w_spc||^2 * N_s / P_s``: super-common power relative to one feed's budget."""
    w = res.iterate.precoders.w_spc
    return float(np.sum(np.abs(w) ** 2) * cfg.n_sat_feeds / cfg.p_sat_watt) if cfg.p_sat_watt > 0 else 0.0


_STATUS_RANK = {"converged": 0, "iteration_limit": 1}


def _combine(label: str, parts: dict, cfg: ScenarioConfig, beta=None, metadata=None) -> SchemeResult:
    res = list(parts.values())
    status = max((r.status for r in res), key=lambda s: _STATUS_RANK.get(s, 2))
    frac = spc_power_fraction(parts["joint"], cfg) if "joint" in parts else 0.0
    return SchemeResult(label, float(min(r.mmf for r in res)), float(min(r.trace[-1] for r in res)),
                        int(sum(r.iterations for r in res)), float(max(r.audit_violation for r in res)),
                        status, parts, beta, frac, metadata or {})


def solve_scheme(spec: SchemeSpec | str, ch: ChannelRealization, cfg: ScenarioConfig,
                 opts: ScaOptions | None = None, start=None, beta: float | None = None) -> SchemeResult:
    """Solve one scheme on one realization.  ``start`` warm-starts full-reuse schemes."""
    if isinstance(spec, str):
        spec = get_scheme(spec)
    if spec.adaptive and beta is None:
        return adaptive_beta_search(ch, cfg, opts)[2]
    plan = apply_scheme(spec, cfg, beta)
    parts = {}
    for name, link, streams in plan.parts:
        first = None
        if start is not None and spec.spectrum == "full_reuse":
            first = warm_start(start, ch, cfg, streams, link)
        parts[name] = sca_solve(ch, cfg, streams, opts, link, start=first)
    return _combine(spec.id, parts, cfg, plan.beta, plan.metadata)


def _better(a: ScaResult, b: ScaResult) -> ScaResult:
    if a is None:
        return b
    return b if b.mmf > a.mmf else a


def solve_istn_chain(ch: ChannelRealization, cfg: ScenarioConfig, opts: ScaOptions | None = None,
                     labels=ISTN_LABELS, cold_starts: bool = True) -> dict:
    """SDMA, RSMA and sRSMA in full reuse, each seeded from the previous one.

    The nested scheme is started from the previous solution (with its new
    common streams injected at negligible power), so its MMF can only
    improve on it; with ``cold_starts`` a run from the default start is
    also made and the better of the two kept.
    """
    wanted = set(labels)
    out = {}
    prev = None
    for label, streams in ((SDMA_ISTN, PRIVATE_ONLY), (RSMA_ISTN, RSMA_STREAMS), (SRSMA_ISTN, ALL_STREAMS)):
        best = None
        if prev is None or cold_starts:
            best = sca_solve(ch, cfg, streams, opts, FULL_REUSE)
        if prev is not None:
            warm = sca_solve(ch, cfg, streams, opts, FULL_REUSE, start=warm_start(prev.iterate, ch, cfg, streams))
            best = _better(best, warm) if best is not None else warm
        prev = best
        if label in wanted:
            out[label] = _combine(label, {"joint": best}, cfg)
        if not wanted - set(out):
            break
    return out


def adaptive_beta_search(ch: ChannelRealization, cfg: ScenarioConfig, opts: ScaOptions | None = None,
                         search: str = "bracket", streams: StreamMask = RSMA_STREAMS):
    """Best band split between the satellite (``beta``) and cellular (``1 - beta``) networks.

    Scans ``beta`` on a 0.05 grid over [0.05, 0.95], then on a 0.01 grid
    around the best point.  The satellite MMF grows with ``beta`` and the
    cellular one shrinks, so ``search="bracket"`` bisects for the crossing on
    each grid instead of evaluating every point; ``search="grid"`` evaluates
    all of them.  Returns ``(beta, mmf, SchemeResult)``.
    """
    if search not in ("bracket", "grid"):
        raise ValueError("search must be 'bracket' or 'grid'")
    sat_cache: dict = {}
    cell_cache: dict = {}

    def side(cache, beta, which):
        key = round(float(beta), 4)
        if key not in cache:
            link = split_links(key)[0 if which == "sat" else 1]
            start = None
            if cache:
                near = min(cache, key=lambda b: abs(b - key))
                start = iterate_from_precoders(cache[near].iterate.precoders, ch, streams.restricted(link), link)
            cache[key] = sca_solve(ch, cfg, streams, opts, link, start=start)
        return cache[key]

    def value(beta):
        return min(side(sat_cache, beta, "sat").mmf, side(cell_cache, beta, "cell").mmf)

    def best_on(grid):
        grid = [float(b) for b in grid]
        if search == "grid":
            return max(grid, key=lambda b: (value(b), -b))
        lo, hi = 0, len(grid) - 1
        # first grid point where the satellite side is no longer the minimum
        if side(sat_cache, grid[hi], "sat").mmf < side(cell_cache, grid[hi], "cell").mmf:
            return grid[hi]
        if side(sat_cache, grid[lo], "sat").mmf >= side(cell_cache, grid[lo], "cell").mmf:
            return grid[lo]
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if side(sat_cache, grid[mid], "sat").mmf >= side(cell_cache, grid[mid], "cell").mmf:
                hi = mid
            else:
                lo = mid
        return max((grid[lo], grid[hi]), key=lambda b: (value(b), -b))

    coarse = best_on(BETA_GRID)
    fine = [b for b in np.round(np.arange(coarse - 0.04, coarse + 0.0401, BETA_FINE_STEP), 2)
            if BETA_GRID[0] - 1e-9 <= b <= BETA_GRID[-1] + 1e-9]
    beta = best_on(fine)
    best_val = value(beta)
    if value(coarse) > best_val:
        beta, best_val = coarse, value(coarse)
    key = round(beta, 4)
    parts = {"satellite": sat_cache[key], "cellular": cell_cache[key]}
    meta = {"beta_evaluations": len(set(sat_cache) | set(cell_cache))}
    return beta, best_val, _combine(ADAPTIVE_RSMA_OMA, parts, cfg, beta, meta)


def solve_all(ch: ChannelRealization, cfg: ScenarioConfig, labels=SCHEME_LABELS,
              opts: ScaOptions | None = None, cold_starts: bool = True) -> dict:
    """Every requested scheme on one shared realization (ISTN schemes via the warm-start chain)."""
    labels = [get_scheme(label).id for label in labels]
    out = {}
    istn = [label for label in labels if label in ISTN_LABELS]
    if istn:
        out.update(solve_istn_chain(ch, cfg, opts, istn, cold_starts))
    for label in labels:
        if label not in out:
            out[label] = solve_scheme(label, ch, cfg, opts)
    return {label: out[label] for label in labels}
