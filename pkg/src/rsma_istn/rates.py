"""SINRs, GMI rate lower bounds and max-min aggregation.

All noise variances default to 1 because the satellite channel is already
normalized by the thermal noise power.  CSIT-error terms use the closed form
``E|e^H w|^2 = sigma_e^2 ||w||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelRealization


class RateError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LinkModel:
    """Spectrum usage and interference coupling of one optimization problem.

    ``sat_band`` / ``bs_band`` are the fractions of the carrier each network
    occupies (rate prefactors); with the noise normalized over the full carrier
    the matching noise variances are the same fractions.  ``cross`` couples the
    satellite into the CUs' receivers; ``inter_beam=False`` gives each beam its
    own colour.
    """

    sat_active: bool = True
    bs_active: bool = True
    cross: bool = True
    inter_beam: bool = True
    sat_band: float = 1.0
    bs_band: float = 1.0

    def __post_init__(self):
        for b in (self.sat_band, self.bs_band):
            if not 0 < b <= 1:
                raise ValueError("band fractions must lie in (0, 1]")

    @property
    def sat_noise(self) -> float:
        return self.sat_band

    @property
    def bs_noise(self) -> float:
        return self.bs_band


FULL_REUSE = LinkModel()


@dataclass
class PrecoderSet:
    w_spc: np.ndarray  # (N_s,)
    w_sc: np.ndarray  # (N_s,)
    w_private: np.ndarray  # (N_s, N_s), column n serves beam n
    p_c: np.ndarray  # (N_t,)
    p_private: np.ndarray  # (N_t, K_t), column k serves CU k

    @classmethod
    def zeros(cls, n_feeds: int, n_bs_antennas: int, n_cus: int) -> "PrecoderSet":
        z = np.zeros
        return cls(z(n_feeds, complex), z(n_feeds, complex), z((n_feeds, n_feeds), complex),
                   z(n_bs_antennas, complex), z((n_bs_antennas, n_cus), complex))

    @classmethod
    def from_matrices(cls, W: np.ndarray, P: np.ndarray) -> "PrecoderSet":
        return cls(W[:, 0].copy(), W[:, 1].copy(), W[:, 2:].copy(), P[:, 0].copy(), P[:, 1:].copy())

    @property
    def W(self) -> np.ndarray:
        return np.column_stack([self.w_spc, self.w_sc, self.w_private])

    @property
    def P(self) -> np.ndarray:
        return np.column_stack([self.p_c, self.p_private])

    def feed_powers(self) -> np.ndarray:
        return np.sum(np.abs(self.W) ** 2, axis=1)

    def bs_power(self) -> float:
        return float(np.sum(np.abs(self.P) ** 2))

    def copy(self) -> "PrecoderSet":
        return PrecoderSet(*(np.array(a, copy=True) for a in
                             (self.w_spc, self.w_sc, self.w_private, self.p_c, self.p_private)))

    def power_violation(self, p_sat: float, p_bs: float) -> float:
        """Largest relative excess over the per-feed and BS budgets (0 if within)."""
        n = len(self.w_spc)
        per_feed = p_sat / n
        v = [0.0]
        if per_feed > 0:
            v.append(float(np.max(self.feed_powers()) / per_feed - 1.0))
        elif np.any(self.feed_powers() > 0):
            v.append(float(np.max(self.feed_powers())))
        if p_bs > 0:
            v.append(self.bs_power() / p_bs - 1.0)
        elif self.bs_power() > 0:
            v.append(self.bs_power())
        return max(0.0, max(v))


@dataclass
class RateAllocation:
    c_spc: np.ndarray  # (N_s,)
    c_sc: np.ndarray  # (N_s,)
    c_bs: np.ndarray  # (K_t,)

    @classmethod
    def zeros(cls, n_feeds: int, n_cus: int) -> "RateAllocation":
        return cls(np.zeros(n_feeds), np.zeros(n_feeds), np.zeros(n_cus))

    def copy(self) -> "RateAllocation":
        return RateAllocation(self.c_spc.copy(), self.c_sc.copy(), self.c_bs.copy())


@dataclass
class SinrTable:
    g: np.ndarray  # (K_s,)
    l: np.ndarray  # (K_t,)
    spc_su: np.ndarray
    spc_cu: np.ndarray
    sc_su: np.ndarray
    private_su: np.ndarray
    c_cu: np.ndarray
    private_cu: np.ndarray
    su_beam: np.ndarray
    link: LinkModel = field(default=FULL_REUSE)


@dataclass
class RateReport:
    sinr: SinrTable
    r_spc: float
    r_sc: float
    r_c: float
    private_su: np.ndarray  # per-SU private rate
    private_cu: np.ndarray  # per-CU private rate
    beam_totals: np.ndarray  # (N_s,)
    cu_totals: np.ndarray  # (K_t,)
    mmf: float
    margins: dict

    @property
    def violation(self) -> float:
        """Largest constraint violation among the decodability and sign constraints."""
        return max([0.0] + [-m for m in self.margins.values()])

    def to_records(self) -> list[dict]:
        """Flat rows: one per (user, stream) plus one summary row."""
        s = self.sinr
        band_s, band_b = s.link.sat_band, s.link.bs_band
        rows = []
        for k in range(len(s.g)):
            for stream, gam in (("spc", s.spc_su[k]), ("sc", s.sc_su[k]), ("private", s.private_su[k])):
                rows.append({"user": f"SU{k + 1}", "beam": int(s.su_beam[k]) + 1, "stream": stream,
                             "sinr": float(gam), "rate": float(band_s * np.log2(1 + gam))})
        for k in range(len(s.l)):
            for stream, gam in (("spc", s.spc_cu[k]), ("c", s.c_cu[k]), ("private", s.private_cu[k])):
                rows.append({"user": f"CU{k + 1}", "beam": 0, "stream": stream,
                             "sinr": float(gam), "rate": float(band_b * np.log2(1 + gam))})
        rows.append({"user": "summary", "beam": 0, "stream": "mmf", "sinr": float("nan"),
                     "rate": float(self.mmf)})
        return rows


def _sat_error_energy(prec: PrecoderSet, sigma_e2: float, heard: np.ndarray | None = None) -> float:
    if sigma_e2 == 0:
        return 0.0
    priv = np.sum(np.abs(prec.w_private) ** 2, axis=0)
    if heard is not None:
        priv = priv[heard]
    total = np.sum(np.abs(prec.w_spc) ** 2) + np.sum(np.abs(prec.w_sc) ** 2) + np.sum(priv)
    return float(sigma_e2 * total)


def _channels(ch: ChannelRealization, use_true: bool):
    if use_true:
        return ch.f_true, ch.z_true, 0.0
    return ch.f_hat, ch.z_hat, ch.csit_error_var


def effective_noise_g(k_s: int, ch: ChannelRealization, prec: PrecoderSet,
                      link: LinkModel = FULL_REUSE, use_true: bool = False) -> float:
    """Interference-plus-noise ``g`` seen by SU ``k_s`` after removing the common streams."""
    f, _, s2 = _channels(ch, use_true)
    fk = f[:, k_s]
    heard = np.arange(ch.n_feeds) if link.inter_beam else np.array([ch.su_beam[k_s]])
    proj = np.abs(fk.conj() @ prec.w_private[:, heard]) ** 2
    return float(np.sum(proj) + _sat_error_energy(prec, s2, heard) + link.sat_noise)


def effective_noise_l(k_t: int, ch: ChannelRealization, prec: PrecoderSet,
                      link: LinkModel = FULL_REUSE, use_true: bool = False) -> float:
    """Interference-plus-noise ``l`` seen by CU ``k_t`` after removing the super-common stream."""
    _, z, s2 = _channels(ch, use_true)
    hk = ch.h[:, k_t]
    val = float(np.sum(np.abs(hk.conj() @ prec.p_private) ** 2)) + link.bs_noise
    if link.cross:
        zk = z[:, k_t]
        val += abs(zk.conj() @ prec.w_sc) ** 2 + float(np.sum(np.abs(zk.conj() @ prec.w_private) ** 2))
        val += _sat_error_energy(prec, s2)
    return val


def sinr_all(ch: ChannelRealization, prec: PrecoderSet, link: LinkModel = FULL_REUSE,
             use_true: bool = False) -> SinrTable:
    """Every SINR family used by the rate bounds, vectorized over users."""
    f, z, s2 = _channels(ch, use_true)
    ks, kt = ch.n_sus, ch.n_cus
    beam = ch.su_beam
    fw_priv = np.abs(f.conj().T @ prec.w_private) ** 2  # (K_s, N_s)
    fw_spc = np.abs(f.conj().T @ prec.w_spc) ** 2
    fw_sc = np.abs(f.conj().T @ prec.w_sc) ** 2
    own = fw_priv[np.arange(ks), beam]
    if link.inter_beam:
        priv_heard = fw_priv.sum(axis=1)
        err = np.full(ks, _sat_error_energy(prec, s2))
    else:
        priv_heard = own
        err = np.array([_sat_error_energy(prec, s2, np.array([b])) for b in beam])
    g = priv_heard + err + link.sat_noise
    other_su = g - own
    if np.any(other_su <= 0):
        raise RateError("non-positive private-stream denominator at an SU")

    hp_priv = np.abs(ch.h.conj().T @ prec.p_private) ** 2  # (K_t, K_t)
    hp_c = np.abs(ch.h.conj().T @ prec.p_c) ** 2
    own_cu = np.diag(hp_priv).copy()
    l = hp_priv.sum(axis=1) + link.bs_noise
    if link.cross:
        zw_priv = np.abs(z.conj().T @ prec.w_private) ** 2
        zw_sc = np.abs(z.conj().T @ prec.w_sc) ** 2
        l = l + zw_sc + zw_priv.sum(axis=1) + _sat_error_energy(prec, s2)
        spc_cu = np.abs(z.conj().T @ prec.w_spc) ** 2 / (hp_c + l)
    else:
        spc_cu = np.zeros(kt)
    other_cu = l - own_cu
    if np.any(other_cu <= 0):
        raise RateError("non-positive private-stream denominator at a CU")

    return SinrTable(
        g=g, l=l,
        spc_su=fw_spc / (fw_sc + g),
        spc_cu=spc_cu,
        sc_su=fw_sc / g,
        private_su=own / other_su,
        c_cu=hp_c / l,
        private_cu=own_cu / other_cu,
        su_beam=beam.copy(),
        link=link,
    )


def _rate(band: float, gamma) -> np.ndarray:
    return band * np.log2(1.0 + np.maximum(gamma, 0.0))


def aggregate(table: SinrTable, alloc: RateAllocation, streams=None) -> RateReport:
    """Min-rate aggregation, per-beam / per-CU totals and decodability margins.

    ``streams`` is an optional stream mask (see ``schemes.StreamMask``); a
    disabled common stream contributes a zero rate and forces its allocation
    to zero.
    """
    link = table.link
    use_spc = streams.spc if streams is not None else True
    use_sc = streams.sc if streams is not None else True
    use_c = streams.bs_common if streams is not None else True

    n_beams = len(alloc.c_spc)
    spc_rates = []
    if link.sat_active:
        spc_rates.append(_rate(link.sat_band, table.spc_su))
    if link.bs_active and link.cross:
        spc_rates.append(_rate(link.bs_band, table.spc_cu))
    r_spc = float(min(np.min(r) for r in spc_rates)) if (spc_rates and use_spc) else 0.0
    r_sc = float(np.min(_rate(link.sat_band, table.sc_su))) if (link.sat_active and use_sc) else 0.0
    r_c = float(np.min(_rate(link.bs_band, table.c_cu))) if (link.bs_active and use_c) else 0.0

    priv_su = _rate(link.sat_band, table.private_su)
    priv_cu = _rate(link.bs_band, table.private_cu)
    beam_totals = np.array([
        alloc.c_spc[n] + alloc.c_sc[n] + np.min(priv_su[table.su_beam == n]) for n in range(n_beams)
    ])
    cu_totals = alloc.c_bs + priv_cu
    totals = []
    if link.sat_active:
        totals.append(beam_totals)
    if link.bs_active:
        totals.append(cu_totals)
    mmf = float(min(np.min(t) for t in totals))

    margins = {
        "spc": r_spc - float(np.sum(alloc.c_spc)),
        "sc": r_sc - float(np.sum(alloc.c_sc)),
        "c": r_c - float(np.sum(alloc.c_bs)),
        "alloc_nonneg": float(min(np.min(alloc.c_spc), np.min(alloc.c_sc),
                                  np.min(alloc.c_bs) if len(alloc.c_bs) else 0.0)),
    }
    return RateReport(table, r_spc, r_sc, r_c, priv_su, priv_cu, beam_totals, cu_totals, mmf, margins)


def evaluate(ch: ChannelRealization, prec: PrecoderSet, alloc: RateAllocation,
             link: LinkModel = FULL_REUSE, streams=None, use_true: bool = False) -> RateReport:
    return aggregate(sinr_all(ch, prec, link, use_true=use_true), alloc, streams)


def fit_allocation(table: SinrTable, alloc: RateAllocation | None, streams=None) -> RateAllocation:
    """Allocation that satisfies every common-rate cap for the given SINRs.

    Starts from ``alloc`` (or an even split) and scales each common-rate
    vector down where its sum exceeds the achievable common rate.
    """
    zero = RateAllocation.zeros(len(table.su_beam) and int(table.su_beam.max()) + 1, len(table.l))
    rep = aggregate(table, zero, streams)
    n_beams, n_cus = len(zero.c_spc), len(zero.c_bs)
    if alloc is None:
        alloc = RateAllocation(np.full(n_beams, rep.r_spc / n_beams), np.full(n_beams, rep.r_sc / n_beams),
                               np.full(n_cus, rep.r_c / max(n_cus, 1)))

    def fit(vec, cap):
        vec = np.maximum(np.asarray(vec, dtype=float), 0.0)
        total = vec.sum()
        if total <= cap or total == 0:
            return vec
        return vec * (cap / total)

    return RateAllocation(fit(alloc.c_spc, rep.r_spc), fit(alloc.c_sc, rep.r_sc), fit(alloc.c_bs, rep.r_c))


def with_link(table: SinrTable, link: LinkModel) -> SinrTable:
    return replace(table, link=link)
