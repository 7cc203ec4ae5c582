import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsma_istn.channel import ChannelRealization
from rsma_istn.rates import (
    FULL_REUSE,
    LinkModel,
    PrecoderSet,
    RateAllocation,
    aggregate,
    effective_noise_g,
    effective_noise_l,
    evaluate,
    fit_allocation,
    sinr_all,
)


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def toy_channel(rng, n_feeds=2, per_beam=1, n_bs=3, n_cus=2, s2=0.0):
    ks = n_feeds * per_beam
    f = _crandn(rng, n_feeds, ks)
    z = _crandn(rng, n_feeds, n_cus)
    h = _crandn(rng, n_bs, n_cus)
    return ChannelRealization(f, z, h, f, z, s2, np.repeat(np.arange(n_feeds), per_beam))


def toy_precoders(rng, ch, scale=1.0):
    n, nt, kt = ch.n_feeds, ch.n_bs_antennas, ch.n_cus
    return PrecoderSet(scale * _crandn(rng, n), scale * _crandn(rng, n), scale * _crandn(rng, n, n),
                       scale * _crandn(rng, nt), scale * _crandn(rng, nt, kt))


def test_zero_precoders_give_unit_noise(channel):
    prec = PrecoderSet.zeros(3, 16, 3)
    assert effective_noise_g(0, channel, prec) == 1.0
    assert effective_noise_l(0, channel, prec) == 1.0


def test_error_term_isotropy(channel):
    ch = ChannelRealization(channel.f_hat, channel.z_hat, channel.h, channel.f_hat, channel.z_hat, 0.1,
                            channel.su_beam)
    prec = PrecoderSet.zeros(3, 16, 3)
    prec.w_spc[:] = np.array([1.0, 1j, -1.0]) / np.sqrt(3)
    assert effective_noise_g(2, ch, prec) == pytest.approx(1.1)
    assert effective_noise_l(1, ch, prec) == pytest.approx(1.1)


def test_hand_computed_toy_instance():
    """Two feeds, one SU per beam, two CUs; every SINR recomputed by scalar loops."""
    rng = np.random.default_rng(11)
    s2 = 0.02
    ch = toy_channel(rng, s2=s2)
    prec = toy_precoders(rng, ch)
    t = sinr_all(ch, prec)
    f, z, h = ch.f_hat, ch.z_hat, ch.h
    W = [prec.w_spc, prec.w_sc, prec.w_private[:, 0], prec.w_private[:, 1]]
    err = s2 * sum(float(np.vdot(w, w).real) for w in W)
    for k in range(2):
        fk = f[:, k]
        p = [abs(np.vdot(fk, w)) ** 2 for w in W]
        g = p[2] + p[3] + err + 1.0
        assert t.g[k] == pytest.approx(g)
        assert t.spc_su[k] == pytest.approx(p[0] / (p[1] + g))
        assert t.sc_su[k] == pytest.approx(p[1] / g)
        own = p[2 + k]
        assert t.private_su[k] == pytest.approx(own / (g - own))
    for k in range(2):
        zk, hk = z[:, k], h[:, k]
        hp = [abs(np.vdot(hk, prec.p_private[:, j])) ** 2 for j in range(2)]
        hc = abs(np.vdot(hk, prec.p_c)) ** 2
        l = sum(hp) + abs(np.vdot(zk, prec.w_sc)) ** 2 + sum(abs(np.vdot(zk, w)) ** 2 for w in W[2:]) + err + 1.0
        assert t.l[k] == pytest.approx(l)
        assert t.spc_cu[k] == pytest.approx(abs(np.vdot(zk, prec.w_spc)) ** 2 / (hc + l))
        assert t.c_cu[k] == pytest.approx(hc / l)
        assert t.private_cu[k] == pytest.approx(hp[k] / (l - hp[k]))


def test_orthogonal_channels_no_interference():
    f = np.eye(2, dtype=complex) * 2.0
    z = np.zeros((2, 1), complex)
    h = np.ones((2, 1), complex)
    ch = ChannelRealization(f, z, h, f, z, 0.0, np.array([0, 1]))
    prec = PrecoderSet.zeros(2, 2, 1)
    prec.w_private[:] = np.eye(2) * 0.5
    t = sinr_all(ch, prec)
    assert np.allclose(t.private_su, np.abs(np.diag(f.conj().T @ prec.w_private)) ** 2)


def test_zero_spc_precoder_gives_zero_rate(channel):
    rng = np.random.default_rng(0)
    prec = toy_precoders(rng, channel)
    prec.w_spc[:] = 0
    rep = evaluate(channel, prec, RateAllocation.zeros(3, 3))
    assert rep.r_spc == 0.0


def test_aggregate_minima_and_totals(channel):
    rng = np.random.default_rng(1)
    prec = toy_precoders(rng, channel, 0.5)
    t = sinr_all(channel, prec)
    rep0 = aggregate(t, RateAllocation.zeros(3, 3))
    spc_all = np.concatenate([np.log2(1 + t.spc_su), np.log2(1 + t.spc_cu)])
    assert rep0.r_spc == pytest.approx(spc_all.min())
    for n in range(3):
        assert rep0.beam_totals[n] == pytest.approx(np.min(np.log2(1 + t.private_su[t.su_beam == n])))
    assert np.allclose(rep0.cu_totals, np.log2(1 + t.private_cu))
    alloc = fit_allocation(t, None)
    rep = aggregate(t, alloc)
    assert rep.violation <= 1e-12
    assert rep.mmf <= min(rep.beam_totals.min(), rep.cu_totals.min()) + 1e-15


def test_aggregate_reports_violation():
    rng = np.random.default_rng(5)
    ch = toy_channel(rng)
    t = sinr_all(ch, toy_precoders(rng, ch))
    alloc = RateAllocation(np.array([100.0, 0.0]), np.zeros(2), np.array([0.0, -1.0]))
    rep = aggregate(t, alloc)
    assert rep.margins["spc"] < 0 and rep.margins["alloc_nonneg"] == -1.0
    assert rep.violation >= 1.0


def test_true_channel_equals_estimate_without_error(channel):
    prec = toy_precoders(np.random.default_rng(2), channel)
    a = sinr_all(channel, prec)
    b = sinr_all(channel, prec, use_true=True)
    for name in ("g", "l", "spc_su", "spc_cu", "sc_su", "private_su", "c_cu", "private_cu"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_split_band_noise_and_rate():
    rng = np.random.default_rng(3)
    ch = toy_channel(rng)
    prec = toy_precoders(rng, ch)
    link = LinkModel(sat_band=0.3, bs_band=0.7, cross=False)
    t = sinr_all(ch, prec, link)
    assert t.g.min() > 0.3 - 1e-12
    rep = aggregate(t, RateAllocation.zeros(2, 2))
    assert np.allclose(rep.private_su, 0.3 * np.log2(1 + t.private_su))
    assert np.all(t.spc_cu == 0)


def test_band_fraction_validated():
    with pytest.raises(ValueError):
        LinkModel(sat_band=0.0)


def test_records_cover_every_user_and_stream(channel):
    prec = toy_precoders(np.random.default_rng(4), channel)
    rep = evaluate(channel, prec, RateAllocation.zeros(3, 3))
    recs = rep.to_records()
    assert len(recs) == 3 * 6 + 3 * 3 + 1
    assert recs[-1]["stream"] == "mmf" and recs[-1]["rate"] == rep.mmf


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), which=st.sampled_from(["spc", "sc", "priv", "pc", "ppriv"]),
       factor=st.floats(1.0, 10.0), s2=st.sampled_from([0.0, 0.05]))
def test_more_interference_never_helps_victims(seed, which, factor, s2):
    rng = np.random.default_rng(seed)
    ch = toy_channel(rng, n_feeds=3, per_beam=2, n_bs=4, n_cus=3, s2=s2)
    prec = toy_precoders(rng, ch)
    base = sinr_all(ch, prec)
    louder = prec.copy()
    if which == "spc":
        louder.w_spc *= factor
        victims = [("sc_su", None), ("private_su", None), ("c_cu", None), ("private_cu", None)]
    elif which == "sc":
        louder.w_sc *= factor
        victims = [("spc_su", None), ("private_su", None), ("private_cu", None), ("spc_cu", None)]
    elif which == "priv":
        louder.w_private[:, 0] *= factor
        victims = [("private_su", ch.su_beam != 0), ("private_cu", None), ("spc_su", None), ("sc_su", None)]
    elif which == "pc":
        louder.p_c *= factor
        victims = [("spc_cu", None)]
    else:
        louder.p_private[:, 0] *= factor
        victims = [("private_cu", np.arange(3) != 0), ("c_cu", None), ("spc_cu", None)]
    after = sinr_all(ch, louder)
    for name, mask in victims:
        a, b = getattr(base, name), getattr(after, name)
        if mask is not None:
            a, b = a[mask], b[mask]
        assert np.all(b <= a * (1 + 1e-12) + 1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_rates_nonnegative_and_spc_is_bruteforce_min(seed):
    rng = np.random.default_rng(seed)
    ch = toy_channel(rng, n_feeds=3, per_beam=2, n_bs=4, n_cus=3, s2=0.01)
    t = sinr_all(ch, toy_precoders(rng, ch))
    rep = aggregate(t, RateAllocation.zeros(3, 3))
    per_user = [np.log2(1 + g) for g in np.concatenate([t.spc_su, t.spc_cu])]
    assert rep.r_spc == pytest.approx(min(per_user))
    assert rep.r_spc >= 0 and rep.r_sc >= 0 and rep.r_c >= 0
    assert np.all(rep.private_su >= 0) and np.all(rep.private_cu >= 0)
