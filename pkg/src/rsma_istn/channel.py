"""Satellite multibeam, satellite-to-CU interference and terrestrial channels."""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy import special

from .scenario import (
    Geometry,
    ScenarioConfig,
    build_geometry,
    db_to_lin,
    slant_angles_and_distances,
)

BEAM_U_SCALE = 2.07123
_SERIES_TERMS = 30
_SERIES_MAX_U = 10.0


def _bessel_series(order: int, u: np.ndarray) -> np.ndarray:
    x = 0.5 * u
    out = np.zeros_like(u)
    for k in range(_SERIES_TERMS):
        out += (-1) ** k * x ** (2 * k + order) / (factorial(k) * factorial(k + order))
    return out


def _pattern_amplitude(u: np.ndarray) -> np.ndarray:
    """J1(u)/(2u) + 36 J3(u)/u^3, with the u -> 0 limit 1/4 + 36/48 = 1."""
    u = np.asarray(u, dtype=float)
    amp = np.ones_like(u)
    nz = u > 0
    small = nz & (u <= _SERIES_MAX_U)
    big = u > _SERIES_MAX_U
    if np.any(small):
        us = u[small]
        amp[small] = _bessel_series(1, us) / (2 * us) + 36 * _bessel_series(3, us) / us**3
    if np.any(big):
        ub = u[big]
        amp[big] = special.jv(1, ub) / (2 * ub) + 36 * special.jv(3, ub) / ub**3
    return amp


def beam_gain(theta_rad, cfg: ScenarioConfig):
    """Linear feed gain toward a user ``theta_rad`` off the beam centre."""
    theta = np.asarray(theta_rad, dtype=float)
    u = BEAM_U_SCALE * np.sin(theta) / np.sin(cfg.theta_3db_rad)
    g = float(db_to_lin(cfg.g_max_db)) * _pattern_amplitude(np.abs(u)) ** 2
    return g if g.ndim else float(g)


def path_amplitude(theta_row: np.ndarray, distance: float, cfg: ScenarioConfig, rx_gain_db: float) -> np.ndarray:
    """Deterministic part ``b`` of one user's satellite channel (length N_s)."""
    g_r = float(db_to_lin(rx_gain_db))
    fspl = 4 * np.pi * distance / cfg.wavelength_m
    return np.sqrt(g_r * beam_gain(theta_row, cfg)) / (fspl * np.sqrt(cfg.noise_power_w))


def draw_rain_db(shape, cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(cfg.rain_mu_db, cfg.rain_sigma_db, size=shape)


def build_satellite_vector(
    user_index: int,
    kind: str,
    geom: Geometry,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    *,
    rain_db: np.ndarray | None = None,
    phase: np.ndarray | None = None,
    angles=None,
) -> np.ndarray:
    """Channel estimate from the satellite to one SU (F-hat column) or CU (Z-hat column).

    Element n is ``b[n] * chi[n]**-0.5 * exp(-1j*phi[n])``.  Rain (dB) and phase
    are drawn per feed unless passed in.  ``angles`` may carry a precomputed
    ``slant_angles_and_distances`` result.
    """
    if kind not in ("SU", "CU"):
        raise ValueError("kind must be 'SU' or 'CU'")
    th_su, d_su, th_cu, d_cu = angles or slant_angles_and_distances(geom, cfg)
    theta, dist = (th_su, d_su) if kind == "SU" else (th_cu, d_cu)
    n = cfg.n_sat_feeds
    rx_db = cfg.g_rx_db + (cfg.cu_rx_backoff_db if kind == "CU" else 0.0)
    b = path_amplitude(theta[user_index], dist[user_index], cfg, rx_db)
    if rain_db is None:
        rain_db = draw_rain_db(n, cfg, rng)
    if phase is None:
        phase = rng.uniform(0.0, 2 * np.pi, size=n)
    chi = db_to_lin(rain_db)
    return b * chi ** -0.5 * np.exp(-1j * np.asarray(phase))


def build_terrestrial_matrix(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Rayleigh channel H (N_t x K_t), unit variance per entry."""
    shape = (cfg.n_bs_antennas, cfg.n_cus)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def draw_csit_error(dim, sigma_e2: float, rng: np.random.Generator) -> np.ndarray:
    """CN(0, sigma_e2 I) samples; ``dim`` may be an int or a shape."""
    e = (rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) / np.sqrt(2.0)
    return np.sqrt(sigma_e2) * e


@dataclass(frozen=True)
class ChannelRealization:
    f_hat: np.ndarray  # (N_s, K_s)
    z_hat: np.ndarray  # (N_s, K_t)
    h: np.ndarray  # (N_t, K_t)
    f_true: np.ndarray
    z_true: np.ndarray
    csit_error_var: float
    su_beam: np.ndarray  # (K_s,)

    @property
    def n_feeds(self) -> int:
        return self.f_hat.shape[0]

    @property
    def n_sus(self) -> int:
        return self.f_hat.shape[1]

    @property
    def n_cus(self) -> int:
        return self.h.shape[1]

    @property
    def n_bs_antennas(self) -> int:
        return self.h.shape[0]


def trial_rngs(seed: int, trial: int):
    """Independent generators (geometry, satellite, terrestrial, error) for one trial."""
    ss = np.random.SeedSequence([int(seed), int(trial)])
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def realize(cfg: ScenarioConfig, trial: int = 0, geom: Geometry | None = None) -> ChannelRealization:
    """Draw a full channel realization for Monte Carlo trial ``trial``.

    All randomness comes from ``(cfg.rng_seed, trial)``; errors are drawn with
    unit variance and scaled, so different ``csit_error_var`` values share draws.
    """
    g_rng, s_rng, t_rng, e_rng = trial_rngs(cfg.rng_seed, trial)
    if geom is None:
        geom = build_geometry(cfg, g_rng)
    angles = slant_angles_and_distances(geom, cfg)
    n = cfg.n_sat_feeds
    rain_su = draw_rain_db((cfg.n_sus, n), cfg, s_rng)
    ph_su = s_rng.uniform(0.0, 2 * np.pi, size=(cfg.n_sus, n))
    rain_cu = draw_rain_db((cfg.n_cus, n), cfg, s_rng)
    ph_cu = s_rng.uniform(0.0, 2 * np.pi, size=(cfg.n_cus, n))
    f_hat = np.column_stack([
        build_satellite_vector(k, "SU", geom, cfg, s_rng, rain_db=rain_su[k], phase=ph_su[k], angles=angles)
        for k in range(cfg.n_sus)
    ])
    z_hat = np.column_stack([
        build_satellite_vector(k, "CU", geom, cfg, s_rng, rain_db=rain_cu[k], phase=ph_cu[k], angles=angles)
        for k in range(cfg.n_cus)
    ])
    h = build_terrestrial_matrix(cfg, t_rng)
    ef = draw_csit_error(f_hat.shape, 1.0, e_rng)
    ez = draw_csit_error(z_hat.shape, 1.0, e_rng)
    s = np.sqrt(cfg.csit_error_var)
    return ChannelRealization(f_hat, z_hat, h, f_hat + s * ef, z_hat + s * ez,
                              float(cfg.csit_error_var), geom.su_beam.copy())


def save_realization(path, ch: ChannelRealization) -> None:
    np.savez(path, f_hat=ch.f_hat, z_hat=ch.z_hat, h=ch.h, f_true=ch.f_true,
             z_true=ch.z_true, csit_error_var=ch.csit_error_var, su_beam=ch.su_beam)


def load_realization(path) -> ChannelRealization:
    with np.load(path) as d:
        return ChannelRealization(d["f_hat"], d["z_hat"], d["h"], d["f_true"], d["z_true"],
                                  float(d["csit_error_var"]), d["su_beam"])
