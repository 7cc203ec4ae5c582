"""Scenario constants, network geometry and user drops.

Geometry uses a flat local tangent plane: the satellite hovers at
``(0, 0, h_sat)`` above the centroid of the beam lattice, the ground is
``z = 0``.  All user positions are drawn in footprint-normalized units, so the
same seed produces the "same" drop at every altitude.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
BOLTZMANN = 1.380649e-23


class ConfigError(ValueError):
    pass


class GeometryError(RuntimeError):
    pass


def db_to_lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_watt(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float)) + 30.0


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical and system constants of one ISTN scenario.

    Defaults follow the simulation table (Ka band, 3 beams with 2 SUs each,
    16-antenna BS serving 3 CUs).  ``p_bs_watt`` and ``sat_altitude_m`` are
    the sweep variables; their defaults are 30 dBm and 500 km.
    """

    carrier_frequency_hz: float = 28e9
    bandwidth_hz: float = 500e6
    theta_3db_rad: float = float(np.deg2rad(0.4))
    g_max_db: float = 52.0
    g_rx_db: float = 42.7
    rain_mu_db: float = -3.125
    rain_sigma_db: float = 1.591
    n_sat_feeds: int = 3
    users_per_beam: int = 2
    n_bs_antennas: int = 16
    n_cus: int = 3
    p_sat_watt: float = 50.0
    p_bs_watt: float = 1.0
    sat_altitude_m: float = 500e3
    csit_error_var: float = 0.0
    boltzmann: float = BOLTZMANN
    # effective noise temperature; the satellite is power-limited from about 2000 km up
    system_noise_temp_k: float = 150000.0
    rng_seed: int = 0

    # artifact knobs (placement and interference level)
    cu_rx_backoff_db: float = -15.0
    bs_offset_m: float = 5000.0
    bs_toward_centroid: bool = True
    placement_ref_altitude_m: float | None = 500e3
    cu_radius_m: float = 500.0
    cu_outside_footprints: bool = True
    max_redraws: int = 100

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("n_sat_feeds", "users_per_beam", "n_bs_antennas", "n_cus"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_cus > self.n_bs_antennas:
            raise ConfigError("n_cus must not exceed n_bs_antennas")
        for name in ("carrier_frequency_hz", "bandwidth_hz", "p_sat_watt", "p_bs_watt",
                     "csit_error_var", "system_noise_temp_k", "boltzmann",
                     "rain_sigma_db", "cu_radius_m", "bs_offset_m"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be >= 0")
        if not self.theta_3db_rad > 0:
            raise ConfigError("theta_3db_rad must be > 0")
        if not self.sat_altitude_m > 0:
            raise ConfigError("sat_altitude_m must be > 0")
        if self.bandwidth_hz <= 0 or self.carrier_frequency_hz <= 0:
            raise ConfigError("frequencies must be > 0")

    @property
    def n_sus(self) -> int:
        return self.n_sat_feeds * self.users_per_beam

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def noise_power_w(self) -> float:
        return self.boltzmann * self.system_noise_temp_k * self.bandwidth_hz

    @property
    def p_bs_dbm(self) -> float:
        return float(watt_to_dbm(self.p_bs_watt))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


_ALIASES = {
    # convenience keys accepted in config files
    "p_bs_dbm": ("p_bs_watt", lambda v: float(dbm_to_watt(v))),
    "sat_altitude_km": ("sat_altitude_m", lambda v: float(v) * 1e3),
    "theta_3db_deg": ("theta_3db_rad", lambda v: float(np.deg2rad(v))),
}


def config_from_mapping(data: Mapping[str, Any] | None, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Build a config from a (possibly nested) mapping.

    Nested sections are flattened, so ``{"satellite": {"p_sat_watt": 40}}`` and
    ``{"p_sat_watt": 40}`` are equivalent.  Unknown keys raise ``ConfigError``.
    """
    base = base or ScenarioConfig()
    flat: dict[str, Any] = {}

    def walk(d):
        for k, v in d.items():
            if isinstance(v, Mapping):
                walk(v)
            else:
                flat[k] = v

    walk(data or {})
    known = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    changes: dict[str, Any] = {}
    for key, value in flat.items():
        if key in _ALIASES:
            target, conv = _ALIASES[key]
            changes[target] = conv(value)
        elif key in known:
            changes[key] = value
        else:
            raise ConfigError(f"unknown scenario key: {key!r}")
    for key, value in list(changes.items()):
        kind = known[key].type
        if value is None:
            continue
        if kind in ("int",):
            changes[key] = int(value)
        elif kind in ("bool",):
            changes[key] = bool(value)
        elif "float" in str(kind):
            changes[key] = float(value)
    return dataclasses.replace(base, **changes)


def load_config(path, overrides: Mapping[str, Any] | None = None) -> ScenarioConfig:
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if "scenario" in data and isinstance(data["scenario"], Mapping):
        data = data["scenario"]
    cfg = config_from_mapping(data)
    if overrides:
        cfg = config_from_mapping(overrides, base=cfg)
    return cfg


def config_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


@dataclass(frozen=True)
class Geometry:
    """Ground positions (metres, z = 0 plane) of beams, users and the BS."""

    beam_centers: np.ndarray  # (N_s, 2)
    su_positions: np.ndarray  # (K_s, 2)
    cu_positions: np.ndarray  # (K_t, 2)
    bs_position: np.ndarray  # (2,)
    sat_nadir: np.ndarray  # (2,)
    su_beam: np.ndarray = field(default=None)  # (K_s,) beam index of each SU

    def beam_members(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.su_beam == n)


def _lattice_offsets(n: int) -> np.ndarray:
    """First ``n`` points of a unit triangular lattice, centred on their mean."""
    reach = int(np.ceil(np.sqrt(n))) + 2
    pts = []
    for i in range(-reach, reach + 1):
        for j in range(-reach, reach + 1):
            x = i + 0.5 * j
            y = j * np.sqrt(3.0) / 2.0
            ang = np.arctan2(y, x) % (2 * np.pi)
            pts.append((round(np.hypot(x, y), 9), round(ang, 9), x, y))
    pts.sort()
    sel = np.array([(p[2], p[3]) for p in pts[:n]])
    return sel - sel.mean(axis=0)


def _placement_scale(cfg: ScenarioConfig) -> float:
    """Ground distances are given at a reference altitude and scale with h_sat,
    which keeps the BS and CUs at fixed angles as seen from the satellite."""
    if cfg.placement_ref_altitude_m is None:
        return 1.0
    return cfg.sat_altitude_m / cfg.placement_ref_altitude_m


def bs_offset(cfg: ScenarioConfig) -> float:
    return cfg.bs_offset_m * _placement_scale(cfg)


def cu_radius(cfg: ScenarioConfig) -> float:
    return cfg.cu_radius_m * _placement_scale(cfg)


def _off_axis(points: np.ndarray, centers: np.ndarray, h: float) -> np.ndarray:
    """Angle at the satellite between rays to ``points`` (K,2) and ``centers`` (N,2)."""
    sat = np.array([0.0, 0.0, h])
    p = np.column_stack([points, np.zeros(len(points))]) - sat
    c = np.column_stack([centers, np.zeros(len(centers))]) - sat
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    # atan2 form stays accurate for tiny angles where arccos loses digits
    cross = np.linalg.norm(np.cross(p[:, None, :], c[None, :, :]), axis=-1)
    dot = p @ c.T
    return np.arctan2(cross, dot)


def build_geometry(cfg: ScenarioConfig, rng: np.random.Generator | None = None) -> Geometry:
    """Place beams on a triangular lattice and drop SUs, the BS and CUs.

    Beam centres are spaced ``2 * theta_3db`` apart as seen from the satellite.
    SUs are uniform in their beam's 3 dB disc; CUs are uniform in a disc
    around the BS, which sits ``bs_offset`` from beam 1's centre, on the line
    through the lattice centroid (toward it by default, away from it with
    ``bs_toward_centroid=False``).
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    h = cfg.sat_altitude_m
    spacing = 2.0 * h * np.tan(cfg.theta_3db_rad)
    centers = _lattice_offsets(cfg.n_sat_feeds) * spacing
    fp_radius = h * np.tan(cfg.theta_3db_rad)

    r0 = np.linalg.norm(centers[0])
    outward = centers[0] / r0 if r0 > 0 else np.array([1.0, 0.0])
    bearing = -outward if cfg.bs_toward_centroid else outward
    bs = centers[0] + bs_offset(cfg) * bearing
    cu_r = cu_radius(cfg)

    su_beam = np.repeat(np.arange(cfg.n_sat_feeds), cfg.users_per_beam)

    def disc(n, radius):
        r = radius * np.sqrt(rng.uniform(size=n))
        a = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return np.column_stack([r * np.cos(a), r * np.sin(a)])

    for _ in range(cfg.max_redraws):
        sus = centers[su_beam] + disc(cfg.n_sus, fp_radius)
        cus = bs + disc(cfg.n_cus, cu_r)
        if np.any(np.linalg.norm(sus - bs, axis=1) <= cu_r):
            continue
        own = _off_axis(sus, centers, h)[np.arange(cfg.n_sus), su_beam]
        if np.any(own > cfg.theta_3db_rad * (1 + 1e-9)):
            continue
        if cfg.cu_outside_footprints and np.any(_off_axis(cus, centers, h) <= cfg.theta_3db_rad):
            continue
        return Geometry(centers, sus, cus, bs, np.zeros(2), su_beam)
    raise GeometryError(
        f"no valid user drop after {cfg.max_redraws} redraws "
        "(SUs inside the BS disc or CUs inside a beam footprint)"
    )


def slant_angles_and_distances(geom: Geometry, cfg: ScenarioConfig):
    """Off-axis angles to every beam centre and satellite distances.

    Returns ``(theta_su (K_s,N_s), d_su (K_s,), theta_cu (K_t,N_s), d_cu (K_t,))``.
    """
    h = cfg.sat_altitude_m

    def dist(points):
        return np.sqrt(h**2 + np.sum((points - geom.sat_nadir) ** 2, axis=1))

    theta_su = _off_axis(geom.su_positions, geom.beam_centers, h)
    theta_cu = _off_axis(geom.cu_positions, geom.beam_centers, h)
    return theta_su, dist(geom.su_positions), theta_cu, dist(geom.cu_positions)
