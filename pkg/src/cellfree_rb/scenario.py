"""Network scenarios and reproducible channel drops.

A :class:`Scenario` is the static description of the network (node counts,
geometry, powers, AP clustering).  :func:`generate_drop` turns it into one
random realization of positions, large-scale gains and small-scale fading.
Drops are deterministic given ``(scenario.seed, drop_index)``; randomness is
drawn from counter-based (Philox) generators with one stream per purpose, so
results never depend on evaluation order.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

import numpy as np
import yaml

from .units import dbm_to_watt

# Per-drop RNG stream ids.
STREAM_POSITIONS = 0
STREAM_FADING = 1
STREAM_PILOT_NOISE = 2
STREAM_INIT = 3


def default_clusters(n_aps: int, n_clusters: int) -> tuple[tuple[int, ...], ...]:
    """Split AP indices 0..n_aps-1 into contiguous, nearly equal clusters."""
    if not 1 <= n_clusters <= n_aps:
        raise ValueError(f"need 1 <= n_clusters <= n_aps, got {n_clusters}/{n_aps}")
    bounds = np.linspace(0, n_aps, n_clusters + 1).astype(int)
    return tuple(tuple(range(bounds[i], bounds[i + 1])) for i in range(n_clusters))


@dataclass(frozen=True)
class Scenario:
    """Static system description.  Defaults match the evaluation setup:
    16 APs and 8 UEs in a 300 m square, 11 RBs of 12 subcarriers over
    10 MHz, 25/23 dBm AP/UE power budgets, 4 AP clusters.
    """

    n_aps: int = 16
    n_ues: int = 8
    n_rbs: int = 11
    subcarriers_per_rb: int = 12
    area_side: float = 300.0
    ap_height: float = 10.0
    ue_height: float = 0.0
    min_link_distance: float = 0.0
    carrier_freq_ghz: float = 2.0
    bandwidth_hz: float = 10e6
    subcarrier_spacing_hz: float = 60e3
    noise_figure_db: float = 7.0
    p_ap_dbm: float = 25.0
    p_ue_dbm: float = 23.0
    clusters: tuple[tuple[int, ...], ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if min(self.n_aps, self.n_ues, self.n_rbs, self.subcarriers_per_rb) < 1:
            raise ValueError("n_aps, n_ues, n_rbs, subcarriers_per_rb must be >= 1")
        if self.subcarriers_per_rb < 3:
            raise ValueError("need at least 3 subcarriers per RB for uplink pilots")
        for name in ("area_side", "carrier_freq_ghz", "bandwidth_hz",
                     "subcarrier_spacing_hz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.clusters is None:
            q = 4 if self.n_aps % 4 == 0 else 1
            object.__setattr__(self, "clusters", default_clusters(self.n_aps, q))
        else:
            object.__setattr__(
                self, "clusters", tuple(tuple(int(a) for a in c) for c in self.clusters))
        flat = [a for c in self.clusters for a in c]
        if sorted(flat) != list(range(self.n_aps)):
            raise ValueError("clusters must partition AP indices exactly")

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def p_ap_w(self) -> float:
        return float(dbm_to_watt(self.p_ap_dbm))

    @property
    def p_ue_w(self) -> float:
        return float(dbm_to_watt(self.p_ue_dbm))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["clusters"] = [list(c) for c in self.clusters]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        if d.get("clusters") is not None:
            d["clusters"] = tuple(tuple(c) for c in d["clusters"])
        return cls(**d)

    def content_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def drop_rng(self, drop_index: int, stream: int) -> np.random.Generator:
        """Counter-based generator for one (drop, purpose) stream."""
        ss = np.random.SeedSequence(entropy=self.seed,
                                    spawn_key=(int(drop_index), int(stream)))
        return np.random.Generator(np.random.Philox(ss))


def desk_scenario(seed: int = 0, **overrides) -> Scenario:
    """Small scenario used as the fast default profile."""
    params = dict(n_aps=8, n_ues=4, n_rbs=4, clusters=default_clusters(8, 2),
                  seed=seed)
    params.update(overrides)
    return Scenario(**params)


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario.to_dict(), fh, sort_keys=True)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return Scenario.from_dict(yaml.safe_load(fh))


def pathloss_db(distance_m, carrier_freq_ghz) -> np.ndarray:
    """NLoS urban-microcell pathloss: 36.7 log10(d) + 22.7 + 26 log10(f_GHz)."""
    distance_m = np.asarray(distance_m, dtype=float)
    if np.any(distance_m <= 0):
        raise ValueError("distance must be positive")
    return 36.7 * np.log10(distance_m) + 22.7 + 26.0 * np.log10(carrier_freq_ghz)


def noise_power_dbm(scenario: Scenario) -> float:
    """Per-RB noise power: -174 + 10 log10(B) + NF - 10 log10(F) dBm."""
    return float(-174.0 + 10.0 * np.log10(scenario.bandwidth_hz)
                 + scenario.noise_figure_db - 10.0 * np.log10(scenario.n_rbs))


@dataclass(frozen=True)
class ChannelRealization:
    """One network drop: complex channels ``h[n, k, f]``, large-scale gains in
    dB, per-(UE, RB) noise powers in watts, and node positions.  Arrays are
    frozen after construction and safe to share across workers.
    """

    h: np.ndarray                 # (N, K, F) complex
    beta_db: np.ndarray           # (N, K)
    noise_power_w: np.ndarray     # (K, F)
    ap_positions: np.ndarray      # (N, 2)
    ue_positions: np.ndarray      # (K, 2)
    subcarriers_per_rb: int
    drop_index: int = 0
    scenario_hash: str = ""

    def __post_init__(self):
        for arr in (self.h, self.beta_db, self.noise_power_w,
                    self.ap_positions, self.ue_positions):
            np.asarray(arr).flags.writeable = False
        if np.any(np.asarray(self.noise_power_w) <= 0):
            raise ValueError("noise power must be positive")

    @property
    def n_aps(self) -> int:
        return self.h.shape[0]

    @property
    def n_ues(self) -> int:
        return self.h.shape[1]

    @property
    def n_rbs(self) -> int:
        return self.h.shape[2]

    def small_scale(self) -> np.ndarray:
        """Recover the unit-variance fading factors from h and beta_db."""
        amp = 10.0 ** (-self.beta_db / 20.0)
        return self.h / amp[:, :, None]


def generate_drop(scenario: Scenario, drop_index: int) -> ChannelRealization:
    """Generate one drop: uniform positions, pathloss gains, Rayleigh fading.

    Deterministic given (scenario.seed, drop_index).
    """
    n, k, f = scenario.n_aps, scenario.n_ues, scenario.n_rbs

    rng_pos = scenario.drop_rng(drop_index, STREAM_POSITIONS)
    ap_xy = rng_pos.uniform(0.0, scenario.area_side, size=(n, 2))
    ue_xy = rng_pos.uniform(0.0, scenario.area_side, size=(k, 2))

    dz = scenario.ap_height - scenario.ue_height
    for _ in range(1000):
        d2 = np.linalg.norm(ap_xy[:, None, :] - ue_xy[None, :, :], axis=2)
        dist = np.sqrt(d2 ** 2 + dz ** 2)
        bad = np.any(dist < scenario.min_link_distance, axis=0)
        if not bad.any():
            break
        ue_xy[bad] = rng_pos.uniform(0.0, scenario.area_side, size=(bad.sum(), 2))
    else:
        raise RuntimeError("could not place UEs honoring min_link_distance")

    beta = pathloss_db(dist, scenario.carrier_freq_ghz)
    amp = 10.0 ** (-beta / 20.0)

    rng_fad = scenario.drop_rng(drop_index, STREAM_FADING)
    small = (rng_fad.standard_normal((n, k, f))
             + 1j * rng_fad.standard_normal((n, k, f))) / np.sqrt(2.0)
    h = amp[:, :, None] * small

    sigma2 = float(dbm_to_watt(noise_power_dbm(scenario)))
    noise = np.full((k, f), sigma2)

    return ChannelRealization(
        h=h, beta_db=beta, noise_power_w=noise,
        ap_positions=ap_xy, ue_positions=ue_xy,
        subcarriers_per_rb=scenario.subcarriers_per_rb,
        drop_index=drop_index, scenario_hash=scenario.content_hash())
