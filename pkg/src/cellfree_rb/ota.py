"""Over-the-air information exchange between APs and UEs.

Each scheduled time step runs a downlink pilot phase (APs transmit pilots
precoded with their current decisions) and an uplink pilot phase (UEs
transmit coefficient-weighted pilots on three dedicated subcarriers per RB),
after which the updating APs hold estimates of their matched-filter,
curvature and cross-interference terms without any AP-to-AP links.  In
noiseless mode every estimate reproduces the genie value exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import UeCoefficients, effective_gains
from .scenario import ChannelRealization
from .wmmse import EPS_FLOOR, ApUpdateTerms, Trace, update_w


@dataclass(frozen=True)
class PilotBook:
    """Orthonormal pilot sequences (one row per UE) and optional fixed
    scaling overrides.  When a scaling is None the phases compute the
    largest value honoring the relevant power budget."""

    pilots: np.ndarray                 # (K, tau) complex
    eta_d: float | None = None
    eta_u: float | None = None

    def __post_init__(self):
        p = self.pilots
        if p.shape[1] < p.shape[0]:
            raise ValueError("pilot length must be at least the number of UEs")
        gram = p @ p.conj().T
        if not np.allclose(gram, np.eye(p.shape[0]), atol=1e-12):
            raise ValueError("pilot rows must be orthonormal")
        np.asarray(p).flags.writeable = False

    @classmethod
    def dft(cls, n_ues: int, eta_d: float | None = None,
            eta_u: float | None = None) -> "PilotBook":
        k = np.arange(n_ues)
        grid = np.exp(-2j * np.pi * np.outer(k, k) / n_ues) / np.sqrt(n_ues)
        return cls(pilots=grid, eta_d=eta_d, eta_u=eta_u)


@dataclass(frozen=True)
class PilotNoiseConfig:
    """AWGN added per pilot symbol.  `sigma2` fixes the per-symbol noise
    power; otherwise `snr_db` sets it relative to the mean symbol power of
    each received sequence.  Default is noiseless."""

    sigma2: float | None = None
    snr_db: float | None = None

    @property
    def enabled(self) -> bool:
        return self.sigma2 is not None or self.snr_db is not None

    def noise_power(self, received: np.ndarray) -> np.ndarray:
        """Per-sequence symbol noise power for signals shaped (..., tau)."""
        if self.sigma2 is not None:
            return np.full(received.shape[:-1], float(self.sigma2))
        mean_pwr = np.mean(np.abs(received) ** 2, axis=-1)
        return mean_pwr / 10.0 ** (self.snr_db / 10.0)


def _add_noise(signal, noise: PilotNoiseConfig | None,
               rng: np.random.Generator | None):
    if noise is None or not noise.enabled:
        return signal
    if rng is None:
        raise ValueError("pilot noise requires an RNG stream")
    sigma2 = noise.noise_power(signal)[..., None]
    awgn = (rng.standard_normal(signal.shape)
            + 1j * rng.standard_normal(signal.shape)) * np.sqrt(sigma2 / 2.0)
    return signal + awgn


@dataclass
class GainEstimates:
    """What a UE extracts from one downlink phase: its own effective gain and
    the residual interference power, per (UE, RB)."""

    own: np.ndarray
    interference: np.ndarray


@dataclass
class DownlinkResult:
    """Received downlink pilots and the UE-side estimates derived from them."""

    y: np.ndarray               # (K, F, tau) received sequences
    gains: np.ndarray           # (K, F, K') full per-stream gain estimates
    estimates: GainEstimates
    eta_d: float


def genie_gain_estimates(chan: ChannelRealization, v: np.ndarray,
                         gains=None) -> GainEstimates:
    """Exact counterpart of the downlink estimates, from global state."""
    g = effective_gains(chan, v) if gains is None else gains
    own = np.einsum("kfk->kf", g)
    interf = np.sum(np.abs(g) ** 2, axis=2) - np.abs(own) ** 2
    return GainEstimates(own=own, interference=np.maximum(interf, 0.0))


def downlink_phase(chan: ChannelRealization, v_mix: np.ndarray,
                   book: PilotBook, p_t: float,
                   noise: PilotNoiseConfig | None = None,
                   rng: np.random.Generator | None = None) -> DownlinkResult:
    """All APs transmit pilots precoded with the decision mixture `v_mix`
    (the caller assembles fresh/stale rows); each UE matched-filters its own
    pilot and measures the residual interference power.
    """
    pilots = book.pilots
    if pilots.shape[0] != chan.n_ues:
        raise ValueError("pilot book size does not match the number of UEs")
    g = effective_gains(chan, v_mix)                       # (K, F, K')

    if book.eta_d is not None:
        eta_d = float(book.eta_d)
    else:
        worst = float(np.max(np.sum(np.abs(v_mix) ** 2, axis=(1, 2))))
        eta_d = 1.0 if worst <= p_t else float(np.sqrt(p_t / worst))

    y = eta_d * np.einsum("kfj,jt->kft", g, pilots)
    y = _add_noise(y, noise, rng)

    gains_est = np.einsum("jt,kft->kfj", np.conj(pilots), y) / eta_d
    own = np.einsum("kfk->kf", gains_est)
    resid = y - eta_d * own[:, :, None] * pilots[:, None, :]
    interference = np.sum(np.abs(resid) ** 2, axis=2) / eta_d ** 2

    return DownlinkResult(y=y, gains=gains_est,
                          estimates=GainEstimates(own=own,
                                                  interference=interference),
                          eta_d=eta_d)


def ue_coefficient_update(estimates: GainEstimates, noise_power_w: np.ndarray,
                          eps_floor: float = EPS_FLOOR) -> UeCoefficients:
    """Receive coefficient and weight each UE computes from its estimates."""
    own, interf = estimates.own, estimates.interference
    u = np.conj(own) / (np.abs(own) ** 2 + interf + noise_power_w)
    eps = (np.abs(u * own - 1.0) ** 2
           + np.abs(u) ** 2 * (interf + noise_power_w))
    return UeCoefficients(u=u, w=update_w(eps, eps_floor))


def uplink_phase(chan: ChannelRealization, coeffs: UeCoefficients,
                 dl: DownlinkResult, book: PilotBook, p_ue: float,
                 aps=None, noise: PilotNoiseConfig | None = None,
                 rng: np.random.Generator | None = None
                 ) -> tuple[list[ApUpdateTerms], float]:
    """UEs transmit three precoded pilot signals per RB; the listed APs
    matched-filter them into update-term estimates.

    Per RB, the UE sends w*u-weighted pilots on the first pilot subcarrier,
    sqrt(w)*u-weighted pilots on the second, and its conjugated downlink
    receive sequence scaled by w*|u|^2 on the third.  Uplink channels equal
    downlink channels (TDD reciprocity).  The third signal lives in the
    conjugated pilot basis, so APs correlate it against conj(pilot); the
    downlink scaling is divided out along with the uplink scaling.

    Returns one term estimate per requested AP plus the uplink scaling used.
    """
    pilots = book.pilots
    h = chan.h
    if aps is None:
        aps = np.arange(chan.n_aps)
    aps = np.atleast_1d(np.asarray(aps, dtype=int))

    u, w = coeffs.u, coeffs.w
    c1 = w * u                       # matched-filter pilot weights
    c2 = np.sqrt(w) * u              # curvature pilot weights
    c3 = w * np.abs(u) ** 2          # retransmission weights

    energy = (np.sum(np.abs(c1) ** 2, axis=1)
              + np.sum(np.abs(c2) ** 2, axis=1)
              + np.sum(c3 ** 2 * np.sum(np.abs(dl.y) ** 2, axis=2), axis=1))
    tight = float(np.sqrt(p_ue / np.max(energy))) if np.max(energy) > 0 else 1.0
    eta_u = tight
    if book.eta_u is not None:
        # an override may only lower the power actually used
        eta_u = min(float(book.eta_u), tight)

    h_sub = h[aps]
    z1 = eta_u * np.einsum("nkf,kf,kt->nft", h_sub, c1, pilots)
    z2 = eta_u * np.einsum("nkf,kf,kt->nft", h_sub, c2, pilots)
    z3 = eta_u * np.einsum("nkf,kft->nft", h_sub, c3[:, :, None] * np.conj(dl.y))
    z1 = _add_noise(z1, noise, rng)
    z2 = _add_noise(z2, noise, rng)
    z3 = _add_noise(z3, noise, rng)

    a_est = np.einsum("kt,nft->nkf", np.conj(pilots), z1) / eta_u
    d_est = np.sum(np.abs(z2) ** 2, axis=2) / eta_u ** 2
    m_est = np.einsum("kt,nft->nkf", pilots, z3) / (eta_u * dl.eta_d)

    terms = [ApUpdateTerms(a=a_est[i], d=d_est[i], m=m_est[i])
             for i in range(len(aps))]
    return terms, eta_u


@dataclass
class OverheadCounts:
    dl_phases: int
    ul_phases: int
    dl_pilot_symbols: int
    ul_pilot_symbols: int


def overhead_accounting(trace: Trace) -> OverheadCounts:
    """Total signaling consumed by a run: one downlink and one uplink phase
    per schedule unit, tau pilot symbols per RB per downlink phase and three
    pilot subcarriers of tau symbols per RB per uplink phase."""
    dl = int(sum(trace.dl_phases))
    ul = int(sum(trace.ul_phases))
    per_dl = trace.pilot_len * trace.n_rbs
    per_ul = 3 * trace.pilot_len * trace.n_rbs
    return OverheadCounts(dl_phases=dl, ul_phases=ul,
                          dl_pilot_symbols=dl * per_dl,
                          ul_pilot_symbols=ul * per_ul)
