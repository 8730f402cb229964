"""Decision-quality metrics: effective gains, SINR, rates, mean squared error.

All modules evaluate decisions through these functions, so there is a single
definition of the effective gain and everything derived from it.  A decision
tensor is a complex ndarray ``v[n, k, f]`` giving the weight AP ``n`` applies
to UE ``k``'s stream on RB ``f``; ``|v[n, k, f]|^2`` is allocated power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ChannelRealization


@dataclass
class UeCoefficients:
    """Receive coefficients u[k, f] and positive weights w[k, f] held at UEs."""

    u: np.ndarray
    w: np.ndarray


def effective_gains(chan: ChannelRealization, v: np.ndarray) -> np.ndarray:
    """Gains g[k, f, j] = sum_n h[n, k, f] * v[n, j, f].

    Entry (k, f, j) is what UE k receives on RB f of the weights aimed at
    UE j, aggregated over all APs.
    """
    h = chan.h
    v = np.asarray(v)
    if v.shape != h.shape:
        raise ValueError(f"decision shape {v.shape} != channel shape {h.shape}")
    return np.einsum("nkf,njf->kfj", h, v)


def _signal_and_interference(chan, v, gains=None):
    g = effective_gains(chan, v) if gains is None else gains
    own = np.einsum("kfk->kf", g)
    total = np.sum(np.abs(g) ** 2, axis=2)
    interf = np.maximum(total - np.abs(own) ** 2, 0.0)
    return own, interf


def sinr(chan: ChannelRealization, v: np.ndarray, gains=None) -> np.ndarray:
    """Per-(UE, RB) SINR: |own gain|^2 / (interference + noise)."""
    own, interf = _signal_and_interference(chan, v, gains)
    return np.abs(own) ** 2 / (interf + chan.noise_power_w)


def sum_rate_per_subcarrier(chan: ChannelRealization, v: np.ndarray,
                            gains=None) -> float:
    """sum_{k,f} log2(1 + SINR), i.e. the rate on one subcarrier of each RB."""
    return float(np.sum(np.log2(1.0 + sinr(chan, v, gains))))


def sum_rate(chan: ChannelRealization, v: np.ndarray, gains=None) -> float:
    """Total rate in bits/channel-use over all C subcarriers of every RB."""
    return chan.subcarriers_per_rb * sum_rate_per_subcarrier(chan, v, gains)


def mse(chan: ChannelRealization, v: np.ndarray, coeffs: UeCoefficients,
        gains=None) -> np.ndarray:
    """Per-(UE, RB) error |u*own - 1|^2 + |u|^2 * (interference + noise)."""
    own, interf = _signal_and_interference(chan, v, gains)
    u = coeffs.u
    return (np.abs(u * own - 1.0) ** 2
            + np.abs(u) ** 2 * (interf + chan.noise_power_w))


def weighted_mse_objective(chan: ChannelRealization, v: np.ndarray,
                           coeffs: UeCoefficients, gains=None) -> float:
    """sum_{k,f} w[k,f] * mse[k,f]; the block-descent progress measure."""
    return float(np.sum(coeffs.w * mse(chan, v, coeffs, gains)))


def ap_powers(v: np.ndarray) -> np.ndarray:
    """Per-AP transmit power ||V_n||_F^2."""
    return np.sum(np.abs(v) ** 2, axis=(1, 2))


def check_power_feasible(v: np.ndarray, p_max: float, tol: float = 1e-8) -> None:
    """Raise if any AP exceeds its power budget beyond the tolerance."""
    worst = float(np.max(ap_powers(v)))
    if worst > p_max * (1.0 + tol):
        raise ValueError(f"per-AP power {worst:.6e} exceeds budget {p_max:.6e}")
