"""Weighted-MMSE numerical kernel.

Holds the coefficient updates, the per-AP closed-form decision update with
its power-constraint bisection, and the centralized solver that alternates
coefficient updates with Gauss-Seidel sweeps of the per-AP kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import (UeCoefficients, effective_gains, mse, sinr,
                      sum_rate_per_subcarrier, weighted_mse_objective)
from .scenario import ChannelRealization

# Error floor applied before taking reciprocals of the per-UE MSE.
EPS_FLOOR = 1e-12


@dataclass
class ApUpdateTerms:
    """Per-AP update inputs for one AP: matched-filter term a[k, f], per-RB
    quadratic coefficient d[f] (a sum of squared magnitudes, hence >= 0), and
    cross-interference term m[k, f]."""

    a: np.ndarray
    d: np.ndarray
    m: np.ndarray


@dataclass
class LagrangeSolve:
    """Result of the power-constraint bisection."""

    mu: float
    power_used: float
    iterations: int


@dataclass
class Trace:
    """Per-iteration history of a solver run."""

    variant: str
    sr_per_subcarrier: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    surrogate: list[float] = field(default_factory=list)
    decision_change: list[float] = field(default_factory=list)
    dl_phases: list[int] = field(default_factory=list)
    ul_phases: list[int] = field(default_factory=list)
    converged: bool = False
    pilot_len: int = 0
    n_rbs: int = 0

    @property
    def iterations(self) -> int:
        return len(self.sr_per_subcarrier)

    def add(self, sr, objective, surrogate, change, dl=0, ul=0):
        self.sr_per_subcarrier.append(float(sr))
        self.objective.append(float(objective))
        self.surrogate.append(float(surrogate))
        self.decision_change.append(float(change))
        self.dl_phases.append(int(dl))
        self.ul_phases.append(int(ul))


def update_u(chan: ChannelRealization, v: np.ndarray, gains=None) -> np.ndarray:
    """MMSE receive coefficients u = conj(own) / (sum_j |g_j|^2 + noise)."""
    g = effective_gains(chan, v) if gains is None else gains
    own = np.einsum("kfk->kf", g)
    total = np.sum(np.abs(g) ** 2, axis=2)
    return np.conj(own) / (total + chan.noise_power_w)


def update_w(eps: np.ndarray, floor: float = EPS_FLOOR) -> np.ndarray:
    """Weights w = 1 / eps, with eps floored at `floor` to bound w."""
    return 1.0 / np.maximum(np.asarray(eps, dtype=float), floor)


def coefficients_for(chan: ChannelRealization, v: np.ndarray,
                     gains=None) -> UeCoefficients:
    """Receive coefficients and weights induced by the decisions v."""
    g = effective_gains(chan, v) if gains is None else gains
    u = update_u(chan, v, gains=g)
    eps = mse(chan, v, UeCoefficients(u, np.ones_like(u, dtype=float)), gains=g)
    return UeCoefficients(u=u, w=update_w(eps))


def group_terms(chan: ChannelRealization, coeffs: UeCoefficients,
                aps, g_tilde: np.ndarray) -> list[ApUpdateTerms]:
    """Exact update terms for a set of APs, given the gain snapshot g_tilde.

    g_tilde[k, f, j] must hold the decision mixture the caller prescribes
    (it contains each listed AP's previous decision).  This is the genie
    computation; the OTA phases estimate the same quantities from pilots.
    """
    aps = np.atleast_1d(np.asarray(aps, dtype=int))
    h = chan.h[aps]                                # (g, K, F)
    u, w = coeffs.u, coeffs.w
    wu = w * u
    wu2 = w * np.abs(u) ** 2
    a = h * wu[None, :, :]
    d = np.einsum("gkf,kf->gf", np.abs(h) ** 2, wu2)
    m = np.einsum("gjf,jfk->gkf", h * wu2[None, :, :], np.conj(g_tilde))
    return [ApUpdateTerms(a=a[i], d=d[i], m=m[i]) for i in range(len(aps))]


def ap_terms_direct(chan: ChannelRealization, v_prev: np.ndarray,
                    coeffs: UeCoefficients, ap: int,
                    g_tilde: np.ndarray) -> ApUpdateTerms:
    """Exact A/D/M-style terms for a single AP (see :func:`group_terms`)."""
    return group_terms(chan, coeffs, [ap], g_tilde)[0]


def _numerator(terms: ApUpdateTerms, v_prev_ap: np.ndarray) -> np.ndarray:
    return (np.conj(terms.a)
            + terms.d[None, :] * v_prev_ap
            - np.conj(terms.m))


def _closed_form_from(num: np.ndarray, d: np.ndarray, mu: float) -> np.ndarray:
    denom = mu + d[None, :]
    if denom.min() > 0.0:
        return num / denom
    if ((denom == 0) & (num != 0)).any():
        raise ZeroDivisionError("degenerate update: zero curvature with "
                                "nonzero numerator")
    out = np.zeros_like(num)
    np.divide(num, denom, out=out, where=denom != 0)
    return out


def ap_closed_form(terms: ApUpdateTerms, v_prev_ap: np.ndarray,
                   mu: float) -> np.ndarray:
    """Per-AP decision minimizing the local weighted-MSE problem at fixed mu."""
    return _closed_form_from(_numerator(terms, v_prev_ap), terms.d, mu)


def _solve_multiplier(p2: list, d: list, p_t: float) -> tuple[float, float, int]:
    """Root of power(mu) = p_t on the bracket [0, mu_hi].

    power(mu) = sum_f p2[f] / (mu + d[f])^2 is convex and monotone
    decreasing, so the bracket with mu_hi doubled from 1 until
    power(mu_hi) <= p_t always exists.  Inside the bracket a Newton step is
    used when it stays bracketed (it approaches the root monotonically from
    the infeasible side) and bisection otherwise.
    """
    def eval_power(mu):
        total = 0.0
        slope = 0.0
        for pf, df in zip(p2, d):
            denom = mu + df
            if denom <= 0.0:
                if pf > 0.0:
                    return np.inf, -np.inf
                continue
            t = pf / (denom * denom)
            total += t
            slope -= 2.0 * t / denom
        return total, slope

    p0, _ = eval_power(0.0)
    if p0 <= p_t:
        return 0.0, p0, 0

    hi = 1.0
    iters = 1
    pw, _ = eval_power(hi)
    while pw > p_t:
        hi *= 2.0
        iters += 1
        if iters > 64:
            raise RuntimeError("failed to bracket the power constraint")
        pw, _ = eval_power(hi)
    lo = 0.0 if hi == 1.0 else hi / 2.0

    mu, pw = lo, p0
    best_mu, best_pw = hi, pw
    for _ in range(200):
        pw, slope = eval_power(mu)
        iters += 1
        if abs(pw - p_t) <= abs(best_pw - p_t):
            best_mu, best_pw = mu, pw
        if abs(pw - p_t) <= 1e-12 * p_t:
            return mu, pw, iters
        if pw > p_t:
            lo = mu
        else:
            hi = mu
        nxt = mu - (pw - p_t) / slope if slope < 0.0 else 0.5 * (lo + hi)
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if nxt == mu:
            break
        mu = nxt
    return best_mu, best_pw, iters


def solve_mu(terms: ApUpdateTerms, v_prev_ap: np.ndarray, p_t: float,
             tol_rel: float = 1e-8) -> LagrangeSolve:
    """Multiplier enforcing ||V_n||_F^2 <= p_t with complementary slackness:
    mu = 0 leaves the power below budget, mu > 0 pins it to the budget
    within tol_rel * p_t."""
    if p_t <= 0:
        raise ValueError("p_t must be positive")
    num = _numerator(terms, v_prev_ap)
    p2 = [float(x) for x in np.sum(np.abs(num) ** 2, axis=0)]
    d = [float(x) for x in terms.d]
    mu, pw, iters = _solve_multiplier(p2, d, p_t)
    if mu > 0.0 and abs(pw - p_t) > tol_rel * p_t:
        raise RuntimeError(f"multiplier search missed tolerance: "
                           f"power {pw} vs budget {p_t}")
    return LagrangeSolve(mu=mu, power_used=pw, iterations=iters)


def ap_update(terms: ApUpdateTerms, v_prev_ap: np.ndarray,
              p_t: float) -> tuple[np.ndarray, LagrangeSolve]:
    """Closed-form update with the power constraint resolved."""
    num = _numerator(terms, v_prev_ap)
    p2 = [float(x) for x in np.sum(np.abs(num) ** 2, axis=0)]
    d = [float(x) for x in terms.d]
    solve = LagrangeSolve(*_solve_multiplier(p2, d, p_t))
    return _closed_form_from(num, terms.d, solve.mu), solve


def initial_decisions(chan: ChannelRealization, p_t: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Random start: complex Gaussian entries scaled to half power per AP."""
    n, k, f = chan.h.shape
    v = rng.standard_normal((n, k, f)) + 1j * rng.standard_normal((n, k, f))
    norms = np.sqrt(np.sum(np.abs(v) ** 2, axis=(1, 2), keepdims=True))
    return v * (np.sqrt(p_t / 2.0) / norms)


def surrogate_value(chan: ChannelRealization, v: np.ndarray,
                    gains=None) -> float:
    """sum_{k,f} (1 + ln eps) at MMSE coefficients; equals
    K*F - ln(2) * (per-subcarrier sum rate), so it decreases iff rate grows.
    """
    s = sinr(chan, v, gains)
    return float(s.size - np.sum(np.log1p(s)))


@dataclass
class CentralizedConfig:
    max_iterations: int = 500
    tolerance: float | None = None          # default 1e-3 * sqrt(N * p_t)
    inner_tolerance: float | None = None    # default 1e-6 * sqrt(N * p_t)
    inner_max_sweeps: int = 50


def centralized_wmmse(chan: ChannelRealization, p_t: float,
                      config: CentralizedConfig | None = None,
                      rng: np.random.Generator | None = None,
                      v0: np.ndarray | None = None) -> tuple[np.ndarray, Trace]:
    """Centralized solver: alternate receive-coefficient/weight updates with
    an inner Gauss-Seidel pass of per-AP closed-form updates until the inner
    decision change is negligible.

    Returns the final decisions and a per-iteration trace.  If the outer
    stopping rule never fires, the best-rate iterate is returned and the
    trace is flagged unconverged.
    """
    cfg = config or CentralizedConfig()
    if v0 is not None:
        v = np.array(v0, dtype=complex)
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        v = initial_decisions(chan, p_t, rng)

    n_aps = chan.n_aps
    scale = np.sqrt(n_aps * p_t)
    tol = cfg.tolerance if cfg.tolerance is not None else 1e-3 * scale
    inner_tol = (cfg.inner_tolerance if cfg.inner_tolerance is not None
                 else 1e-6 * scale)

    trace = Trace(variant="centralized")
    best_v, best_sr = v.copy(), -np.inf

    for _ in range(cfg.max_iterations):
        g = effective_gains(chan, v)
        coeffs = coefficients_for(chan, v, gains=g)
        v_outer = v.copy()
        wu = coeffs.w * coeffs.u
        wu2 = coeffs.w * np.abs(coeffs.u) ** 2

        for _ in range(cfg.inner_max_sweeps):
            v_sweep = v.copy()
            for n in range(n_aps):
                h_n = chan.h[n]
                terms = ApUpdateTerms(
                    a=h_n * wu,
                    d=np.einsum("kf,kf->f", np.abs(h_n) ** 2, wu2),
                    m=np.einsum("jf,jfk->kf", h_n * wu2, np.conj(g)))
                v_n, _ = ap_update(terms, v[n], p_t)
                # incremental gain update keeps the sweep O(K^2 F) per AP
                g += np.einsum("kf,jf->kfj", h_n, v_n - v[n])
                v[n] = v_n
            if np.linalg.norm(v - v_sweep) <= inner_tol:
                break

        g = effective_gains(chan, v)
        sr = sum_rate_per_subcarrier(chan, v, gains=g)
        change = float(np.linalg.norm(v - v_outer))
        trace.add(sr, weighted_mse_objective(chan, v, coeffs, gains=g),
                  surrogate_value(chan, v, gains=g), change)
        if sr > best_sr:
            best_sr, best_v = sr, v.copy()
        if change <= tol:
            trace.converged = True
            break

    return (v if trace.converged else best_v), trace
