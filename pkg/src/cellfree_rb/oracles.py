"""Independent reference implementations used to cross-check the kernel.

Nothing here reuses the closed-form update path: the objective goes through
the metrics module, gradients are derived directly from the per-UE error
expression, and the solver is an accelerated projected-gradient method on
the per-AP feasible ball.  These routines back the validation command and
the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import UeCoefficients, weighted_mse_objective
from .scenario import ChannelRealization


def naive_effective_gains(h: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Index-by-index triple loop version of the effective gain."""
    n, k, f = h.shape
    g = np.zeros((k, f, k), dtype=complex)
    for kk in range(k):
        for ff in range(f):
            for jj in range(k):
                acc = 0j
                for nn in range(n):
                    acc += h[nn, kk, ff] * v[nn, jj, ff]
                g[kk, ff, jj] = acc
    return g


def naive_ap_terms(h: np.ndarray, coeffs: UeCoefficients, ap: int,
                   g_tilde: np.ndarray):
    """Loop implementation of the per-AP update terms."""
    _, k, f = h.shape
    u, w = coeffs.u, coeffs.w
    a = np.zeros((k, f), dtype=complex)
    d = np.zeros(f)
    m = np.zeros((k, f), dtype=complex)
    for ff in range(f):
        for kk in range(k):
            a[kk, ff] = h[ap, kk, ff] * w[kk, ff] * u[kk, ff]
            d[ff] += w[kk, ff] * abs(h[ap, kk, ff]) ** 2 * abs(u[kk, ff]) ** 2
        for kk in range(k):
            acc = 0j
            for jj in range(k):
                acc += (h[ap, jj, ff] * w[jj, ff] * abs(u[jj, ff]) ** 2
                        * np.conj(g_tilde[jj, ff, kk]))
            m[kk, ff] = acc
    return a, d, m


@dataclass
class RandomInstance:
    """Small synthetic problem for kernel/oracle comparisons."""

    chan: ChannelRealization
    coeffs: UeCoefficients
    v: np.ndarray          # full decision mixture, one row per AP
    ap: int
    p_t: float


def random_instance(seed: int, n_max: int = 4, k_max: int = 3,
                    f_max: int = 3) -> RandomInstance:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    k = int(rng.integers(1, k_max + 1))
    f = int(rng.integers(1, f_max + 1))
    h = (rng.standard_normal((n, k, f))
         + 1j * rng.standard_normal((n, k, f))) / np.sqrt(2.0)
    noise = rng.uniform(0.1, 2.0, size=(k, f))
    chan = ChannelRealization(
        h=h, beta_db=np.zeros((n, k)), noise_power_w=noise,
        ap_positions=np.zeros((n, 2)), ue_positions=np.zeros((k, 2)),
        subcarriers_per_rb=12)
    p_t = float(rng.uniform(0.5, 4.0))
    v = (rng.standard_normal((n, k, f)) + 1j * rng.standard_normal((n, k, f)))
    norms = np.sqrt(np.sum(np.abs(v) ** 2, axis=(1, 2), keepdims=True))
    v = v * (np.sqrt(p_t) * rng.uniform(0.2, 1.0, size=(n, 1, 1)) / norms)
    u = (rng.standard_normal((k, f)) + 1j * rng.standard_normal((k, f)))
    w = rng.uniform(0.2, 5.0, size=(k, f))
    ap = int(rng.integers(0, n))
    return RandomInstance(chan=chan, coeffs=UeCoefficients(u=u, w=w),
                          v=v, ap=ap, p_t=p_t)


def local_objective(inst: RandomInstance, x: np.ndarray) -> float:
    """Weighted-MSE objective with AP `ap`'s block replaced by x."""
    v = inst.v.copy()
    v[inst.ap] = x
    return weighted_mse_objective(inst.chan, v, inst.coeffs)


def local_gradient(inst: RandomInstance, x: np.ndarray) -> np.ndarray:
    """Gradient of the local objective w.r.t. the real parametrization of x,
    expressed as a complex array (d/dRe + i d/dIm).

    Derived directly from the error terms: receiver i's stream-j term is
    w_i |u_i g_{i,f,j}(x) - delta_ij|^2, so its conjugate derivative w.r.t.
    x[j, f] is w_i conj(u_i h[ap, i, f]) (u_i g_{i,f,j} - delta_ij).
    """
    v = inst.v.copy()
    v[inst.ap] = x
    h = inst.chan.h
    g = np.einsum("nkf,njf->kfj", h, v)
    u, w = inst.coeffs.u, inst.coeffs.w
    inner = u[:, :, None] * g
    k = g.shape[0]
    inner[np.arange(k), :, np.arange(k)] -= 1.0
    lead = w * np.conj(u * h[inst.ap])
    return 2.0 * np.einsum("if,ifk->kf", lead, inner)


def project_ball(x: np.ndarray, p_t: float) -> np.ndarray:
    norm = np.linalg.norm(x)
    if norm ** 2 <= p_t:
        return x
    return x * (np.sqrt(p_t) / norm)


def projected_gradient_solve(inst: RandomInstance, x0=None,
                             max_iters: int = 20000,
                             tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Accelerated projected-gradient minimizer of the local problem.

    The objective is quadratic per RB with curvature
    2 * sum_i w_i |u_i h[ap, i, f]|^2, which bounds the Lipschitz constant.
    Stops on the gradient-mapping norm.
    """
    h_ap = inst.chan.h[inst.ap]
    curv = 2.0 * np.sum(inst.coeffs.w * np.abs(inst.coeffs.u * h_ap) ** 2,
                        axis=0)
    lip = float(np.max(curv)) + 1e-12
    step = 1.0 / lip

    x = project_ball(np.zeros_like(inst.v[inst.ap]) if x0 is None else x0.copy(),
                     inst.p_t)
    y = x.copy()
    t_mom = 1.0
    for it in range(max_iters):
        grad = local_gradient(inst, y)
        x_new = project_ball(y - step * grad, inst.p_t)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom ** 2))
        y = x_new + ((t_mom - 1.0) / t_new) * (x_new - x)
        x, t_mom = x_new, t_new
        if it % 50 == 0:
            gm = x - project_ball(x - step * local_gradient(inst, x), inst.p_t)
            if np.linalg.norm(gm) * lip <= tol * (1.0 + np.linalg.norm(x)):
                break
    return x, local_objective(inst, x)


def finite_diff_gradient(fun, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences on the real parametrization of x."""
    grad = np.zeros_like(x, dtype=complex)
    flat = x.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        for part, delta in ((1.0, step), (1j, step)):
            orig = flat[i]
            flat[i] = orig + part * delta
            f_plus = fun(x)
            flat[i] = orig - part * delta
            f_minus = fun(x)
            flat[i] = orig
            comp = (f_plus - f_minus) / (2.0 * delta)
            out[i] += comp * part
    return grad


def kkt_residual(inst: RandomInstance, x: np.ndarray, mu: float,
                 step: float = 1e-6) -> float:
    """Stationarity residual ||grad J + 2 mu x|| with the objective gradient
    obtained by finite differences on the real parametrization."""
    grad = finite_diff_gradient(lambda z: local_objective(inst, z), x.copy(),
                                step=step)
    return float(np.linalg.norm(grad + 2.0 * mu * x))
