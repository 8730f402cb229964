import numpy as np
import pytest

from cellfree_rb.metrics import (UeCoefficients, ap_powers,
                                 check_power_feasible, effective_gains, mse,
                                 sinr, sum_rate, sum_rate_per_subcarrier,
                                 weighted_mse_objective)
from cellfree_rb.oracles import naive_effective_gains
from cellfree_rb.scenario import ChannelRealization


def make_chan(h, noise=1.0, c=12):
    h = np.asarray(h, dtype=complex)
    n, k, f = h.shape
    return ChannelRealization(
        h=h, beta_db=np.zeros((n, k)),
        noise_power_w=np.full((k, f), float(noise)),
        ap_positions=np.zeros((n, 2)), ue_positions=np.zeros((k, 2)),
        subcarriers_per_rb=c)


def random_case(seed, n=3, k=2, f=2, noise=None):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((n, k, f)) + 1j * rng.standard_normal((n, k, f))
    v = rng.standard_normal((n, k, f)) + 1j * rng.standard_normal((n, k, f))
    if noise is None:
        noise = rng.uniform(0.2, 2.0)
    return make_chan(h, noise), v


def test_gains_zero_decisions():
    chan, v = random_case(0)
    assert np.all(effective_gains(chan, np.zeros_like(v)) == 0)


def test_gains_single_ap_identity_weights():
    rng = np.random.default_rng(1)
    h = rng.standard_normal((1, 3, 2)) + 1j * rng.standard_normal((1, 3, 2))
    chan = make_chan(h)
    v = np.ones_like(h)
    g = effective_gains(chan, v)
    for k in range(3):
        for f in range(2):
            for j in range(3):
                assert g[k, f, j] == pytest.approx(h[0, k, f])


@pytest.mark.parametrize("seed", range(5))
def test_gains_match_naive_loops(seed):
    chan, v = random_case(seed)
    assert np.allclose(effective_gains(chan, v),
                       naive_effective_gains(chan.h, v), atol=1e-12)


def test_gains_shape_mismatch_rejected():
    chan, v = random_case(2)
    with pytest.raises(ValueError):
        effective_gains(chan, v[:, :1, :])


def test_sinr_no_interference():
    # one AP, one UE, |gain| = 1, noise 1 -> SINR 1
    chan = make_chan(np.ones((1, 1, 1)), noise=1.0)
    assert sinr(chan, np.ones((1, 1, 1), dtype=complex))[0, 0] == pytest.approx(1.0)
    assert np.all(sinr(chan, np.zeros((1, 1, 1), dtype=complex)) == 0.0)


@pytest.mark.parametrize("seed", range(4))
def test_sinr_matches_scalar_reference(seed):
    chan, v = random_case(seed, n=3, k=2, f=2)
    got = sinr(chan, v)
    g = naive_effective_gains(chan.h, v)
    for k in range(2):
        for f in range(2):
            sig = abs(g[k, f, k]) ** 2
            interf = sum(abs(g[k, f, j]) ** 2 for j in range(2) if j != k)
            expect = sig / (interf + chan.noise_power_w[k, f])
            assert got[k, f] == pytest.approx(expect, rel=1e-12)


def test_sinr_invariant_to_common_phase_rotation():
    chan, v = random_case(9)
    rng = np.random.default_rng(10)
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, size=v.shape[1]))
    rotated = v * phases[None, :, None]
    assert np.allclose(sinr(chan, v), sinr(chan, rotated), atol=1e-10)


def test_sum_rate_reference_value():
    # SINR 3 on a single (UE, RB): 12 subcarriers * log2(4) = 24
    chan = make_chan(np.ones((1, 1, 1)), noise=1.0, c=12)
    v = np.sqrt(3.0) * np.ones((1, 1, 1), dtype=complex)
    assert sum_rate(chan, v) == pytest.approx(24.0)
    assert sum_rate_per_subcarrier(chan, v) == pytest.approx(2.0)
    assert sum_rate(chan, np.zeros_like(v)) == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_sum_rate_matches_recomputation(seed):
    chan, v = random_case(seed)
    expect = chan.subcarriers_per_rb * np.sum(np.log2(1 + sinr(chan, v)))
    assert sum_rate(chan, v) == pytest.approx(expect, rel=1e-12)


def test_sum_rate_monotone_in_scale_single_ue():
    chan, v = random_case(5, n=2, k=1, f=2)
    scales = np.linspace(0.1, 3.0, 15)
    rates = [sum_rate(chan, a * v) for a in scales]
    assert np.all(np.diff(rates) >= 0)


def test_mse_trivial_cases():
    chan, v = random_case(3)
    k, f = v.shape[1], v.shape[2]
    zero_u = UeCoefficients(np.zeros((k, f), dtype=complex), np.ones((k, f)))
    assert np.allclose(mse(chan, v, zero_u), 1.0)

    chan1 = make_chan(np.ones((1, 1, 1)), noise=0.5)
    one_u = UeCoefficients(np.ones((1, 1), dtype=complex), np.ones((1, 1)))
    got = mse(chan1, np.zeros((1, 1, 1), dtype=complex), one_u)
    assert got[0, 0] == pytest.approx(1.5)


@pytest.mark.parametrize("seed", range(4))
def test_mse_at_mmse_coefficients_is_one_over_one_plus_sinr(seed):
    from cellfree_rb.wmmse import update_u
    chan, v = random_case(seed)
    u = update_u(chan, v)
    coeffs = UeCoefficients(u, np.ones_like(u, dtype=float))
    eps = mse(chan, v, coeffs)
    assert np.allclose(eps, 1.0 / (1.0 + sinr(chan, v)), rtol=1e-9)
    assert np.all(eps >= 0)


def test_weighted_objective_linearity():
    chan, v = random_case(6)
    rng = np.random.default_rng(7)
    k, f = v.shape[1], v.shape[2]
    u = rng.standard_normal((k, f)) + 1j * rng.standard_normal((k, f))
    ones = UeCoefficients(u, np.ones((k, f)))
    w = rng.uniform(0.5, 2.0, size=(k, f))
    weighted = UeCoefficients(u, w)
    doubled = UeCoefficients(u, 2 * w)

    assert weighted_mse_objective(chan, v, ones) == pytest.approx(
        float(np.sum(mse(chan, v, ones))), rel=1e-12)
    assert weighted_mse_objective(chan, v, doubled) == pytest.approx(
        2 * weighted_mse_objective(chan, v, weighted), rel=1e-12)
    assert weighted_mse_objective(chan, v, weighted) == pytest.approx(
        float(np.sum(w * mse(chan, v, weighted))), rel=1e-12)


def test_power_check():
    v = np.ones((2, 2, 2), dtype=complex)      # per-AP power 4
    assert np.allclose(ap_powers(v), 4.0)
    check_power_feasible(v, 4.0)
    with pytest.raises(ValueError):
        check_power_feasible(v, 3.9)
