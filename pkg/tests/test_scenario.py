import numpy as np
import pytest

from cellfree_rb.scenario import (ChannelRealization, Scenario, desk_scenario,
                                  generate_drop, load_scenario,
                                  noise_power_dbm, pathloss_db, save_scenario)


def test_pathloss_reference_values():
    assert pathloss_db(100.0, 2.0) == pytest.approx(103.93, abs=5e-3)
    assert pathloss_db(10.0, 2.0) == pytest.approx(67.23, abs=5e-3)
    # both log terms vanish
    assert pathloss_db(1.0, 1.0) == pytest.approx(22.7, abs=1e-12)


def test_pathloss_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        pathloss_db(0.0, 2.0)
    with pytest.raises(ValueError):
        pathloss_db(-3.0, 2.0)


def test_pathloss_monotone_in_distance():
    d = np.linspace(1.0, 500.0, 50)
    pl = pathloss_db(d, 2.0)
    assert np.all(np.diff(pl) > 0)


def test_noise_power_reference_values():
    assert noise_power_dbm(Scenario()) == pytest.approx(-107.41, abs=5e-3)
    floor = Scenario(bandwidth_hz=1.0, noise_figure_db=0.0, n_rbs=1,
                     clusters=[[i] for i in range(16)])
    assert noise_power_dbm(floor) == pytest.approx(-174.0, abs=1e-12)


def test_noise_power_drops_3db_when_rbs_double():
    a = noise_power_dbm(Scenario())
    b = noise_power_dbm(Scenario(n_rbs=22))
    assert a - b == pytest.approx(10 * np.log10(2), abs=1e-12)


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(subcarriers_per_rb=2)
    with pytest.raises(ValueError):
        Scenario(n_rbs=0)
    with pytest.raises(ValueError):
        Scenario(bandwidth_hz=-1.0)
    # overlapping clusters
    with pytest.raises(ValueError):
        Scenario(n_aps=4, clusters=[[0, 1], [1, 2, 3]])
    # non-covering clusters
    with pytest.raises(ValueError):
        Scenario(n_aps=4, clusters=[[0, 1]])


def test_default_scenario_matches_evaluation_setup():
    s = Scenario()
    assert (s.n_aps, s.n_ues, s.n_rbs) == (16, 8, 11)
    assert s.n_clusters == 4
    assert (s.p_ap_dbm, s.p_ue_dbm) == (25.0, 23.0)


def test_drop_shapes():
    d = generate_drop(Scenario(), 0)
    assert d.h.shape == (16, 8, 11)
    assert d.beta_db.shape == (16, 8)
    assert d.noise_power_w.shape == (8, 11)


def test_drop_determinism_and_independence_across_drops():
    s = desk_scenario(seed=7)
    a = generate_drop(s, 3)
    b = generate_drop(s, 3)
    assert a.h.tobytes() == b.h.tobytes()
    assert a.ap_positions.tobytes() == b.ap_positions.tobytes()
    assert a.noise_power_w.tobytes() == b.noise_power_w.tobytes()
    c = generate_drop(s, 4)
    assert a.h.tobytes() != c.h.tobytes()


def test_drop_arrays_immutable():
    d = generate_drop(desk_scenario(), 0)
    with pytest.raises(ValueError):
        d.h[0, 0, 0] = 0


def test_small_scale_unit_variance():
    # over 1e5 samples the empirical variance must sit within 2% of 1
    s = Scenario(n_aps=50, n_ues=20, n_rbs=100, clusters=[[i] for i in range(50)],
                 seed=11)
    tilde = generate_drop(s, 0).small_scale()
    assert tilde.size == 100_000
    assert np.mean(np.abs(tilde) ** 2) == pytest.approx(1.0, abs=0.02)


def test_small_scale_independent_entries():
    s = Scenario(n_aps=40, n_ues=10, n_rbs=50, clusters=[[i] for i in range(40)],
                 seed=3)
    x = generate_drop(s, 0).small_scale().ravel()
    pairs = x[:-1] * np.conj(x[1:])
    bound = 3.0 / np.sqrt(pairs.size)
    assert abs(np.mean(pairs)) < bound


def test_min_link_distance_enforced():
    s = desk_scenario(seed=5, ap_height=0.0, min_link_distance=20.0)
    d = generate_drop(s, 0)
    dists = np.linalg.norm(d.ap_positions[:, None, :] - d.ue_positions[None],
                           axis=2)
    assert np.all(dists >= 20.0)


def test_scenario_yaml_round_trip(tmp_path):
    s = desk_scenario(seed=42, area_side=120.0)
    path = tmp_path / "scenario.yaml"
    save_scenario(s, path)
    assert load_scenario(path) == s


def test_drop_rng_streams_are_distinct():
    s = desk_scenario()
    a = s.drop_rng(0, 0).standard_normal(4)
    b = s.drop_rng(0, 1).standard_normal(4)
    assert not np.allclose(a, b)
