import numpy as np
import pytest

from cellfree_rb.distributed import (RunConfig, UpdateSchedule,
                                     assemble_g_tilde, damped_step_size, run,
                                     time_step)
from cellfree_rb.metrics import (ap_powers, effective_gains,
                                 weighted_mse_objective)
from cellfree_rb.ota import PilotBook
from cellfree_rb.scenario import desk_scenario, generate_drop
from cellfree_rb.wmmse import coefficients_for, initial_decisions


def small_setup(seed=0, **overrides):
    scenario = desk_scenario(seed=seed, **overrides)
    chan = generate_drop(scenario, 0)
    return scenario, chan


def explicit_mixture(h, fresh, stale, groups, unit_index):
    """Direct loop construction of the gain snapshot with fresh decisions
    for groups before `unit_index` and stale ones from there on."""
    n, k, f = h.shape
    g = np.zeros((k, f, k), dtype=complex)
    fresh_aps = {a for grp in groups[:unit_index] for a in grp}
    for kk in range(k):
        for ff in range(f):
            for jj in range(k):
                for m in range(n):
                    src = fresh if m in fresh_aps else stale
                    g[kk, ff, jj] += h[m, kk, ff] * src[m, jj, ff]
    return g


def test_schedule_constructors_and_validation():
    seq = UpdateSchedule.sequential(4)
    assert seq.groups == ((0,), (1,), (2,), (3,))
    par = UpdateSchedule.parallel(4)
    assert par.groups == ((0, 1, 2, 3),)
    cl = UpdateSchedule.clustered([(0, 1), (2, 3)])
    assert cl.n_aps == 4
    with pytest.raises(ValueError):
        UpdateSchedule("clustered", ((0, 1), (1, 2)))
    with pytest.raises(ValueError):
        UpdateSchedule("bogus", ((0,),))
    with pytest.raises(ValueError):
        UpdateSchedule.sequential(2, step_size=1.0).gamma(1)


def test_default_step_sizes_by_structure():
    assert UpdateSchedule.sequential(4).gamma(3) == 0.0
    assert UpdateSchedule.clustered([(n,) for n in range(4)]).gamma(3) == 0.0
    par = UpdateSchedule.parallel(4)
    assert par.gamma(2) == pytest.approx(damped_step_size(2, exponent=1.0))
    assert 0.0 <= par.gamma(1) < 1.0
    # a single AP degenerates to the undamped sequential schedule
    assert UpdateSchedule.parallel(1).gamma(5) == 0.0


def test_gain_snapshot_tracks_fresh_and_stale_rows():
    scenario, chan = small_setup(1)
    groups = UpdateSchedule.clustered(scenario.clusters).groups
    rng = scenario.drop_rng(0, 3)
    v_old = initial_decisions(chan, scenario.p_ap_w, rng)
    coeffs = coefficients_for(chan, v_old)
    book = PilotBook.dft(chan.n_ues)

    v = v_old.copy()
    for ui, group in enumerate(groups):
        expect = explicit_mixture(chan.h, v, v_old, groups, ui)
        got = assemble_g_tilde(chan, v)
        assert np.allclose(got, expect, atol=1e-12)
        v, coeffs, _ = time_step(chan, v, coeffs, group, "genie", 0.0,
                                 scenario.p_ap_w, scenario.p_ue_w, book)


def test_blend_trivial_cases():
    scenario, chan = small_setup(2)
    rng = scenario.drop_rng(0, 3)
    v0 = initial_decisions(chan, scenario.p_ap_w, rng)
    coeffs = coefficients_for(chan, v0)
    book = PilotBook.dft(chan.n_ues)

    v_fresh, _, _ = time_step(chan, v0, coeffs, [0], "genie", 0.0,
                              scenario.p_ap_w, scenario.p_ue_w, book)
    v_half, _, _ = time_step(chan, v0, coeffs, [0], "genie", 0.5,
                             scenario.p_ap_w, scenario.p_ue_w, book)
    blended = 0.5 * v0[0] + 0.5 * v_fresh[0]
    assert np.allclose(v_half[0], blended, atol=1e-12)
    # gamma = 1/2 with a zero fresh target halves the old value
    assert np.allclose(0.5 * 1.0 + 0.5 * 0.0, 0.5)


def test_time_step_locality():
    scenario, chan = small_setup(3)
    rng = scenario.drop_rng(0, 3)
    v0 = initial_decisions(chan, scenario.p_ap_w, rng)
    coeffs = coefficients_for(chan, v0)
    book = PilotBook.dft(chan.n_ues)
    group = [2, 5]
    v1, _, _ = time_step(chan, v0, coeffs, group, "ota", 0.3,
                         scenario.p_ap_w, scenario.p_ue_w, book)
    outside = [n for n in range(chan.n_aps) if n not in group]
    assert v1[outside].tobytes() == v0[outside].tobytes()
    assert not np.allclose(v1[group], v0[group])


@pytest.mark.parametrize("variant", ["sequential", "clustered", "parallel"])
def test_genie_equals_noiseless_ota(variant):
    scenario, chan = small_setup(4)
    if variant == "sequential":
        sched = UpdateSchedule.sequential(chan.n_aps)
    elif variant == "clustered":
        sched = UpdateSchedule.clustered(scenario.clusters)
    else:
        sched = UpdateSchedule.parallel(chan.n_aps)
    cfg = RunConfig(max_iterations=8)
    res_g = run(chan, sched, scenario.p_ap_w, scenario.p_ue_w, cfg,
                mode="genie", rng=scenario.drop_rng(0, 3))
    res_o = run(chan, sched, scenario.p_ap_w, scenario.p_ue_w, cfg,
                mode="ota", rng=scenario.drop_rng(0, 3))
    assert np.allclose(res_g.v_last, res_o.v_last,
                       atol=1e-8 * (1 + np.max(np.abs(res_g.v_last))))
    assert np.allclose(res_g.trace.sr_per_subcarrier,
                       res_o.trace.sr_per_subcarrier, rtol=1e-8)


def test_single_ap_variants_identical():
    scenario, chan = small_setup(5, n_aps=1, clusters=[[0]])
    cfg = RunConfig(max_iterations=10)
    traces = []
    for sched in (UpdateSchedule.sequential(1), UpdateSchedule.parallel(1),
                  UpdateSchedule.clustered([(0,)])):
        res = run(chan, sched, scenario.p_ap_w, scenario.p_ue_w, cfg,
                  mode="ota", rng=scenario.drop_rng(0, 3))
        traces.append(np.asarray(res.trace.sr_per_subcarrier))
    assert np.array_equal(traces[0], traces[1])
    assert np.array_equal(traces[0], traces[2])


def test_degenerate_clusterings_reproduce_other_variants():
    scenario, chan = small_setup(6)
    cfg = RunConfig(max_iterations=10)

    def trace_of(sched):
        res = run(chan, sched, scenario.p_ap_w, scenario.p_ue_w, cfg,
                  mode="ota", rng=scenario.drop_rng(0, 3))
        t = res.trace
        return np.array([t.sr_per_subcarrier, t.objective, t.decision_change])

    seq = trace_of(UpdateSchedule.sequential(chan.n_aps))
    singletons = trace_of(
        UpdateSchedule.clustered([(n,) for n in range(chan.n_aps)]))
    assert np.max(np.abs(seq - singletons)) <= 1e-12

    par = trace_of(UpdateSchedule.parallel(chan.n_aps))
    one_cluster = trace_of(UpdateSchedule.clustered([tuple(range(chan.n_aps))]))
    assert np.max(np.abs(par - one_cluster)) <= 1e-12


def test_sequential_descent_within_iteration():
    scenario, chan = small_setup(7)
    rng = scenario.drop_rng(0, 3)
    v = initial_decisions(chan, scenario.p_ap_w, rng)
    coeffs = coefficients_for(chan, v)
    book = PilotBook.dft(chan.n_ues)
    obj = [weighted_mse_objective(chan, v, coeffs)]
    for n in range(chan.n_aps):
        v, _, _ = time_step(chan, v, coeffs, [n], "genie", 0.0,
                            scenario.p_ap_w, scenario.p_ue_w, book)
        obj.append(weighted_mse_objective(chan, v, coeffs))
    assert np.all(np.diff(obj) <= 1e-10)


def test_run_converges_and_stays_feasible():
    scenario, chan = small_setup(8)
    tol = 1e-3 * np.sqrt(chan.n_aps * scenario.p_ap_w)
    res = run(chan, UpdateSchedule.sequential(chan.n_aps), scenario.p_ap_w,
              scenario.p_ue_w, RunConfig(max_iterations=300, tolerance=tol),
              mode="ota", rng=scenario.drop_rng(0, 3))
    assert res.trace.converged
    assert np.all(ap_powers(res.decisions) <= scenario.p_ap_w * (1 + 1e-8))
    assert np.all(ap_powers(res.v_last) <= scenario.p_ap_w * (1 + 1e-8))


def test_convergence_detection_stability():
    scenario, chan = small_setup(9)
    sched = UpdateSchedule.sequential(chan.n_aps)
    tol = 1e-3 * np.sqrt(chan.n_aps * scenario.p_ap_w)
    first = run(chan, sched, scenario.p_ap_w, scenario.p_ue_w,
                RunConfig(max_iterations=300, tolerance=tol), mode="genie",
                rng=scenario.drop_rng(0, 3))
    assert first.trace.converged
    t_conv = first.trace.iterations
    again = run(chan, sched, scenario.p_ap_w, scenario.p_ue_w,
                RunConfig(max_iterations=t_conv + 1, tolerance=0.0),
                mode="genie", rng=scenario.drop_rng(0, 3))
    assert again.trace.decision_change[t_conv - 1] <= tol
    assert again.trace.decision_change[t_conv] <= 2 * tol


def test_time_step_budget_truncates_runs():
    scenario, chan = small_setup(10)
    sched = UpdateSchedule.sequential(chan.n_aps)
    res = run(chan, sched, scenario.p_ap_w, scenario.p_ue_w,
              RunConfig(max_iterations=50, max_time_steps=3), mode="ota",
              rng=scenario.drop_rng(0, 3))
    assert res.time_steps == 3
    assert not res.trace.converged
    # only the three visited APs moved
    v0 = initial_decisions(chan, scenario.p_ap_w, scenario.drop_rng(0, 3))
    assert np.allclose(res.v_last[3:], v0[3:])


def test_trace_rows_and_overhead_counts():
    scenario, chan = small_setup(11)
    cfg = RunConfig(max_iterations=4)

    res = run(chan, UpdateSchedule.sequential(chan.n_aps), scenario.p_ap_w,
              scenario.p_ue_w, cfg, mode="ota", rng=scenario.drop_rng(0, 3))
    assert res.trace.dl_phases == [chan.n_aps] * res.trace.iterations

    res = run(chan, UpdateSchedule.clustered(scenario.clusters),
              scenario.p_ap_w, scenario.p_ue_w, cfg, mode="ota",
              rng=scenario.drop_rng(0, 3))
    assert res.trace.dl_phases == [scenario.n_clusters] * res.trace.iterations

    res = run(chan, UpdateSchedule.parallel(chan.n_aps), scenario.p_ap_w,
              scenario.p_ue_w, cfg, mode="ota", rng=scenario.drop_rng(0, 3))
    assert res.trace.dl_phases == [1] * res.trace.iterations
