"""Self-check suites behind the `validate` CLI command.

Each suite exercises one cross-cutting correctness property on small random
instances and returns a structured verdict; the release gate is every suite
passing.  The same routines back parts of the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import distributed, ota
from .oracles import (kkt_residual, local_objective, projected_gradient_solve,
                      random_instance)
from .scenario import desk_scenario, generate_drop
from .wmmse import ap_update, coefficients_for, group_terms
from .metrics import effective_gains


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def suite_closed_form(seed: int = 0, n_instances: int = 25,
                      obj_tol: float = 1e-6,
                      kkt_tol: float = 1e-6) -> CheckResult:
    """Closed-form + bisection vs. the projected-gradient oracle."""
    worst_obj, worst_kkt = 0.0, 0.0
    for i in range(n_instances):
        inst = random_instance(seed * 1000 + i)
        g = effective_gains(inst.chan, inst.v)
        terms = group_terms(inst.chan, inst.coeffs, [inst.ap], g)[0]
        v_new, solve = ap_update(terms, inst.v[inst.ap], inst.p_t)
        obj_kernel = local_objective(inst, v_new)
        _, obj_oracle = projected_gradient_solve(inst, tol=1e-11)
        rel = abs(obj_kernel - obj_oracle) / max(1.0, abs(obj_oracle))
        worst_obj = max(worst_obj, rel)
        res = kkt_residual(inst, v_new, solve.mu)
        worst_kkt = max(worst_kkt, res / (1.0 + np.linalg.norm(v_new)))
    ok = bool(worst_obj <= obj_tol and worst_kkt <= kkt_tol)
    return CheckResult("closed_form_vs_oracle", ok,
                       f"max objective gap {worst_obj:.2e}, "
                       f"max KKT residual {worst_kkt:.2e}")


def suite_ota_fidelity(seed: int = 0, n_instances: int = 25,
                       tol: float = 1e-9) -> CheckResult:
    """Noiseless pilot-based estimates vs. genie values."""
    worst = 0.0
    for i in range(n_instances):
        inst = random_instance(seed * 2000 + i)
        chan = inst.chan
        coeffs = coefficients_for(chan, inst.v)
        book = ota.PilotBook.dft(chan.n_ues)
        g = effective_gains(chan, inst.v)
        dl = ota.downlink_phase(chan, inst.v, book, inst.p_t)
        est_terms, _ = ota.uplink_phase(chan, coeffs, dl, book, p_ue=1.0)
        genie = group_terms(chan, coeffs, np.arange(chan.n_aps), g)
        scale = max(1e-30, float(np.max(np.abs(g))))
        worst = max(worst, float(np.max(np.abs(dl.gains - g))) / scale)
        for t_est, t_ref in zip(est_terms, genie):
            for x, y in ((t_est.a, t_ref.a), (t_est.d, t_ref.d),
                         (t_est.m, t_ref.m)):
                denom = max(1e-30, float(np.max(np.abs(y))))
                worst = max(worst, float(np.max(np.abs(x - y))) / denom)
    return CheckResult("ota_fidelity", bool(worst <= tol),
                       f"max relative estimate error {worst:.2e}")


def suite_degeneracy(seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """Singleton clustering reproduces sequential; one cluster reproduces
    parallel, trace for trace."""
    scenario = desk_scenario(seed=seed)
    chan = generate_drop(scenario, 0)
    cfg = distributed.RunConfig(max_iterations=12)
    worst = 0.0
    pairs = [
        (distributed.UpdateSchedule.sequential(chan.n_aps),
         distributed.UpdateSchedule.clustered([(n,) for n in range(chan.n_aps)])),
        (distributed.UpdateSchedule.parallel(chan.n_aps),
         distributed.UpdateSchedule.clustered([tuple(range(chan.n_aps))])),
    ]
    for ref_sched, cl_sched in pairs:
        for mode in ("genie", "ota"):
            rng_a = scenario.drop_rng(0, 3)
            rng_b = scenario.drop_rng(0, 3)
            res_a = distributed.run(chan, ref_sched, scenario.p_ap_w,
                                    scenario.p_ue_w, cfg, mode=mode, rng=rng_a)
            res_b = distributed.run(chan, cl_sched, scenario.p_ap_w,
                                    scenario.p_ue_w, cfg, mode=mode, rng=rng_b)
            for attr in ("sr_per_subcarrier", "objective", "decision_change"):
                a = np.asarray(getattr(res_a.trace, attr))
                b = np.asarray(getattr(res_b.trace, attr))
                if a.shape != b.shape:
                    return CheckResult("degeneracy_equivalence", False,
                                       f"trace lengths differ for {attr}")
                if a.size:
                    worst = max(worst, float(np.max(np.abs(a - b))))
    return CheckResult("degeneracy_equivalence", bool(worst <= tol),
                       f"max trace deviation {worst:.2e}")


def run_all(seed: int = 0) -> list[CheckResult]:
    return [
        suite_closed_form(seed),
        suite_ota_fidelity(seed),
        suite_degeneracy(seed),
    ]
