"""Resource-block allocation for wideband cell-free OFDM networks.

Library layout:

- :mod:`cellfree_rb.scenario`: network descriptions and reproducible drops
- :mod:`cellfree_rb.metrics`: gains, SINR, rates, error metrics
- :mod:`cellfree_rb.wmmse`: the per-AP closed-form kernel and the
  centralized solver
- :mod:`cellfree_rb.ota`: pilot-based over-the-air information exchange
- :mod:`cellfree_rb.distributed`: sequential / clustered / parallel solvers
- :mod:`cellfree_rb.learned`: features, datasets and decision evaluation
  for externally trained allocators
- :mod:`cellfree_rb.cli`: experiment runner (`cellfree-rb` command)
"""

from .scenario import (ChannelRealization, Scenario, desk_scenario,
                       generate_drop, load_scenario, noise_power_dbm,
                       pathloss_db, save_scenario)
from .metrics import (UeCoefficients, ap_powers, check_power_feasible,
                      effective_gains, mse, sinr, sum_rate,
                      sum_rate_per_subcarrier, weighted_mse_objective)
from .wmmse import (ApUpdateTerms, CentralizedConfig, LagrangeSolve, Trace,
                    ap_closed_form, ap_terms_direct, ap_update,
                    centralized_wmmse, coefficients_for, initial_decisions,
                    solve_mu, update_u, update_w)
from .ota import (GainEstimates, OverheadCounts, PilotBook, PilotNoiseConfig,
                  downlink_phase, genie_gain_estimates, overhead_accounting,
                  ue_coefficient_update, uplink_phase)
from .distributed import (RunConfig, RunResult, UpdateSchedule,
                          assemble_g_tilde, run, time_step)
from .learned import (Dataset, EvaluationReport, FeatureArrays, RolloutConfig,
                      decision_features, evaluate_decisions, export_dataset,
                      import_decisions, load_dataset, postprocess_decision,
                      write_decisions)

__version__ = "0.1.0"
