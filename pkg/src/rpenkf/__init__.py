"""Ensemble Kalman filtering driven by second-order path increments."""

from .ensemble import Ensemble, GainSet, empirical_moments, gubinelli_contract
from .filters import (EmbeddedModel, FilterState, GaussianPrior, ParamDrift, RunRecord,
                      analytic_param_posterior, embed_state_parameter, enkf_step,
                      kalman_bucy_reference, mle_estimator, rp_enkf_step,
                      rp_mle_estimator, run_filter, scaled_drift)
from .liftestim import (AreaProcess, SubsampleLag, area_process, lag_diagnostics,
                        skew_correction, subsample_interpolate)
from .mckvlasov import ChaosConfig, chaos_experiment, wasserstein_1d
from .roughpath import (HoelderExponent, LiftedSeries, PathSeries, TimeGrid,
                        canonical_lift, chen_compose, hoelder_seminorm, load_lift_csv,
                        rough_distance, save_lift_csv, shift_by_bv, sym_skew_split)
from .sdesim import (DriftMap, FilterModel, SimulationError, Trajectory, drift_map,
                     driven_parameter_model, homogenized_mobility, integrated_coordinates,
                     simulate_filter_model, simulate_lorenz63, simulate_physical_bm,
                     simulate_twoscale)

__all__ = [name for name in dir() if not name.startswith("_")]
