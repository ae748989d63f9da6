"""Data-efficient quickest detection of outlying streams in sensor networks.

Per-sensor data-efficient CuSum detectors with sleep-credit skipping and
clamping, censored uplinks, max/sum/all fusion rules, Monte Carlo
estimation of delay and cost metrics, and an exact lattice oracle for
discrete models. Hot loops run in a compiled kernel when available, with
a bitwise-identical pure-Python fallback.
"""

from ._backend import available_backends, backend_name, set_backend
from .detectors import (DetectorState, censor, censor_binary, cusum_step,
                        decusum_should_sample, decusum_step, max_consecutive_skips)
from .errors import (CalibrationError, ConfigurationError, DomainError,
                     IncommensurableModelError, InfiniteDivergenceError)
from .fusion import (FusionPolicy, calibrate_threshold_mc, de_all_weights,
                     fusion_decide, threshold_for_far)
from .lattice import (LatticeModel, exact_far, exact_mean_stop, exact_pdc_ptc,
                      exact_renewal_quantities, lattice_build)
from .metrics import (Estimate, MetricsReport, RenewalQuantities, estimate_cadd,
                      estimate_far, estimate_pdc_ptc_direct, estimate_wadd_surrogate,
                      mu_for_pdc_target, pdc_bound_hinf, pdc_ptc_closed_form,
                      renewal_quantities_mc)
from .models import (Density, Discrete, Gaussian, Scenario, SensorModel,
                     kl_divergence, log_likelihood_ratio, lower_bound_delay, sample)
from .simulator import (DebugTrace, RunConfig, RunTrace, cusum_trajectory,
                        decusum_trajectory, run_batch, run_fractional_baseline,
                        run_once, sample_path_trace, stop_times_for_thresholds)

__version__ = "0.1.0"

__all__ = [
    "available_backends", "backend_name", "set_backend",
    "DetectorState", "censor", "censor_binary", "cusum_step",
    "decusum_should_sample", "decusum_step", "max_consecutive_skips",
    "CalibrationError", "ConfigurationError", "DomainError",
    "IncommensurableModelError", "InfiniteDivergenceError",
    "FusionPolicy", "calibrate_threshold_mc", "de_all_weights",
    "fusion_decide", "threshold_for_far",
    "LatticeModel", "exact_far", "exact_mean_stop", "exact_pdc_ptc",
    "exact_renewal_quantities", "lattice_build",
    "Estimate", "MetricsReport", "RenewalQuantities", "estimate_cadd",
    "estimate_far", "estimate_pdc_ptc_direct", "estimate_wadd_surrogate",
    "mu_for_pdc_target", "pdc_bound_hinf", "pdc_ptc_closed_form",
    "renewal_quantities_mc",
    "Density", "Discrete", "Gaussian", "Scenario", "SensorModel",
    "kl_divergence", "log_likelihood_ratio", "lower_bound_delay", "sample",
    "DebugTrace", "RunConfig", "RunTrace", "cusum_trajectory",
    "decusum_trajectory", "run_batch", "run_fractional_baseline",
    "run_once", "sample_path_trace", "stop_times_for_thresholds",
    "__version__",
]
