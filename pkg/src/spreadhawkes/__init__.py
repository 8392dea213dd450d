"""State-dependent Hawkes modelling of bid-ask spread dynamics.

The spread, in ticks, is a piecewise-constant integer process >= 1 whose
signed jumps follow a mutually exciting point process; a spread-dependent
multiplier on each intensity enforces the hard floor at one tick and the
mean reversion seen in order-book data.  The package covers exact
simulation by thinning, maximum-likelihood estimation, ergodicity
condition checks, the goodness-of-fit statistics battery, and Monte-Carlo
short-horizon forecasting with benchmark predictors.
"""

from .errors import (ConfigurationError, DataFormatError, ExplosionError,
                     InitializationError, SpreadInvariantError)
from .model import (ExcitationState, JumpEvent, KernelParams, ModelSpec,
                    SpreadPath, StateFunctions, advance, apply_jump,
                    cold_state, event_index, event_size, event_sizes,
                    intensity, spec_from_dict, spec_from_json, spec_hash,
                    spec_to_dict, spec_to_json, state_at, total_intensity)
from .simulate import (DecayingBaseline, fosset_alpha_critical, preset,
                       preset_fosset, preset_zheng, simulate,
                       simulate_from_state, stream_generator)
from .data import Dataset, generate_synthetic, load_dataset, save_dataset
from .likelihood import (FitConfig, FitReport, SpecGradient,
                         compensator_at_events, default_init, fit,
                         free_param_count, gradient, log_likelihood,
                         rescaled_increments)
from .stability import (EtaResult, StabilityReport, check_general, check_k1,
                        construct_eta)
from .stats import (AcfCurve, AcvCurve, Histogram, acv, attained_transitions,
                    calendar_distribution, event_distribution,
                    inter_event_times, jump_size_distribution,
                    kernel_curve, kernel_influence, log_time_grid, qq_points,
                    recommend_k, spread_autocorrelation)
from .forecast import (AcdpParams, EvaluationConfig, EvaluationResult,
                       ForecastRequest, ForecastResult, acdp_fit,
                       acdp_loglik, acdp_predict, acdp_simulate,
                       double_poisson_logpmf, evaluate_predictors,
                       last_predict, monte_carlo_forecast)

__version__ = "0.1.0"
