"""Coupling-function design and state-disturbance analysis for protective measurements."""

from .coupling import (Bump, Constant, CouplingSpec, EndpointDerivative, MeasurementWindow,
                       SeriesCoefficients, SinusoidalSeries, bump_normalization,
                       coupling_samples, endpoint_derivative, eval_coupling,
                       solve_series_coefficients)
from .dynamics import (ConvergenceStudy, EvolutionResult, IntegratorConfig, PerturbativeReport,
                       compare_perturbative, convergence_study, integrate_exact)
from .exceptions import (CancellationLimitError, ConvergenceRadiusError, IntegrationError,
                         ProtmeasError, QuadratureError, UndersampledError,
                         UnreliableDerivativeError)
from .fitting import (DecayFit, PowerLawDecay, SubexponentialDecay, asymptotic_bump_envelope,
                      fit_power_law, fit_subexponential)
from .perturbation import (TIERS, AmplitudeSet, OracleResult, SystemModel, amplitude_set,
                           disturbance_probability, first_order_amplitude, leading_order,
                           leading_order_first,
                           leading_order_higher, nested_amplitude_oracle,
                           total_leading_amplitude)
from .spectral import (Crossover, Envelope, SpectralCurve, analytic_spectrum,
                       bump_certified_limit, calibrate_bump, envelope_extract, find_crossover,
                       oscillation_grid, quadrature_spectrum, saddle_point_rate, smooth_envelope,
                       spectrum_curve, truncated_power_series, window_envelope, window_max)

__version__ = "0.1.0"
