"""Linear two-time-scale stochastic approximation under Markovian noise."""

from .constants import (RateConstants, compute_c1_c2, empirical_recursion_check,
                        psi_bound_curve, psi_constants, rate_constants,
                        theorem_bound_curve, transient_bound)
from .engine import (BatchSimulator, IterateState, MseCurves, ResidualState,
                     TrajectoryRecord, lyapunov_value, monte_carlo_mse,
                     reconstruct, residuals, run_trajectory, sa_step)
from .errors import (BudgetExceeded, ConfigError, Diverges, FeatureScale,
                     InsufficientData, NonFinite, NotErgodic, NotFound,
                     NotPositive, Overflow, SingularMatrix, TtssaError)
from .gtd import (FeatureMap, MarkovRewardProcess, bellman_fixed_point,
                  build_gtd_instance, exact_values, scale_features,
                  x_star_tracking_check)
from .markov import (ConstantMixing, FiniteMarkovChain, MixingProfile,
                     SampleStream, SampleTable, build_spread_table,
                     fit_geometric_constant, load_chain_table, mixing_profile,
                     mixing_time, next_sample, nominal_instance,
                     stationary_distribution, substream_seed)
from .problem import (AssumptionReport, ExactSolution, ProblemInstance,
                      SpectralSummary, exact_solution, reduced_matrix,
                      solution_residual, spectral_summary,
                      validate_assumptions)
from .ratefit import RateFit, fit_rate, fit_rate_csv
from .restart import (EpochLog, RestartConfig, budget_plain, budget_restarted,
                      epoch_length, fit_psi_surrogates, n_epochs,
                      run_restarted)
from .schedule import (Certification, StepFamily, StepSchedule, TransientIndex,
                       c0_estimate, k_star, validate_schedule)

__version__ = "0.1.0"
