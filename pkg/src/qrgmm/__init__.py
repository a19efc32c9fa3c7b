"""Generative metamodels from quantile regressions on a grid of levels.

Fit linear quantile regressions at tau_j = j/m, then sample by evaluating
the interpolated conditional quantile function at uniform variates.
"""
from ._kernels import BACKEND
from .core import (BasisSpec, Dataset, QuantileGrid, SeededRng, default_m, expand_basis,
                   identity_basis, make_grid, polynomial_basis, read_dataset_csv,
                   validate_dataset, write_dataset_csv)
from .errors import (ConfigError, CorruptFile, DimensionMismatch, EmptySample, FormatVersionMismatch,
                     InvalidEps, InvalidM, InvalidTau, MissingConditioner, NonFinite, NotConverged,
                     NumericalError, QrgmmError, RankDeficient, SingletonSd)
from .metamodel import (GenerativeMetamodel, QuantileCoefficientTable, crossing_frequency, fit_grid,
                        generate, generate_rows, implied_cdf, interpolate_coefficients,
                        model_from_coefficients, predict_quantile, rearrange)
from .metrics import MetricReport, ks_two_sample, ks_vs_cdf, summary_stats, wasserstein_1d
from .multioutput import SequentialModel, fit_multi, generate_multi
from .nnqr import MlpSpec, NnQuantileModel, fit_nn_grid, nn_generate, smoothed_pinball
from .persistence import load_model, save_model
from .solver import FitResult, SolverOptions, fit, pinball_loss
from .testbeds import (BIVARIATE, TP1, TP2, TestProblem, bivariate_quantiles, laplace_quantile,
                       normal_quantile, sample_dataset, tp1_quantile, tp2_quantile)

__version__ = "0.1.0"
