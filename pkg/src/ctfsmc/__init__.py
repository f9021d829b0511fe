"""Coarse-to-fine sequential Monte Carlo for probabilistic programs."""

from .distributions import (BERNOULLI, Discrete, Distribution, ErpFamily, Pushforward,
                            bernoulli, decorrelate, from_log_weights, make_discrete, uniform)
from .errors import CtfError
from .inference import (Marginal, WeightedSampleSet, enumerate_model, estimate_expectation,
                        importance_sample, logmeanexp, resample, sequential_importance_resample,
                        total_variation)
from .program import Handle, ModelProgram, Store, address_relative, model
from .schemes import interval_coarsen, interval_refine, interval_scheme
from .transform import (CoarseningScheme, Lifter, Marginalizer, check_inverse_law,
                        coarse_to_fine)
from .values import IntInterval, Lattice

__version__ = "0.1.0"

__all__ = [
    "BERNOULLI", "CoarseningScheme", "CtfError", "Discrete", "Distribution", "ErpFamily",
    "Handle", "IntInterval", "Lattice", "Lifter", "Marginal", "Marginalizer", "ModelProgram",
    "Pushforward", "Store", "WeightedSampleSet", "address_relative", "bernoulli",
    "check_inverse_law", "coarse_to_fine", "decorrelate", "enumerate_model",
    "estimate_expectation", "from_log_weights", "importance_sample", "interval_coarsen",
    "interval_refine", "interval_scheme", "logmeanexp", "make_discrete", "model", "resample",
    "sequential_importance_resample", "total_variation", "uniform",
]
