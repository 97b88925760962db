"""Density-matrix simulator of central-spin feedback on a nuclear-spin ensemble.

The electron senses the Overhauser field in a Ramsey window and corrects it
with a Hartmann-Hahn flip-flop, cycle after cycle.  The ensemble is
represented by a set of Dicke manifolds evolved independently and averaged
with their statistical weights.
"""
__version__ = "0.1.0"

from .dicke import (ConfigError, EnsembleModel, ManifoldSpec, ManifoldState, Species,
                    degeneracy, sample_manifolds, thermal_manifold, weight_approx,
                    weight_exact)
from .channels import NoiseParams
from .engine import (Ablations, FeedbackConfig, SequenceResult, TauSchedule, drag_lockpoint,
                     run_cycle, run_sequence)
from .kernels import BACKEND
from .probe import (FidTrace, FitResult, SpectralDistribution, estimate_N, extract_p,
                    fft_to_distribution, fit_stretched_exponential, fwhm, lddp_entropy,
                    synthesize_fid)
from .semiclassical import SemiclassicalParams

__all__ = [
    "BACKEND", "Ablations", "ConfigError", "EnsembleModel", "FeedbackConfig", "FidTrace",
    "FitResult", "ManifoldSpec", "ManifoldState", "NoiseParams", "SemiclassicalParams",
    "SequenceResult", "Species", "SpectralDistribution", "TauSchedule", "degeneracy",
    "drag_lockpoint", "estimate_N", "extract_p", "fft_to_distribution",
    "fit_stretched_exponential", "fwhm", "lddp_entropy", "run_cycle", "run_sequence",
    "sample_manifolds", "synthesize_fid", "thermal_manifold", "weight_approx", "weight_exact",
]
