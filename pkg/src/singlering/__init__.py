"""Numerical laboratory for Haar-rotated matrices, the Single Ring radii and
Monte Carlo checks of the Dedieu-Shub inequality."""

__version__ = "0.1.0"

from .conjecture import (
    ConcentrationStats, ConjectureReport, conjecture_report, estimate_lhs, estimate_rhs,
    grassmann_distortion, log_top_eigs, single_ring_trial, sphere_pushforward_stats,
)
from .ensembles import (
    FiniteAtoms, SpectralLaw, TwoAtom, UniformInterval, condition_check, parse_law,
    quantile_matrix, rotate_ensemble,
)
from .linalg import Matrix, NumericalError, eigenvalues, qr_unitary, singular_values, spectral_radius
from .measures import (
    EmpiricalMeasure, RingRadii, annulus_coverage, empirical_eigenvalues, empirical_singulars,
    levy_prokhorov, ring_radii,
)
from .sampling import Group, SeedSpec, sample_ginibre, sample_grassmann_frame, sample_haar, sample_sphere
from .stats import MCEstimate, RunningStats
