"""Random Apollonian packing: simulator, spatial index, and mean-field theory."""

__version__ = "0.1.0"

from .geometry import (BoxDomain, Sphere, cap_area, regularized_incomplete_beta,
                       signed_gap, unit_ball_volume, wall_gap)
from .bvh import BvhNode, SphereTree
from .packer import (Packing, PackingConfig, PackingFormatError, ProbeResult,
                     SaturationError, SnapshotSeries, default_alphas,
                     export_packing_csv, load_packing_csv, probe_insertions, run,
                     snapshot_grid)
from .meanfield import (ConvergenceError, ExponentPolynomial, MeanFieldSolution,
                        ModelValidityError, SurfaceModel, ValidityError,
                        fractal_dimension, insertion_cdf, insertion_cdf_affine,
                        lambda_alpha, moment_integral, reference_gammas,
                        solve_exponents, surface_coefficients)
from .analysis import (EnsembleSeries, FitResult, GammaLikelihood,
                       compare_probe_to_model, fit_asymptote, gamma_likelihood,
                       log_derivative, radius_cdf)

__all__ = [name for name in dir() if not name.startswith("_")]
