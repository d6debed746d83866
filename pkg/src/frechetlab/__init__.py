"""Frechet means of Gaussian marks on Poisson point processes.

Closed-form Gaussian distances, barycenter solvers, marked PPP sampling,
concentration-bound validators, semantic compression sizing and a
Frechet-UCB bandit harness.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .gaussian_manifold import (  # noqa: F401
    Gaussian,
    MetricKind,
    SpdMatrix,
    affine_invariant_distance,
    fisher_rao_distance_sq,
    spd_log,
    spd_sqrt,
    wasserstein2_distance_sq,
)
from .frechet_solvers import (  # noqa: F401
    WeightedGaussianSet,
    karcher_mean_spd,
    mean_component,
    precision_weighted_mean,
    wasserstein_barycenter,
)
from .rng import StreamFactory, substream  # noqa: F401
