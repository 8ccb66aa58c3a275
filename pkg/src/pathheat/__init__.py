"""pathheat: stochastic heat flow on discrete Riemannian path space."""

__version__ = "0.1.0"

from .geometry import Euclidean, Hyperbolic, Manifold, Sphere, Torus, make_manifold
from .pathgrid import DiscretePath, FramePath, Partition, make_path

__all__ = [
    "Euclidean",
    "Hyperbolic",
    "Manifold",
    "Sphere",
    "Torus",
    "make_manifold",
    "DiscretePath",
    "FramePath",
    "Partition",
    "make_path",
    "__version__",
]
