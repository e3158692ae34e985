"""Random walks on conditioned Galton-Watson trees and Brownian motion on their continuum limits."""

from .discrete_tree import OrderedTree, sample_gw_conditioned
from .excursion import Excursion, sample_brownian_excursion
from .metric_tree import MetricTree, TreePoint, reduced_tree_from_excursion

__version__ = "0.1.0"

__all__ = [
    "Excursion",
    "MetricTree",
    "OrderedTree",
    "TreePoint",
    "reduced_tree_from_excursion",
    "sample_brownian_excursion",
    "sample_gw_conditioned",
]
