"""Randomly switching diffusion on weighted and metric graphs."""

from .graph_core import (
    OperatorModel,
    WeightedGraph,
    build_graph,
    connected_components,
    intersection_graphs,
    laplacian,
    rayleigh_quotient,
    union_graphs,
)
from .propagator import Ensemble, deviation_series, propagate
from .semi_markov import HoldingDistribution, SemiMarkovSpec, sample_trajectory
from .spectral import eigendecompose, evolve, intersection_projector, kernel_projector

__version__ = "0.1.0"
