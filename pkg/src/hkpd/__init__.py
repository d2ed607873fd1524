"""Heat-kernel persistence diagrams: embeddings, transposition tests and clustering."""

__version__ = "0.1.0"

from ._backend import BACKEND, COMPILED
from .errors import (DomainViolationError, HKPDError, IncompatibleEmbeddingError, InvalidInputError,
                     UnsupportedRequestError)
from .persistence import (Filtration, PersistenceDiagram, PointCloud, WeightedGraph, build_graph_filtration,
                          build_rips, compute_diagram, diagram_from_points)
from .spectral import (DomainMap, HKEmbedding, SmoothedField, SpectralBasis, embed, embed_many, evaluate_field,
                       fit_domain_map, hk_norm, l2_distance, make_basis)
from .inference import (AnovaChainState, GroupedSample, TestResult, TwoSampleChainState, chain_step_tanova,
                        chain_step_two_sample, pairwise_distances, permanova_baseline, tanova, two_sample_test)
from .clustering import Clustering, adjusted_rand_index, fit_score, topo_kmeans
from .simulate import KeyShapeSpec, StudyConfig, StudyReport, sample_key_shape

__all__ = [name for name in dir() if not name.startswith("_")]
