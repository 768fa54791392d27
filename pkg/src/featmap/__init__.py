"""featmap: manifold embeddings that carry tangent frames and feature importance."""

from .config import RunConfig
from .errors import (DataError, DegenerateFrameError, FeatmapError, GraphError,
                     OptimizationDiverged, ParameterError, UnsupportedDimension)
from .frame_embed import FrameField, optimize_frames, orthonormalize, tangent_similarities
from .io import Dataset, load_matrix, read_embedding, write_embedding
from .knn_graph import NeighborLists, SimilarityGraph, build_knn, similarity_graph
from .metrics import MetricReport, evaluate
from .projection import EmbeddingResult, embed, fit_shape_params
from .tangent import TangentBundle, TangentFrame, estimate_frames, feature_importance

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "Dataset", "EmbeddingResult", "FrameField", "MetricReport", "NeighborLists",
    "SimilarityGraph", "TangentBundle", "TangentFrame",
    "build_knn", "similarity_graph", "estimate_frames", "feature_importance",
    "tangent_similarities", "optimize_frames", "orthonormalize",
    "fit_shape_params", "embed", "evaluate", "load_matrix", "read_embedding", "write_embedding",
    "FeatmapError", "ParameterError", "DataError", "DegenerateFrameError", "GraphError",
    "OptimizationDiverged", "UnsupportedDimension",
]
