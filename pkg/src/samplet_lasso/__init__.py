"""Samplet-based kernel compression, adaptive subsampling and sparse kernel regression."""
from .cluster_tree import ClusterTree, build_cluster_tree
from .compression import CompressionConfig, assemble_compressed_rect, assemble_compressed_square
from .experiments import TEST_SPECS, fit_pipeline, relative_l2_error, run_test
from .kernel import KernelDictionary, KernelModel, LengthscaleSchedule
from .lasso_solver import (ContinuationConfig, LassoProblem, OnlineSVD, TRConfig,
                           continuation_solve, tr_ssn)
from .samplets import (SampletBasis, forward_transform, inverse_transform,
                       samplet_basis_for_points)
from .subsample import subsample_points

__version__ = "0.1.0"

__all__ = [
    "ClusterTree", "build_cluster_tree",
    "CompressionConfig", "assemble_compressed_square", "assemble_compressed_rect",
    "KernelModel", "KernelDictionary", "LengthscaleSchedule",
    "SampletBasis", "samplet_basis_for_points", "forward_transform", "inverse_transform",
    "subsample_points",
    "LassoProblem", "OnlineSVD", "TRConfig", "ContinuationConfig", "tr_ssn",
    "continuation_solve",
    "TEST_SPECS", "fit_pipeline", "run_test", "relative_l2_error",
]
