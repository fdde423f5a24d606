# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

from .scalar import Float64, Float32, Int64, Int32, UInt8

from .core import (
    DEFAULT_EPSILON,
    GamError,
    InvalidInput,
    NonFinite,
    ShapeMismatch,
    TooManyCenters,
    KTooLarge,
    EmptyBall,
    DegenerateNeighborhood,
    NonScalarLoss,
    DivergedLoss,
    ParseError,
    InconsistentColumns,
    PointCloud,
    NeighborhoodIndex,
    EdgeGeometry,
    GamConfig,
    GamParams,
    validate_cloud,
    init_params,
)

from .context_cpu import ContextCpu

from .context import Arg, Kernel, get_context_from_string, get_user_context

from .specialize_source import specialize_source

from .sampling import (
    GridIndex,
    farthest_point_sample,
    ball_query,
    knn,
    support_neighborhoods,
)

from .geometry import (
    GradientVectorSet,
    DepthGradientSet,
    NormalSet,
    edge_geometry,
    scalar_gradient,
    gradient_vectors,
    depth_gradients,
    pca_normals,
    symmetric_eigvals3,
    smallest_eigvec3,
    zenith_azimuth,
)

from . import autodiff as ad
from .autodiff import Tape, GradReport, backward, finite_difference_check

from .gam import (
    AttentionMatrix,
    NeighborFeatures,
    OutputFeatures,
    GamLayer,
    attention_weights,
    default_phi,
    aggregate,
    gam_forward,
    gam_layers,
)

from .bench import (
    BenchReport,
    bench_gam_overhead,
    bench_gradient_methods,
    make_bench_cloud,
)

from .demo import (
    ShapeSample,
    ShapeClassifier,
    TrainReport,
    generate_shapes,
    train_classifier,
    run_ablation,
)

from .fileio import CloudFile, read_cloud, write_cloud

from .general import JEncoder, _print

from .general import assert_allclose

from ._version import __version__
