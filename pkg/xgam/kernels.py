# copyright ################################# #
# This file is part of the Xgam Package.      #
# Copyright (c) Xgam developers, 2024.        #
# ########################################### #

import logging
import tempfile
from pathlib import Path

from .context import Arg, Kernel
from .scalar import Float64, Int64, UInt8

log = logging.getLogger(__name__)

_pkg_root = Path(__file__).parent.absolute()

GAM_KERNELS_SOURCE = _pkg_root / "headers" / "gam_kernels.h"

gam_kernel_descriptions = {
    "gam_edge_geometry": Kernel(
        args=[
            Arg(Int64, name="n_edges"),
            Arg(Float64, pointer=True, const=True, name="coords"),
            Arg(Int64, pointer=True, const=True, name="edge_center"),
            Arg(Int64, pointer=True, const=True, name="edge_neighbor"),
            Arg(Float64, name="eps"),
            Arg(Float64, pointer=True, name="rel"),
            Arg(Float64, pointer=True, name="dist"),
            Arg(Float64, pointer=True, name="grad"),
        ],
        n_threads="n_edges",
    ),
    "gam_pca_normals": Kernel(
        args=[
            Arg(Int64, name="n_edges"),
            Arg(Int64, name="k_support"),
            Arg(Float64, pointer=True, const=True, name="coords"),
            Arg(Int64, pointer=True, const=True, name="support"),
            Arg(Float64, name="rel_tol"),
            Arg(Float64, pointer=True, name="normals"),
            Arg(UInt8, pointer=True, name="defined"),
        ],
        n_threads="n_edges",
    ),
    "gam_farthest_point_sample": Kernel(
        args=[
            Arg(Int64, name="n_points"),
            Arg(Int64, name="n_centers"),
            Arg(Int64, name="first"),
            Arg(Float64, pointer=True, const=True, name="coords"),
            Arg(Float64, pointer=True, name="min_d2"),
            Arg(Int64, pointer=True, name="out"),
        ],
    ),
    "gam_ball_query": Kernel(
        args=[
            Arg(Int64, name="n_centers"),
            Arg(Int64, name="n_points"),
            Arg(Int64, name="k"),
            Arg(Float64, name="r2"),
            Arg(Float64, pointer=True, const=True, name="coords"),
            Arg(Int64, pointer=True, const=True, name="center_ids"),
            Arg(Int64, pointer=True, name="out"),
            Arg(Int64, pointer=True, name="counts"),
        ],
        n_threads="n_centers",
    ),
    "gam_knn": Kernel(
        args=[
            Arg(Int64, name="n_centers"),
            Arg(Int64, name="n_points"),
            Arg(Int64, name="k"),
            Arg(Float64, pointer=True, const=True, name="coords"),
            Arg(Int64, pointer=True, const=True, name="center_ids"),
            Arg(Float64, pointer=True, name="best_d2"),
            Arg(Int64, pointer=True, name="out"),
        ],
        n_threads="n_centers",
    ),
}


def get_kernels(context):
    """Kernels of ``context``, compiling the GAM kernels on first use."""
    missing = [
        name for name in gam_kernel_descriptions if name not in context.kernels
    ]
    if missing:
        log.debug(f"Building {missing} for {context}")
        with tempfile.TemporaryDirectory() as containing_dir:
            kernels = context.build_kernels(
                kernel_descriptions=gam_kernel_descriptions,
                sources=[GAM_KERNELS_SOURCE],
                containing_dir=containing_dir,
            )
        context.kernels.update(kernels)
    return context.kernels
