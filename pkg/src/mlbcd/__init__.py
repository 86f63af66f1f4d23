"""Multilevel optimization as block-coordinate descent, for Galerkin
quadratic problems and physics-informed network training."""

import os

# Multi-threaded XLA reductions change the last bits of loss components, so
# traces would depend on the thread pool.  Pin one intra-op thread unless the
# caller configured it; this only takes effect if no JAX computation ran yet.
if "intra_op_parallelism_threads" not in os.environ.get("XLA_FLAGS", ""):
    os.environ["XLA_FLAGS"] = (os.environ.get("XLA_FLAGS", "")
                               + " --xla_cpu_multi_thread_eigen=false intra_op_parallelism_threads=1").strip()

import jax  # noqa: E402

# Loss levels reached by PINN training are far below float32 resolution.
jax.config.update("jax_enable_x64", True)

from mlbcd.exceptions import (  # noqa: E402
    ConfigError,
    DescentError,
    DimensionError,
    GeometryError,
    MLBCDError,
    NonFiniteError,
    NotSPDError,
    RankDeficientError,
    SelectionError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DescentError",
    "DimensionError",
    "GeometryError",
    "MLBCDError",
    "NonFiniteError",
    "NotSPDError",
    "RankDeficientError",
    "SelectionError",
]
