"""Prescribed mean curvature flow of space-like graphs in generalized Robertson-Walker spacetimes."""
import os as _os

# GRWFLOW_THREADS caps the worker threads of the numerical backends (BLAS/OpenMP);
# it only takes effect when set before numpy is first imported.
_threads = _os.environ.get("GRWFLOW_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .errors import (AssumptionViolatedError, ConfigError, CorruptCheckpointError, GRWFlowError,  # noqa: E402
                     InvalidParametersError, MissingDataError, NotSpacelikeError, NumericalBlowupError,
                     WrongTopologyError)
from .flow import FlowConfig, FlowEngine, FlowRecord, PrescribedCurvature, restart, run_flow  # noqa: E402
from .graph import GeometrySnapshot, GraphState, build_snapshot  # noqa: E402
from .mesh import BaseMesh, make_mesh  # noqa: E402
from .warp import AmbientCurvature, WarpingFunction, eval_warp  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "AmbientCurvature", "AssumptionViolatedError", "BaseMesh", "ConfigError", "CorruptCheckpointError",
    "FlowConfig", "FlowEngine", "FlowRecord", "GRWFlowError", "GeometrySnapshot", "GraphState",
    "InvalidParametersError", "MissingDataError", "NotSpacelikeError", "NumericalBlowupError",
    "PrescribedCurvature", "WarpingFunction", "WrongTopologyError", "build_snapshot", "eval_warp",
    "make_mesh", "restart", "run_flow",
]
