"""Dense-tensor autodiff core: the op catalog, reverse-mode tape, Adam,
and a finite-difference gradient checker.

Tensors are plain numpy arrays, NCHW row-major, float32 on the fast path
(float64 available for checking via Graph(dtype=np.float64)).
"""

from .adam import AdamState, adam_step
from .graph import ContractError, Graph, Node
from .gradcheck import gradcheck, numeric_gradient, relative_error
from .ops import OP_CATALOG, ShapeError, conv_out_size

__all__ = [
    "AdamState",
    "ContractError",
    "Graph",
    "Node",
    "OP_CATALOG",
    "ShapeError",
    "adam_step",
    "conv_out_size",
    "gradcheck",
    "numeric_gradient",
    "relative_error",
]
