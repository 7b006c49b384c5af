"""Matrix-free spectral-norm regularization of network Jacobians and Hessians."""

from .errors import ContractError, DimensionError, NumericError
from .network import (
    Network,
    TapedNetwork,
    forward,
    hvp,
    jvp,
    load_checkpoint,
    param_grad,
    save_checkpoint,
    value_and_param_grad,
    vjp,
)

__all__ = [
    "ContractError",
    "DimensionError",
    "NumericError",
    "Network",
    "TapedNetwork",
    "forward",
    "hvp",
    "jvp",
    "load_checkpoint",
    "param_grad",
    "save_checkpoint",
    "value_and_param_grad",
    "vjp",
]
