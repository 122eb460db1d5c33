from .network import (
    Layer,
    Network,
    explicit_jacobian,
    forward,
    jvp,
    jvp_tensor,
    param_grad,
    vjp,
    vjp_tensor,
)
from .tensor import NonFiniteError, Tape, Tensor, grad, memory_meter, no_grad

__all__ = [
    "Layer",
    "Network",
    "NonFiniteError",
    "Tape",
    "Tensor",
    "explicit_jacobian",
    "forward",
    "grad",
    "jvp",
    "jvp_tensor",
    "memory_meter",
    "no_grad",
    "param_grad",
    "vjp",
    "vjp_tensor",
]
