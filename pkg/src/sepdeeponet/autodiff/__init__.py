"""Forward-mode hyper-dual derivatives and tape-based reverse mode."""

from . import tape as ops
from .hyperdual import HyperDual, jvp2, lift
from .tape import Tape, Var, grad_params, value_and_grad

__all__ = [
    "HyperDual",
    "Tape",
    "Var",
    "grad_params",
    "grad_params_through_jvp2",
    "jvp2",
    "lift",
    "ops",
    "value_and_grad",
]


def grad_params_through_jvp2(loss, params):
    """Parameter gradient of a loss whose evaluation calls :func:`jvp2`.

    Tape nodes become the hyper-dual components, so the reverse sweep
    differentiates through the input derivatives as well.
    """
    return grad_params(loss, params)
