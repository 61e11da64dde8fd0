"""Scalar activation and link functions with two derivatives."""
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

C2 = "C2_or_better"
WEAK_SECOND = "weak_second_derivative"
WEAK_FIRST = "weak_first_derivative"


class WeakDerivativeWarning(UserWarning):
    """Raised when a second derivative is requested from a function whose
    first derivative already has jumps (only the zero convention is returned)."""


@dataclass(frozen=True)
class ScalarFunction:
    name: str
    value: Callable
    deriv1: Callable
    deriv2: Callable
    smoothness: str = C2
    growth: float = 0.0
    kinks: tuple = ()

    @property
    def second_derivative_reliable(self):
        return self.smoothness != WEAK_FIRST

    def __call__(self, x):
        return self.value(x)


def apply(f, M, order=0):
    M = np.asarray(M, dtype=float)
    if order == 0:
        return f.value(M)
    if order == 1:
        return f.deriv1(M)
    if order == 2:
        if f.smoothness == WEAK_FIRST:
            warnings.warn(f"{f.name}: second derivative uses the zero convention",
                          WeakDerivativeWarning, stacklevel=2)
        return f.deriv2(M)
    raise ValueError(f"order must be 0, 1 or 2, got {order}")


def _sigmoid(x):
    # tanh form is overflow-free
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _sigmoid_d1(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _sigmoid_d2(x):
    s = _sigmoid(x)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def _tanh_d1(x):
    return 1.0 - np.tanh(x) ** 2


def _tanh_d2(x):
    th = np.tanh(x)
    return -2.0 * th * (1.0 - th ** 2)


def _srelu(x):
    return np.where(x >= 1.0, x - 0.5, np.where(x > 0.0, 0.5 * x * x, 0.0))


def _srelu_d1(x):
    return np.where(x >= 1.0, 1.0, np.where(x > 0.0, x, 0.0))


def _srelu_d2(x):
    # left limits at the kinks: 0 at x = 0, 1 at x = 1
    return ((x > 0.0) & (x <= 1.0)).astype(float)


def _as_float(x):
    return np.asarray(x, dtype=float)


_REGISTRY = {
    "identity": ScalarFunction(
        "identity", lambda x: _as_float(x).copy(), lambda x: np.ones_like(_as_float(x)),
        lambda x: np.zeros_like(_as_float(x)), C2, 1.0),
    "sigmoid": ScalarFunction(
        "sigmoid", lambda x: _sigmoid(_as_float(x)), lambda x: _sigmoid_d1(_as_float(x)),
        lambda x: _sigmoid_d2(_as_float(x)), C2, 0.0),
    "tanh": ScalarFunction(
        "tanh", lambda x: np.tanh(_as_float(x)), lambda x: _tanh_d1(_as_float(x)),
        lambda x: _tanh_d2(_as_float(x)), C2, 0.0),
    "relu": ScalarFunction(
        "relu", lambda x: np.maximum(_as_float(x), 0.0),
        lambda x: (_as_float(x) > 0.0).astype(float),
        lambda x: np.zeros_like(_as_float(x)), WEAK_FIRST, 1.0, (0.0,)),
    "smoothed_relu": ScalarFunction(
        "smoothed_relu", lambda x: _srelu(_as_float(x)), lambda x: _srelu_d1(_as_float(x)),
        lambda x: _srelu_d2(_as_float(x)), WEAK_SECOND, 1.0, (0.0, 1.0)),
}

IDENTITY = _REGISTRY["identity"]


def names():
    return tuple(_REGISTRY)


def registry_get(name):
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown activation {name!r}; choose from {sorted(_REGISTRY)}") from None


def layer_acts(hidden, L):
    """Activation tuple indexed by layer 0..L: identity at both ends."""
    if L < 2:
        raise ValueError("need L >= 2")
    f = registry_get(hidden) if isinstance(hidden, str) else hidden
    return (IDENTITY,) + (f,) * (L - 1) + (IDENTITY,)
