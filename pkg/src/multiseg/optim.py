"""Parameter update rules operating on named parameter dicts."""
import logging
from dataclasses import dataclass, field
import numpy as np
from multiseg.errors import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First and second moment estimates per parameter, and the step counter."""

    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _check_aligned(params, grads):
    if set(params) != set(grads):
        missing = sorted(set(params) ^ set(grads))
        raise ShapeError("Parameters and gradients differ in names: %s" % missing)
    for name, value in params.items():
        if grads[name].shape != value.shape:
            raise ShapeError(
                "Gradient of '%s' has shape %s, parameter has %s"
                % (name, grads[name].shape, value.shape)
            )


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update with bias correction.

    `params` and `state` are updated in place; the step counter advances before the update, so
    the first call uses t = 1.

    Args:
        params (dict): Name to parameter array.
        grads (dict): Name to gradient array, same names and shapes as `params`.
        state (AdamState): Moment estimates.
        lr (float): Learning rate.

    Returns:
        tuple (dict, AdamState): `params` and `state`.

    """
    _check_aligned(params, grads)
    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for name, value in params.items():
        g = grads[name].astype(value.dtype, copy=False)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        if lr:
            m_hat = m / correction1
            v_hat = v / correction2
            value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(value.dtype)
    return params, state


def sgd_step(params, grads, state, lr):
    """Plain gradient descent; `state` is passed through untouched."""
    _check_aligned(params, grads)
    if lr:
        for name, value in params.items():
            value -= (lr * grads[name]).astype(value.dtype)
    return params, state


OPTIMIZERS = {"adam": adam_step, "sgd": sgd_step}
