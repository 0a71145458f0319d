"""Finite-difference verification of analytic gradients."""
import logging
from collections import namedtuple
import numpy as np
from multiseg.errors import ValidationError

logger = logging.getLogger(__name__)

#: Outcome of a gradient check. `errors` maps tensor name ("input" or a parameter name) to the
#: largest relative error seen in that tensor; `passed` tells if all are within tolerance.
GradCheckReport = namedtuple("GradCheckReport", ["errors", "tolerance", "passed"])


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def _pick_indices(size, max_checks, rng):
    if max_checks is None or max_checks >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=max_checks, replace=False))


def finite_difference_check(
    layer_forward,
    layer_backward,
    params,
    x,
    epsilon=1e-3,
    tolerance=1e-3,
    seed=0,
    max_checks=None,
    dtype=np.float64,
):
    """Compare analytic layer gradients against central differences.

    The layer output is reduced to a scalar with a fixed random weighting, so every output
    element contributes. Inputs and parameters are promoted to `dtype` before evaluation.

    Args:
        layer_forward (callable): `layer_forward(x, params) -> output`.
        layer_backward (callable): `layer_backward(x, params, upstream) -> LayerGrad`.
        params (dict): Parameter name to tensor. May be empty.
        x (ndarray): Layer input.
        epsilon (float, optional): Central difference step. Defaults to 1e-3.
        tolerance (float, optional): Maximum accepted relative error. Defaults to 1e-3.
        seed (int, optional): Seed for the output weighting and element sampling. Defaults to 0.
        max_checks (int, optional): Check at most this many elements per tensor. Defaults to
            None (all elements).
        dtype (numpy dtype, optional): Evaluation dtype. Defaults to np.float64.

    Returns:
        GradCheckReport: Per-tensor maximum relative error. Failures are reported, not raised.

    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be > 0, got %s" % epsilon)
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=dtype)
    params = {name: np.array(p, dtype=dtype) for name, p in params.items()}

    output = layer_forward(x, params)
    weights = rng.standard_normal(np.shape(output)).astype(dtype)

    def objective():
        return float(np.sum(np.asarray(layer_forward(x, params)) * weights))

    grads = layer_backward(x, params, weights)
    analytic = dict(grads.param_grads)
    analytic["input"] = grads.input_grad
    tensors = dict(params)
    tensors["input"] = x

    errors = {}
    for name, tensor in tensors.items():
        flat = tensor.reshape(-1)
        expected = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        idx = _pick_indices(flat.size, max_checks, rng)
        numeric = np.empty(idx.size)
        for pos, i in enumerate(idx):
            original = flat[i]
            flat[i] = original + epsilon
            f_plus = objective()
            flat[i] = original - epsilon
            f_minus = objective()
            flat[i] = original
            numeric[pos] = (f_plus - f_minus) / (2 * epsilon)
        errors[name] = float(np.max(relative_error(expected[idx], numeric)))
        logger.debug("Gradient check '%s': max relative error %.3g", name, errors[name])

    passed = all(err <= tolerance for err in errors.values())
    return GradCheckReport(errors, tolerance, passed)


def model_gradient_check(
    model, batch, targets, n_samples=10, epsilon=1e-6, tolerance=2e-3, seed=0
):
    """Check `unet.loss_and_grads` against central differences of the full model loss.

    The model is promoted to float64 and `n_samples` random parameter elements are
    perturbed, spread over all parameter tensors.

    Returns:
        GradCheckReport: Errors keyed by "<parameter>[<flat index>]".

    """
    # Local import, unet builds on the layers this module verifies
    from multiseg import unet

    rng = np.random.default_rng(seed)
    probe = model.astype(np.float64)
    batch = np.asarray(batch, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    _, grads = unet.loss_and_grads(probe, batch, targets)

    names = list(probe.params)
    sizes = np.array([probe.params[n].size for n in names])
    picks = rng.choice(sizes.sum(), size=min(n_samples, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    errors = {}
    for pick in np.sort(picks):
        t = int(np.searchsorted(offsets, pick, side="right") - 1)
        name, i = names[t], int(pick - offsets[t])
        flat = probe.params[name].reshape(-1)
        original = flat[i]
        flat[i] = original + epsilon
        f_plus = unet.loss(probe, batch, targets)
        flat[i] = original - epsilon
        f_minus = unet.loss(probe, batch, targets)
        flat[i] = original
        numeric = (f_plus - f_minus) / (2 * epsilon)
        analytic = grads[name].reshape(-1)[i]
        errors["%s[%d]" % (name, i)] = float(relative_error(analytic, numeric))

    passed = all(err <= tolerance for err in errors.values())
    return GradCheckReport(errors, tolerance, passed)
