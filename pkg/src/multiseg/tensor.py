"""Dense tensor layers with explicit forward and backward passes.

Tensors are plain numpy arrays laid out as (N, C, H, W). Layers compute in the dtype of their
input (float32 unless a caller promotes to float64 for gradient checking) and never mutate
their arguments.
"""
import logging
from collections import namedtuple
import numpy as np
from multiseg.errors import ShapeError, ValidationError

logger = logging.getLogger(__name__)

as_strided = np.lib.stride_tricks.as_strided

#: Result of a backward pass. `input_grad` has the shape of the layer input and `param_grads`
#: maps parameter name to a gradient with the parameter's shape.
LayerGrad = namedtuple("LayerGrad", ["input_grad", "param_grads"])


def as_tensor(values, dtype=np.float32):
    """Convert `values` to a contiguous tensor and validate it.

    Raises:
        ShapeError: If any extent is zero.
        ValidationError: If any value is NaN or Inf.

    """
    tensor = np.ascontiguousarray(values, dtype=dtype)
    if tensor.ndim == 0 or any(extent < 1 for extent in tensor.shape):
        raise ShapeError("All tensor extents must be >= 1, got %s" % (tensor.shape,))
    if not np.all(np.isfinite(tensor)):
        raise ValidationError("Tensor contains NaN or Inf values")
    return tensor


def _require_rank4(name, x):
    if x.ndim != 4:
        raise ShapeError(
            "%s must be rank 4 (N, C, H, W), got shape %s" % (name, x.shape)
        )


def _conv_windows(x, k, stride, padding):
    """View the padded input as sliding windows of shape (N, C, H', W', k, k).

    The windows share memory with the padded copy, nothing is written through them.
    """
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c, h, w = x.shape
    out_h = (h - k) // stride + 1
    out_w = (w - k) // stride + 1
    s_n, s_c, s_h, s_w = x.strides
    return as_strided(
        x,
        shape=(n, c, out_h, out_w, k, k),
        strides=(s_n, s_c, s_h * stride, s_w * stride, s_h, s_w),
        writeable=False,
    )


def conv_output_shape(input_shape, kernel_shape, stride, padding):
    """Output shape of `conv2d` for the given input and kernel shapes.

    Raises:
        ShapeError: Naming the offending dimension when shapes do not fit.
        ValidationError: If stride is not positive or padding is negative.

    """
    if stride < 1:
        raise ValidationError("Stride must be a positive integer, got %s" % stride)
    if padding < 0:
        raise ValidationError("Padding must be non-negative, got %s" % padding)
    n, c_in, h, w = input_shape
    c_out, k_in, k_h, k_w = kernel_shape
    if k_in != c_in:
        raise ShapeError(
            "Kernel input channels (%d) do not match input channels (%d)" % (k_in, c_in)
        )
    if k_h != k_w:
        raise ShapeError("Kernels must be square, got %dx%d" % (k_h, k_w))
    for name, extent in (("height", h), ("width", w)):
        padded = extent + 2 * padding
        if k_h > padded:
            raise ShapeError(
                "Kernel size %d exceeds padded input %s %d" % (k_h, name, padded)
            )
        if (padded - k_h) % stride:
            raise ShapeError(
                "Stride %d does not divide the padded input %s evenly" % (stride, name)
            )
    return (
        n,
        c_out,
        (h + 2 * padding - k_h) // stride + 1,
        (w + 2 * padding - k_w) // stride + 1,
    )


def conv2d(x, kernels, bias, stride=1, padding=0):
    """2D cross-correlation with zero padding.

    Args:
        x (ndarray): Input of shape (N, Cin, H, W).
        kernels (ndarray): Kernels of shape (Cout, Cin, k, k).
        bias (ndarray): Bias of shape (Cout,).
        stride (int, optional): Step between windows. Defaults to 1.
        padding (int, optional): Zero padding on every border. Defaults to 0.

    Returns:
        ndarray: Output of shape (N, Cout, H', W').

    """
    _require_rank4("Input", x)
    _require_rank4("Kernels", kernels)
    out_shape = conv_output_shape(x.shape, kernels.shape, stride, padding)
    if bias.shape != (kernels.shape[0],):
        raise ShapeError(
            "Bias shape %s does not match %d output channels"
            % (bias.shape, kernels.shape[0])
        )
    windows = _conv_windows(x, kernels.shape[2], stride, padding)
    # (N, H', W', Cout)
    out = np.tensordot(windows, kernels, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
    assert out.shape == out_shape
    return np.ascontiguousarray(out, dtype=x.dtype)


def conv2d_backward(x, kernels, stride, padding, upstream):
    """Gradients of `conv2d` with respect to input, kernels and bias."""
    _require_rank4("Input", x)
    out_shape = conv_output_shape(x.shape, kernels.shape, stride, padding)
    if upstream.shape != out_shape:
        raise ShapeError(
            "Upstream gradient shape %s does not match conv output %s"
            % (upstream.shape, out_shape)
        )
    k = kernels.shape[2]
    windows = _conv_windows(x, k, stride, padding)
    bias_grad = upstream.sum(axis=(0, 2, 3))
    kernel_grad = np.tensordot(upstream, windows, axes=([0, 2, 3], [0, 2, 3]))

    # (N, H', W', Cin, k, k) column gradients, scattered back window tap by window tap
    col_grad = np.tensordot(upstream, kernels, axes=([1], [0]))
    n, c_in, h, w = x.shape
    out_h, out_w = out_shape[2], out_shape[3]
    padded = np.zeros((n, c_in, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            padded[
                :,
                :,
                i : i + stride * out_h : stride,
                j : j + stride * out_w : stride,
            ] += col_grad[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    input_grad = padded[:, :, padding : padding + h, padding : padding + w]
    return LayerGrad(
        np.ascontiguousarray(input_grad),
        {
            "kernels": kernel_grad.astype(kernels.dtype, copy=False),
            "bias": bias_grad.astype(kernels.dtype, copy=False),
        },
    )


def _check_transpose_shapes(x, kernels):
    _require_rank4("Input", x)
    _require_rank4("Kernels", kernels)
    if kernels.shape[0] != x.shape[1]:
        raise ShapeError(
            "Transposed kernel input channels (%d) do not match input channels (%d)"
            % (kernels.shape[0], x.shape[1])
        )
    if kernels.shape[2:] != (2, 2):
        raise ShapeError(
            "Transposed convolution supports 2x2 kernels only, got %s"
            % (kernels.shape[2:],)
        )


def conv_transpose2d(x, kernels, bias=None):
    """Stride-2 transposed convolution with 2x2 kernels, doubling both spatial extents.

    Args:
        x (ndarray): Input of shape (N, Cin, H, W).
        kernels (ndarray): Kernels of shape (Cin, Cout, 2, 2).
        bias (ndarray, optional): Bias of shape (Cout,). Defaults to None.

    Returns:
        ndarray: Output of shape (N, Cout, 2H, 2W).

    """
    _check_transpose_shapes(x, kernels)
    n, _, h, w = x.shape
    c_out = kernels.shape[1]
    # (N, H, W, Cout, 2, 2) -> (N, Cout, H, 2, W, 2)
    out = np.tensordot(x, kernels, axes=([1], [0])).transpose(0, 3, 1, 4, 2, 5)
    out = out.reshape(n, c_out, 2 * h, 2 * w)
    if bias is not None:
        if bias.shape != (c_out,):
            raise ShapeError(
                "Bias shape %s does not match %d output channels" % (bias.shape, c_out)
            )
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out, dtype=x.dtype)


def conv_transpose2d_backward(x, kernels, upstream):
    """Gradients of `conv_transpose2d` with respect to input, kernels and bias."""
    _check_transpose_shapes(x, kernels)
    n, _, h, w = x.shape
    c_out = kernels.shape[1]
    if upstream.shape != (n, c_out, 2 * h, 2 * w):
        raise ShapeError(
            "Upstream gradient shape %s does not match transposed conv output %s"
            % (upstream.shape, (n, c_out, 2 * h, 2 * w))
        )
    g = upstream.reshape(n, c_out, h, 2, w, 2)
    input_grad = np.tensordot(g, kernels, axes=([1, 3, 5], [1, 2, 3]))
    kernel_grad = np.tensordot(x, g, axes=([0, 2, 3], [0, 2, 4]))
    return LayerGrad(
        np.ascontiguousarray(input_grad.transpose(0, 3, 1, 2)),
        {
            "kernels": kernel_grad.astype(kernels.dtype, copy=False),
            "bias": upstream.sum(axis=(0, 2, 3)).astype(kernels.dtype, copy=False),
        },
    )


def maxpool2d(x):
    """2x2 max pooling with stride 2.

    Ties resolve to the first element of the window in row-major order.

    Returns:
        tuple (ndarray, ndarray): Pooled tensor (N, C, H/2, W/2) and the argmax index (0..3)
        of every window.

    Raises:
        ShapeError: If H or W is odd.

    """
    _require_rank4("Input", x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError("Max pooling needs even spatial extents, got %dx%d" % (h, w))
    windows = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    argmax = windows.argmax(axis=-1)
    pooled = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(pooled), argmax


def maxpool2d_backward(argmax, upstream):
    """Route upstream gradients to the recorded argmax positions, zeros elsewhere."""
    if argmax.shape != upstream.shape:
        raise ShapeError(
            "Upstream gradient shape %s does not match pooled shape %s"
            % (upstream.shape, argmax.shape)
        )
    n, c, h2, w2 = upstream.shape
    scattered = np.zeros((n, c, h2, w2, 4), dtype=upstream.dtype)
    np.put_along_axis(scattered, argmax[..., None], upstream[..., None], axis=-1)
    input_grad = (
        scattered.reshape(n, c, h2, w2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, 2 * h2, 2 * w2)
    )
    return LayerGrad(np.ascontiguousarray(input_grad), {})


def relu(x):
    """Elementwise max(0, x)."""
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def relu_backward(x, upstream):
    """Mask upstream gradients where the input is <= 0 (subgradient 0 at 0)."""
    if x.shape != upstream.shape:
        raise ShapeError(
            "Upstream gradient shape %s does not match input %s"
            % (upstream.shape, x.shape)
        )
    return LayerGrad(np.where(x > 0, upstream, 0).astype(upstream.dtype), {})


def concat_channels(a, b):
    """Concatenate along channels, channels of `a` first."""
    _require_rank4("First input", a)
    _require_rank4("Second input", b)
    for axis, name in ((0, "batch"), (2, "height"), (3, "width")):
        if a.shape[axis] != b.shape[axis]:
            raise ShapeError(
                "Cannot concatenate, %s differs: %d vs %d"
                % (name, a.shape[axis], b.shape[axis])
            )
    return np.concatenate([a, b], axis=1)


def concat_channels_backward(upstream, a_channels):
    """Split an upstream gradient back into the gradients of both concatenated inputs."""
    if not 0 < a_channels < upstream.shape[1]:
        raise ShapeError(
            "Cannot split %d channels at %d" % (upstream.shape[1], a_channels)
        )
    return (
        np.ascontiguousarray(upstream[:, :a_channels]),
        np.ascontiguousarray(upstream[:, a_channels:]),
    )


def sigmoid(x):
    """Elementwise logistic function, strictly inside (0, 1) for finite input.

    Positive and negative inputs take separate branches so exp never sees a large positive
    argument.
    """
    x = np.asarray(x)
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.float32
    x = x.astype(dtype, copy=False)
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1 / (1 + np.exp(-x[positive]))
    e = np.exp(x[~positive])
    out[~positive] = e / (1 + e)
    lower = np.nextafter(dtype.type(0), dtype.type(1))
    upper = np.nextafter(dtype.type(1), dtype.type(0))
    return np.clip(out, lower, upper)


def _check_targets(logits, targets):
    if logits.shape != targets.shape:
        raise ShapeError(
            "Logits shape %s does not match targets %s" % (logits.shape, targets.shape)
        )
    if not np.all((targets == 0) | (targets == 1)):
        raise ValidationError("Targets must be binary (0 or 1)")


def bce_with_logits(logits, targets):
    """Mean binary cross entropy on logits, max(x, 0) - x*t + log(1 + exp(-|x|)).

    Returns:
        float: The loss, finite for any finite logits.

    """
    _check_targets(logits, targets)
    x = logits
    t = targets.astype(x.dtype, copy=False)
    losses = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    return float(np.mean(losses, dtype=np.float64))


def bce_with_logits_backward(logits, targets):
    """Gradient of `bce_with_logits`: (sigmoid(x) - t) / count."""
    _check_targets(logits, targets)
    t = targets.astype(logits.dtype, copy=False)
    return ((sigmoid(logits) - t) / logits.size).astype(logits.dtype, copy=False)


def he_init(shape, fan_in, seed):
    """Sample normal(0, sqrt(2 / fan_in)) values, bit-identical for a given seed."""
    if fan_in < 1:
        raise ValidationError("fan_in must be >= 1, got %s" % fan_in)
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(np.float32)
