"""Multi-channel U-Net assembled from the layers in `multiseg.tensor`."""
import logging
from dataclasses import dataclass, astuple
import numpy as np
from multiseg import container
from multiseg.errors import ConfigError, CorruptHeaderError, ShapeAuditError, ShapeError
from multiseg.tensor import (
    bce_with_logits,
    bce_with_logits_backward,
    concat_channels,
    concat_channels_backward,
    conv2d,
    conv2d_backward,
    conv_transpose2d,
    conv_transpose2d_backward,
    he_init,
    maxpool2d,
    maxpool2d_backward,
    relu,
    relu_backward,
    sigmoid,
)

logger = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"MSSW"
CONFIG_TENSOR = "__config"
DTYPE_F32 = 1
DTYPE_U32 = 2


@dataclass
class UNetConfig:
    """Architecture of the network.

    Attributes:
        in_channels (int): Image channels fed to the network.
        out_channels (int): Number of classes, one logit map each.
        depth (int): Number of pooling stages.
        base_width (int): Feature channels of the first stage. Stage i has base_width * 2**i.
        input_size (int): Square input extent, divisible by 2**depth.

    """

    in_channels: int = 3
    out_channels: int = 4
    depth: int = 4
    base_width: int = 64
    input_size: int = 256

    def validate(self):
        for name in ("in_channels", "out_channels", "depth", "base_width", "input_size"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError("unet.%s must be an integer >= 1, got %r" % (name, value))
        if self.input_size % (2 ** self.depth):
            raise ConfigError(
                "unet.input_size %d is not divisible by 2**depth = %d"
                % (self.input_size, 2 ** self.depth)
            )
        return self


def stage_widths(config):
    """Feature channels per stage, encoder stages first and the bottleneck last."""
    return [config.base_width * 2 ** i for i in range(config.depth + 1)]


def parameter_shapes(config):
    """Ordered mapping of parameter name to shape, fully determined by `config`."""
    config.validate()
    widths = stage_widths(config)
    shapes = {}

    def conv(prefix, c_in, c_out, k=3):
        shapes[prefix + ".kernels"] = (c_out, c_in, k, k)
        shapes[prefix + ".bias"] = (c_out,)

    c_in = config.in_channels
    for i in range(config.depth):
        conv("enc%d.conv1" % i, c_in, widths[i])
        conv("enc%d.conv2" % i, widths[i], widths[i])
        c_in = widths[i]
    conv("bottleneck.conv1", widths[-2], widths[-1])
    conv("bottleneck.conv2", widths[-1], widths[-1])
    for i in reversed(range(config.depth)):
        shapes["dec%d.up.kernels" % i] = (widths[i + 1], widths[i], 2, 2)
        shapes["dec%d.up.bias" % i] = (widths[i],)
        conv("dec%d.conv1" % i, 2 * widths[i], widths[i])
        conv("dec%d.conv2" % i, widths[i], widths[i])
    conv("head", widths[0], config.out_channels, k=1)
    return shapes


class UNetModel:
    """Architecture configuration plus named parameter tensors."""

    def __init__(self, config, params):
        self.config = config
        self.params = dict(params)
        audit_parameters(self.config, self.params)

    def copy(self):
        return UNetModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype):
        return UNetModel(self.config, {k: v.astype(dtype) for k, v in self.params.items()})

    @property
    def dtype(self):
        return self.params["head.kernels"].dtype


def audit_parameters(config, params):
    """Check names and shapes of `params` against `config`.

    Raises:
        ShapeAuditError: Naming the first missing, unexpected or mismatched tensor.

    """
    expected = parameter_shapes(config)
    for name, shape in expected.items():
        if name not in params:
            raise ShapeAuditError("Missing parameter tensor '%s'" % name)
        if tuple(params[name].shape) != shape:
            raise ShapeAuditError(
                "Parameter '%s' has shape %s, expected %s"
                % (name, tuple(params[name].shape), shape)
            )
    for name in params:
        if name not in expected:
            raise ShapeAuditError("Unexpected parameter tensor '%s'" % name)


def build_unet(config, seed=0):
    """Build a He-initialized U-Net with zero biases.

    Args:
        config (UNetConfig): Architecture.
        seed (int, optional): Seed; equal seeds give bit-identical models. Defaults to 0.

    Returns:
        UNetModel: The new model.

    """
    shapes = parameter_shapes(config)
    seeds = np.random.SeedSequence(seed).generate_state(len(shapes))
    params = {}
    for (name, shape), tensor_seed in zip(shapes.items(), seeds):
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=np.float32)
        elif ".up." in name:
            # Every output pixel of the stride-2 transposed conv sees one tap per input channel
            params[name] = he_init(shape, shape[0], int(tensor_seed))
        else:
            params[name] = he_init(shape, int(np.prod(shape[1:])), int(tensor_seed))
    model = UNetModel(config, params)
    logger.debug(
        "Built U-Net %s with %d parameters (seed %s)", config, count_parameters(model), seed
    )
    return model


def count_parameters(model):
    """Total number of parameter elements."""
    return int(sum(p.size for p in model.params.values()))


def _check_batch(model, batch):
    cfg = model.config
    if batch.ndim != 4:
        raise ShapeError("Batch must be rank 4 (N, C, H, W), got %s" % (batch.shape,))
    if batch.shape[1] != cfg.in_channels:
        raise ShapeError(
            "Batch has %d channels, model expects %d" % (batch.shape[1], cfg.in_channels)
        )
    if batch.shape[2:] != (cfg.input_size, cfg.input_size):
        raise ShapeError(
            "Batch spatial size %s does not match model input size %d"
            % (batch.shape[2:], cfg.input_size)
        )


def _conv_block(params, prefix, h, cache):
    for j in (1, 2):
        name = "%s.conv%d" % (prefix, j)
        cache[name] = h
        z = conv2d(h, params[name + ".kernels"], params[name + ".bias"], 1, 1)
        cache[name + ".z"] = z
        h = relu(z)
    return h


def _conv_block_backward(params, prefix, g, cache, grads):
    for j in (2, 1):
        name = "%s.conv%d" % (prefix, j)
        g = relu_backward(cache[name + ".z"], g).input_grad
        layer = conv2d_backward(cache[name], params[name + ".kernels"], 1, 1, g)
        grads[name + ".kernels"] = layer.param_grads["kernels"]
        grads[name + ".bias"] = layer.param_grads["bias"]
        g = layer.input_grad
    return g


def _forward(model, batch, cache):
    params, depth = model.params, model.config.depth
    h = batch
    for i in range(depth):
        h = _conv_block(params, "enc%d" % i, h, cache)
        cache["skip%d" % i] = h
        h, cache["pool%d" % i] = maxpool2d(h)
    h = _conv_block(params, "bottleneck", h, cache)
    for i in reversed(range(depth)):
        cache["dec%d.up" % i] = h
        h = conv_transpose2d(
            h, params["dec%d.up.kernels" % i], params["dec%d.up.bias" % i]
        )
        h = concat_channels(h, cache["skip%d" % i])
        h = _conv_block(params, "dec%d" % i, h, cache)
    cache["head"] = h
    return conv2d(h, params["head.kernels"], params["head.bias"], 1, 0)


def _backward(model, cache, upstream):
    params, depth = model.params, model.config.depth
    grads = {}
    layer = conv2d_backward(cache["head"], params["head.kernels"], 1, 0, upstream)
    grads["head.kernels"] = layer.param_grads["kernels"]
    grads["head.bias"] = layer.param_grads["bias"]
    g = layer.input_grad

    skip_grads = {}
    for i in range(depth):
        g = _conv_block_backward(params, "dec%d" % i, g, cache, grads)
        g, skip_grads[i] = concat_channels_backward(g, g.shape[1] // 2)
        layer = conv_transpose2d_backward(
            cache["dec%d.up" % i], params["dec%d.up.kernels" % i], g
        )
        grads["dec%d.up.kernels" % i] = layer.param_grads["kernels"]
        grads["dec%d.up.bias" % i] = layer.param_grads["bias"]
        g = layer.input_grad
    g = _conv_block_backward(params, "bottleneck", g, cache, grads)
    for i in reversed(range(depth)):
        g = maxpool2d_backward(cache["pool%d" % i], g).input_grad + skip_grads[i]
        g = _conv_block_backward(params, "enc%d" % i, g, cache, grads)
    return grads


def forward(model, batch):
    """Per-class logits of shape (N, out_channels, S, S). No activation is applied."""
    batch = np.asarray(batch, dtype=model.dtype)
    _check_batch(model, batch)
    return _forward(model, batch, {})


def predict_probabilities(model, batch):
    """Independent per-channel sigmoid probabilities; channels are not normalized jointly."""
    return sigmoid(forward(model, batch))


def loss(model, batch, targets):
    """Mean BCE-with-logits of the model on `batch` against binary `targets`."""
    return bce_with_logits(forward(model, batch), np.asarray(targets, dtype=model.dtype))


def loss_and_grads(model, batch, targets):
    """Loss and its gradient for every named parameter.

    Returns:
        tuple (float, dict): Mean BCE-with-logits and parameter name to gradient.

    """
    batch = np.asarray(batch, dtype=model.dtype)
    targets = np.asarray(targets, dtype=model.dtype)
    _check_batch(model, batch)
    cache = {}
    logits = _forward(model, batch, cache)
    value = bce_with_logits(logits, targets)
    grads = _backward(model, cache, bce_with_logits_backward(logits, targets))
    return value, grads


def save_weights(model, path):
    """Write the model to a bit-exact weights container (magic "MSSW")."""
    writer = container.Writer(WEIGHTS_MAGIC)
    writer.u32(len(model.params) + 1)
    config_values = np.array(astuple(model.config), dtype="<u4")
    _write_tensor(writer, CONFIG_TENSOR, config_values, DTYPE_U32)
    for name, tensor in model.params.items():
        _write_tensor(writer, name, tensor.astype("<f4"), DTYPE_F32)
    container.write_file(path, writer.getvalue())
    logger.debug("Saved %d tensors to %s", len(model.params), path)


def _write_tensor(writer, name, tensor, dtype_code):
    writer.name(name)
    writer.u8(tensor.ndim)
    for extent in tensor.shape:
        writer.u32(extent)
    writer.u8(dtype_code)
    writer.raw(tensor.tobytes())


def _read_tensor(reader):
    name = reader.name()
    rank = reader.u8()
    shape = tuple(reader.u32() for _ in range(rank))
    dtype_code = reader.u8()
    dtypes = {DTYPE_F32: "<f4", DTYPE_U32: "<u4"}
    if dtype_code not in dtypes:
        raise CorruptHeaderError(
            "%s: tensor '%s' has unknown dtype code %d" % (reader.source, name, dtype_code)
        )
    count = int(np.prod(shape, dtype=np.int64))
    if count * 4 > reader.remaining:
        raise CorruptHeaderError(
            "%s: tensor '%s' of shape %s exceeds the file size" % (reader.source, name, shape)
        )
    data = np.frombuffer(reader.raw(count * 4), dtype=dtypes[dtype_code]).reshape(shape)
    return name, data


def load_weights(path, expected_config=None):
    """Read a weights container written by `save_weights`.

    Args:
        path (str or pathlib.Path): Weights file.
        expected_config (UNetConfig, optional): If given, the stored tensors are audited
            against this configuration instead of the embedded one. Defaults to None.

    Raises:
        CorruptHeaderError: Bad magic, version, checksum or truncated data.
        ShapeAuditError: Stored tensors do not fit the configuration.

    """
    reader = container.Reader(container.read_file(path), WEIGHTS_MAGIC, source=str(path))
    count = reader.u32()
    name, values = _read_tensor(reader)
    if name != CONFIG_TENSOR or values.shape != (5,):
        raise CorruptHeaderError("%s: first tensor must be the config" % path)
    try:
        config = UNetConfig(*(int(v) for v in values)).validate()
    except ConfigError as e:
        raise CorruptHeaderError("%s: embedded config is invalid: %s" % (path, e)) from e
    params = {}
    for _ in range(count - 1):
        name, values = _read_tensor(reader)
        params[name] = values.astype(np.float32)
    if reader.remaining:
        raise CorruptHeaderError("%s: %d trailing bytes" % (path, reader.remaining))
    audit_parameters(expected_config or config, params)
    return UNetModel(expected_config or config, params)
