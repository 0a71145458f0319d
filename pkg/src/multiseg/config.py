"""Run configuration: one JSON file plus command line overrides."""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from multiseg import DEFAULT_CLASS_NAMES, ClassSet
from multiseg.dataset import DataConfig
from multiseg.errors import ConfigError, StorageError
from multiseg.synth import SynthConfig
from multiseg.train import TrainConfig
from multiseg.unet import UNetConfig

logger = logging.getLogger(__name__)

SEED_ENV = "MSS_SEED"
SECTIONS = {"synth": SynthConfig, "unet": UNetConfig, "train": TrainConfig, "data": DataConfig}


@dataclass
class RunConfig:
    """Everything a run depends on.

    Attributes:
        synth (SynthConfig): Synthetic corpus generation.
        unet (UNetConfig): Architecture.
        train (TrainConfig): Optimization.
        data (DataConfig): Preprocessing.
        seed (int): When set, overrides `synth.seed` and `train.seed`.
        class_names (tuple of str): Mask channel order.
        threshold (float): Probability threshold for binarization.
        jobs (int): Worker cap for parallel sections.

    """

    synth: SynthConfig = field(default_factory=SynthConfig)
    unet: UNetConfig = field(default_factory=UNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = None
    class_names: tuple = DEFAULT_CLASS_NAMES
    threshold: float = 0.5
    jobs: int = 1

    @property
    def class_set(self):
        return ClassSet(self.class_names)

    def validate(self):
        for name in SECTIONS:
            getattr(self, name).validate()
        class_set = self.class_set
        if self.unet.out_channels != len(class_set):
            raise ConfigError(
                "unet.out_channels is %d but %d classes are configured"
                % (self.unet.out_channels, len(class_set))
            )
        if self.unet.input_size != self.data.image_size:
            raise ConfigError(
                "unet.input_size %d differs from data.image_size %d"
                % (self.unet.input_size, self.data.image_size)
            )
        if len(self.data.mean) != self.unet.in_channels:
            raise ConfigError(
                "data.mean/std have %d values, unet.in_channels is %d"
                % (len(self.data.mean), self.unet.in_channels)
            )
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self

    def to_dict(self):
        def plain(value):
            if isinstance(value, (list, tuple)):
                return [plain(v) for v in value]
            if isinstance(value, dict):
                return {k: plain(v) for k, v in value.items()}
            return value

        return plain(asdict(self))


def _coerce(where, default, value):
    if default is None and value is None:
        return None
    if isinstance(default, bool) or isinstance(value, bool):
        if isinstance(default, bool) and isinstance(value, bool):
            return value
        raise ConfigError("%s: expected %s, got %r" % (where, type(default).__name__, value))
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError("%s: expected a list, got %r" % (where, value))
        if not default:
            return tuple(value)
        return tuple(
            _coerce("%s[%d]" % (where, i), default[0], item) for i, item in enumerate(value)
        )
    if isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ConfigError("%s: expected a number, got %r" % (where, value))
        return float(value)
    if isinstance(default, int) or default is None:
        if not isinstance(value, int):
            raise ConfigError("%s: expected an integer, got %r" % (where, value))
        return value
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError("%s: expected a string, got %r" % (where, value))
    return value


def _apply(config, doc, origin):
    if not isinstance(doc, dict):
        raise ConfigError("%s: configuration must be a JSON object" % origin)
    top = {f.name for f in fields(RunConfig)}
    for key, value in doc.items():
        if key not in top:
            raise ConfigError("%s: unknown key '%s'" % (origin, key))
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError("%s: section '%s' must be an object" % (origin, key))
            section = getattr(config, key)
            defaults = {f.name: getattr(SECTIONS[key](), f.name) for f in fields(section)}
            updates = {}
            for name, item in value.items():
                if name not in defaults:
                    raise ConfigError("%s: unknown key '%s.%s'" % (origin, key, name))
                updates[name] = _coerce("%s.%s" % (key, name), defaults[name], item)
            setattr(config, key, replace(section, **updates))
        else:
            setattr(config, key, _coerce(key, getattr(RunConfig(), key), value))
    return config


def parse_override(text):
    """Turn `section.key=value` (or `key=value`) into a nested dict.

    The value is parsed as JSON and kept as a string when that fails.
    """
    if "=" not in text:
        raise ConfigError("Override '%s' is not of the form key=value" % text)
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    if len(parts) > 2 or not all(parts):
        raise ConfigError("Override key '%s' must be 'key' or 'section.key'" % key)
    if len(parts) == 2:
        return {parts[0]: {parts[1]: value}}
    return {parts[0]: value}


def load_run_config(path=None, overrides=(), seed=None, environ=None, **flags):
    """Merge the config file, `--set` overrides, `MSS_SEED` and command flags, in that order.

    Args:
        path (str or pathlib.Path, optional): JSON configuration file.
        overrides (list of str, optional): `section.key=value` strings.
        seed (int, optional): Seed flag, applied last.
        environ (dict, optional): Environment. Defaults to `os.environ`.
        **flags: Further `section.key` values from dedicated flags; None values are skipped.

    Returns:
        RunConfig: The validated configuration.

    """
    environ = os.environ if environ is None else environ
    config = RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise StorageError("Could not read config '%s': %s" % (path, e)) from e
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(
                "%s: parse error at line %d column %d: %s" % (path, e.lineno, e.colno, e.msg)
            ) from None
        _apply(config, doc, str(path))
    for text in overrides:
        _apply(config, parse_override(text), "--set %s" % text)
    if environ.get(SEED_ENV):
        try:
            env_seed = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError("%s must be an integer, got %r" % (SEED_ENV, environ[SEED_ENV])) from None
        _apply(config, {"seed": env_seed}, SEED_ENV)
    for key, value in flags.items():
        if value is not None:
            section, _, name = key.partition("__")
            doc = {section: {name: value}} if name else {section: value}
            _apply(config, doc, "--" + key.replace("__", "-").replace("_", "-"))
    if seed is not None:
        _apply(config, {"seed": seed}, "--seed")
    if config.seed is not None:
        config.synth = replace(config.synth, seed=config.seed)
        config.train = replace(config.train, seed=config.seed)
    logger.debug("Run config: %s", config)
    return config.validate()


def write_run_config(config, path):
    try:
        Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise StorageError("Could not write config '%s': %s" % (path, e)) from e
