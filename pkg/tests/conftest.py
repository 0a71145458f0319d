# pylint: disable=redefined-outer-name
import logging
import pytest
from click.testing import CliRunner
from multiseg import ClassSet
from multiseg.config import load_run_config, write_run_config
from multiseg.dataset import prepare_corpus
from multiseg.synth import SynthConfig, generate_corpus


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow convergence tests"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _restore_root_logging():
    """Undo the root logger level/handlers a CLI invocation installs via basicConfig."""
    root = logging.getLogger()
    level, handlers = root.level, list(root.handlers)
    yield
    root.setLevel(level)
    root.handlers[:] = handlers


@pytest.fixture(scope="function")
def cli_runner():
    return CliRunner()


@pytest.fixture(scope="session")
def class_set():
    return ClassSet()


@pytest.fixture(scope="session")
def small_synth_config():
    """32x32 cells with exactly 2 cracks and no noise."""
    return SynthConfig(
        image_size=32,
        busbar_count=2,
        busbar_width=2,
        crack_count=(2, 2),
        crack_step=2.0,
        dark_blob_radius=(2, 4),
        corner_radius=4,
        noise_std=0.0,
        seed=3,
    )


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory, small_synth_config):
    """Directory with 10 synthetic samples."""
    out = tmp_path_factory.mktemp("corpus")
    manifest = generate_corpus(small_synth_config, 10, out)
    return out, manifest


@pytest.fixture(scope="session")
def tiny_overrides():
    """Overrides for a 32 px, single-stage network that trains in seconds."""
    return [
        "data.image_size=32",
        "unet.input_size=32",
        "unet.depth=1",
        "unet.base_width=2",
        "train.batch_size=8",
    ]


@pytest.fixture(scope="session")
def prepared_dir(tmp_path_factory, synth_corpus, tiny_overrides):
    """Prepared records of `synth_corpus` with a config.json for the tiny network."""
    corpus, _ = synth_corpus
    out = tmp_path_factory.mktemp("prepared")
    config = load_run_config(overrides=tiny_overrides, environ={})
    prepare_corpus(
        corpus, out, config.data, config.unet.in_channels, config.class_set, config.train.seed
    )
    write_run_config(config, out / "config.json")
    return out
