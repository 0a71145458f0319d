# pylint: disable=redefined-outer-name
import numpy as np
import pytest
from multiseg.masks import load_mask
from multiseg.scripts.cli import cli
from multiseg.unet import UNetConfig, build_unet, save_weights


@pytest.fixture
def weights(tmp_path):
    path = tmp_path / "model" / "weights.mssw"
    path.parent.mkdir()
    config = UNetConfig(in_channels=3, out_channels=4, depth=1, base_width=2, input_size=16)
    save_weights(build_unet(config, seed=0), path)
    return path


def test_cli_predict(cli_runner, weights, synth_corpus, tmp_path):
    corpus, _ = synth_corpus
    out = tmp_path / "predictions"
    args = ["predict", str(weights), str(corpus / "images"), "-o", str(out)]
    result = cli_runner.invoke(cli, args, catch_exceptions=False)
    assert result.exit_code == 0

    assert len(list(out.glob("*.mssm"))) == 10
    probabilities = np.load(out / "synth_00000.probs.npy")
    assert probabilities.shape == (4, 16, 16)
    assert np.all((probabilities > 0) & (probabilities < 1))
    mask = load_mask(out / "synth_00000.mssm").mask
    np.testing.assert_array_equal(mask, (probabilities >= 0.5).astype(np.uint8))


def test_cli_predict_threshold(cli_runner, weights, synth_corpus, tmp_path):
    corpus, _ = synth_corpus
    image = corpus / "images" / "synth_00001.png"
    out = tmp_path / "predictions"
    args = ["predict", str(weights), str(image), "-o", str(out), "--threshold", "0"]
    result = cli_runner.invoke(cli, args, catch_exceptions=False)
    assert result.exit_code == 0
    assert load_mask(out / "synth_00001.mssm").mask.all()


def test_cli_predict_class_mismatch(cli_runner, weights, synth_corpus, tmp_path):
    corpus, _ = synth_corpus
    args = [
        "predict",
        str(weights),
        str(corpus / "images"),
        "-o",
        str(tmp_path / "out"),
        "--set",
        'class_names=["crack"]',
    ]
    result = cli_runner.invoke(cli, args, catch_exceptions=False)
    assert result.exit_code == 3
    assert "multiseg-error:validation:" in result.output


def test_cli_predict_is_deterministic(cli_runner, weights, synth_corpus, tmp_path):
    corpus, _ = synth_corpus
    image = str(corpus / "images" / "synth_00003.png")
    for name in ("a", "b"):
        args = ["predict", str(weights), image, "-o", str(tmp_path / name)]
        cli_runner.invoke(cli, args, catch_exceptions=False)
    for name in ("synth_00003.probs.npy", "synth_00003.mssm"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
