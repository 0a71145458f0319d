import json
from multiseg.scripts.cli import cli


def run_pipeline(cli_runner, root, tiny_overrides):
    corpus, prepared, runs = root / "corpus", root / "prepared", root / "runs"
    predictions = root / "predictions"
    settings = [arg for override in tiny_overrides for arg in ("--set", override)]
    commands = [
        ["synth", "--n", "5", "--size", "32", "--seed", "5", str(corpus)],
        ["prepare", "--seed", "5"] + settings + [str(corpus), str(prepared)],
        ["train", "--epochs", "2", "--seed", "5", str(prepared), str(runs)],
        [
            "predict",
            str(runs / "run-0001" / "weights.mssw"),
            str(corpus / "images"),
            "-o",
            str(predictions),
        ],
        [
            "evaluate",
            "-o",
            str(root / "report.json"),
            str(predictions),
            str(corpus / "masks"),
        ],
    ]
    for args in commands:
        result = cli_runner.invoke(cli, args, catch_exceptions=False)
        assert result.exit_code == 0, args


def test_pipeline_is_byte_identical(cli_runner, tiny_overrides, tmp_path):
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        run_pipeline(cli_runner, tmp_path / name, tiny_overrides)

    first = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    second = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert first == second
    names = {p.name for p in first}
    assert {"manifest.json", "train.npz", "val.npz", "stats.json", "split.json"} <= names
    assert {"weights.mssw", "curves.csv", "summary.json", "report.json"} <= names
    for path in first:
        assert (tmp_path / "a" / path).read_bytes() == (tmp_path / "b" / path).read_bytes(), path

    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["suite"]["bce"] is not None
