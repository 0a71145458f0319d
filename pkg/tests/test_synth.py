from dataclasses import replace
import numpy as np
import pytest
from multiseg.analyze import connected_components
from multiseg.annotation import read_annotation
from multiseg.errors import ConfigError
from multiseg.masks import load_mask
from multiseg.rasterize import rasterize
from multiseg.stats import compute_dataset_stats
from multiseg.synth import SynthConfig, generate_corpus, generate_sample


def plane(sample, class_set, name):
    return sample.mask[class_set.index(name)]


def test_default_config_is_valid():
    assert SynthConfig().validate() == SynthConfig()


@pytest.mark.parametrize(
    "changes,match",
    [
        (dict(crack_thickness=1), "crack_thickness"),
        (dict(busbar_count=10, busbar_width=5), "busbars"),
        (dict(crack_count=(3, 1)), "crack_count"),
        (dict(image_size=4), "image_size"),
        (dict(dark_blob_probability=1.5), "dark_blob_probability"),
        (dict(background=2.0), "background"),
    ],
)
def test_invalid_configs(changes, match):
    with pytest.raises(ConfigError, match=match):
        replace(SynthConfig(), **changes).validate()


def test_sample_depends_on_seed_and_index():
    config = SynthConfig(image_size=32, busbar_count=2)
    a, b = generate_sample(config, 4), generate_sample(config, 4)
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.mask, b.mask)
    assert not np.array_equal(a.mask, generate_sample(config, 5).mask)
    assert not np.array_equal(a.image, generate_sample(replace(config, seed=1), 4).image)


@pytest.mark.parametrize("index", range(5))
def test_forced_crack_count_gives_components(index, class_set):
    config = SynthConfig(crack_count=(3, 3), seed=11)
    sample = generate_sample(config, index)
    assert sample.components["crack"] == 3
    _, cracks = connected_components(plane(sample, class_set, "crack"), 8)
    assert len(cracks) == 3
    _, busbars = connected_components(plane(sample, class_set, "busbar"), 8)
    assert len(busbars) == config.busbar_count
    _, corners = connected_components(plane(sample, class_set, "non-cell"), 8)
    assert len(corners) == 4


def test_defect_free_cells_share_one_template():
    config = SynthConfig(
        image_size=32,
        busbar_count=2,
        crack_count=(0, 0),
        dark_blob_probability=0.0,
        noise_std=0.0,
    )
    a, b = generate_sample(config, 0), generate_sample(config, 1)
    np.testing.assert_array_equal(a.image, b.image)
    assert not a.mask[2].any() and not a.mask[0].any()
    assert a.image[16, 2 + config.corner_radius] == round(0.75 * 255)
    assert a.image[0, 0] == round(0.02 * 255)


def test_cracks_cross_busbars(small_synth_config, class_set):
    sample = generate_sample(small_synth_config, 0)
    crack = plane(sample, class_set, "crack").astype(bool)
    busbar = plane(sample, class_set, "busbar").astype(bool)
    assert (crack & busbar).any()
    # overlapping pixels are darker than either defect alone
    other = plane(sample, class_set, "dark").astype(bool) | plane(sample, class_set, "non-cell").astype(bool)
    overlap = crack & busbar & ~other
    crack_only = crack & ~busbar & ~other
    assert sample.image[overlap].max() < sample.image[crack_only].min()


def test_always_dark_blob(class_set):
    config = SynthConfig(dark_blob_probability=1.0)
    sample = generate_sample(config, 0)
    assert sample.components["dark"] == 1
    assert len(connected_components(plane(sample, class_set, "dark"))[1]) == 1


def test_corpus_layout(synth_corpus, class_set):
    out, manifest = synth_corpus
    assert manifest["n"] == 10
    assert manifest["class_names"] == list(class_set)
    assert (out / "manifest.json").is_file()
    entry = manifest["samples"][0]
    assert entry["id"] == "synth_00000"
    mask = load_mask(out / entry["mask"], class_set).mask
    annotation = read_annotation(out / entry["annotation"], class_set)
    np.testing.assert_array_equal(mask, rasterize(annotation, class_set))
    assert entry["pixels"]["crack"] == int(mask[class_set.index("crack")].sum())
    assert entry["components"]["crack"] == 2


def test_corpus_digest_is_reproducible(tmp_path, small_synth_config):
    first = generate_corpus(small_synth_config, 3, tmp_path / "a")
    second = generate_corpus(small_synth_config, 3, tmp_path / "b", jobs=2)
    assert first["digest"] == second["digest"]
    other = generate_corpus(replace(small_synth_config, seed=99), 3, tmp_path / "c")
    assert other["digest"] != first["digest"]


def test_corpus_needs_samples(tmp_path):
    with pytest.raises(ConfigError, match=">= 1"):
        generate_corpus(SynthConfig(), 0, tmp_path)


def test_statistics_match_manifest(synth_corpus, class_set):
    out, manifest = synth_corpus
    entries = manifest["samples"]
    masks = [load_mask(out / e["mask"], class_set).mask for e in entries]
    result = compute_dataset_stats(masks, class_set)
    n_pixels = len(entries) * 32 * 32
    assert result.n_pixels == n_pixels
    for name in class_set:
        pixels = [e["pixels"][name] for e in entries]
        assert result.pixel_frequency[name] == pytest.approx(sum(pixels) / n_pixels, abs=1e-15)
        assert result.image_frequency[name] == pytest.approx(np.mean([p > 0 for p in pixels]))
    assert result.cardinality == pytest.approx(
        sum(sum(e["pixels"].values()) for e in entries) / n_pixels
    )
    crack = class_set.index("crack")
    for entry, mask in zip(entries, masks):
        assert len(connected_components(mask[crack], 8)[1]) == entry["components"]["crack"]
