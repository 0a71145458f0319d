import json
import numpy as np
import pytest
from skimage import io
from multiseg import dataset
from multiseg.dataset import DataConfig, SampleRecord
from multiseg.errors import AugmentationError, ConfigError, DatasetError, ValidationError


def record(base_id, size=4, source="lab"):
    rng = np.random.default_rng(sum(map(ord, base_id)))
    return SampleRecord(
        id="%s_none" % base_id,
        source=source,
        base_id=base_id,
        variant="none",
        image=rng.standard_normal((3, size, size)).astype(np.float32),
        mask=(rng.random((4, size, size)) > 0.5).astype(np.uint8),
    )


def test_data_config_validation():
    assert DataConfig().validate().image_size == 256
    with pytest.raises(ConfigError, match="std"):
        DataConfig(std=(0.2, 0.0, 0.2)).validate()
    with pytest.raises(ConfigError, match="split"):
        DataConfig(split=(4, 0)).validate()


def test_resize_identity_returns_copy():
    image = np.random.default_rng(0).random((3, 8, 8)).astype(np.float32)
    resized = dataset.resize_image(image, 8)
    np.testing.assert_array_equal(resized, image)
    assert resized is not image


def test_resize_constant_image_stays_constant():
    image = np.full((1, 13, 7), 0.3, dtype=np.float32)
    resized = dataset.resize_image(image, 16)
    assert resized.shape == (1, 16, 16)
    np.testing.assert_allclose(resized, 0.3, atol=1e-6)
    assert dataset.resize_image(np.full((5, 5), 0.3), 4).shape == (4, 4)


def test_resize_mask_keeps_values_binary():
    ones = np.ones((4, 10, 6), dtype=np.uint8)
    np.testing.assert_array_equal(dataset.resize_mask(ones, 16), np.ones((4, 16, 16)))
    rng = np.random.default_rng(1)
    mask = (rng.random((4, 9, 9)) > 0.5).astype(np.uint8)
    resized = dataset.resize_mask(mask, 20)
    assert set(np.unique(resized)) <= {0, 1}


def test_normalize_image():
    image = np.stack(
        [np.full((2, 2), 0.485), np.full((2, 2), 0.456), np.ones((2, 2))]
    ).astype(np.float32)
    normalized = dataset.normalize_image(image)
    np.testing.assert_allclose(normalized[0], 0.0, atol=1e-6)
    np.testing.assert_allclose(normalized[1], 0.0, atol=1e-6)
    np.testing.assert_allclose(normalized[2], 2.64, atol=1e-5)
    with pytest.raises(ValidationError, match="Normalization"):
        dataset.normalize_image(np.zeros((1, 2, 2)))


def test_load_image_scales_by_bit_depth(tmp_path):
    eight = np.full((4, 5), 255, dtype=np.uint8)
    sixteen = np.full((4, 5), 65535 // 5, dtype=np.uint16)
    io.imsave(str(tmp_path / "a.png"), eight, check_contrast=False)
    io.imsave(str(tmp_path / "b.png"), sixteen, check_contrast=False)
    a = dataset.load_image(tmp_path / "a.png", 3)
    assert a.shape == (3, 4, 5)
    assert a.dtype == np.float32
    np.testing.assert_allclose(a, 1.0)
    np.testing.assert_allclose(dataset.load_image(tmp_path / "b.png"), 0.2, atol=1e-4)


def test_flip_augment_variants():
    base = record("cell")
    variants = dataset.flip_augment(base)
    assert [v.variant for v in variants] == list(dataset.VARIANTS)
    assert [v.id for v in variants] == ["cell_none", "cell_flip_x", "cell_flip_y", "cell_flip_xy"]
    assert all(v.base_id == "cell" for v in variants)
    none, flip_x, flip_y, flip_xy = variants
    np.testing.assert_array_equal(none.image, base.image)
    np.testing.assert_array_equal(flip_x.image, base.image[:, :, ::-1])
    np.testing.assert_array_equal(flip_x.mask, base.mask[:, :, ::-1])
    np.testing.assert_array_equal(flip_y.mask, base.mask[:, ::-1, :])
    np.testing.assert_array_equal(flip_xy.image, base.image[:, ::-1, ::-1])


def test_flip_is_an_involution():
    base = record("cell")
    flip_x = dataset.flip_augment(base)[1]
    again = dataset.flip_augment(
        SampleRecord("x", "lab", "x", "none", flip_x.image, flip_x.mask)
    )[1]
    np.testing.assert_array_equal(again.image, base.image)
    np.testing.assert_array_equal(again.mask, base.mask)


def test_flip_y_moves_top_row_to_bottom():
    mask = np.zeros((4, 5, 5), dtype=np.uint8)
    mask[1, 0, 2] = 1
    base = SampleRecord("c_none", "lab", "c", "none", np.zeros((3, 5, 5), np.float32), mask)
    flip_y = dataset.flip_augment(base)[2]
    assert flip_y.mask[1, 4, 2] == 1
    assert flip_y.mask.sum() == 1


def test_flip_rejects_variants():
    variant = dataset.flip_augment(record("cell"))[1]
    with pytest.raises(AugmentationError):
        dataset.flip_augment(variant)


@pytest.mark.parametrize("n,n_train,n_val", [(585, 468, 117), (10, 8, 2), (5, 4, 1)])
def test_split_sizes(n, n_train, n_val):
    ids = ["img%04d" % i for i in range(n)]
    train_ids, val_ids = dataset.split_dataset(ids, (4, 1), seed=0)
    assert len(train_ids) == n_train
    assert len(val_ids) == n_val
    assert set(train_ids).isdisjoint(val_ids)
    assert sorted(train_ids + val_ids) == ids


def test_split_is_seeded():
    ids = ["img%02d" % i for i in range(20)]
    assert dataset.split_dataset(ids, seed=1) == dataset.split_dataset(ids, seed=1)
    assert dataset.split_dataset(ids, seed=1) != dataset.split_dataset(ids, seed=2)


def test_split_needs_five_bases():
    with pytest.raises(DatasetError, match="at least 5"):
        dataset.split_dataset(["a", "b", "c", "d"])
    with pytest.raises(DatasetError, match="Duplicate"):
        dataset.split_dataset(["a", "a", "b", "c", "d"])


def test_split_before_augmentation():
    bases = [record("b%d" % i) for i in range(6)]
    with pytest.raises(AugmentationError):
        dataset.split_dataset(dataset.augment_all(bases))


def test_no_variant_leaks_across_split():
    bases = [record("b%d" % i) for i in range(12)]
    train_ids, val_ids = dataset.split_dataset(bases, seed=4)
    train = dataset.augment_all(dataset.select(bases, train_ids))
    val = dataset.augment_all(dataset.select(bases, val_ids))
    assert len(train) == 4 * len(train_ids)
    assert {r.base_id for r in train}.isdisjoint({r.base_id for r in val})


def test_records_round_trip(tmp_path, class_set):
    records = dataset.augment_all([record("a"), record("b", source="other")])
    path = tmp_path / "records.npz"
    dataset.save_records(path, records, class_set)
    loaded, loaded_classes = dataset.load_records(path)
    assert loaded_classes == class_set
    assert [r.id for r in loaded] == [r.id for r in records]
    assert loaded[4].source == "other"
    np.testing.assert_array_equal(loaded[3].mask, records[3].mask)
    with pytest.raises(DatasetError):
        dataset.save_records(path, [])


def test_prepare_corpus(synth_corpus, tmp_path, class_set):
    corpus_dir, _ = synth_corpus
    out = tmp_path / "prepared"
    prepared = dataset.prepare_corpus(
        corpus_dir, out, DataConfig(image_size=32), in_channels=3, class_set=class_set
    )
    assert len(prepared.train) == 32
    assert len(prepared.val) == 8
    first = prepared.train[0]
    assert first.image.shape == (3, 32, 32)
    assert first.mask.shape == (4, 32, 32)
    assert first.source == "synthetic"
    assert prepared.stats.n_images == 40

    split = json.loads((out / "split.json").read_text())
    assert len(split["train"]) == 8 and len(split["val"]) == 2
    report = json.loads((out / "stats.json").read_text())
    assert report["sources"]["Total"]["bases"] == 10
    assert report["sources"]["Total"]["records"] == 40
    train, _ = dataset.load_records(out / "train.npz")
    assert len(train) == 32


def test_prepare_corpus_without_annotations(tmp_path):
    with pytest.raises(DatasetError, match="No annotations"):
        dataset.prepare_corpus(tmp_path, tmp_path / "out", DataConfig())
