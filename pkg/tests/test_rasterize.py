import numpy as np
import pytest
from multiseg import ClassSet
from multiseg.annotation import AnnotatedObject, Annotation, Bitmap, Polygon, Polyline
from multiseg.rasterize import fill_polygon, rasterize, stroke_polyline


def annotation_of(*objects, size=8):
    return Annotation("cell.png", size, size, objects)


def plane(mask, name):
    return mask[ClassSet().index(name)]


def test_full_frame_polygon():
    square = Polygon(np.array([[0, 0], [7, 0], [7, 7], [0, 7]], dtype=float))
    mask = rasterize(annotation_of(AnnotatedObject("busbar", square)))
    assert mask.shape == (4, 8, 8)
    assert mask.dtype == np.uint8
    assert np.all(plane(mask, "busbar") == 1)
    assert not plane(mask, "crack").any()


def test_bitmap_placed_at_origin():
    patch = np.ones((3, 3), dtype=np.uint8)
    mask = rasterize(annotation_of(AnnotatedObject("dark", Bitmap((1, 1), patch))))
    dark = plane(mask, "dark")
    assert dark.sum() == 9
    assert np.all(dark[1:4, 1:4] == 1)


def test_crack_crossing_busbar_sets_both_planes():
    busbar = Polygon(np.array([[3, 0], [4, 0], [4, 7], [3, 7]], dtype=float))
    crack = Polyline(np.array([[0, 2], [7, 5]], dtype=float), 2)
    mask = rasterize(
        annotation_of(AnnotatedObject("busbar", busbar), AnnotatedObject("crack", crack))
    )
    both = plane(mask, "busbar").astype(bool) & plane(mask, "crack").astype(bool)
    assert both.any()
    assert np.all(mask <= 1)


def test_polygon_winding_fills_interior():
    points = np.array([[1, 1], [6, 1], [6, 6], [1, 6]], dtype=float)
    filled = fill_polygon(points, 8, 8)
    assert filled[1:7, 1:7].all()
    assert not filled[0].any() and not filled[:, 7].any()


def test_self_overlapping_polygon_nonzero_winding():
    # a square traversed twice keeps winding number 2 inside, still filled
    square = [[1, 1], [6, 1], [6, 6], [1, 6]]
    points = np.array(square + square, dtype=float)
    assert fill_polygon(points, 8, 8)[3, 3]


def test_round_brush_thickness():
    points = np.array([[1, 4], [6, 4]], dtype=float)
    thin = stroke_polyline(points, 1, 8, 8)
    thick = stroke_polyline(points, 3, 8, 8)
    np.testing.assert_array_equal(np.nonzero(thin.any(axis=1))[0], [4])
    np.testing.assert_array_equal(np.nonzero(thick.any(axis=1))[0], [3, 4, 5])
    # the round brush reaches half a thickness past the end points
    assert thick[4, 0] and thick[3, 0] and not thick[2, 0]


@pytest.mark.parametrize("seed", range(10))
def test_rasterize_commutes_with_flips(seed):
    rng = np.random.default_rng(seed)
    size = 16
    points = rng.uniform(0, size - 1, size=(4, 2))
    thickness = int(rng.integers(1, 4))
    mask = rasterize(annotation_of(AnnotatedObject("crack", Polyline(points, thickness)), size=size))

    flipped = points.copy()
    flipped[:, 0] = size - 1 - flipped[:, 0]
    mirrored = rasterize(
        annotation_of(AnnotatedObject("crack", Polyline(flipped, thickness)), size=size)
    )
    np.testing.assert_array_equal(mirrored, mask[:, :, ::-1])

    flipped = points.copy()
    flipped[:, 1] = size - 1 - flipped[:, 1]
    mirrored = rasterize(
        annotation_of(AnnotatedObject("crack", Polyline(flipped, thickness)), size=size)
    )
    np.testing.assert_array_equal(mirrored, mask[:, ::-1, :])
