import math
from collections import deque
import numpy as np
import pytest
from multiseg import analyze
from multiseg.errors import DatasetError, ValidationError


def flood_fill_areas(plane, connectivity):
    """Component areas in order of first pixel, by breadth-first search."""
    if connectivity == 4:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        steps = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]
    seen = np.zeros(plane.shape, dtype=bool)
    areas = []
    for r in range(plane.shape[0]):
        for c in range(plane.shape[1]):
            if not plane[r, c] or seen[r, c]:
                continue
            seen[r, c] = True
            queue, area = deque([(r, c)]), 0
            while queue:
                y, x = queue.popleft()
                area += 1
                for dr, dc in steps:
                    ny, nx = y + dr, x + dc
                    if (
                        0 <= ny < plane.shape[0]
                        and 0 <= nx < plane.shape[1]
                        and plane[ny, nx]
                        and not seen[ny, nx]
                    ):
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            areas.append(area)
    return areas


def test_diagonal_pair_depends_on_connectivity():
    plane = np.array([[1, 0], [0, 1]])
    assert len(analyze.connected_components(plane, 8)[1]) == 1
    assert len(analyze.connected_components(plane, 4)[1]) == 2


def test_empty_and_full_planes():
    labels, components = analyze.connected_components(np.zeros((4, 4)))
    assert components == []
    assert not labels.any()
    labels, components = analyze.connected_components(np.ones((3, 5)))
    assert len(components) == 1
    assert components[0].area == 15
    assert components[0].perimeter == 16
    assert components[0].bbox == (0, 0, 2, 4)


def test_single_pixel():
    plane = np.zeros((5, 5))
    plane[2, 3] = 1
    (component,) = analyze.connected_components(plane)[1]
    assert component.area == 1
    assert component.perimeter == 4
    assert component.centroid == (2.0, 3.0)
    assert component.slope == 0.0


def test_bar_geometry():
    plane = np.zeros((3, 7))
    plane[1, 1:6] = 1
    (component,) = analyze.connected_components(plane)[1]
    assert component.area == 5
    assert component.perimeter == 12
    assert component.slope == pytest.approx(0.0)

    vertical = analyze.component_geometry(np.arange(5), np.zeros(5))
    assert vertical.slope == pytest.approx(-math.pi / 2)


def test_diagonal_slopes():
    rising = analyze.component_geometry([2, 1, 0], [0, 1, 2])
    falling = analyze.component_geometry([0, 1, 2], [0, 1, 2])
    assert rising.slope == pytest.approx(math.pi / 4)
    assert falling.slope == pytest.approx(-math.pi / 4)


def test_labels_follow_raster_order():
    plane = np.array([[0, 0, 1], [1, 0, 0], [1, 0, 1]])
    labels, components = analyze.connected_components(plane, 4)
    assert labels[0, 2] == 1
    assert labels[1, 0] == 2
    assert labels[2, 2] == 3
    assert [c.label for c in components] == [1, 2, 3]


@pytest.mark.parametrize("seed", range(100))
def test_matches_flood_fill(seed):
    rng = np.random.default_rng(seed)
    plane = rng.random((int(rng.integers(1, 12)), int(rng.integers(1, 12)))) > 0.55
    for connectivity in (4, 8):
        labels, components = analyze.connected_components(plane, connectivity)
        assert [c.area for c in components] == flood_fill_areas(plane, connectivity)
        assert labels.max(initial=0) == len(components)
        assert np.count_nonzero(labels) == np.count_nonzero(plane)


def test_invalid_connectivity():
    with pytest.raises(ValidationError, match="4 or 8"):
        analyze.connected_components(np.zeros((2, 2)), 6)


def test_component_filter():
    plane = np.zeros((6, 6))
    plane[0, 0] = 1
    plane[3:5, 3:5] = 1
    components = analyze.connected_components(plane)[1]
    assert [c.area for c in analyze.component_filter(components, 2)] == [4]


def test_describe():
    result = analyze.describe([1, 2, 3, 4])
    assert result["n"] == 4
    assert result["mean"] == 2.5
    assert result["median"] == 2.5
    assert result["sd"] == pytest.approx(np.std([1, 2, 3, 4], ddof=1))
    assert result["min"] == 1.0 and result["max"] == 4.0
    assert analyze.describe([])["n"] == 0


def crack_mask(*rows, size=8):
    mask = np.zeros((4, size, size), dtype=np.uint8)
    for r in rows:
        mask[2, r, 1:-1] = 1
    return mask


def test_crack_count_summary(tmp_path):
    gt = {"b": crack_mask(1, 5), "a": crack_mask(3)}
    predictions = {"model": {"a": crack_mask(3), "b": crack_mask(1)}}
    summary = analyze.crack_count_summary(gt, predictions)
    assert summary.images == ["a", "b"]
    assert summary.counts["GT"] == [1, 2]
    assert summary.counts["model"] == [1, 1]
    assert summary.stats["GT"]["mean"] == 1.5
    assert summary.geometry["model"]["area"]["mean"] == 6.0
    assert len(summary.rows) == 4
    assert summary.rows[1] == {
        "image": "b",
        "source": "GT",
        "count": 2,
        "areas": "6;6",
        "perimeters": "14;14",
        "slopes": "0.000000;0.000000",
    }
    path = tmp_path / "rows.csv"
    analyze.write_rows_csv(summary.rows, path)
    assert path.read_text().splitlines()[0] == ",".join(analyze.EXPORT_FIELDS)


def test_crack_count_summary_alignment():
    gt = {"a": crack_mask(1), "b": crack_mask(2)}
    with pytest.raises(DatasetError, match="aligned"):
        analyze.crack_count_summary(gt, {"model": {"a": crack_mask(1)}})
    with pytest.raises(ValidationError, match="reserved"):
        analyze.crack_count_summary(gt, {"GT": gt})
    with pytest.raises(DatasetError):
        analyze.crack_count_summary({}, {})


@pytest.mark.parametrize("seed", range(10))
def test_geometry_is_flip_equivariant(seed):
    rng = np.random.default_rng(seed)
    plane = rng.random((10, 10)) > 0.5
    labels, components = analyze.connected_components(plane)
    _, flipped = analyze.connected_components(plane[:, ::-1])
    assert sum(c.area for c in components) == np.count_nonzero(plane)
    assert sorted(c.area for c in components) == sorted(c.area for c in flipped)
    assert sorted(c.perimeter for c in components) == sorted(c.perimeter for c in flipped)
    for c in components:
        rows, cols = np.nonzero(labels == c.label)
        mirrored = analyze.component_geometry(rows, 9 - cols)
        if abs(abs(c.slope) - math.pi / 2) > 1e-9:
            assert mirrored.slope == pytest.approx(-c.slope, abs=1e-9)


@pytest.mark.parametrize("connectivity", [4, 8])
def test_plane_without_background(connectivity):
    labels, components = analyze.connected_components(np.ones((2, 2)), connectivity)
    assert len(components) == 1
    assert components[0].area == 4
    assert components[0].label == 1
    assert np.all(labels == 1)
