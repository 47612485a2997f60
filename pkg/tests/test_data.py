import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpd.data import (DATASAURUS_NAMES, DEFAULT_SELECTION, GridSpec, PointSet2D, build_grid, cell_center,
                      datasaurus_grid, denormalize, load_datasaurus, normalize, region_of, synthetic_datasaurus,
                      synthetic_sources, write_datasaurus_tsv)
from rpd.errors import ConfigurationError, IngestionError

coord = st.floats(-1e6, 1e6, allow_nan=False)


def test_normalize_examples():
    np.testing.assert_array_equal(normalize([50.0, 50.0]), [0.0, 0.0])
    np.testing.assert_array_equal(normalize([100.0, 0.0]), [1.0, -1.0])


@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=20))
def test_normalize_round_trip(v):
    np.testing.assert_allclose(denormalize(normalize(v)), v, rtol=1e-12, atol=1e-12)


def test_region_examples():
    assert region_of([0.0, 0.0]) == 4
    assert region_of([-3.0, -3.0], 3.0) == 0
    assert region_of([1.5, 0.0], 3.0) == 5
    assert region_of([-1.5, -1.5], 3.0) == 4
    assert region_of([3.0, 3.0]) == 8
    with pytest.raises(ConfigurationError):
        region_of([0.0, 0.0], 0.0)


@given(coord, coord, st.floats(0.01, 100))
def test_region_partition(x, y, spacing):
    k = region_of([x, y], spacing)
    assert 0 <= k <= 8
    col, row = k % 3, k // 3
    lo, hi = -spacing / 2, spacing / 2
    assert (x < lo, lo <= x < hi, x >= hi)[col]
    assert (y < lo, lo <= y < hi, y >= hi)[row]


def test_cell_centres_are_in_their_region():
    for k in range(9):
        assert region_of(cell_center(k, 2.0), 2.0) == k


@pytest.fixture
def tsv(tmp_path):
    path = tmp_path / "dozen.tsv"
    write_datasaurus_tsv(synthetic_datasaurus(0), path)
    return path


def test_tsv_round_trip(tsv):
    sets = load_datasaurus(tsv)
    assert sorted(sets) == sorted(DATASAURUS_NAMES)
    n_rows = len(tsv.read_text().strip().splitlines()) - 1
    assert sum(len(s) for s in sets.values()) == n_rows
    raw = load_datasaurus(tsv, normalized=False)
    np.testing.assert_allclose(normalize(raw["dino"].points), sets["dino"].points, rtol=1e-15)


def _bad_file(tmp_path, text):
    p = tmp_path / "bad.tsv"
    p.write_text(text)
    return p


@pytest.mark.parametrize("text,where", [
    ("name\tx\ty\ndino\t1\t2\n", ":1:"),
    ("dataset\tx\ty\ndino\t1\t2\ndino\tabc\t2\n", ":3:"),
    ("dataset\tx\ty\ndino\t1\t2\nunicorn\t1\t2\n", ":3:"),
    ("dataset\tx\ty\ndino\t1\n", ":2:"),
])
def test_ingestion_errors_name_lines(tmp_path, text, where):
    with pytest.raises(IngestionError, match=where):
        load_datasaurus(_bad_file(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(IngestionError):
        load_datasaurus(tmp_path / "nope.tsv")


def test_gridspec_validation():
    with pytest.raises(ConfigurationError):
        GridSpec.uniform(0.0)
    with pytest.raises(ConfigurationError):
        GridSpec(selection=DEFAULT_SELECTION[:8])
    with pytest.raises(ConfigurationError):
        GridSpec(spacing=0.0)
    with pytest.raises(ConfigurationError):
        build_grid(synthetic_sources(), GridSpec(selection=("dino",) * 8 + ("nessie",)))


def test_single_point_sources_land_on_centres():
    sources = {n: PointSet2D([[0.0, 0.0]]) for n in DEFAULT_SELECTION}
    g = build_grid(sources, GridSpec.uniform(1.0))
    np.testing.assert_array_equal(g.points, [cell_center(k) for k in range(9)])
    np.testing.assert_array_equal(g.labels, np.arange(9))


def test_standard_grid_geometry():
    sources = synthetic_sources()
    g = datasaurus_grid(0.1)
    assert len(g) == 9 * 142 == 1278
    for k, name in enumerate(DEFAULT_SELECTION):
        radius = np.max(np.linalg.norm(sources[name].points, axis=1))
        cell = g.points[g.labels == k]
        assert len(cell) == len(sources[name])
        assert np.max(np.linalg.norm(cell - cell_center(k), axis=1)) <= 0.1 * radius * (1 + 1e-12)
    np.testing.assert_array_equal(region_of(g.points), g.labels)


def test_hetero_grid_scales():
    spec = GridSpec.hetero()
    assert spec.scales[0] == pytest.approx(0.05)
    assert spec.scales[-1] == pytest.approx(1.0)
    ratios = np.diff(np.log(spec.scales))
    np.testing.assert_allclose(ratios, ratios[0])
    g = datasaurus_grid(hetero=True)
    extents = [np.ptp(g.points[g.labels == k], axis=0).max() for k in range(9)]
    assert len(set(np.round(extents, 9))) == 9


def test_pointset_validation_and_csv(tmp_path):
    with pytest.raises(ConfigurationError):
        PointSet2D([[np.nan, 0.0]])
    with pytest.raises(ConfigurationError):
        PointSet2D([[0.0, 0.0]], labels=[1, 2])
    g = datasaurus_grid(0.1)
    g.to_csv(tmp_path / "g.csv")
    back = PointSet2D.from_csv(tmp_path / "g.csv")
    np.testing.assert_array_equal(back.points, g.points)
    np.testing.assert_array_equal(back.labels, g.labels)
    r = g.replicate(5)
    assert len(r) == 5 * len(g)
    np.testing.assert_array_equal(r.points[len(g):2 * len(g)], g.points)


def test_csv_bad_row(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("cell,x,y\n0,1.0,2.0\n0,oops,1\n")
    with pytest.raises(IngestionError, match=":3:"):
        PointSet2D.from_csv(p)


def test_stand_in_is_deterministic():
    a, b = synthetic_datasaurus(0), synthetic_datasaurus(0)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert all(len(v) == 142 for v in a.values())
