import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import power_iteration, sample_sd
from spatialrf.errors import (
    ConfigError,
    DegenerateBandError,
    ExpressionError,
    FeatureMismatchError,
    FormatError,
    OutOfBoundsError,
    ParseError,
    ValidationError,
)
from spatialrf.raster import (
    RasterGrid,
    RasterStack,
    band_math,
    coordinate_layers,
    focal_sd,
    pca_first_component,
    pca_loadings,
    read_ascii_grid,
    read_expression_presets,
    read_stack_manifest,
    slope_aspect,
    write_ascii_grid,
    write_stack,
)


def grid(values, cell=1.0, x0=0.0, y0=0.0):
    return RasterGrid(np.asarray(values, dtype=float), x0, y0, cell)


def test_ascii_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.normal(size=(5, 7))
    values[2, 3] = -9999.0
    g = grid(values, cell=2.5, x0=100.0, y0=-50.0)
    path = tmp_path / "g.asc"
    write_ascii_grid(g, path)
    again = read_ascii_grid(path)
    assert again.geometry() == g.geometry()
    assert np.array_equal(again.values, g.values)
    assert again.mask[2, 3] and again.mask.sum() == 1


def test_ascii_reader_accepts_center_registration_and_case(tmp_path):
    path = tmp_path / "c.asc"
    path.write_text("NCOLS 2\nNROWS 2\nXLLCENTER 0.5\nYLLCENTER 0.5\nCELLSIZE 1\n1 2\n3 4\n")
    g = read_ascii_grid(path)
    assert (g.x_min, g.y_min) == (0.0, 0.0)
    assert g.values.tolist() == [[1, 2], [3, 4]]


def test_ascii_reader_errors(tmp_path):
    path = tmp_path / "bad.asc"
    path.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n")
    with pytest.raises(FormatError):
        read_ascii_grid(path)
    path.write_text("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 x\n")
    with pytest.raises(ParseError):
        read_ascii_grid(path)
    path.write_text("ncols 2\nnrows 1\nxllcorner 0\n1 2\n")
    with pytest.raises(FormatError):
        read_ascii_grid(path)


def test_cell_index_is_half_open():
    g = grid(np.zeros((4, 3)), cell=10.0)
    assert g.cell_index(0.0, 0.0) == (3, 0)
    assert g.cell_index(10.0, 39.999) == (0, 1)
    with pytest.raises(OutOfBoundsError):
        g.cell_index(30.0, 5.0)
    with pytest.raises(OutOfBoundsError):
        g.cell_index(5.0, -0.1)


def test_nan_becomes_nodata():
    g = grid([[1.0, np.nan]])
    assert g.values[0, 1] == g.nodata
    assert np.isnan(g.masked()[0, 1])


def test_stack_manifest_round_trip(tmp_path):
    stack = RasterStack((("a", grid(np.ones((3, 3)))), ("b", grid(np.arange(9.0).reshape(3, 3)))))
    manifest = write_stack(stack, tmp_path / "s")
    again = read_stack_manifest(manifest)
    assert again.names == ("a", "b")
    assert np.array_equal(again["b"].values, stack["b"].values)
    (tmp_path / "m.txt").write_text("a = missing.asc\n")
    with pytest.raises(FormatError):
        read_stack_manifest(tmp_path / "m.txt")


def test_stack_rejects_mismatched_geometry_and_duplicates():
    with pytest.raises(ValidationError):
        RasterStack((("a", grid(np.ones((3, 3)))), ("b", grid(np.ones((3, 4))))))
    with pytest.raises(ValidationError):
        RasterStack((("a", grid(np.ones((3, 3)))), ("a", grid(np.ones((3, 3))))))


def _rgb():
    red = grid([[1.0, 2.0], [0.0, 4.0]])
    green = grid([[3.0, 2.0], [0.0, 1.0]])
    blue = grid([[1.0, 1.0], [1.0, -9999.0]])
    return RasterStack((("red", red), ("green", green), ("blue", blue)))


def test_ngrdi_preset():
    presets = read_expression_presets()
    out = band_math(_rgb(), presets["NGRDI"]).masked()
    assert out[0, 0] == pytest.approx(0.5)
    assert out[0, 1] == 0.0
    assert np.isnan(out[1, 0])  # 0 / 0
    assert out[1, 1] == pytest.approx(-0.6)


def test_band_math_propagates_nodata_only_for_used_bands():
    stack = _rgb()
    assert np.isnan(band_math(stack, "blue * 2").masked()[1, 1])
    assert band_math(stack, "-red + 1").masked()[1, 1] == -3.0


@pytest.mark.parametrize("expr", ["red ** 2", "abs(red)", "red.real", "red[0]", "red if blue else green", "True"])
def test_band_math_rejects_unsupported_syntax(expr):
    with pytest.raises(ExpressionError):
        band_math(_rgb(), expr)


def test_band_math_reports_position():
    with pytest.raises(ExpressionError, match="offset 6"):
        band_math(_rgb(), "red + nir")
    with pytest.raises(ExpressionError, match="syntax error"):
        band_math(_rgb(), "red + ")


def test_focal_sd_matches_direct_computation():
    values = np.arange(1.0, 10.0).reshape(3, 3)
    out = focal_sd(grid(values), 3).masked()
    # centre window holds 1..9
    assert out[1, 1] == pytest.approx(sample_sd(list(range(1, 10))), abs=1e-12)
    assert out[1, 1] == pytest.approx(2.7386127875258306, abs=1e-12)
    # corner window is truncated to the four cells 1, 2, 4, 5
    assert out[0, 0] == pytest.approx(sample_sd([1, 2, 4, 5]), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([3, 5]))
def test_focal_sd_ignores_nodata(seed, window):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(6, 7))
    values[rng.random((6, 7)) < 0.3] = np.nan
    out = focal_sd(grid(values), window).masked()
    half = window // 2
    for r in range(6):
        for c in range(7):
            win = values[max(0, r - half): r + half + 1, max(0, c - half): c + half + 1]
            vals = win[np.isfinite(win)].tolist()
            if len(vals) < 2:
                assert np.isnan(out[r, c])
            else:
                assert out[r, c] == pytest.approx(sample_sd(vals), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("window", [1, 2, 4, 3.0])
def test_focal_sd_window_validation(window):
    with pytest.raises(ConfigError):
        focal_sd(grid(np.ones((4, 4))), window)


def test_pca_matches_power_iteration():
    rng = np.random.default_rng(4)
    base = rng.normal(size=(20, 20))
    bands = [base + 0.3 * rng.normal(size=(20, 20)), 2 * base - rng.normal(size=(20, 20)), rng.normal(size=(20, 20))]
    stack = RasterStack(tuple((f"b{i}", grid(b)) for i, b in enumerate(bands)))
    evals, evecs, _, _ = pca_loadings(stack)
    z = np.column_stack([(b.ravel() - b.mean()) / b.std() for b in bands])
    corr = (z.T @ z / len(z)).tolist()
    value, vec = power_iteration(corr)
    if vec[0] < 0:
        vec = [-v for v in vec]
    assert evals[0] == pytest.approx(value, rel=1e-8)
    assert evecs[:, 0] == pytest.approx(vec, rel=1e-8)
    assert evals.sum() == pytest.approx(3.0)
    pc1 = pca_first_component(stack).masked()
    assert np.var(pc1) == pytest.approx(evals[0], rel=1e-8)


def test_pca_rejects_constant_band():
    stack = RasterStack((("a", grid(np.ones((3, 3)))), ("b", grid(np.arange(9.0).reshape(3, 3)))))
    with pytest.raises(DegenerateBandError):
        pca_loadings(stack)


def _plane(fx, fy, n=5, cell=1.0):
    xs = (np.arange(n) + 0.5) * cell
    ys = (n - np.arange(n) - 0.5) * cell
    return grid(fx * xs[None, :] + fy * ys[:, None], cell=cell)


def test_horn_plane_rising_east():
    slope, aspect = slope_aspect(_plane(1.0, 0.0))
    assert slope.masked()[2, 2] == pytest.approx(math.pi / 4)
    # terrain falls toward the west
    assert aspect.masked()[2, 2] == pytest.approx(3 * math.pi / 2)
    assert slope.mask[0, :].all() and slope.mask[:, -1].all()


def test_horn_plane_rising_north():
    slope, aspect = slope_aspect(_plane(0.0, 1.0, cell=2.0))
    assert slope.masked()[2, 2] == pytest.approx(math.pi / 4)
    assert aspect.masked()[2, 2] == pytest.approx(math.pi)


def test_horn_flat_cells_have_no_aspect():
    slope, aspect = slope_aspect(grid(np.full((4, 4), 7.0)))
    assert slope.masked()[1, 1] == 0.0
    assert np.isnan(aspect.masked()[1, 1])


def test_coordinate_layers_are_cell_centres():
    g = grid(np.zeros((2, 3)), cell=10.0, x0=100.0, y0=0.0)
    layers = coordinate_layers(g)
    assert layers["coord_x"].values[0].tolist() == [105.0, 115.0, 125.0]
    assert layers["coord_y"].values[:, 0].tolist() == [15.0, 5.0]


def test_predict_surface_missing_band():
    from spatialrf.raster import stack_matrix

    with pytest.raises(FeatureMismatchError):
        stack_matrix(_rgb(), ["red", "nir"])
