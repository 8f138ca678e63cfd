import numpy as np
import pytest

from conftest import make_table
from spatialrf.errors import (
    ConfigError,
    ExtractionError,
    OutOfBoundsError,
    ParseError,
    SchemaError,
    ValidationError,
)
from spatialrf.raster import RasterGrid, RasterStack
from spatialrf.samples import (
    SampleRow,
    SampleTable,
    Task,
    add_geolocation_features,
    extract_at_samples,
    read_samples_csv,
    write_samples_csv,
)

CSV = """id,group,x,y,response,ndvi,elev
1,0,10.5,20.5,3.25,0.1,100
2,0,11.5,20.5,4.0,0.2,101
3,1,50.0,60.0,1.5,0.3,99.5
"""


def test_read_csv(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text(CSV)
    table = read_samples_csv(path)
    assert table.feature_names == ("ndvi", "elev")
    assert table.task is Task.REGRESSION
    assert table.features[2].tolist() == [0.3, 99.5]
    assert table.response.tolist() == [3.25, 4.0, 1.5]
    assert table.rows[0] == SampleRow(1, 0, 10.5, 20.5, (0.1, 100.0), 3.25)


def test_csv_round_trip(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text(CSV)
    table = read_samples_csv(path)
    out = tmp_path / "o.csv"
    write_samples_csv(table, out)
    again = read_samples_csv(out)
    assert np.array_equal(again.features, table.features)
    assert np.array_equal(again.response, table.response)
    assert np.array_equal(again.ids, table.ids)


def test_schema_renames_required_columns(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text(CSV.replace("group", "polygon").replace("response", "lulc"))
    table = read_samples_csv(path, schema={"group": "polygon", "response": "lulc"}, task="classification")
    assert table.labels == ["1.5", "3.25", "4.0"]
    with pytest.raises(ConfigError):
        read_samples_csv(path, schema={"colour": "x"})


def test_missing_column(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text(CSV.replace("group", "grp"))
    with pytest.raises(SchemaError, match="group"):
        read_samples_csv(path)


def test_unparseable_value_reports_row(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text(CSV.replace("0.2", "n/a"))
    with pytest.raises(ParseError, match="row 3.*ndvi"):
        read_samples_csv(path)


def test_missing_file(tmp_path):
    with pytest.raises(SchemaError):
        read_samples_csv(tmp_path / "nope.csv")


def test_duplicate_ids_rejected():
    with pytest.raises(ValidationError, match="duplicate sample ids"):
        SampleTable.from_arrays([1, 1], [0, 0], [0, 1], [0, 0], [[1.0], [2.0]], [1.0, 2.0], ["f"], "regression")


def test_non_finite_feature_rejected():
    with pytest.raises(ValidationError):
        make_table([[1.0], [np.nan]], [1.0, 2.0])


def test_duplicate_feature_names_rejected():
    with pytest.raises(ValidationError):
        make_table(np.zeros((2, 2)), [1.0, 2.0], names=["a", "a"])


def test_table_is_immutable():
    table = make_table(np.zeros((2, 1)), [1.0, 2.0])
    with pytest.raises(ValueError):
        table.features[0, 0] = 5.0


def test_subset_and_select():
    table = make_table(np.arange(6.0).reshape(3, 2), [1.0, 2.0, 3.0])
    sub = table.subset([2, 0])
    assert sub.ids.tolist() == [2, 0]
    sel = table.select_features(["f2"])
    assert sel.features[:, 0].tolist() == [1.0, 3.0, 5.0]
    with pytest.raises(ConfigError):
        table.select_features(["f9"])


def _stack():
    a = RasterGrid(np.array([[1.0, 2.0], [3.0, -9999.0]]), 0.0, 0.0, 10.0)
    b = RasterGrid(np.array([[5.0, 6.0], [7.0, 8.0]]), 0.0, 0.0, 10.0)
    return RasterStack((("a", a), ("b", b)))


def test_extract_at_samples():
    table = extract_at_samples(_stack(), [(1, 0, 5.0, 15.0, "x"), (2, 0, 5.0, 5.0, "y")])
    assert table.task is Task.CLASSIFICATION
    assert table.features.tolist() == [[1.0, 5.0], [3.0, 7.0]]


def test_extract_errors():
    with pytest.raises(ExtractionError):
        extract_at_samples(_stack(), [(1, 0, 15.0, 5.0, 1.0)])
    with pytest.raises(OutOfBoundsError):
        extract_at_samples(_stack(), [(1, 0, 25.0, 5.0, 1.0)])


def test_geolocation_features():
    table = make_table(np.ones((2, 1)), [1.0, 2.0], xy=[(3.0, 4.0), (5.0, 6.0)])
    geo = add_geolocation_features(table)
    assert geo.feature_names == ("f1", "coord_x", "coord_y")
    assert geo.features[1].tolist() == [1.0, 5.0, 6.0]
    with pytest.raises(ValidationError):
        add_geolocation_features(geo)


def test_task_parse():
    assert Task.parse(" Regression ") is Task.REGRESSION
    with pytest.raises(ConfigError):
        Task.parse("clustering")
