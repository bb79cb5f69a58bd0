import numpy as np
import pytest

from src.core.errors import ArgumentError, IngestionError
from src.services.dataset import (
    apply_stats,
    fit_stats,
    load_csv,
    load_source,
    split_dataset,
    synthetic_classification,
    synthetic_regression,
    tictactoe_endgames,
)


@pytest.fixture
def write_csv(tmp_path):
    def _write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return _write


def test_numeric_csv(write_csv):
    dataset = load_csv(write_csv("x1,x2,y\n1,2,0.5\n3,4,1.5\n5,6,2.5\n"), target="y")
    assert dataset.X.shape == (3, 2)
    np.testing.assert_array_equal(dataset.y, [0.5, 1.5, 2.5])
    assert [c.kind for c in dataset.columns] == ["numeric", "numeric"]


def test_categorical_first_appearance_order(write_csv):
    dataset = load_csv(write_csv("color,x\nb,1\na,2\nb,3\n"))
    np.testing.assert_array_equal(dataset.X[:, 0], [0.0, 1.0, 0.0])
    assert dataset.categories["color"] == ["b", "a"]
    assert dataset.columns[0].kind == "categorical"


def test_known_categories_are_reused(write_csv):
    dataset = load_csv(write_csv("color\na\nb\n"), categories={"color": ["b", "a"]})
    np.testing.assert_array_equal(dataset.X[:, 0], [1.0, 0.0])
    with pytest.raises(IngestionError):
        load_csv(write_csv("color\nc\n", name="other.csv"), categories={"color": ["b", "a"]})


def test_missing_cell_names_row_and_column(write_csv):
    with pytest.raises(IngestionError) as exc:
        load_csv(write_csv("x1,x2,x3\n1,2,3\n4,5,\n"))
    assert exc.value.details == {"row": 2, "column": "x3"}


def test_unparseable_numeric_cell(write_csv):
    with pytest.raises(IngestionError) as exc:
        load_csv(write_csv("x1,x2\n1,2\n3,abc\n"), kinds={"x2": "numeric"})
    assert exc.value.details["row"] == 2
    assert exc.value.details["column"] == "x2"


def test_missing_file_and_empty_file(tmp_path, write_csv):
    with pytest.raises(IngestionError):
        load_csv(tmp_path / "absent.csv")
    with pytest.raises(IngestionError):
        load_csv(write_csv("x1,x2\n"))
    with pytest.raises(IngestionError):
        load_csv(write_csv("", name="blank.csv"))


def test_unknown_target_column(write_csv):
    with pytest.raises(IngestionError):
        load_csv(write_csv("x1\n1\n"), target="y")


def test_tictactoe_endgames():
    dataset = tictactoe_endgames()
    assert dataset.X.shape == (958, 9)
    assert int(dataset.y.sum()) == 626
    assert dataset.target_name == "class"


def test_synthetic_generators_are_seeded():
    first = synthetic_regression(n=50, seed=4)
    second = synthetic_regression(n=50, seed=4)
    np.testing.assert_array_equal(first.X, second.X)
    np.testing.assert_array_equal(first.y, second.y)
    cls = synthetic_classification(n=40, seed=1)
    np.testing.assert_array_equal(cls.y, (cls.X[:, 0] > 0).astype(float))


def test_split_sizes():
    splits = split_dataset(synthetic_regression(n=100, seed=0), seed=0)
    assert (splits.train.num_points, splits.val.num_points, splits.test.num_points) == (60, 20, 20)


def test_stratified_split_keeps_proportions():
    data = synthetic_classification(n=200, seed=2)
    data.y = np.repeat([0.0, 1.0], 100)
    splits = split_dataset(data, stratify=True, seed=5)
    for part in (splits.train, splits.val, splits.test):
        assert abs(part.y.sum() - part.num_points / 2) <= 1


def test_same_seed_same_partition():
    data = synthetic_regression(n=80, seed=0)
    first = split_dataset(data, seed=9)
    second = split_dataset(data, seed=9)
    for name in ("train", "val", "test"):
        np.testing.assert_array_equal(first.indices[name], second.indices[name])


def test_standardization_fitted_on_train_only():
    data = synthetic_regression(n=120, seed=1)
    splits = split_dataset(data, seed=3)
    assert np.all(np.abs(splits.train.X.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(splits.train.X.std(axis=0) - 1.0) < 1e-6)
    raw_train = data.X[splits.indices["train"]]
    np.testing.assert_array_equal(apply_stats(raw_train, splits.stats), splits.train.X)

    shifted = data.subset(np.arange(120))
    shifted.X = shifted.X.copy()
    shifted.X[splits.indices["test"]] += 100.0
    again = split_dataset(shifted, seed=3)
    np.testing.assert_array_equal(again.stats.mean, splits.stats.mean)


def test_constant_column_gets_unit_std():
    data = synthetic_regression(n=30, seed=0)
    data.X[:, 1] = 7.0
    assert fit_stats(data).std[1] == 1.0


def test_rare_class_falls_back_with_warning():
    data = synthetic_classification(n=30, seed=0)
    data.y = np.zeros(30)
    data.y[:2] = 1.0
    splits = split_dataset(data, stratify=True, seed=0)
    assert splits.warnings
    assert splits.train.num_points == 18


def test_bad_fractions_rejected():
    with pytest.raises(ArgumentError) as exc:
        split_dataset(synthetic_regression(n=10), fractions=(0.5, 0.2, 0.2))
    assert exc.value.code == "argument.fractions"


def test_apply_stats_width_mismatch():
    stats = fit_stats(synthetic_regression(n=10, d=4))
    with pytest.raises(ArgumentError):
        apply_stats(np.zeros((2, 3)), stats)


def test_load_source_names(write_csv):
    assert load_source("synthetic:cls").num_points == 512
    assert load_source("synthetic:reg").num_points == 1024
    assert load_source(str(write_csv("a,b\n1,2\n")), target="b").X.shape == (1, 1)


def test_load_source_requires_target_for_supervised_csv(write_csv):
    path = str(write_csv("a,b\n1,2\n"))
    with pytest.raises(ArgumentError) as exc:
        load_source(path, require_target=True)
    assert exc.value.code == "argument.target"
    assert load_source("tictactoe", require_target=True).num_points > 0
