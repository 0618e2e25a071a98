import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_psd
from kkperm.errors import DomainError, ParseError
from kkperm.ingest import (
    LabeledSample,
    curves_to_operators,
    load_curves,
    load_operators,
    load_sample,
    simulate_gaussian_curves,
    write_curves,
    write_operators,
)
from kkperm.linalg import GridCurve


def test_three_curve_fixture(data_dir):
    s = load_curves(data_dir / "three_curves.csv")
    assert s.kind == "curve" and len(s) == 3
    assert s.labels == ["a", "b", "a"]
    assert np.array_equal(s.items[1].values, [0.9, 0.8, 0.3])
    assert s.label_order() == ["a", "b"]
    assert [len(g) for g in s.groups()] == [2, 1]


def test_identity_operator_fixture_crlf(data_dir):
    s = load_operators(data_dir / "identity_op.csv")
    assert s.kind == "operator" and s.labels == ["eye"]
    assert np.array_equal(s.items[0], np.eye(3))


@pytest.mark.parametrize(
    "name, line",
    [("nan_cell.csv", 2), ("ragged.csv", 3), ("bad_row.csv", 3), ("asym_op.csv", 1)],
)
def test_parse_errors_name_line(data_dir, name, line):
    with pytest.raises(ParseError) as exc:
        load_sample(data_dir / name)
    assert f":{line}" in str(exc.value) and exc.value.exit_code == 3


def test_bad_grid_rejected(data_dir):
    with pytest.raises(ParseError):
        load_curves(data_dir / "bad_grid.csv")


def test_truncated_file_rejected(data_dir):
    with pytest.raises(ParseError, match="truncated"):
        load_sample(data_dir / "truncated.csv")


def test_truncated_operator_file(tmp_path, rng):
    sample = LabeledSample([random_psd(rng, 2) for _ in range(3)], ["a", "b", "c"])
    write_operators(tmp_path / "ops.csv", sample)
    lines = (tmp_path / "ops.csv").read_text().splitlines()
    (tmp_path / "cut.csv").write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(ParseError):
        load_operators(tmp_path / "cut.csv")


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_sample(tmp_path / "nope.csv")


def test_design_columns(data_dir):
    s = load_curves(data_dir / "latin_curves.csv")
    assert set(s.design) == {"row", "col"} and len(s) == 16
    assert s.design["row"][:4] == ["r0"] * 4


def test_round_trip_curves_bit_identical(tmp_path, rng):
    g = np.sort(rng.uniform(0, 1, 13))
    curves = [GridCurve(g, rng.standard_normal(13) * 10.0 ** rng.integers(-5, 5)) for _ in range(50)]
    labels = [f"g{i % 4}" for i in range(50)]
    write_curves(tmp_path / "c.csv", LabeledSample(curves, labels, {"block": [i % 2 for i in range(50)]}))
    back = load_curves(tmp_path / "c.csv")
    assert back.labels == labels
    assert all(np.array_equal(a.values, b.values) and np.array_equal(a.grid, b.grid) for a, b in zip(curves, back.items))
    assert back.design["block"] == [str(i % 2) for i in range(50)]


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=30))
def test_round_trip_scalars(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("s") / "s.csv"
    write_curves(path, LabeledSample(values, ["x"] * len(values)))
    back = load_sample(path)
    assert back.kind == "scalar" and [float(v) for v in back.items] == values


def test_round_trip_vectors(tmp_path, rng):
    x = rng.standard_normal((6, 4))
    write_curves(tmp_path / "v.csv", LabeledSample(list(x), list("aabbcc")))
    back = load_sample(tmp_path / "v.csv")
    assert back.kind == "vector" and np.array_equal(np.stack(back.items), x)


def test_round_trip_operators(tmp_path, rng):
    ops = [random_psd(rng, 5) for _ in range(10)]
    write_operators(tmp_path / "o.csv", LabeledSample(ops, ["a"] * 5 + ["b"] * 5))
    back = load_sample(tmp_path / "o.csv")
    assert max(np.abs(a - b).max() for a, b in zip(ops, back.items)) <= 1e-12


# -- grouping into operators ---------------------------------------------------


def _curves(rng, per_label, labels=("a", "b")):
    g = np.linspace(0, 1, 6)
    items, labs = [], []
    for lab in labels:
        for _ in range(per_label):
            items.append(GridCurve(g, rng.standard_normal(6)))
            labs.append(lab)
    return LabeledSample(items, labs)


def test_curves_to_operators_counts(rng):
    out = curves_to_operators(_curves(rng, 20), 10, seed=1)
    assert out.kind == "operator" and out.labels == ["a", "a", "b", "b"]


@given(st.integers(2, 6), st.integers(1, 4))
def test_curves_to_operators_count_property(size, groups):
    s = _curves(np.random.default_rng(size), size * groups)
    assert len(curves_to_operators(s, size, 0)) == 2 * groups


def test_curves_to_operators_errors(rng):
    with pytest.raises(DomainError):
        curves_to_operators(_curves(rng, 20), 1, 0)
    with pytest.raises(DomainError):
        curves_to_operators(_curves(rng, 21), 10, 0)


def test_curves_to_operators_deterministic(rng):
    s = _curves(rng, 20)
    a, b = curves_to_operators(s, 5, 3), curves_to_operators(s, 5, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a.items, b.items))
    c = curves_to_operators(s, 5, 4)
    assert not all(np.array_equal(x, y) for x, y in zip(a.items, c.items))


# -- simulation ---------------------------------------------------------------


def test_simulate_zero_covariance():
    mean = GridCurve(np.linspace(0, 1, 5), np.arange(5.0))
    for c in simulate_gaussian_curves(mean, np.zeros((5, 5)), 4, 0):
        assert np.array_equal(c.values, mean.values)


def test_simulate_dimension_mismatch():
    with pytest.raises(DomainError):
        simulate_gaussian_curves(GridCurve([0.0, 1.0], [0.0, 0.0]), np.eye(3), 2, 0)


def test_simulate_moments():
    g = np.linspace(0.1, 1, 8)
    cov = np.diag(g)
    draws = np.stack([c.values for c in simulate_gaussian_curves(GridCurve(g, np.zeros(8)), cov, 5000, 1)])
    assert np.all(np.abs(draws.var(axis=0, ddof=1) / g - 1) <= 0.05)
    k = np.minimum.outer(g, g)
    draws = np.stack([c.values for c in simulate_gaussian_curves(GridCurve(g, np.zeros(8)), k, 5000, 2)])
    emp = np.cov(draws.T)
    assert np.linalg.norm(emp - k) / np.linalg.norm(k) <= 0.1


def test_simulate_deterministic():
    g = GridCurve(np.linspace(0, 1, 4), np.zeros(4))
    a = simulate_gaussian_curves(g, np.eye(4), 3, 5)
    b = simulate_gaussian_curves(g, np.eye(4), 3, 5)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
