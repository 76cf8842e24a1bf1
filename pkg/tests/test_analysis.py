import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import rankdata

from coinn.analysis import (
    DERIVED, MEASURED, TARGET, FeatureTable, UndefinedCoefficient, average_ranks,
    build_feature_table, correlation_matrix, feature_names, pearson, spearman,
)
from coinn.correlations import CorrelationChoice, evaluate_correlation
from coinn.datamodel import Dataset
from conftest import make_point


def brute_pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    da = math.sqrt(sum((x - ma) ** 2 for x in a))
    db = math.sqrt(sum((y - mb) ** 2 for y in b))
    return num / (da * db)


def test_pearson_hand_value():
    # centred sums: Sxy = 18, Sxx = 10, Syy = 46.8
    r = pearson([1, 2, 3, 4, 5], [2, 4, 5, 4, 11])
    assert r == pytest.approx(18 / math.sqrt(468), rel=1e-14)
    # Sxy = 2.5, Sxx = 2, Syy = 19/6
    assert pearson([1, 2, 3], [1, 2, 3.5]) == pytest.approx(2.5 / math.sqrt(19 / 3), rel=1e-14)


def test_pearson_perfect_and_constant():
    assert pearson([1, 2, 3], [-2, -4, -6]) == -1.0
    with pytest.raises(UndefinedCoefficient):
        pearson([1, 1, 1], [1, 2, 3])


def test_spearman_ties():
    assert spearman([1, 2, 2, 4], [10, 20, 20, 40]) == pytest.approx(1.0)
    assert average_ranks([3, 1, 3, 2]).tolist() == [3.5, 1.0, 3.5, 2.0]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=2, max_size=30))
def test_average_ranks_match_scipy(values):
    assert np.array_equal(average_ranks(values), rankdata(values, method="average"))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 40), st.floats(0.01, 100), st.floats(-100, 100))
def test_coefficients_invariant_to_affine_maps(seed, n, scale, shift):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(size=n)
    assert pearson(scale * a + shift, b) == pytest.approx(pearson(a, b), abs=1e-9)
    assert pearson(a, b) == pytest.approx(pearson(b, a), abs=1e-15)
    # spearman is also invariant under strictly increasing maps
    assert spearman(np.exp(a), b) == pytest.approx(spearman(a, b), abs=1e-12)
    assert -1 <= pearson(a, b) <= 1


def test_matrix_matches_brute_force():
    rng = np.random.default_rng(11)
    data = rng.normal(size=(10, 6))
    data[:, 2] = np.round(data[:, 2])  # ties for the rank variant
    table = FeatureTable(tuple("abcdef"), tuple(data.T))
    for method in ("pearson", "spearman"):
        m = correlation_matrix(table, method)
        cols = [rankdata(c) if method == "spearman" else c for c in data.T]
        for i in range(6):
            for j in range(6):
                assert m.values[i, j] == pytest.approx(brute_pearson(list(cols[i]), list(cols[j])), abs=1e-12)
        assert np.array_equal(m.values, m.values.T)


def test_constant_column_gives_nan_entries():
    table = FeatureTable(("a", "b", "c"), ([1.0, 2, 3], [5.0, 5, 5], [3.0, 1, 2]))
    m = correlation_matrix(table)
    assert all(math.isnan(m["b", n]) for n in "abc")
    assert m["a", "a"] == 1.0 and not math.isnan(m["a", "c"])


def test_unknown_method():
    with pytest.raises(ValueError):
        correlation_matrix(FeatureTable(("a",), ([1.0, 2.0],)), "kendall")


def dataset(n=12):
    rng = np.random.default_rng(0)
    return Dataset([make_point(x=float(rng.uniform(0.05, 0.95)), g=float(rng.uniform(143, 242)),
                               exp=f"E{i % 3}", dpdz=float(rng.uniform(1e3, 2e4))) for i in range(n)])


def test_feature_table_shape_and_values():
    ds = dataset()
    table = build_feature_table(ds)
    assert table.names == MEASURED + DERIVED + (TARGET,) == feature_names(ds)
    assert table.to_array().shape == (12, len(table.names))
    p = ds.points[4]
    assert table["sun_mishima"][4] == evaluate_correlation(CorrelationChoice(), p)[0]
    assert table["awad"][4] == evaluate_correlation(CorrelationChoice("awad_muzychka"), p)[0]
    assert table["Re_l"][4] == pytest.approx(p.flow.g_flux * (1 - p.fluid.x) * p.geometry.id / p.fluid.mu_l)
    assert table["Re_2ph"][4] == pytest.approx(
        p.flow.g_flux * p.geometry.id / ((1 - p.fluid.x) * p.fluid.mu_l + p.fluid.x * p.fluid.mu_v))
    assert np.array_equal(table[TARGET], [q.dpdz_exp for q in ds])


def test_feature_table_is_pure_and_selectable():
    ds = dataset()
    a = build_feature_table(ds, ["x", "Re_v", "sun_mishima"])
    b = build_feature_table(ds, ["x", "Re_v", "sun_mishima"])
    assert a.names == ("x", "Re_v", "sun_mishima")
    assert all(np.array_equal(u, v) for u, v in zip(a.columns, b.columns))
    with pytest.raises(KeyError):
        build_feature_table(ds, ["nope"])


def test_features_defined_at_quality_bounds():
    ds = Dataset([make_point(x=0.0), make_point(x=1.0), make_point(x=0.5)])
    table = build_feature_table(ds)
    assert np.all(np.isfinite(table.to_array()))


def test_composition_columns_are_features():
    ds = Dataset([make_point(composition={"R32": 0.5 + 0.1 * i}) for i in range(3)])
    assert "comp_R32" in feature_names(ds)
    assert build_feature_table(ds)["comp_R32"].tolist() == pytest.approx([0.5, 0.6, 0.7])


def test_matrix_exports(tmp_path):
    table = FeatureTable(("a", "b", "k"), ([1.0, 2, 3], [1.0, 3, 2], [4.0, 4, 4]))
    m = correlation_matrix(table, "spearman")
    m.to_csv(tmp_path / "m.csv")
    m.to_json(tmp_path / "m.json")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "spearman,a,b,k" and lines[3] == "k,,,"
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["names"] == ["a", "b", "k"] and doc["values"][2] == [None, None, None]
    assert doc["values"][0][1] == pytest.approx(0.5)
