from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synthmetric.dataset import CATEGORICAL, NUMERIC, ColumnSchema, SynthesisMask, from_arrays
from synthmetric.design import (DesignError, DesignSpec, DesignWarning, FormulaError, build_design,
                                model_matrix, parse_formula, response_vector, stack)


def test_complete_order2_design_dimension(mvn_data):
    d = mvn_data(200, dim=10)
    design, ind = build_design(d, d.replace(role="synthetic"))
    assert design.k == 1 + 10 + 45 == 56
    assert design.effective_df == 55
    assert design.column_labels[0] == "(Intercept)"
    assert design.column_labels[11] == "x1:x2"
    assert ind.tolist() == [0] * 200 + [1] * 200


def test_incomplete_effective_df_two_of_ten(mvn_data):
    d = mvn_data(200, dim=10)
    mask = SynthesisMask(frozenset({"x1", "x2"}))
    design, _ = build_design(d, d.replace(role="synthetic"), mask=mask)
    # 2 main effects + x1:x2 + 16 interactions with the 8 unsynthesized variables
    assert design.effective_df == 19
    assert design.k == 56


def test_orders_and_squares(mvn_data):
    d = mvn_data(100, dim=5)
    s = d.replace(role="synthetic")
    assert build_design(d, s, DesignSpec(1))[0].k == 6
    assert build_design(d, s, DesignSpec(3))[0].k == 1 + 5 + 10 + 10
    assert build_design(d, s, DesignSpec(2, include_squares=True))[0].k == 16 + 5
    with pytest.raises(DesignError):
        DesignSpec(4)


def test_categorical_dummies_and_interactions(mixed_data):
    d = mixed_data(200)
    design, _ = build_design(d, d.replace(role="synthetic"))
    labels = design.column_labels
    assert "sex[m]" in labels and "region[b]" in labels and "region[c]" in labels
    assert "sex[m]:region[b]" in labels
    # mains: age, sex[m], region[b], region[c], income
    # pairs: age:sex 1, age:region 2, age:income 1, sex:region 2, sex:income 1, region:income 2
    assert design.k == 1 + 5 + 9
    assert design.sources[labels.index("sex[m]:region[b]")] == frozenset({"sex", "region"})


def test_constant_column_dropped_with_warning():
    schema = (ColumnSchema("x", NUMERIC), ColumnSchema("g", CATEGORICAL, ("a", "b", "c")))
    r = np.random.default_rng(0)
    # level "c" never occurs -> its dummy is constant zero
    d = from_arrays({"x": r.normal(size=50), "g": r.integers(0, 2, 50)}, schema)
    with pytest.warns(DesignWarning, match="constant"):
        design, _ = build_design(d, d.replace(role="synthetic"))
    assert "g[c]" not in design.column_labels
    assert "g[c]" in design.dropped


def test_aliased_column_dropped():
    r = np.random.default_rng(1)
    x = r.normal(size=60)
    d = from_arrays({"a": x, "b": 2 * x + 1})
    with pytest.warns(DesignWarning, match="aliased"):
        design, _ = build_design(d, d.replace(role="synthetic"), DesignSpec(1))
    assert design.column_labels == ("(Intercept)", "a")


def test_memory_budget(mvn_data):
    d = mvn_data(100, dim=10)
    with pytest.raises(DesignError, match="budget"):
        build_design(d, d.replace(role="synthetic"), DesignSpec(2, memory_budget=1000))


def test_stack_harmonizes():
    o = from_arrays({"g": ["a"]}, (ColumnSchema("g", CATEGORICAL, ("a",)),))
    s = from_arrays({"g": ["b"]}, (ColumnSchema("g", CATEGORICAL, ("b",)),), role="synthetic")
    st_ = stack(o, s)
    assert st_.labels("g") == ["a", "b"]


def test_parse_formula():
    f = parse_formula("y ~ a + b + a:b")
    assert f.response == "y" and f.terms == (("a",), ("b",), ("a", "b"))
    assert f.variables == ["a", "b"]
    assert str(f) == "y ~ a + b + a:b"
    assert parse_formula("y~a+a").terms == (("a",),)


@pytest.mark.parametrize("text,pos", [
    ("y ~ + x", 4),
    ("y x", 2),
    ("~ x", 0),
    ("y ~ x +", 7),
    ("y ~ x $ z", 6),
    ("y ~ x:", 6),
])
def test_formula_errors_report_position(text, pos):
    with pytest.raises(FormulaError) as exc:
        parse_formula(text)
    assert exc.value.position == pos
    assert f"position {pos}" in str(exc.value)


def test_formula_semantic_errors(mixed_data):
    with pytest.raises(FormulaError, match="response"):
        parse_formula("y ~ y + x")
    with pytest.raises(FormulaError, match="repeated"):
        parse_formula("y ~ x:x")
    with pytest.raises(FormulaError, match="family"):
        parse_formula("y ~ x", "poisson")
    with pytest.raises(FormulaError, match="unknown column"):
        model_matrix(mixed_data(10), parse_formula("income ~ nope"))


def test_model_matrix_raw_scale(mixed_data):
    d = mixed_data(30)
    X, labels = model_matrix(d, parse_formula("income ~ age + region + age:sex"))
    assert labels == ["(Intercept)", "age", "region[b]", "region[c]", "age:sex[m]"]
    np.testing.assert_array_equal(X[:, 1], d["age"])
    np.testing.assert_array_equal(X[:, 4], d["age"] * (d["sex"] == 1))


def test_response_vector_families(mixed_data):
    d = mixed_data(30)
    assert response_vector(d, parse_formula("income ~ age")).dtype == np.float64
    y = response_vector(d, parse_formula("sex ~ age", "binomial"))
    assert set(np.unique(y)) <= {0.0, 1.0}
    assert np.array_equal(response_vector(d, parse_formula("region ~ age", "multinomial")), d["region"])
    with pytest.raises(FormulaError):
        response_vector(d, parse_formula("region ~ age", "binomial"))
    with pytest.raises(FormulaError):
        response_vector(d, parse_formula("income ~ age", "binomial"))
    with pytest.raises(FormulaError):
        response_vector(d, parse_formula("sex ~ age", "gaussian"))
    with pytest.raises(FormulaError):
        response_vector(d, parse_formula("income ~ age", "multinomial"))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(1, 3), st.data())
def test_effective_df_counts_columns_touching_synthesized(dim, order, data):
    chosen = data.draw(st.sets(st.integers(0, dim - 1), min_size=1))
    r = np.random.default_rng(dim)
    d = from_arrays({f"x{j}": r.normal(size=60) for j in range(dim)})
    mask = SynthesisMask(frozenset(f"x{j}" for j in chosen))
    design, _ = build_design(d, d.replace(role="synthetic"), DesignSpec(order), mask)
    from math import comb
    fixed = dim - len(chosen)
    expected = sum(comb(dim, r) - comb(fixed, r) for r in range(1, order + 1))
    assert design.effective_df == expected
