from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synthmetric.dataset import CATEGORICAL, ColumnSchema, SynthesisMask, from_arrays
from synthmetric.synth import (MvnSpec, SynthesisError, SynthesisPlan, derive_seed, equicorrelation,
                               mvn_correct_synthesis, mvn_incorrect_synthesis, mvn_sample,
                               replicate_rng, synthesize)


def test_mvn_spec_validation():
    with pytest.raises(ValueError, match="symmetric"):
        MvnSpec(np.zeros(2), np.array([[1, 0.5], [0.4, 1]]), 10)
    with pytest.raises(ValueError, match="shape"):
        MvnSpec(np.zeros(3), np.eye(2), 10)
    with pytest.raises(SynthesisError, match="positive definite"):
        mvn_sample(MvnSpec(np.zeros(2), np.array([[1, 2], [2, 1.0]]), 10), np.random.default_rng(0))


def test_mvn_sample_moments():
    rng = np.random.default_rng(0)
    d = mvn_sample(MvnSpec(np.zeros(1), np.eye(1), 100_000), rng)
    assert abs(d["x1"].std() - 1) < 0.01
    d = mvn_sample(MvnSpec(np.zeros(3), np.eye(3), 10_000), rng)
    X = np.column_stack([d[c] for c in d.names])
    assert np.all(np.abs(X.mean(axis=0)) < 0.02 * 2)
    C = np.corrcoef(X, rowvar=False)
    assert np.all(np.abs(C[np.triu_indices(3, 1)]) < 0.02 * 2)


def test_correct_synthesis_reproduces_sample_covariance(mvn_data):
    o = mvn_data(5000, dim=3, rho=0.6)
    s = mvn_correct_synthesis(o, np.random.default_rng(1))
    Xo = np.column_stack([o[c] for c in o.names])
    Xs = np.column_stack([s[c] for c in s.names])
    np.testing.assert_allclose(np.cov(Xs, rowvar=False), np.cov(Xo, rowvar=False), atol=0.08)
    assert s.role == "synthetic"
    again = mvn_correct_synthesis(o, np.random.default_rng(1))
    assert again.equals(s)


def test_correct_synthesis_zero_variance_error():
    d = from_arrays({"a": [1.0, 1.0, 1.0], "b": [1.0, 2.0, 3.0]})
    with pytest.raises(SynthesisError, match="zero-variance"):
        mvn_correct_synthesis(d, np.random.default_rng(0))


def test_incorrect_synthesis(mvn_data):
    o = mvn_data(5000, dim=3, rho=0.8)
    s = mvn_incorrect_synthesis(o, np.random.default_rng(2))
    Xs = np.column_stack([s[c] for c in s.names])
    C = np.corrcoef(Xs, rowvar=False)
    assert np.all(np.abs(C[np.triu_indices(3, 1)]) < 0.05)
    np.testing.assert_allclose(Xs.std(axis=0), [o[c].std() for c in o.names], rtol=0.05)
    part = mvn_incorrect_synthesis(o, np.random.default_rng(2), ["x2"])
    assert np.array_equal(part["x1"], o["x1"]) and not np.array_equal(part["x2"], o["x2"])


def test_seed_derivation():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert len({derive_seed(1, i) for i in range(100)}) == 100
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
    a = replicate_rng(5, 0).random(3)
    assert np.array_equal(a, replicate_rng(5, 0).random(3))


def test_plan_validation_and_json(mixed_data):
    d = mixed_data(50)
    plan = SynthesisPlan.default(d, "cart", m=2, seed=7, columns=["income", "age"])
    assert plan.visit_order == ("age", "income")
    back = SynthesisPlan.from_dict(plan.to_dict())
    assert back == plan
    with pytest.raises(ValueError, match="method"):
        SynthesisPlan.default(d, "magic")
    with pytest.raises(ValueError, match="visit_order"):
        SynthesisPlan("cart", ("age",), SynthesisMask(frozenset({"age", "sex"})))
    with pytest.raises(ValueError, match="m must"):
        SynthesisPlan("cart", ("age",), SynthesisMask(frozenset({"age"})), m=0)


@pytest.mark.parametrize("method", ["bootstrap", "parametric_normal", "parametric_rank", "cart"])
def test_synthesize_methods(mixed_data, method):
    d = mixed_data(300)
    syns = synthesize(d, SynthesisPlan.default(d, method, m=3, seed=11))
    assert len(syns) == 3
    assert all(s.schema == d.schema and s.n == d.n and s.role == "synthetic" for s in syns)
    assert not syns[0].equals(syns[1])
    again = synthesize(d, SynthesisPlan.default(d, method, m=3, seed=11))
    assert all(a.equals(b) for a, b in zip(syns, again))


@pytest.mark.parametrize("method", ["parametric_normal", "parametric_rank", "cart"])
def test_unsynthesized_columns_are_copied(mixed_data, method):
    d = mixed_data(200)
    s = synthesize(d, SynthesisPlan.default(d, method, seed=3, columns=["income", "region"]))[0]
    assert np.array_equal(s["age"], d["age"]) and np.array_equal(s["sex"], d["sex"])
    assert not np.array_equal(s["income"], d["income"])


def test_bootstrap_breaks_dependence(mvn_data):
    o = mvn_data(4000, dim=3, rho=0.7)
    s = synthesize(o, SynthesisPlan.default(o, "bootstrap", seed=1))[0]
    for c in o.names:
        assert set(np.unique(s[c])) <= set(np.unique(o[c]))
        assert abs(s[c].mean() - o[c].mean()) < 0.1
    assert abs(np.corrcoef(s["x1"], s["x2"])[0, 1]) < 0.06


def test_parametric_normal_keeps_partial_correlations(mvn_data):
    o = mvn_data(5000, dim=10, rho=0.5)
    s = synthesize(o, SynthesisPlan.default(o, "parametric_normal", seed=4, columns=["x1", "x2"]))[0]
    for a in ("x1", "x2"):
        for b in ("x3", "x7"):
            assert abs(np.corrcoef(s[a], s[b])[0, 1] - np.corrcoef(o[a], o[b])[0, 1]) < 0.05
    assert abs(np.corrcoef(s["x1"], s["x2"])[0, 1] - np.corrcoef(o["x1"], o["x2"])[0, 1]) < 0.05


def test_rank_method_stays_in_range_normal_may_not():
    r = np.random.default_rng(0)
    x = r.normal(size=500)
    y = np.exp(r.normal(size=500) + 0.5 * x)  # positive, skewed
    d = from_arrays({"x": x, "y": y})
    rank = synthesize(d, SynthesisPlan.default(d, "parametric_rank", seed=1, columns=["y"]))[0]
    assert rank["y"].min() >= y.min() and rank["y"].max() <= y.max()
    normal = synthesize(d, SynthesisPlan.default(d, "parametric_normal", seed=1, columns=["y"]))[0]
    assert normal["y"].min() < 0  # impossible negative values


def test_categorical_synthesis_with_absent_level():
    schema = (ColumnSchema("g", CATEGORICAL, ("a", "b", "c", "d")),)
    r = np.random.default_rng(0)
    codes = r.choice([0, 1, 3], 300)
    d = from_arrays({"g": codes, "x": r.normal(size=300)},
                    schema + (ColumnSchema("x", "numeric"),))
    s = synthesize(d, SynthesisPlan.default(d, "parametric_normal", seed=2))[0]
    assert 2 not in set(s["g"])


def test_synthesis_failure_names_column():
    d = from_arrays({"a": [1.0, 2.0], "b": [3.0, 4.0]})
    with pytest.raises(SynthesisError, match="'b'"):
        synthesize(d, SynthesisPlan.default(d, "parametric_normal", seed=0))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["bootstrap", "parametric_normal", "cart"]))
def test_synthesis_deterministic_property(seed, method):
    r = np.random.default_rng(1)
    d = from_arrays({"a": r.normal(size=60), "b": r.normal(size=60)})
    p = SynthesisPlan.default(d, method, m=2, seed=seed)
    a, b = synthesize(d, p), synthesize(d, p)
    assert all(x.equals(y) for x, y in zip(a, b))
