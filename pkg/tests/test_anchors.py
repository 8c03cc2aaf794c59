from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import LookupModel, make_dataset
from silentxai.anchors import Rule, coverage, estimate_precision, find_anchor, sample_under_rule, simplify_rule
from silentxai.errors import EmptyBackground


@pytest.fixture(scope="module")
def ozr_setup(catalog, small_dataset):
    j = catalog.index("Ozr")
    X = np.asarray(small_dataset.X)
    inst = X[X[:, j] == 1][0]
    return LookupModel(len(catalog), j), inst


def test_full_rule_pins_every_bit(small_dataset, catalog):
    x = np.asarray(small_dataset.X[3])
    rule = Rule(tuple((c, int(x[j])) for j, c in enumerate(catalog.codes)))
    S = sample_under_rule(rule, x, small_dataset, 50, seed=1)
    assert np.all(S == x)


def test_empty_rule_matches_background_marginals():
    rng = np.random.default_rng(0)
    p = np.array([0.1, 0.5, 0.8])
    bg = make_dataset((rng.random((400, 3)) < p).astype(int), np.zeros(400))
    S = sample_under_rule(Rule(), np.zeros(3), bg, 4000, seed=2)
    m = np.asarray(bg.X).mean(axis=0)
    # each column is Binomial(4000, m) / 4000
    assert np.all(np.abs(S.mean(axis=0) - m) <= 4 * np.sqrt(m * (1 - m) / 4000))


def test_rule_must_hold_for_instance(small_dataset):
    x = np.asarray(small_dataset.X[0])
    code = small_dataset.catalog.codes[0]
    with pytest.raises(ValueError):
        sample_under_rule(Rule(((code, 1 - int(x[0])),)), x, small_dataset, 10, 0)


def test_empty_background_rejected():
    bg = make_dataset(np.zeros((0, 2)), [])
    with pytest.raises(EmptyBackground):
        sample_under_rule(Rule(), np.zeros(2), bg, 10, 0)


def test_precision_of_deciding_literal(ozr_setup, small_dataset):
    model, inst = ozr_setup
    p, hw = estimate_precision(Rule((("Ozr", 1),)), model, inst, small_dataset, 500, 0)
    assert (p, hw) == (1.0, 0.0)


def test_precision_of_uninformative_rule():
    rng = np.random.default_rng(1)
    X = np.column_stack([rng.random(1000) < 0.3, rng.random(1000) < 0.5]).astype(int)
    bg = make_dataset(X, np.zeros(1000))
    model = LookupModel(2, 0)
    p, hw = estimate_precision(Rule((("f1", 1),)), model, np.array([1, 1]), bg, 5000, 3)
    share = np.asarray(bg.X)[:, 0].mean()
    assert abs(p - share) <= 2 * hw
    assert p == pytest.approx(0.3, abs=0.03)


def test_find_anchor_picks_the_deciding_feature(ozr_setup, small_dataset):
    model, inst = ozr_setup
    res = find_anchor(model, inst, small_dataset, 0.95, n_samples=400, seed=4)
    assert res.found and res.rule.literals == (("Ozr", 1),)
    assert res.model_prediction == "silent"
    assert res.rule.satisfied_by(inst, small_dataset.catalog)[0]
    again = find_anchor(model, inst, small_dataset, 0.95, n_samples=400, seed=4)
    assert again.rule == res.rule and again.precision_estimate == res.precision_estimate


def test_zero_bar_accepts_empty_rule(ozr_setup, small_dataset):
    model, inst = ozr_setup
    res = find_anchor(model, inst, small_dataset, 0.0, n_samples=100)
    assert res.found and len(res.rule) == 0 and res.coverage == 1.0


def test_unreachable_bar_reports_not_found(small_dataset):
    model = LookupModel(len(small_dataset.catalog), None, const=0.5)
    # constant prediction: precision is exactly 1 everywhere, so require > 1
    res = find_anchor(model, small_dataset.X[0], small_dataset, 1.01, n_samples=60, max_literals=1, beam_width=1)
    assert not res.found


def test_coverage_example():
    X = [[1, 1], [1, 1], [1, 1], [1, 1], [1, 0], [0, 1], [0, 0], [0, 0], [1, 0], [0, 1]]
    ds = make_dataset(X, np.zeros(10))
    assert coverage(Rule((("f0", 1), ("f1", 1))), ds) == 0.4
    assert coverage(Rule(), ds) == 1.0
    assert coverage(Rule(), make_dataset(np.zeros((0, 2)), [])) == 0.0


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), max_size=5, unique_by=lambda t: t[0]),
       st.integers(0, 5), st.integers(0, 1), st.integers(0, 1000))
def test_coverage_anti_monotone(lits, extra, bit, seed):
    rng = np.random.default_rng(seed)
    ds = make_dataset(rng.integers(0, 2, (50, 6)), np.zeros(50))
    rule = Rule(tuple((f"f{j}", b) for j, b in lits))
    if f"f{extra}" in rule.codes:
        return
    assert coverage(rule.add(f"f{extra}", bit), ds) <= coverage(rule, ds)


def test_simplify_reduces_to_deciding_literal(ozr_setup, small_dataset, catalog):
    model, inst = ozr_setup
    others = [c for c in catalog.codes if c != "Ozr"][:4]
    big = Rule((("Ozr", 1),) + tuple((c, int(inst[catalog.index(c)])) for c in others))
    assert len(big) == 5
    # every sub-rule keeping Ozr is perfect; every sub-rule dropping it is not
    for size in range(len(big) + 1):
        for sub in combinations(big.literals, size):
            p, hw = estimate_precision(Rule(sub), model, inst, small_dataset, 300, size)
            assert (p - hw >= 0.95) == (("Ozr", 1) in sub)
    assert simplify_rule(big, model, inst, small_dataset, 0.95, n_samples=300).literals == (("Ozr", 1),)


def test_simplify_drops_dummy_literal():
    rng = np.random.default_rng(2)
    bg = make_dataset(rng.integers(0, 2, (200, 3)), np.zeros(200))
    model = LookupModel(3, 0)
    rule = Rule((("f0", 1), ("f2", 0)))
    assert simplify_rule(rule, model, np.array([1, 0, 0]), bg, n_samples=200).literals == (("f0", 1),)


def test_rule_normalisation_and_pretty():
    r = Rule((("Smn", 0), ("Ozr", 1)))
    assert r.literals == (("Ozr", 1), ("Smn", 0))
    assert r.pretty() == "(Ozr > 0.00) AND (Smn <= 0.00)"
    assert Rule().pretty() == "(TRUE)"
    assert r.key() == "Ozr=1&Smn=0"
    with pytest.raises(ValueError):
        Rule((("Ozr", 1), ("Ozr", 0)))
    with pytest.raises(ValueError):
        Rule((("Ozr", 2),))
