import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import averaging_program
from silentxai.corpus import (BinOp, Const, CorpusConfig, Dataset, Inc, Index, Load, Location, LoopStmt, Ref,
                              StoreRecord, StoreStmt, TinyProgram, Zero, build_dataset, extract_features,
                              generate_corpus, label_records, load_csv, profile, program_from_dict, program_to_dict,
                              programs_from_json, programs_to_json, save_csv)
from silentxai.errors import InvalidConfig, SchemaMismatch, UnknownFeature
from silentxai.features import Category, Feature, FeatureCatalog, catalog_default

DATA = __import__("pathlib").Path(__file__).parent / "data"


def codes_of(vec, cat):
    return {c for c, b in zip(cat.codes, vec) if b}


# ------------------------------------------------------------- generator


def test_generation_is_deterministic():
    a = programs_to_json(generate_corpus(1, CorpusConfig(n_programs=15)))
    b = programs_to_json(generate_corpus(1, CorpusConfig(n_programs=15)))
    assert a == b


def test_program_depends_only_on_seed_and_index():
    few = generate_corpus(4, CorpusConfig(n_programs=3))
    many = generate_corpus(4, CorpusConfig(n_programs=8))
    assert few == many[:3]


def test_full_nullifier_rate_gives_only_zero_writes():
    for p in generate_corpus(2, CorpusConfig(n_programs=10, nullifier_rate=1.0)):
        for s, _ in p.stores():
            assert s.value == Zero()


def test_invalid_rates_rejected():
    with pytest.raises(InvalidConfig):
        generate_corpus(0, CorpusConfig(nullifier_rate=1.5))
    with pytest.raises(InvalidConfig):
        generate_corpus(0, CorpusConfig(loop_depth_dist=(0.5, 0.5, 0.5, 0.5)))


def test_generated_programs_are_well_formed(small_programs):
    for p in small_programs:
        p.validate()
        assert max(d for _, d in p.stores()) <= 3


def test_default_silent_fraction_brackets_ten_percent(catalog):
    ds = build_dataset(generate_corpus(1), catalog, input_seed=2)
    assert 0.05 <= ds.silent_fraction() <= 0.2


def test_json_round_trip(small_programs):
    text = programs_to_json(small_programs)
    assert programs_from_json(text) == small_programs
    assert json.loads(text)["version"] == 1
    p = small_programs[0]
    assert program_from_dict(json.loads(json.dumps(program_to_dict(p)))) == p


# ------------------------------------------------------------ extractor


def test_averaging_zero_init_features(catalog):
    feats = extract_features(averaging_program(), catalog)
    assert {"Ozr", "Vin", "sz8", "Sl0", "Smn", "ZER", "Scm"} <= codes_of(feats["avg:sum_init"], catalog)


def test_averaging_accumulate_features(catalog):
    feats = extract_features(averaging_program(), catalog)
    assert {"Vin", "sz8", "Sl1", "Smn", "Oic"} <= codes_of(feats["avg:sum_acc"], catalog)


def test_averaging_average_features(catalog):
    feats = extract_features(averaging_program(), catalog)
    assert {"Vdb", "Sl0", "Smn", "Scm", "DIV"} <= codes_of(feats["avg:average"], catalog)


def test_exactly_one_depth_label(small_programs, catalog):
    depth_codes = ["Sl0", "Sl1", "Sl2", "Sl3"]
    for p in small_programs:
        feats = extract_features(p, catalog)
        for s, d in p.stores():
            on = [c for c in depth_codes if feats[s.id][catalog.index(c)]]
            assert on == [f"Sl{d}"]


def test_unknown_feature_code():
    cat = FeatureCatalog(catalog_default().features + (Feature("XYZ", Category.LABEL, ""),))
    with pytest.raises(UnknownFeature):
        extract_features(averaging_program(), cat)


# -------------------------------------------------------------- profiler


def one_store_program(value, target_init="zero", trips=0, fill=0, extra=()):
    locs = (Location("t", "static", "array", 8, target_init, fill_value=fill),) + tuple(extra)
    idx = Index("iv", var="i") if trips else Index()
    s = StoreStmt("x:s000", Ref("t", idx), value)
    stmts = (LoopStmt("i", trips, (s,)),) if trips else (s,)
    return TinyProgram("x", locs, stmts)


def test_zero_into_zero_is_silent():
    prof = profile(one_store_program(Zero()), input_seed=0, n_inputs=1)
    assert prof.pairs()["x:s000"] == (1, 1)


def test_increment_loop_never_silent():
    locs = (Location("i_var", "stack", "scalar", 1, "random"),)
    s = StoreStmt("x:s000", Ref("i_var"), Inc(Ref("i_var"), 1))
    p = TinyProgram("x", locs, (LoopStmt("i", 5, (s,)),))
    assert profile(p, 3, n_inputs=1).pairs()["x:s000"] == (0, 5)


def _product_program(v_fill, w_fill):
    locs = (
        Location("x", "heap", "array", 3, "zero"),
        Location("v", "heap", "array", 3, "fill", fill_value=v_fill),
        Location("w", "heap", "array", 3, "fill", fill_value=w_fill),
    )
    i = Index("iv", var="i")
    val = BinOp("add", Load(Ref("x", i)), BinOp("mul", Load(Ref("v", i)), Load(Ref("w", i))))
    return TinyProgram("pp", locs, (LoopStmt("i", 3, (StoreStmt("pp:s000", Ref("x", i), val),)),))


def test_product_accumulation_hand_trace():
    # x starts at 0; v = 0 -> every x[i] += 0 rewrites 0
    assert profile(_product_program(0, 5), 0, 1).pairs()["pp:s000"] == (3, 3)
    # v = 2, w = 3 -> x[i] becomes 6, never equal to the old 0
    assert profile(_product_program(2, 3), 0, 1).pairs()["pp:s000"] == (0, 3)


def test_division_by_zero_skips_input():
    extra = (Location("d", "stack", "scalar", 1, "fill", fill_value=0),)
    p = one_store_program(BinOp("div", Const(4), Load(Ref("d"))), extra=extra)
    prof = profile(p, 0, n_inputs=3)
    assert prof.skipped_inputs == 3 and prof.pairs()["x:s000"] == (0, 0)


def test_counts_accumulate_over_inputs():
    prof = profile(one_store_program(Zero(), trips=4), 0, n_inputs=3)
    assert prof.pairs()["x:s000"] == (12, 12)


def test_nullifiers_into_zero_cells_always_silent(small_programs, catalog):
    for p in small_programs:
        locs = p.location_map
        feats = extract_features(p, catalog)
        prof = profile(p, 9, 2)
        for s, _ in p.stores():
            v = codes_of(feats[s.id], catalog)
            if {"Ozr", "ZER"} & v and locs[s.target.loc].init == "zero":
                c = prof.counts[s.id]
                assert c.silent == c.total


def test_pure_increments_never_silent(small_programs):
    for p in small_programs:
        prof = profile(p, 9, 2)
        for s, _ in p.stores():
            if isinstance(s.value, Inc):
                assert prof.counts[s.id].silent == 0


# ------------------------------------------------------------- labelling


def test_label_rule(catalog):
    bits = np.zeros(len(catalog), dtype=np.uint8)
    ds = label_records({"a": (7, 7), "b": (6, 7), "c": (0, 0)}, {"a": bits, "b": bits, "c": bits}, catalog)
    assert [r.label for r in ds.records] == ["silent", "noisy"]
    assert ds.ids == ["a", "b"]


def test_label_invariant_over_dataset(small_dataset):
    for r in small_dataset.records:
        assert (r.label == "silent") == (r.silent_count == r.total_count)


def test_identical_vectors_can_disagree(small_dataset):
    by_vec = {}
    for r in small_dataset.records:
        by_vec.setdefault(r.features, set()).add(r.label)
    assert any(len(v) == 2 for v in by_vec.values())


def test_record_validation():
    with pytest.raises(ValueError):
        StoreRecord("s", (0,), 3, 2)
    with pytest.raises(ValueError):
        StoreRecord("s", (0,), 0, 0)


def test_dataset_width_checked(catalog):
    with pytest.raises(ValueError):
        Dataset(catalog, [StoreRecord("s", (0, 1), 0, 1)])


# ------------------------------------------------------------------- CSV


def test_csv_round_trip(small_dataset, tmp_path, catalog):
    path = tmp_path / "d.csv"
    save_csv(small_dataset, path)
    back = load_csv(path, catalog)
    assert back.records == small_dataset.records
    assert b"\r\n" not in path.read_bytes()


def test_csv_missing_label_column(small_dataset, tmp_path, catalog):
    path = tmp_path / "d.csv"
    save_csv(small_dataset, path)
    lines = path.read_text().splitlines()
    cut = [",".join(l.split(",")[:-1]) for l in lines]
    path.write_text("\n".join(cut) + "\n")
    with pytest.raises(SchemaMismatch) as err:
        load_csv(path, catalog)
    assert err.value.missing == ["label"]


def test_csv_hand_written_fixture(catalog):
    ds = load_csv(DATA / "five.csv", catalog)
    assert len(ds) == 5
    assert codes_of(ds.records[0].features, catalog) == {"Vin", "sz8", "ZER", "Ozr", "Msc", "Smn", "Sl0", "Scm"}
    assert [r.label for r in ds.records] == ["silent", "noisy", "noisy", "silent", "noisy"]
    assert (ds.records[2].silent_count, ds.records[2].total_count) == (3, 12)
    assert codes_of(ds.records[4].features, catalog) == {"Vpt", "sz8", "Old", "Pin", "Mhp", "Sl2", "Es1"}


def test_csv_contradicting_label(tmp_path, catalog):
    text = (DATA / "five.csv").read_text().replace("4,4,silent", "4,4,noisy", 1)
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(SchemaMismatch):
        load_csv(path, catalog)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_generation_and_profiling_deterministic(seed):
    cfg = CorpusConfig(n_programs=2)
    a = generate_corpus(seed, cfg)
    assert a == generate_corpus(seed, cfg)
    for p in a:
        assert profile(p, seed, 2).pairs() == profile(p, seed, 2).pairs()
