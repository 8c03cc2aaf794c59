"""One test per acceptance criterion, each run at its stated tolerance.

Every test prints a single ``criterion N: PASS|FAIL ...`` line; the lines are
repeated in the terminal summary.
"""
import json
import math
import shutil
import time
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest

from conftest import make_dataset
from silentxai import cli
from silentxai.anchors import Rule, estimate_precision
from silentxai.corpus import profile, programs_from_json
from silentxai.cost import NvmCosts, fn_overhead, fp_overhead, overhead_slope, total_overhead
from silentxai.features import FeatureCatalog
from silentxai.corpus import load_csv
from silentxai.models import MLP, load_model
from silentxai.seeds import derive_seed
from silentxai.shapley import (candidate_count, combined_shap, correlation_report, enumerate_combined,
                               feature_ranking, set_bit_mean, shapley_exact_all, shapley_sampled_all)
from silentxai.transform import SelectionPolicy, account_costs, apply_store_verify, select_stores


def load_run(out):
    cat = FeatureCatalog.from_json((out / "catalog.json").read_text())
    ds = load_csv(out / "dataset.csv", cat)
    return ds, cli.load_explanations(out / "explanations.csv", ds)


def test_criterion_1_cost_identity(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(derive_seed(0, "acceptance", 1))
    worst, slope_ok = 0.0, True
    for _ in range(1000):
        m = rng.uniform(0, 1e4)
        p = rng.uniform()
        c_read = rng.uniform(0.1, 10)
        c_store = c_read * rng.uniform(1.02, 75) if rng.random() < 0.9 else c_read * rng.uniform(0.1, 3)
        costs = NvmCosts(c_read, c_store)
        total = total_overhead(m, p, costs)
        parts = fp_overhead(m, p, costs) + fn_overhead(m, p, costs)
        worst = max(worst, abs(total - parts) / max(1.0, abs(total)))
        want = np.sign(2 * c_read - c_store)
        finite = np.sign(total_overhead(m, 1.0, costs) - total_overhead(m, 0.0, costs)) if m > 0 else 0.0
        slope_ok &= np.sign(overhead_slope(m, costs)) == want and finite == want
    elapsed = time.perf_counter() - t0
    verdict(1, worst <= 1e-12 and slope_ok and elapsed < 1.0,
            f"max scaled gap {worst:.2e} (<=1e-12), slope signs ok={slope_ok}, {elapsed:.3f}s (<1s)")


def symmetric_net(n, rng):
    """Random MLP over n features whose inputs 0 and 1 share weights and whose last input is ignored."""
    net = MLP.init(n, (int(rng.integers(3, 9)), int(rng.integers(2, 6)), 1), rng)
    for b in net.biases:
        b += rng.normal(0, 0.2, size=b.shape)
    net.weights[0][1] = net.weights[0][0]
    net.weights[0][n - 1] = 0.0
    return net


def test_criterion_2_shapley_axioms(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(derive_seed(0, "acceptance", 2))
    eff = sym = dummy = 0.0
    for trial in range(50):
        n = int(rng.integers(3, 11))
        net = symmetric_net(n, rng)
        B = rng.integers(0, 2, (int(rng.integers(4, 12)), n))
        B = np.vstack([B, B[:, [1, 0, *range(2, n)]]])
        x = rng.integers(0, 2, n)
        x[1] = x[0]
        phi, base = shapley_exact_all(net, x, B, None)
        mean_f = float(net.predict_proba(B.astype(float)).mean())
        fx = float(net.predict_proba(x.astype(float)))
        eff = max(eff, abs(phi.sum() - (fx - mean_f)))
        sym = max(sym, abs(phi[0] - phi[1]))
        dummy = max(dummy, abs(phi[n - 1]))
    elapsed = time.perf_counter() - t0
    ok = eff < 1e-6 and sym <= 1e-9 and dummy <= 1e-9 and elapsed < 60
    verdict(2, ok, f"efficiency {eff:.1e} (<1e-6), symmetry {sym:.1e}, dummy {dummy:.1e} (<=1e-9), {elapsed:.1f}s (<60s)")


def test_criterion_3_sampled_vs_exact(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(derive_seed(0, "acceptance", 3))
    net = MLP.init(8, (16, 8, 1), rng)
    B = rng.integers(0, 2, (64, 8))
    x = rng.integers(0, 2, 8)
    exact, _ = shapley_exact_all(net, x, B, None)
    approx, _ = shapley_sampled_all(net, x, B, 20_000, derive_seed(0, "acceptance", "perm"))
    mae = np.abs(exact - approx)
    elapsed = time.perf_counter() - t0
    verdict(3, bool(np.all(mae < 0.02)) and elapsed < 120,
            f"worst per-feature abs error {mae.max():.4f} (<0.02), {elapsed:.1f}s (<120s)")


def test_criterion_4_beeswarm_claims(verdict, default_run):
    t0 = time.perf_counter()
    ds, ex = load_run(default_run)
    top3 = [c for c, _ in feature_ranking(ex, ds.catalog)[:3]]
    means = {c: set_bit_mean(ex, ds, c) for c in ("Ozr", "ZER", "Oin", "ADD")}
    ok = ({"Ozr", "ZER"} <= set(top3) and means["Ozr"] > 0 and means["ZER"] > 0
          and means["Oin"] < 0 and means["ADD"] < 0)
    detail = ", ".join(f"{c} {v:+.4f}" for c, v in means.items())
    elapsed = time.perf_counter() - t0
    verdict(4, ok and elapsed < 600, f"top3 {top3}; set-bit means {detail}")


def spearman_of(out):
    recs = [r for r in cli.load_combined(out / "combined.csv") if r.k == 3]
    return correlation_report(recs, 120)


def test_criterion_5_combined_shap_soundness(verdict, default_run, recall_run):
    prec, rec = spearman_of(default_run), spearman_of(recall_run)
    ok = prec.defined and rec.defined and prec.spearman >= 0.5 and prec.spearman - rec.spearman >= 0.05
    verdict(5, ok, f"spearman precision-tuned {prec.spearman:.3f} (>=0.5, n={prec.n}), "
                   f"recall-tuned {rec.spearman:.3f}, gap {prec.spearman - rec.spearman:.3f} (>=0.05)")


def brute(ds, S, k, prune, min_support):
    codes = ds.catalog.codes
    out = {}
    for vec in combinations(codes, k):
        r = combined_shap(ds, vec, S)
        if r.support >= min_support:
            out[vec] = r
    for r in list(out.values()):
        if r.support and r.combined_shap > prune:
            for c in codes:
                if c not in r.feature_codes:
                    vec = tuple(sorted(r.feature_codes + (c,), key=codes.index))
                    e = combined_shap(ds, vec, S)
                    if e.support >= max(min_support, 1):
                        out[vec] = e
    return out


def test_criterion_6_enumeration_exactness(verdict):
    rng = np.random.default_rng(derive_seed(0, "acceptance", 6))
    mismatches = checked = 0
    for n in (5, 6, 7, 8):
        for rep in range(5):
            X = (rng.random((120, n)) < rng.uniform(0.3, 0.8)).astype(int)
            ds = make_dataset(X, rng.integers(0, 2, 120))
            S = rng.normal(0.05, 0.2, (120, n))
            prune, ms = float(rng.choice([0.0, 0.05, 0.1])), int(rng.choice([0, 1, 10]))
            got = {r.feature_codes: r for r in enumerate_combined(ds, S, 3, prune, ms)}
            want = brute(ds, S, 3, prune, ms)
            checked += len(want)
            if set(got) != set(want):
                mismatches += 1
                continue
            for key, r in want.items():
                g = got[key]
                same = g.support == r.support and (
                    r.support == 0 or (abs(g.combined_shap - r.combined_shap) < 1e-12
                                       and abs(g.silent_ratio - r.silent_ratio) < 1e-12))
                mismatches += not same
    count = candidate_count(76, 3)
    verdict(6, mismatches == 0 and count == 70300,
            f"{checked} records compared, {mismatches} mismatches; C(76,3) = {count}")


def test_criterion_7_anchor_bar(verdict, default_run, tmp_path):
    for name in ("catalog.json", "dataset.csv", "model.json"):
        shutil.copy(default_run / name, tmp_path / name)
    t0 = time.perf_counter()
    assert cli.main(["anchor", "--out", str(tmp_path)]) == 0
    elapsed = time.perf_counter() - t0
    result = json.loads((tmp_path / "anchors.json").read_text())
    ds, _ = load_run(default_run)
    model = load_model(tmp_path / "model.json")
    index = {sid: i for i, sid in enumerate(ds.ids)}
    worst, nullifier_ok, n_null = 1.0, True, 0
    for a in result["anchors"]:
        x = ds.X[index[a["instance_id"]]]
        rule = Rule(tuple((l["code"], l["bit"]) for l in a["literals"]))
        p, _ = estimate_precision(rule, model, x, ds, 4 * 1000, derive_seed(1, "revalidate", a["instance_id"]))
        worst = min(worst, p)
        if x[ds.catalog.index("Ozr")] or x[ds.catalog.index("ZER")]:
            n_null += 1
            nullifier_ok &= bool({"Ozr", "ZER"} & set(rule.codes))
    n = len(result["anchors"])
    ok = n > 0 and worst >= 0.92 and nullifier_ok and elapsed < 300
    verdict(7, ok, f"{n} anchors (of 20 instances); worst re-validated precision {worst:.3f} (>=0.92); "
                   f"{n_null} nullifier instances, Ozr/ZER literal in each: {nullifier_ok}; {elapsed:.1f}s (<300s)")


def test_criterion_8_transform(verdict, default_run):
    t0 = time.perf_counter()
    ds, _ = load_run(default_run)
    programs = programs_from_json((default_run / "programs.json").read_text())
    rng = np.random.default_rng(derive_seed(0, "acceptance", 8))
    preserved = 0
    for _ in range(100):
        p = programs[int(rng.integers(len(programs)))]
        ids = p.store_ids()
        sel = {s for s in ids if rng.random() < 0.5}
        seed = int(rng.integers(2**32))
        a = profile(p, seed, 1, keep_states=True)
        b = profile(apply_store_verify(p, sel), seed, 1, keep_states=True)
        preserved += a.final_states == b.final_states
    policy = SelectionPolicy.by_rules([Rule((("Ozr", 1),)), Rule((("ZER", 1),))])
    costs = NvmCosts(1.0, 2.5)
    base = trans = 0.0
    counts_match = True
    for i, p in enumerate(programs):
        sel = select_stores(p, ds.catalog, policy)
        seed = derive_seed(0, "acceptance", p.name)
        pb = profile(p, seed, 4)
        r = account_costs(pb, profile(apply_store_verify(p, sel), seed, 4), costs, p.name)
        base += r.baseline_cost
        trans += r.transformed_cost
        counts_match &= r.eliminated_writes == sum(pb.counts[s].silent for s in sel)
    elapsed = time.perf_counter() - t0
    ok = preserved == 100 and trans <= base and counts_match and elapsed < 120
    verdict(8, ok, f"{preserved}/100 triples preserved; cost {base:.1f} -> {trans:.1f}; "
                   f"eliminated writes match silent counts: {counts_match}; {elapsed:.1f}s (<120s)")


def test_criterion_9_determinism(verdict, default_run, tmp_path):
    assert cli.run_pipeline(["--out", str(tmp_path)]) == 0
    names = sorted(str(p.relative_to(default_run)) for p in default_run.rglob("*.csv"))
    again = sorted(str(p.relative_to(tmp_path)) for p in tmp_path.rglob("*.csv"))
    differ = [n for n in names if (default_run / n).read_bytes() != (tmp_path / n).read_bytes()]
    expected = {"dataset.csv", "explanations.csv", "combined.csv", "transform.csv", "figures/ranking.csv",
                *(f"figures/{f}.csv" for f in ("beeswarm", "scatter", "contributions", "overhead"))}
    ok = names == again and not differ and set(names) == expected
    verdict(9, ok, f"{len(names)} CSV files compared, differing: {differ or 'none'}")
