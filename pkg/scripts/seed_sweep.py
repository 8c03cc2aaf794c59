"""Precision-tuned vs recall-tuned model across master seeds.

For each seed: generate the corpus, train both models on it, explain and
combine, then print the beeswarm claims and the combined-SHAP correlations.
"""
import argparse
import json
import shutil
from pathlib import Path

from silentxai.cli import load_combined, load_explanations, run_pipeline
from silentxai.corpus import load_csv
from silentxai.features import FeatureCatalog
from silentxai.shapley import correlation_report, feature_ranking, set_bit_mean

MODES = {"p": "precision_over_recall", "r": "recall_over_precision"}


def summarise(out: Path) -> dict:
    cat = FeatureCatalog.from_json((out / "catalog.json").read_text())
    ds = load_csv(out / "dataset.csv", cat)
    ex = load_explanations(out / "explanations.csv", ds)
    corr = correlation_report([r for r in load_combined(out / "combined.csv") if r.k == 3], 120)
    metrics = json.loads((out / "metrics.json").read_text())["heldout"]
    return {
        "top3": [c for c, _ in feature_ranking(ex, ds.catalog)[:3]],
        "means": {c: set_bit_mean(ex, ds, c) for c in ("Ozr", "ZER", "Oin", "ADD")},
        "spearman": corr.spearman,
        "pearson": corr.pearson,
        "precision": metrics["precision"],
        "recall": metrics["recall"],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--work", default="sweep")
    args = ap.parse_args()
    work = Path(args.work)
    print("seed mode  P     R     spearman pearson top3            Ozr     ZER     Oin     ADD")
    for seed in (int(s) for s in args.seeds.split(",")):
        gen_dir = work / f"s{seed}_p"
        common = ["--seed", str(seed)]
        if run_pipeline(common + ["--out", str(gen_dir)], ("gen",)):
            raise SystemExit(1)
        for tag, mode in MODES.items():
            out = work / f"s{seed}_{tag}"
            if out != gen_dir:
                out.mkdir(parents=True, exist_ok=True)
                for name in ("catalog.json", "programs.json", "dataset.csv"):
                    shutil.copy(gen_dir / name, out / name)
            code = run_pipeline(common + ["--out", str(out)], ("train", "explain", "combine"),
                                {"train": ["--mode", mode]})
            if code:
                raise SystemExit(code)
            s = summarise(out)
            m = s["means"]
            print(f"{seed:<4} {tag:<5} {s['precision']:.3f} {s['recall']:.3f} {s['spearman']:.3f}    "
                  f"{s['pearson']:.3f}   {','.join(s['top3']):<15} "
                  f"{m['Ozr']:+.3f}  {m['ZER']:+.3f}  {m['Oin']:+.3f}  {m['ADD']:+.3f}", flush=True)


if __name__ == "__main__":
    main()
