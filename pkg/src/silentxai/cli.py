"""Command-line pipeline: gen -> train -> explain -> combine -> anchor -> transform -> report.

Every subcommand reads and writes files in one run directory (``--out``).
All randomness comes from one master seed; each stage draws its own sub-seed
as ``derive_seed(master, stage)``.

Exit codes: 0 success, 1 domain error, 2 usage error or missing input.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import svg
from .anchors import Rule, find_anchor, simplify_rule
from .corpus import (CorpusConfig, Dataset, build_dataset, generate_corpus, load_csv, profile,
                     programs_from_json, programs_to_json, save_csv)
from .cost import NvmCosts, overhead_curve, regime_advice
from .errors import InvalidConfig, SilentXaiError
from .features import FeatureCatalog, catalog_default, pearson_reduce
from .models import (ForestConfig, MlpConfig, SplitConfig, evaluate, load_model, split_indices, train_forest,
                     train_mlp, tune_threshold)
from .seeds import derive_seed
from .shapley import (DEFAULT_DRAWS, DEFAULT_PERMUTATIONS, CombinedShapRecord, Explanation, beeswarm_data,
                      combined_shap, correlation_report, enumerate_combined, explain_dataset, feature_contributions,
                      feature_ranking, shap_matrix, subsample_background)
from .transform import (SelectionPolicy, account_costs, apply_store_verify, combine_reports, reports_to_csv,
                        select_stores)


class UsageError(Exception):
    """Bad invocation or a missing upstream artifact (exit code 2)."""


# ------------------------------------------------------------------ config


@dataclass
class ExplainConfig:
    method: str = "sampled"
    n_permutations: int = DEFAULT_PERMUTATIONS
    n_imputation_draws: int | None = DEFAULT_DRAWS
    # None keeps the whole dataset as background
    background_size: int | None = None


@dataclass
class CombineConfig:
    k: int = 3
    prune_threshold: float = 0.2
    min_support: int = 120


@dataclass
class AnchorConfig:
    min_precision: float = 0.95
    beam_width: int = 4
    max_literals: int = 8
    n_samples: int = 1000
    n_instances: int = 20
    simplify: bool = True


@dataclass
class TransformConfig:
    policy: str = "rules"
    # each entry is a conjunction such as "Ozr=1" or "Ozr=1&Msc=1"; a store is
    # selected when any entry holds
    rules: tuple = ("Ozr=1", "ZER=1")
    threshold: float | None = None
    n_inputs: int = 4


@dataclass
class ReportConfig:
    top_n: int = 10
    min_support: int = 120
    contribution_codes: tuple = ("Ozr", "Smn", "Msc")
    n_contribution_vectors: int = 12
    overhead_m: float = 1000.0


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "run"
    threads: int = 1
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    n_inputs: int = 4
    pearson_threshold: float | None = 0.95
    model: str = "mlp"
    mode: str = "precision_over_recall"
    # None: 1.0 when tuning for precision, n_noisy/n_silent when tuning for recall
    pos_weight: float | str | None = None
    train_frac: float = 0.8
    mlp: MlpConfig = field(default_factory=MlpConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    combine: CombineConfig = field(default_factory=CombineConfig)
    anchors: AnchorConfig = field(default_factory=AnchorConfig)
    costs: NvmCosts = field(default_factory=NvmCosts)
    transform: TransformConfig = field(default_factory=TransformConfig)
    report: ReportConfig = field(default_factory=ReportConfig)

    def sub_seed(self, stage: str) -> int:
        return derive_seed(self.seed, stage)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return _merge(cls(), d)


def _merge(obj, d: dict):
    """Copy of dataclass ``obj`` with fields overridden from ``d`` (recursively)."""
    if not isinstance(d, dict):
        raise InvalidConfig(f"expected an object for {type(obj).__name__}")
    names = {f.name for f in dataclasses.fields(obj)}
    unknown = set(d) - names
    if unknown:
        raise InvalidConfig(f"unknown {type(obj).__name__} keys: {sorted(unknown)}")
    changes = {}
    for k, v in d.items():
        cur = getattr(obj, k)
        if dataclasses.is_dataclass(cur):
            changes[k] = _merge(cur, v)
        elif isinstance(cur, tuple) and isinstance(v, list):
            changes[k] = tuple(v)
        else:
            changes[k] = v
    return dataclasses.replace(obj, **changes)


def parse_rule(text: str) -> Rule:
    lits = []
    for part in text.split("&"):
        code, _, bit = part.strip().partition("=")
        if not code or bit not in ("0", "1"):
            raise InvalidConfig(f"bad rule literal {part!r}; expected CODE=0 or CODE=1")
        lits.append((code, int(bit)))
    return Rule(tuple(lits))


# ------------------------------------------------------------------ files

PRODUCER = {
    "catalog.json": "gen",
    "programs.json": "gen",
    "dataset.csv": "gen",
    "model.json": "train",
    "metrics.json": "train",
    "explanations.csv": "explain",
    "combined.csv": "combine",
    "anchors.json": "anchor",
    "transform.csv": "transform",
}


def _need(cfg: RunConfig, name: str, override: str | None = None) -> Path:
    path = Path(override) if override else Path(cfg.out) / name
    if not path.exists():
        step = PRODUCER.get(name, "an earlier step")
        raise UsageError(f"missing input {path}; run `{step}` first")
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _log(msg: str) -> None:
    print(msg, flush=True)


def _load_dataset(cfg: RunConfig, override=None) -> Dataset:
    cat = FeatureCatalog.from_json(_need(cfg, "catalog.json").read_text(encoding="utf-8"))
    return load_csv(_need(cfg, "dataset.csv", override), cat)


def _held_out(cfg: RunConfig, ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    return split_indices(len(ds), SplitConfig(cfg.train_frac, cfg.sub_seed("split")))


def save_explanations(explanations, catalog, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", "base_value", *catalog.codes])
        for e in explanations:
            w.writerow([e.instance_id, repr(float(e.base_value)), *(repr(float(v)) for v in e.shap_values)])


def load_explanations(path, dataset: Dataset) -> list[Explanation]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["instance_id", "base_value", *dataset.catalog.codes]:
            raise InvalidConfig(f"{path}: header does not match the dataset catalog")
        rows = list(reader)
    by_id = {r[0]: r for r in rows}
    out = []
    for rec in dataset.records:
        if rec.store_id not in by_id:
            raise InvalidConfig(f"{path}: no explanation for {rec.store_id}")
        r = by_id[rec.store_id]
        phi = np.array([float(v) for v in r[2:]])
        base = float(r[1])
        out.append(Explanation(rec.store_id, base, phi, base + float(phi.sum())))
    return out


def save_combined(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=";", lineterminator="\n")
        w.writerow(["codes", "combined_shap", "silent_ratio", "support"])
        for r in records:
            cs = "" if r.combined_shap is None else repr(r.combined_shap)
            sr = "" if r.silent_ratio is None else repr(r.silent_ratio)
            w.writerow([",".join(r.feature_codes), cs, sr, r.support])


def load_combined(path) -> list[CombinedShapRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=";")
        next(reader)
        for codes, cs, sr, sup in reader:
            out.append(CombinedShapRecord(tuple(codes.split(",")), float(cs) if cs else None,
                                          float(sr) if sr else None, int(sup)))
    return out


# --------------------------------------------------------------- commands


def cmd_gen(cfg: RunConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    programs = generate_corpus(cfg.sub_seed("corpus"), cfg.corpus)
    catalog = catalog_default()
    ds = build_dataset(programs, catalog, cfg.sub_seed("inputs"), cfg.n_inputs)
    if cfg.pearson_threshold is not None:
        reduced, kept = pearson_reduce(ds, cfg.pearson_threshold)
        dropped = [c for c in catalog.codes if c not in reduced.codes]
        ds = ds.project(kept)
        if dropped:
            _log(f"pearson reduction dropped {len(dropped)} features: {' '.join(dropped)}")
    (out / "catalog.json").write_text(ds.catalog.to_json(), encoding="utf-8")
    (out / "programs.json").write_text(programs_to_json(programs), encoding="utf-8")
    save_csv(ds, out / "dataset.csv")
    n_sil = int(ds.y.sum())
    _log(f"{len(programs)} programs, {len(ds)} executed stores, {n_sil} always silent "
         f"({ds.silent_fraction():.3f}), {len(ds.catalog)} features")


def _pos_weight(cfg: RunConfig, y_train) -> float:
    pw = cfg.pos_weight
    if pw is None:
        pw = 1.0 if cfg.mode == "precision_over_recall" else "balanced"
    if pw == "balanced":
        n_pos = int(np.sum(y_train == 1))
        return float(np.sum(y_train == 0)) / max(n_pos, 1)
    return float(pw)


def cmd_train(cfg: RunConfig, dataset_path: str | None = None) -> None:
    ds = _load_dataset(cfg, dataset_path)
    tr, te = _held_out(cfg, ds)
    split = SplitConfig(cfg.train_frac, cfg.sub_seed("split"))
    info = {"model": cfg.model, "mode": cfg.mode, "n_train": int(len(tr)), "n_test": int(len(te))}
    if cfg.model == "mlp":
        pw = _pos_weight(cfg, ds.y[tr])
        mcfg = dataclasses.replace(cfg.mlp, seed=cfg.sub_seed("mlp"), pos_weight=pw)
        model, at_half = train_mlp(ds, mcfg, split)
        info["pos_weight"] = pw
        info["epochs_run"] = model.info["epochs_run"]
    elif cfg.model == "forest":
        model, at_half = train_forest(ds, dataclasses.replace(cfg.forest, seed=cfg.sub_seed("forest")), split)
    else:
        raise InvalidConfig(f"unknown model kind {cfg.model!r}")
    # the regime contract is about held-out metrics, so the threshold is picked there
    test = ds.subset(te)
    choice = tune_threshold(model, test, cfg.mode)
    model.decision_threshold = choice.threshold
    held = evaluate(model, test)
    info.update({
        "threshold": choice.threshold,
        "threshold_feasible": choice.feasible,
        "heldout": held.to_dict(),
        "heldout_at_0_5": at_half.to_dict(),
        "train": evaluate(model, ds.subset(tr)).to_dict(),
    })
    if hasattr(model, "info") and isinstance(model.info, dict):
        model.info.pop("val_loss_history", None)
    model.save(Path(cfg.out) / "model.json")
    _write_json(Path(cfg.out) / "metrics.json", info)
    _log(f"{cfg.model} ({cfg.mode}): threshold {choice.threshold:.4f}, held-out precision "
         f"{held.precision:.3f} recall {held.recall:.3f}")


def cmd_eval(cfg: RunConfig, dataset_path: str | None = None, threshold: float | None = None) -> None:
    ds = _load_dataset(cfg, dataset_path)
    model = load_model(_need(cfg, "model.json"))
    _, te = _held_out(cfg, ds)
    res = {"threshold": model.decision_threshold if threshold is None else threshold,
           "all": evaluate(model, ds, threshold).to_dict(),
           "heldout": evaluate(model, ds.subset(te), threshold).to_dict()}
    _write_json(Path(cfg.out) / "eval.json", res)
    _log(f"all: precision {res['all']['precision']:.3f} recall {res['all']['recall']:.3f}; "
         f"held-out: precision {res['heldout']['precision']:.3f} recall {res['heldout']['recall']:.3f}")


def cmd_explain(cfg: RunConfig) -> None:
    ds = _load_dataset(cfg)
    model = load_model(_need(cfg, "model.json"))
    bg = subsample_background(ds, cfg.explain.background_size, cfg.sub_seed("background"))
    ex = explain_dataset(model, ds, bg, cfg.explain.method, cfg.sub_seed("explain"),
                         cfg.explain.n_permutations, cfg.explain.n_imputation_draws, cfg.threads)
    save_explanations(ex, ds.catalog, Path(cfg.out) / "explanations.csv")
    top = ", ".join(f"{c} {v:.3f}" for c, v in feature_ranking(ex, ds.catalog)[:5])
    _log(f"explained {len(ex)} stores; top features by mean |SHAP|: {top}")


def cmd_combine(cfg: RunConfig) -> None:
    ds = _load_dataset(cfg)
    ex = load_explanations(_need(cfg, "explanations.csv"), ds)
    c = cfg.combine
    recs = enumerate_combined(ds, ex, c.k, c.prune_threshold, c.min_support)
    save_combined(recs, Path(cfg.out) / "combined.csv")
    base = [r for r in recs if r.k == c.k]
    summary = {"n_records": len(recs), "n_base": len(base), "n_extended": len(recs) - len(base)}
    try:
        rep = correlation_report(base, c.min_support)
        summary.update(rep.to_dict())
    except SilentXaiError as exc:
        summary["correlation_error"] = str(exc)
    _write_json(Path(cfg.out) / "correlation.json", summary)
    _log(f"{len(base)} k={c.k} vectors and {summary['n_extended']} extensions; "
         f"spearman {summary.get('spearman', float('nan')):.3f} pearson {summary.get('pearson', float('nan')):.3f}")


def cmd_anchor(cfg: RunConfig) -> None:
    ds = _load_dataset(cfg)
    model = load_model(_need(cfg, "model.json"))
    a = cfg.anchors
    pred = model.predict(ds.X)
    # explain stores the model gets right as silent
    pool = np.flatnonzero(pred & (ds.y == 1))
    rng = np.random.default_rng(cfg.sub_seed("anchor-pick"))
    picks = sorted(rng.choice(pool, size=min(a.n_instances, len(pool)), replace=False).tolist()) if len(pool) else []
    found, missed = [], []
    for i in picks:
        rid = ds.records[i].store_id
        s = derive_seed(cfg.sub_seed("anchor"), rid)
        res = find_anchor(model, ds.X[i], ds, a.min_precision, a.beam_width, a.max_literals, a.n_samples, s, rid)
        if not res.found:
            missed.append(rid)
            continue
        d = res.to_dict()
        if a.simplify:
            simple = simplify_rule(res.rule, model, ds.X[i], ds, a.min_precision, s, a.n_samples)
            d["simplified"] = simple.pretty()
            d["simplified_literals"] = simple.to_list()
        found.append(d)
    _write_json(Path(cfg.out) / "anchors.json", {"min_precision": a.min_precision, "anchors": found,
                                                 "not_found": missed})
    _log(f"anchored {len(found)} of {len(picks)} instances")


def cmd_transform(cfg: RunConfig) -> None:
    out = Path(cfg.out)
    cat = FeatureCatalog.from_json(_need(cfg, "catalog.json").read_text(encoding="utf-8"))
    programs = programs_from_json(_need(cfg, "programs.json").read_text(encoding="utf-8"))
    t = cfg.transform
    if t.policy == "rules":
        policy = SelectionPolicy.by_rules([parse_rule(r) for r in t.rules])
    elif t.policy == "model":
        policy = SelectionPolicy.by_model(load_model(_need(cfg, "model.json")), t.threshold)
    else:
        raise InvalidConfig(f"unknown selection policy {t.policy!r}")
    reports, rewritten = [], []
    for p in programs:
        sel = select_stores(p, cat, policy)
        q = apply_store_verify(p, sel)
        s = derive_seed(cfg.sub_seed("transform"), p.name)
        reports.append(account_costs(profile(p, s, t.n_inputs), profile(q, s, t.n_inputs), cfg.costs, p.name))
        rewritten.append(q)
    total = combine_reports(reports)
    reports_to_csv(reports + [total], out / "transform.csv")
    (out / "transformed_programs.json").write_text(programs_to_json(rewritten), encoding="utf-8")
    summary = total.to_dict()
    summary["selected_store_ids"] = len(total.selected_store_ids)
    summary["regime"] = regime_advice(cfg.costs)
    _write_json(out / "transform.json", summary)
    _log(f"selected {len(total.selected_store_ids)} stores; cost {total.baseline_cost:.1f} -> "
         f"{total.transformed_cost:.1f}; {total.eliminated_writes} writes eliminated, {total.added_reads} reads added")


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_report(cfg: RunConfig) -> None:
    out = Path(cfg.out)
    fig = out / "figures"
    fig.mkdir(parents=True, exist_ok=True)
    ds = _load_dataset(cfg)
    ex = load_explanations(_need(cfg, "explanations.csv"), ds)
    r = cfg.report

    bee = beeswarm_data(ex, ds, r.top_n)
    _write_rows(fig / "beeswarm.csv", ["feature", "rank", "mean_abs_shap", "shap_value", "bit", "instance_id"],
                [(b.feature, b.rank, repr(b.mean_abs), repr(b.shap_value), b.bit, b.instance_id) for b in bee])
    (fig / "beeswarm.svg").write_text(svg.beeswarm([(b.feature, b.rank, b.shap_value, b.bit) for b in bee]),
                                      encoding="utf-8")

    recs = load_combined(_need(cfg, "combined.csv"))
    kept = [c for c in recs if c.support >= max(r.min_support, 1) and c.k == cfg.combine.k]
    _write_rows(fig / "scatter.csv", ["codes", "combined_shap", "silent_ratio", "log10_support"],
                [(",".join(c.feature_codes), repr(c.combined_shap), repr(c.silent_ratio), repr(math.log10(c.support)))
                 for c in kept])
    (fig / "scatter.svg").write_text(
        svg.scatter([(c.combined_shap, c.silent_ratio, math.log10(c.support)) for c in kept]), encoding="utf-8")

    # per-feature terms of {codes} + x for every extra feature x, ranked by combined SHAP;
    # independent of the prune threshold used by `combine`
    want = tuple(c for c in r.contribution_codes if c in ds.catalog.codes)
    ext = []
    for x in (ds.catalog.codes if want else ()):
        if x in want:
            continue
        c = combined_shap(ds, want + (x,), ex)
        if c.support >= max(r.min_support, 1):
            ext.append(c)
    ext.sort(key=lambda c: (-c.combined_shap, c.feature_codes))
    groups, rows = [], []
    lead = want[0] if want else None
    alone = np.zeros(len(ds), dtype=bool)
    if lead is not None:
        j = ds.catalog.index(lead)
        alone = np.all(ds.X[:, [ds.catalog.index(c) for c in want[1:]]] == 0, axis=1) & (ds.X[:, j] == 1)
    if alone.any():
        v = float(shap_matrix(ex)[alone, j].mean())
        groups.append((f"{lead} only", [(lead, v)]))
        rows.append((f"{lead} only", lead, repr(v)))
    for c in ext[:r.n_contribution_vectors]:
        contrib = feature_contributions(ds, ex, c.feature_codes)
        groups.append(("+".join(f for f in c.feature_codes if f not in want), [(f, v) for f, v in contrib if f in want]))
        rows.extend((",".join(c.feature_codes), f, repr(v)) for f, v in contrib)
    _write_rows(fig / "contributions.csv", ["codes", "feature", "mean_shap"], rows)
    (fig / "contributions.svg").write_text(svg.grouped_bars(groups), encoding="utf-8")

    curve = overhead_curve(r.overhead_m, cfg.costs)
    _write_rows(fig / "overhead.csv", ["p", "fp_overhead", "fn_overhead", "total_overhead"],
                [tuple(repr(float(v)) for v in row) for row in curve])
    ps = [row[0] for row in curve]
    (fig / "overhead.svg").write_text(svg.curves(
        ps, [("FP", [row[1] for row in curve]), ("FN", [row[2] for row in curve]), ("total", [row[3] for row in curve])],
        "share of false positives p", "overhead", f"Overhead, c_store/c_read = {cfg.costs.c_store / cfg.costs.c_read:g}"),
        encoding="utf-8")

    _write_rows(fig / "ranking.csv", ["feature", "mean_abs_shap"], [(c, repr(v)) for c, v in feature_ranking(ex, ds.catalog)])
    _log(f"wrote figures to {fig}")


# ------------------------------------------------------------------ parser


def _float_or_balanced(s: str):
    if s == "balanced":
        return s
    return float(s)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--out", help="run directory (default ./run)")
    common.add_argument("--threads", type=int, help="worker threads for explanation")

    p = argparse.ArgumentParser(prog="silentxai", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate corpus, profile it, write the dataset")
    g.add_argument("--n-programs", type=int, dest="corpus.n_programs")
    g.add_argument("--nullifier-rate", type=float, dest="corpus.nullifier_rate")
    g.add_argument("--induction-rate", type=float, dest="corpus.induction_rate")
    g.add_argument("--zero-input-rate", type=float, dest="corpus.zero_input_rate")
    g.add_argument("--n-inputs", type=int, dest="n_inputs")
    g.add_argument("--pearson-threshold", type=float, dest="pearson_threshold")

    t = sub.add_parser("train", parents=[common], help="train a model and tune its threshold")
    t.add_argument("--dataset", dest="dataset_path", help="dataset CSV (default <out>/dataset.csv)")
    t.add_argument("--model", choices=["mlp", "forest"], dest="model")
    t.add_argument("--mode", choices=["precision_over_recall", "recall_over_precision"], dest="mode")
    t.add_argument("--arch", dest="mlp.layer_widths", help="comma-separated layer widths, e.g. 64,32,16,8,1")
    t.add_argument("--pos-weight", type=_float_or_balanced, dest="pos_weight")
    t.add_argument("--max-epochs", type=int, dest="mlp.max_epochs")
    t.add_argument("--train-frac", type=float, dest="train_frac")

    e = sub.add_parser("eval", parents=[common], help="evaluate the saved model")
    e.add_argument("--dataset", dest="dataset_path")
    e.add_argument("--threshold", type=float, dest="eval_threshold")

    x = sub.add_parser("explain", parents=[common], help="Shapley attributions for every store")
    x.add_argument("--method", choices=["sampled", "exact"], dest="explain.method")
    x.add_argument("--n-permutations", type=int, dest="explain.n_permutations")
    x.add_argument("--draws", type=int, dest="explain.n_imputation_draws")
    x.add_argument("--background-size", type=int, dest="explain.background_size")

    c = sub.add_parser("combine", parents=[common], help="combined SHAP and silent ratio of feature vectors")
    c.add_argument("--k", type=int, dest="combine.k")
    c.add_argument("--prune", type=float, dest="combine.prune_threshold")
    c.add_argument("--min-support", type=int, dest="combine.min_support")

    a = sub.add_parser("anchor", parents=[common], help="anchor rules for correctly predicted silent stores")
    a.add_argument("--min-precision", type=float, dest="anchors.min_precision")
    a.add_argument("--n-instances", type=int, dest="anchors.n_instances")
    a.add_argument("--beam-width", type=int, dest="anchors.beam_width")
    a.add_argument("--max-literals", type=int, dest="anchors.max_literals")
    a.add_argument("--n-samples", type=int, dest="anchors.n_samples")

    tr = sub.add_parser("transform", parents=[common], help="apply store-verify and account NVM costs")
    tr.add_argument("--policy", choices=["rules", "model"], dest="transform.policy")
    tr.add_argument("--rule", action="append", dest="transform.rules", help="e.g. Ozr=1 or Ozr=1&Msc=1; repeatable")
    tr.add_argument("--threshold", type=float, dest="transform.threshold")
    tr.add_argument("--c-read", type=float, dest="costs.c_read")
    tr.add_argument("--c-store", type=float, dest="costs.c_store")

    r = sub.add_parser("report", parents=[common], help="figure data (CSV) and SVG renderings")
    r.add_argument("--min-support", type=int, dest="report.min_support")
    r.add_argument("--top-n", type=int, dest="report.top_n")
    r.add_argument("--c-read", type=float, dest="costs.c_read")
    r.add_argument("--c-store", type=float, dest="costs.c_store")
    return p


_LOCAL = {"command", "config", "dataset_path", "eval_threshold"}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the JSON config file, then explicit flags."""
    cfg = RunConfig()
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        try:
            cfg = RunConfig.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
    overrides: dict = {}
    for key, val in vars(args).items():
        if key in _LOCAL or val is None:
            continue
        if key == "mlp.layer_widths":
            try:
                val = [int(v) for v in val.split(",")]
            except ValueError:
                raise UsageError(f"--arch expects comma-separated integers, got {val!r}") from None
        node = overrides
        *head, last = key.split(".")
        for h in head:
            node = node.setdefault(h, {})
        node[last] = val
    cfg = _merge(cfg, overrides)
    cfg.corpus.validate()
    if cfg.threads < 1:
        raise UsageError("--threads must be >= 1")
    return cfg


STAGES = ("gen", "train", "explain", "combine", "anchor", "transform", "report")


def run_pipeline(common: list[str], stages=STAGES, extra: dict | None = None) -> int:
    """Run ``stages`` in order with the shared ``common`` flags; stops at the first failure."""
    extra = extra or {}
    for stage in stages:
        code = main([stage, *common, *extra.get(stage, [])])
        if code:
            return code
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        if args.command == "gen":
            cmd_gen(cfg)
        elif args.command == "train":
            cmd_train(cfg, args.dataset_path)
        elif args.command == "eval":
            cmd_eval(cfg, args.dataset_path, args.eval_threshold)
        elif args.command == "explain":
            cmd_explain(cfg)
        elif args.command == "combine":
            cmd_combine(cfg)
        elif args.command == "anchor":
            cmd_anchor(cfg)
        elif args.command == "transform":
            cmd_transform(cfg)
        elif args.command == "report":
            cmd_report(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SilentXaiError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
