"""Store-verify rewriting and its NVM cost accounting.

Step one associates every store with its static features and picks the ones a
rule set or a model marks as likely silent. Step two rewrites those stores as
load/compare/store so a matching value skips the write.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import LoopStmt, Profile, StoreStmt, TinyProgram, extract_features
from .cost import NvmCosts
from .errors import InvalidConfig, ProfileMismatch, UnknownStoreId


@dataclass(frozen=True)
class SelectionPolicy:
    """Either a rule list (a store is picked when any rule holds) or a model plus threshold."""

    mode: str
    rules: tuple = ()
    model: object = None
    threshold: float | None = None

    def __post_init__(self):
        if self.mode not in ("by_rules", "by_model"):
            raise InvalidConfig(f"unknown selection mode {self.mode!r}")
        if self.mode == "by_model":
            if self.model is None:
                raise InvalidConfig("by_model needs a model")
            t = self.effective_threshold
            if not 0.0 <= t <= 1.0:
                raise InvalidConfig(f"threshold {t} outside [0, 1]")

    @classmethod
    def by_rules(cls, rules) -> "SelectionPolicy":
        return cls("by_rules", rules=tuple(rules))

    @classmethod
    def by_model(cls, model, threshold: float | None = None) -> "SelectionPolicy":
        return cls("by_model", model=model, threshold=threshold)

    @property
    def effective_threshold(self) -> float:
        # default to the model's own tuned threshold
        if self.threshold is not None:
            return float(self.threshold)
        return float(getattr(self.model, "decision_threshold", 0.5))


def select_stores(program: TinyProgram, catalog, policy: SelectionPolicy) -> set[str]:
    feats = extract_features(program, catalog)
    if not feats:
        return set()
    ids = list(feats)
    X = np.array([feats[i] for i in ids], dtype=np.uint8)
    if policy.mode == "by_rules":
        hit = np.zeros(len(ids), dtype=bool)
        for rule in policy.rules:
            hit |= rule.satisfied_by(X, catalog)
    else:
        hit = np.asarray(policy.model.predict_proba(X.astype(float))) >= policy.effective_threshold
    return {sid for sid, h in zip(ids, hit) if h}


def apply_store_verify(program: TinyProgram, selection) -> TinyProgram:
    """Mark the selected stores ``verified``; everything else is left untouched."""
    selection = set(selection)
    unknown = selection - set(program.store_ids())
    if unknown:
        raise UnknownStoreId(f"{program.name}: unknown store ids {sorted(unknown)}")

    def rewrite(stmts):
        out = []
        for s in stmts:
            if isinstance(s, LoopStmt):
                out.append(replace(s, body=rewrite(s.body)))
            elif isinstance(s, StoreStmt) and s.id in selection:
                out.append(replace(s, verified=True))
            else:
                out.append(s)
        return tuple(out)

    return replace(program, statements=rewrite(program.statements))


@dataclass
class TransformReport:
    selected_store_ids: list
    baseline_cost: float
    transformed_cost: float
    eliminated_writes: int
    added_reads: int
    program: str = ""
    per_store: dict = field(default_factory=dict, repr=False)

    @property
    def saving(self) -> float:
        return self.baseline_cost - self.transformed_cost

    def to_dict(self) -> dict:
        return {
            "program": self.program,
            "selected_store_ids": list(self.selected_store_ids),
            "baseline_cost": self.baseline_cost,
            "transformed_cost": self.transformed_cost,
            "eliminated_writes": self.eliminated_writes,
            "added_reads": self.added_reads,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def account_costs(baseline_profile: Profile, transformed_profile: Profile, costs: NvmCosts,
                  program: str = "") -> TransformReport:
    """Cost of every dynamic store before and after rewriting.

    A verified execution always pays one read; it also pays the store unless
    the value was already there. The compare is free.
    """
    base, tr = baseline_profile.counts, transformed_profile.counts
    if set(base) != set(tr):
        raise ProfileMismatch("profiles cover different store ids")
    if (baseline_profile.n_inputs, baseline_profile.skipped_inputs) != (
            transformed_profile.n_inputs, transformed_profile.skipped_inputs):
        raise ProfileMismatch("profiles were taken over different inputs")
    for sid in base:
        if (base[sid].total, base[sid].silent) != (tr[sid].total, tr[sid].silent):
            raise ProfileMismatch(f"{sid}: execution counts differ between profiles")
    selected = sorted(transformed_profile.verified)
    baseline_cost = sum(c.total for c in base.values()) * costs.c_store
    transformed_cost = 0.0
    eliminated = added = 0
    per_store = {}
    for sid in sorted(tr):
        c = tr[sid]
        if sid in transformed_profile.verified:
            cost = c.total * costs.c_read + (c.total - c.silent) * costs.c_store
            eliminated += c.silent
            added += c.total
        else:
            cost = c.total * costs.c_store
        per_store[sid] = cost
        transformed_cost += cost
    return TransformReport(selected, float(baseline_cost), float(transformed_cost), eliminated, added,
                           program, per_store)


def combine_reports(reports, program: str = "corpus") -> TransformReport:
    """Sum of per-program reports."""
    reports = list(reports)
    return TransformReport(
        [sid for r in reports for sid in r.selected_store_ids],
        float(sum(r.baseline_cost for r in reports)),
        float(sum(r.transformed_cost for r in reports)),
        sum(r.eliminated_writes for r in reports),
        sum(r.added_reads for r in reports),
        program,
    )


def reports_to_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["program", "n_selected", "baseline_cost", "transformed_cost", "eliminated_writes", "added_reads"])
        for r in reports:
            w.writerow([r.program, len(r.selected_store_ids), repr(r.baseline_cost), repr(r.transformed_cost),
                        r.eliminated_writes, r.added_reads])
