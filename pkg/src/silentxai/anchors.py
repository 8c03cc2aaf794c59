"""Anchor rules: conjunctions of feature literals under which perturbed instances
keep the model's prediction with high precision.

Precision is estimated by sampling: literals pin their bits, every other bit is
drawn from the background. A rule passes when the lower end of a 95% normal
confidence interval clears the precision bar. Search is a beam over the
instance's own literals, growing one literal per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBackground
from .seeds import derive_seed

Z95 = 1.959963984540054


@dataclass(frozen=True)
class Rule:
    literals: tuple = ()

    def __post_init__(self):
        lits = tuple(sorted((str(c), int(b)) for c, b in self.literals))
        codes = [c for c, _ in lits]
        if len(set(codes)) != len(codes):
            raise ValueError("at most one literal per feature")
        if any(b not in (0, 1) for _, b in lits):
            raise ValueError("literal bits must be 0 or 1")
        object.__setattr__(self, "literals", lits)

    def __len__(self) -> int:
        return len(self.literals)

    @property
    def codes(self) -> tuple:
        return tuple(c for c, _ in self.literals)

    def key(self) -> str:
        return "&".join(f"{c}={b}" for c, b in self.literals)

    def add(self, code: str, bit: int) -> "Rule":
        return Rule(self.literals + ((code, bit),))

    def remove(self, code: str) -> "Rule":
        return Rule(tuple(l for l in self.literals if l[0] != code))

    def satisfied_by(self, X, catalog) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X))
        ok = np.ones(X.shape[0], dtype=bool)
        for code, bit in self.literals:
            ok &= X[:, catalog.index(code)] == bit
        return ok

    def pretty(self) -> str:
        if not self.literals:
            return "(TRUE)"
        return " AND ".join(f"({c} > 0.00)" if b else f"({c} <= 0.00)" for c, b in self.literals)

    def to_list(self) -> list:
        return [{"code": c, "bit": b} for c, b in self.literals]


@dataclass
class AnchorResult:
    rule: Rule
    precision_estimate: float
    half_width: float
    precision_samples: int
    coverage: float
    anchored_instance: str
    model_prediction: str
    found: bool = True
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.anchored_instance,
            "prediction": self.model_prediction,
            "literals": self.rule.to_list(),
            "precision": self.precision_estimate,
            "half_width": self.half_width,
            "samples": self.precision_samples,
            "coverage": self.coverage,
            "found": self.found,
            "rule": self.rule.pretty(),
        }


def _predictor(model):
    threshold = getattr(model, "decision_threshold", 0.5)
    if hasattr(model, "predict_proba"):
        return lambda X: np.asarray(model.predict_proba(np.asarray(X, dtype=float))) >= threshold
    return lambda X: np.asarray(model(np.asarray(X, dtype=float))) >= threshold


def sample_under_rule(rule: Rule, instance, background, n: int, seed: int, whole_record: bool = False) -> np.ndarray:
    """``n`` perturbations of ``instance`` that satisfy ``rule``.

    Free bits come from independently chosen background records per feature,
    or from one record per sample when ``whole_record`` is set.
    """
    B = np.asarray(background.X)
    if B.shape[0] == 0:
        raise EmptyBackground("background dataset is empty")
    x = np.asarray(instance)
    catalog = background.catalog
    if not rule.satisfied_by(x, catalog)[0]:
        raise ValueError("instance does not satisfy the rule")
    rng = np.random.default_rng(seed)
    n_feat = B.shape[1]
    if whole_record:
        S = B[rng.integers(B.shape[0], size=n)].copy()
    else:
        rows = rng.integers(B.shape[0], size=(n, n_feat))
        S = B[rows, np.arange(n_feat)[None, :]]
    for code, bit in rule.literals:
        S[:, catalog.index(code)] = bit
    return S


def _interval(hits: int, n: int) -> tuple[float, float]:
    p = hits / n
    return p, Z95 * math.sqrt(p * (1 - p) / n)


def estimate_precision(rule: Rule, model, instance, background, n_samples: int = 1000, seed: int = 0,
                       whole_record: bool = False) -> tuple[float, float]:
    """Share of rule-satisfying perturbations that keep the instance's prediction, with a 95% half-width."""
    if n_samples < 30:
        raise ValueError("n_samples must be >= 30 for the normal approximation")
    pred = _predictor(model)
    target = bool(pred(np.asarray(instance)[None, :])[0])
    S = sample_under_rule(rule, instance, background, n_samples, seed, whole_record)
    hits = int(np.sum(pred(S) == target))
    return _interval(hits, n_samples)


def coverage(rule: Rule, dataset) -> float:
    if len(dataset) == 0:
        return 0.0
    return float(rule.satisfied_by(dataset.X, dataset.catalog).mean())


def find_anchor(model, instance, background, min_precision: float = 0.95, beam_width: int = 4,
                max_literals: int = 8, n_samples: int = 1000, seed: int = 0, instance_id: str = "",
                whole_record: bool = False) -> AnchorResult:
    """Beam search for the widest-coverage rule whose precision lower bound meets ``min_precision``.

    When no rule within ``max_literals`` passes, the best attempt is returned with ``found=False``.
    """
    x = np.asarray(instance)
    catalog = background.catalog
    pred = _predictor(model)
    target = bool(pred(x[None, :])[0])
    label = "silent" if target else "noisy"
    literals = [(code, int(x[j])) for j, code in enumerate(catalog.codes)]

    def evaluate(rule: Rule, step_seed: int):
        S = sample_under_rule(rule, x, background, n_samples, step_seed, whole_record)
        p, hw = _interval(int(np.sum(pred(S) == target)), n_samples)
        return p, hw, coverage(rule, background)

    def result(rule, stats, found, history):
        p, hw, cov = stats
        return AnchorResult(rule, p, hw, n_samples, cov, instance_id, label, found, history)

    empty = Rule()
    stats = evaluate(empty, derive_seed(seed, "anchor", 0))
    history = [(empty.key(), *stats)]
    if stats[0] - stats[1] >= min_precision:
        return result(empty, stats, True, history)
    best = (empty, stats)
    beam = [empty]
    for size in range(1, max_literals + 1):
        step_seed = derive_seed(seed, "anchor", size)
        candidates = {}
        for rule in beam:
            for code, bit in literals:
                if code not in rule.codes:
                    r = rule.add(code, bit)
                    candidates.setdefault(r.key(), r)
        if not candidates:
            break
        scored = []
        for key in sorted(candidates):
            r = candidates[key]
            s = evaluate(r, step_seed)
            scored.append((r, s))
            history.append((key, *s))
        passing = [(r, s) for r, s in scored if s[0] - s[1] >= min_precision]
        if passing:
            r, s = max(passing, key=lambda rs: (rs[1][2], rs[1][0], rs[0].key()))
            return result(r, s, True, history)
        scored.sort(key=lambda rs: (-(rs[1][0] - rs[1][1]), -rs[1][2], rs[0].key()))
        beam = [r for r, _ in scored[:beam_width]]
        top = scored[0]
        if top[1][0] - top[1][1] > best[1][0] - best[1][1]:
            best = top
    return result(best[0], best[1], False, history)


def simplify_rule(rule: Rule, model, instance, background, min_precision: float = 0.95, seed: int = 0,
                  n_samples: int = 1000, whole_record: bool = False) -> Rule:
    """Drop literals one at a time while the precision lower bound still meets the bar."""
    current = rule
    changed = True
    while changed and len(current):
        changed = False
        for code in current.codes:
            cand = current.remove(code)
            p, hw = estimate_precision(cand, model, instance, background, n_samples,
                                       derive_seed(seed, "simplify", cand.key()), whole_record)
            if p - hw >= min_precision:
                current = cand
                changed = True
                break
    return current
