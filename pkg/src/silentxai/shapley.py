"""Shapley attributions for binary store features.

Features a coalition leaves out are imputed from a background record drawn at
random from the working dataset. Within one explanation, every coalition is
evaluated against the same set of background draws, so the attributions are
the exact Shapley values of one well-defined game and sum to
``f(x) - base_value`` to rounding error.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import stats

from .errors import EmptyBackground, InsufficientData, TooManyFeatures
from .seeds import derive_seed

EXACT_LIMIT = 12
DEFAULT_DRAWS = 8
DEFAULT_PERMUTATIONS = 64


def _as_fn(model):
    if hasattr(model, "predict_proba"):
        return lambda X: np.asarray(model.predict_proba(np.asarray(X, dtype=float)), dtype=float)
    return lambda X: np.asarray(model(np.asarray(X, dtype=float)), dtype=float)


def _background_matrix(background) -> np.ndarray:
    B = np.asarray(getattr(background, "X", background))
    if B.ndim != 2 or B.shape[0] == 0:
        raise EmptyBackground("background dataset is empty")
    return B


def impute(z_prime, instance, background, seed: int) -> np.ndarray:
    """Present features keep the instance's bits; absent ones come from one random background record."""
    B = _background_matrix(background)
    mask = np.asarray(z_prime, dtype=bool)
    x = np.asarray(instance)
    if mask.shape != x.shape or x.shape != (B.shape[1],):
        raise ValueError("mask, instance and background widths differ")
    row = B[np.random.default_rng(seed).integers(B.shape[0])]
    return np.where(mask, x, row)


@dataclass
class Explanation:
    instance_id: str
    base_value: float
    shap_values: np.ndarray
    prediction: float

    def local_accuracy_gap(self) -> float:
        return abs(self.base_value + float(np.sum(self.shap_values)) - self.prediction)


def _draw_rows(B, n_draws, rng):
    if n_draws is None:
        return B
    if n_draws < 1:
        raise ValueError("n_imputation_draws must be >= 1")
    return B[rng.integers(B.shape[0], size=n_draws)]


def _all_masks(n: int) -> np.ndarray:
    codes = np.arange(1 << n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def coalition_values(f, x, rows) -> np.ndarray:
    """v[S] for every coalition bitmask S (bit j set: feature j taken from x)."""
    n = x.shape[0]
    masks = _all_masks(n)
    v = np.zeros(len(masks))
    # chunk to bound memory: masks x rows x n
    step = max(1, 200_000 // max(1, len(rows)))
    for s in range(0, len(masks), step):
        m = masks[s:s + step]
        Z = np.where(m[:, None, :], x[None, None, :], rows[None, :, :]).reshape(-1, n)
        v[s:s + step] = f(Z).reshape(len(m), len(rows)).mean(axis=1)
    return v


def shapley_from_values(v: np.ndarray, n: int) -> np.ndarray:
    """Classic Shapley formula over a fully tabulated game."""
    codes = np.arange(1 << n, dtype=np.int64)
    sizes = np.array([bin(c).count("1") for c in range(1 << n)])
    fact = [math.factorial(k) for k in range(n + 1)]
    weight = np.array([fact[s] * fact[n - s - 1] / fact[n] if s < n else 0.0 for s in sizes])
    phi = np.zeros(n)
    for i in range(n):
        without = codes[(codes >> i) & 1 == 0]
        phi[i] = np.sum(weight[without] * (v[without | (1 << i)] - v[without]))
    return phi


def shapley_exact_all(model, instance, background, n_imputation_draws: int | None = DEFAULT_DRAWS,
                      seed: int = 0, exact_limit: int = EXACT_LIMIT) -> tuple[np.ndarray, float]:
    """All exact attributions plus the base value v(empty). ``n_imputation_draws=None`` averages over the whole background."""
    B = _background_matrix(background)
    x = np.asarray(instance, dtype=float)
    n = x.shape[0]
    if n > exact_limit:
        raise TooManyFeatures(f"{n} features exceed the exact enumeration limit of {exact_limit}")
    rows = _draw_rows(B, n_imputation_draws, np.random.default_rng(seed)).astype(float)
    v = coalition_values(_as_fn(model), x, rows)
    return shapley_from_values(v, n), float(v[0])


def shapley_exact(model, instance, background, feature_index: int, n_imputation_draws: int | None = DEFAULT_DRAWS,
                  seed: int = 0, exact_limit: int = EXACT_LIMIT) -> float:
    phi, _ = shapley_exact_all(model, instance, background, n_imputation_draws, seed, exact_limit)
    return float(phi[feature_index])


def shapley_sampled_all(model, instance, background, n_permutations: int = DEFAULT_PERMUTATIONS,
                        seed: int = 0) -> tuple[np.ndarray, float]:
    """Permutation-sampling estimate of every attribution.

    Each permutation pairs with one background record; walking the permutation
    switches features from that record to the instance one at a time.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    B = _background_matrix(background)
    f = _as_fn(model)
    x = np.asarray(instance, dtype=float)
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    phi = np.zeros(n)
    base = 0.0
    chunk = max(1, 100_000 // (n + 1))
    done = 0
    while done < n_permutations:
        p = min(chunk, n_permutations - done)
        perms = np.argsort(rng.random((p, n)), axis=1)
        rows = B[rng.integers(B.shape[0], size=p)].astype(float)
        # position of each feature in its permutation; step k switches the k-th feature
        rank = np.argsort(perms, axis=1)
        steps = np.arange(n + 1)
        on = rank[:, None, :] < steps[None, :, None]  # (p, n+1, n)
        Z = np.where(on, x[None, None, :], rows[:, None, :]).reshape(-1, n)
        vals = f(Z).reshape(p, n + 1)
        deltas = np.diff(vals, axis=1)  # (p, n): contribution of the feature at step k
        np.add.at(phi, perms.ravel(), deltas.ravel())
        base += vals[:, 0].sum()
        done += p
    return phi / n_permutations, base / n_permutations


def shapley_sampled(model, instance, background, feature_index: int, n_permutations: int = DEFAULT_PERMUTATIONS,
                    seed: int = 0) -> float:
    phi, _ = shapley_sampled_all(model, instance, background, n_permutations, seed)
    return float(phi[feature_index])


def explain(model, instance, background, method: str = "sampled", seed: int = 0, instance_id: str = "",
            n_imputation_draws: int | None = DEFAULT_DRAWS, n_permutations: int = DEFAULT_PERMUTATIONS) -> Explanation:
    x = np.asarray(instance, dtype=float)
    if method == "exact":
        phi, base = shapley_exact_all(model, x, background, n_imputation_draws, seed)
    elif method == "sampled":
        phi, base = shapley_sampled_all(model, x, background, n_permutations, seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    pred = float(_as_fn(model)(x[None, :])[0])
    return Explanation(instance_id, base, phi, pred)


def subsample_background(dataset, size: int | None, seed: int):
    """Seeded subset of ``size`` records (the whole dataset when ``size`` is None or large enough)."""
    if size is None or size >= len(dataset):
        return dataset
    if size < 1:
        raise EmptyBackground("background subsample must keep at least one record")
    rows = np.sort(np.random.default_rng(seed).choice(len(dataset), size=size, replace=False))
    return dataset.subset(rows)


def explain_dataset(model, dataset, background=None, method: str = "sampled", seed: int = 0,
                    n_permutations: int = DEFAULT_PERMUTATIONS, n_imputation_draws: int | None = DEFAULT_DRAWS,
                    threads: int = 1) -> list[Explanation]:
    """Explain every record. Records sharing a feature vector share one explanation,
    seeded from the vector itself, so results do not depend on record order or threads."""
    background = dataset if background is None else background
    X = dataset.X
    keys = [row.tobytes() for row in X]
    unique = {}
    for k, row in zip(keys, X):
        unique.setdefault(k, row)

    def work(item):
        k, row = item
        s = derive_seed(seed, "explain", k.hex())
        return k, explain(model, row, background, method, s, n_imputation_draws=n_imputation_draws,
                          n_permutations=n_permutations)

    items = sorted(unique.items())
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            done = dict(pool.map(work, items))
    else:
        done = dict(map(work, items))
    out = []
    for rec, k in zip(dataset.records, keys):
        e = done[k]
        out.append(Explanation(rec.store_id, e.base_value, e.shap_values, e.prediction))
    return out


def shap_matrix(explanations: list[Explanation]) -> np.ndarray:
    return np.array([e.shap_values for e in explanations], dtype=float)


# ------------------------------------------------------------ combined SHAP


@dataclass
class CombinedShapRecord:
    feature_codes: tuple
    combined_shap: float | None
    silent_ratio: float | None
    support: int

    @property
    def k(self) -> int:
        return len(self.feature_codes)


def _explanation_matrix(dataset, explanations) -> np.ndarray:
    S = explanations if isinstance(explanations, np.ndarray) else shap_matrix(explanations)
    if S.shape != dataset.X.shape:
        raise ValueError("explanations must cover every record and feature of the dataset")
    return S


def combined_shap(dataset, feature_codes, explanations) -> CombinedShapRecord:
    """Mean per-feature attribution over the records containing every code, with
    the fraction of those records labelled silent. Support 0 yields None values."""
    codes = tuple(feature_codes)
    if len(codes) < 2 or len(set(codes)) != len(codes):
        raise ValueError("need k >= 2 distinct feature codes")
    idx = [dataset.catalog.index(c) for c in codes]
    S = _explanation_matrix(dataset, explanations)
    X = dataset.X
    mask = np.all(X[:, idx] == 1, axis=1)
    support = int(mask.sum())
    if support == 0:
        return CombinedShapRecord(codes, None, None, 0)
    total = float(S[np.ix_(mask, idx)].sum())
    ratio = float(dataset.y[mask].sum()) / support
    return CombinedShapRecord(codes, total / (support * len(codes)), ratio, support)


def _records_for(prefixes, X, S, y, codes, k, min_support, allowed=None):
    """Aggregate all k-vectors extending each (k-1)-prefix by a later feature.

    With ``allowed`` set, only vectors in that set are produced.
    """
    n = X.shape[1]
    Xf = X.astype(float)
    XS = Xf * S
    out = []
    for prefix in prefixes:
        w = np.prod(Xf[:, list(prefix)], axis=1)
        sup = w @ Xf
        sil = (w * y) @ Xf
        pre_sum = (w * S[:, list(prefix)].sum(axis=1)) @ Xf
        own = w @ XS
        for c in range(prefix[-1] + 1, n):
            vec = prefix + (c,)
            if allowed is not None and vec not in allowed:
                continue
            s = int(round(sup[c]))
            if s < min_support:
                continue
            names = tuple(codes[j] for j in vec)
            if s == 0:
                out.append(CombinedShapRecord(names, None, None, 0))
            else:
                out.append(CombinedShapRecord(names, float(pre_sum[c] + own[c]) / (s * k), float(sil[c]) / s, s))
    return out


def enumerate_combined(dataset, explanations, k: int = 3, prune_threshold: float = 0.2,
                       min_support: int = 120, extend: bool = True) -> list[CombinedShapRecord]:
    """All k-vectors with enough support, then the (k+1)-extensions of those whose
    combined SHAP exceeds ``prune_threshold``. Attributions are reused, never recomputed."""
    if k < 2:
        raise ValueError("k must be >= 2")
    X = dataset.X
    S = _explanation_matrix(dataset, explanations)
    y = dataset.y.astype(float)
    codes = dataset.catalog.codes
    n = X.shape[1]
    base = _records_for(list(combinations(range(n), k - 1)), X, S, y, codes, k, min_support)
    if not extend:
        return base
    index = {c: j for j, c in enumerate(codes)}
    parents = [tuple(index[c] for c in r.feature_codes) for r in base
               if r.support > 0 and r.combined_shap > prune_threshold]
    ext = set()
    for p in parents:
        for c in range(n):
            if c not in p:
                ext.add(tuple(sorted(p + (c,))))
    prefixes = sorted({v[:-1] for v in ext})
    return base + _records_for(prefixes, X, S, y, codes, k + 1, max(min_support, 1), allowed=ext)


def candidate_count(n_features: int, k: int) -> int:
    return math.comb(n_features, k)


# ------------------------------------------------------------ reporting


@dataclass
class CorrelationReport:
    spearman: float
    pearson: float
    n: int
    defined: bool
    rows: list

    def to_dict(self) -> dict:
        return {"spearman": self.spearman, "pearson": self.pearson, "n": self.n, "defined": self.defined}


def correlation_report(records, min_support: int = 120) -> CorrelationReport:
    """Correlation between combined SHAP and silent ratio over well-supported vectors."""
    kept = [r for r in records if r.support >= max(min_support, 1)]
    if len(kept) < 3:
        raise InsufficientData(f"need at least 3 vectors with support >= {min_support}, got {len(kept)}")
    a = np.array([r.combined_shap for r in kept])
    b = np.array([r.silent_ratio for r in kept])
    rows = [(";".join(r.feature_codes), r.combined_shap, r.silent_ratio, math.log10(r.support)) for r in kept]
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return CorrelationReport(float("nan"), float("nan"), len(kept), False, rows)
    rho = float(stats.spearmanr(a, b).statistic)
    r = float(stats.pearsonr(a, b).statistic)
    return CorrelationReport(rho, r, len(kept), True, rows)


@dataclass
class BeeswarmRow:
    feature: str
    rank: int
    mean_abs: float
    shap_value: float
    bit: int
    instance_id: str


def feature_ranking(explanations, catalog) -> list[tuple[str, float]]:
    S = shap_matrix(explanations)
    mean_abs = np.abs(S).mean(axis=0)
    order = sorted(range(S.shape[1]), key=lambda j: (-mean_abs[j], j))
    return [(catalog.codes[j], float(mean_abs[j])) for j in order]


def beeswarm_data(explanations, dataset, top_n: int = 10) -> list[BeeswarmRow]:
    """Per-instance attributions for the ``top_n`` features by mean |SHAP|."""
    S = shap_matrix(explanations)
    X = dataset.X
    ranking = feature_ranking(explanations, dataset.catalog)[:top_n]
    rows = []
    for rank, (code, mean_abs) in enumerate(ranking, start=1):
        j = dataset.catalog.index(code)
        for i, e in enumerate(explanations):
            rows.append(BeeswarmRow(code, rank, mean_abs, float(S[i, j]), int(X[i, j]), e.instance_id))
    return rows


def set_bit_mean(explanations, dataset, code: str) -> float:
    """Mean attribution of ``code`` over the records where its bit is set."""
    j = dataset.catalog.index(code)
    S = shap_matrix(explanations)
    m = dataset.X[:, j] == 1
    return float(S[m, j].mean()) if m.any() else float("nan")


def feature_contributions(dataset, explanations, codes) -> list[tuple[str, float]]:
    """Mean attribution of each code over the records containing all of ``codes``.

    These are the per-feature terms whose average is the combined SHAP value.
    """
    idx = [dataset.catalog.index(c) for c in codes]
    S = _explanation_matrix(dataset, explanations)
    mask = np.all(dataset.X[:, idx] == 1, axis=1)
    if not mask.any():
        return [(c, float("nan")) for c in codes]
    return [(c, float(S[mask, j].mean())) for c, j in zip(codes, idx)]
