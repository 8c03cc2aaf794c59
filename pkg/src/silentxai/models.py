"""From-scratch silentness classifiers: a ReLU/sigmoid MLP trained with Adam,
and a Gini random forest. Plus precision/recall metrics and threshold tuning.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateDataset, DimensionMismatch, InvalidConfig
from .seeds import derive_seed

FORMAT = "silentxai-model"
FORMAT_VERSION = 1


# ---------------------------------------------------------------- metrics


@dataclass
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    precision_defined: bool = True
    recall_defined: bool = True
    threshold: float | None = None

    @classmethod
    def from_predictions(cls, y_true, y_pred, threshold=None) -> "Metrics":
        y_true = np.asarray(y_true).astype(bool)
        y_pred = np.asarray(y_pred).astype(bool)
        tp = int(np.sum(y_true & y_pred))
        fp = int(np.sum(~y_true & y_pred))
        tn = int(np.sum(~y_true & ~y_pred))
        fn = int(np.sum(y_true & ~y_pred))
        return cls.from_counts(tp, fp, tn, fn, threshold)

    @classmethod
    def from_counts(cls, tp, fp, tn, fn, threshold=None) -> "Metrics":
        p_def = tp + fp > 0
        r_def = tp + fn > 0
        return cls(
            tp, fp, tn, fn,
            tp / (tp + fp) if p_def else 0.0,
            tp / (tp + fn) if r_def else 0.0,
            p_def, r_def, threshold,
        )

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------- classifier API


class Classifier:
    """Common surface: ``predict_proba`` on one vector or a matrix of vectors."""

    kind = "base"
    n_features: int
    decision_threshold: float = 0.5

    def _proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, X) -> np.ndarray | float:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = X[None, :] if single else X
        if X2.ndim != 2 or X2.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got shape {X.shape}")
        p = self._proba(X2)
        return float(p[0]) if single else p

    def __call__(self, X) -> np.ndarray:
        return self.predict_proba(np.atleast_2d(X))

    def predict(self, X, threshold: float | None = None):
        """True (silent) iff probability >= threshold."""
        t = self.decision_threshold if threshold is None else threshold
        p = self.predict_proba(X)
        return p >= t

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")


def predict_proba(model: Classifier, fv) -> float:
    return model.predict_proba(np.asarray(fv))


def predict(model: Classifier, fv) -> str:
    return "silent" if predict_proba(model, fv) >= model.decision_threshold else "noisy"


def load_model(path) -> Classifier:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
        raise InvalidConfig(f"{path}: not a {FORMAT} v{FORMAT_VERSION} file")
    if d["kind"] == "mlp":
        return MLP.from_dict(d)
    if d["kind"] == "forest":
        return RandomForest.from_dict(d)
    raise InvalidConfig(f"{path}: unknown model kind {d['kind']!r}")


# ------------------------------------------------------------------- MLP


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


@dataclass
class MlpConfig:
    layer_widths: tuple = (64, 32, 16, 8, 1)
    hidden_activation: str = "relu"
    output_activation: str = "sigmoid"
    learning_rate: float = 3e-4
    max_epochs: int = 3000
    batch_size: int = 20000
    early_stop_patience: int = 50
    val_frac: float = 0.1
    pos_weight: float = 1.0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def validate(self):
        w = list(self.layer_widths)
        if not w or w[-1] != 1 or any(int(x) < 1 for x in w):
            raise InvalidConfig("layer_widths must be positive and end with 1")
        if self.learning_rate <= 0:
            raise InvalidConfig("learning_rate must be positive")
        if (self.hidden_activation, self.output_activation, self.optimizer) != ("relu", "sigmoid", "adam"):
            raise InvalidConfig("only relu hidden units, a sigmoid output and adam are supported")
        if self.max_epochs < 1 or self.batch_size < 1 or self.early_stop_patience < 1:
            raise InvalidConfig("epochs, batch size and patience must be positive")


class MLP(Classifier):
    kind = "mlp"

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray], decision_threshold: float = 0.5):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.n_features = self.weights[0].shape[0]
        self.decision_threshold = decision_threshold
        self.info: dict = {}

    @classmethod
    def init(cls, n_features: int, widths, rng: np.random.Generator) -> "MLP":
        weights, biases = [], []
        fan_in = n_features
        for width in widths:
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width)))
            biases.append(np.zeros(width))
            fan_in = width
        return cls(weights, biases)

    def logits(self, X: np.ndarray) -> np.ndarray:
        h = X
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if k < last:
                h = np.maximum(h, 0.0)
        return h[:, 0]

    def _proba(self, X):
        return _sigmoid(self.logits(X))

    def loss_and_grads(self, X, y, sample_weight=None):
        """Mean (weighted) binary cross-entropy and its gradients."""
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if k < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        z = acts[-1][:, 0]
        w = np.ones_like(z) if sample_weight is None else sample_weight
        norm = w.sum()
        # log(1 + exp(-|z|)) form keeps large logits finite
        loss = np.sum(w * (np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z))))) / norm
        delta = (w * (_sigmoid(z) - y) / norm)[:, None]
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for k in range(last, -1, -1):
            gw[k] = acts[k].T @ delta
            gb[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * (acts[k] > 0)
        return float(loss), gw, gb

    def params(self):
        return self.weights + self.biases

    def copy(self) -> "MLP":
        m = MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.decision_threshold)
        m.info = dict(self.info)
        return m

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "kind": "mlp",
            "decision_threshold": self.decision_threshold,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d) -> "MLP":
        m = cls([np.array(w) for w in d["weights"]], [np.array(b) for b in d["biases"]], d["decision_threshold"])
        m.info = d.get("info", {})
        return m


class _Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class SplitConfig:
    train_frac: float = 0.8
    seed: int = 0


def split_indices(n: int, split: SplitConfig) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(split.seed).permutation(n)
    cut = int(round(split.train_frac * n))
    return np.sort(perm[:cut]), np.sort(perm[cut:])


def _check_classes(y, where):
    if y.size == 0 or y.min() == y.max():
        raise DegenerateDataset(f"{where} split lacks one of the two classes")


def fit_mlp(X, y, config: MlpConfig) -> MLP:
    """Adam minibatch training with early stopping on a carved validation slice."""
    config.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(y))
    n_val = int(round(config.val_frac * len(y)))
    val_idx, fit_idx = order[:n_val], order[n_val:]
    if n_val == 0:
        val_idx = fit_idx
    Xf, yf = X[fit_idx], y[fit_idx]
    Xv, yv = X[val_idx], y[val_idx]
    wf = np.where(yf == 1, config.pos_weight, 1.0)
    wv = np.where(yv == 1, config.pos_weight, 1.0)

    model = MLP.init(X.shape[1], config.layer_widths, rng)
    opt = _Adam(model.params(), config.learning_rate, config.beta1, config.beta2, config.eps)
    batch = min(config.batch_size, len(yf))
    best = model.copy()
    best_loss, _, _ = model.loss_and_grads(Xv, yv, wv)
    wait = 0
    history = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(yf))
        for start in range(0, len(yf), batch):
            idx = perm[start:start + batch]
            _, gw, gb = model.loss_and_grads(Xf[idx], yf[idx], wf[idx])
            opt.step(model.params(), gw + gb)
        val_loss, _, _ = model.loss_and_grads(Xv, yv, wv)
        history.append(val_loss)
        if val_loss < best_loss - 1e-7:
            best_loss, best, wait = val_loss, model.copy(), 0
        else:
            wait += 1
            if wait >= config.early_stop_patience:
                break
    best.info = {"epochs_run": epoch, "best_val_loss": best_loss, "val_loss_history": history}
    return best


def train_mlp(dataset, config: MlpConfig | None = None, split: SplitConfig | None = None):
    """Train on the split's training part; return (model, held-out metrics at threshold 0.5)."""
    config = config or MlpConfig()
    split = split or SplitConfig()
    X, y = dataset.X, dataset.y
    tr, te = split_indices(len(y), split)
    _check_classes(y[tr], "training")
    _check_classes(y[te], "test")
    model = fit_mlp(X[tr], y[tr], config)
    return model, evaluate(model, dataset.subset(te))


# --------------------------------------------------------------- forest


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 5
    max_features: str | int | None = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def n_candidates(self, n_features: int) -> int:
        mf = self.max_features
        if mf is None or mf == "all":
            return n_features
        if mf == "sqrt":
            return max(1, int(np.ceil(np.sqrt(n_features))))
        return max(1, min(int(mf), n_features))


def _gini_children(n1, p1, n, p):
    """Weighted child Gini impurity for splitting on each binary feature."""
    n0 = n - n1
    p0 = p - p1
    with np.errstate(divide="ignore", invalid="ignore"):
        g1 = np.where(n1 > 0, 2.0 * p1 * (n1 - p1) / np.maximum(n1, 1), 0.0)
        g0 = np.where(n0 > 0, 2.0 * p0 * (n0 - p0) / np.maximum(n0, 1), 0.0)
    return (g1 + g0) / n


def grow_tree(X, y, max_depth, min_leaf, n_candidates, rng) -> dict:
    n_features = X.shape[1]

    def grow(idx, depth):
        n = len(idx)
        pos = int(y[idx].sum())
        leaf = {"p": pos / n, "n": n}
        if depth >= max_depth or pos == 0 or pos == n or n < 2 * min_leaf:
            return leaf
        Xs = X[idx]
        n1 = Xs.sum(axis=0).astype(float)
        p1 = (Xs * y[idx][:, None]).sum(axis=0).astype(float)
        imp = _gini_children(n1, p1, n, pos)
        valid = (n1 >= min_leaf) & (n - n1 >= min_leaf)
        order = rng.permutation(n_features)
        chosen = None
        for pool in (order[:n_candidates], order[n_candidates:]):
            pool = [j for j in pool if valid[j]]
            if pool:
                chosen = min(pool, key=lambda j: (imp[j], j))
                break
        if chosen is None:
            return leaf
        mask = Xs[:, chosen] == 1
        return {
            "f": int(chosen),
            "l": grow(idx[~mask], depth + 1),
            "r": grow(idx[mask], depth + 1),
        }

    return grow(np.arange(len(y)), 0)


def _tree_leaf_p(node, X) -> np.ndarray:
    out = np.empty(len(X))

    def walk(node, rows):
        if "p" in node:
            out[rows] = node["p"]
            return
        mask = X[rows, node["f"]] >= 0.5
        walk(node["l"], rows[~mask])
        walk(node["r"], rows[mask])

    walk(node, np.arange(len(X)))
    return out


class RandomForest(Classifier):
    """Probability = fraction of trees whose leaf majority is silent."""

    kind = "forest"

    def __init__(self, trees: list[dict], n_features: int, decision_threshold: float = 0.5):
        self.trees = trees
        self.n_features = n_features
        self.decision_threshold = decision_threshold
        self.info: dict = {}

    def _proba(self, X):
        votes = np.zeros(len(X))
        for t in self.trees:
            votes += _tree_leaf_p(t, X) >= 0.5
        return votes / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "kind": "forest",
            "decision_threshold": self.decision_threshold,
            "n_features": self.n_features,
            "trees": self.trees,
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d) -> "RandomForest":
        m = cls(d["trees"], d["n_features"], d["decision_threshold"])
        m.info = d.get("info", {})
        return m


def fit_forest(X, y, config: ForestConfig) -> RandomForest:
    X = np.asarray(X, dtype=np.uint8)
    y = np.asarray(y, dtype=np.int64)
    k = config.n_candidates(X.shape[1])
    trees = []
    for t in range(config.n_trees):
        rng = np.random.default_rng(derive_seed(config.seed, "tree", t))
        rows = rng.integers(len(y), size=len(y)) if config.bootstrap else np.arange(len(y))
        trees.append(grow_tree(X[rows], y[rows], config.max_depth, config.min_leaf, k, rng))
    return RandomForest(trees, X.shape[1])


def train_forest(dataset, config: ForestConfig | None = None, split: SplitConfig | None = None):
    config = config or ForestConfig()
    split = split or SplitConfig()
    X, y = dataset.X, dataset.y
    tr, te = split_indices(len(y), split)
    _check_classes(y[tr], "training")
    _check_classes(y[te], "test")
    model = fit_forest(X[tr], y[tr], config)
    return model, evaluate(model, dataset.subset(te))


# -------------------------------------------------------------- evaluation


def evaluate(model: Classifier, dataset, threshold: float | None = None) -> Metrics:
    t = model.decision_threshold if threshold is None else threshold
    p = model.predict_proba(dataset.X)
    return Metrics.from_predictions(dataset.y, p >= t, threshold=t)


@dataclass
class ThresholdChoice:
    threshold: float
    feasible: bool
    precision: float
    recall: float
    sweep: list = field(default_factory=list, repr=False)


def threshold_sweep(proba, y) -> list[tuple[float, Metrics]]:
    """Metrics at every distinct observed probability used as a threshold."""
    proba = np.asarray(proba, dtype=float)
    y = np.asarray(y).astype(bool)
    out = []
    for t in np.unique(proba):
        out.append((float(t), Metrics.from_predictions(y, proba >= t, threshold=float(t))))
    return out


def tune_threshold(model: Classifier, dataset, mode: str = "precision_over_recall") -> ThresholdChoice:
    """Pick a decision threshold for the requested precision/recall regime.

    ``precision_over_recall``: the smallest threshold with precision > recall,
    i.e. the largest recall among those. ``recall_over_precision``: among
    thresholds with recall > precision, the one with the largest precision
    (smallest threshold on ties). Falls back to 0.5, flagged infeasible.
    """
    if mode not in ("precision_over_recall", "recall_over_precision"):
        raise InvalidConfig(f"unknown tuning mode {mode!r}")
    y = dataset.y
    _check_classes(y, "tuning")
    sweep = threshold_sweep(model.predict_proba(dataset.X), y)
    if mode == "precision_over_recall":
        ok = [(t, m) for t, m in sweep if m.precision_defined and m.precision > m.recall]
        pick = min(ok, key=lambda tm: tm[0]) if ok else None
    else:
        ok = [(t, m) for t, m in sweep if m.recall > m.precision]
        pick = max(ok, key=lambda tm: (tm[1].precision, -tm[0])) if ok else None
    if pick is None:
        return ThresholdChoice(0.5, False, float("nan"), float("nan"), sweep)
    t, m = pick
    return ThresholdChoice(t, True, m.precision, m.recall, sweep)
