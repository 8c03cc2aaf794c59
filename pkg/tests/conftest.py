import numpy as np
import pytest
from hypothesis import settings

from silentxai.corpus import CorpusConfig, build_dataset, generate_corpus
from silentxai.corpus import Dataset, StoreRecord
from silentxai.features import Category, Feature, FeatureCatalog, catalog_default

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_dataset(X, y, codes=None):
    """Dataset over generic features f0..f{n-1} (or ``codes``) with one execution per record."""
    X = np.asarray(X, dtype=np.uint8)
    codes = codes or [f"f{j}" for j in range(X.shape[1])]
    cat = FeatureCatalog(tuple(Feature(c, Category.LABEL, "") for c in codes))
    recs = [StoreRecord(f"s{i:05d}", tuple(int(b) for b in row), int(lab), 1) for i, (row, lab) in enumerate(zip(X, y))]
    return Dataset(cat, recs)


@pytest.fixture(scope="session")
def catalog():
    return catalog_default()


@pytest.fixture(scope="session")
def small_programs():
    return generate_corpus(11, CorpusConfig(n_programs=30))


@pytest.fixture(scope="session")
def small_dataset(small_programs, catalog):
    return build_dataset(small_programs, catalog, input_seed=5)


class LookupModel:
    """Probability = bit of one feature (or a constant)."""

    def __init__(self, n_features, index=None, const=0.5):
        self.n_features = n_features
        self.index = index
        self.const = const
        self.decision_threshold = 0.5

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        p = np.full(len(X2), self.const) if self.index is None else X2[:, self.index].copy()
        return float(p[0]) if single else p


@pytest.fixture
def lookup():
    return LookupModel


def averaging_program():
    """The averaging example: sum = 0; loop sum += values[i]; average = sum / 5."""
    from silentxai.corpus import BinOp, Const, Index, Load, Location, LoopStmt, Ref, StoreStmt, TinyProgram, Zero

    locs = (
        Location("values", "stack", "array", 5, "random"),
        Location("sum", "stack", "scalar", 1, "random"),
        Location("average", "stack", "scalar", 1, "random"),
    )
    s_init = StoreStmt("avg:sum_init", Ref("sum"), Zero(), "int")
    s_acc = StoreStmt("avg:sum_acc", Ref("sum"),
                      BinOp("add", Load(Ref("sum")), Load(Ref("values", Index("iv", var="i")))), "int")
    s_avg = StoreStmt("avg:average", Ref("average"), BinOp("div", Load(Ref("sum")), Const(5)), "f64")
    return TinyProgram("avg", locs, (s_init, LoopStmt("i", 5, (s_acc,)), s_avg))


@pytest.fixture
def averaging():
    return averaging_program()


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """Full pipeline with every default (master seed 0)."""
    from silentxai.cli import run_pipeline

    out = tmp_path_factory.mktemp("default_run")
    assert run_pipeline(["--out", str(out)]) == 0
    return out


@pytest.fixture(scope="session")
def recall_run(tmp_path_factory, default_run):
    """Same corpus, model tuned for recall over precision, then explained and combined."""
    import shutil

    from silentxai.cli import run_pipeline

    out = tmp_path_factory.mktemp("recall_run")
    for name in ("catalog.json", "programs.json", "dataset.csv"):
        shutil.copy(default_run / name, out / name)
    code = run_pipeline(["--out", str(out)], ("train", "explain", "combine"),
                        {"train": ["--mode", "recall_over_precision"]})
    assert code == 0
    return out


ACCEPTANCE = {}


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
