"""Static store feature catalog, binary feature vectors and Pearson-based reduction."""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidConfig, ZeroVariance


class Category(str, Enum):
    VALUE_TYPE = "value-type"
    VALUE_SIZE = "value-size"
    SLICE = "program-slice"
    LAST_PRODUCER = "last-producing-instruction"
    POINTER_TYPE = "pointer-type"
    REGION = "memory-region"
    LABEL = "instruction-label"
    OFFSET = "offset"


@dataclass(frozen=True)
class Feature:
    code: str
    category: Category
    description: str


_DEFAULT = [
    ("Vfp", Category.VALUE_TYPE, "stored value is a 32-bit float"),
    ("Vdb", Category.VALUE_TYPE, "stored value is a 64-bit float"),
    ("Vin", Category.VALUE_TYPE, "stored value is an integer"),
    ("Vpt", Category.VALUE_TYPE, "stored value is a pointer"),
    ("sz1", Category.VALUE_SIZE, "stored value type is 1 bit wide"),
    ("sz8", Category.VALUE_SIZE, "stored value type is a full machine word"),
    ("ADD", Category.SLICE, "an addition contributes to the value"),
    ("GEP", Category.SLICE, "an element address computation contributes to the value"),
    ("ZER", Category.SLICE, "the zero constant contributes to the value"),
    ("INT", Category.SLICE, "a non-zero integer constant contributes to the value"),
    ("SUB", Category.SLICE, "a subtraction contributes to the value"),
    ("DIV", Category.SLICE, "a division contributes to the value"),
    ("Oic", Category.LAST_PRODUCER, "value produced by an increment"),
    ("Ozr", Category.LAST_PRODUCER, "value produced by an assignment of zero"),
    ("Oin", Category.LAST_PRODUCER, "value produced by an integer constant update"),
    ("Old", Category.LAST_PRODUCER, "value produced by a load"),
    ("Pin", Category.POINTER_TYPE, "target pointer is an integer pointer"),
    ("Pst", Category.POINTER_TYPE, "target pointer addresses a struct"),
    ("Pay", Category.POINTER_TYPE, "target pointer addresses an array"),
    ("Pvc", Category.POINTER_TYPE, "target pointer addresses a SIMD vector"),
    ("Msc", Category.REGION, "target lives in static memory"),
    ("Msk", Category.REGION, "target lives on the stack"),
    ("Mhp", Category.REGION, "target lives on the heap"),
    ("Smn", Category.LABEL, "store is inside main"),
    ("Sl0", Category.LABEL, "store is outside any loop"),
    ("Sl1", Category.LABEL, "store is in a singly nested loop"),
    ("Sl2", Category.LABEL, "store is in a doubly nested loop"),
    ("Sl3", Category.LABEL, "store is in a triply nested loop"),
    ("Scm", Category.LABEL, "store is compulsory (unguarded)"),
    ("Es1", Category.OFFSET, "offset has stride 1"),
    ("Es8", Category.OFFSET, "offset has stride 8"),
    ("Eaf", Category.OFFSET, "offset is a general affine expression"),
]


@dataclass(frozen=True)
class FeatureCatalog:
    """Ordered feature set; position in ``features`` is the bit position."""

    features: tuple[Feature, ...]

    def __post_init__(self):
        codes = [f.code for f in self.features]
        if any(not c for c in codes):
            raise InvalidConfig("feature codes must be non-empty")
        if len(set(codes)) != len(codes):
            raise InvalidConfig("feature codes must be unique")

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def __contains__(self, code) -> bool:
        return code in self.codes

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(f.code for f in self.features)

    def index(self, code: str) -> int:
        try:
            return self.codes.index(code)
        except ValueError:
            raise KeyError(f"unknown feature code {code!r}") from None

    def subset(self, indices: Iterable[int]) -> "FeatureCatalog":
        return FeatureCatalog(tuple(self.features[i] for i in indices))

    def vector(self, bits: Sequence[int]) -> np.ndarray:
        """Validate ``bits`` against this catalog and return it as a uint8 array."""
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.shape != (len(self),):
            raise ValueError(f"feature vector of length {arr.size} does not match catalog size {len(self)}")
        if np.any(arr > 1):
            raise ValueError("feature bits must be 0 or 1")
        return arr

    def vector_from_codes(self, codes: Iterable[str]) -> np.ndarray:
        bits = np.zeros(len(self), dtype=np.uint8)
        for c in codes:
            bits[self.index(c)] = 1
        return bits

    def to_json(self) -> str:
        rows = [{"code": f.code, "category": f.category.value, "description": f.description} for f in self.features]
        return json.dumps(rows, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FeatureCatalog":
        rows = json.loads(text)
        return cls(tuple(Feature(r["code"], Category(r["category"]), r.get("description", "")) for r in rows))


def catalog_default() -> FeatureCatalog:
    return FeatureCatalog(tuple(Feature(*row) for row in _DEFAULT))


def pearson(col_a, col_b) -> float:
    a = np.asarray(col_a, dtype=float)
    b = np.asarray(col_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("columns must be 1-D and of equal length")
    if a.size < 2:
        raise ValueError("need at least two observations")
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(np.dot(da, da))
    sb = np.sqrt(np.dot(db, db))
    if sa == 0 or sb == 0:
        raise ZeroVariance("Pearson correlation is undefined for a constant column")
    r = float(np.dot(da, db) / (sa * sb))
    return min(1.0, max(-1.0, r))


def pearson_reduce(dataset, threshold: float = 0.95) -> tuple[FeatureCatalog, list[int]]:
    """Greedy correlation filter over catalog order.

    Constant columns go first; then a feature is kept only if its absolute
    correlation with every already-kept feature is at most ``threshold``.
    """
    if not 0 < threshold <= 1:
        raise InvalidConfig("threshold must lie in (0, 1]")
    X = np.asarray(dataset.X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("dataset is empty")
    kept: list[int] = []
    for j in range(X.shape[1]):
        col = X[:, j]
        if np.all(col == col[0]):
            continue
        if all(abs(pearson(col, X[:, k])) <= threshold for k in kept):
            kept.append(j)
    return dataset.catalog.subset(kept), kept
