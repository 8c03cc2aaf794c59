"""Tiny store-oriented program IR, synthetic generator, profiling interpreter,
static feature extractor, labeling and dataset CSV I/O.

The IR only models what matters for store silentness: memory locations with an
initial-value distribution, stores with a value expression, and counted loops.
A dynamic store is silent when the value it writes equals the value already at
the target cell.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import InvalidConfig, SchemaMismatch, UnknownFeature
from .features import FeatureCatalog
from .seeds import derive_seed, rng_for

REGIONS = ("static", "stack", "heap")
SHAPES = ("scalar", "array", "struct", "vector", "intptr")
VTYPES = ("int", "f32", "f64", "ptr", "bool")
MAX_DEPTH = 3


# --------------------------------------------------------------------------- IR


@dataclass(frozen=True)
class Location:
    name: str
    region: str
    shape: str = "scalar"
    size: int = 1
    init: str = "random"  # "zero", "fill" or "random"
    zero_prob: float = 0.1  # P(cell == 0) under random init
    value_range: int = 8  # non-zero cells are uniform on 1..value_range
    readonly: bool = False
    fill_value: int = 0  # every cell under "fill" init


@dataclass(frozen=True)
class Index:
    kind: str = "const"  # const | iv | affine
    value: int = 0
    var: str = ""
    a: int = 1
    b: int = 0


@dataclass(frozen=True)
class Ref:
    loc: str
    index: Index = Index()


@dataclass(frozen=True)
class Zero:
    pass


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Inc:
    src: Ref
    step: int = 1


@dataclass(frozen=True)
class Load:
    src: Ref


@dataclass(frozen=True)
class BinOp:
    op: str  # add | sub | mul | div
    a: "Expr"
    b: "Expr"


Expr = Union[Zero, Const, Inc, Load, BinOp]


@dataclass(frozen=True)
class StoreStmt:
    id: str
    target: Ref
    value: Expr
    vtype: str = "int"
    compulsory: bool = True
    in_main: bool = True
    guard: Ref | None = None
    verified: bool = False


@dataclass(frozen=True)
class LoopStmt:
    var: str
    trips: int
    body: tuple


Statement = Union[StoreStmt, LoopStmt]


@dataclass(frozen=True)
class TinyProgram:
    name: str
    locations: tuple[Location, ...]
    statements: tuple

    @cached_property
    def location_map(self) -> dict[str, Location]:
        return {loc.name: loc for loc in self.locations}

    def stores(self) -> list[tuple[StoreStmt, int]]:
        """All stores in program order with their loop depth."""
        out: list[tuple[StoreStmt, int]] = []

        def walk(stmts, depth):
            for s in stmts:
                if isinstance(s, LoopStmt):
                    walk(s.body, depth + 1)
                else:
                    out.append((s, depth))

        walk(self.statements, 0)
        return out

    def store_ids(self) -> list[str]:
        return [s.id for s, _ in self.stores()]

    def validate(self) -> None:
        locs = self.location_map
        ids = self.store_ids()
        if len(set(ids)) != len(ids):
            raise InvalidConfig(f"{self.name}: duplicate store ids")

        def check_ref(ref: Ref, scope):
            if ref.loc not in locs:
                raise InvalidConfig(f"{self.name}: undeclared location {ref.loc!r}")
            if ref.index.kind in ("iv", "affine") and ref.index.var not in scope:
                raise InvalidConfig(f"{self.name}: index variable {ref.index.var!r} not in scope")

        def check_expr(e, scope):
            if isinstance(e, (Inc, Load)):
                check_ref(e.src, scope)
            elif isinstance(e, BinOp):
                check_expr(e.a, scope)
                check_expr(e.b, scope)

        def walk(stmts, scope):
            if len(scope) > MAX_DEPTH:
                raise InvalidConfig(f"{self.name}: loop nesting deeper than {MAX_DEPTH}")
            for s in stmts:
                if isinstance(s, LoopStmt):
                    walk(s.body, scope + (s.var,))
                else:
                    check_ref(s.target, scope)
                    check_expr(s.value, scope)
                    if s.guard is not None:
                        check_ref(s.guard, scope)
                    if s.compulsory != (s.guard is None):
                        raise InvalidConfig(f"{s.id}: compulsory stores are exactly the unguarded ones")

        walk(self.statements, ())


# ------------------------------------------------------------- JSON round trip


def _expr_to_dict(e) -> dict:
    if isinstance(e, Zero):
        return {"op": "zero"}
    if isinstance(e, Const):
        return {"op": "const", "value": e.value}
    if isinstance(e, Inc):
        return {"op": "inc", "src": _ref_to_dict(e.src), "step": e.step}
    if isinstance(e, Load):
        return {"op": "load", "src": _ref_to_dict(e.src)}
    return {"op": e.op, "a": _expr_to_dict(e.a), "b": _expr_to_dict(e.b)}


def _expr_from_dict(d):
    op = d["op"]
    if op == "zero":
        return Zero()
    if op == "const":
        return Const(int(d["value"]))
    if op == "inc":
        return Inc(_ref_from_dict(d["src"]), int(d["step"]))
    if op == "load":
        return Load(_ref_from_dict(d["src"]))
    return BinOp(op, _expr_from_dict(d["a"]), _expr_from_dict(d["b"]))


def _ref_to_dict(r: Ref) -> dict:
    return {"loc": r.loc, "index": r.index.__dict__.copy()}


def _ref_from_dict(d) -> Ref:
    return Ref(d["loc"], Index(**d["index"]))


def _stmt_to_dict(s) -> dict:
    if isinstance(s, LoopStmt):
        return {"kind": "loop", "var": s.var, "trips": s.trips, "body": [_stmt_to_dict(b) for b in s.body]}
    return {
        "kind": "store",
        "id": s.id,
        "target": _ref_to_dict(s.target),
        "value": _expr_to_dict(s.value),
        "vtype": s.vtype,
        "compulsory": s.compulsory,
        "in_main": s.in_main,
        "guard": None if s.guard is None else _ref_to_dict(s.guard),
        "verified": s.verified,
    }


def _stmt_from_dict(d):
    if d["kind"] == "loop":
        return LoopStmt(d["var"], int(d["trips"]), tuple(_stmt_from_dict(b) for b in d["body"]))
    return StoreStmt(
        id=d["id"],
        target=_ref_from_dict(d["target"]),
        value=_expr_from_dict(d["value"]),
        vtype=d["vtype"],
        compulsory=d["compulsory"],
        in_main=d["in_main"],
        guard=None if d["guard"] is None else _ref_from_dict(d["guard"]),
        verified=d.get("verified", False),
    )


def program_to_dict(p: TinyProgram) -> dict:
    return {
        "name": p.name,
        "locations": [loc.__dict__.copy() for loc in p.locations],
        "statements": [_stmt_to_dict(s) for s in p.statements],
    }


def program_from_dict(d) -> TinyProgram:
    return TinyProgram(
        d["name"],
        tuple(Location(**loc) for loc in d["locations"]),
        tuple(_stmt_from_dict(s) for s in d["statements"]),
    )


def programs_to_json(programs: Iterable[TinyProgram]) -> str:
    return json.dumps({"version": 1, "programs": [program_to_dict(p) for p in programs]}, indent=1) + "\n"


def programs_from_json(text: str) -> list[TinyProgram]:
    return [program_from_dict(d) for d in json.loads(text)["programs"]]


# ------------------------------------------------------------------ generator


@dataclass
class CorpusConfig:
    n_programs: int = 200
    nullifier_rate: float = 0.15
    induction_rate: float = 0.2
    zero_input_rate: float = 0.1
    loop_depth_dist: tuple = (0.35, 0.35, 0.2, 0.1)
    sparse_rate: float = 0.15  # fraction of input arrays that are mostly zero
    blocks_per_program: tuple = (8, 16)

    def validate(self) -> None:
        for name in ("nullifier_rate", "induction_rate", "zero_input_rate", "sparse_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfig(f"{name}={v} is outside [0, 1]")
        dist = np.asarray(self.loop_depth_dist, dtype=float)
        if dist.shape != (MAX_DEPTH + 1,) or np.any(dist < 0) or not np.isclose(dist.sum(), 1.0):
            raise InvalidConfig("loop_depth_dist must be 4 non-negative weights summing to 1")
        if self.n_programs < 1:
            raise InvalidConfig("n_programs must be positive")
        lo, hi = self.blocks_per_program
        if not 1 <= lo <= hi:
            raise InvalidConfig("blocks_per_program must be an increasing positive range")


_TRIPS = {1: (3, 10), 2: (2, 5), 3: (2, 3)}


class _ProgramBuilder:
    def __init__(self, name: str, cfg: CorpusConfig, rng: np.random.Generator):
        self.name = name
        self.cfg = cfg
        self.rng = rng
        self.locations: list[Location] = []
        self.n_stores = 0

    def pick(self, options, weights=None):
        if weights is None:
            return options[int(self.rng.integers(len(options)))]
        w = np.asarray(weights, dtype=float)
        return options[int(self.rng.choice(len(options), p=w / w.sum()))]

    def declare(self, region, shape="scalar", size=1, init="random", zero_prob=None, readonly=False,
                fill_value=0) -> str:
        name = f"m{len(self.locations)}"
        if shape == "scalar":
            size = 1
        if zero_prob is None:
            zero_prob = self.cfg.zero_input_rate
        self.locations.append(Location(name, region, shape, size, init, float(zero_prob), 8, readonly, fill_value))
        return name

    def input_array(self, size, dense=False) -> str:
        sparse = not dense and self.rng.random() < self.cfg.sparse_rate
        zp = 0.98 if sparse else self.cfg.zero_input_rate
        return self.declare(self.pick(REGIONS, (0.2, 0.4, 0.4)), "array", size, "random", zp)

    def init_for(self, region) -> str:
        if region == "static":
            return "zero"
        # heap: calloc vs malloc; stack: explicitly cleared locals vs garbage
        p_zero = 0.5 if region == "heap" else 0.4
        return "zero" if self.rng.random() < p_zero else "random"

    def element_ref(self, loc: str, vars_: tuple) -> Ref:
        if not vars_:
            return Ref(loc, Index("const", int(self.rng.integers(4))))
        var = vars_[-1]
        kind = self.pick(("iv", "affine8", "affine"), (0.7, 0.15, 0.15))
        if kind == "iv":
            return Ref(loc, Index("iv", var=var))
        if kind == "affine8":
            return Ref(loc, Index("affine", var=var, a=8, b=0))
        return Ref(loc, Index("affine", var=var, a=int(self.pick((2, 3))), b=int(self.rng.integers(1, 4))))

    def target(self, vars_, region=None, array_prob=0.6, init=None, fill_value=0) -> Ref:
        if region is None:
            region = self.pick(REGIONS, (0.35, 0.35, 0.3))
        init = init or self.init_for(region)
        if vars_ and self.rng.random() < array_prob:
            shape = self.pick(("array", "vector"), (0.85, 0.15))
            loc = self.declare(region, shape, 64, init, fill_value=fill_value)
            return self.element_ref(loc, vars_)
        if not vars_:
            shape = self.pick(("scalar", "struct", "array", "intptr"), (0.5, 0.2, 0.2, 0.1))
        else:
            shape = self.pick(("scalar", "intptr"), (0.85, 0.15))
        if shape in ("struct", "array"):
            loc = self.declare(region, shape, 4, init, fill_value=fill_value)
            return Ref(loc, Index("const", int(self.rng.integers(4))))
        return Ref(self.declare(region, shape, 1, init, fill_value=fill_value))

    def source_ref(self, vars_, dense=False) -> Ref:
        loc = self.input_array(64, dense)
        if vars_:
            return Ref(loc, Index("iv", var=vars_[-1]))
        return Ref(loc, Index("const", int(self.rng.integers(64))))

    def new_store(self, target, value, vtype, depth, in_main=True) -> StoreStmt:
        sid = f"{self.name}:s{self.n_stores:03d}"
        self.n_stores += 1
        compulsory = self.rng.random() < (0.9 if depth == 0 else 0.6)
        guard = None
        if not compulsory:
            guard = Ref(self.declare("stack", "scalar", 1, "random", zero_prob=0.3))
        return StoreStmt(sid, target, value, vtype, compulsory, in_main, guard)

    def store(self, vars_, in_main=True) -> StoreStmt:
        depth = len(vars_)
        u = self.rng.random()
        cfg = self.cfg
        if u < cfg.nullifier_rate:
            return self.nullifier(vars_, in_main)
        if u < cfg.nullifier_rate + cfg.induction_rate:
            return self.induction(vars_)
        kind = self.pick(("accumulate", "product", "const", "copy", "div", "sub"), (0.22, 0.13, 0.2, 0.25, 0.08, 0.12))
        if kind == "accumulate":
            acc = self.target((), region=self.pick(("stack", "static")), init="random")
            acc = Ref(acc.loc, acc.index)
            return self.new_store(acc, BinOp("add", Load(acc), Load(self.source_ref(vars_, dense=True))),
                                  self.pick(("int", "f64", "f32"), (0.6, 0.25, 0.15)), depth)
        if kind == "product":
            t = self.target(vars_, region=self.pick(("stack", "heap")), array_prob=1.0, init="random")
            prod = BinOp("mul", Load(self.source_ref(vars_)), Load(self.source_ref(vars_)))
            return self.new_store(t, BinOp("add", Load(t), prod), self.pick(("int", "f64"), (0.7, 0.3)), depth)
        if kind == "const":
            vtype = self.pick(("int", "bool", "f64"), (0.5, 0.35, 0.15))
            if vtype == "bool":
                # flags that are frequently re-set to the value they already hold
                init = "fill" if self.rng.random() < 0.5 else None
                return self.new_store(self.target(vars_, init=init, fill_value=1), Const(1), vtype, depth)
            return self.new_store(self.target(vars_), Const(int(self.rng.integers(1, 9))), vtype, depth)
        if kind == "copy":
            t = self.target(vars_)
            return self.new_store(t, Load(self.source_ref(vars_)), self.pick(("int", "ptr", "f64", "f32"), (0.55, 0.2, 0.15, 0.1)), depth)
        if kind == "div":
            num = Load(self.source_ref(vars_))
            den = Load(Ref(self.declare("stack", "scalar", 1, "random", zero_prob=0.01)))
            return self.new_store(self.target(vars_, array_prob=0.3), BinOp("div", num, den),
                                  self.pick(("f64", "int"), (0.7, 0.3)), depth)
        a = Load(self.source_ref(vars_))
        b = Load(self.source_ref(vars_))
        return self.new_store(self.target(vars_), BinOp("sub", a, b), self.pick(("int", "f64"), (0.7, 0.3)), depth)

    def nullifier(self, vars_, in_main=True) -> StoreStmt:
        depth = len(vars_)
        vtype = self.pick(("int", "ptr", "bool", "f64", "f32"), (0.6, 0.15, 0.1, 0.1, 0.05))
        t = self.target(vars_)
        if self.cfg.nullifier_rate >= 1.0:
            variant = "zero"
        else:
            variant = self.pick(("zero", "copyzero", "selfsub"), (0.62, 0.25, 0.13))
        if variant == "zero":
            value = Zero()
        elif variant == "copyzero":
            value = Load(Ref(self.declare("static", "scalar", 1, "zero", readonly=True)))
        else:
            value = BinOp("sub", Load(t), Load(t))
        return self.new_store(t, value, vtype, depth, in_main)

    def induction(self, vars_) -> StoreStmt:
        depth = len(vars_)
        step = 1 if self.rng.random() < 0.6 else int(self.pick((2, 4, 8)))
        vtype = "ptr" if step == 8 and self.rng.random() < 0.5 else "int"
        t = self.target(vars_, array_prob=0.25)
        return self.new_store(t, Inc(t, step), vtype, depth)

    def block(self, depth: int) -> list:
        vars_ = tuple(f"i{len(self.locations)}_{k}" for k in range(depth))
        n = int(self.rng.integers(1, 5))
        in_main = self.rng.random() < 0.8
        stores = [replace(self.store(vars_, in_main), in_main=in_main) for _ in range(n)]
        if depth == 0:
            return stores
        body: tuple = tuple(stores)
        for k in reversed(range(depth)):
            lo, hi = _TRIPS[depth]
            body = (LoopStmt(vars_[k], int(self.rng.integers(lo, hi + 1)), body),)
        return list(body)

    def build(self) -> TinyProgram:
        lo, hi = self.cfg.blocks_per_program
        stmts: list = []
        for _ in range(int(self.rng.integers(lo, hi + 1))):
            depth = int(self.rng.choice(MAX_DEPTH + 1, p=np.asarray(self.cfg.loop_depth_dist, float)))
            stmts.extend(self.block(depth))
        return TinyProgram(self.name, tuple(self.locations), tuple(stmts))


def generate_corpus(seed: int, config: CorpusConfig | None = None) -> list[TinyProgram]:
    """Deterministic synthetic corpus; program ``k`` depends only on (seed, k)."""
    cfg = config or CorpusConfig()
    cfg.validate()
    programs = []
    for k in range(cfg.n_programs):
        name = f"p{k:04d}"
        programs.append(_ProgramBuilder(name, cfg, rng_for(seed, "program", k)).build())
    return programs


# ----------------------------------------------------------- feature extractor

EXTRACTABLE = frozenset(
    "Vfp Vdb Vin Vpt sz1 sz8 ADD GEP ZER INT SUB DIV Oic Ozr Oin Old "
    "Pin Pst Pay Pvc Msc Msk Mhp Smn Sl0 Sl1 Sl2 Sl3 Scm Es1 Es8 Eaf".split()
)


def _walk_expr(e):
    yield e
    if isinstance(e, BinOp):
        yield from _walk_expr(e.a)
        yield from _walk_expr(e.b)


def is_static_zero(e, locs: dict[str, Location]) -> bool:
    """True when the expression always evaluates to zero."""
    if isinstance(e, Zero):
        return True
    if isinstance(e, Load):
        loc = locs[e.src.loc]
        return loc.readonly and loc.init == "zero"
    if isinstance(e, BinOp) and e.op == "sub":
        return isinstance(e.a, Load) and e.a == e.b
    if isinstance(e, BinOp) and e.op == "mul":
        return is_static_zero(e.a, locs) or is_static_zero(e.b, locs)
    return False


def store_codes(store: StoreStmt, depth: int, locs: dict[str, Location]) -> set[str]:
    codes: set[str] = set()
    codes |= {"int": {"Vin"}, "f32": {"Vfp"}, "f64": {"Vdb"}, "ptr": {"Vpt"}, "bool": set()}[store.vtype]
    if store.vtype == "bool":
        codes.add("sz1")
    elif store.vtype != "f32":
        codes.add("sz8")

    for node in _walk_expr(store.value):
        if isinstance(node, Zero):
            codes.add("ZER")
        elif isinstance(node, Const):
            codes.add("INT")
        elif isinstance(node, Inc):
            codes |= {"ADD", "INT"}
        elif isinstance(node, Load):
            loc = locs[node.src.loc]
            if loc.shape != "scalar":
                codes.add("GEP")
            if loc.readonly and loc.init == "zero":
                codes.add("ZER")
        elif isinstance(node, BinOp):
            codes.add({"add": "ADD", "sub": "SUB", "div": "DIV", "mul": "MUL"}[node.op])
    codes.discard("MUL")

    v = store.value
    if isinstance(v, Zero) or (isinstance(v, BinOp) and v.op == "sub" and is_static_zero(v, locs)):
        codes.add("Ozr")
    elif isinstance(v, Inc):
        codes.add("Oic" if v.step == 1 else "Oin")
    elif isinstance(v, Const):
        codes.add("Oin")
    elif isinstance(v, Load):
        codes.add("Old")
    elif isinstance(v, BinOp) and v.op == "add" and store.target in (
        getattr(v.a, "src", None),
        getattr(v.b, "src", None),
    ):
        codes.add("Oic")

    target = locs[store.target.loc]
    ptr = {"intptr": "Pin", "struct": "Pst", "array": "Pay", "vector": "Pvc"}.get(target.shape)
    if ptr:
        codes.add(ptr)
    codes.add({"static": "Msc", "stack": "Msk", "heap": "Mhp"}[target.region])

    if store.in_main:
        codes.add("Smn")
    codes.add(f"Sl{depth}")
    if store.compulsory:
        codes.add("Scm")

    idx = store.target.index
    if idx.kind == "iv" or (idx.kind == "affine" and idx.a == 1):
        codes.add("Es1")
    elif idx.kind == "affine":
        codes.add("Es8" if idx.a == 8 and idx.b == 0 else "Eaf")
    return codes


def extract_features(program: TinyProgram, catalog: FeatureCatalog) -> dict[str, np.ndarray]:
    unknown = [c for c in catalog.codes if c not in EXTRACTABLE]
    if unknown:
        raise UnknownFeature(f"extractor cannot evaluate features {unknown}")
    locs = program.location_map
    out = {}
    for store, depth in program.stores():
        out[store.id] = catalog.vector_from_codes(store_codes(store, depth, locs))
    return out


# ------------------------------------------------------------------ profiling


@dataclass
class StoreCounts:
    silent: int = 0
    total: int = 0
    writes: int = 0
    verify_reads: int = 0


@dataclass
class Profile:
    counts: dict[str, StoreCounts]
    n_inputs: int
    skipped_inputs: int = 0
    final_states: list = field(default_factory=list)
    verified: frozenset = frozenset()

    def pairs(self) -> dict[str, tuple[int, int]]:
        return {sid: (c.silent, c.total) for sid, c in self.counts.items()}


def _init_memory(program: TinyProgram, rng: np.random.Generator) -> dict[str, list[int]]:
    mem = {}
    for loc in program.locations:
        if loc.init == "zero":
            mem[loc.name] = [0] * loc.size
        elif loc.init == "fill":
            mem[loc.name] = [loc.fill_value] * loc.size
        else:
            vals = rng.integers(1, loc.value_range + 1, size=loc.size)
            zeros = rng.random(loc.size) < loc.zero_prob
            vals[zeros] = 0
            mem[loc.name] = vals.tolist()
    return mem


def _index(idx: Index, env, size) -> int:
    if idx.kind == "const":
        return idx.value % size
    if idx.kind == "iv":
        return env[idx.var] % size
    return (idx.a * env[idx.var] + idx.b) % size


def _eval(e, mem, env, sizes):
    if isinstance(e, Zero):
        return 0
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Load):
        r = e.src
        return mem[r.loc][_index(r.index, env, sizes[r.loc])]
    if isinstance(e, Inc):
        r = e.src
        return mem[r.loc][_index(r.index, env, sizes[r.loc])] + e.step
    a = _eval(e.a, mem, env, sizes)
    b = _eval(e.b, mem, env, sizes)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    if b == 0:
        raise ZeroDivisionError
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


def _execute(program: TinyProgram, mem, counts: dict[str, StoreCounts]):
    sizes = {loc.name: loc.size for loc in program.locations}
    env: dict[str, int] = {}

    def run(stmts):
        for s in stmts:
            if isinstance(s, LoopStmt):
                for it in range(s.trips):
                    env[s.var] = it
                    run(s.body)
                del env[s.var]
                continue
            if s.guard is not None:
                g = s.guard
                if mem[g.loc][_index(g.index, env, sizes[g.loc])] == 0:
                    continue
            value = _eval(s.value, mem, env, sizes)
            t = s.target
            cell = mem[t.loc]
            i = _index(t.index, env, sizes[t.loc])
            c = counts[s.id]
            c.total += 1
            silent = cell[i] == value
            if silent:
                c.silent += 1
            if s.verified:
                c.verify_reads += 1
                if not silent:
                    cell[i] = value
                    c.writes += 1
            else:
                cell[i] = value
                c.writes += 1

    run(program.statements)


def profile(program: TinyProgram, input_seed: int, n_inputs: int = 4, keep_states: bool = False) -> Profile:
    """Run ``program`` on ``n_inputs`` random input valuations and count silent stores.

    An input valuation that divides by zero is discarded as a whole and
    counted in ``skipped_inputs``.
    """
    if n_inputs < 1:
        raise InvalidConfig("n_inputs must be >= 1")
    rng = np.random.default_rng(input_seed)
    ids = program.store_ids()
    totals = {sid: StoreCounts() for sid in ids}
    result = Profile(totals, n_inputs, verified=frozenset(s.id for s, _ in program.stores() if s.verified))
    for _ in range(n_inputs):
        mem = _init_memory(program, rng)
        local = {sid: StoreCounts() for sid in ids}
        try:
            _execute(program, mem, local)
        except ZeroDivisionError:
            result.skipped_inputs += 1
            if keep_states:
                result.final_states.append(None)
            continue
        for sid, c in local.items():
            t = totals[sid]
            t.silent += c.silent
            t.total += c.total
            t.writes += c.writes
            t.verify_reads += c.verify_reads
        if keep_states:
            result.final_states.append(mem)
    return result


# ------------------------------------------------------------ dataset + labels


@dataclass(frozen=True)
class StoreRecord:
    store_id: str
    features: tuple
    silent_count: int
    total_count: int

    def __post_init__(self):
        if self.total_count < 1:
            raise ValueError(f"{self.store_id}: total_count must be positive")
        if not 0 <= self.silent_count <= self.total_count:
            raise ValueError(f"{self.store_id}: silent_count out of range")

    @property
    def label(self) -> str:
        return "silent" if self.silent_count == self.total_count else "noisy"

    @property
    def silent(self) -> bool:
        return self.silent_count == self.total_count


@dataclass
class Dataset:
    catalog: FeatureCatalog
    records: list[StoreRecord]

    def __post_init__(self):
        n = len(self.catalog)
        for r in self.records:
            if len(r.features) != n:
                raise ValueError(f"{r.store_id}: {len(r.features)} features, catalog has {n}")

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def X(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, len(self.catalog)), dtype=np.uint8)
        return np.array([r.features for r in self.records], dtype=np.uint8)

    @cached_property
    def y(self) -> np.ndarray:
        return np.array([r.silent for r in self.records], dtype=np.int64)

    @property
    def ids(self) -> list[str]:
        return [r.store_id for r in self.records]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.catalog, [self.records[i] for i in rows])

    def project(self, kept: list[int]) -> "Dataset":
        """Keep only the feature columns ``kept`` (e.g. after ``pearson_reduce``)."""
        cat = self.catalog.subset(kept)
        recs = [replace(r, features=tuple(r.features[i] for i in kept)) for r in self.records]
        return Dataset(cat, recs)

    def silent_fraction(self) -> float:
        return float(self.y.mean()) if self.records else 0.0


def label_records(profiles, features, catalog: FeatureCatalog) -> Dataset:
    """Label every executed store; never-executed stores are dropped.

    ``profiles`` maps store id to (silent_count, total_count).
    """
    records = []
    for sid in sorted(profiles):
        silent, total = profiles[sid]
        if total == 0:
            continue
        if sid not in features:
            raise KeyError(f"no features for profiled store {sid}")
        bits = tuple(int(b) for b in features[sid])
        records.append(StoreRecord(sid, bits, int(silent), int(total)))
    return Dataset(catalog, records)


def build_dataset(programs: list[TinyProgram], catalog: FeatureCatalog, input_seed: int, n_inputs: int = 4) -> Dataset:
    pairs: dict[str, tuple[int, int]] = {}
    feats: dict[str, np.ndarray] = {}
    for p in programs:
        prof = profile(p, derive_seed(input_seed, "inputs", p.name), n_inputs)
        pairs.update(prof.pairs())
        feats.update(extract_features(p, catalog))
    return label_records(pairs, feats, catalog)


# ----------------------------------------------------------------------- CSV


def save_csv(dataset: Dataset, path) -> None:
    codes = list(dataset.catalog.codes)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["store_id", *codes, "silent_count", "total_count", "label"])
        for r in dataset.records:
            w.writerow([r.store_id, *r.features, r.silent_count, r.total_count, r.label])


def load_csv(path, catalog: FeatureCatalog) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(message=f"{path}: empty file") from None
        expected = ["store_id", *catalog.codes, "silent_count", "total_count", "label"]
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        if missing or extra or len(header) != len(set(header)):
            raise SchemaMismatch(missing, extra)
        pos = {c: header.index(c) for c in expected}
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                bits = tuple(int(row[pos[c]]) for c in catalog.codes)
                rec = StoreRecord(row[pos["store_id"]], bits, int(row[pos["silent_count"]]), int(row[pos["total_count"]]))
            except (ValueError, IndexError) as exc:
                raise SchemaMismatch(message=f"{path}:{lineno}: {exc}") from None
            if any(b not in (0, 1) for b in bits):
                raise SchemaMismatch(message=f"{path}:{lineno}: feature cells must be 0 or 1")
            if row[pos["label"]] != rec.label:
                raise SchemaMismatch(message=f"{path}:{lineno}: label {row[pos['label']]!r} contradicts counts")
            records.append(rec)
    return Dataset(catalog, records)
