"""Boolean formula IR over the bases B2 (all binary gates) and B0 ({and, or, not}).

Formulas are immutable trees.  In memory identical subtrees may be shared
(a DAG of immutable nodes), but every measure here is taken on the tree the
DAG denotes: ``size`` is the number of variable leaves of the unfolded tree.
All traversals are iterative and memoized per node, so shared structure is
visited once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

AND = 0b1000
OR = 0b1110
XOR = 0b0110

_GATE_NAMES = {AND: "and", OR: "or", XOR: "xor"}

MAX_TRUTH_TABLE_VARS = 24


class FormulaError(Exception):
    pass


class VariableIndexError(FormulaError, IndexError):
    def __init__(self, index: int, nvars: int):
        super().__init__(f"variable index {index} out of range for {nvars} variables")
        self.index = index
        self.nvars = nvars


class ResourceLimitError(FormulaError):
    pass


class NonMonotoneError(FormulaError, ValueError):
    pass


class MissingArgumentError(FormulaError, ValueError):
    pass


class Basis(enum.Enum):
    B2 = "b2"
    B0 = "b0"


class Formula:
    """Base node.  Subclasses fix ``children`` and compute ``size`` eagerly."""

    __slots__ = ("size", "max_var", "_hash", "_neg")

    children: tuple["Formula", ...] = ()

    def __and__(self, other: "Formula") -> "Formula":
        return Gate(AND, self, other)

    def __or__(self, other: "Formula") -> "Formula":
        return Gate(OR, self, other)

    def __xor__(self, other: "Formula") -> "Formula":
        return Gate(XOR, self, other)

    def __invert__(self) -> "Formula":
        return Not(self)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Formula):
            return NotImplemented
        return _structurally_equal(self, other)

    def __repr__(self) -> str:
        if self.size > 64:
            return f"<{type(self).__name__} size={self.size}>"
        from .sexpr import render

        return f"Formula({render(self)!r})"


class Var(Formula):
    __slots__ = ("index",)

    def __init__(self, index: int):
        if index < 0:
            raise ValueError("variable index must be non-negative")
        self.index = index
        self.size = 1
        self.max_var = index
        self._hash = hash(("var", index))
        self._neg = None


class Const(Formula):
    __slots__ = ("value",)

    def __init__(self, value: int):
        self.value = 1 if value else 0
        self.size = 0
        self.max_var = -1
        self._hash = hash(("const", self.value))
        self._neg = None


class Not(Formula):
    __slots__ = ("child", "children")

    def __init__(self, child: Formula):
        self.child = child
        self.children = (child,)
        self.size = child.size
        self.max_var = child.max_var
        self._hash = hash(("not", child._hash))
        self._neg = None


class Gate(Formula):
    """Binary gate; bit ``2*l + r`` of ``table`` is the output for inputs (l, r)."""

    __slots__ = ("table", "left", "right", "children")

    def __init__(self, table: int, left: Formula, right: Formula):
        if not 0 <= table < 16:
            raise ValueError(f"gate table must be a 4-bit value, got {table}")
        self.table = table
        self.left = left
        self.right = right
        self.children = (left, right)
        self.size = left.size + right.size
        self.max_var = max(left.max_var, right.max_var)
        self._hash = hash(("gate", table, left._hash, right._hash))
        self._neg = None

    @property
    def name(self) -> str:
        return _GATE_NAMES.get(self.table, "gate")


ZERO = Const(0)
ONE = Const(1)


def var(i: int) -> Var:
    return Var(i)


def const(b: int) -> Const:
    return ONE if b else ZERO


def table_string(table: int) -> str:
    return "".join("1" if table >> i & 1 else "0" for i in range(4))


def table_from_string(s: str) -> int:
    if len(s) != 4 or set(s) - {"0", "1"}:
        raise ValueError(f"bad gate table {s!r}")
    return sum(1 << i for i, ch in enumerate(s) if ch == "1")


# ----------------------------------------------------------------- traversal


def postorder(root: Formula) -> list[Formula]:
    """Unique nodes of ``root`` (by identity), children before parents."""
    out: list[Formula] = []
    seen: set[int] = set()
    stack: list[tuple[Formula, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            out.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for ch in reversed(node.children):
            if id(ch) not in seen:
                stack.append((ch, False))
    return out


def _structurally_equal(a: Formula, b: Formula) -> bool:
    done: set[tuple[int, int]] = set()
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        if x is y:
            continue
        key = (id(x), id(y))
        if key in done:
            continue
        done.add(key)
        if type(x) is not type(y) or x._hash != y._hash or x.size != y.size:
            return False
        if isinstance(x, Var):
            if x.index != y.index:
                return False
        elif isinstance(x, Const):
            if x.value != y.value:
                return False
        elif isinstance(x, Gate):
            if x.table != y.table:
                return False
            stack.append((x.left, y.left))
            stack.append((x.right, y.right))
        else:
            stack.append((x.child, y.child))
    return True


def leaf_count(f: Formula) -> int:
    return f.size


def gate_count(f: Formula) -> int:
    """Number of binary gates in the unfolded tree (always ``leaves - 1`` minus constant slack)."""
    counts: dict[int, int] = {}
    for node in postorder(f):
        if isinstance(node, Gate):
            counts[id(node)] = 1 + counts[id(node.left)] + counts[id(node.right)]
        elif isinstance(node, Not):
            counts[id(node)] = counts[id(node.child)]
        else:
            counts[id(node)] = 0
    return counts[id(f)]


# ----------------------------------------------------------------- evaluation


def _apply_gate(table: int, l, r, ones):
    if table == AND:
        return l & r
    if table == OR:
        return l | r
    if table == XOR:
        return l ^ r
    out = ones ^ ones
    nl, nr = l ^ ones, r ^ ones
    if table & 1:
        out |= nl & nr
    if table & 2:
        out |= nl & r
    if table & 4:
        out |= l & nr
    if table & 8:
        out |= l & r
    return out


def evaluate_packed(f: Formula, columns: Sequence, ones):
    """Bit-parallel evaluation.

    ``columns[i]`` holds the values of variable ``i`` over many assignments
    packed into one integer (or any array supporting ``& | ^``); ``ones`` is
    the all-true value of the same type.
    """
    if f.max_var >= len(columns):
        raise VariableIndexError(f.max_var, len(columns))
    zero = ones ^ ones
    vals: dict[int, object] = {}
    for node in postorder(f):
        if isinstance(node, Var):
            v = columns[node.index]
        elif isinstance(node, Const):
            v = ones if node.value else zero
        elif isinstance(node, Not):
            v = vals[id(node.child)] ^ ones
        else:
            v = _apply_gate(node.table, vals[id(node.left)], vals[id(node.right)], ones)
        vals[id(node)] = v
    return vals[id(f)]


def evaluate_many(formulas: Sequence[Formula], columns: Sequence, ones) -> list:
    """Like :func:`evaluate_packed` for several formulas sharing one memo."""
    zero = ones ^ ones
    vals: dict[int, object] = {}
    out = []
    for f in formulas:
        if f.max_var >= len(columns):
            raise VariableIndexError(f.max_var, len(columns))
        if id(f) not in vals:
            for node in _postorder_skip(f, vals):
                if isinstance(node, Var):
                    v = columns[node.index]
                elif isinstance(node, Const):
                    v = ones if node.value else zero
                elif isinstance(node, Not):
                    v = vals[id(node.child)] ^ ones
                else:
                    v = _apply_gate(node.table, vals[id(node.left)], vals[id(node.right)], ones)
                vals[id(node)] = v
        out.append(vals[id(f)])
    return out


def _postorder_skip(root: Formula, known: dict) -> list[Formula]:
    out: list[Formula] = []
    seen: set[int] = set()
    stack: list[tuple[Formula, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            out.append(node)
            continue
        k = id(node)
        if k in seen or k in known:
            continue
        seen.add(k)
        stack.append((node, True))
        for ch in reversed(node.children):
            stack.append((ch, False))
    return out


def _postorder_until(root: Formula, stop) -> list[Formula]:
    """Postorder of the nodes reachable from ``root`` without passing a node
    for which ``stop`` holds."""
    out: list[Formula] = []
    seen: set[int] = set()
    stack: list[tuple[Formula, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            out.append(node)
            continue
        k = id(node)
        if k in seen or stop(node):
            continue
        seen.add(k)
        stack.append((node, True))
        for ch in reversed(node.children):
            stack.append((ch, False))
    return out


def evaluate(f: Formula, assignment: Sequence[int]) -> int:
    cols = [1 if b else 0 for b in assignment]
    return evaluate_packed(f, cols, 1)


@dataclass(frozen=True)
class TruthTable:
    nvars: int
    bits: int

    def __post_init__(self):
        if self.nvars > MAX_TRUTH_TABLE_VARS:
            raise ResourceLimitError(f"truth table over {self.nvars} variables exceeds {MAX_TRUTH_TABLE_VARS}")
        if self.bits >> (1 << self.nvars):
            raise ValueError("truth table has bits beyond 2**nvars")

    def __getitem__(self, assignment: int) -> int:
        return self.bits >> assignment & 1

    def __len__(self) -> int:
        return 1 << self.nvars

    def __str__(self) -> str:
        return "".join(str(self[a]) for a in range(len(self)))

    @classmethod
    def from_function(cls, nvars: int, fn: Callable[[tuple[int, ...]], int]) -> "TruthTable":
        bits = 0
        for a in range(1 << nvars):
            if fn(tuple(a >> i & 1 for i in range(nvars))):
                bits |= 1 << a
        return cls(nvars, bits)


def variable_columns(nvars: int) -> tuple[list[int], int]:
    """Packed columns enumerating all ``2**nvars`` assignments (variable 0 = LSB of the index)."""
    if nvars > MAX_TRUTH_TABLE_VARS:
        raise ResourceLimitError(f"{nvars} variables exceeds the truth-table cap of {MAX_TRUTH_TABLE_VARS}")
    width = 1 << nvars
    ones = (1 << width) - 1
    cols = []
    for i in range(nvars):
        half = 1 << i
        pattern = ((1 << half) - 1) << half  # 2**i zeros then 2**i ones
        span = 2 * half
        while span < width:
            pattern |= pattern << span
            span *= 2
        cols.append(pattern & ones)
    return cols, ones


def truth_table(f: Formula, nvars: int) -> TruthTable:
    if nvars > MAX_TRUTH_TABLE_VARS:
        raise ResourceLimitError(f"{nvars} variables exceeds the truth-table cap of {MAX_TRUTH_TABLE_VARS}")
    if f.max_var >= nvars:
        raise VariableIndexError(f.max_var, nvars)
    cols, ones = variable_columns(nvars)
    return TruthTable(nvars, evaluate_packed(f, cols, ones))


# ------------------------------------------------------------- leaf profiles


@dataclass(frozen=True)
class LeafProfile:
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def __getitem__(self, i: int) -> int:
        return self.counts[i]

    def __len__(self) -> int:
        return len(self.counts)


def leaf_profile(f: Formula, nslots: int) -> LeafProfile:
    if f.max_var >= nslots:
        raise VariableIndexError(f.max_var, nslots)
    prof: dict[int, list[int]] = {}
    for node in postorder(f):
        if isinstance(node, Var):
            v = [0] * nslots
            v[node.index] = 1
        elif isinstance(node, Const):
            v = [0] * nslots
        elif isinstance(node, Not):
            v = prof[id(node.child)]
        else:
            a, b = prof[id(node.left)], prof[id(node.right)]
            v = [x + y for x, y in zip(a, b)]
        prof[id(node)] = v
    return LeafProfile(tuple(prof[id(f)]))


# ------------------------------------------------------------------- basis


def validate_basis(f: Formula, basis: Basis) -> tuple[bool, list[str]]:
    """Check basis membership; diagnostics name one path per offending node."""
    if basis is Basis.B2:
        return True, []
    problems: list[str] = []
    stack: list[tuple[Formula, str]] = [(f, "root")]
    seen: set[int] = set()
    while stack:
        node, path = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Not):
            if not isinstance(node.child, Var):
                problems.append(f"{path}: negation applied to a non-variable")
            continue
        if isinstance(node, Gate):
            if node.table not in (AND, OR):
                problems.append(f"{path}: gate {table_string(node.table)} ({node.name}) not in {{and, or}}")
            stack.append((node.right, path + ".right"))
            stack.append((node.left, path + ".left"))
    return not problems, problems


def is_monotone(f: Formula) -> bool:
    for node in postorder(f):
        if isinstance(node, Not):
            return False
        if isinstance(node, Gate) and node.table not in (AND, OR):
            return False
    return True


# --------------------------------------------------------------- rewriting


def negate(f: Formula, basis: Basis = Basis.B0) -> Formula:
    """Leaf-preserving negation.

    Under B0 the negation is pushed to the variables by De Morgan (result is
    cached on the nodes, so repeated negation of shared structure is cheap).
    Under B2 a gate is negated by complementing its table.
    """
    if isinstance(f, Const):
        return const(1 - f.value)
    if isinstance(f, Not):
        return f.child
    if isinstance(f, Var):
        return Not(f)
    if basis is Basis.B2 and f.table not in (AND, OR):
        return Gate(f.table ^ 0xF, f.left, f.right)
    if f._neg is not None:
        return f._neg
    for node in _postorder_until(f, lambda n: n._neg is not None):
        if isinstance(node, Var):
            n = Not(node)
        elif isinstance(node, Const):
            n = const(1 - node.value)
        elif isinstance(node, Not):
            n = node.child
        elif node.table in (AND, OR):
            n = Gate(AND if node.table == OR else OR, node.left._neg, node.right._neg)
        else:
            # expand through the complemented table, keeps non-B0 gates intact
            n = Gate(node.table ^ 0xF, node.left, node.right)
        node._neg = n
        if n._neg is None:
            n._neg = node
    return f._neg


def dualize_monotone(f: Formula) -> Formula:
    """Swap AND/OR and complement constants; requires a monotone formula."""
    memo: dict[int, Formula] = {}
    for node in postorder(f):
        if isinstance(node, Not):
            raise NonMonotoneError("dualize_monotone: formula contains a negation")
        if isinstance(node, Var):
            r = node
        elif isinstance(node, Const):
            r = const(1 - node.value)
        elif node.table in (AND, OR):
            r = Gate(OR if node.table == AND else AND, memo[id(node.left)], memo[id(node.right)])
        else:
            raise NonMonotoneError(f"dualize_monotone: gate {table_string(node.table)} is not monotone")
        memo[id(node)] = r
    return memo[id(f)]


def rename(f: Formula, mapping: dict[int, int]) -> Formula:
    """Rename variables (indices absent from ``mapping`` are kept)."""
    memo: dict[int, Formula] = {}
    for node in postorder(f):
        if isinstance(node, Var):
            r = Var(mapping.get(node.index, node.index))
        elif isinstance(node, Const):
            r = node
        elif isinstance(node, Not):
            r = Not(memo[id(node.child)])
        else:
            r = Gate(node.table, memo[id(node.left)], memo[id(node.right)])
        memo[id(node)] = r
    return memo[id(f)]


def instantiate(
    template: Formula,
    args: Sequence[Formula],
    basis: Basis = Basis.B2,
    fold: bool = False,
) -> Formula:
    """Substitute ``args[i]`` for every ``Var(i)`` of ``template``.

    ``Not(Var(i))`` becomes the negation of ``args[i]`` (De Morgan pushed under
    B0).  With ``fold=True`` constants are propagated as the result is built,
    which may drop leaves; without it the leaf count is exactly
    ``sum(profile[i] * args[i].size)``.
    """
    return instantiate_many([template], args, basis, fold)[0]


def instantiate_many(
    templates: Sequence[Formula],
    args: Sequence[Formula],
    basis: Basis = Basis.B2,
    fold: bool = False,
) -> list[Formula]:
    """Like ``instantiate`` for several templates, keeping their common
    subformulas shared in the result."""
    memo: dict[int, Formula] = {}
    out = []
    for template in templates:
        if template.max_var >= len(args):
            raise MissingArgumentError(
                f"template uses variable {template.max_var} but only {len(args)} arguments were given"
            )
        for node in _postorder_skip(template, memo):
            if isinstance(node, Var):
                r = args[node.index]
                if r is None:
                    raise MissingArgumentError(f"argument {node.index} is missing")
            elif isinstance(node, Const):
                r = node
            elif isinstance(node, Not):
                r = negate(memo[id(node.child)], basis)
            elif fold:
                r = mk_gate(node.table, memo[id(node.left)], memo[id(node.right)], basis)
            else:
                r = Gate(node.table, memo[id(node.left)], memo[id(node.right)])
            memo[id(node)] = r
        out.append(memo[id(template)])
    return out


def mk_gate(table: int, a: Formula, b: Formula, basis: Basis = Basis.B2) -> Formula:
    """Gate constructor with local constant propagation."""
    ca = a.value if isinstance(a, Const) else None
    cb = b.value if isinstance(b, Const) else None
    if ca is not None and cb is not None:
        return const(table >> (2 * ca + cb) & 1)
    if ca is not None or cb is not None:
        # unary function of the remaining argument
        if ca is not None:
            other = b
            f0, f1 = table >> (2 * ca) & 1, table >> (2 * ca + 1) & 1
        else:
            other = a
            f0, f1 = table >> cb & 1, table >> (2 + cb) & 1
        if f0 == f1:
            return const(f0)
        return other if f1 else negate(other, basis)
    if a is b:
        f0, f1 = table & 1, table >> 3 & 1
        if f0 == f1:
            return const(f0)
        return a if f1 else negate(a, basis)
    return Gate(table, a, b)


def fold_constants(f: Formula, basis: Basis = Basis.B2) -> Formula:
    memo: dict[int, Formula] = {}
    for node in postorder(f):
        if isinstance(node, (Var, Const)):
            r = node
        elif isinstance(node, Not):
            c = memo[id(node.child)]
            if isinstance(c, Const):
                r = const(1 - c.value)
            elif isinstance(c, Not):
                r = c.child
            else:
                r = node if c is node.child else Not(c)
        else:
            r = mk_gate(node.table, memo[id(node.left)], memo[id(node.right)], basis)
        memo[id(node)] = r
    return memo[id(f)]


def variables(f: Formula) -> list[int]:
    return sorted({n.index for n in postorder(f) if isinstance(n, Var)})


def iter_nodes(f: Formula) -> Iterator[Formula]:
    return iter(postorder(f))


def and_all(items: Sequence[Formula]) -> Formula:
    return _balanced(AND, items, ONE)


def or_all(items: Sequence[Formula]) -> Formula:
    return _balanced(OR, items, ZERO)


def _balanced(table: int, items: Sequence[Formula], empty: Formula) -> Formula:
    items = list(items)
    if not items:
        return empty
    while len(items) > 1:
        nxt = [Gate(table, items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def xor_b0(a: Formula, b: Formula) -> Formula:
    """``a xor b`` as ``a b' + a' b`` (B0, doubles leaves)."""
    return (a & negate(b, Basis.B0)) | (negate(a, Basis.B0) & b)


def xor_in(basis: Basis, a: Formula, b: Formula) -> Formula:
    return a ^ b if basis is Basis.B2 else xor_b0(a, b)
