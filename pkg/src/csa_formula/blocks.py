"""CSA building blocks: bit encodings, block templates, composites, verification.

A block maps weighted input bits to weighted output bits while preserving
the weighted sum.  Inputs and outputs are *slots*; a slot carries one
decoded group of bits (1, 2 or 3 bits) in some encoding, and each encoding
exposes a fixed tuple of code components.  Templates are formulas over the
flattened input components, one per flattened output component.

Composites are netlists of blocks.  Their templates are the fully expanded
formulas, and their leaf matrices can also be obtained by composing member
leaf profiles along the wiring; the two must agree.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .formula import (
    ONE,
    ZERO,
    Basis,
    Formula,
    ResourceLimitError,
    Var,
    and_all,
    dualize_monotone,
    evaluate_many,
    instantiate,
    leaf_profile,
    negate,
    or_all,
    rename,
    validate_basis,
    variable_columns,
    xor_b0,
)
from .sexpr import render

MAX_VERIFY_BITS = 24


class Encoding(enum.Enum):
    STD = "std"
    XOR_PAIR = "xorpair"
    MON_PAIR = "monpair"
    SORT_TRIPLE = "sorttriple"

    @property
    def components(self) -> tuple[str, ...]:
        return _COMPONENTS[self]

    @property
    def arity(self) -> int:
        """Number of decoded bits carried by one code word."""
        return _ARITY[self]

    def encode(self, bits: Sequence, ones) -> list:
        """Code components for decoded ``bits`` (packed values, see ``evaluate_packed``)."""
        if self is Encoding.STD:
            return [bits[0]]
        if self is Encoding.XOR_PAIR:
            u, v = bits
            return [v, u ^ v]
        if self is Encoding.MON_PAIR:
            u, v = bits
            return [u & v, u | v]
        u, v, w = bits
        return [u | v | w, ((u | v) & w) | (u & v), u & v & w, u ^ v ^ w]

    def decode_sum(self, comps: Sequence[np.ndarray]) -> np.ndarray:
        if self is Encoding.STD:
            return comps[0].astype(np.int64)
        if self is Encoding.XOR_PAIR:
            v, x = comps
            return (x ^ v).astype(np.int64) + v
        if self is Encoding.MON_PAIR:
            return comps[0].astype(np.int64) + comps[1]
        return comps[0].astype(np.int64) + comps[1] + comps[2]

    def valid(self, comps: Sequence[np.ndarray]) -> np.ndarray:
        if self is Encoding.MON_PAIR:
            a, o = comps
            return ~a | o
        if self is Encoding.SORT_TRIPLE:
            s1, s2, s3, sx = comps
            return (~s2 | s1) & (~s3 | s2) & (sx == (s1 ^ s2 ^ s3))
        return np.ones_like(comps[0], dtype=bool)


_COMPONENTS = {
    Encoding.STD: ("b",),
    # (v, u xor v): the order in which the pair enters the MDFA diagram
    Encoding.XOR_PAIR: ("v", "x"),
    Encoding.MON_PAIR: ("and", "or"),
    # s1 = OR (largest), s2 = median, s3 = AND, sx = parity
    Encoding.SORT_TRIPLE: ("s1", "s2", "s3", "sx"),
}
_ARITY = {Encoding.STD: 1, Encoding.XOR_PAIR: 2, Encoding.MON_PAIR: 2, Encoding.SORT_TRIPLE: 3}


@dataclass(frozen=True)
class Slot:
    name: str
    encoding: Encoding = Encoding.STD
    significance: int = 0

    @property
    def component_names(self) -> tuple[str, ...]:
        if self.encoding is Encoding.STD:
            return (self.name,)
        return tuple(f"{self.name}.{c}" for c in self.encoding.components)


def std(name: str, sig: int = 0) -> Slot:
    return Slot(name, Encoding.STD, sig)


@dataclass(frozen=True)
class Part:
    block: "BlockSpec"
    wires: tuple[int, ...]  # signal id per input component; -1 / -2 are constants 0 / 1


@dataclass(frozen=True)
class BlockSpec:
    name: str
    basis: Basis
    inputs: tuple[Slot, ...]
    outputs: tuple[Slot, ...]
    templates: tuple[Formula, ...]
    parts: tuple[Part, ...] = ()
    output_wires: tuple[int, ...] = ()
    # False for helper blocks that compute functions rather than compress sums
    is_csa: bool = True
    description: str = ""

    def __post_init__(self):
        if len(self.templates) != len(self.output_components):
            raise ValueError(f"{self.name}: {len(self.templates)} templates for {len(self.output_components)} outputs")
        for side in (self.inputs, self.outputs):
            names = [s.name for s in side]
            if len(set(names)) != len(names):
                raise ValueError(f"{self.name}: duplicate slot names {names}")

    @property
    def input_components(self) -> tuple[str, ...]:
        return tuple(c for s in self.inputs for c in s.component_names)

    @property
    def output_components(self) -> tuple[str, ...]:
        return tuple(c for s in self.outputs for c in s.component_names)

    @property
    def decoded_inputs(self) -> int:
        return sum(s.encoding.arity for s in self.inputs)

    @property
    def is_composite(self) -> bool:
        return bool(self.parts)

    def template(self, component: str) -> Formula:
        return self.templates[self.output_components.index(component)]

    def identity(self) -> str:
        def side(slots):
            terms = []
            for s in slots:
                t = s.name if s.encoding is Encoding.STD else f"|{s.name}|"
                terms.append(t if s.significance == 0 else f"{1 << s.significance}*{t}")
            return " + ".join(terms)

        return f"{side(self.inputs)} = {side(self.outputs)}"

    def describe(self) -> dict:
        return {
            "name": self.name,
            "basis": self.basis.value,
            "inputs": [_slot_doc(s) for s in self.inputs],
            "outputs": [_slot_doc(s) for s in self.outputs],
            "identity": self.identity() if self.is_csa else None,
            "composite": self.is_composite,
            "parts": [p.block.name for p in self.parts],
            "templates": {c: render(t) for c, t in zip(self.output_components, self.templates)},
            "leaves": {c: t.size for c, t in zip(self.output_components, self.templates)},
            "description": self.description,
        }


def _slot_doc(s: Slot) -> dict:
    return {"name": s.name, "encoding": s.encoding.value, "significance": s.significance,
            "components": list(s.component_names)}


def _block(name, basis, inputs, outputs, templates, description="", is_csa=True) -> BlockSpec:
    spec = BlockSpec(name, basis, tuple(inputs), tuple(outputs), tuple(templates),
                     description=description, is_csa=is_csa)
    for t in spec.templates:
        ok, diag = validate_basis(t, basis)
        if not ok:
            raise ValueError(f"{name}: template not valid in {basis.value}: {diag}")
    return spec


class Netlist:
    """Incremental builder for composite blocks."""

    def __init__(self, name: str, basis: Basis, inputs: Sequence[Slot]):
        self.name = name
        self.basis = basis
        self.inputs = tuple(inputs)
        comps = [c for s in self.inputs for c in s.component_names]
        self._index = {c: i for i, c in enumerate(comps)}
        self.formulas: list[Formula] = [Var(i) for i in range(len(comps))]
        self.parts: list[Part] = []

    def __getitem__(self, component: str) -> int:
        return self._index[component]

    def formula(self, sig: int) -> Formula:
        if sig == -1:
            return ZERO
        if sig == -2:
            return ONE
        return self.formulas[sig]

    def add(self, block: BlockSpec, wires: Sequence[int | str]) -> list[int]:
        wires = tuple(self[w] if isinstance(w, str) else w for w in wires)
        if len(wires) != len(block.input_components):
            raise ValueError(f"{block.name} takes {len(block.input_components)} inputs, got {len(wires)}")
        args = [self.formula(w) for w in wires]
        first = len(self.formulas)
        for t in block.templates:
            self.formulas.append(instantiate(t, args, self.basis))
        self.parts.append(Part(block, wires))
        return list(range(first, len(self.formulas)))

    def finish(self, outputs: Sequence[Slot], wires: Sequence[int], description: str = "",
               is_csa: bool = True) -> BlockSpec:
        wires = tuple(wires)
        spec = BlockSpec(
            self.name, self.basis, self.inputs, tuple(outputs),
            tuple(self.formula(w) for w in wires), tuple(self.parts), wires,
            is_csa, description,
        )
        if len(wires) != len(spec.output_components):
            raise ValueError(f"{self.name}: wiring gives {len(wires)} outputs for {len(spec.output_components)}")
        return spec


# --------------------------------------------------------------- primitives

def _v(*idx):
    return [Var(i) for i in idx]


def _fa3_b2() -> BlockSpec:
    x, y, z = _v(0, 1, 2)
    return _block("FA3", Basis.B2, [std("x"), std("y"), std("z")], [std("s"), std("c", 1)],
                  [(x ^ y) ^ z, (x & y) | ((x ^ y) & z)], "standard (3,2)-CSA")


def _fa3_b0() -> BlockSpec:
    x, y, z = _v(0, 1, 2)
    return _block("FA3_B0", Basis.B0, [std("x"), std("y"), std("z")], [std("s"), std("c", 1)],
                  [xor_b0(xor_b0(x, y), z), (x & y) | ((x | y) & z)], "standard (3,2)-CSA over B0")


def _ha(basis: Basis) -> BlockSpec:
    x, y = _v(0, 1)
    s = x ^ y if basis is Basis.B2 else xor_b0(x, y)
    name = "HA" if basis is Basis.B2 else "HA_B0"
    return _block(name, basis, [std("x"), std("y")], [std("s"), std("c", 1)], [s, x & y], "half adder")


def _mdfa() -> BlockSpec:
    x, v1, p1, v2, p2 = _v(0, 1, 2, 3, 4)
    xv = x ^ v1
    c = (x ^ p1) ^ p2
    b = (xv & p1) ^ v1
    ab = (xv | p1) ^ (((x ^ p1) ^ v2) & ~p2)
    return _block(
        "MDFA", Basis.B2,
        [std("x"), Slot("P1", Encoding.XOR_PAIR), Slot("P2", Encoding.XOR_PAIR)],
        [std("c"), Slot("AB", Encoding.XOR_PAIR, 1)],
        [c, b, ab], "2(a+b)+c = x+u1+v1+u2+v2 with (u xor v, v) pairs",
    )


def _xp_enc() -> BlockSpec:
    u, v = _v(0, 1)
    return _block("XP_ENC", Basis.B2, [std("u"), std("v")], [Slot("P", Encoding.XOR_PAIR)],
                  [v, u ^ v], "pair (u, v) -> (v, u xor v)")


def _xp_dec() -> BlockSpec:
    v, x = _v(0, 1)
    return _block("XP_DEC", Basis.B2, [Slot("P", Encoding.XOR_PAIR)], [std("lo"), std("hi", 1)],
                  [x, v & ~x], "u+v = (u xor v) + 2uv with uv = v and not(u xor v)")


def _fa3p() -> BlockSpec:
    y, v, x = _v(0, 1, 2)
    return _block("FA3P", Basis.B2, [std("y"), Slot("P", Encoding.XOR_PAIR)], [std("s"), std("c", 1)],
                  [y ^ x, ((y ^ v) & x) ^ v], "full adder on a standard bit and an (a xor b, b) pair")


def _mp_enc() -> BlockSpec:
    u, v = _v(0, 1)
    return _block("MP_ENC", Basis.B0, [std("u"), std("v")], [Slot("U", Encoding.MON_PAIR)],
                  [u & v, u | v], "pair (u, v) -> (uv, u or v)")


def _mp_dec() -> BlockSpec:
    a, o = _v(0, 1)
    return _block("MP_DEC", Basis.B0, [Slot("U", Encoding.MON_PAIR)], [std("a"), std("o")], [a, o],
                  "uv + (u or v) = u + v")


def triple_encoder_templates() -> list[Formula]:
    u, v, w = _v(0, 1, 2)
    return [(u | v) | w, ((u | v) & w) | (u & v), (u & v) & w, xor_b0(xor_b0(u, v), w)]


def _st_enc() -> BlockSpec:
    return _block("ST_ENC", Basis.B0, [std("u"), std("v"), std("w")], [Slot("S", Encoding.SORT_TRIPLE)],
                  triple_encoder_templates(), "triple -> (or, median, and, parity)")


def _st_dec() -> BlockSpec:
    s1, s2, s3, sx = _v(0, 1, 2, 3)
    return _block("ST_DEC", Basis.B0, [Slot("S", Encoding.SORT_TRIPLE)], [std("lo"), std("hi", 1)],
                  [sx, s2], "median and parity are the binary digits of the triple's sum")


def _sfa5() -> BlockSpec:
    x1, m1, o1, m2, o2 = _v(0, 1, 2, 3, 4)
    nx1, nm1, no1, nm2 = (negate(t) for t in (x1, m1, o1, m2))
    psi = (x1 & (m1 | no1)) | ((nx1 & nm1) & o1)
    chi = nm2 & o2
    c = (psi & negate(chi)) | (negate(psi) & chi)
    ab = (((x1 & o1) | m1) & m2) | ((x1 & m1) & o2)
    # the dual formula computes T_5^2 once the pair components swap roles
    a_or_b = rename(dualize_monotone(ab), {1: 2, 2: 1, 3: 4, 4: 3})
    return _block(
        "SFA5", Basis.B0,
        [std("x1"), Slot("U1", Encoding.MON_PAIR), Slot("U2", Encoding.MON_PAIR)],
        [std("c"), Slot("A", Encoding.MON_PAIR, 1)],
        [c, ab, a_or_b], "sorting full adder on monotone pairs",
    )


def t4_triple_templates(y: Formula, s1: Formula, s2: Formula, s3: Formula) -> list[Formula]:
    """T_4^1..T_4^4 of (y, u, v, w) given the sorted code (s1, s2, s3) of (u, v, w)."""
    t1 = y | s1
    t2 = (y & s1) | s2
    t3 = (y | s3) & s2
    t4 = y & s3
    return [t1, t2, t3, t4]


def t4_std_templates(y1: Formula, y2: Formula, y3: Formula, y4: Formula) -> list[Formula]:
    t1 = (y1 | y2) | (y3 | y4)
    t2 = ((y1 | y2) & (y3 | y4)) | ((y1 & y2) | (y3 & y4))
    t3 = dualize_monotone(t2)
    t4 = dualize_monotone(t1)
    return [t1, t2, t3, t4]


def _sorted_outputs(t: Sequence[Formula], s1: Formula, s2: Formula, s3: Formula,
                    swap: Mapping[int, int]) -> list[Formula]:
    """(q', q'', q''', q_xor) from T_4^1..4 of one group and the sorted code of a triple."""
    t1, t2, t3, t4 = t
    q1 = ((t1 & s1) | t2) | s2
    q2 = ((t1 & s3) | (t2 & s2)) | ((t3 & s1) | t4)
    q3 = rename(dualize_monotone(q1), dict(swap))
    n = negate
    qx = (((n(s1) & t2) & n(t4)) | (((s1 & n(s2)) & t1) & n(t3))) | (
        ((s2 & n(s3)) & (t4 | n(t2))) | (s3 & (t3 | n(t1)))
    )
    return [q1, q2, q3, qx]


def _sfa7() -> BlockSpec:
    x1 = Var(0)
    a1, a2, a3, ax = _v(1, 2, 3, 4)
    b1, b2, b3, bx = _v(5, 6, 7, 8)
    nx1, nax = negate(x1), negate(ax)
    psi = (x1 & nax) | (nx1 & ax)
    c1 = (bx & negate(psi)) | (negate(bx) & psi)
    t = t4_triple_templates(x1, a1, a2, a3)
    q = _sorted_outputs(t, b1, b2, b3, {1: 3, 3: 1, 5: 7, 7: 5})
    return _block(
        "SFA7", Basis.B0,
        [std("x1"), Slot("S1", Encoding.SORT_TRIPLE), Slot("S2", Encoding.SORT_TRIPLE)],
        [std("c1"), Slot("Q", Encoding.SORT_TRIPLE, 1)],
        [c1, *q], "(7,4)-CSA on sorted triples",
    )


def _sfa7p() -> BlockSpec:
    x2, x3, x4, x5 = _v(0, 1, 2, 3)
    s1, s2, s3, sx = _v(4, 5, 6, 7)
    n = negate
    psi = ((x2 & n(x3)) | (n(x2) & x3)) & ((x4 & x5) | (n(x4) & n(x5))) | (
        ((x2 & x3) | (n(x2) & n(x3))) & ((x4 & n(x5)) | (n(x4) & x5))
    )
    c2 = (psi & n(sx)) | (n(psi) & sx)
    t = t4_std_templates(x2, x3, x4, x5)
    q = _sorted_outputs(t, s1, s2, s3, {4: 6, 6: 4})
    return _block(
        "SFA7P", Basis.B0,
        [std("x2"), std("x3"), std("x4"), std("x5"), Slot("S3", Encoding.SORT_TRIPLE)],
        [std("c2"), Slot("Q", Encoding.SORT_TRIPLE, 1)],
        [c2, *q], "(7,4)-CSA with four standard bits and one sorted triple",
    )


def _csa73e() -> BlockSpec:
    q1, q2, q3, qx = _v(0, 1, 2, 3)
    aa, ao, ba, bo = _v(4, 5, 6, 7)
    n = negate
    chi_a = n(aa) & ao
    chi_b = n(ba) & bo
    parity = xor_b0(qx, xor_b0(chi_a, chi_b))
    # thresholds of the four pair bits
    p1 = ao | bo
    p2 = (aa | ba) | (ao & bo)
    p3 = (aa & bo) | (ao & ba)
    p4 = aa & ba
    t2 = (q2 | (q1 & p1)) | p2
    t4 = ((q1 & p3) | (q2 & p2)) | ((q3 & p1) | p4)
    t6 = (q3 & p3) | (q2 & p4)
    mid = (t2 & n(t4)) | t6
    return _block(
        "CSA73E", Basis.B0,
        [Slot("Q", Encoding.SORT_TRIPLE), Slot("A", Encoding.MON_PAIR), Slot("B", Encoding.MON_PAIR)],
        [std("p"), std("m", 1), std("h", 2)],
        [parity, mid, t4],
        "(7,3)-CSA on a sorted triple and two monotone pairs (reconstruction)",
    )


def _parity7_b0() -> BlockSpec:
    x1, a, b, c, d, e, f = _v(*range(7))
    out = xor_b0(xor_b0(x1, xor_b0(a, b)), xor_b0(xor_b0(c, d), xor_b0(e, f)))
    return _block("PAR7", Basis.B0, [std(n) for n in ("x1", "a", "b", "c", "d", "e", "f")],
                  [std("p")], [out], "parity of 7 bits, depth-balanced", is_csa=False)


# --------------------------------------------------------------- composites


def _fig2(lib) -> BlockSpec:
    net = Netlist("FIG2", Basis.B2, [std("x1"), std("x2"), std("x3"), std("x4"),
                                      Slot("P1", Encoding.XOR_PAIR), Slot("P2", Encoding.XOR_PAIR),
                                      Slot("P3", Encoding.XOR_PAIR)])
    # x3 plays v1 (it is the cheaper input): pair (x2, x3) -> (x3, x2 xor x3)
    enc = net.add(lib["XP_ENC"], ["x2", "x3"])
    m1 = net.add(lib["MDFA"], ["x1", enc[0], enc[1], "P1.v", "P1.x"])
    m2 = net.add(lib["MDFA"], ["x4", "P2.v", "P2.x", "P3.v", "P3.x"])
    return net.finish(
        [std("c1"), std("c2"), Slot("A1", Encoding.XOR_PAIR, 1), Slot("A2", Encoding.XOR_PAIR, 1)],
        [m1[0], m2[0], m1[1], m1[2], m2[1], m2[2]],
        "two isolated MDFAs; the first gets x2 xor x3 from a pre-gate",
    )


def _fig3(lib) -> BlockSpec:
    net = Netlist("FIG3", Basis.B0, [std("x1"), std("x2"), std("x3"),
                                      Slot("U1", Encoding.MON_PAIR), Slot("U2", Encoding.MON_PAIR)])
    s = net.add(lib["SFA5"], ["x1", "U1.and", "U1.or", "U2.and", "U2.or"])
    p = net.add(lib["MP_ENC"], ["x2", "x3"])
    return net.finish(
        [std("c"), Slot("A1", Encoding.MON_PAIR, 1), Slot("A2", Encoding.MON_PAIR)],
        [s[0], s[1], s[2], p[0], p[1]],
        "SFA5 plus an and/or gate pair",
    )


def _fig4(lib) -> BlockSpec:
    triples = [Slot(f"S{i}", Encoding.SORT_TRIPLE) for i in (1, 2, 3)]
    net = Netlist("FIG4", Basis.B0, [std(f"x{i}") for i in range(1, 6)] + triples)
    a = net.add(lib["SFA7"], ["x1"] + [f"S1.{c}" for c in ("s1", "s2", "s3", "sx")]
                + [f"S2.{c}" for c in ("s1", "s2", "s3", "sx")])
    b = net.add(lib["SFA7P"], ["x2", "x3", "x4", "x5"] + [f"S3.{c}" for c in ("s1", "s2", "s3", "sx")])
    return net.finish(
        [std("c1"), std("c2"), Slot("Q1", Encoding.SORT_TRIPLE, 1), Slot("Q2", Encoding.SORT_TRIPLE, 1)],
        [a[0], b[0], *a[1:], *b[1:]],
        "SFA7 and SFA7' side by side",
    )


def _csa73(lib) -> BlockSpec:
    net = Netlist("CSA73", Basis.B0, [std(f"x{i}") for i in range(1, 8)])
    t = net.add(lib["ST_ENC"], ["x1", "x2", "x3"])
    a = net.add(lib["MP_ENC"], ["x4", "x5"])
    b = net.add(lib["MP_ENC"], ["x6", "x7"])
    out = net.add(lib["CSA73E"], [*t, *a, *b])
    return net.finish([std("p"), std("m", 1), std("h", 2)], out, "(7,3)-CSA on standard inputs")


def compose_chain(m: int) -> BlockSpec:
    """``m`` MDFAs in a chain closed by a full adder on the last pair.

    Stage ``k`` (significance ``k``) takes fresh bits x, u1, v1; the first
    stage also takes (u2, v2).  Inputs are listed highest significance first.
    """
    if m < 1:
        raise ValueError("chain length must be at least 1")
    lib = _primitives()
    inputs = [std("y", m)]
    for k in range(m - 1, 0, -1):
        inputs += [std(f"x_{k}", k), std(f"u_{k}", k), std(f"v_{k}", k)]
    inputs += [std("u2_0"), std("v2_0"), std("x_0"), std("u_0"), std("v_0")]
    net = Netlist(f"CHAIN{m}", Basis.B2, inputs)
    e = net.add(lib["XP_ENC"], ["u2_0", "v2_0"])
    pair = e
    outs = []
    for k in range(m):
        p1 = net.add(lib["XP_ENC"], [f"u_{k}", f"v_{k}"])
        c, bv, bx = net.add(lib["MDFA"], [f"x_{k}", p1[0], p1[1], pair[0], pair[1]])
        outs.append(c)
        pair = [bv, bx]
    s, carry = net.add(lib["FA3P"], ["y", pair[0], pair[1]])
    outs += [s, carry]
    return net.finish([std(f"o{k}", k) for k in range(m + 2)], outs,
                      f"chain of {m} MDFAs with a closing full adder")


def compose_17_6() -> BlockSpec:
    """(17,6)-CSA over B0: SFA7 and two SFA5 at the bottom, a (7,3)-CSA on top.

    The low sum bit of the SFA7 group is produced by a depth-balanced parity
    of its seven inputs rather than through the triple parities.
    """
    lib = _primitives()
    g7 = ["x1", "a1", "b1", "c1", "a2", "b2", "c2"]
    g5 = [[f"y{j}", f"u2_{j}", f"v2_{j}", f"u1_{j}", f"v1_{j}"] for j in (1, 2)]
    net = Netlist("CSA17", Basis.B0, [std(n) for n in g7 + g5[0] + g5[1]])
    t1 = net.add(lib["ST_ENC"], ["a1", "b1", "c1"])
    t2 = net.add(lib["ST_ENC"], ["a2", "b2", "c2"])
    sfa7 = net.add(lib["SFA7"], ["x1", *t1, *t2])
    (par,) = net.add(_parity7_b0(), g7)
    lows, pairs = [par], []
    for y, u2, v2, u1, v1 in g5:
        p1 = net.add(lib["MP_ENC"], [u1, v1])
        p2 = net.add(lib["MP_ENC"], [u2, v2])
        c, a_and, a_or = net.add(lib["SFA5"], [y, *p1, *p2])
        lows.append(c)
        pairs += [a_and, a_or]
    top = net.add(lib["CSA73E"], [*sfa7[1:], *pairs])
    return net.finish([std("c0"), std("c1"), std("c2"), std("p", 1), std("m", 2), std("h", 3)],
                      [*lows, *top], "(17,6)-CSA with standard encoding")


@lru_cache(maxsize=None)
def _primitives() -> dict[str, BlockSpec]:
    blocks = [_fa3_b2(), _fa3_b0(), _ha(Basis.B2), _ha(Basis.B0), _mdfa(), _xp_enc(), _xp_dec(), _fa3p(),
              _mp_enc(), _mp_dec(), _st_enc(), _st_dec(), _sfa5(), _sfa7(), _sfa7p(), _csa73e()]
    return {b.name: b for b in blocks}


@lru_cache(maxsize=None)
def block_library() -> dict[str, BlockSpec]:
    lib = dict(_primitives())
    for make in (_fig2, _fig3, _fig4, _csa73):
        b = make(lib)
        lib[b.name] = b
    for m in (1, 2, 3, 4):
        b = compose_chain(m)
        lib[b.name] = b
    b = compose_17_6()
    lib[b.name] = b
    return lib


# ------------------------------------------------------------- thresholds


def threshold_formula(n: int, k: int, basis: Basis = Basis.B0) -> Formula:
    """Monotone formula for T_n^k (at least k of n inputs), valid in both bases."""
    if not 1 <= n <= 7:
        raise ValueError(f"threshold formulas are provided for 1 <= n <= 7, got {n}")
    if not 0 <= k <= n + 1:
        raise ValueError(f"threshold {k} out of range for n={n}")
    if k == 0:
        return ONE
    if k == n + 1:
        return ZERO
    xs = [Var(i) for i in range(n)]
    if n == 5 and k in (2, 4):
        x1, u1, v1, u2, v2 = xs
        t54 = (((x1 & (u1 | v1)) | (u1 & v1)) & (u2 & v2)) | ((x1 & (u1 & v1)) & (u2 | v2))
        return t54 if k == 4 else dualize_monotone(t54)
    if n == 4:
        return t4_std_templates(*xs)[k - 1]
    if n == 3:
        return triple_encoder_templates()[k - 1]
    return _threshold_split(xs, k)


def _threshold_split(xs: list[Formula], k: int) -> Formula:
    if k <= 0:
        return ONE
    if k > len(xs):
        return ZERO
    if len(xs) == 1:
        return xs[0]
    if k == 1:
        return or_all(xs)
    if k == len(xs):
        return and_all(xs)
    h = len(xs) // 2
    left, right = xs[:h], xs[h:]
    terms = []
    for i in range(max(0, k - len(right)), min(k, len(left)) + 1):
        a, b = _threshold_split(left, i), _threshold_split(right, k - i)
        if a is ONE:
            terms.append(b)
        elif b is ONE:
            terms.append(a)
        else:
            terms.append(a & b)
    return or_all(terms)


# ------------------------------------------------------------ verification


@dataclass
class VerificationReport:
    block: str
    assignments: int
    passed: bool
    failure_count: int = 0
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"block": self.block, "assignments": self.assignments, "passed": self.passed,
                "failure_count": self.failure_count, "failures": self.failures}


def _unpack(value: int, width: int) -> np.ndarray:
    nbytes = max(1, (width + 7) // 8)
    raw = np.frombuffer(value.to_bytes(nbytes, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:width].astype(bool)


def verify_block(b: BlockSpec, max_failures: int = 16) -> VerificationReport:
    """Exhaustively check the weighted-sum identity over all decoded inputs.

    Every decoded input bit is enumerated, encoded into code words, pushed
    through the templates and decoded again; output code words must be valid
    and the weighted sums must agree.
    """
    nbits = b.decoded_inputs
    if nbits > MAX_VERIFY_BITS:
        raise ResourceLimitError(f"{b.name}: {nbits} decoded inputs exceeds {MAX_VERIFY_BITS}")
    cols, ones = variable_columns(nbits)
    width = 1 << nbits
    comps: list[int] = []
    pos = 0
    in_sum = np.zeros(width, dtype=np.int64)
    idx = np.arange(width, dtype=np.int64)
    for s in b.inputs:
        bits = cols[pos:pos + s.encoding.arity]
        comps += s.encoding.encode(bits, ones)
        for j in range(s.encoding.arity):
            in_sum += ((idx >> (pos + j)) & 1) << s.significance
        pos += s.encoding.arity
    values = [_unpack(v, width) for v in evaluate_many(b.templates, comps, ones)]
    out_sum = np.zeros(width, dtype=np.int64)
    ok = np.ones(width, dtype=bool)
    reasons = np.zeros(width, dtype=np.int8)
    pos = 0
    for s in b.outputs:
        k = len(s.encoding.components)
        vs = values[pos:pos + k]
        valid = s.encoding.valid(vs)
        reasons[~valid & ok] = 1
        ok &= valid
        out_sum += s.encoding.decode_sum(vs) << s.significance
        pos += k
    if b.is_csa:
        bad = out_sum != in_sum
        reasons[bad & ok] = 2
        ok &= ~bad
    failures = []
    for a in np.flatnonzero(~ok)[:max_failures]:
        a = int(a)
        failures.append({
            "assignment": format(a, f"0{nbits}b")[::-1] if nbits else "",
            "reason": "invalid output codeword" if reasons[a] == 1 else "weighted sum mismatch",
            "input_sum": int(in_sum[a]),
            "output_sum": int(out_sum[a]),
        })
    nfail = int((~ok).sum())
    return VerificationReport(b.name, width, nfail == 0, nfail, failures)


# ------------------------------------------------------------- instantiation


def instantiate_block(b: BlockSpec, inputs: Mapping[str, Formula], fold: bool = False) -> dict[str, Formula]:
    """Output formulas of ``b`` with its input components replaced by ``inputs``.

    ``inputs`` is keyed by input component name (``"x1"``, ``"P1.v"``, ...).
    """
    args = []
    for c in b.input_components:
        if c not in inputs:
            raise KeyError(f"{b.name}: missing input component {c!r}")
        f = inputs[c]
        ok, diag = validate_basis(f, b.basis)
        if not ok:
            raise ValueError(f"{b.name}: input {c!r} not valid in {b.basis.value}: {diag[:3]}")
        args.append(f)
    return {c: instantiate(t, args, b.basis, fold=fold)
            for c, t in zip(b.output_components, b.templates)}


# ------------------------------------------------------------- leaf matrices


@dataclass(frozen=True)
class LeafMatrix:
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    entries: tuple[tuple[int, ...], ...]

    def array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int64).reshape(len(self.rows), len(self.cols))

    def row(self, name: str) -> tuple[int, ...]:
        return self.entries[self.rows.index(name)]

    def to_dict(self) -> dict:
        return {"rows": list(self.rows), "cols": list(self.cols), "entries": [list(r) for r in self.entries]}


def template_matrix(b: BlockSpec) -> LeafMatrix:
    """Leaf profiles of the (expanded) templates."""
    n = len(b.input_components)
    entries = tuple(leaf_profile(t, n).counts for t in b.templates)
    return LeafMatrix(b.output_components, b.input_components, entries)


def leaf_matrix(b: BlockSpec) -> LeafMatrix:
    """Leaf occurrence matrix; composites compose member profiles along the wiring."""
    if not b.is_composite:
        return template_matrix(b)
    n = len(b.input_components)
    sig: list[np.ndarray] = [np.eye(n, dtype=np.int64)[i] for i in range(n)]
    zero = np.zeros(n, dtype=np.int64)

    def prof(w: int) -> np.ndarray:
        return zero if w < 0 else sig[w]

    for part in b.parts:
        m = leaf_matrix(part.block).array()
        srcs = np.stack([prof(w) for w in part.wires]) if part.wires else np.zeros((0, n), dtype=np.int64)
        for row in m:
            sig.append(row @ srcs)
    entries = tuple(tuple(int(x) for x in prof(w)) for w in b.output_wires)
    return LeafMatrix(b.output_components, b.input_components, entries)


# Reference matrices, verbatim (rows: outputs by increasing significance;
# columns: inputs, highest significance first).
REF_MATRIX_15x6 = (
    (0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1),
    (0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 3),
    (0, 0, 0, 0, 1, 1, 1, 2, 2, 3, 1, 2, 3, 3, 6),
    (0, 1, 1, 1, 2, 2, 3, 3, 3, 6, 1, 2, 3, 3, 6),
    (1, 2, 2, 3, 3, 3, 6, 3, 3, 6, 1, 2, 3, 3, 6),
    (1, 4, 4, 9, 3, 3, 6, 3, 3, 6, 1, 2, 3, 3, 6),
)
REF_SIGS_15x6 = ((4, 3, 3, 3, 2, 2, 2, 1, 1, 1, 0, 0, 0, 0, 0), (0, 1, 2, 3, 4, 5))

REF_MATRIX_17x6 = (
    (4, 8, 8, 8, 8, 8, 8, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0),
    (0, 0, 0, 0, 0, 0, 0, 4, 4, 4, 8, 8, 0, 0, 0, 0, 0),
    (0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 4, 4, 4, 8, 8),
    (12, 16, 16, 24, 24, 24, 24, 16, 16, 16, 24, 24, 16, 16, 16, 24, 24),
    (14, 20, 20, 24, 24, 24, 24, 24, 24, 24, 36, 36, 24, 24, 24, 36, 36),
    (7, 10, 10, 12, 12, 12, 12, 12, 12, 12, 18, 18, 12, 12, 12, 18, 18),
)
REF_SIGS_17x6 = ((0,) * 17, (0, 0, 0, 1, 2, 3))


def compare_with_reference(measured: LeafMatrix, reference: Sequence[Sequence[int]]) -> list[dict]:
    """Row-by-row comparison; ``same_multiset`` flags rows that differ only by
    a column permutation."""
    out = []
    for name, mine, ref in zip(measured.rows, measured.entries, reference):
        out.append({"row": name, "measured": list(mine), "reference": list(ref),
                    "exact": tuple(mine) == tuple(ref),
                    "same_multiset": sorted(mine) == sorted(ref)})
    return out
