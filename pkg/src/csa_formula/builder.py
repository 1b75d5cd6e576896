"""Counting-function and symmetric-function formulas from CSA blocks.

The scheduler keeps a pool of code words per (encoding, significance) and
repeatedly feeds the lowest overfull significance through a composite CSA,
smallest formulas into the slots the composite can afford to copy most.
When every significance holds at most T bits, the rest is summed by a
schoolbook ripple adder.
"""

from __future__ import annotations

import bisect
import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np

from .blocks import BlockSpec, Encoding, block_library, leaf_matrix
from .formula import (
    ONE,
    ZERO,
    Basis,
    Const,
    Formula,
    Var,
    evaluate_many,
    instantiate_many,
    mk_gate,
    negate,
    AND,
    OR,
)

MAX_N = 1 << 20

# slot weights from the reference parameter sets; they rank which slots
# should receive the small formulas
_REF_WEIGHTS = {
    "FIG2": ({"x1": 1.0, "x2": 1.0, "x3": 0.5149081, "x4": 1.9198088,
              "P1": 1.2176395, "P2": 1.0031176, "P3": 2.3573055}, 2.906),
    "FIG3": ({"x1": 1.0, "x2": 0.031702, "x3": 0.031702, "U1": 1.018913, "U2": 2.0}, 1.0),
    "FIG4": ({"x1": 1.0, "x2": 0.3569540333, "x3": 0.3569540333, "x4": 0.3569540333, "x5": 0.3569540333,
              "S1": 1.1282983248, "S2": 2.424317629, "S3": 1.6884745179}, 1.6782),
}

CSA_CHOICES = {"fig2": "FIG2", "fig3": "FIG3", "fig4": "FIG4", "chain4": "CHAIN4", "csa17": "CSA17"}


@dataclass
class BuildOptions:
    basis: Basis = Basis.B2
    csa: str | None = None  # key of CSA_CHOICES; default by basis
    threshold: int = 3
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.basis, str):
            self.basis = Basis(self.basis)
        if self.threshold < 3:
            raise ValueError("stop threshold must be at least 3")
        if self.csa is None:
            self.csa = "fig2" if self.basis is Basis.B2 else "fig4"
        if self.csa not in CSA_CHOICES:
            raise ValueError(f"unknown csa {self.csa!r}; choose from {sorted(CSA_CHOICES)}")

    @property
    def block(self) -> BlockSpec:
        b = block_library()[CSA_CHOICES[self.csa]]
        if self.basis is Basis.B0 and b.basis is Basis.B2:
            raise ValueError(f"{b.name} uses XOR gates and cannot build over b0")
        return b

    def to_dict(self) -> dict:
        return {"basis": self.basis.value, "csa": self.csa, "threshold": self.threshold, "seed": self.seed}


def slot_weights(b: BlockSpec) -> tuple[dict[str, float], float]:
    """Per-slot weights and alpha used to rank slots and items.

    Composites without a reference parameter set rank slots by how often
    their leaves are copied into the outputs (more copies, smaller weight).
    """
    if b.name in _REF_WEIGHTS:
        return _REF_WEIGHTS[b.name]
    lm = leaf_matrix(b).array()
    copies = lm.sum(axis=0)
    return {c: 1.0 / max(1, int(k)) for c, k in zip(b.input_components, copies)}, 1.0


# ------------------------------------------------------------------- pool


@dataclass(order=True)
class _Item:
    key: float
    order: int
    comps: tuple = field(compare=False)


class Pool:
    """Code words bucketed by (encoding, significance), smallest first."""

    def __init__(self, alpha: float):
        self.alpha = alpha
        self.buckets: dict[tuple[Encoding, int], list[_Item]] = {}
        self._counter = itertools.count()

    def weighted_size(self, enc: Encoding, comps) -> float:
        sizes = [c.size for c in comps]
        if enc is Encoding.STD:
            return float(sizes[0])
        if enc is Encoding.XOR_PAIR:
            return max(sizes[0], sizes[1] / self.alpha)
        if enc is Encoding.MON_PAIR:
            return float(max(sizes))
        return max(sizes[0], sizes[2], sizes[1] / self.alpha)

    def make(self, enc: Encoding, comps) -> _Item:
        comps = tuple(comps)
        return _Item(self.weighted_size(enc, comps), next(self._counter), comps)

    def add(self, enc: Encoding, sig: int, comps) -> None:
        if all(isinstance(c, Const) and c.value == 0 for c in comps):
            return
        bisect.insort(self.buckets.setdefault((enc, sig), []), self.make(enc, comps))

    def peek(self, enc: Encoding, sig: int) -> list[_Item]:
        return self.buckets.get((enc, sig), [])

    def remove(self, enc: Encoding, sig: int, items) -> None:
        drop = {id(i) for i in items}
        b = self.buckets[(enc, sig)]
        b[:] = [i for i in b if id(i) not in drop]

    def count(self, enc: Encoding, sig: int) -> int:
        return len(self.buckets.get((enc, sig), ()))

    def take(self, enc: Encoding, sig: int, k: int) -> list[tuple]:
        b = self.buckets.get((enc, sig), [])
        out, b[:k] = b[:k], []
        return [i.comps for i in out]

    def bits(self, sig: int) -> int:
        return sum(len(v) * e.arity for (e, s), v in self.buckets.items() if s == sig)

    def sigs(self) -> list[int]:
        return sorted({s for (e, s), v in self.buckets.items() if v})


# -------------------------------------------------------------- scheduler

# items sharing one application may differ in scale (size / slot weight) by
# at most this factor; widened only when too little material qualifies
LEVEL_RATIO = 4.0


class _Scheduler:
    def __init__(self, n: int, opts: BuildOptions):
        self.opts = opts
        self.basis = opts.basis
        lib = block_library()
        self.block = opts.block
        self.weights, alpha = slot_weights(self.block)
        self.pool = Pool(alpha)
        b0 = self.basis is Basis.B0
        self.fa3 = lib["FA3_B0" if b0 else "FA3"]
        self.ha = lib["HA_B0" if b0 else "HA"]
        self.encoders = {Encoding.XOR_PAIR: lib["XP_ENC"], Encoding.MON_PAIR: lib["MP_ENC"],
                         Encoding.SORT_TRIPLE: lib["ST_ENC"]}
        self.decoders = {Encoding.XOR_PAIR: lib["XP_DEC"], Encoding.MON_PAIR: lib["MP_DEC"],
                         Encoding.SORT_TRIPLE: lib["ST_DEC"]}
        self.applications: dict[str, int] = {}
        for i in range(n):
            self.pool.add(Encoding.STD, 0, (Var(i),))
        # slots grouped by (encoding, relative significance), lightest first
        groups: dict[tuple[Encoding, int], list] = {}
        for s in self.block.inputs:
            groups.setdefault((s.encoding, s.significance), []).append(s)
        self.groups = {k: sorted(v, key=lambda s: (self.weights.get(s.name, 1.0), s.name))
                       for k, v in groups.items()}
        self.capacity0 = sum(s.encoding.arity for s in self.block.inputs if s.significance == 0)

    def _w(self, slot) -> float:
        return self.weights.get(slot.name, 1.0)

    def _apply(self, b: BlockSpec, sig: int, args: dict[str, tuple]) -> None:
        flat = []
        for s in b.inputs:
            comps = args.get(s.name)
            if comps is None:
                comps = (ZERO,) * len(s.encoding.components)
            flat.extend(comps)
        outs = instantiate_many(b.templates, flat, self.basis, fold=True)
        pos = 0
        for s in b.outputs:
            k = len(s.encoding.components)
            self.pool.add(s.encoding, sig + s.significance, outs[pos:pos + k])
            pos += k
        self.applications[b.name] = self.applications.get(b.name, 0) + 1

    def _encode(self, enc: Encoding, stds: list[_Item]) -> _Item:
        # the cheaper formula takes the more heavily copied position
        fs = sorted((i.comps[0] for i in stds), key=lambda f: f.size, reverse=True)
        return self.pool.make(enc, instantiate_many(self.encoders[enc].templates, fs, self.basis, fold=True))

    def _fit(self, slots, items: list[_Item], limit: float) -> list[tuple]:
        """Match ascending items to the heaviest slots they fit (scale <= limit)."""
        items = [i for i in items if i.key <= limit * self._w(slots[-1])][:len(slots)]
        while items:
            chosen = list(zip(slots[len(slots) - len(items):], items))
            if all(i.key <= limit * self._w(s) for s, i in chosen):
                return chosen
            items.pop()
        return []

    def _plan(self, sig: int, ratio: float):
        pool = self.pool
        heads = []
        for (enc, rel), slots in self.groups.items():
            b = pool.peek(enc, sig + rel)
            if b and rel == 0:
                heads.append(b[0].key / self._w(slots[-1]))
        if not heads:
            return None
        limit = ratio * min(heads)
        plan: list[tuple] = []  # (slot, item, source encoding, source sig, consumed std items)
        used_std: set[int] = set()
        for (enc, rel), slots in self.groups.items():
            if enc is Encoding.STD:
                continue
            for slot, item in self._fit(slots, pool.peek(enc, sig + rel), limit):
                plan.append((slot, item, enc, sig + rel, ()))
        for (enc, rel), slots in self.groups.items():
            if enc is not Encoding.STD:
                continue
            for slot, item in self._fit(slots, pool.peek(enc, sig + rel), limit):
                plan.append((slot, item, enc, sig + rel, ()))
                if rel == 0:
                    used_std.add(id(item))
        # leftover standard bits are encoded into still-empty coded slots
        filled = {p[0].name for p in plan}
        spare = [i for i in pool.peek(Encoding.STD, sig) if id(i) not in used_std]
        for (enc, rel), slots in self.groups.items():
            if enc is Encoding.STD or rel != 0:
                continue
            for slot in reversed(slots):
                if slot.name in filled or len(spare) < enc.arity:
                    continue
                group, spare = spare[:enc.arity], spare[enc.arity:]
                item = self._encode(enc, group)
                if item.key <= limit * self._w(slot):
                    plan.append((slot, item, None, sig, tuple(group)))
                    filled.add(slot.name)
                else:
                    spare = group + spare
                    break
        material = sum(p[0].encoding.arity for p in plan if p[0].significance == 0)
        return plan, material

    def _try_composite(self, sig: int) -> bool:
        ratio = LEVEL_RATIO
        while ratio < 1e300:
            got = self._plan(sig, ratio)
            if got is None:
                return False
            plan, material = got
            if 2 * material >= self.capacity0:
                break
            ratio *= 4
        else:
            return False
        args = {}
        for slot, item, enc, src_sig, consumed in plan:
            if enc is not None:
                self.pool.remove(enc, src_sig, [item])
            else:
                self.pool.remove(Encoding.STD, src_sig, consumed)
            args[slot.name] = item.comps
        self._apply(self.block, sig, args)
        return True

    def _reduce(self, sig: int) -> None:
        pool = self.pool
        if pool.count(Encoding.STD, sig) >= 3:
            items = pool.take(Encoding.STD, sig, 3)
            self._apply(self.fa3, sig, dict(zip(("x", "y", "z"), items)))
            return
        for enc in (Encoding.XOR_PAIR, Encoding.MON_PAIR, Encoding.SORT_TRIPLE):
            if pool.count(enc, sig):
                self._decode(enc, sig)
                return
        items = pool.take(Encoding.STD, sig, 2)
        self._apply(self.ha, sig, dict(zip(("x", "y"), items)))

    def _decode(self, enc: Encoding, sig: int) -> None:
        (item,) = self.pool.take(enc, sig, 1)
        dec = self.decoders[enc]
        self._apply(dec, sig, {dec.inputs[0].name: item})

    def run(self) -> None:
        T = self.opts.threshold
        while True:
            over = [s for s in self.pool.sigs() if self.pool.bits(s) > T]
            if not over:
                break
            sig = over[0]
            if not self._try_composite(sig):
                self._reduce(sig)

    def finish(self, nbits: int) -> list[Formula]:
        """Decode everything and ripple-add the columns."""
        pool = self.pool
        sig = 0
        out: list[Formula] = []
        while sig < nbits:
            for enc in (Encoding.XOR_PAIR, Encoding.MON_PAIR, Encoding.SORT_TRIPLE):
                while pool.count(enc, sig):
                    self._decode(enc, sig)
            while pool.count(Encoding.STD, sig) > 1:
                if pool.count(Encoding.STD, sig) >= 3:
                    self._apply(self.fa3, sig, dict(zip(("x", "y", "z"), pool.take(Encoding.STD, sig, 3))))
                else:
                    self._apply(self.ha, sig, dict(zip(("x", "y"), pool.take(Encoding.STD, sig, 2))))
            rest = pool.take(Encoding.STD, sig, 1)
            out.append(rest[0][0] if rest else ZERO)
            sig += 1
        return out


def _nbits(n: int) -> int:
    return n.bit_length()


def build_counter(n: int, opts: BuildOptions | None = None, stats: dict | None = None) -> list[Formula]:
    """Bits f_0..f_L of the number of ones among x_0..x_{n-1} (L = floor(log2 n))."""
    opts = opts or BuildOptions()
    if not 1 <= n <= MAX_N:
        raise ValueError(f"n must be in [1, {MAX_N}], got {n}")
    x = [Var(i) for i in range(n)]
    if n == 1:
        return [x[0]]
    if n == 2:
        s = x[0] ^ x[1] if opts.basis is Basis.B2 else (x[0] & ~x[1]) | (~x[0] & x[1])
        return [s, x[0] & x[1]]
    sch = _Scheduler(n, opts)
    sch.run()
    bits = sch.finish(_nbits(n))
    if stats is not None:
        stats.update(applications=dict(sorted(sch.applications.items())))
    return bits


def build_bit(n: int, k: int, opts: BuildOptions | None = None) -> Formula:
    if not 0 <= k < _nbits(n):
        raise ValueError(f"bit {k} out of range for n={n} (0..{_nbits(n) - 1})")
    return build_counter(n, opts)[k]


def _mux(basis: Basis, w: Formula, g1: Formula, g0: Formula) -> Formula:
    if g1 is g0 or g1 == g0:
        return g1
    return mk_gate(OR, mk_gate(AND, w, g1, basis), mk_gate(AND, negate(w, basis), g0, basis), basis)


def build_symmetric(values, n: int, opts: BuildOptions | None = None) -> Formula:
    """Symmetric function with value ``values[w]`` on inputs of weight w."""
    opts = opts or BuildOptions()
    values = [int(v) for v in values]
    if len(values) != n + 1:
        raise ValueError(f"need {n + 1} values for n={n}, got {len(values)}")
    if any(v not in (0, 1) for v in values):
        raise ValueError("values must be bits")
    bits = build_counter(n, opts)
    L = len(bits)

    # decision tree over the weight bits, high bit first; weights above n are don't-cares
    def table(lo: int, level: int) -> Formula:
        if level < 0:
            return ONE if values[lo] else ZERO
        half = 1 << level
        if lo + half > n:
            return table(lo, level - 1)
        return _mux(opts.basis, bits[level], table(lo + half, level - 1), table(lo, level - 1))

    return table(0, L - 1)


# ------------------------------------------------------------------ checks


def popcount_columns(n: int, samples: int | None, seed: int = 0):
    """Packed assignments: exhaustive when ``samples`` is None, else seeded random."""
    if samples is None:
        from .formula import variable_columns

        cols, ones = variable_columns(n)
        width = 1 << n
        weights = np.array([bin(a).count("1") for a in range(width)])
        return cols, ones, width, weights
    rng = np.random.default_rng(seed)
    m = rng.integers(0, 2, size=(n, samples), dtype=np.uint8)
    cols = [int.from_bytes(np.packbits(row, bitorder="little").tobytes(), "little") for row in m]
    return cols, (1 << samples) - 1, samples, m.sum(axis=0)


def _unpack(v: int, width: int) -> np.ndarray:
    raw = np.frombuffer(v.to_bytes(max(1, (width + 7) // 8), "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:width].astype(np.int64)


def check_counter(bits: list[Formula], n: int, samples: int | None = None, seed: int = 0) -> int:
    """Number of assignments where the bits disagree with popcount."""
    cols, ones, width, weights = popcount_columns(n, samples, seed)
    vals = evaluate_many(bits, cols, ones)
    total = np.zeros(width, dtype=np.int64)
    for k, v in enumerate(vals):
        total += _unpack(v, width) << k
    return int((total != weights).sum())


def check_symmetric(f: Formula, values, n: int, samples: int | None = None, seed: int = 0) -> int:
    cols, ones, width, weights = popcount_columns(n, samples, seed)
    (v,) = evaluate_many([f], cols, ones)
    expect = np.array(values, dtype=np.int64)[weights]
    return int((_unpack(v, width) != expect).sum())


# ------------------------------------------------------------------ growth


@dataclass
class GrowthReport:
    rows: list[tuple[int, str, int]]  # (n, bit or "all", leaves)
    slope: float
    intercept: float
    residual: float
    options: dict
    monotone_violations: list[int] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "bit", "leaves"])
        w.writerows(self.rows)
        return buf.getvalue()

    def summary(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "points": len(self.rows), "options": self.options,
                "monotone_violations": self.monotone_violations}


def counter_size(n: int, opts: BuildOptions, bit: int | None = None) -> int:
    bits = build_counter(n, opts)
    if bit is None:
        return sum(b.size for b in bits)
    return bits[min(bit, len(bits) - 1)].size


def fit_growth(n_list, bit: int | None, opts: BuildOptions | None = None) -> GrowthReport:
    """Least-squares slope of log(size) against log(n).

    ``bit=None`` measures the whole counter (sum over all output bits); a
    bit index beyond the top bit of a small n uses that n's top bit.
    """
    opts = opts or BuildOptions()
    n_list = list(n_list)
    if sorted(n_list) != n_list or len(n_list) < 2:
        raise ValueError("n_list must be ascending with at least two entries")
    sizes = [counter_size(n, opts, bit) for n in n_list]
    label = "all" if bit is None else str(bit)
    rows = [(n, label, s) for n, s in zip(n_list, sizes)]
    lx, ly = np.log(n_list), np.log(sizes)
    (slope, intercept), res, *_ = np.polyfit(lx, ly, 1, full=True)
    residual = float(res[0]) if len(res) else 0.0
    viol = [n_list[i + 1] for i in range(len(sizes) - 1) if sizes[i + 1] < sizes[i]]
    return GrowthReport(rows, float(slope), float(intercept), residual,
                        {**opts.to_dict(), "bit": label}, viol)
