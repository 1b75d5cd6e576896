"""Canonical text format for formulas.

    formula := (var INT) | (const 0|1) | (not formula)
             | (and f f) | (or f f) | (xor f f) | (gate TT4 f f)

TT4 lists the gate output for (left, right) = 00, 01, 10, 11.  Lines whose
first non-blank character is ``#`` are comments.
"""

from __future__ import annotations

import io
from typing import TextIO

from .formula import (
    AND,
    OR,
    XOR,
    Const,
    Formula,
    FormulaError,
    Gate,
    Not,
    Var,
    const,
    table_from_string,
    table_string,
)

_BINARY = {"and": AND, "or": OR, "xor": XOR}


class FormulaSyntaxError(FormulaError, ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.lstrip().startswith("#"):
            continue
        col = 0
        n = len(raw)
        while col < n:
            ch = raw[col]
            if ch.isspace():
                col += 1
            elif ch in "()":
                yield ch, lineno, col + 1
                col += 1
            else:
                start = col
                while col < n and not raw[col].isspace() and raw[col] not in "()":
                    col += 1
                yield raw[start:col], lineno, start + 1


def parse(text: str) -> Formula:
    """Parse exactly one formula; anything after it is an error."""
    toks = list(_tokens(text))
    pos = 0

    def err(msg: str, at: int):
        if at < len(toks):
            _, line, col = toks[at]
        elif toks:
            _, line, col = toks[-1]
            col += len(toks[-1][0])
        else:
            line, col = 1, 1
        raise FormulaSyntaxError(msg, line, col)

    def expect(tok: str):
        nonlocal pos
        if pos >= len(toks) or toks[pos][0] != tok:
            err(f"expected {tok!r}", pos)
        pos += 1

    def integer() -> int:
        nonlocal pos
        if pos >= len(toks) or not toks[pos][0].isdigit():
            err("expected a non-negative integer", pos)
        v = int(toks[pos][0])
        pos += 1
        return v

    # explicit stack: deep formulas must not hit the recursion limit
    # frame = [op, table, collected children, arity]
    stack: list[list] = []
    result: Formula | None = None
    while True:
        expect("(")
        if pos >= len(toks):
            err("unexpected end of input", pos)
        head, _, _ = toks[pos]
        pos += 1
        node: Formula | None = None
        if head == "var":
            node = Var(integer())
            expect(")")
        elif head == "const":
            if pos >= len(toks) or toks[pos][0] not in ("0", "1"):
                err("expected 0 or 1", pos)
            node = const(int(toks[pos][0]))
            pos += 1
            expect(")")
        elif head == "not":
            stack.append(["not", None, [], 1])
        elif head in _BINARY:
            stack.append([head, _BINARY[head], [], 2])
        elif head == "gate":
            if pos >= len(toks):
                err("expected a gate table", pos)
            try:
                table = table_from_string(toks[pos][0])
            except ValueError:
                err(f"bad gate table {toks[pos][0]!r}", pos)
            pos += 1
            stack.append(["gate", table, [], 2])
        else:
            err(f"unknown operator {head!r}", pos - 1)
        while node is not None:
            if not stack:
                result = node
                break
            frame = stack[-1]
            frame[2].append(node)
            if len(frame[2]) < frame[3]:
                node = None
                break
            expect(")")
            stack.pop()
            kids = frame[2]
            node = Not(kids[0]) if frame[0] == "not" else Gate(frame[1], kids[0], kids[1])
        if result is not None:
            break
    if pos != len(toks):
        err("trailing input after formula", pos)
    return result


def write(f: Formula, out: TextIO) -> None:
    """Stream the canonical rendering of ``f`` (the unfolded tree) to ``out``."""
    stack: list[object] = [f]
    buf: list[str] = []
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            buf.append(item)
        elif isinstance(item, Var):
            buf.append(f"(var {item.index})")
        elif isinstance(item, Const):
            buf.append(f"(const {item.value})")
        elif isinstance(item, Not):
            buf.append("(not ")
            stack.append(")")
            stack.append(item.child)
        else:
            if item.table in (AND, OR, XOR):
                buf.append(f"({item.name} ")
            else:
                buf.append(f"(gate {table_string(item.table)} ")
            stack.append(")")
            stack.append(item.right)
            stack.append(" ")
            stack.append(item.left)
        if len(buf) > 4096:
            out.write("".join(buf))
            buf.clear()
    out.write("".join(buf))


def render(f: Formula) -> str:
    s = io.StringIO()
    write(f, s)
    return s.getvalue()


def canonicalize(text: str) -> str:
    return render(parse(text))


def load(path) -> Formula:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def dump(f: Formula, path, comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        write(f, fh)
        fh.write("\n")
