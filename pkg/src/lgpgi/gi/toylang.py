"""A small typed C-like language and its srcML-style XML form.

Source looks like::

    vec Reg8(int regs, int ins) {
      return loadu(regs + 64 * load8(ins + 2));
    }

Types are ``int`` (signed 64-bit, wrapping), ``vec`` (64 bytes) and ``void``.
Statements: declarations with initialiser, assignment, if/else, for, while,
return, break and expression statements.  Comments are kept as plain text in
the XML and ignored by the parser.

The XML uses the tags ``unit``, ``function``, ``block``, ``stmt``, ``number``,
``operator_comp`` and ``operator_arith``.  Its text, read in document order,
is exactly the source, so rendering is ``"".join(root.itertext())``.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import NamedTuple

KEYWORDS = {"int", "vec", "void", "if", "else", "for", "while", "return", "break"}
TYPES = ("int", "vec", "void")
COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")
ARITHMETIC = ("+", "-", "*", "/", "%")

_TOKEN = re.compile(r"""
    (?P<ws>\s+|//[^\n]*|/\*.*?\*/)
  | (?P<num>0[xX][0-9a-fA-F]+|\d+)
  | (?P<id>[A-Za-z_]\w*)
  | (?P<op><<|>>|<=|>=|==|!=|&&|\|\||[-+*/%<>=!~&|^(){};,])
  | (?P<bad>.)
""", re.VERBOSE | re.DOTALL)


class CompileError(Exception):
    def __init__(self, msg: str, pos: int | None = None, src: str | None = None):
        if pos is not None and src is not None:
            line = src.count("\n", 0, pos) + 1
            msg = f"line {line}: {msg}"
        super().__init__(msg)


class Token(NamedTuple):
    kind: str  # num, id, op, eof
    text: str
    start: int
    end: int


def tokenize(src: str) -> list[Token]:
    out = []
    for m in _TOKEN.finditer(src):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise CompileError(f"unexpected character {m.group()!r}", m.start(), src)
        out.append(Token(kind, m.group(), m.start(), m.end()))
    out.append(Token("eof", "", len(src), len(src)))
    return out


# syntax tree

@dataclass(eq=False)
class Node:
    span: tuple[int, int] = field(default=(0, 0), repr=False, kw_only=True)


@dataclass(eq=False)
class Num(Node):
    value: int


@dataclass(eq=False)
class Var(Node):
    name: str
    uid: int = field(default=-1, repr=False)


@dataclass(eq=False)
class Unary(Node):
    op: str
    operand: Node


@dataclass(eq=False)
class Binary(Node):
    op: str
    left: Node
    right: Node
    op_span: tuple[int, int] = field(default=(0, 0), repr=False)


@dataclass(eq=False)
class Call(Node):
    name: str
    args: list


@dataclass(eq=False)
class Decl(Node):
    type: str
    name: str
    value: Node
    uid: int = field(default=-1, repr=False)


@dataclass(eq=False)
class Assign(Node):
    name: str
    value: Node
    uid: int = field(default=-1, repr=False)


@dataclass(eq=False)
class Block(Node):
    body: list


@dataclass(eq=False)
class If(Node):
    cond: Node
    then: Block
    orelse: Node | None = None  # Block, If (else-if) or None


@dataclass(eq=False)
class For(Node):
    init: Node | None
    cond: Node | None
    step: Node | None
    body: Block


@dataclass(eq=False)
class While(Node):
    cond: Node
    body: Block


@dataclass(eq=False)
class Return(Node):
    value: Node | None = None


@dataclass(eq=False)
class Break(Node):
    pass


@dataclass(eq=False)
class ExprStmt(Node):
    expr: Node


@dataclass(eq=False)
class Func(Node):
    ret: str
    name: str
    params: list  # [(type, name)]
    body: Block
    param_uids: list = field(default_factory=list, repr=False)


@dataclass(eq=False)
class Module(Node):
    funcs: list


_BINARY_LEVELS = [("||",), ("&&",), ("|",), ("^",), ("&",), ("==", "!="),
                  ("<", "<=", ">", ">="), ("<<", ">>"), ("+", "-"), ("*", "/", "%")]
_PRECEDENCE = {op: i for i, ops in enumerate(_BINARY_LEVELS) for op in ops}


class Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = tokenize(src)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        raise CompileError(f"{msg} near {tok.text or 'end of input'!r}", tok.start, self.src)

    def accept(self, text) -> Token | None:
        if self.tok.text == text and self.tok.kind != "num":
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text) -> Token:
        t = self.accept(text)
        if t is None:
            self.error(f"expected {text!r}")
        return t

    def ident(self) -> Token:
        t = self.tok
        if t.kind != "id" or t.text in KEYWORDS:
            self.error("expected identifier")
        self.i += 1
        return t

    # grammar
    def module(self) -> Module:
        funcs = []
        while self.tok.kind != "eof":
            funcs.append(self.function())
        return Module(funcs, span=(0, len(self.src)))

    def function(self) -> Func:
        t0 = self.tok
        if t0.text not in TYPES:
            self.error("expected function definition")
        self.i += 1
        name = self.ident().text
        self.expect("(")
        params = []
        if not self.accept(")"):
            while True:
                pt = self.tok
                if pt.text not in ("int", "vec"):
                    self.error("expected parameter type")
                self.i += 1
                params.append((pt.text, self.ident().text))
                if self.accept(")"):
                    break
                self.expect(",")
        body = self.block()
        return Func(t0.text, name, params, body, span=(t0.start, body.span[1]))

    def block(self) -> Block:
        t0 = self.expect("{")
        body = []
        while not self.accept("}"):
            if self.tok.kind == "eof":
                self.error("unterminated block")
            body.append(self.statement())
        return Block(body, span=(t0.start, self.toks[self.i - 1].end))

    def _end(self, start) -> tuple[int, int]:
        return (start, self.toks[self.i - 1].end)

    def statement(self) -> Node:
        t0 = self.tok
        if t0.kind == "id":
            if t0.text in ("int", "vec"):
                node = self.simple()
                self.expect(";")
                node.span = self._end(t0.start)
                return node
            if t0.text == "if":
                return self.if_stmt()
            if t0.text == "for":
                self.i += 1
                self.expect("(")
                init = None if self.tok.text == ";" else self.simple()
                self.expect(";")
                cond = None if self.tok.text == ";" else self.expr()
                self.expect(";")
                step = None if self.tok.text == ")" else self.simple(allow_decl=False)
                self.expect(")")
                body = self.block()
                return For(init, cond, step, body, span=self._end(t0.start))
            if t0.text == "while":
                self.i += 1
                self.expect("(")
                cond = self.expr()
                self.expect(")")
                body = self.block()
                return While(cond, body, span=self._end(t0.start))
            if t0.text == "return":
                self.i += 1
                value = None if self.tok.text == ";" else self.expr()
                self.expect(";")
                return Return(value, span=self._end(t0.start))
            if t0.text == "break":
                self.i += 1
                self.expect(";")
                return Break(span=self._end(t0.start))
            if t0.text in ("else", "void"):
                self.error("unexpected keyword")
            if self.peek().text == "=":
                node = self.simple(allow_decl=False)
                self.expect(";")
                node.span = self._end(t0.start)
                return node
        if t0.text == "{":
            self.error("nested block needs a statement")
        e = self.expr()
        self.expect(";")
        return ExprStmt(e, span=self._end(t0.start))

    def simple(self, allow_decl=True) -> Node:
        """Declaration or assignment without the trailing semicolon."""
        t0 = self.tok
        if t0.text in ("int", "vec"):
            if not allow_decl:
                self.error("declaration not allowed here")
            self.i += 1
            name = self.ident().text
            self.expect("=")
            value = self.expr()
            return Decl(t0.text, name, value, span=self._end(t0.start))
        name = self.ident().text
        self.expect("=")
        value = self.expr()
        return Assign(name, value, span=self._end(t0.start))

    def if_stmt(self) -> If:
        t0 = self.expect("if")
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.block()
        orelse = None
        if self.accept("else"):
            orelse = self.if_stmt() if self.tok.text == "if" else self.block()
        return If(cond, then, orelse, span=self._end(t0.start))

    def expr(self, level=0) -> Node:
        # precedence climbing; every binary operator is left associative
        left = self.unary()
        while True:
            t = self.tok
            prec = _PRECEDENCE.get(t.text, -1) if t.kind == "op" else -1
            if prec < level:
                return left
            self.i += 1
            right = self.expr(prec + 1)
            left = Binary(t.text, left, right, (t.start, t.end), span=(left.span[0], right.span[1]))

    def unary(self) -> Node:
        t = self.tok
        if t.kind == "op" and t.text in ("-", "!", "~"):
            self.i += 1
            operand = self.unary()
            return Unary(t.text, operand, span=(t.start, operand.span[1]))
        return self.primary()

    def primary(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(parse_int(t.text), span=(t.start, t.end))
        if t.text == "(":
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "id" and t.text not in KEYWORDS:
            self.i += 1
            if self.accept("("):
                args = []
                if not self.accept(")"):
                    while True:
                        args.append(self.expr())
                        if self.accept(")"):
                            break
                        self.expect(",")
                return Call(t.text, args, span=self._end(t.start))
            return Var(t.text, span=(t.start, t.end))
        self.error("expected expression")


MASK64 = (1 << 64) - 1


def wrap64(v: int) -> int:
    return ((v + (1 << 63)) & MASK64) - (1 << 63)


def parse_int(text: str) -> int:
    """Integer literal (decimal or hex, optional sign) as wrapped int64."""
    text = text.strip()
    neg = text.startswith("-")
    body = text.lstrip("+-")
    v = int(body, 16) if body[:2].lower() == "0x" else int(body, 10)
    return wrap64(-v if neg else v)


def parse_module(src: str) -> Module:
    return Parser(src).module()


# XML form

def _walk_spans(node, out: list, stmt_ok=True) -> None:
    def expr(e):
        if isinstance(e, Num):
            out.append((e.span[0], e.span[1], "number"))
        elif isinstance(e, Binary):
            if e.op in COMPARISONS:
                out.append((*e.op_span, "operator_comp"))
            elif e.op in ARITHMETIC:
                out.append((*e.op_span, "operator_arith"))
            expr(e.left)
            expr(e.right)
        elif isinstance(e, Unary):
            expr(e.operand)
        elif isinstance(e, Call):
            for a in e.args:
                expr(a)

    def block(b):
        out.append((b.span[0], b.span[1], "block"))
        for s in b.body:
            stmt(s)

    def stmt(s, tagged=True):
        if tagged:
            out.append((s.span[0], s.span[1], "stmt"))
        if isinstance(s, (Decl, Assign)):
            expr(s.value)
        elif isinstance(s, ExprStmt):
            expr(s.expr)
        elif isinstance(s, Return):
            if s.value is not None:
                expr(s.value)
        elif isinstance(s, If):
            expr(s.cond)
            block(s.then)
            if isinstance(s.orelse, If):
                stmt(s.orelse, tagged=False)
            elif s.orelse is not None:
                block(s.orelse)
        elif isinstance(s, For):
            if s.init is not None:
                stmt(s.init, tagged=False)
            if s.cond is not None:
                expr(s.cond)
            if s.step is not None:
                stmt(s.step, tagged=False)
            block(s.body)
        elif isinstance(s, While):
            expr(s.cond)
            block(s.body)

    for f in node.funcs:
        out.append((f.span[0], f.span[1], "function"))
        block(f.body)


def _append_text(elem: ET.Element, text: str) -> None:
    if not text:
        return
    if len(elem):
        elem[-1].tail = (elem[-1].tail or "") + text
    else:
        elem.text = (elem.text or "") + text


def source_to_element(src: str, filename: str = "") -> ET.Element:
    module = parse_module(src)
    spans: list = []
    _walk_spans(module, spans)
    spans.sort(key=lambda s: (s[0], -s[1]))
    root = ET.Element("unit")
    if filename:
        root.set("filename", filename)
    stack = [(root, len(src))]
    pos = 0
    for start, end, tag in spans:
        while stack[-1][1] <= start and len(stack) > 1:
            elem, e_end = stack.pop()
            _append_text(elem, src[pos:e_end])
            pos = e_end
        _append_text(stack[-1][0], src[pos:start])
        pos = start
        child = ET.SubElement(stack[-1][0], tag)
        stack.append((child, end))
    while len(stack) > 1:
        elem, e_end = stack.pop()
        _append_text(elem, src[pos:e_end])
        pos = e_end
    _append_text(root, src[pos:])
    return root


def source_to_xml(src: str, filename: str = "") -> str:
    return ET.tostring(source_to_element(src, filename), encoding="unicode")


def render(elem: ET.Element) -> str:
    return "".join(elem.itertext())
