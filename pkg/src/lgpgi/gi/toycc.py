"""Compiler for the toy language: name/type checking, an optimising pass and
code generation to Python source.

The generated Python text is the build artifact ("object file").  Locals are
renamed canonically after optimisation, so two sources that optimise to the
same program produce byte-identical artifacts.  Each executed statement adds
its static cost to a shared counter, which is the instruction count the
harness reports.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from functools import cached_property

from .toylang import (ARITHMETIC, COMPARISONS, MASK64, Assign, Binary, Block, Break, Call,
                      CompileError, Decl, ExprStmt, For, Func, If, Module, Num, Return,
                      Unary, Var, While, parse_module, wrap64)

ENTRY = "Interpret64"
ENTRY_SIGNATURE = ("int", ("int", "int", "int", "int"))

_VV = ("vec", "vec")
BUILTINS = {  # name: (return type, argument types, cost)
    "load8": ("int", ("int",), 1),
    "loadu": ("vec", ("int",), 1),
    "storeu": ("void", ("int", "vec"), 1),
    "gather_epi32": ("vec", ("vec", "int"), 4),
    "setzero": ("vec", (), 1),
    "set1_epi8": ("vec", ("int",), 1),
    "set1_epi16": ("vec", ("int",), 1),
    "set1_epi32": ("vec", ("int",), 1),
    "mask_blend_epi8": ("vec", ("int", "vec", "vec"), 1),
    # widening a half or quarter row is an extract plus an extend
    "cvtepi8_epi16": ("vec", ("vec", "int"), 2),
    "cvtepu8_epi16": ("vec", ("vec", "int"), 2),
    "cvtepi8_epi32": ("vec", ("vec", "int"), 2),
    "cvtepu8_epi32": ("vec", ("vec", "int"), 2),
    # narrowing: one truncating move per input plus the inserts that join them
    "cvtepi16_epi8": ("vec", _VV, 5),
    "cvtepi32_epi8": ("vec", _VV + _VV, 11),
    "slli_epi16": ("vec", ("vec", "int"), 1),
    "srli_epi16": ("vec", ("vec", "int"), 1),
    "slli_epi32": ("vec", ("vec", "int"), 1),
    "srli_epi32": ("vec", ("vec", "int"), 1),
    "abs_epi8": ("vec", ("vec",), 1),
}
for _name in ("add_epi8", "add_epi16", "add_epi32", "sub_epi8", "sub_epi16", "sub_epi32",
              "mullo_epi16", "and_si512", "or_si512", "xor_si512",
              "max_epu8", "min_epu8", "avg_epu8", "adds_epu8", "subs_epu8"):
    BUILTINS[_name] = ("vec", _VV, 1)
BUILTINS["mullo_epi32"] = ("vec", _VV, 2)  # two uops
IMPURE_BUILTINS = {"storeu"}

STMT_COST = 1
CALL_COST = 2
OP_COST = {op: 1 for op in ARITHMETIC + COMPARISONS + ("&", "|", "^", "<<", ">>", "&&", "||")}
OP_COST["=="] = OP_COST["!="] = 2  # compare then test the flag


# checking

class Checker:
    """Resolves names to unique ids and assigns a type to every expression."""

    def __init__(self, module: Module, consts: dict, src: str | None = None):
        self.module = module
        self.consts = consts
        self.src = src
        self.funcs = {}
        self.uid = 0

    def fail(self, msg, node=None):
        raise CompileError(msg, node.span[0] if node is not None else None, self.src)

    def check(self) -> dict:
        for f in self.module.funcs:
            if f.name in self.funcs or f.name in BUILTINS:
                self.fail(f"redefinition of {f.name!r}", f)
            self.funcs[f.name] = f
        entry = self.funcs.get(ENTRY)
        if entry is None:
            raise CompileError(f"missing entry point {ENTRY!r}")
        if (entry.ret, tuple(t for t, _ in entry.params)) != ENTRY_SIGNATURE:
            self.fail(f"{ENTRY} must be int {ENTRY}(int, int, int, int)", entry)
        for f in self.module.funcs:
            self.function(f)
        return self.funcs

    def function(self, f: Func) -> None:
        self.ret = f.ret
        self.scopes = [{}]
        f.param_uids = []
        for t, name in f.params:
            if name in self.scopes[-1]:
                self.fail(f"duplicate parameter {name!r}", f)
            self.scopes[-1][name] = (self.uid, t)
            f.param_uids.append(self.uid)
            self.uid += 1
        self.loops = 0
        self.block(f.body, new_scope=False)

    def lookup(self, name, node):
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        if name in self.consts:
            return (-2, "int")
        self.fail(f"{name!r} was not declared in this scope", node)

    def block(self, b: Block, new_scope=True) -> None:
        if new_scope:
            self.scopes.append({})
        for s in b.body:
            self.stmt(s)
        if new_scope:
            self.scopes.pop()

    def declare(self, s: Decl) -> None:
        if s.name in self.scopes[-1]:
            self.fail(f"redeclaration of {s.name!r}", s)
        if s.name in self.consts:
            self.fail(f"{s.name!r} is a constant", s)
        t = self.expr(s.value)
        if t != s.type:
            self.fail(f"cannot initialise {s.type} {s.name!r} with {t}", s)
        s.uid = self.uid
        self.uid += 1
        self.scopes[-1][s.name] = (s.uid, s.type)

    def assign(self, s: Assign) -> None:
        uid, t = self.lookup(s.name, s)
        if uid == -2:
            self.fail(f"assignment to constant {s.name!r}", s)
        vt = self.expr(s.value)
        if vt != t:
            self.fail(f"cannot assign {vt} to {t} {s.name!r}", s)
        s.uid = uid

    def cond(self, e) -> None:
        if self.expr(e) != "int":
            self.fail("condition must be int", e)

    def stmt(self, s) -> None:
        if isinstance(s, Decl):
            self.declare(s)
        elif isinstance(s, Assign):
            self.assign(s)
        elif isinstance(s, ExprStmt):
            self.expr(s.expr, allow_void=True)
        elif isinstance(s, Return):
            if s.value is None:
                if self.ret != "void":
                    self.fail("return without a value", s)
            else:
                t = self.expr(s.value)
                if self.ret == "void" or t != self.ret:
                    self.fail(f"returning {t} from a {self.ret} function", s)
        elif isinstance(s, Break):
            if not self.loops:
                self.fail("break outside a loop", s)
        elif isinstance(s, If):
            self.cond(s.cond)
            self.block(s.then)
            if isinstance(s.orelse, If):
                self.stmt(s.orelse)
            elif s.orelse is not None:
                self.block(s.orelse)
        elif isinstance(s, For):
            self.scopes.append({})
            if s.init is not None:
                self.stmt(s.init)
            if s.cond is not None:
                self.cond(s.cond)
            if s.step is not None:
                self.stmt(s.step)
            self.loops += 1
            self.block(s.body)
            self.loops -= 1
            self.scopes.pop()
        elif isinstance(s, While):
            self.cond(s.cond)
            self.loops += 1
            self.block(s.body)
            self.loops -= 1
        else:
            self.fail(f"unsupported statement {type(s).__name__}", s)

    def expr(self, e, allow_void=False) -> str:
        t = self._expr(e)
        if t == "void" and not allow_void:
            self.fail("void value used in an expression", e)
        e.ty = t
        return t

    def _expr(self, e) -> str:
        if isinstance(e, Num):
            return "int"
        if isinstance(e, Var):
            e.uid, t = self.lookup(e.name, e)
            if e.uid == -2:
                e.const = self.consts[e.name]
            return t
        if isinstance(e, Unary):
            if self.expr(e.operand) != "int":
                self.fail(f"bad operand to unary {e.op}", e)
            return "int"
        if isinstance(e, Binary):
            if self.expr(e.left) != "int" or self.expr(e.right) != "int":
                self.fail(f"bad operands to binary {e.op}", e)
            return "int"
        if isinstance(e, Call):
            if e.name in BUILTINS:
                ret, params, _ = BUILTINS[e.name]
                e.builtin = True
            elif e.name in self.funcs:
                f = self.funcs[e.name]
                ret, params = f.ret, tuple(t for t, _ in f.params)
                e.builtin = False
            else:
                self.fail(f"{e.name!r} was not declared in this scope", e)
            if len(e.args) != len(params):
                self.fail(f"{e.name} takes {len(params)} arguments, {len(e.args)} given", e)
            for a, want in zip(e.args, params):
                if self.expr(a) != want:
                    self.fail(f"argument of type {a.ty} where {want} expected in {e.name}", e)
            return ret
        self.fail(f"unsupported expression {type(e).__name__}", e)


# optimisation

def is_pure(e) -> bool:
    if isinstance(e, (Num, Var)):
        return True
    if isinstance(e, Unary):
        return is_pure(e.operand)
    if isinstance(e, Binary):
        if e.op in ("/", "%"):  # may trap
            return isinstance(e.right, Num) and e.right.value not in (0, -1)
        return is_pure(e.left) and is_pure(e.right)
    if isinstance(e, Call):
        return e.builtin and e.name not in IMPURE_BUILTINS and all(is_pure(a) for a in e.args)
    return False


def _c_div(a, b):
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def eval_binary(op, a, b) -> int:
    if op == "+":
        return wrap64(a + b)
    if op == "-":
        return wrap64(a - b)
    if op == "*":
        return wrap64(a * b)
    if op == "/":
        return wrap64(_c_div(a, b))
    if op == "%":
        return wrap64(a - b * _c_div(a, b))
    if op == "<<":
        return wrap64(a << (b & 63))
    if op == ">>":
        return a >> (b & 63)
    if op == "&":
        return a & b
    if op == "|":
        return a | b
    if op == "^":
        return a ^ b
    if op == "&&":
        return int(bool(a) and bool(b))
    if op == "||":
        return int(bool(a) or bool(b))
    return int({"==": a == b, "!=": a != b, "<": a < b, "<=": a <= b,
                ">": a > b, ">=": a >= b}[op])


def _num(v, like) -> Num:
    n = Num(v, span=like.span)
    n.ty = "int"
    return n


class Optimizer:
    """Constant folding, dead-branch removal, blend-with-constant-mask
    simplification, self-assignment and dead-code removal."""

    def fold(self, e):
        if isinstance(e, Var) and e.uid == -2:
            return _num(e.const, e)
        if isinstance(e, Unary):
            o = self.fold(e.operand)
            if isinstance(o, Num):
                v = {"-": lambda x: wrap64(-x), "!": lambda x: int(not x), "~": lambda x: ~x}[e.op](o.value)
                return _num(v, e)
            n = copy.copy(e)
            n.operand = o
            return n
        if isinstance(e, Binary):
            l, r = self.fold(e.left), self.fold(e.right)
            if isinstance(l, Num) and isinstance(r, Num):
                trap = e.op in ("/", "%") and (r.value == 0 or (r.value == -1 and l.value == -(1 << 63)))
                if not trap:
                    return _num(eval_binary(e.op, l.value, r.value), e)
            n = copy.copy(e)
            n.left, n.right = l, r
            return n
        if isinstance(e, Call):
            args = [self.fold(a) for a in e.args]
            if e.name == "mask_blend_epi8" and isinstance(args[0], Num):
                k = args[0].value & MASK64
                if k == 0 and is_pure(args[2]):
                    return args[1]
                if k == MASK64 and is_pure(args[1]):
                    return args[2]
            n = copy.copy(e)
            n.args = args
            return n
        return e

    def block(self, stmts) -> list:
        out = []
        for s in stmts:
            out.extend(self.stmt(s))
            if out and isinstance(out[-1], (Return, Break)):
                break
        return out

    def _wrap(self, b: Block) -> Block:
        return Block(self.block(b.body), span=b.span)

    def branch(self, node) -> list:
        if node is None:
            return []
        if isinstance(node, If):
            return self.stmt(node)
        return self.block(node.body)

    def stmt(self, s) -> list:
        if isinstance(s, Decl):
            n = copy.copy(s)
            n.value = self.fold(s.value)
            return [n]
        if isinstance(s, Assign):
            v = self.fold(s.value)
            if isinstance(v, Var) and v.uid == s.uid:
                return []
            n = copy.copy(s)
            n.value = v
            return [n]
        if isinstance(s, ExprStmt):
            e = self.fold(s.expr)
            if is_pure(e):
                return []
            return [ExprStmt(e, span=s.span)]
        if isinstance(s, Return):
            return [Return(None if s.value is None else self.fold(s.value), span=s.span)]
        if isinstance(s, Break):
            return [s]
        if isinstance(s, If):
            c = self.fold(s.cond)
            if isinstance(c, Num):
                return self.branch(s.then if c.value else s.orelse)
            then = self._wrap(s.then)
            orelse = self.branch(s.orelse)
            if not then.body and not orelse and is_pure(c):
                return []
            else_node = None
            if len(orelse) == 1 and isinstance(orelse[0], If):
                else_node = orelse[0]
            elif orelse:
                else_node = Block(orelse)
            return [If(c, then, else_node, span=s.span)]
        if isinstance(s, For):
            init = self.stmt(s.init) if s.init is not None else []
            c = self.fold(s.cond) if s.cond is not None else None
            if isinstance(c, Num) and not c.value:
                return init
            step = self.stmt(s.step) if s.step is not None else []
            body = self._wrap(s.body)
            return [For(init[0] if init else None, c, step[0] if step else None, body, span=s.span)]
        if isinstance(s, While):
            c = self.fold(s.cond)
            if isinstance(c, Num) and not c.value:
                return []
            return [While(c, self._wrap(s.body), span=s.span)]
        raise CompileError(f"cannot optimise {type(s).__name__}")

    def module(self, funcs: dict) -> dict:
        out = {}
        for name, f in funcs.items():
            n = copy.copy(f)
            n.body = self._wrap(f.body)
            out[name] = n
        return out


# code generation

def expr_cost(e) -> int:
    if isinstance(e, (Num, Var)):
        return 0
    if isinstance(e, Unary):
        return 1 + expr_cost(e.operand)
    if isinstance(e, Binary):
        return OP_COST[e.op] + expr_cost(e.left) + expr_cost(e.right)
    if isinstance(e, Call):
        own = BUILTINS[e.name][2] if e.builtin else CALL_COST
        return own + sum(expr_cost(a) for a in e.args)
    raise TypeError(e)


_WRAPPED = {"+", "-", "*"}
_PLAIN = {"&", "|", "^", "==", "!=", "<", "<=", ">", ">="}


class CodeGen:
    def __init__(self):
        self.lines = []

    def emit(self, depth, text):
        self.lines.append("    " * depth + text)

    def name(self, uid):
        if uid not in self.names:
            self.names[uid] = f"l{len(self.names) - self.n_params}"
        return self.names[uid]

    def expr(self, e) -> str:
        if isinstance(e, Num):
            return repr(e.value)
        if isinstance(e, Var):
            return repr(e.const) if e.uid == -2 else self.name(e.uid)
        if isinstance(e, Unary):
            o = self.expr(e.operand)
            return {"-": f"_w(-{o})", "!": f"(0 if {o} else 1)", "~": f"(~{o})"}[e.op]
        if isinstance(e, Binary):
            l, r = self.expr(e.left), self.expr(e.right)
            if e.op in _WRAPPED:
                return f"_w({l} {e.op} {r})"
            if e.op in _PLAIN:
                return f"({l} {e.op} {r})"
            return {"/": f"_div({l}, {r})", "%": f"_mod({l}, {r})", "<<": f"_shl({l}, {r})",
                    ">>": f"({l} >> ({r} & 63))", "&&": f"(1 if {l} and {r} else 0)",
                    "||": f"(1 if {l} or {r} else 0)"}[e.op]
        if isinstance(e, Call):
            args = ", ".join(self.expr(a) for a in e.args)
            return f"b_{e.name}({args})" if e.builtin else f"f_{e.name}({args})"
        raise TypeError(e)

    def cost(self, depth, n):
        if n:
            self.emit(depth, f"C[0] += {n}")

    def block(self, depth, stmts):
        if not stmts:
            self.emit(depth, "pass")
        for s in stmts:
            self.stmt(depth, s)

    def simple(self, depth, s):
        self.cost(depth, STMT_COST + expr_cost(s.value))
        self.emit(depth, f"{self.name(s.uid)} = {self.expr(s.value)}")

    def loop_head(self, depth, cond):
        self.emit(depth, "while True:")
        self.cost(depth + 1, STMT_COST + (expr_cost(cond) if cond is not None else 0))
        self.emit(depth + 1, "if C[0] > CAP: _cap()")
        if cond is not None:
            self.emit(depth + 1, f"if not {self.expr(cond)}: break")

    def stmt(self, depth, s):
        if isinstance(s, (Decl, Assign)):
            self.simple(depth, s)
        elif isinstance(s, ExprStmt):
            self.cost(depth, STMT_COST + expr_cost(s.expr))
            self.emit(depth, self.expr(s.expr))
        elif isinstance(s, Return):
            self.cost(depth, STMT_COST + (expr_cost(s.value) if s.value is not None else 0))
            self.emit(depth, f"return {self.expr(s.value)}" if s.value is not None else "return None")
        elif isinstance(s, Break):
            self.cost(depth, STMT_COST)
            self.emit(depth, "break")
        elif isinstance(s, If):
            self.cost(depth, STMT_COST + expr_cost(s.cond))
            self.emit(depth, f"if {self.expr(s.cond)}:")
            self.block(depth + 1, s.then.body)
            if s.orelse is not None:
                self.emit(depth, "else:")
                if isinstance(s.orelse, If):
                    self.stmt(depth + 1, s.orelse)
                else:
                    self.block(depth + 1, s.orelse.body)
        elif isinstance(s, For):
            if s.init is not None:
                self.stmt(depth, s.init)
            self.loop_head(depth, s.cond)
            self.block(depth + 1, s.body.body)
            if s.step is not None:
                self.stmt(depth + 1, s.step)
        elif isinstance(s, While):
            self.loop_head(depth, s.cond)
            self.block(depth + 1, s.body.body)
        else:
            raise TypeError(s)

    def function(self, f: Func):
        self.names = {}
        self.n_params = len(f.params)
        params = []
        for i, uid in enumerate(f.param_uids):
            self.names[uid] = f"a{i}"
            params.append(f"a{i}")
        self.emit(0, f"def f_{f.name}({', '.join(params)}):")
        self.emit(1, "if C[0] > CAP: _cap()")
        self.block(1, f.body.body)
        default = {"int": "0", "vec": "b_setzero()", "void": "None"}[f.ret]
        self.emit(1, f"return {default}")
        self.emit(0, "")

    def module(self, funcs: dict) -> str:
        for f in funcs.values():
            self.function(f)
        return "\n".join(self.lines)


# building

@dataclass
class Build:
    artifact: str  # generated Python text
    opt: int

    @cached_property
    def code(self):
        return compile(self.artifact, f"<toy -O{self.opt}>", "exec")


def check_source(src: str, consts: dict | None = None) -> dict:
    module = parse_module(src)
    return Checker(module, dict(consts or {}), src).check()


def build_checked(funcs: dict, opt: int = 3) -> Build:
    """Code for functions already returned by :func:`check_source`."""
    if opt > 0:
        funcs = Optimizer().module(funcs)
    return Build(CodeGen().module(funcs), opt)


def build(src: str, opt: int = 3, consts: dict | None = None) -> Build:
    """Compile toy source; raises CompileError with a diagnostic."""
    return build_checked(check_source(src, consts), opt)
