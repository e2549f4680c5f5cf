"""Edits over tagged trees and patches built from them.

A patch prints as its edits joined by `` | ``, each written as
``Kind(target, payload)`` with targets and node payloads as
``('file', 'tag', index)`` triples, e.g.::

    SrcmlNumericSetting(('eval.toy.xml', 'number', 4), '0')

Targets are looked up in the tree as left by the previous edits; node
payloads are always taken from the unpatched trees.
"""

from __future__ import annotations

import ast
import copy
import re
from dataclasses import dataclass

from .toylang import ARITHMETIC, COMPARISONS, parse_int, wrap64
from .tree import GAP, NodeRef, SourceTree, _stmts

NUMERIC_VALUES = ("-1", "0", "1", "2", "255")
RELATIVE_STEPS = ("+1", "-1", "*2", "/2")

# kind: (target tag, payload) where payload is a node tag, a value pool or None
KINDS = {
    "SrcmlArithmeticOperatorSetting": ("operator_arith", ARITHMETIC),
    "SrcmlComparisonOperatorSetting": ("operator_comp", COMPARISONS),
    "SrcmlNumericSetting": ("number", NUMERIC_VALUES),
    "SrcmlRelativeNumericSetting": ("number", RELATIVE_STEPS),
    "SrcmlStmtDeletion": ("stmt", None),
    "SrcmlStmtInsertion": ("stmt", "stmt"),
    "SrcmlStmtReplacement": ("stmt", "stmt"),
    "XmlNodeDeletion<stmt>": ("stmt", None),
    "XmlNodeInsertion<stmt,block>": (GAP, "stmt"),
    "XmlNodeReplacement<stmt>": ("stmt", "stmt"),
    "XmlNodeReplacement<number>": ("number", "number"),
}
DEFAULT_KINDS = tuple(KINDS)
_GENERIC = re.compile(r"XmlNode(Deletion|Replacement)<(\w+)>$")


def kind_spec(kind: str):
    if kind in KINDS:
        return KINDS[kind]
    m = _GENERIC.match(kind)
    if m:
        return m.group(2), (None if m.group(1) == "Deletion" else m.group(2))
    raise ValueError(f"unknown edit kind {kind!r}")


@dataclass(frozen=True)
class Edit:
    kind: str
    target: NodeRef
    payload: NodeRef | str | None = None

    def __post_init__(self):
        kind_spec(self.kind)

    def __str__(self):
        args = [str(NodeRef(*self.target))]
        if self.payload is not None:
            args.append(str(self.payload) if isinstance(self.payload, NodeRef) else repr(self.payload))
        return f"{self.kind}({', '.join(args)})"


@dataclass(frozen=True)
class Patch:
    edits: tuple = ()
    params: tuple = ()  # sorted (name, value) pairs

    @classmethod
    def of(cls, edits=(), params=None) -> Patch:
        return cls(tuple(edits), tuple(sorted((params or {}).items())))

    def __len__(self):
        return len(self.edits)

    def __str__(self):
        parts = [str(e) for e in self.edits]
        parts += [f"ParamSetting({k!r}, {v!r})" for k, v in self.params]
        return " | ".join(parts)

    @property
    def key(self) -> str:
        return str(self)

    def param_dict(self) -> dict:
        return dict(self.params)

    def append(self, edit: Edit) -> Patch:
        return Patch(self.edits + (edit,), self.params)

    def without(self, i: int) -> Patch:
        return Patch(self.edits[:i] + self.edits[i + 1:], self.params)

    def replace(self, i: int, edit: Edit) -> Patch:
        return Patch(self.edits[:i] + (edit,) + self.edits[i + 1:], self.params)

    def with_param(self, name: str, value) -> Patch:
        params = dict(self.params)
        params[name] = value
        return Patch.of(self.edits, params)


_ITEM = re.compile(r"\s*([\w]+(?:<[\w,]+>)?)\((.*)\)\s*$", re.S)


def parse_edit(text: str):
    """An :class:`Edit`, or a ``(name, value)`` pair for a parameter setting."""
    m = _ITEM.match(text)
    if not m:
        raise ValueError(f"malformed edit {text!r}")
    kind, body = m.groups()
    try:
        args = ast.literal_eval(f"({body},)")
    except (ValueError, SyntaxError) as exc:
        raise ValueError(f"malformed edit arguments in {text!r}") from exc
    try:
        if kind == "ParamSetting":
            name, value = args
            return name, value
        target = NodeRef(*args[0])
        payload = None
        if len(args) > 1:
            payload = NodeRef(*args[1]) if isinstance(args[1], tuple) else str(args[1])
        return Edit(kind, target, payload)
    except TypeError as exc:
        raise ValueError(f"malformed edit arguments in {text!r}") from exc


def parse_patch(text: str) -> Patch:
    edits, params = [], {}
    text = text.strip()
    for part in (text.split(" | ") if text else []):
        item = parse_edit(part)
        if isinstance(item, Edit):
            edits.append(item)
        else:
            params[item[0]] = item[1]
    return Patch.of(edits, params)


# applying

def _remove(tree: SourceTree, elem) -> None:
    parent = tree.parent(elem)
    i = list(parent).index(elem)
    before = (parent[i - 1].tail if i > 0 else parent.text) or ""
    tail = elem.tail or ""
    stripped = before.rstrip(" \t")
    if stripped.endswith("\n") and tail.startswith("\n"):
        before = stripped[:-1]  # drop the emptied line
    if i > 0:
        parent[i - 1].tail = before + tail
    else:
        parent.text = before + tail
    parent.remove(elem)


def _fresh(payload, tail: str):
    new = copy.deepcopy(payload)
    new.tail = tail
    return new


def _indent_before(parent, i: int) -> str:
    text = (parent[i - 1].tail if i > 0 else parent.text) or ""
    return "\n" + text.rsplit("\n", 1)[-1] if "\n" in text else " "


def _set_number(elem, edit: Edit) -> bool:
    value = edit.payload
    try:
        if edit.kind == "SrcmlRelativeNumericSetting":
            cur, n = parse_int(elem.text or ""), int(value[1:])
            op = value[0]
            if op == "+":
                cur += n
            elif op == "-":
                cur -= n
            elif op == "*":
                cur *= n
            elif op == "/" and n:
                cur = int(cur / n)
            else:
                return False
            value = str(wrap64(cur))
        else:
            parse_int(value)
    except (ValueError, TypeError, IndexError):
        return False
    elem.text = value
    return True


def _insert_at_gap(block, slot: int, payload) -> None:
    children = list(block)
    stmts = _stmts(block)
    if slot < len(stmts):
        i = children.index(stmts[slot])
        block.insert(i, _fresh(payload, _indent_before(block, i)))
    elif children:
        last = children[-1]
        new = _fresh(payload, last.tail)
        last.tail = _indent_before(block, len(children) - 1)
        block.append(new)
    else:  # empty block: split the text after the opening brace
        text = block.text or ""
        k = text.find("{") + 1
        block.text = text[:k] + " "
        block.append(_fresh(payload, text[k:]))


def _apply(trees: dict, edit: Edit, originals: dict) -> bool:
    tree = trees.get(edit.target.file)
    if tree is None or tree.read_only:
        return False
    tag, payload_spec = kind_spec(edit.kind)
    if edit.target.tag != tag:
        return False
    target = tree.resolve(tag, edit.target.index)
    if target is None:
        return False
    payload = None
    if isinstance(edit.payload, NodeRef):
        src = originals.get(edit.payload.file)
        if src is None or edit.payload.tag != payload_spec:
            return False
        payload = src.resolve(edit.payload.tag, edit.payload.index)
        if payload is None:
            return False
    elif isinstance(payload_spec, str):
        return False  # node payload required

    kind = edit.kind
    if tag == GAP:
        _insert_at_gap(*target, payload)
    elif kind.endswith("Deletion") or kind.startswith("XmlNodeDeletion"):
        _remove(tree, target)
    elif kind == "SrcmlStmtInsertion":
        parent = tree.parent(target)
        i = list(parent).index(target)
        parent.insert(i, _fresh(payload, _indent_before(parent, i)))
    elif payload is not None:  # replacement
        parent = tree.parent(target)
        i = list(parent).index(target)
        parent.remove(target)
        parent.insert(i, _fresh(payload, target.tail))
    elif tag == "number":
        if not _set_number(target, edit):
            return False
    else:
        if edit.payload not in payload_spec:
            return False
        target.text = edit.payload
    tree.invalidate()
    return True


def _writable_copies(trees: dict, files) -> dict:
    out = dict(trees)
    for f in files:
        if f in out and not out[f].read_only:
            out[f] = out[f].copy()
    return out


def apply_edit(trees: dict, edit: Edit, originals: dict | None = None) -> tuple[dict, bool]:
    """Returns new trees and whether the edit took effect.

    Inputs are never modified; an edit that cannot be applied leaves the
    returned trees equal to the inputs.
    """
    out = _writable_copies(trees, [edit.target.file])
    applied = _apply(out, edit, originals if originals is not None else trees)
    return (out if applied else trees), applied


def apply_patch(trees: dict, patch: Patch) -> tuple[dict, list[bool]]:
    out = _writable_copies(trees, {e.target.file for e in patch.edits})
    flags = [_apply(out, e, trees) for e in patch.edits]
    return out, flags


# sampling

def random_edit(rng, targets: list[SourceTree], ingredients: list[SourceTree] = (),
                weights: dict | None = None, values: dict | None = None) -> Edit:
    """Draw one edit.  Targets come from writable trees only; node payloads
    come from a file picked uniformly among target and ingredient trees that
    have the tag, then a node uniformly within it.

    ``values`` overrides the literal pools per kind.
    """
    weights = weights or {k: 1.0 for k in DEFAULT_KINDS}
    kinds = [k for k, w in weights.items() if w > 0]
    if not kinds:
        raise ValueError("no edit kinds enabled")
    p = [weights[k] for k in kinds]
    writable = [t for t in targets if not t.read_only]
    donors = list(targets) + list(ingredients)
    for _ in range(1000):
        kind = kinds[rng.choice(len(kinds), p=[w / sum(p) for w in p])]
        tag, payload_spec = kind_spec(kind)
        sites = [t for t in writable if t.count(tag)]
        if not sites:
            continue
        tree = sites[rng.integers(len(sites))]
        target = NodeRef(tree.file, tag, int(rng.integers(tree.count(tag))))
        if payload_spec is None:
            return Edit(kind, target)
        if isinstance(payload_spec, str):
            pool = [t for t in donors if t.count(payload_spec)]
            if not pool:
                continue
            donor = pool[rng.integers(len(pool))]
            return Edit(kind, target,
                        NodeRef(donor.file, payload_spec, int(rng.integers(donor.count(payload_spec)))))
        pool = (values or {}).get(kind, payload_spec)
        return Edit(kind, target, str(pool[rng.integers(len(pool))]))
    raise ValueError("no enabled edit kind has a site in the target trees")
