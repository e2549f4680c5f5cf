"""Tagged syntax trees in srcML-style XML.

The source text is the concatenation of all text in the tree, so unknown
elements and comments survive untouched.  Nodes are addressed by
``(file, tag, index)`` where index counts that tag in pre-order.
"""

from __future__ import annotations

import copy
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import NamedTuple

from .toylang import render, source_to_element

GAP = "_inter_block"  # pseudo tag: slots between statements of a block


class NodeRef(NamedTuple):
    file: str
    tag: str
    index: int

    def __str__(self):
        return repr(tuple(self))


class SourceTree:
    def __init__(self, file: str, root: ET.Element, read_only: bool = False):
        self.file = file
        self.root = root
        self.read_only = read_only
        self._index: dict[str, list] = {}
        self._parents: dict | None = None

    @classmethod
    def from_xml(cls, text: str, file: str, read_only: bool = False) -> SourceTree:
        """Raises ``xml.etree.ElementTree.ParseError`` on malformed XML."""
        return cls(file, ET.fromstring(text), read_only)

    @classmethod
    def from_source(cls, text: str, file: str, read_only: bool = False) -> SourceTree:
        return cls(file, source_to_element(text, file), read_only)

    @classmethod
    def load(cls, path, read_only: bool = False, name: str | None = None) -> SourceTree:
        path = Path(path)
        return parse_source(path.read_text(), name or path.name, read_only)

    def copy(self) -> SourceTree:
        return SourceTree(self.file, copy.deepcopy(self.root), self.read_only)

    def invalidate(self) -> None:
        self._index.clear()
        self._parents = None

    def nodes(self, tag: str) -> list:
        found = self._index.get(tag)
        if found is None:
            if tag == GAP:
                found = [(b, i) for b in self.root.iter("block")
                         for i in range(len(_stmts(b)) + 1)]
            else:
                found = list(self.root.iter(tag))
            self._index[tag] = found
        return found

    def count(self, tag: str) -> int:
        return len(self.nodes(tag))

    def resolve(self, tag: str, index: int):
        found = self.nodes(tag)
        return found[index] if 0 <= index < len(found) else None

    def parent(self, elem: ET.Element) -> ET.Element:
        if self._parents is None:
            self._parents = {c: p for p in self.root.iter() for c in p}
        return self._parents[elem]

    def render(self) -> str:
        return render(self.root)

    def to_xml(self) -> str:
        return ET.tostring(self.root, encoding="unicode")

    def __repr__(self):
        mode = "ro" if self.read_only else "rw"
        return f"SourceTree({self.file!r}, {mode})"


def _stmts(block: ET.Element) -> list:
    return [c for c in block if c.tag == "stmt"]


def parse_source(text: str, file: str, read_only: bool = False) -> SourceTree:
    """XML if the text looks like markup, otherwise the toy language."""
    if text.lstrip().startswith("<"):
        return SourceTree.from_xml(text, file, read_only)
    return SourceTree.from_source(text, file, read_only)
