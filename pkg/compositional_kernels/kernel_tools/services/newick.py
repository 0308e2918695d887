"""Newick tree reader.

Dialect: nested parentheses, optional node names (bare or single-quoted,
'' escapes a quote inside a quoted name), optional ``:length`` suffixes,
``[...]`` comments anywhere between tokens, terminating ``;``. Missing
branch lengths default to 1.0 and the root's length is always 0. NHX
extensions are not interpreted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..core.errors import DuplicateLeafName, NewickParseError, UnknownLeaf

logger = logging.getLogger(__name__)

DEFAULT_BRANCH_LENGTH = 1.0
_DELIMITERS = set("(),:;[")


@dataclass
class TreeNode:
    name: Optional[str] = None
    length: Optional[float] = None
    parent: int = -1
    children: List[int] = field(default_factory=list)
    offset: int = 0

    @property
    def is_leaf(self) -> bool:
        return not self.children


class PhyloTree:
    """Rooted tree; node 0 is the root. Leaves are addressed by name."""

    def __init__(self, nodes: List[TreeNode]) -> None:
        self._nodes: Tuple[TreeNode, ...] = tuple(nodes)
        self._leaf_index: Dict[str, int] = {}
        for idx, node in enumerate(self._nodes):
            if node.is_leaf:
                if node.name in self._leaf_index:
                    raise DuplicateLeafName(f"leaf name '{node.name}' occurs more than once")
                self._leaf_index[node.name] = idx

    @property
    def leaf_names(self) -> List[str]:
        """Leaf names in the order they appear in the Newick text."""
        return list(self._leaf_index)

    @property
    def n_nodes(self) -> int:
        return len(self._nodes)

    def node(self, idx: int) -> TreeNode:
        return self._nodes[idx]

    def leaf(self, name: str) -> int:
        try:
            return self._leaf_index[name]
        except KeyError:
            raise UnknownLeaf(f"leaf '{name}' is not in the tree") from None

    def branch_length(self, idx: int) -> float:
        if idx == 0:
            return 0.0
        length = self._nodes[idx].length
        return DEFAULT_BRANCH_LENGTH if length is None else length

    def lineage(self, idx: int) -> List[int]:
        """Node ids from ``idx`` up to and including the root."""
        path = [idx]
        while self._nodes[path[-1]].parent >= 0:
            path.append(self._nodes[path[-1]].parent)
        return path

    def depth(self, idx: int) -> float:
        """Summed branch length from the root to ``idx``."""
        return sum(self.branch_length(k) for k in self.lineage(idx))


class _NewickReader:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def fail(self, expected: str, at: Optional[int] = None) -> NewickParseError:
        at = self.pos if at is None else at
        found = self.text[at] if at < len(self.text) else ""
        return NewickParseError(len(self.text[:at].encode("utf-8")), expected, found)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_blank(self) -> None:
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isspace():
                self.pos += 1
            elif ch == "[":
                end = self.text.find("]", self.pos)
                if end < 0:
                    raise self.fail("']' closing the comment", len(self.text))
                self.pos = end + 1
            else:
                break

    def read_name(self) -> Optional[str]:
        if self.peek() == "'":
            self.pos += 1
            chars: List[str] = []
            while True:
                if self.pos >= len(self.text):
                    raise self.fail("closing quote", len(self.text))
                ch = self.text[self.pos]
                if ch == "'":
                    if self.text[self.pos + 1:self.pos + 2] == "'":
                        chars.append("'")
                        self.pos += 2
                        continue
                    self.pos += 1
                    return "".join(chars)
                chars.append(ch)
                self.pos += 1
        start = self.pos
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in _DELIMITERS or ch == "'" or ch.isspace():
                break
            self.pos += 1
        return self.text[start:self.pos] or None

    def read_length(self) -> float:
        self.skip_blank()
        start = self.pos
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in _DELIMITERS or ch.isspace():
                break
            self.pos += 1
        token = self.text[start:self.pos]
        try:
            value = float(token)
        except ValueError:
            raise self.fail("branch length", start) from None
        if not value >= 0:
            raise self.fail("nonnegative branch length", start)
        return value


def parse_newick(text: str) -> PhyloTree:
    """Parse one Newick tree; raises NewickParseError with the byte offset of the problem."""
    reader = _NewickReader(text)
    nodes: List[TreeNode] = [TreeNode(offset=0)]
    current = 0
    depth = 0

    def add_child(parent: int) -> int:
        nodes.append(TreeNode(parent=parent, offset=reader.pos))
        nodes[parent].children.append(len(nodes) - 1)
        return len(nodes) - 1

    reader.skip_blank()
    nodes[0].offset = reader.pos
    while True:
        reader.skip_blank()
        ch = reader.peek()
        if ch == "":
            raise reader.fail("';'")
        if ch == "(":
            if nodes[current].name is not None or nodes[current].children:
                raise reader.fail("',' or ')'")
            reader.pos += 1
            depth += 1
            current = add_child(current)
            reader.skip_blank()
            nodes[current].offset = reader.pos
        elif ch == ",":
            if depth == 0:
                raise reader.fail("';'")
            reader.pos += 1
            current = add_child(nodes[current].parent)
            reader.skip_blank()
            nodes[current].offset = reader.pos
        elif ch == ")":
            if depth == 0:
                raise reader.fail("';'")
            reader.pos += 1
            depth -= 1
            current = nodes[current].parent
        elif ch == ":":
            if nodes[current].length is not None:
                raise reader.fail("',' or ')' or ';'")
            reader.pos += 1
            nodes[current].length = reader.read_length()
        elif ch == ";":
            if depth != 0:
                raise reader.fail("')'")
            reader.pos += 1
            reader.skip_blank()
            if reader.pos != len(text):
                raise reader.fail("end of input")
            break
        else:
            if nodes[current].name is not None or nodes[current].length is not None:
                raise reader.fail("',' or ')' or ';'")
            nodes[current].name = reader.read_name()

    for node in nodes:
        if node.is_leaf and not node.name:
            raise NewickParseError(len(text[:node.offset].encode("utf-8")), "leaf name", text[node.offset:node.offset + 1])
    tree = PhyloTree(nodes)
    logger.debug("parsed Newick tree with %d nodes, %d leaves", tree.n_nodes, len(tree.leaf_names))
    return tree


def read_newick(path: str) -> PhyloTree:
    with open(path, "r", encoding="utf-8") as f:
        return parse_newick(f.read())
