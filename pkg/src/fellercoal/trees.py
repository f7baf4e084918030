"""Ultrametric coalescent trees and their text serialisations."""
from __future__ import annotations

import io
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

FLOAT_FMT = "{:.17g}"


@dataclass(frozen=True)
class CoalescentTree:
    """Rooted binary tree with all leaves at time 0.

    Leaves are numbered ``1..leaf_count``; the internal node created by the
    ``i``-th coalescence (most recent first) is ``leaf_count + 1 + i``.
    ``coalescence_times`` increase going back from the present and
    ``merges[i]`` holds the two child node ids joined at
    ``coalescence_times[i]``.  ``origin_time``, when present, is the birth
    time of the single founder above the root.
    """

    leaf_count: int
    coalescence_times: tuple
    merges: tuple
    origin_time: float | None = None

    def __post_init__(self):
        n = self.leaf_count
        if n < 1:
            raise DomainError("a tree needs at least one leaf")
        times = np.asarray(self.coalescence_times, dtype=float)
        if len(times) != n - 1 or len(self.merges) != n - 1:
            raise DomainError(f"a tree with {n} leaves has {n - 1} coalescences")
        if np.any(times <= 0) or np.any(np.diff(times) <= 0):
            raise DomainError("coalescence times must be positive and strictly increasing")
        seen = set()
        for i, (a, b) in enumerate(self.merges):
            for child in (a, b):
                if child in seen or not 1 <= child <= n + i:
                    raise DomainError(f"invalid merge {a, b} at event {i}")
                seen.add(child)
        if self.origin_time is not None and n > 1 and self.origin_time <= times[-1]:
            raise DomainError("origin must predate the root")

    @property
    def internal_node_count(self) -> int:
        return self.leaf_count - 1

    def node_times(self) -> dict:
        times = {leaf: 0.0 for leaf in range(1, self.leaf_count + 1)}
        for i, tau in enumerate(self.coalescence_times):
            times[self.leaf_count + 1 + i] = float(tau)
        return times

    def to_newick(self) -> str:
        """Newick string with branch lengths in time units and a terminating ``;``."""
        n = self.leaf_count
        if n == 1:
            return "1;"
        times = self.node_times()
        text = {leaf: str(leaf) for leaf in range(1, n + 1)}
        for i, (a, b) in enumerate(self.merges):
            node = n + 1 + i
            parts = []
            for child in (a, b):
                length = times[node] - times[child]
                parts.append(f"{text.pop(child)}:{FLOAT_FMT.format(length)}")
            text[node] = "(" + ",".join(parts) + ")"
        (root_text,) = text.values()
        return root_text + ";"

    def to_csv(self) -> str:
        """Rows of ``event_index, j_before, tau``: ``j_before`` lineages exist just below ``tau``."""
        buf = io.StringIO()
        buf.write("event_index,j_before,tau\n")
        for i, tau in enumerate(self.coalescence_times):
            buf.write(f"{i},{self.leaf_count - i},{FLOAT_FMT.format(tau)}\n")
        return buf.getvalue()


_TOKEN = re.compile(r"\s*([(),:;]|[^(),:;\s]+)")


def parse_newick(text: str):
    """Parse a Newick string into ``(leaf_heights, internal_heights)``.

    Heights are measured from the deepest leaf.  Only the subset of Newick
    written by :meth:`CoalescentTree.to_newick` is supported.  Parsing is
    iterative, so caterpillar-shaped trees of any depth are fine.
    """
    tokens = _TOKEN.findall(text.strip())
    if not tokens or tokens[-1] != ";":
        raise ValueError("Newick string must end with ';'")
    # nodes are created in preorder, so a parent always precedes its children
    parent, length, labels = [], [], []
    open_nodes = []
    last = None
    want_length = False
    for pos, tok in enumerate(tokens[:-1]):
        if want_length:
            try:
                length[last] = float(tok)
            except ValueError:
                raise ValueError(f"bad branch length {tok!r} at token {pos}") from None
            want_length = False
        elif tok == "(":
            if last is not None:
                raise ValueError(f"unexpected '(' at token {pos}")
            parent.append(open_nodes[-1] if open_nodes else -1)
            length.append(0.0)
            labels.append(None)
            open_nodes.append(len(parent) - 1)
        elif tok in ",)":
            if not open_nodes or last is None:
                raise ValueError(f"unexpected {tok!r} at token {pos}")
            last = open_nodes.pop() if tok == ")" else None
        elif tok == ":":
            if last is None:
                raise ValueError(f"branch length without a node at token {pos}")
            want_length = True
        else:
            if last is not None:
                raise ValueError(f"unexpected label {tok!r} at token {pos}")
            parent.append(open_nodes[-1] if open_nodes else -1)
            length.append(0.0)
            labels.append(tok)
            last = len(parent) - 1
    if open_nodes or want_length or parent.count(-1) != 1:
        raise ValueError("unbalanced or incomplete Newick string")

    depth = np.zeros(len(parent))
    for i in range(1, len(parent)):
        depth[i] = depth[parent[i]] + length[i]
    leaf_idx = [i for i, lab in enumerate(labels) if lab is not None]
    deepest = max(depth[i] for i in leaf_idx)
    leaf_heights = {labels[i]: float(deepest - depth[i]) for i in leaf_idx}
    internal_heights = sorted(float(deepest - depth[i]) for i, lab in enumerate(labels) if lab is None)
    return leaf_heights, internal_heights
