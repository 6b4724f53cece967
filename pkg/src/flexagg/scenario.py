"""Binary prefix indexing for scenario trees and vertex patterns.

A tree node at depth ``t`` is the bit string of band endpoints chosen in
periods ``1..t`` (bit 0 = lower bound, bit 1 = upper bound), stored as an
integer whose most significant bit is period 1.  Nodes are numbered breadth
first, so depth ``t`` occupies block ids ``2**t - 2 .. 2**(t+1) - 3``.  Two
leaves sharing a length-``t`` prefix therefore map to the same depth-``t``
block, which is how nonanticipativity is enforced.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

DEFAULT_LEAF_CAP = 2**14
DEFAULT_CORNER_CAP = 12

LOWER, UPPER = 0, 1


class ScenarioSizeError(ValueError):
    """An enumeration would exceed its configured cap."""


@dataclass(frozen=True)
class TreeNode:
    depth: int
    bits: int
    index: int
    parent: int  # -1 for depth-1 nodes (their parent is the root state)

    @property
    def side(self) -> int:
        """Band endpoint chosen in this node's own period."""
        return self.bits & 1

    def pattern(self) -> tuple:
        return tuple((self.bits >> (self.depth - 1 - k)) & 1 for k in range(self.depth))


def block_index(depth: int, bits: int) -> int:
    return (1 << depth) - 2 + bits


def n_blocks(T: int) -> int:
    return (1 << (T + 1)) - 2


def _check_depth(T: int, cap: int) -> None:
    if T < 1:
        raise ValueError("tree depth must be >= 1")
    if (1 << T) > cap:
        raise ScenarioSizeError(f"scenario tree with 2^{T} leaves exceeds cap {cap}; use a non-enumerative model")


class ScenarioTree:
    """All nodes of the depth-``T`` binary tree in breadth-first order."""

    def __init__(self, T: int, cap: int = DEFAULT_LEAF_CAP):
        _check_depth(T, cap)
        self.T = T
        self.nodes = enumerate_prefixes(T, cap)

    def __len__(self) -> int:
        return len(self.nodes)

    def level(self, t: int) -> list:
        start = (1 << t) - 2
        return self.nodes[start:start + (1 << t)]

    def leaves(self) -> list:
        return self.level(self.T)

    def ancestor(self, leaf_bits: int, t: int) -> TreeNode:
        """Depth-``t`` node on the path to the leaf ``leaf_bits``."""
        return self.nodes[block_index(t, leaf_bits >> (self.T - t))]


def enumerate_prefixes(T: int, cap: int = DEFAULT_LEAF_CAP) -> list:
    _check_depth(T, cap)
    out = []
    for t in range(1, T + 1):
        for bits in range(1 << t):
            parent = block_index(t - 1, bits >> 1) if t > 1 else -1
            out.append(TreeNode(t, bits, block_index(t, bits), parent))
    return out


def enumerate_soc_corners(n_ess: int, cap: int = DEFAULT_CORNER_CAP) -> list:
    """All ``2**n_ess`` SoC-box corners in lexicographic order (0 = lower)."""
    if n_ess > cap:
        raise ScenarioSizeError(f"{n_ess} ESSs give 2^{n_ess} corners, above cap 2^{cap}")
    return list(itertools.product((LOWER, UPPER), repeat=n_ess))


def enumerate_trajectory_patterns(T: int, cap: int = DEFAULT_LEAF_CAP) -> list:
    """All ``2**T`` lower/upper patterns of a band, lexicographic."""
    _check_depth(T, cap)
    return list(itertools.product((LOWER, UPPER), repeat=T))
