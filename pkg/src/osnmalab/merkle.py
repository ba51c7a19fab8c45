"""16-leaf Merkle tree authenticating broadcast public keys.

The tree is built once from 16 (npkt, npkid, npk) leaf entries, its
256-bit root installed out-of-band into receivers, and the 4 sibling
nodes accompanying a broadcast key let the receiver fold back to the
root.  Leaf hash is SHA-256 over the packed npkt/npkid nibbles followed
by the key bits; inner nodes are SHA-256(left || right).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .bits import Bits, BitWriter

LEAF_COUNT = 16
TREE_DEPTH = 4
NODE_BITS = 256
PATH_BITS = TREE_DEPTH * NODE_BITS  # 1024


@dataclass(frozen=True)
class LeafEntry:
    """One key slot: new-public-key type, slot id, and the key bits."""

    npkt: int
    npkid: int
    npk: Bits

    def __post_init__(self) -> None:
        if not 0 <= self.npkt < 16:
            raise ValueError(f"npkt {self.npkt} outside 0..15")
        if not 0 <= self.npkid < LEAF_COUNT:
            raise ValueError(f"npkid {self.npkid} outside 0..{LEAF_COUNT - 1}")


def leaf_hash(entry: LeafEntry) -> bytes:
    packed = BitWriter().write(entry.npkt, 4).write(entry.npkid, 4).finish()
    return hashlib.sha256(packed.to_bytes() + entry.npk.to_bytes()).digest()


def _node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(left + right).digest()


class MerkleTree:
    """Depth-4 binary hash tree over exactly 16 leaf entries."""

    def __init__(self, entries: list[LeafEntry]) -> None:
        if len(entries) != LEAF_COUNT:
            raise ValueError(f"got {len(entries)} leaves, expected {LEAF_COUNT}")
        ids = [e.npkid for e in entries]
        if ids != list(range(LEAF_COUNT)):
            raise ValueError("leaf entries must be ordered by npkid 0..15")
        self.entries = tuple(entries)
        # levels[0] = leaf hashes .. levels[4] = [root]
        self.levels: list[list[bytes]] = [[leaf_hash(e) for e in entries]]
        for _ in range(TREE_DEPTH):
            below = self.levels[-1]
            self.levels.append([_node_hash(below[i], below[i + 1]) for i in range(0, len(below), 2)])

    @property
    def root(self) -> bytes:
        return self.levels[TREE_DEPTH][0]

    def path(self, npkid: int) -> tuple[bytes, bytes, bytes, bytes]:
        """Sibling nodes from leaf level up, for folding back to the root."""
        if not 0 <= npkid < LEAF_COUNT:
            raise ValueError(f"npkid {npkid} outside 0..{LEAF_COUNT - 1}")
        siblings = []
        position = npkid
        for level in range(TREE_DEPTH):
            siblings.append(self.levels[level][position ^ 1])
            position //= 2
        return tuple(siblings)  # type: ignore[return-value]


def fold_path(leaf: bytes, npkid: int, path: tuple[bytes, ...]) -> bytes:
    """Recompute the root from a leaf hash and its sibling path."""
    node = leaf
    position = npkid
    for sibling in path:
        node = _node_hash(node, sibling) if position % 2 == 0 else _node_hash(sibling, node)
        position //= 2
    return node


def dump_tree(tree: MerkleTree) -> str:
    """Exchange format standing in for the service-centre download."""
    lines = [f"root={tree.root.hex()}"]
    for entry in tree.entries:
        lines.append(f"leaf {entry.npkid} npkt={entry.npkt} npk={entry.npk.to_hex()}")
    return "\n".join(lines) + "\n"


def load_tree(text: str) -> MerkleTree:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("root="):
        raise ValueError("tree file must start with a root= line")
    stated_root = bytes.fromhex(lines[0].split("=", 1)[1])
    entries = []
    for line in lines[1:]:
        word, npkid, npkt_kv, npk_kv = line.split()
        if word != "leaf":
            raise ValueError(f"unexpected line {line!r}")
        npk_hex = npk_kv.split("=", 1)[1]
        entries.append(LeafEntry(int(npkt_kv.split("=", 1)[1]), int(npkid), Bits.from_hex(npk_hex)))
    tree = MerkleTree(entries)
    if tree.root != stated_root:
        raise ValueError("stated root does not match the leaves")
    return tree
