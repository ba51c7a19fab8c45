"""16-leaf tree construction, path folding, and the exchange file."""

import hashlib
import random

import pytest

from osnmalab.bits import Bits
from osnmalab.merkle import (
    LEAF_COUNT,
    LeafEntry,
    MerkleTree,
    dump_tree,
    fold_path,
    leaf_hash,
    load_tree,
)


def entries(rng=None, npk_bits=64):
    rng = rng or random.Random(0)
    return [LeafEntry(1, i, Bits(rng.getrandbits(npk_bits), npk_bits)) for i in range(LEAF_COUNT)]


class TestTree:
    def test_shape(self):
        tree = MerkleTree(entries())
        assert [len(level) for level in tree.levels] == [16, 8, 4, 2, 1]
        assert len(tree.root) == 32

    def test_root_oracle(self):
        # Fold every leaf pair manually and compare with the built root.
        items = entries()
        level = [leaf_hash(e) for e in items]
        while len(level) > 1:
            level = [hashlib.sha256(level[i] + level[i + 1]).digest()
                     for i in range(0, len(level), 2)]
        assert MerkleTree(items).root == level[0]

    def test_every_leaf_path_folds_to_root(self):
        tree = MerkleTree(entries())
        for i in range(LEAF_COUNT):
            path = tree.path(i)
            assert len(path) == 4
            assert fold_path(leaf_hash(tree.entries[i]), i, path) == tree.root

    def test_wrong_position_fails(self):
        tree = MerkleTree(entries())
        leaf = leaf_hash(tree.entries[3])
        assert fold_path(leaf, 4, tree.path(3)) != tree.root

    def test_leaf_count_enforced(self):
        with pytest.raises(ValueError):
            MerkleTree(entries()[:15])

    def test_tamper_sweep(self):
        tree = MerkleTree(entries(npk_bits=32))
        entry = tree.entries[6]
        path = tree.path(6)
        for i in range(32):
            bad = LeafEntry(entry.npkt, entry.npkid, entry.npk.flip(i))
            assert fold_path(leaf_hash(bad), 6, path) != tree.root
        for node_i in range(4):
            for byte_i in (0, 31):
                mutated = list(path)
                node = bytearray(mutated[node_i])
                node[byte_i] ^= 1
                mutated[node_i] = bytes(node)
                assert fold_path(leaf_hash(entry), 6, tuple(mutated)) != tree.root


class TestExchangeFile:
    def test_round_trip(self):
        tree = MerkleTree(entries())
        text = dump_tree(tree)
        assert text.startswith(f"root={tree.root.hex()}")
        loaded = load_tree(text)
        assert loaded.root == tree.root
        assert loaded.entries == tree.entries

    def test_stated_root_checked(self):
        tree = MerkleTree(entries())
        lines = dump_tree(tree).splitlines()
        lines[0] = "root=" + "00" * 32
        with pytest.raises(ValueError):
            load_tree("\n".join(lines))
