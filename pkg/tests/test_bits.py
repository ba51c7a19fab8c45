"""Bit-string and cursor primitives, checked against string-slicing oracles."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osnmalab.bits import BitOverflow, BitReader, BitUnderrun, Bits, BitWriter, concat


def oracle_bits(value: int, width: int) -> str:
    return format(value, f"0{width}b")


class TestBits:
    def test_write_five_in_four_bits(self):
        assert BitWriter().write(5, 4).finish().to_binary() == "0101"

    def test_binary_oracle_random(self):
        rng = random.Random(1)
        for _ in range(200):
            width = rng.randrange(1, 130)
            value = rng.getrandbits(width)
            assert Bits(value, width).to_binary() == oracle_bits(value, width)

    def test_from_bytes_to_bytes(self):
        data = bytes(range(16))
        assert Bits.from_bytes(data).to_bytes() == data
        assert Bits.from_bytes(data, 40) == Bits.from_hex("0001020304", 40)

    def test_to_bytes_pads_tail(self):
        assert Bits.from_binary("1").to_bytes() == b"\x80"
        assert Bits.from_binary("111111111").to_bytes() == b"\xff\x80"

    def test_hex_round_trip(self):
        b = Bits.from_hex("deadbeef42", 40)
        assert b.to_hex() == "deadbeef42"
        assert len(b) == 40

    def test_concat_and_slice(self):
        a = Bits.from_binary("1010")
        b = Bits.from_binary("0110")
        joined = a + b
        assert joined.to_binary() == "10100110"
        assert joined[:4] == a and joined[4:] == b
        assert joined[2] == 1
        assert concat([a, b, a]).to_binary() == "101001101010"

    def test_flip(self):
        b = Bits.from_binary("0000")
        assert b.flip(2).to_binary() == "0010"
        assert b.flip(2).flip(2) == b

    def test_value_range_enforced(self):
        with pytest.raises(BitOverflow):
            Bits(16, 4)
        with pytest.raises(BitOverflow):
            Bits(-1, 4)

    @given(st.integers(min_value=0, max_value=2**64 - 1), st.integers(min_value=1, max_value=64))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_property(self, value, width):
        value &= (1 << width) - 1
        b = Bits(value, width)
        assert Bits.from_binary(b.to_binary()) == b
        assert Bits.from_bytes(b.to_bytes(), width) == b


class TestCursor:
    def test_write_then_read(self):
        w = BitWriter()
        w.write(5, 4).write(0xABC, 12).write(1, 1)
        r = BitReader(w.finish())
        assert (r.read(4), r.read(12), r.read(1)) == (5, 0xABC, 1)
        assert r.at_end()

    def test_overflow(self):
        with pytest.raises(BitOverflow):
            BitWriter().write(16, 4)
        with pytest.raises(BitOverflow):
            BitWriter().write(-1, 8)

    def test_width_limits(self):
        with pytest.raises(ValueError):
            BitWriter().write(0, 0)
        with pytest.raises(ValueError):
            BitWriter().write(0, 65)
        with pytest.raises(ValueError):
            BitReader(Bits.zeros(128)).read(65)

    def test_underrun(self):
        r = BitReader(Bits.zeros(8))
        r.read(8)
        with pytest.raises(BitUnderrun):
            r.read(1)

    def test_field_sequence_104_bits(self):
        # Random field layouts totalling 104 bits parse back identically.
        rng = random.Random(42)
        for _ in range(300):
            widths = []
            total = 104
            while total:
                w = min(rng.randrange(1, 33), total)
                widths.append(w)
                total -= w
            values = [rng.getrandbits(w) for w in widths]
            writer = BitWriter()
            for v, w in zip(values, widths):
                writer.write(v, w)
            blob = writer.finish()
            assert len(blob) == 104
            reader = BitReader(blob)
            assert [reader.read(w) for w in widths] == values

    def test_wide_bits_io(self):
        key = Bits.from_bytes(bytes(range(32)))
        w = BitWriter().write(3, 2)
        w.write_bits(key)
        r = BitReader(w.finish())
        assert r.read(2) == 3
        assert r.read_bits(256) == key
