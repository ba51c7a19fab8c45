"""Arbitrary-width bit strings and MSB-first cursor primitives.

Every message in the OSNMA data channel is defined at bit granularity
(40-bit page fields, 104-bit DSM blocks, truncated tags), so all codecs
in this package operate on :class:`Bits` values rather than byte
buffers.  Bit order is most-significant-bit first everywhere, frozen by
golden vectors.
"""

from __future__ import annotations

from typing import Iterator, Union


class BitOverflow(ValueError):
    """A value does not fit in the requested field width."""


class BitUnderrun(ValueError):
    """A read ran past the end of the underlying bit string."""


class Bits:
    """Immutable MSB-first bit string.

    Internally a ``(value, length)`` pair; the most significant bit of
    ``value`` (at ``length`` bits) is bit 0.  Supports concatenation
    with ``+``, slicing, and conversions to/from bytes, hex and binary
    text.
    """

    __slots__ = ("_value", "_length")

    def __init__(self, value: int, length: int) -> None:
        if length < 0:
            raise ValueError(f"negative length {length}")
        if value < 0 or value >> length:
            raise BitOverflow(f"value {value} does not fit in {length} bits")
        self._value = value
        self._length = length

    # -- constructors ---------------------------------------------------

    @classmethod
    def zeros(cls, length: int) -> "Bits":
        return cls(0, length)

    @classmethod
    def from_bytes(cls, data: bytes, length: int | None = None) -> "Bits":
        """Build from bytes, optionally keeping only the first *length* bits."""
        total = len(data) * 8
        if length is None:
            length = total
        if length > total:
            raise BitUnderrun(f"need {length} bits, got {total}")
        value = int.from_bytes(data, "big") >> (total - length)
        return cls(value, length)

    @classmethod
    def from_hex(cls, text: str, length: int | None = None) -> "Bits":
        text = text.strip()
        if length is None:
            length = 4 * len(text)
        return cls.from_bytes(bytes.fromhex(text if len(text) % 2 == 0 else text + "0"), length)

    @classmethod
    def from_binary(cls, text: str) -> "Bits":
        text = text.strip()
        return cls(int(text, 2) if text else 0, len(text))

    # -- conversions ----------------------------------------------------

    @property
    def uint(self) -> int:
        """The bit string as an unsigned integer."""
        return self._value

    def to_bytes(self) -> bytes:
        """Pack MSB-first, zero-padding the final partial byte."""
        nbytes = (self._length + 7) // 8
        return (self._value << (nbytes * 8 - self._length)).to_bytes(nbytes, "big")

    def to_hex(self) -> str:
        """Hex text, zero-padded to whole nibbles."""
        nibbles = (self._length + 3) // 4
        return format(self._value << (nibbles * 4 - self._length), f"0{nibbles}x") if nibbles else ""

    def to_binary(self) -> str:
        return format(self._value, f"0{self._length}b") if self._length else ""

    # -- sequence protocol ----------------------------------------------

    def __len__(self) -> int:
        return self._length

    def __bool__(self) -> bool:
        return self._length > 0

    def __iter__(self) -> Iterator[int]:
        for i in range(self._length):
            yield (self._value >> (self._length - 1 - i)) & 1

    def __getitem__(self, idx: Union[int, slice]) -> Union[int, "Bits"]:
        if isinstance(idx, slice):
            start, stop, step = idx.indices(self._length)
            if step != 1:
                raise ValueError("bit slices must be contiguous")
            width = max(stop - start, 0)
            return Bits((self._value >> (self._length - stop)) & ((1 << width) - 1), width) if width else Bits(0, 0)
        if idx < 0:
            idx += self._length
        if not 0 <= idx < self._length:
            raise IndexError(idx)
        return (self._value >> (self._length - 1 - idx)) & 1

    def __add__(self, other: "Bits") -> "Bits":
        if not isinstance(other, Bits):
            return NotImplemented
        return Bits((self._value << other._length) | other._value, self._length + other._length)

    def flip(self, idx: int) -> "Bits":
        """Return a copy with bit *idx* inverted (tamper helper for tests)."""
        if not 0 <= idx < self._length:
            raise IndexError(idx)
        return Bits(self._value ^ (1 << (self._length - 1 - idx)), self._length)

    # -- value semantics -------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Bits):
            return NotImplemented
        return self._value == other._value and self._length == other._length

    def __hash__(self) -> int:
        return hash((self._value, self._length))

    def __repr__(self) -> str:
        if self._length <= 32:
            return f"Bits('{self.to_binary()}')"
        return f"Bits(0x{self.to_hex()}, {self._length})"


def concat(pieces: "list[Bits] | tuple[Bits, ...]") -> Bits:
    value = 0
    length = 0
    for piece in pieces:
        value = (value << len(piece)) | piece.uint
        length += len(piece)
    return Bits(value, length)


MAX_FIELD_WIDTH = 64


class BitWriter:
    """Append-only cursor building a :class:`Bits` value field by field."""

    def __init__(self) -> None:
        self._value = 0
        self._length = 0

    def write(self, value: int, width: int) -> "BitWriter":
        """Append an unsigned integer as a *width*-bit big-endian field."""
        if not 0 < width <= MAX_FIELD_WIDTH:
            raise ValueError(f"field width {width} outside 1..{MAX_FIELD_WIDTH}")
        if value < 0 or value >> width:
            raise BitOverflow(f"value {value} does not fit in {width} bits")
        self._value = (self._value << width) | value
        self._length += width
        return self

    def write_bits(self, bits: Bits) -> "BitWriter":
        """Append a whole bit string (no width limit)."""
        self._value = (self._value << len(bits)) | bits.uint
        self._length += len(bits)
        return self

    @property
    def bit_position(self) -> int:
        return self._length

    def finish(self) -> Bits:
        return Bits(self._value, self._length)


class BitReader:
    """Forward-only cursor over a :class:`Bits` value."""

    def __init__(self, bits: Bits) -> None:
        self._bits = bits
        self._pos = 0

    def read(self, width: int) -> int:
        """Consume *width* bits and return them as an unsigned integer."""
        if not 0 < width <= MAX_FIELD_WIDTH:
            raise ValueError(f"field width {width} outside 1..{MAX_FIELD_WIDTH}")
        return self.read_bits(width).uint

    def read_bits(self, width: int) -> Bits:
        """Consume *width* bits as a :class:`Bits` value (no width limit)."""
        if width < 0:
            raise ValueError(f"negative width {width}")
        if self._pos + width > len(self._bits):
            raise BitUnderrun(f"read of {width} bits at {self._pos} past end ({len(self._bits)})")
        out = self._bits[self._pos:self._pos + width]
        self._pos += width
        return out  # type: ignore[return-value]

    @property
    def bit_position(self) -> int:
        return self._pos

    @property
    def remaining(self) -> int:
        return len(self._bits) - self._pos

    def at_end(self) -> bool:
        return self._pos == len(self._bits)
