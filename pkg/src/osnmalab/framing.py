"""I/NAV page and subframe framing for the OSNMA data channel.

Odd pages carry a 40-bit reserved field; 15 of them make a 30-second
subframe whose OSNMA content splits into 120 bits of HKROOT transport
and 480 bits of MACK.  The per-page split is 8 HKROOT bits followed by
32 MACK bits, the only even distribution consistent with the section
totals.  Even pages carry no OSNMA data and are not modelled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .bits import Bits, concat

PAGE_SECONDS = 2
SUBFRAME_SECONDS = 30
FRAME_SECONDS = 720
WEEK_SECONDS = 604800
SUBFRAMES_PER_WEEK = WEEK_SECONDS // SUBFRAME_SECONDS

PAGE_FIELD_BITS = 40
PAGES_PER_SUBFRAME = 15
HKROOT_BITS_PER_PAGE = 8
MACK_BITS_PER_PAGE = 32
HKROOT_SECTION_BITS = HKROOT_BITS_PER_PAGE * PAGES_PER_SUBFRAME   # 120
MACK_SECTION_BITS = MACK_BITS_PER_PAGE * PAGES_PER_SUBFRAME       # 480


class WrongPageCount(ValueError):
    """A subframe needs exactly 15 page fields."""


class FieldLengthError(ValueError):
    """A page field is not exactly 40 bits."""


@dataclass(frozen=True)
class GstTime:
    """Galileo System Time as (week number, time of week in seconds)."""

    week: int
    tow_seconds: int

    def __post_init__(self) -> None:
        if self.week < 0:
            raise ValueError(f"negative week {self.week}")
        if not 0 <= self.tow_seconds < WEEK_SECONDS:
            raise ValueError(f"tow {self.tow_seconds} outside [0, {WEEK_SECONDS})")

    @property
    def subframe_index(self) -> int:
        """Subframe number within the week; requires a 30 s boundary."""
        if self.tow_seconds % SUBFRAME_SECONDS:
            raise ValueError(f"tow {self.tow_seconds} is not a subframe boundary")
        return self.tow_seconds // SUBFRAME_SECONDS

    @property
    def total_subframes(self) -> int:
        """Subframe count since week 0, used as the simulator clock."""
        return self.week * SUBFRAMES_PER_WEEK + self.subframe_index

    @classmethod
    def from_subframes(cls, total: int) -> "GstTime":
        if total < 0:
            raise ValueError(f"negative subframe count {total}")
        return cls(total // SUBFRAMES_PER_WEEK, (total % SUBFRAMES_PER_WEEK) * SUBFRAME_SECONDS)

    def add_subframes(self, count: int) -> "GstTime":
        return GstTime.from_subframes(self.total_subframes + count)


@dataclass(frozen=True)
class PageField:
    """The 40-bit OSNMA field of one odd I/NAV page."""

    bits: Bits

    def __post_init__(self) -> None:
        if len(self.bits) != PAGE_FIELD_BITS:
            raise FieldLengthError(f"page field is {len(self.bits)} bits, expected {PAGE_FIELD_BITS}")


@dataclass(frozen=True)
class SubframePayload:
    """OSNMA content of one subframe: 120 HKROOT bits + 480 MACK bits."""

    hkroot_bits: Bits
    mack_bits: Bits

    def __post_init__(self) -> None:
        if len(self.hkroot_bits) != HKROOT_SECTION_BITS:
            raise FieldLengthError(f"hkroot section is {len(self.hkroot_bits)} bits")
        if len(self.mack_bits) != MACK_SECTION_BITS:
            raise FieldLengthError(f"mack section is {len(self.mack_bits)} bits")


def split_page_field(field: PageField) -> tuple[Bits, Bits]:
    """Split one page field into its 8 HKROOT and 32 MACK bits."""
    return field.bits[:HKROOT_BITS_PER_PAGE], field.bits[HKROOT_BITS_PER_PAGE:]


def join_page_field(hkroot_part: Bits, mack_part: Bits) -> PageField:
    """Inverse of :func:`split_page_field`."""
    if len(hkroot_part) != HKROOT_BITS_PER_PAGE or len(mack_part) != MACK_BITS_PER_PAGE:
        raise FieldLengthError(f"parts are {len(hkroot_part)}+{len(mack_part)} bits, expected 8+32")
    return PageField(hkroot_part + mack_part)


def assemble_subframe(fields: Sequence[PageField]) -> SubframePayload:
    """Concatenate 15 page fields into the subframe's HKROOT and MACK sections."""
    if len(fields) != PAGES_PER_SUBFRAME:
        raise WrongPageCount(f"got {len(fields)} page fields, expected {PAGES_PER_SUBFRAME}")
    parts = [split_page_field(f) for f in fields]
    return SubframePayload(concat([p[0] for p in parts]), concat([p[1] for p in parts]))


def disassemble_subframe(payload: SubframePayload) -> list[PageField]:
    """Inverse of :func:`assemble_subframe`."""
    fields = []
    for i in range(PAGES_PER_SUBFRAME):
        hk = payload.hkroot_bits[i * HKROOT_BITS_PER_PAGE:(i + 1) * HKROOT_BITS_PER_PAGE]
        mk = payload.mack_bits[i * MACK_BITS_PER_PAGE:(i + 1) * MACK_BITS_PER_PAGE]
        fields.append(join_page_field(hk, mk))
    return fields


def load_page_vectors(text: str) -> list[list[PageField]]:
    """Parse golden-vector text: one 40-bit hex field per line, blank line between subframes."""
    subframes: list[list[PageField]] = []
    current: list[PageField] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            if current:
                subframes.append(current)
                current = []
            continue
        current.append(PageField(Bits.from_hex(line, PAGE_FIELD_BITS)))
    if current:
        subframes.append(current)
    return subframes


def dump_page_vectors(subframes: Iterable[Sequence[PageField]]) -> str:
    """Inverse of :func:`load_page_vectors`."""
    blocks = ["\n".join(field.bits.to_hex() for field in sf) for sf in subframes]
    return "\n\n".join(blocks) + "\n"
