"""TESLA key chains, truncated-MAC tags, and the MACK message codec.

A chain is generated backwards from a secret seed key by repeatedly
applying a one-way derivation; the final key (index 0) is the root key,
distributed signed and never used to produce tags.  Receivers verify a
later-disclosed key by hashing it forward until a previously trusted
key (root or earlier verified key) is reached, which also bridges any
run of lost disclosures.

The derivation function is::

    K[i-1] = truncate(H(K[i] || CID || GST[i]))

where CID is one byte of chain id and GST[i] is the 32-bit week/time
(WN 12 bits, TOW 20 bits) of the subframe where key index ``i``
applies.  The salt layout is a convention of this package, frozen by
golden vectors.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .bits import BitReader, Bits, BitWriter
from .framing import GstTime

MACK_BITS = 480
TAG_INFO_BITS = 16
MACK_HEADER_EXTRA_BITS = 16      # 12-bit MAC sequence + 4 reserved bits
MIN_TAG_COUNT = 4
MAX_TAG_COUNT = 10

KEY_SIZES = (96, 104, 112, 120, 128, 160, 192, 224, 256)
TAG_SIZES = (20, 24, 28, 32, 40)
DISCLOSURE_DELAYS = (1, 10)

ADKD_NAV = 0        # ephemeris + clock payload
ADKD_TIMING = 4     # timing payload
ADKD_SLOW = 12      # slow MAC, 10-subframe disclosure delay
KNOWN_ADKD = (ADKD_NAV, ADKD_TIMING, ADKD_SLOW)


class BadSeedLength(ValueError):
    """Seed key length does not match the configured key size."""


class UnsupportedHash(ValueError):
    """Hash function name outside the HF code space."""


class UnsupportedMacFunction(ValueError):
    """MAC function name outside the MF code space."""


class IndexOrder(ValueError):
    """Key verification requires a candidate index above the trusted one."""


class RootKeyUse(ValueError):
    """The root key (index 0) must never produce tags."""


class ChainExhausted(ValueError):
    """Requested key index outside the chain's 0..N range."""


class TooManyTags(ValueError):
    """More tag entries than the MACK layout can carry."""


class BadLength(ValueError):
    """MACK input is not exactly 480 bits."""


class MalformedPadding(ValueError):
    """Reserved or padding bits are not zero."""


class HashAlgo(enum.Enum):
    SHA256 = "SHA-256"
    SHA3_256 = "SHA3-256"


class MacAlgo(enum.Enum):
    HMAC_SHA256 = "HMAC-SHA256"
    CMAC_AES = "CMAC-AES"


_HASHERS: dict[HashAlgo, Callable[[bytes], "hashlib._Hash"]] = {
    HashAlgo.SHA256: hashlib.sha256,
    HashAlgo.SHA3_256: hashlib.sha3_256,
}


def hash_algo(name: str) -> HashAlgo:
    for algo in HashAlgo:
        if algo.value == name:
            return algo
    raise UnsupportedHash(f"unknown hash function {name!r}")


def mac_algo(name: str) -> MacAlgo:
    for algo in MacAlgo:
        if algo.value == name:
            return algo
    raise UnsupportedMacFunction(f"unknown MAC function {name!r}")


@dataclass(frozen=True)
class TeslaParams:
    """Chain configuration mirroring the DSM-KROOT HF/MF/KS/TS fields.

    ``scaled=True`` lifts the standard-grid size checks so that
    deliberately weakened tags (e.g. 10-bit) can be used in forgery
    experiments; structural checks still apply.
    """

    key_bits: int
    tag_bits: int
    chain_length: int
    start: GstTime = field(default_factory=lambda: GstTime(0, 0))
    hash_fn: HashAlgo = HashAlgo.SHA256
    mac_fn: MacAlgo = MacAlgo.HMAC_SHA256
    chain_id: int = 0
    scaled: bool = False

    def __post_init__(self) -> None:
        if not self.scaled:
            if self.key_bits not in KEY_SIZES:
                raise ValueError(f"key size {self.key_bits} not in {KEY_SIZES}")
            if self.tag_bits not in TAG_SIZES:
                raise ValueError(f"tag size {self.tag_bits} not in {TAG_SIZES}")
        else:
            if not 8 <= self.key_bits <= 256 or self.key_bits % 8:
                raise ValueError(f"scaled key size {self.key_bits} must be a byte multiple in 8..256")
            if not 1 <= self.tag_bits <= 40:
                raise ValueError(f"scaled tag size {self.tag_bits} outside 1..40")
        if self.chain_length < 1:
            raise ValueError(f"chain length {self.chain_length} < 1")
        if not 0 <= self.chain_id <= 3:
            raise ValueError(f"chain id {self.chain_id} outside 0..3")

    @property
    def tag_count(self) -> int:
        """Tags per MACK message: floor((480 - l_K) / (l_T + 16))."""
        n = (MACK_BITS - self.key_bits) // (self.tag_bits + TAG_INFO_BITS)
        if not self.scaled and not MIN_TAG_COUNT <= n <= MAX_TAG_COUNT:
            raise ValueError(f"tag count {n} outside {MIN_TAG_COUNT}..{MAX_TAG_COUNT}")
        return n


def _gst32(gst: GstTime) -> bytes:
    return BitWriter().write(gst.week % 4096, 12).write(gst.tow_seconds, 20).finish().to_bytes()


def derive_previous(key: Bits, index: int, params: TeslaParams) -> Bits:
    """One derivation step: key at ``index`` -> key at ``index - 1``."""
    if index < 1:
        raise IndexOrder(f"cannot derive below index 0 (got index {index})")
    salt = bytes([params.chain_id]) + _gst32(params.start.add_subframes(index))
    digest = _HASHERS[params.hash_fn](key.to_bytes() + salt).digest()
    return Bits.from_bytes(digest, params.key_bits)


@dataclass(frozen=True)
class TeslaChain:
    """A fully derived chain; ``keys[i]`` is the key at index ``i`` (0 = root)."""

    params: TeslaParams
    keys: tuple[Bits, ...]

    @property
    def root_key(self) -> Bits:
        return self.keys[0]

    @property
    def seed_key(self) -> Bits:
        return self.keys[-1]

    def key_at(self, index: int) -> Bits:
        if not 0 <= index <= self.params.chain_length:
            raise ChainExhausted(f"index {index} outside 0..{self.params.chain_length}")
        return self.keys[index]

    def signing_key(self, index: int) -> Bits:
        """Key for producing tags; index 0 (root) is rejected."""
        if index == 0:
            raise RootKeyUse("the root key never signs messages")
        return self.key_at(index)

    @property
    def start_subframe(self) -> int:
        """Absolute subframe where key index 0 applies."""
        return self.params.start.total_subframes

    def index_for_subframe(self, subframe: int) -> int:
        return subframe - self.start_subframe


def generate_chain(params: TeslaParams, seed: Bits) -> TeslaChain:
    """Derive the full chain from the secret seed key (index N) down to the root."""
    if len(seed) != params.key_bits:
        raise BadSeedLength(f"seed is {len(seed)} bits, expected {params.key_bits}")
    keys = [seed]
    for index in range(params.chain_length, 0, -1):
        keys.append(derive_previous(keys[-1], index, params))
    keys.reverse()
    return TeslaChain(params, tuple(keys))


def verify_key(candidate: Bits, index: int, trusted: tuple[Bits, int], params: TeslaParams) -> bool:
    """Check that hashing *candidate* down from *index* reaches the trusted key.

    ``trusted`` is a previously authenticated (key, index) pair - the
    root from DSM-KROOT or any earlier verified key; gaps from lost
    disclosures are bridged by iterating the derivation.
    """
    trusted_key, trusted_index = trusted
    if index <= trusted_index:
        raise IndexOrder(f"candidate index {index} must exceed trusted index {trusted_index}")
    if len(candidate) != params.key_bits:
        return False
    key = candidate
    for i in range(index, trusted_index, -1):
        key = derive_previous(key, i, params)
    return key == trusted_key


# -- tags ---------------------------------------------------------------


@dataclass(frozen=True)
class TagInfo:
    """16-bit tag metadata: PRN(8) + ADKD(4) + COP(4)."""

    prn: int
    adkd: int
    cop: int

    def __post_init__(self) -> None:
        if not 0 <= self.prn < 256:
            raise ValueError(f"prn {self.prn} outside 0..255")
        if not 0 <= self.adkd < 16:
            raise ValueError(f"adkd {self.adkd} outside 0..15")
        if not 0 <= self.cop < 16:
            raise ValueError(f"cop {self.cop} outside 0..15")

    def to_bits(self) -> Bits:
        return BitWriter().write(self.prn, 8).write(self.adkd, 4).write(self.cop, 4).finish()

    @classmethod
    def from_bits(cls, bits: Bits) -> "TagInfo":
        r = BitReader(bits)
        return cls(r.read(8), r.read(4), r.read(4))


@dataclass(frozen=True)
class Tag:
    """A truncated MAC over tag metadata and authenticated data."""

    tag_bits: Bits
    info: TagInfo


def _mac(key: bytes, message: bytes, algo: MacAlgo) -> bytes:
    # CMAC-AES keeps its MF codepoint but is computed by the same
    # HMAC provider: the 96-bit chain keys are not valid AES key sizes.
    if algo not in (MacAlgo.HMAC_SHA256, MacAlgo.CMAC_AES):
        raise UnsupportedMacFunction(f"unknown MAC function {algo!r}")
    return hmac.new(key, message, hashlib.sha256).digest()


def make_tag(key: Bits, data: bytes, params: TeslaParams, info: TagInfo) -> Tag:
    """Truncate MAC(key, info || data) to the configured tag length."""
    if len(key) != params.key_bits:
        raise BadSeedLength(f"key is {len(key)} bits, expected {params.key_bits}")
    digest = _mac(key.to_bytes(), info.to_bits().to_bytes() + data, params.mac_fn)
    return Tag(Bits.from_bytes(digest, params.tag_bits), info)


def tag_matches(tag: Tag, key: Bits, data: bytes, params: TeslaParams) -> bool:
    return make_tag(key, data, params, tag.info).tag_bits == tag.tag_bits


# -- MACK message -------------------------------------------------------


EMPTY_SLOT = TagInfo(0, 0, 0)


@dataclass(frozen=True)
class MackMessage:
    """One 480-bit MACK section.

    The header carries the first tag without its metadata (the
    receiver reconstructs it by convention), a 12-bit MAC sequence
    value and 4 reserved bits; the body carries ``tag_count - 1``
    (tag, info) pairs, the disclosed key and zero padding.
    """

    header_tag: Bits
    macseq: int
    tags: tuple[Tag, ...]
    key: Bits


def header_tag_info(prn: int, adkd: int = ADKD_NAV) -> TagInfo:
    """Implicit metadata of the header tag: the transmitter's own data."""
    return TagInfo(prn, adkd, 0)


def compute_macseq(key: Bits, tags: Sequence[Tag], params: TeslaParams) -> int:
    """12-bit MAC over the tag metadata sequence (sequence-binding convention)."""
    infos = b"".join(t.info.to_bits().to_bytes() for t in tags)
    digest = _mac(key.to_bytes(), b"macseq" + infos, params.mac_fn)
    return Bits.from_bytes(digest, 12).uint


def serialize_mack(message: MackMessage, params: TeslaParams) -> Bits:
    n_t = params.tag_count
    if len(message.tags) != n_t - 1:
        raise TooManyTags(f"{len(message.tags) + 1} tags for a {n_t}-slot layout")
    w = BitWriter()
    w.write_bits(message.header_tag)
    w.write(message.macseq, 12)
    w.write(0, 4)
    for tag in message.tags:
        w.write_bits(tag.tag_bits)
        w.write_bits(tag.info.to_bits())
    w.write_bits(message.key)
    w.write_bits(Bits.zeros(MACK_BITS - w.bit_position))
    return w.finish()


def parse_mack(bits: Bits, params: TeslaParams) -> MackMessage:
    if len(bits) != MACK_BITS:
        raise BadLength(f"MACK input is {len(bits)} bits, expected {MACK_BITS}")
    r = BitReader(bits)
    header_tag = r.read_bits(params.tag_bits)
    macseq = r.read(12)
    if r.read(4):
        raise MalformedPadding("reserved header bits are not zero")
    tags = []
    for _ in range(params.tag_count - 1):
        tag_bits = r.read_bits(params.tag_bits)
        tags.append(Tag(tag_bits, TagInfo.from_bits(r.read_bits(TAG_INFO_BITS))))
    key = r.read_bits(params.key_bits)
    if r.read_bits(r.remaining).uint:
        raise MalformedPadding("padding bits are not zero")
    return MackMessage(header_tag, macseq, tuple(tags), key)


def build_mack(
    chain: TeslaChain,
    subframe: int,
    tag_entries: Sequence[tuple[TagInfo, bytes]],
    disclosure_delay: int,
    disclosed_key: Bits | None = None,
) -> MackMessage:
    """Produce the MACK for an absolute *subframe* on the broadcaster side.

    Tags are computed with the key applying at *subframe*; the disclosed
    key is the one applying ``disclosure_delay`` subframes earlier
    (override ``disclosed_key`` when that key belongs to the previous
    chain across a renewal boundary).  Unused tag slots are zero-filled.
    """
    if disclosure_delay not in DISCLOSURE_DELAYS:
        raise ValueError(f"disclosure delay {disclosure_delay} not in {DISCLOSURE_DELAYS}")
    params = chain.params
    n_t = params.tag_count
    if not tag_entries:
        raise ValueError("at least the header tag entry is required")
    if len(tag_entries) > n_t:
        raise TooManyTags(f"{len(tag_entries)} entries for {n_t} slots")
    tag_key = chain.signing_key(chain.index_for_subframe(subframe))
    made = [make_tag(tag_key, data, params, info) for info, data in tag_entries]
    while len(made) < n_t:
        made.append(Tag(Bits.zeros(params.tag_bits), EMPTY_SLOT))
    if disclosed_key is None:
        disclosed_key = chain.key_at(chain.index_for_subframe(subframe - disclosure_delay))
    body = tuple(made[1:])
    return MackMessage(made[0].tag_bits, compute_macseq(tag_key, body, params), body, disclosed_key)


def is_empty_slot(tag: Tag) -> bool:
    return tag.info == EMPTY_SLOT and tag.tag_bits.uint == 0


# -- receiver-side verification -----------------------------------------


class Verdict(enum.Enum):
    AUTHENTIC = "authentic"
    FORGED = "forged"
    KEY_UNVERIFIED = "key-unverified"


@dataclass(frozen=True)
class PendingTag:
    """A stored tag awaiting its delayed key, plus the data it covers."""

    tag: Tag
    data: bytes


def verify_tags(
    pending: Sequence[PendingTag],
    disclosed: tuple[Bits, int],
    anchor: tuple[Bits, int],
    params: TeslaParams,
) -> list[Verdict]:
    """Judge stored tags once the delayed key arrives.

    The disclosed (key, index) pair is first checked against the trust
    anchor; if that fails every tag is ``KEY_UNVERIFIED`` regardless of
    MAC agreement.  Index 0 never authenticates anything.
    """
    key, index = disclosed
    if index <= anchor[1] or index == 0 or not verify_key(key, index, anchor, params):
        return [Verdict.KEY_UNVERIFIED] * len(pending)
    verdicts = []
    for item in pending:
        ok = tag_matches(item.tag, key, item.data, params)
        verdicts.append(Verdict.AUTHENTIC if ok else Verdict.FORGED)
    return verdicts


# -- chain dump format ---------------------------------------------------


def dump_chain(chain: TeslaChain) -> str:
    """Text dump: header line then one hex key per line, root first."""
    p = chain.params
    header = (
        f"l_K={p.key_bits} N={p.chain_length} hash={p.hash_fn.value} cid={p.chain_id}"
        f" wn={p.start.week} tow={p.start.tow_seconds}"
    )
    return "\n".join([header] + [key.to_hex() for key in chain.keys]) + "\n"


def load_chain(text: str) -> TeslaChain:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty chain dump")
    fields = dict(item.split("=", 1) for item in lines[0].split())
    params = TeslaParams(
        key_bits=int(fields["l_K"]),
        tag_bits=TAG_SIZES[0],
        chain_length=int(fields["N"]),
        start=GstTime(int(fields.get("wn", "0")), int(fields.get("tow", "0"))),
        hash_fn=hash_algo(fields["hash"]),
        chain_id=int(fields["cid"]),
    )
    keys = tuple(Bits.from_hex(line, params.key_bits) for line in lines[1:])
    if len(keys) != params.chain_length + 1:
        raise ValueError(f"dump has {len(keys)} keys, expected {params.chain_length + 1}")
    return TeslaChain(params, keys)


def check_chain(chain: TeslaChain) -> bool:
    """Re-derive every adjacent pair; True iff the dump is self-consistent."""
    for index in range(chain.params.chain_length, 0, -1):
        if derive_previous(chain.keys[index], index, chain.params) != chain.keys[index - 1]:
            return False
    return True


def rescaled(params: TeslaParams, tag_bits: int) -> TeslaParams:
    """Copy of *params* with a reduced tag length for forgery experiments."""
    return replace(params, tag_bits=tag_bits, scaled=True)
