"""HKROOT transport and the DSM message machinery.

Each subframe's 120 HKROOT bits carry an 8-bit NMA header, a 4-bit DSM
id, a block id, and one block of a segmented DSM payload.  Two payload
kinds exist: DSM-KROOT (a signed TESLA root key) and DSM-PKR (a public
key plus its Merkle path).  Nominal mode uses a 4-bit block id and
104-bit blocks (16 blocks / 1664 bits ceiling); extended mode grows the
block id to 7 bits at the expense of the block itself, so air blocks
shrink to 101 bits while the gross 128 x 104 = 13312-bit ceiling is kept
for capacity arithmetic.

Conventions fixed by this package (frozen by golden vectors):

* the NB / MID nibble encodes ``blocks - 1`` in nominal mode and is the
  sentinel 15 in extended mode, where the true count follows from the
  sizes announced in the message itself;
* DSM ids 0..11 carry KROOT payloads and 12..15 carry PKR payloads;
* the KROOT preamble is NB(4) PKID(4) CIDKR(2) r(2) HF(2) MF(2) KS(4)
  TS(4) MACLT(8) r(4) WN(12) TOWH(8) ALPHA(48), exactly one block, with
  the chain start time encoded as whole hours;
* the PKR metadata is MID(4) NPKT(4) NPKID(4) r(4).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Mapping

from .bits import BitReader, Bits, BitWriter
from .framing import HKROOT_SECTION_BITS, GstTime
from .merkle import LEAF_COUNT, PATH_BITS, TREE_DEPTH, LeafEntry, MerkleTree, fold_path, leaf_hash
from .tesla import HashAlgo, MacAlgo, TeslaChain

BLOCK_BITS = 104
NOMINAL_MAX_BLOCKS = 16
EXTENDED_MAX_BLOCKS = 128
NOMINAL_BID_BITS = 4
EXTENDED_BID_BITS = 7
EXTENDED_BLOCK_BITS = BLOCK_BITS - (EXTENDED_BID_BITS - NOMINAL_BID_BITS)  # 101

KROOT_PREAMBLE_BITS = 104
PKR_METADATA_BITS = 16

KROOT_NOMINAL_CAP_BITS = 1456       # 14 blocks, the classical-grid ceiling
PKR_NOMINAL_CAP_BITS = 1664         # 16 blocks
EXTENDED_CAP_BITS = EXTENDED_MAX_BLOCKS * BLOCK_BITS  # gross 13312
EXTENDED_NET_CAP_BITS = EXTENDED_MAX_BLOCKS * EXTENDED_BLOCK_BITS  # 12928

NB_EXTENDED_SENTINEL = 15

KS_CODES = {0: 96, 1: 104, 2: 112, 3: 120, 4: 128, 5: 160, 6: 192, 7: 224, 8: 256}
TS_CODES = {5: 20, 6: 24, 7: 28, 8: 32, 9: 40}

HF_CODES = {0: HashAlgo.SHA256, 1: HashAlgo.SHA3_256}
MF_CODES = {0: MacAlgo.HMAC_SHA256, 1: MacAlgo.CMAC_AES}

KROOT_DSM_IDS = range(0, 12)
PKR_DSM_IDS = range(12, 16)


class CapacityExceeded(ValueError):
    """Payload needs more blocks than the mode's block-id space."""


class SignatureTooLarge(ValueError):
    """The root-key signature pushes DSM-KROOT past the mode capacity."""


class KeyTooLarge(ValueError):
    """The public key pushes DSM-PKR past the mode capacity."""


class ReservedCode(ValueError):
    """A KS/TS code outside the assigned table and not in the extension registry."""


class MalformedDsm(ValueError):
    """Structural parse failure (length, non-zero padding, bad field)."""


class InvalidTransition(ValueError):
    """Undefined (state, lifecycle event) pair."""


class Mode(enum.Enum):
    NOMINAL = "nominal"
    EXTENDED = "extended"


def bid_bits(mode: Mode) -> int:
    return NOMINAL_BID_BITS if mode is Mode.NOMINAL else EXTENDED_BID_BITS


def air_block_bits(mode: Mode) -> int:
    """Bits of DSM payload actually carried per subframe."""
    return BLOCK_BITS if mode is Mode.NOMINAL else EXTENDED_BLOCK_BITS


def max_blocks(mode: Mode) -> int:
    return NOMINAL_MAX_BLOCKS if mode is Mode.NOMINAL else EXTENDED_MAX_BLOCKS


# -- code tables ---------------------------------------------------------


def _decode(table: Mapping[int, int], code: int, extensions: Mapping[int, int] | None, what: str) -> int:
    if code in table:
        return table[code]
    if extensions and code in extensions:
        return extensions[code]
    raise ReservedCode(f"{what} code {code} is reserved")


def _encode(table: Mapping[int, int], value: int, extensions: Mapping[int, int] | None, what: str) -> int:
    for code, size in table.items():
        if size == value:
            return code
    if extensions:
        for code, size in extensions.items():
            if size == value:
                return code
    raise ReservedCode(f"no {what} code assigned for size {value}")


def decode_ks(code: int, extensions: Mapping[int, int] | None = None) -> int:
    return _decode(KS_CODES, code, extensions, "KS")


def encode_ks(key_bits: int, extensions: Mapping[int, int] | None = None) -> int:
    return _encode(KS_CODES, key_bits, extensions, "KS")


def decode_ts(code: int, extensions: Mapping[int, int] | None = None) -> int:
    return _decode(TS_CODES, code, extensions, "TS")


def encode_ts(tag_bits: int, extensions: Mapping[int, int] | None = None) -> int:
    return _encode(TS_CODES, tag_bits, extensions, "TS")


def _hf_code(algo: HashAlgo) -> int:
    return next(code for code, a in HF_CODES.items() if a is algo)


def _mf_code(algo: MacAlgo) -> int:
    return next(code for code, a in MF_CODES.items() if a is algo)


# -- NMA header and lifecycle --------------------------------------------


class NmaStatus(enum.IntEnum):
    RESERVED = 0
    TEST = 1
    OPERATIONAL = 2
    DONT_USE = 3


class Cpks(enum.IntEnum):
    NOMINAL = 0
    EOC = 1                # end of chain: renewal in progress
    CREV = 2               # chain revoked
    NPK = 3                # new public key being distributed
    PKREV = 4              # public key revoked
    NEW_MERKLE_TREE = 5
    RESERVED_6 = 6
    RESERVED_7 = 7


@dataclass(frozen=True)
class NmaHeader:
    status: NmaStatus
    cid: int
    cpks: Cpks

    def __post_init__(self) -> None:
        if not 0 <= self.cid <= 3:
            raise ValueError(f"cid {self.cid} outside 0..3")

    def to_bits(self) -> Bits:
        return BitWriter().write(self.status, 2).write(self.cid, 2).write(self.cpks, 3).write(0, 1).finish()

    @classmethod
    def from_bits(cls, bits: Bits) -> "NmaHeader":
        r = BitReader(bits)
        header = cls(NmaStatus(r.read(2)), r.read(2), Cpks(r.read(3)))
        r.read(1)
        return header


class LifecycleEvent(enum.Enum):
    NOMINAL = "nominal"
    CHAIN_RENEWAL = "chain-renewal"
    CHAIN_REVOCATION = "chain-revocation"
    NEW_PUBLIC_KEY = "new-public-key"
    PUBLIC_KEY_REVOCATION = "public-key-revocation"
    NEW_MERKLE_TREE = "new-merkle-tree"


# (current cpks, event) -> (next cpks, cid increment); simulation
# convention published in the docs, the interface specification only
# names the mechanism.
_CPKS_TABLE: dict[tuple[Cpks, LifecycleEvent], tuple[Cpks, int]] = {
    (Cpks.NOMINAL, LifecycleEvent.NOMINAL): (Cpks.NOMINAL, 0),
    (Cpks.NOMINAL, LifecycleEvent.CHAIN_RENEWAL): (Cpks.EOC, 1),
    (Cpks.NOMINAL, LifecycleEvent.CHAIN_REVOCATION): (Cpks.CREV, 0),
    (Cpks.NOMINAL, LifecycleEvent.NEW_PUBLIC_KEY): (Cpks.NPK, 0),
    (Cpks.NOMINAL, LifecycleEvent.PUBLIC_KEY_REVOCATION): (Cpks.PKREV, 0),
    (Cpks.NOMINAL, LifecycleEvent.NEW_MERKLE_TREE): (Cpks.NEW_MERKLE_TREE, 0),
    (Cpks.EOC, LifecycleEvent.NOMINAL): (Cpks.NOMINAL, 0),
    (Cpks.EOC, LifecycleEvent.CHAIN_REVOCATION): (Cpks.CREV, 0),
    (Cpks.CREV, LifecycleEvent.NOMINAL): (Cpks.NOMINAL, 0),
    (Cpks.NPK, LifecycleEvent.NOMINAL): (Cpks.NOMINAL, 0),
    (Cpks.NPK, LifecycleEvent.PUBLIC_KEY_REVOCATION): (Cpks.PKREV, 0),
    (Cpks.PKREV, LifecycleEvent.NOMINAL): (Cpks.NOMINAL, 0),
    (Cpks.NEW_MERKLE_TREE, LifecycleEvent.NOMINAL): (Cpks.NOMINAL, 0),
}


def cpks_transition(header: NmaHeader, event: LifecycleEvent) -> NmaHeader:
    """Advance the NMA header through a lifecycle event."""
    try:
        next_cpks, bump = _CPKS_TABLE[(header.cpks, event)]
    except KeyError:
        raise InvalidTransition(f"event {event.value} undefined in state {header.cpks.name}") from None
    return replace(header, cid=(header.cid + bump) % 4, cpks=next_cpks)


# -- segmentation and accumulation ---------------------------------------


def _padded_length(content_bits: int, unit: int) -> int:
    return content_bits + (-content_bits) % unit


def segment(payload: Bits, mode: Mode) -> list[Bits]:
    """Split a 104-aligned payload into 104-bit blocks (gross arithmetic).

    Block counts and capacity follow the gross model in both modes
    (16 x 104 nominal, 128 x 104 extended); see :func:`wire_segment`
    for the bits a subframe actually carries in extended mode.
    """
    if len(payload) % BLOCK_BITS:
        raise MalformedDsm(f"payload of {len(payload)} bits is not {BLOCK_BITS}-aligned")
    count = len(payload) // BLOCK_BITS
    if count > max_blocks(mode):
        raise CapacityExceeded(f"{count} blocks exceed the {mode.value} cap of {max_blocks(mode)}")
    return [payload[i * BLOCK_BITS:(i + 1) * BLOCK_BITS] for i in range(count)]


def wire_segment(payload: Bits, mode: Mode) -> list[Bits]:
    """Split a payload into air blocks: 104 bits nominal, 101 extended.

    The final block is zero-padded to the air width; reassembly
    truncates back to the announced payload length.
    """
    unit = air_block_bits(mode)
    count = (len(payload) + unit - 1) // unit
    if count > max_blocks(mode):
        raise CapacityExceeded(f"{count} blocks exceed the {mode.value} cap of {max_blocks(mode)}")
    padded = payload + Bits.zeros(_padded_length(len(payload), unit) - len(payload))
    return [padded[i * unit:(i + 1) * unit] for i in range(count)]


class Accumulation(enum.Enum):
    INCOMPLETE = "incomplete"
    COMPLETE = "complete"
    CONFLICT = "conflict"


class DsmBlockStream:
    """Receiver-side reassembly of one DSM id from hostile block input.

    Blocks may arrive in any order and duplicated; identical duplicates
    are idempotent while conflicting content for a block id reports
    ``CONFLICT`` (a spoof indicator) and keeps the first copy.  The
    expected block count may be unknown until block 0 has been decoded;
    completion is only reported once it is known and ids 0..NB-1 are all
    present.
    """

    def __init__(
        self,
        dsm_id: int,
        mode: Mode = Mode.NOMINAL,
        expected_blocks: int | None = None,
        payload_bits: int | None = None,
    ) -> None:
        if not 0 <= dsm_id < 16:
            raise ValueError(f"dsm id {dsm_id} outside 0..15")
        self.dsm_id = dsm_id
        self.mode = mode
        self.block_bits = air_block_bits(mode)
        self.expected_blocks = expected_blocks
        self.payload_bits = payload_bits
        self.blocks: dict[int, Bits] = {}

    def set_expected(self, blocks: int, payload_bits: int | None = None) -> None:
        self.expected_blocks = blocks
        if payload_bits is not None:
            self.payload_bits = payload_bits

    def add(self, block_id: int, block: Bits) -> Accumulation:
        if len(block) != self.block_bits or block_id < 0 or block_id >> bid_bits(self.mode):
            return Accumulation.CONFLICT
        if self.expected_blocks is not None and block_id >= self.expected_blocks:
            return Accumulation.CONFLICT
        seen = self.blocks.get(block_id)
        if seen is not None and seen != block:
            return Accumulation.CONFLICT
        self.blocks[block_id] = block
        return Accumulation.COMPLETE if self.complete() else Accumulation.INCOMPLETE

    def complete(self) -> bool:
        if self.expected_blocks is None:
            return False
        return all(i in self.blocks for i in range(self.expected_blocks))

    def assembled(self) -> Bits:
        if not self.complete():
            raise MalformedDsm("stream is not complete")
        assert self.expected_blocks is not None
        out = Bits.zeros(0)
        for i in range(self.expected_blocks):
            out = out + self.blocks[i]
        if self.payload_bits is not None:
            out = out[:self.payload_bits]
        return out


def accumulate(stream: DsmBlockStream, incoming: tuple[int, int, Bits]) -> Accumulation:
    """Feed one (dsm_id, block_id, block) into a stream; mismatched ids conflict."""
    dsm_id, block_id, block = incoming
    if dsm_id != stream.dsm_id:
        return Accumulation.CONFLICT
    return stream.add(block_id, block)


# -- HKROOT per-subframe transport ----------------------------------------


def pack_hkroot(header: NmaHeader, dsm_id: int, block_id: int, block: Bits, mode: Mode) -> Bits:
    """Build one subframe's 120 HKROOT bits."""
    if len(block) != air_block_bits(mode):
        raise MalformedDsm(f"block is {len(block)} bits, expected {air_block_bits(mode)}")
    w = BitWriter()
    w.write_bits(header.to_bits())
    w.write(dsm_id, 4)
    w.write(block_id, bid_bits(mode))
    w.write_bits(block)
    assert w.bit_position == HKROOT_SECTION_BITS
    return w.finish()


def parse_hkroot(bits: Bits, mode: Mode) -> tuple[NmaHeader, int, int, Bits]:
    if len(bits) != HKROOT_SECTION_BITS:
        raise MalformedDsm(f"hkroot section is {len(bits)} bits, expected {HKROOT_SECTION_BITS}")
    r = BitReader(bits)
    header = NmaHeader.from_bits(r.read_bits(8))
    dsm_id = r.read(4)
    block_id = r.read(bid_bits(mode))
    return header, dsm_id, block_id, r.read_bits(air_block_bits(mode))


# -- DSM-KROOT -------------------------------------------------------------


def kroot_body_bits(key_bits: int, ds_bits: int) -> int:
    """Serialized DSM-KROOT length: preamble + key + signature, 104-padded."""
    return KROOT_PREAMBLE_BITS + _padded_length(key_bits + ds_bits, BLOCK_BITS)


@dataclass(frozen=True)
class DsmKroot:
    """Complete DSM-KROOT payload (the nb nibble is derived at encode time)."""

    pkid: int
    cidkr: int
    hash_fn: HashAlgo
    mac_fn: MacAlgo
    key_bits: int
    tag_bits: int
    maclt: int
    wn: int
    towh: int
    alpha: int
    kroot: Bits
    ds: Bits

    def __post_init__(self) -> None:
        if not 0 <= self.pkid < 16:
            raise ValueError(f"pkid {self.pkid} outside 0..15")
        if not 0 <= self.cidkr <= 3:
            raise ValueError(f"cidkr {self.cidkr} outside 0..3")
        if not 0 <= self.towh < 168:
            raise ValueError(f"towh {self.towh} outside 0..167")
        if not 0 <= self.alpha < (1 << 48):
            raise ValueError("alpha does not fit 48 bits")
        if len(self.kroot) != self.key_bits:
            raise ValueError(f"kroot is {len(self.kroot)} bits, expected {self.key_bits}")

    @property
    def start_time(self) -> GstTime:
        return GstTime(self.wn, self.towh * 3600)

    def length_bits(self) -> int:
        return kroot_body_bits(self.key_bits, len(self.ds))

    def block_count(self, mode: Mode = Mode.NOMINAL) -> int:
        return self.length_bits() // BLOCK_BITS if mode is Mode.NOMINAL else \
            (self.length_bits() + EXTENDED_BLOCK_BITS - 1) // EXTENDED_BLOCK_BITS


def _check_kroot_capacity(length: int, mode: Mode) -> None:
    cap = KROOT_NOMINAL_CAP_BITS if mode is Mode.NOMINAL else EXTENDED_CAP_BITS
    if length > cap:
        raise SignatureTooLarge(f"DSM-KROOT of {length} bits exceeds the {mode.value} cap of {cap}")


def serialize_dsm_kroot(
    msg: DsmKroot,
    mode: Mode = Mode.NOMINAL,
    ks_extensions: Mapping[int, int] | None = None,
    ts_extensions: Mapping[int, int] | None = None,
) -> Bits:
    length = msg.length_bits()
    _check_kroot_capacity(length, mode)
    nb = length // BLOCK_BITS - 1 if mode is Mode.NOMINAL else NB_EXTENDED_SENTINEL
    w = BitWriter()
    w.write(nb, 4)
    w.write(msg.pkid, 4)
    w.write(msg.cidkr, 2)
    w.write(0, 2)
    w.write(_hf_code(msg.hash_fn), 2)
    w.write(_mf_code(msg.mac_fn), 2)
    w.write(encode_ks(msg.key_bits, ks_extensions), 4)
    w.write(encode_ts(msg.tag_bits, ts_extensions), 4)
    w.write(msg.maclt, 8)
    w.write(0, 4)
    w.write(msg.wn % 4096, 12)
    w.write(msg.towh, 8)
    w.write(msg.alpha, 48)
    assert w.bit_position == KROOT_PREAMBLE_BITS
    w.write_bits(msg.kroot)
    w.write_bits(msg.ds)
    w.write_bits(Bits.zeros(length - w.bit_position))
    return w.finish()


def parse_dsm_kroot(
    payload: Bits,
    ds_bits: int,
    ks_extensions: Mapping[int, int] | None = None,
    ts_extensions: Mapping[int, int] | None = None,
) -> DsmKroot:
    """Decode a reassembled DSM-KROOT; the signature length comes from
    the scheme registered for the message's PKID."""
    if len(payload) % BLOCK_BITS:
        raise MalformedDsm(f"payload of {len(payload)} bits is not {BLOCK_BITS}-aligned")
    r = BitReader(payload)
    nb = r.read(4)
    pkid = r.read(4)
    cidkr = r.read(2)
    if r.read(2):
        raise MalformedDsm("reserved preamble bits are not zero")
    hf = r.read(2)
    mf = r.read(2)
    if hf not in HF_CODES or mf not in MF_CODES:
        raise ReservedCode(f"HF/MF codes {hf}/{mf} are reserved")
    key_bits = decode_ks(r.read(4), ks_extensions)
    tag_bits = decode_ts(r.read(4), ts_extensions)
    maclt = r.read(8)
    if r.read(4):
        raise MalformedDsm("reserved preamble bits are not zero")
    wn = r.read(12)
    towh = r.read(8)
    alpha = r.read(48)
    kroot = r.read_bits(key_bits)
    ds = r.read_bits(ds_bits)
    msg = DsmKroot(pkid, cidkr, HF_CODES[hf], MF_CODES[mf], key_bits, tag_bits,
                   maclt, wn, towh, alpha, kroot, ds)
    if len(payload) != msg.length_bits():
        raise MalformedDsm(f"payload is {len(payload)} bits, layout says {msg.length_bits()}")
    if nb != NB_EXTENDED_SENTINEL and nb != msg.block_count(Mode.NOMINAL) - 1:
        raise MalformedDsm(f"nb nibble {nb} disagrees with {msg.block_count(Mode.NOMINAL)} blocks")
    if r.read_bits(r.remaining).uint:
        raise MalformedDsm("padding bits are not zero")
    return msg


def kroot_signed_bytes(nma: NmaHeader, msg: DsmKroot) -> bytes:
    """Canonical byte string covered by the DS field."""
    w = BitWriter()
    w.write_bits(nma.to_bits())
    w.write(msg.cidkr, 2)
    w.write(_hf_code(msg.hash_fn), 2)
    w.write(_mf_code(msg.mac_fn), 2)
    w.write(encode_ks(msg.key_bits, {15: msg.key_bits}), 4)
    w.write(encode_ts(msg.tag_bits, {15: msg.tag_bits}), 4)
    w.write(msg.maclt, 8)
    w.write(msg.wn % 4096, 12)
    w.write(msg.towh, 8)
    w.write(msg.alpha, 48)
    w.write_bits(msg.kroot)
    return w.finish().to_bytes()


def build_dsm_kroot(
    chain: TeslaChain,
    signer,
    signing_key,
    nma: NmaHeader,
    pkid: int,
    maclt: int = 0x21,
    alpha: int = 0,
    mode: Mode = Mode.NOMINAL,
    ks_extensions: Mapping[int, int] | None = None,
    ts_extensions: Mapping[int, int] | None = None,
) -> DsmKroot:
    """Sign the chain's root key and assemble the DSM-KROOT payload.

    ``signer`` is a signature provider (see :mod:`osnmalab.schemes`);
    the chain start time must fall on a whole hour to be encodable.
    """
    params = chain.params
    if params.start.tow_seconds % 3600:
        raise ValueError("chain start time must be hour-aligned for DSM-KROOT encoding")
    ds_bits = signer.characterization.sig_bits
    _check_kroot_capacity(kroot_body_bits(params.key_bits, ds_bits), mode)
    msg = DsmKroot(
        pkid=pkid,
        cidkr=params.chain_id,
        hash_fn=params.hash_fn,
        mac_fn=params.mac_fn,
        key_bits=params.key_bits,
        tag_bits=params.tag_bits,
        maclt=maclt,
        wn=params.start.week,
        towh=params.start.tow_seconds // 3600,
        alpha=alpha,
        kroot=chain.root_key,
        ds=Bits.zeros(ds_bits),
    )
    ds = signer.sign(signing_key, kroot_signed_bytes(nma, msg))
    return replace(msg, ds=ds)


def verify_dsm_kroot(msg: DsmKroot, nma: NmaHeader, provider, public_key) -> bool:
    return provider.verify(public_key, kroot_signed_bytes(nma, msg), msg.ds)


# -- DSM-PKR ---------------------------------------------------------------


def pkr_body_bits(npk_bits: int) -> int:
    """Serialized DSM-PKR length: metadata + path + key, 104-padded."""
    return _padded_length(PKR_METADATA_BITS + PATH_BITS + npk_bits, BLOCK_BITS)


@dataclass(frozen=True)
class DsmPkr:
    """Complete DSM-PKR payload (the mid nibble is derived at encode time)."""

    npkt: int
    npkid: int
    merkle_path: tuple[bytes, bytes, bytes, bytes]
    npk: Bits

    def __post_init__(self) -> None:
        if not 0 <= self.npkt < 16:
            raise ValueError(f"npkt {self.npkt} outside 0..15")
        if not 0 <= self.npkid < LEAF_COUNT:
            raise ValueError(f"npkid {self.npkid} outside 0..{LEAF_COUNT - 1}")
        if len(self.merkle_path) != TREE_DEPTH or any(len(n) != 32 for n in self.merkle_path):
            raise ValueError("merkle path must be 4 nodes of 32 bytes")

    def length_bits(self) -> int:
        return pkr_body_bits(len(self.npk))

    def block_count(self, mode: Mode = Mode.NOMINAL) -> int:
        return self.length_bits() // BLOCK_BITS if mode is Mode.NOMINAL else \
            (self.length_bits() + EXTENDED_BLOCK_BITS - 1) // EXTENDED_BLOCK_BITS


def _check_pkr_capacity(length: int, mode: Mode) -> None:
    cap = PKR_NOMINAL_CAP_BITS if mode is Mode.NOMINAL else EXTENDED_CAP_BITS
    if length > cap:
        raise KeyTooLarge(f"DSM-PKR of {length} bits exceeds the {mode.value} cap of {cap}")


def serialize_dsm_pkr(msg: DsmPkr, mode: Mode = Mode.NOMINAL) -> Bits:
    length = msg.length_bits()
    _check_pkr_capacity(length, mode)
    mid = length // BLOCK_BITS - 1 if mode is Mode.NOMINAL else NB_EXTENDED_SENTINEL
    w = BitWriter()
    w.write(mid, 4)
    w.write(msg.npkt, 4)
    w.write(msg.npkid, 4)
    w.write(0, 4)
    for node in msg.merkle_path:
        w.write_bits(Bits.from_bytes(node))
    w.write_bits(msg.npk)
    w.write_bits(Bits.zeros(length - w.bit_position))
    return w.finish()


def parse_dsm_pkr(payload: Bits, npk_bits: int) -> DsmPkr:
    """Decode a reassembled DSM-PKR; the key length comes from the
    scheme registered for the message's NPKT."""
    if len(payload) % BLOCK_BITS:
        raise MalformedDsm(f"payload of {len(payload)} bits is not {BLOCK_BITS}-aligned")
    r = BitReader(payload)
    mid = r.read(4)
    npkt = r.read(4)
    npkid = r.read(4)
    if r.read(4):
        raise MalformedDsm("reserved metadata bits are not zero")
    path = tuple(r.read_bits(256).to_bytes() for _ in range(TREE_DEPTH))
    npk = r.read_bits(npk_bits)
    msg = DsmPkr(npkt, npkid, path, npk)  # type: ignore[arg-type]
    if len(payload) != msg.length_bits():
        raise MalformedDsm(f"payload is {len(payload)} bits, layout says {msg.length_bits()}")
    if mid != NB_EXTENDED_SENTINEL and mid != msg.block_count(Mode.NOMINAL) - 1:
        raise MalformedDsm(f"mid nibble {mid} disagrees with {msg.block_count(Mode.NOMINAL)} blocks")
    if r.read_bits(r.remaining).uint:
        raise MalformedDsm("padding bits are not zero")
    return msg


def build_dsm_pkr(npk: Bits, npkt: int, npkid: int, tree: MerkleTree, mode: Mode = Mode.NOMINAL) -> DsmPkr:
    """Assemble the DSM-PKR for a tree leaf, attaching its sibling path."""
    _check_pkr_capacity(pkr_body_bits(len(npk)), mode)
    entry = tree.entries[npkid]
    if entry.npk != npk or entry.npkt != npkt:
        raise ValueError(f"leaf {npkid} does not hold this key")
    return DsmPkr(npkt, npkid, tree.path(npkid), npk)


def verify_pkr(msg: DsmPkr, trusted_root: bytes) -> bool:
    """Fold the leaf hash up the 4-node path and compare with the installed root."""
    leaf = leaf_hash(LeafEntry(msg.npkt, msg.npkid, msg.npk))
    return fold_path(leaf, msg.npkid, msg.merkle_path) == trusted_root
