"""Closed-form OSNMA geometry and scheme-fit analysis.

The variable summary behind all of this:

    l_DP = 104 * ceil((1040 + l_NPK) / 104)        1352 <= . <= 1664
    l_DK = 104 * ceil(1 + (l_K + l_DS) / 104)       728 <= . <= 1456
    n_t  = floor((480 - l_K) / (l_T + 16))            4 <= . <= 10

Block counts here use the gross model (104 bits per block, 16 or 128
blocks); extended-mode transmission feasibility additionally checks the
net model where the wider block id leaves 101 payload bits per block.
Published figures that do not follow from these forms are not silently
adopted: :func:`claims_ledger` prints every such number next to its
formula-derived counterpart with an agreement flag.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .dsm import (
    BLOCK_BITS,
    EXTENDED_BLOCK_BITS,
    EXTENDED_MAX_BLOCKS,
    KROOT_NOMINAL_CAP_BITS,
    NOMINAL_MAX_BLOCKS,
    PKR_NOMINAL_CAP_BITS,
)
from .schemes import (
    ALL_SCHEMES,
    DILITHIUM2,
    ECDSA_P256,
    ECDSA_P521,
    FALCON512,
    SPHINCS_128S,
    SchemeCharacterization,
    characterize,
)

NPK_RANGE = (264, 536)
KEY_RANGE = (96, 256)
TAG_RANGE = (20, 40)
DS_VALUES = (512, 1056)
DP_RANGE = (1352, 1664)
DK_RANGE = (728, 1456)
NT_RANGE = (4, 10)

SUBFRAME_SECONDS = 30
PKR_WINDOW_SUBFRAMES = 60       # 30-minute dissemination window
PKR_PERIOD_SECONDS = 6 * 3600   # windows recur every 6 hours

P521_ORDER_BITS = 521           # curve-order baseline next to the 536-bit encoded key


def _ceil_div(num: int, den: int) -> int:
    return -(-num // den)


def dsm_pkr_bits(npk_bits: int) -> int:
    return BLOCK_BITS * _ceil_div(1040 + npk_bits, BLOCK_BITS)


def dsm_kroot_bits(key_bits: int, ds_bits: int) -> int:
    return BLOCK_BITS * (1 + _ceil_div(key_bits + ds_bits, BLOCK_BITS))


def tags_per_mack(key_bits: int, tag_bits: int) -> int:
    return (480 - key_bits) // (tag_bits + 16)


@dataclass(frozen=True)
class OsnmaGeometry:
    """Derived message geometry for one parameter point, with range flags."""

    npk_bits: int
    key_bits: int
    tag_bits: int
    ds_bits: int
    pkr_message_bits: int
    kroot_message_bits: int
    pkr_padding_bits: int
    kroot_padding_bits: int
    tag_count: int
    out_of_range: tuple[str, ...]


def geometry(npk_bits: int, key_bits: int, tag_bits: int, ds_bits: int) -> OsnmaGeometry:
    """Evaluate the closed forms; out-of-range inputs are flagged, not refused."""
    pkr = dsm_pkr_bits(npk_bits)
    kroot = dsm_kroot_bits(key_bits, ds_bits)
    n_t = tags_per_mack(key_bits, tag_bits)
    flags = []
    for name, value, bounds in (
        ("l_NPK", npk_bits, NPK_RANGE),
        ("l_K", key_bits, KEY_RANGE),
        ("l_T", tag_bits, TAG_RANGE),
        ("l_DP", pkr, DP_RANGE),
        ("l_DK", kroot, DK_RANGE),
        ("n_t", n_t, NT_RANGE),
    ):
        if not bounds[0] <= value <= bounds[1]:
            flags.append(name)
    if ds_bits not in DS_VALUES:
        flags.append("l_DS")
    return OsnmaGeometry(
        npk_bits=npk_bits,
        key_bits=key_bits,
        tag_bits=tag_bits,
        ds_bits=ds_bits,
        pkr_message_bits=pkr,
        kroot_message_bits=kroot,
        pkr_padding_bits=pkr - 1040 - npk_bits,
        kroot_padding_bits=kroot - 104 - key_bits - ds_bits,
        tag_count=n_t,
        out_of_range=tuple(flags),
    )


# -- block counts -----------------------------------------------------------


class FitMode(enum.Enum):
    NOMINAL = "nominal"
    EXTENDED = "extended"
    INFEASIBLE = "infeasible"

    def __lt__(self, other: "FitMode") -> bool:
        order = (FitMode.NOMINAL, FitMode.EXTENDED, FitMode.INFEASIBLE)
        return order.index(self) < order.index(other)


@dataclass(frozen=True)
class BlockCount:
    blocks: int
    feasible: bool


def blocks_needed(payload_bits: int, mode: FitMode) -> BlockCount:
    """Blocks to carry a payload: 104-bit units nominal, 101-bit extended.

    The extended unit reflects the 3 bits each block loses to the wider
    block id; the cap is the id space (16 or 128 blocks).
    """
    if payload_bits < 0:
        raise ValueError(f"negative payload {payload_bits}")
    if mode is FitMode.NOMINAL:
        blocks = _ceil_div(payload_bits, BLOCK_BITS) if payload_bits else 0
        return BlockCount(blocks, blocks <= NOMINAL_MAX_BLOCKS)
    if mode is FitMode.EXTENDED:
        blocks = _ceil_div(payload_bits, EXTENDED_BLOCK_BITS) if payload_bits else 0
        return BlockCount(blocks, blocks <= EXTENDED_MAX_BLOCKS)
    raise ValueError("blocks_needed takes NOMINAL or EXTENDED")


def _use_case_mode(message_bits: int, nominal_cap: int) -> FitMode:
    if message_bits <= nominal_cap:
        return FitMode.NOMINAL
    if blocks_needed(message_bits, FitMode.EXTENDED).feasible:
        return FitMode.EXTENDED
    return FitMode.INFEASIBLE


@dataclass(frozen=True)
class UseCaseFit:
    """One of the two broadcast use cases for a scheme."""

    message_bits: int
    blocks: int               # gross blocks, message_bits / 104
    mode: FitMode
    airtime_seconds: int      # one block per subframe


def _fit(message_bits: int, nominal_cap: int) -> UseCaseFit:
    blocks = message_bits // BLOCK_BITS
    return UseCaseFit(message_bits, blocks, _use_case_mode(message_bits, nominal_cap),
                      blocks * SUBFRAME_SECONDS)


@dataclass(frozen=True)
class FitReport:
    """Can a scheme's keys and signatures ride the broadcast channel?"""

    scheme: SchemeCharacterization
    pkr: UseCaseFit           # use case 1: new public key in DSM-PKR
    kroot: UseCaseFit         # use case 2: root-key signature in DSM-KROOT
    paper_pkr_blocks: int | None = None
    paper_kroot_blocks: int | None = None

    @property
    def mode_required(self) -> FitMode:
        return max(self.pkr.mode, self.kroot.mode)

    @property
    def fits_nominal(self) -> bool:
        return self.mode_required is FitMode.NOMINAL


PAPER_BLOCK_CLAIMS = {FALCON512.name: (71, 67)}  # published counts that the forms contradict


def fit_report(scheme: SchemeCharacterization | str, key_bits: int = KEY_RANGE[1]) -> FitReport:
    """Evaluate both use cases; the root-key length defaults to the
    largest grid value, the published worst case."""
    row = characterize(scheme) if isinstance(scheme, str) else scheme
    claims = PAPER_BLOCK_CLAIMS.get(row.name, (None, None))
    return FitReport(
        scheme=row,
        pkr=_fit(dsm_pkr_bits(row.pk_bits), PKR_NOMINAL_CAP_BITS),
        kroot=_fit(dsm_kroot_bits(key_bits, row.sig_bits), KROOT_NOMINAL_CAP_BITS),
        paper_pkr_blocks=claims[0],
        paper_kroot_blocks=claims[1],
    )


def fit_reports(key_bits: int = KEY_RANGE[1]) -> list[FitReport]:
    return [fit_report(s, key_bits) for s in ALL_SCHEMES]


# -- air time ----------------------------------------------------------------


class Dissemination(enum.Enum):
    CONTINUOUS = "continuous"
    PKR_WINDOW = "pkr-window"


@dataclass(frozen=True)
class AirtimeReport:
    blocks: int
    transmission_seconds: int        # blocks on air, one per subframe
    windows: int                     # 30-minute windows touched (window mode)
    wall_clock_seconds: int          # earliest completion from a window start


def airtime(blocks: int, dissemination: Dissemination = Dissemination.CONTINUOUS) -> AirtimeReport:
    if blocks < 1:
        raise ValueError(f"blocks {blocks} < 1")
    transmission = blocks * SUBFRAME_SECONDS
    if dissemination is Dissemination.CONTINUOUS:
        return AirtimeReport(blocks, transmission, 1, transmission)
    windows = _ceil_div(blocks, PKR_WINDOW_SUBFRAMES)
    tail_blocks = blocks - (windows - 1) * PKR_WINDOW_SUBFRAMES
    wall = (windows - 1) * PKR_PERIOD_SECONDS + tail_blocks * SUBFRAME_SECONDS
    return AirtimeReport(blocks, transmission, windows, wall)


# -- size ratios --------------------------------------------------------------


@dataclass(frozen=True)
class RatioRow:
    numerator: str
    numerator_bits: int
    baseline: str
    baseline_bits: int

    @property
    def ratio(self) -> float:
        return self.numerator_bits / self.baseline_bits


def size_ratio(numerator_bits: int, baseline_bits: int) -> float:
    return numerator_bits / baseline_bits


def ratio_report() -> list[RatioRow]:
    """The published size comparisons, each with its baseline spelled out."""
    return [
        RatioRow("Falcon-512 signature", FALCON512.sig_bits,
                 "ECDSA-P521 signature", ECDSA_P521.sig_bits),
        RatioRow("SPHINCS+-128s signature", SPHINCS_128S.sig_bits,
                 "ECDSA-P256 encoded key", ECDSA_P256.pk_bits),
        RatioRow("Falcon-512 public key", FALCON512.pk_bits,
                 "ECDSA-P521 encoded key", ECDSA_P521.pk_bits),
        RatioRow("Falcon-512 public key", FALCON512.pk_bits,
                 "P-521 curve order", P521_ORDER_BITS),
    ]


# -- published-claim ledger ----------------------------------------------------


@dataclass(frozen=True)
class ClaimRow:
    """One published number next to what the closed forms give."""

    key: str
    description: str
    claimed: float
    derived: float
    note: str = ""

    @property
    def agrees(self) -> bool:
        return abs(self.claimed - self.derived) < 1.0


def claims_ledger() -> list[ClaimRow]:
    """Every published quantitative claim, reproduced or flagged.

    Ratio rows agree when the derived value rounds to the published
    figure; block/bit rows need exact equality (the < 1 rule collapses
    to that for integers).
    """
    falcon_pkr = dsm_pkr_bits(FALCON512.pk_bits) // BLOCK_BITS
    falcon_kroot = dsm_kroot_bits(KEY_RANGE[1], FALCON512.sig_bits) // BLOCK_BITS
    nominal_capacity = NOMINAL_MAX_BLOCKS * BLOCK_BITS
    return [
        ClaimRow("falcon-sig-ratio", "Falcon-512 vs ECDSA-P521 signature size",
                 5, round(FALCON512.sig_bits / ECDSA_P521.sig_bits, 3),
                 note="'nearly 5 times bigger'"),
        ClaimRow("sphincs-sig-ratio", "SPHINCS+-128s signature vs 264-bit encoded EC key",
                 238, round(SPHINCS_128S.sig_bits / ECDSA_P256.pk_bits, 3),
                 note="'around 238 times larger'"),
        ClaimRow("falcon-pk-ratio-encoded", "Falcon-512 key vs 536-bit encoded P-521 key",
                 13, round(FALCON512.pk_bits / ECDSA_P521.pk_bits, 3),
                 note="'approximately 13 points to one'"),
        ClaimRow("falcon-pk-ratio-order", "Falcon-512 key vs 521-bit P-521 curve order",
                 13, round(FALCON512.pk_bits / P521_ORDER_BITS, 3),
                 note="alternative curve-order baseline"),
        ClaimRow("nominal-capacity-bits", "bits available in 16 nominal blocks",
                 1664, nominal_capacity),
        ClaimRow("pkr-crypto-bits", "PKR bits left after 16 bits of metadata",
                 1632, nominal_capacity - 16),
        ClaimRow("pkr-free-npk-bits", "PKR bits left for the key after the 1024-bit path",
                 608, nominal_capacity - 16 - 1024),
        ClaimRow("kroot-ds-space-bits", "room for the signature with a 256-bit root key",
                 1727, nominal_capacity - 104 - KEY_RANGE[1]),
        ClaimRow("falcon-pkr-blocks", "blocks to carry the Falcon-512 public key",
                 71, falcon_pkr),
        ClaimRow("falcon-kroot-blocks", "blocks to carry the Falcon-512 root-key signature",
                 67, falcon_kroot),
        ClaimRow("extended-capacity-bits", "gross capacity with the 7-bit block id",
                 13312, EXTENDED_MAX_BLOCKS * BLOCK_BITS,
                 note=f"net of the id widening: {EXTENDED_MAX_BLOCKS * EXTENDED_BLOCK_BITS}"),
        ClaimRow("extended-airtime-s", "time to send a full extended message",
                 142, EXTENDED_MAX_BLOCKS * SUBFRAME_SECONDS,
                 note="one block per 30 s subframe"),
    ]


# -- figure data ----------------------------------------------------------------


def _side(scheme: SchemeCharacterization) -> str:
    return "pqc" if scheme.quantum_resistant else "classical"


def figure8_rows() -> list[tuple[str, int, str]]:
    """Public-key sizes per algorithm (plot data)."""
    schemes = (ECDSA_P256, ECDSA_P521, DILITHIUM2, FALCON512, SPHINCS_128S)
    return [(s.name, s.pk_bits, _side(s)) for s in schemes]


def figure9_rows(include_sphincs: bool = False) -> list[tuple[str, int, str]]:
    """Signature sizes per algorithm; the SPHINCS+ outlier is opt-in."""
    schemes = [ECDSA_P256, ECDSA_P521, DILITHIUM2, FALCON512]
    if include_sphincs:
        schemes.append(SPHINCS_128S)
    return [(s.name, s.sig_bits, _side(s)) for s in schemes]
