"""Deterministic broadcaster / channel / receiver / adversary simulation.

Time advances in 30-second subframe ticks.  Each tick the broadcaster
emits one subframe bundle (15 page fields carrying one DSM block and
one MACK message, plus the opaque navigation and timing payloads being
authenticated), an optional adversary transforms it, the channel drops
individual pages, and the receiver consumes whatever arrives.  A
subframe with any lost page is unusable as a whole - the conservative
reading of page-level loss.

Scenario subframe ``t`` maps to the absolute subframe ``start + 1 + t``
so that the first tagged subframe of every chain gets key index 1 (the
root key, index 0, never tags).  Chains renew on hour-aligned
boundaries; across a renewal the MACK of the new chain keeps disclosing
the old chain's keys until the handoff completes, and receivers verify
them against the old anchor until the new root key is authenticated.

Everything is driven by named :class:`random.Random` streams derived
from the scenario seed, so two runs of the same scenario produce
byte-identical event logs.
"""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .bits import Bits
from .dsm import (
    KROOT_DSM_IDS,
    KS_CODES,
    TS_CODES,
    Cpks,
    DsmBlockStream,
    Mode,
    NmaHeader,
    NmaStatus,
    air_block_bits,
    build_dsm_kroot,
    build_dsm_pkr,
    kroot_body_bits,
    pack_hkroot,
    parse_dsm_kroot,
    parse_dsm_pkr,
    parse_hkroot,
    pkr_body_bits,
    serialize_dsm_kroot,
    serialize_dsm_pkr,
    verify_dsm_kroot,
    verify_pkr,
    wire_segment,
)
from .framing import (
    PAGES_PER_SUBFRAME,
    SUBFRAMES_PER_WEEK,
    GstTime,
    PageField,
    SubframePayload,
    assemble_subframe,
    disassemble_subframe,
)
from .merkle import LeafEntry, MerkleTree
from .schemes import Family, SchemeRegistry, UnassignedNpkt, default_registry
from .tesla import (
    ADKD_NAV,
    ADKD_SLOW,
    ADKD_TIMING,
    KEY_SIZES,
    TAG_SIZES,
    Tag,
    TagInfo,
    TeslaChain,
    TeslaParams,
    build_mack,
    derive_previous,
    generate_chain,
    hash_algo,
    header_tag_info,
    is_empty_slot,
    mac_algo,
    make_tag,
    parse_mack,
    serialize_mack,
    tag_matches,
)

MACLT_PATTERNS = {0x21: (1, ADKD_NAV), 0x27: (10, ADKD_SLOW)}
_MACLT_FOR_DELAY = {delay: code for code, (delay, _) in MACLT_PATTERNS.items()}

RENEWAL_RANGE = (120, 2880)          # one hour to one day, in subframes
SUBFRAMES_PER_HOUR = 120
EXTENSION_CODE = 15                  # KS/TS slot used for scaled experiments

PKR_DSM_ID = 12
FAKE_PKR_DSM_ID = 13


class ConfigInvalid(ValueError):
    """Scenario configuration failed validation."""


class Adversary(enum.Enum):
    NONE = "none"
    DATA_SPOOFER = "data-spoofer"
    TAG_BRUTE_FORCER = "tag-brute-forcer"
    QUANTUM_FORGER = "quantum-forger"


class Phase(enum.IntEnum):
    COLD_START = 0
    HAVE_MERKLE_ROOT = 1
    HAVE_PUBLIC_KEY = 2
    HAVE_KROOT = 3
    AUTHENTICATING = 4


@dataclass
class ScenarioConfig:
    """Flat scenario description; every field has a text-file key."""

    duration_subframes: int = 200
    wn: int = 1200
    tow_start: int = 3600
    prn: int = 1
    key_bits: int = 128
    tag_bits: int = 40
    hash_fn: str = "SHA-256"
    mac_fn: str = "HMAC-SHA256"
    cid_start: int = 1
    renewal_period_subframes: int = 2880
    disclosure_delay: int = 1
    npkt: int = 1
    npkt_map: str = ""
    pkid: int = 2
    pkr_period_subframes: int = 720
    pkr_window_subframes: int = 60
    start_offset_subframes: int = 60
    page_loss: float = 0.0
    adversary: str = "none"
    adversary_start_subframe: int = 0
    brute_force_attempts: int = 1024
    preinstall_public_key: bool = True
    install_merkle_root: bool = True
    extended_blocks: bool = False
    seed: int = 1

    def validate(self) -> None:
        if self.duration_subframes < 0:
            raise ConfigInvalid("duration_subframes must be >= 0")
        if not 0.0 <= self.page_loss < 1.0:
            raise ConfigInvalid("page_loss must be in [0, 1)")
        lo, hi = RENEWAL_RANGE
        if not lo <= self.renewal_period_subframes <= hi:
            raise ConfigInvalid(f"renewal_period_subframes outside {lo}..{hi}")
        if self.renewal_period_subframes % SUBFRAMES_PER_HOUR:
            raise ConfigInvalid("renewal_period_subframes must be a whole number of hours")
        if self.disclosure_delay not in (1, 10):
            raise ConfigInvalid("disclosure_delay must be 1 or 10")
        if self.tow_start % 3600:
            raise ConfigInvalid("tow_start must be hour-aligned")
        if not 0 <= self.pkid < 16 or not 0 <= self.npkt < 16:
            raise ConfigInvalid("pkid and npkt must be in 0..15")
        if self.pkr_window_subframes > self.pkr_period_subframes:
            raise ConfigInvalid("pkr window longer than its period")
        if self.preinstall_public_key and not self.install_merkle_root:
            raise ConfigInvalid("a preinstalled public key needs the merkle root installed")
        if self.brute_force_attempts < 0:
            raise ConfigInvalid("brute_force_attempts must be >= 0")
        try:
            Adversary(self.adversary)
            hash_algo(self.hash_fn)
            mac_algo(self.mac_fn)
            self.tesla_params(0)
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from None

    # -- derived views ---------------------------------------------------

    @property
    def scaled(self) -> bool:
        return self.key_bits not in KEY_SIZES or self.tag_bits not in TAG_SIZES

    @property
    def ks_extensions(self) -> dict[int, int] | None:
        return None if self.key_bits in KS_CODES.values() else {EXTENSION_CODE: self.key_bits}

    @property
    def ts_extensions(self) -> dict[int, int] | None:
        return None if self.tag_bits in TS_CODES.values() else {EXTENSION_CODE: self.tag_bits}

    @property
    def start_total_subframes(self) -> int:
        return GstTime(self.wn, self.tow_start).total_subframes

    @property
    def mode(self) -> Mode:
        return Mode.EXTENDED if self.extended_blocks else Mode.NOMINAL

    def absolute_subframe(self, t: int) -> int:
        return self.start_total_subframes + 1 + t

    def epoch_of(self, t: int) -> int:
        return t // self.renewal_period_subframes

    def chain_start_subframe(self, epoch: int) -> int:
        return self.start_total_subframes + epoch * self.renewal_period_subframes

    def tesla_params(self, epoch: int) -> TeslaParams:
        return TeslaParams(
            key_bits=self.key_bits,
            tag_bits=self.tag_bits,
            chain_length=self.renewal_period_subframes,
            start=GstTime.from_subframes(self.chain_start_subframe(epoch)),
            hash_fn=hash_algo(self.hash_fn),
            mac_fn=mac_algo(self.mac_fn),
            chain_id=(self.cid_start + epoch) % 4,
            scaled=self.scaled,
        )

    def in_pkr_window(self, t: int) -> bool:
        return (t + self.start_offset_subframes) % self.pkr_period_subframes < self.pkr_window_subframes

    def npkt_extensions(self) -> list[tuple[int, str]]:
        out = []
        for item in self.npkt_map.split(","):
            item = item.strip()
            if not item:
                continue
            code, name = item.split(":", 1)
            out.append((int(code), name))
        return out

    def build_registry(self) -> SchemeRegistry:
        registry = default_registry()
        for code, name in self.npkt_extensions():
            registry.assign(code, name)
        return registry

    # -- scenario files ----------------------------------------------------

    _BOOL_KEYS = ("preinstall_public_key", "install_merkle_root", "extended_blocks")
    _TEXT_KEYS = ("adversary", "npkt_map", "hash_fn", "mac_fn")

    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        values: dict[str, object] = {}
        known = {f.name for f in fields(cls)}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigInvalid(f"expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigInvalid(f"unknown scenario key {key!r}")
            if key in cls._BOOL_KEYS:
                if value.lower() not in ("true", "false"):
                    raise ConfigInvalid(f"{key} must be true or false")
                values[key] = value.lower() == "true"
            elif key == "page_loss":
                values[key] = float(value)
            elif key in cls._TEXT_KEYS:
                values[key] = value
            else:
                try:
                    values[key] = int(value)
                except ValueError:
                    raise ConfigInvalid(f"{key} must be an integer") from None
        config = cls(**values)  # type: ignore[arg-type]
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_text(Path(path).read_text())


# -- event log -------------------------------------------------------------


@dataclass(frozen=True)
class EventRecord:
    subframe: int                 # scenario-relative tick
    gst: GstTime
    actor: str
    kind: str
    digest: str = "-"
    verdict: str = "-"


class EventLog:
    """Ordered, deterministic trace of one run."""

    def __init__(self) -> None:
        self.records: list[EventRecord] = []

    def add(self, record: EventRecord) -> None:
        self.records.append(record)

    def to_tsv(self) -> str:
        lines = [
            f"{r.gst.week}:{r.gst.tow_seconds}\t{r.actor}\t{r.kind}\t{r.digest}\t{r.verdict}"
            for r in self.records
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    def __len__(self) -> int:
        return len(self.records)


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:12]


# -- summary -----------------------------------------------------------------


@dataclass
class Summary:
    duration_subframes: int = 0
    emitted_subframes: int = 0
    complete_subframes: int = 0
    incomplete_subframes: int = 0
    authenticated_subframes: int = 0
    forged_subframes: int = 0
    tags_authentic: int = 0
    tags_forged: int = 0
    first_auth_subframe: int | None = None
    unresolved_subframes: int = 0
    unresolved_expected: int = 0
    keys_verified: int = 0
    keys_rejected: int = 0
    kroot_verified: int = 0
    kroot_rejected: int = 0
    pkr_attempts: int = 0
    pkr_verified: int = 0
    pkr_rejected: int = 0
    forged_data_accepted: int = 0
    spoofed_detected: int = 0
    brute_force_subframes: int = 0
    brute_force_successes: int = 0
    final_phase: str = Phase.COLD_START.name

    @property
    def authenticated_rate(self) -> float:
        resolvable = self.complete_subframes - self.unresolved_expected
        return self.authenticated_subframes / resolvable if resolvable else 0.0

    def as_csv(self) -> str:
        rows = ["metric,value"]
        for f in fields(self):
            rows.append(f"{f.name},{getattr(self, f.name)}")
        rows.append(f"authenticated_rate,{self.authenticated_rate:.6f}")
        return "\n".join(rows) + "\n"


# -- broadcaster --------------------------------------------------------------


@dataclass(frozen=True)
class SubframeBundle:
    """Everything one subframe carries, before channel loss."""

    t: int
    abs_subframe: int
    mode: Mode
    nma: NmaHeader
    dsm_id: int
    block_id: int
    block: Bits
    mack_bits: Bits
    nav_data: bytes
    timing_data: bytes

    def pages(self) -> list[PageField]:
        hkroot = pack_hkroot(self.nma, self.dsm_id, self.block_id, self.block, self.mode)
        return disassemble_subframe(SubframePayload(hkroot, self.mack_bits))

    def digest(self) -> str:
        payload = b"".join(p.bits.to_bytes() for p in self.pages())
        return _digest(payload + self.nav_data + self.timing_data)


@dataclass(frozen=True)
class DeliveredSubframe:
    """What survives the channel when all 15 pages arrive."""

    abs_subframe: int
    pages: tuple[PageField, ...]
    nav_data: bytes
    timing_data: bytes


def _payload_bytes(seed: int, label: str, abs_subframe: int, size: int) -> bytes:
    return hashlib.sha256(f"{seed}:{label}:{abs_subframe}".encode()).digest()[:size]


def _chain_seed(seed: int, label: str, epoch: int, key_bits: int) -> Bits:
    material = hashlib.sha256(f"{seed}:{label}:{epoch}".encode()).digest()
    return Bits.from_bytes(material * ((key_bits + 255) // 256), key_bits)


def signing_header(cidkr: int) -> NmaHeader:
    """The NMA header bound by a chain's root-key signature.

    Signing against the nominal-state header of the chain's own id keeps
    verification independent of transient CPKS values seen on air.
    """
    return NmaHeader(NmaStatus.OPERATIONAL, cidkr, Cpks.NOMINAL)


class Broadcaster:
    """Generates the genuine signal for a scenario."""

    def __init__(self, config: ScenarioConfig, registry: SchemeRegistry) -> None:
        self.config = config
        self.provider = registry.lookup(config.npkt)
        rng_keys = random.Random(f"{config.seed}:keys")
        self.keypairs = [self.provider.keygen(rng_keys) for _ in range(16)]
        self.tree = MerkleTree([
            LeafEntry(config.npkt, i, pk) for i, (pk, _) in enumerate(self.keypairs)
        ])
        self.active_pk, self.active_sk = self.keypairs[config.pkid]
        self._chains: dict[int, TeslaChain] = {}
        self._kroot_blocks: dict[int, list[Bits]] = {}
        pkr = build_dsm_pkr(self.active_pk, config.npkt, config.pkid, self.tree, config.mode)
        self.pkr_blocks = wire_segment(serialize_dsm_pkr(pkr, config.mode), config.mode)
        self._kroot_pos: dict[int, int] = {}
        self._pkr_pos = 0

    def chain(self, epoch: int) -> TeslaChain:
        if epoch not in self._chains:
            seed = _chain_seed(self.config.seed, "chain", epoch, self.config.key_bits)
            self._chains[epoch] = generate_chain(self.config.tesla_params(epoch), seed)
        return self._chains[epoch]

    def _build_kroot_blocks(self, chain: TeslaChain, signing_key, alpha_label: str) -> list[Bits]:
        config = self.config
        msg = build_dsm_kroot(
            chain, self.provider, signing_key,
            signing_header(chain.params.chain_id), pkid=config.pkid,
            maclt=_MACLT_FOR_DELAY[config.disclosure_delay],
            alpha=random.Random(f"{config.seed}:{alpha_label}").getrandbits(48),
            mode=config.mode,
            ks_extensions=config.ks_extensions,
            ts_extensions=config.ts_extensions,
        )
        payload = serialize_dsm_kroot(msg, config.mode, config.ks_extensions, config.ts_extensions)
        return wire_segment(payload, config.mode)

    def kroot_blocks(self, epoch: int) -> list[Bits]:
        if epoch not in self._kroot_blocks:
            self._kroot_blocks[epoch] = self._build_kroot_blocks(
                self.chain(epoch), self.active_sk, f"alpha:{epoch}")
        return self._kroot_blocks[epoch]

    def nma_header(self, t: int) -> NmaHeader:
        config = self.config
        epoch = config.epoch_of(t)
        cpks = Cpks.NOMINAL
        if epoch > 0 and t - epoch * config.renewal_period_subframes < len(self.kroot_blocks(epoch)):
            cpks = Cpks.EOC
        return NmaHeader(NmaStatus.OPERATIONAL, (config.cid_start + epoch) % 4, cpks)

    def _hkroot_selection(self, t: int) -> tuple[int, int, Bits]:
        config = self.config
        if config.in_pkr_window(t):
            block_id = self._pkr_pos % len(self.pkr_blocks)
            self._pkr_pos += 1
            return PKR_DSM_ID, block_id, self.pkr_blocks[block_id]
        epoch = config.epoch_of(t)
        blocks = self.kroot_blocks(epoch)
        pos = self._kroot_pos.get(epoch, 0)
        self._kroot_pos[epoch] = pos + 1
        return epoch % len(KROOT_DSM_IDS), pos % len(blocks), blocks[pos % len(blocks)]

    def tag_entries(self, nav: bytes, timing: bytes) -> list[tuple[TagInfo, bytes]]:
        config = self.config
        delay, header_adkd = MACLT_PATTERNS[_MACLT_FOR_DELAY[config.disclosure_delay]]
        entries = [(header_tag_info(config.prn, header_adkd), nav)]
        if delay == 1:
            entries.append((TagInfo(config.prn, ADKD_TIMING, 0), timing))
        return entries

    def _cross_epoch_disclosure(self, t: int, chains) -> Bits | None:
        """Key disclosed at tick *t* when it belongs to an earlier chain."""
        config = self.config
        t_disclosed = t - config.disclosure_delay
        if t_disclosed < -1:
            return Bits.zeros(config.key_bits)
        if t_disclosed == -1:
            return chains(0).root_key
        if config.epoch_of(t_disclosed) == config.epoch_of(t):
            return None  # same chain: build_mack derives it itself
        chain = chains(config.epoch_of(t_disclosed))
        return chain.key_at(config.absolute_subframe(t_disclosed) - chain.start_subframe)

    def mack_bits(self, t: int, abs_sf: int, nav: bytes, timing: bytes, chains) -> Bits:
        chain = chains(self.config.epoch_of(t))
        mack = build_mack(chain, abs_sf, self.tag_entries(nav, timing),
                          self.config.disclosure_delay,
                          disclosed_key=self._cross_epoch_disclosure(t, chains))
        return serialize_mack(mack, chain.params)

    def bundle(self, t: int) -> SubframeBundle:
        config = self.config
        abs_sf = config.absolute_subframe(t)
        nav = _payload_bytes(config.seed, "nav", abs_sf, 16)
        timing = _payload_bytes(config.seed, "timing", abs_sf, 8)
        dsm_id, block_id, block = self._hkroot_selection(t)
        return SubframeBundle(
            t=t, abs_subframe=abs_sf, mode=config.mode, nma=self.nma_header(t),
            dsm_id=dsm_id, block_id=block_id, block=block,
            mack_bits=self.mack_bits(t, abs_sf, nav, timing, self.chain),
            nav_data=nav, timing_data=timing,
        )


# -- adversaries ---------------------------------------------------------------


def adversary_data_spoof(bundle: SubframeBundle) -> SubframeBundle:
    """Alter the navigation payload after emission, keeping tags intact."""
    spoofed = bytes(b ^ 0xFF for b in bundle.nav_data)
    return replace(bundle, nav_data=spoofed)


def brute_force_attack(true_tag_bits: Bits, attempts: int, rng: random.Random) -> int | None:
    """Guess random tags for one fake message; index of the first hit or None.

    Each guess is an independent uniform draw over the tag space, so a
    single guess is accepted with probability 2**-l_T and a k-attempt
    campaign succeeds with probability 1 - (1 - 2**-l_T)**k.
    """
    width = len(true_tag_bits)
    target = true_tag_bits.uint
    for i in range(attempts):
        if rng.getrandbits(width) == target:
            return i
    return None


def tag_guess_trial(params: TeslaParams, rng: random.Random) -> bool:
    """One random-key, random-data, single-guess acceptance trial."""
    key = Bits(rng.getrandbits(params.key_bits), params.key_bits)
    data = rng.randbytes(8)
    info = TagInfo(rng.randrange(256), ADKD_NAV, 0)
    tag = make_tag(key, data, params, info)
    return rng.getrandbits(params.tag_bits) == tag.tag_bits.uint


class QuantumForger:
    """Full-channel spoofer that has run Shor's algorithm.

    It holds the broadcaster's signing private key exactly when the
    scheme in force is classical elliptic-curve; against a
    quantum-resistant scheme it can only sign with keys of its own.  It
    substitutes the whole downlink: its own chains and root keys, forged
    navigation data, and - during key-dissemination windows - an attempt
    to register an elliptic-curve key of its own next to the relayed
    genuine one.
    """

    def __init__(self, config: ScenarioConfig, broadcaster: Broadcaster) -> None:
        self.config = config
        self.broadcaster = broadcaster
        scheme = broadcaster.provider.characterization
        self.holds_signing_key = (scheme.family is Family.ELLIPTIC_CURVE
                                  and not scheme.quantum_resistant)
        rng = random.Random(f"{config.seed}:quantum")
        if self.holds_signing_key:
            self.signing_key = broadcaster.active_sk
        else:
            _, self.signing_key = broadcaster.provider.keygen(rng)
        self._chains: dict[int, TeslaChain] = {}
        self._kroot_blocks: dict[int, list[Bits]] = {}
        self._kroot_pos: dict[int, int] = {}
        # A fake tree lets the forger mint syntactically valid Merkle
        # paths for its own EC key; they cannot fold to the honest root.
        ec = default_registry().lookup(1)
        fake_keys = [ec.keygen(rng)[0] for _ in range(16)]
        self.fake_tree = MerkleTree([LeafEntry(1, i, pk) for i, pk in enumerate(fake_keys)])
        fake_slot = (config.pkid + 1) % 16
        fake_pkr = build_dsm_pkr(fake_keys[fake_slot], 1, fake_slot, self.fake_tree, config.mode)
        self.fake_pkr_blocks = wire_segment(serialize_dsm_pkr(fake_pkr, config.mode), config.mode)
        self._fake_pkr_pos = 0
        self._pkr_parity = 0

    def chain(self, epoch: int) -> TeslaChain:
        if epoch not in self._chains:
            seed = _chain_seed(self.config.seed, "fake-chain", epoch, self.config.key_bits)
            self._chains[epoch] = generate_chain(self.config.tesla_params(epoch), seed)
        return self._chains[epoch]

    def kroot_blocks(self, epoch: int) -> list[Bits]:
        if epoch not in self._kroot_blocks:
            self._kroot_blocks[epoch] = self.broadcaster._build_kroot_blocks(
                self.chain(epoch), self.signing_key, f"fake-alpha:{epoch}")
        return self._kroot_blocks[epoch]

    def transform(self, bundle: SubframeBundle) -> SubframeBundle:
        config = self.config
        t = bundle.t
        nav = _payload_bytes(config.seed, "forged-nav", bundle.abs_subframe, 16)
        timing = _payload_bytes(config.seed, "forged-timing", bundle.abs_subframe, 8)
        if config.in_pkr_window(t):
            # Alternate between relaying the genuine key material and
            # pushing the forged registration on a parallel DSM id.
            self._pkr_parity ^= 1
            if self._pkr_parity:
                dsm_id, block_id, block = bundle.dsm_id, bundle.block_id, bundle.block
            else:
                block_id = self._fake_pkr_pos % len(self.fake_pkr_blocks)
                self._fake_pkr_pos += 1
                dsm_id, block = FAKE_PKR_DSM_ID, self.fake_pkr_blocks[block_id]
        else:
            epoch = config.epoch_of(t)
            blocks = self.kroot_blocks(epoch)
            pos = self._kroot_pos.get(epoch, 0)
            self._kroot_pos[epoch] = pos + 1
            dsm_id = epoch % len(KROOT_DSM_IDS)
            block_id, block = pos % len(blocks), blocks[pos % len(blocks)]
        return replace(
            bundle, nma=self.broadcaster.nma_header(t), dsm_id=dsm_id, block_id=block_id,
            block=block,
            mack_bits=self.broadcaster.mack_bits(t, bundle.abs_subframe, nav, timing, self.chain),
            nav_data=nav, timing_data=timing,
        )


# -- receiver --------------------------------------------------------------------


@dataclass
class _Anchor:
    """A verified root key and the chain bookkeeping hanging off it."""

    kroot: Bits
    params: TeslaParams
    start_subframe: int
    delay: int
    header_adkd: int
    best_index: int = 0
    key_cache: dict[int, Bits] = field(default_factory=dict)

    def key_at(self, index: int) -> Bits:
        """Derive (and cache) the key at *index*; requires index <= best_index."""
        if index > self.best_index or index < 0:
            raise KeyError(f"index {index} not verifiable yet (best {self.best_index})")
        if index == 0:
            return self.kroot
        known = self.best_index
        while known > index and known not in self.key_cache:
            known -= 1
        if known <= 0 or known not in self.key_cache:
            raise KeyError(f"no cached key at or above index {index}")
        key = self.key_cache[known]
        for i in range(known, index, -1):
            key = derive_previous(key, i, self.params)
            self.key_cache[i - 1] = key
        return key


@dataclass
class _Pending:
    cid: int
    mack_bits: Bits
    nav_data: bytes
    timing_data: bytes


class Receiver:
    """OSNMA processing state machine, driven one subframe at a time."""

    def __init__(self, config: ScenarioConfig, registry: SchemeRegistry,
                 log: EventLog, stats: Summary) -> None:
        self.config = config
        self.registry = registry
        self.log = log
        self.stats = stats
        self.trusted_root: bytes | None = None
        self.public_keys: dict[int, tuple[int, Bits]] = {}
        self.anchors: dict[int, _Anchor] = {}
        self.pending: dict[int, _Pending] = {}
        self.streams: dict[int, DsmBlockStream] = {}
        self.deferred_kroots: list[Bits] = []
        self.newly_authenticated: list[int] = []
        self.phase = Phase.COLD_START

    # -- out-of-band installs ----------------------------------------------

    def install_root(self, root: bytes) -> None:
        self.trusted_root = root
        self._promote(Phase.HAVE_MERKLE_ROOT)

    def install_public_key(self, pkid: int, npkt: int, pk: Bits) -> None:
        if self.trusted_root is None:
            raise ConfigInvalid("cannot trust a public key without the merkle root")
        self.public_keys[pkid] = (npkt, pk)
        self._promote(Phase.HAVE_PUBLIC_KEY)

    def _promote(self, phase: Phase) -> None:
        if phase > self.phase:
            self.phase = phase

    def _event(self, t: int, kind: str, digest: str = "-", verdict: str = "-") -> None:
        gst = GstTime.from_subframes(self.config.absolute_subframe(t))
        self.log.add(EventRecord(t, gst, "receiver", kind, digest, verdict))

    # -- lifecycle notifications -------------------------------------------

    def apply_cpks(self, t: int, header: NmaHeader) -> None:
        if header.cpks == Cpks.PKREV:
            if self.public_keys:
                self.public_keys.clear()
                self.anchors.clear()
                self.phase = Phase.HAVE_MERKLE_ROOT if self.trusted_root else Phase.COLD_START
                self._event(t, "public_key_revoked", verdict=f"cid={header.cid}")
        elif header.cpks == Cpks.CREV:
            if header.cid in self.anchors:
                del self.anchors[header.cid]
                if not self.anchors and self.phase > Phase.HAVE_PUBLIC_KEY:
                    self.phase = Phase.HAVE_PUBLIC_KEY
                self._event(t, "chain_revoked", verdict=f"cid={header.cid}")

    # -- per-subframe entry point --------------------------------------------

    def consume(self, t: int, delivered: DeliveredSubframe | None) -> None:
        if delivered is None:
            self.stats.incomplete_subframes += 1
            return
        self.stats.complete_subframes += 1
        payload = assemble_subframe(delivered.pages)
        nma, dsm_id, block_id, block = parse_hkroot(payload.hkroot_bits, self.config.mode)
        self.apply_cpks(t, nma)
        if self.phase == Phase.COLD_START:
            return
        self._ingest_block(t, dsm_id, block_id, block)
        self._ingest_mack(t, delivered.abs_subframe, nma, payload.mack_bits,
                          delivered.nav_data, delivered.timing_data)
        self._resolve_pending(t)

    # -- DSM side ---------------------------------------------------------------

    def _ingest_block(self, t: int, dsm_id: int, block_id: int, block: Bits) -> None:
        stream = self.streams.setdefault(dsm_id, DsmBlockStream(dsm_id, self.config.mode))
        stream.add(block_id, block)
        if stream.expected_blocks is None and 0 in stream.blocks:
            self._derive_expectation(stream)
        if stream.complete():
            payload = stream.assembled()
            del self.streams[dsm_id]
            self._event(t, "dsm_complete", _digest(payload.to_bytes()), f"dsm_id={dsm_id}")
            if dsm_id in KROOT_DSM_IDS:
                self._handle_kroot(t, payload)
            else:
                self._handle_pkr(t, payload)

    def _derive_expectation(self, stream: DsmBlockStream) -> None:
        block0 = stream.blocks[0]
        if self.config.mode is Mode.NOMINAL:
            stream.set_expected(block0[0:4].uint + 1)
            return
        unit = air_block_bits(self.config.mode)
        if stream.dsm_id in KROOT_DSM_IDS:
            entry = self.public_keys.get(block0[4:8].uint)
            if entry is None:
                return
            try:
                ds_bits = self.registry.lookup(entry[0]).characterization.sig_bits
            except UnassignedNpkt:
                return
            ks = block0[16:20].uint
            key_bits = KS_CODES.get(ks, (self.config.ks_extensions or {}).get(ks, 0))
            if not key_bits:
                return
            payload_bits = kroot_body_bits(key_bits, ds_bits)
        else:
            try:
                npk_bits = self.registry.lookup(block0[4:8].uint).characterization.pk_bits
            except UnassignedNpkt:
                return
            payload_bits = pkr_body_bits(npk_bits)
        stream.set_expected(-(-payload_bits // unit), payload_bits)

    def _handle_kroot(self, t: int, payload: Bits) -> None:
        pkid = payload[4:8].uint
        if pkid not in self.public_keys:
            self.deferred_kroots.append(payload)
            self._event(t, "kroot_deferred", verdict=f"pkid={pkid}")
            return
        npkt, pk = self.public_keys[pkid]
        try:
            provider = self.registry.lookup(npkt)
            msg = parse_dsm_kroot(payload, provider.characterization.sig_bits,
                                  self.config.ks_extensions, self.config.ts_extensions)
        except (ValueError, KeyError) as exc:
            self.stats.kroot_rejected += 1
            self._event(t, "kroot_rejected", verdict=f"parse:{type(exc).__name__}")
            return
        if not verify_dsm_kroot(msg, signing_header(msg.cidkr), provider, pk):
            self.stats.kroot_rejected += 1
            self._event(t, "kroot_rejected", _digest(payload.to_bytes()), "bad-signature")
            return
        delay, header_adkd = MACLT_PATTERNS.get(msg.maclt, (1, ADKD_NAV))
        self.anchors[msg.cidkr] = _Anchor(
            kroot=msg.kroot,
            params=TeslaParams(
                key_bits=msg.key_bits, tag_bits=msg.tag_bits,
                chain_length=SUBFRAMES_PER_WEEK,
                start=msg.start_time, hash_fn=msg.hash_fn, mac_fn=msg.mac_fn,
                chain_id=msg.cidkr,
                scaled=msg.key_bits not in KEY_SIZES or msg.tag_bits not in TAG_SIZES,
            ),
            start_subframe=msg.start_time.total_subframes,
            delay=delay, header_adkd=header_adkd,
        )
        self.stats.kroot_verified += 1
        self._promote(Phase.HAVE_KROOT)
        self._event(t, "kroot_verified", _digest(msg.kroot.to_bytes()), f"cid={msg.cidkr}")

    def _handle_pkr(self, t: int, payload: Bits) -> None:
        self.stats.pkr_attempts += 1
        try:
            npk_bits = self.registry.lookup(payload[4:8].uint).characterization.pk_bits
            msg = parse_dsm_pkr(payload, npk_bits)
        except (ValueError, KeyError) as exc:
            self.stats.pkr_rejected += 1
            self._event(t, "pkr_rejected", verdict=f"parse:{type(exc).__name__}")
            return
        if self.trusted_root is None or not verify_pkr(msg, self.trusted_root):
            self.stats.pkr_rejected += 1
            self._event(t, "pkr_rejected", _digest(payload.to_bytes()), f"npkid={msg.npkid}")
            return
        self.public_keys[msg.npkid] = (msg.npkt, msg.npk)
        self.stats.pkr_verified += 1
        self._promote(Phase.HAVE_PUBLIC_KEY)
        self._event(t, "pkr_verified", _digest(msg.npk.to_bytes()), f"npkid={msg.npkid}")
        for deferred in self.deferred_kroots[:]:
            if deferred[4:8].uint == msg.npkid:
                self.deferred_kroots.remove(deferred)
                self._handle_kroot(t, deferred)

    # -- MACK side ------------------------------------------------------------------

    def _newest_anchor(self) -> _Anchor | None:
        return max(self.anchors.values(), key=lambda a: a.start_subframe, default=None)

    def _anchor_covering(self, abs_subframe: int, cid: int | None = None) -> _Anchor | None:
        best = None
        for anchor_cid, anchor in self.anchors.items():
            if cid is not None and anchor_cid != cid:
                continue
            if anchor.start_subframe < abs_subframe and (
                    best is None or anchor.start_subframe > best.start_subframe):
                best = anchor
        return best

    def _ingest_mack(self, t: int, abs_sf: int, nma: NmaHeader, mack_bits: Bits,
                     nav: bytes, timing: bytes) -> None:
        self.pending[abs_sf] = _Pending(nma.cid, mack_bits, nav, timing)
        # The disclosed key may belong to the previous chain near a
        # renewal, so locate its anchor by the subframe it applies to.
        layout = self._anchor_covering(abs_sf, nma.cid) or self._newest_anchor()
        if layout is None:
            return
        try:
            mack = parse_mack(mack_bits, layout.params)
        except ValueError:
            return
        disclosed_for = abs_sf - layout.delay
        key_anchor = self._anchor_covering(disclosed_for)
        if key_anchor is None:
            return
        index = disclosed_for - key_anchor.start_subframe
        if index >= 1:
            self._take_disclosed_key(t, key_anchor, mack.key, index)

    def _take_disclosed_key(self, t: int, anchor: _Anchor, key: Bits, index: int) -> None:
        if len(key) != anchor.params.key_bits:
            return
        if index <= anchor.best_index:
            if anchor.key_at(index) != key:
                self.stats.keys_rejected += 1
                self._event(t, "key_rejected", _digest(key.to_bytes()), f"index={index}")
            return
        candidate = key
        trail = {index: candidate}
        for i in range(index, anchor.best_index, -1):
            candidate = derive_previous(candidate, i, anchor.params)
            trail[i - 1] = candidate
        expected = anchor.kroot if anchor.best_index == 0 else anchor.key_at(anchor.best_index)
        if candidate != expected:
            self.stats.keys_rejected += 1
            self._event(t, "key_rejected", _digest(key.to_bytes()), f"index={index}")
            return
        anchor.key_cache.update(trail)
        anchor.best_index = index
        self.stats.keys_verified += 1
        self._event(t, "key_verified", _digest(key.to_bytes()), f"index={index}")

    def _resolve_pending(self, t: int) -> None:
        for abs_sf in sorted(self.pending):
            entry = self.pending[abs_sf]
            anchor = self._anchor_covering(abs_sf, entry.cid)
            if anchor is None:
                continue
            index = abs_sf - anchor.start_subframe
            if index < 1:
                del self.pending[abs_sf]
                continue
            if index > anchor.best_index:
                continue
            del self.pending[abs_sf]
            self._judge_subframe(t, abs_sf, entry, anchor, anchor.key_at(index))

    def _data_for(self, adkd: int, entry: _Pending) -> bytes | None:
        if adkd in (ADKD_NAV, ADKD_SLOW):
            return entry.nav_data
        if adkd == ADKD_TIMING:
            return entry.timing_data
        return None

    def _judge_subframe(self, t: int, abs_sf: int, entry: _Pending,
                        anchor: _Anchor, key: Bits) -> None:
        try:
            mack = parse_mack(entry.mack_bits, anchor.params)
        except ValueError:
            self.stats.forged_subframes += 1
            self._event(t, "subframe_forged", verdict=f"sf={abs_sf}:unparseable")
            return
        checks = [Tag(mack.header_tag, header_tag_info(self.config.prn, anchor.header_adkd))]
        checks.extend(tag for tag in mack.tags if not is_empty_slot(tag))
        all_ok = True
        for tag in checks:
            data = self._data_for(tag.info.adkd, entry)
            if data is None:
                continue
            if tag_matches(tag, key, data, anchor.params):
                self.stats.tags_authentic += 1
            else:
                self.stats.tags_forged += 1
                all_ok = False
        if all_ok:
            self.stats.authenticated_subframes += 1
            if self.stats.first_auth_subframe is None:
                self.stats.first_auth_subframe = t
            self._promote(Phase.AUTHENTICATING)
            self.newly_authenticated.append(abs_sf)
            self._event(t, "subframe_authentic", _digest(entry.nav_data), f"sf={abs_sf}")
        else:
            self.stats.forged_subframes += 1
            self._event(t, "subframe_forged", _digest(entry.nav_data), f"sf={abs_sf}")


# -- the world ----------------------------------------------------------------------


def run(config: ScenarioConfig) -> tuple[EventLog, Summary]:
    """Execute a scenario; identical (config, seed) give identical logs."""
    config.validate()
    log = EventLog()
    stats = Summary(duration_subframes=config.duration_subframes)
    if config.duration_subframes == 0:
        return log, stats
    try:
        registry = config.build_registry()
        broadcaster = Broadcaster(config, registry)
        adversary_kind = Adversary(config.adversary)
        forger = (QuantumForger(config, broadcaster)
                  if adversary_kind is Adversary.QUANTUM_FORGER else None)
    except (KeyError, ValueError) as exc:
        raise ConfigInvalid(f"cannot build scenario: {exc}") from exc
    receiver = Receiver(config, registry, log, stats)
    if config.install_merkle_root:
        receiver.install_root(broadcaster.tree.root)
    if config.preinstall_public_key:
        receiver.install_public_key(config.pkid, config.npkt, broadcaster.active_pk)

    rng_channel = random.Random(f"{config.seed}:channel")
    rng_adv = random.Random(f"{config.seed}:adversary")
    truth_forged: set[int] = set()
    complete_subframes: list[int] = []
    brute_targets: dict[int, tuple[bytes, list[int]]] = {}

    def emit(t: int, actor: str, kind: str, digest: str = "-", verdict: str = "-") -> None:
        log.add(EventRecord(t, GstTime.from_subframes(config.absolute_subframe(t)),
                            actor, kind, digest, verdict))

    for t in range(config.duration_subframes):
        bundle = broadcaster.bundle(t)
        stats.emitted_subframes += 1
        emit(t, "broadcaster", "emit", bundle.digest())

        active = t >= config.adversary_start_subframe
        delivered_bundle = bundle
        if active and adversary_kind is Adversary.DATA_SPOOFER:
            delivered_bundle = adversary_data_spoof(bundle)
            truth_forged.add(bundle.abs_subframe)
            emit(t, "adversary", "spoof_subframe", _digest(delivered_bundle.nav_data))
        elif active and forger is not None:
            delivered_bundle = forger.transform(bundle)
            truth_forged.add(bundle.abs_subframe)
            kind = "forge_pkr" if delivered_bundle.dsm_id == FAKE_PKR_DSM_ID else "forge_subframe"
            emit(t, "adversary", kind, _digest(delivered_bundle.nav_data))
        elif active and adversary_kind is Adversary.TAG_BRUTE_FORCER:
            fake_data = _payload_bytes(config.seed, "brute-fake", bundle.abs_subframe, 16)
            guesses = [rng_adv.getrandbits(config.tag_bits)
                       for _ in range(config.brute_force_attempts)]
            brute_targets[t] = (fake_data, guesses)
            stats.brute_force_subframes += 1

        lost = sum(1 for _ in range(PAGES_PER_SUBFRAME) if rng_channel.random() < config.page_loss)
        if lost:
            emit(t, "channel", "pages_lost", verdict=f"count={lost}")
            receiver.consume(t, None)
        else:
            complete_subframes.append(bundle.abs_subframe)
            receiver.consume(t, DeliveredSubframe(
                delivered_bundle.abs_subframe, tuple(delivered_bundle.pages()),
                delivered_bundle.nav_data, delivered_bundle.timing_data,
            ))

        # Brute-force guesses resolve once the covering key is disclosed.
        t_resolved = t - config.disclosure_delay
        if t_resolved in brute_targets:
            fake_data, guesses = brute_targets.pop(t_resolved)
            abs_sf = config.absolute_subframe(t_resolved)
            chain = broadcaster.chain(config.epoch_of(t_resolved))
            header_adkd = MACLT_PATTERNS[_MACLT_FOR_DELAY[config.disclosure_delay]][1]
            target = make_tag(chain.key_at(chain.index_for_subframe(abs_sf)), fake_data,
                              chain.params, header_tag_info(config.prn, header_adkd))
            hits = sum(1 for g in guesses if g == target.tag_bits.uint)
            if hits:
                stats.brute_force_successes += 1
            emit(t, "adversary", "brute_force", _digest(fake_data), "hit" if hits else "miss")

        for abs_sf in receiver.newly_authenticated:
            if abs_sf in truth_forged:
                stats.forged_data_accepted += 1
        receiver.newly_authenticated.clear()

    _finalize(config, receiver, stats, complete_subframes, truth_forged)
    return log, stats


def _finalize(config: ScenarioConfig, receiver: Receiver, stats: Summary,
              complete_subframes: list[int], truth_forged: set[int]) -> None:
    for abs_sf in sorted(receiver.pending):
        stats.unresolved_subframes += 1
        t = abs_sf - config.start_total_subframes - 1
        epoch = config.epoch_of(t)
        anchor = receiver._anchor_covering(abs_sf, receiver.pending[abs_sf].cid)
        opportunity = anchor is not None and any(
            u - config.disclosure_delay >= abs_sf
            and config.epoch_of(u - config.start_total_subframes - 1 - config.disclosure_delay) == epoch
            for u in complete_subframes
        )
        if not opportunity:
            stats.unresolved_expected += 1
    stats.spoofed_detected = stats.forged_subframes if truth_forged else 0
    stats.final_phase = receiver.phase.name
