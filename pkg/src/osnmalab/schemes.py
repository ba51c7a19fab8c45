"""Pluggable signature schemes keyed by the 4-bit NPKT code.

Classical providers wrap real ECDSA (P-256/SHA-256 and P-521/SHA-512,
deterministic per RFC 6979) with compressed-point public keys and
fixed-width ``r||s`` signatures, which lands exactly on the documented
264/536-bit key and 512/1056-bit signature sizes.  Post-quantum schemes
default to a size-faithful surrogate: an Ed25519 core extended by
deterministic hash expansion to the exact public-key and signature bit
counts, so protocol-fit experiments see the true sizes without the
schemes' own mathematics.  Stateful hash schemes (XMSS/LMS) are carried
as characterization rows only and never sign.

NPKT codes 1 and 3 are the assigned elliptic-curve slots; code 4 is
assigned but not modelled here; the remaining codes become usable by
registering an extension mapping.
"""

from __future__ import annotations

import enum
import hashlib
import os
import random
from dataclasses import dataclass
from typing import Iterable

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, ed25519
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)

from .bits import Bits


class UnknownScheme(KeyError):
    """Scheme name not present in the characterization table."""


class UnassignedNpkt(KeyError):
    """NPKT code with no provider: reserved, or assigned but unmodelled."""


class Family(enum.Enum):
    ELLIPTIC_CURVE = "elliptic-curve"
    LATTICE = "lattice"
    HASH_STATELESS = "hash-stateless"
    HASH_STATEFUL = "hash-stateful"


@dataclass(frozen=True)
class SchemeCharacterization:
    """Size row for one algorithm: the unit of all feasibility arithmetic."""

    name: str
    pk_bits: int
    sig_bits: int
    family: Family
    quantum_resistant: bool
    npkt_code: int | None = None
    # The published XMSS row gives a public key of 256e9 bits yet 2^35
    # bytes, which disagree; both are carried and the row is flagged.
    printed_pk_bytes: int | None = None
    inconsistent_sizes: bool = False


ECDSA_P256 = SchemeCharacterization("ECDSA-P256", 264, 512, Family.ELLIPTIC_CURVE, False, npkt_code=1)
ECDSA_P521 = SchemeCharacterization("ECDSA-P521", 536, 1056, Family.ELLIPTIC_CURVE, False, npkt_code=3)
DILITHIUM2 = SchemeCharacterization("Dilithium2", 10496, 19360, Family.LATTICE, True)
FALCON512 = SchemeCharacterization("Falcon-512", 7176, 5328, Family.LATTICE, True)
SPHINCS_128S = SchemeCharacterization("SPHINCS+-128s", 256, 62848, Family.HASH_STATELESS, True)
XMSS_W32_H8 = SchemeCharacterization(
    "XMSS-w32-h8", 256 * 10**9, 2560, Family.HASH_STATEFUL, True,
    printed_pk_bytes=2**35, inconsistent_sizes=True,
)
LMS_H512 = SchemeCharacterization(
    "LMS-h512", 2**12, 131072, Family.HASH_STATEFUL, True, printed_pk_bytes=2**9,
)

CLASSICAL_SCHEMES = (ECDSA_P256, ECDSA_P521)
PQC_SCHEMES = (DILITHIUM2, FALCON512, SPHINCS_128S, XMSS_W32_H8, LMS_H512)
ALL_SCHEMES = CLASSICAL_SCHEMES + PQC_SCHEMES


def _key(name: str) -> str:
    return "".join(ch for ch in name.lower() if ch.isalnum())


_BY_KEY = {_key(s.name): s for s in ALL_SCHEMES}


def characterize(name: str) -> SchemeCharacterization:
    """Look a scheme up by name (punctuation- and case-insensitive)."""
    try:
        return _BY_KEY[_key(name)]
    except KeyError:
        raise UnknownScheme(f"unknown scheme {name!r}") from None


def characterization_csv(schemes: Iterable[SchemeCharacterization] = ALL_SCHEMES) -> str:
    lines = ["name,pk_bits,sig_bits,family,quantum_resistant"]
    for s in schemes:
        lines.append(f"{s.name},{s.pk_bits},{s.sig_bits},{s.family.value},{s.quantum_resistant}")
    return "\n".join(lines) + "\n"


# -- providers ------------------------------------------------------------


def _seed_bytes(rng: random.Random | None, count: int) -> bytes:
    return rng.randbytes(count) if rng is not None else os.urandom(count)


class EcdsaProvider:
    """Real elliptic-curve signatures at the documented bit sizes."""

    surrogate = False

    _ORDERS = {
        "secp256r1": int(
            "ffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551", 16),
        "secp521r1": int(
            "01fffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffa"
            "51868783bf2f966b7fcc0148f709a5d03bb5c9b8899c47aebb6fb71e91386409", 16),
    }

    def __init__(self, characterization: SchemeCharacterization) -> None:
        self.characterization = characterization
        if characterization is ECDSA_P256:
            self._curve: ec.EllipticCurve = ec.SECP256R1()
            self._hash: hashes.HashAlgorithm = hashes.SHA256()
        elif characterization is ECDSA_P521:
            self._curve = ec.SECP521R1()
            self._hash = hashes.SHA512()
        else:
            raise UnknownScheme(f"no ECDSA backing for {characterization.name}")
        self._scalar_bytes = self.characterization.sig_bits // 16

    def keygen(self, rng: random.Random | None = None) -> tuple[Bits, bytes]:
        """Return (public key bits, opaque private key bytes)."""
        order = self._ORDERS[self._curve.name]
        if rng is not None:
            value = rng.randrange(1, order)
        else:
            value = int.from_bytes(os.urandom(self._scalar_bytes + 8), "big") % (order - 1) + 1
        private = ec.derive_private_key(value, self._curve)
        public = private.public_key().public_bytes(
            serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint)
        return Bits.from_bytes(public), value.to_bytes(self._scalar_bytes, "big")

    def sign(self, private_key: bytes, message: bytes) -> Bits:
        key = ec.derive_private_key(int.from_bytes(private_key, "big"), self._curve)
        der = key.sign(message, ec.ECDSA(self._hash, deterministic_signing=True))
        r, s = decode_dss_signature(der)
        raw = r.to_bytes(self._scalar_bytes, "big") + s.to_bytes(self._scalar_bytes, "big")
        return Bits.from_bytes(raw)

    def verify(self, public_key: Bits, message: bytes, signature: Bits) -> bool:
        if len(public_key) != self.characterization.pk_bits or len(signature) != self.characterization.sig_bits:
            return False
        try:
            point = ec.EllipticCurvePublicKey.from_encoded_point(self._curve, public_key.to_bytes())
            raw = signature.to_bytes()
            r = int.from_bytes(raw[:self._scalar_bytes], "big")
            s = int.from_bytes(raw[self._scalar_bytes:], "big")
            point.verify(encode_dss_signature(r, s), message, ec.ECDSA(self._hash))
            return True
        except (ValueError, InvalidSignature):
            return False


def _expand(seed: bytes, out_bits: int) -> Bits:
    """Deterministic hash expansion of *seed* to exactly *out_bits*."""
    if out_bits == 0:
        return Bits.zeros(0)
    chunks = []
    counter = 0
    while len(chunks) * 32 * 8 < out_bits:
        chunks.append(hashlib.sha256(seed + counter.to_bytes(4, "big")).digest())
        counter += 1
    return Bits.from_bytes(b"".join(chunks), out_bits)


class SurrogateProvider:
    """Size-faithful stand-in for a post-quantum scheme.

    Keys and signatures are an Ed25519 core (32-byte key, 64-byte
    signature) followed by hash expansion up to the scheme's exact bit
    counts; verification checks the expansion and the core signature,
    so it needs nothing beyond the public key.  The construction is as
    unforgeable as its core, which is all a desk-scale experiment asks
    of it; the mathematics of the modelled scheme is out of scope.
    """

    surrogate = True
    _CORE_PK_BITS = 256
    _CORE_SIG_BITS = 512

    def __init__(self, characterization: SchemeCharacterization) -> None:
        if characterization.pk_bits < self._CORE_PK_BITS or characterization.sig_bits < self._CORE_SIG_BITS:
            raise UnknownScheme(f"{characterization.name} is too small for the surrogate core")
        if characterization.family is Family.HASH_STATEFUL:
            raise UnknownScheme(f"{characterization.name} is stateful and never signs here")
        self.characterization = characterization

    def keygen(self, rng: random.Random | None = None) -> tuple[Bits, bytes]:
        seed = _seed_bytes(rng, 32)
        core = ed25519.Ed25519PrivateKey.from_private_bytes(seed)
        core_pk = core.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        pad = _expand(b"pk" + core_pk, self.characterization.pk_bits - self._CORE_PK_BITS)
        return Bits.from_bytes(core_pk) + pad, seed

    def sign(self, private_key: bytes, message: bytes) -> Bits:
        core = ed25519.Ed25519PrivateKey.from_private_bytes(private_key)
        core_sig = core.sign(message)
        pad = _expand(b"sig" + core_sig + hashlib.sha256(message).digest(),
                      self.characterization.sig_bits - self._CORE_SIG_BITS)
        return Bits.from_bytes(core_sig) + pad

    def verify(self, public_key: Bits, message: bytes, signature: Bits) -> bool:
        if len(public_key) != self.characterization.pk_bits or len(signature) != self.characterization.sig_bits:
            return False
        core_pk = public_key[:self._CORE_PK_BITS]
        if public_key[self._CORE_PK_BITS:] != _expand(
                b"pk" + core_pk.to_bytes(), self.characterization.pk_bits - self._CORE_PK_BITS):
            return False
        core_sig = signature[:self._CORE_SIG_BITS]
        if signature[self._CORE_SIG_BITS:] != _expand(
                b"sig" + core_sig.to_bytes() + hashlib.sha256(message).digest(),
                self.characterization.sig_bits - self._CORE_SIG_BITS):
            return False
        try:
            ed25519.Ed25519PublicKey.from_public_bytes(core_pk.to_bytes()).verify(
                core_sig.to_bytes(), message)
            return True
        except InvalidSignature:
            return False


class HybridProvider:
    """Classical + post-quantum composite; sizes are the plain sums."""

    surrogate = True

    def __init__(self, classical, pqc) -> None:
        self._classical = classical
        self._pqc = pqc
        a, b = classical.characterization, pqc.characterization
        self.characterization = SchemeCharacterization(
            name=f"{a.name}+{b.name}",
            pk_bits=a.pk_bits + b.pk_bits,
            sig_bits=a.sig_bits + b.sig_bits,
            family=b.family,
            quantum_resistant=b.quantum_resistant,
        )

    def keygen(self, rng: random.Random | None = None) -> tuple[Bits, tuple[bytes, bytes]]:
        pk_a, sk_a = self._classical.keygen(rng)
        pk_b, sk_b = self._pqc.keygen(rng)
        return pk_a + pk_b, (sk_a, sk_b)

    def sign(self, private_key: tuple[bytes, bytes], message: bytes) -> Bits:
        return self._classical.sign(private_key[0], message) + self._pqc.sign(private_key[1], message)

    def verify(self, public_key: Bits, message: bytes, signature: Bits) -> bool:
        a, b = self._classical.characterization, self._pqc.characterization
        if len(public_key) != a.pk_bits + b.pk_bits or len(signature) != a.sig_bits + b.sig_bits:
            return False
        return (self._classical.verify(public_key[:a.pk_bits], message, signature[:a.sig_bits])
                and self._pqc.verify(public_key[a.pk_bits:], message, signature[a.sig_bits:]))


def provider_for(name: str):
    """Build the natural provider for a scheme name ('a+b' builds a hybrid)."""
    if "+" in name and not name.strip().lower().startswith("sphincs"):
        left, right = name.split("+", 1)
        return HybridProvider(provider_for(left), provider_for(right))
    row = characterize(name)
    if row.family is Family.ELLIPTIC_CURVE:
        return EcdsaProvider(row)
    return SurrogateProvider(row)


# -- NPKT registry ----------------------------------------------------------


ASSIGNED_UNMODELLED_NPKT = 4


class SchemeRegistry:
    """NPKT code -> provider map with configurable extension slots."""

    def __init__(self) -> None:
        self._providers: dict[int, object] = {
            1: EcdsaProvider(ECDSA_P256),
            3: EcdsaProvider(ECDSA_P521),
        }

    def lookup(self, npkt: int):
        if npkt == ASSIGNED_UNMODELLED_NPKT and npkt not in self._providers:
            raise UnassignedNpkt("NPKT 4 is assigned in the code space but not modelled")
        try:
            return self._providers[npkt]
        except KeyError:
            raise UnassignedNpkt(f"NPKT {npkt} has no registered scheme") from None

    def assign(self, npkt: int, scheme_name: str) -> None:
        """Bind a free NPKT code to a scheme (crypto-agility extension)."""
        if not 0 <= npkt < 16:
            raise ValueError(f"npkt {npkt} outside 0..15")
        self._providers[npkt] = provider_for(scheme_name)

    def assigned_codes(self) -> list[int]:
        return sorted(self._providers)

    def load_config(self, text: str) -> None:
        """Apply extension lines of the form ``npkt=<code> scheme=<name>``."""
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = dict(item.split("=", 1) for item in line.split())
            self.assign(int(fields["npkt"]), fields["scheme"])


def default_registry() -> SchemeRegistry:
    return SchemeRegistry()
