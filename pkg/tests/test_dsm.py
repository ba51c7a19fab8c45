"""DSM-KROOT/DSM-PKR codecs, segmentation, accumulation, lifecycle."""

import math
import random

import pytest

from osnmalab.bits import Bits
from osnmalab.framing import GstTime
from osnmalab import dsm
from osnmalab.dsm import (
    Accumulation,
    CapacityExceeded,
    Cpks,
    DsmBlockStream,
    DsmKroot,
    DsmPkr,
    InvalidTransition,
    KeyTooLarge,
    LifecycleEvent,
    MalformedDsm,
    Mode,
    NmaHeader,
    NmaStatus,
    ReservedCode,
    SignatureTooLarge,
    accumulate,
    build_dsm_kroot,
    build_dsm_pkr,
    cpks_transition,
    decode_ks,
    decode_ts,
    encode_ks,
    encode_ts,
    kroot_body_bits,
    pack_hkroot,
    parse_dsm_kroot,
    parse_dsm_pkr,
    parse_hkroot,
    pkr_body_bits,
    segment,
    serialize_dsm_kroot,
    serialize_dsm_pkr,
    verify_dsm_kroot,
    verify_pkr,
    wire_segment,
)
from osnmalab.merkle import LeafEntry, MerkleTree
from osnmalab.schemes import default_registry
from osnmalab.tesla import HashAlgo, MacAlgo, TeslaParams, generate_chain


@pytest.fixture(scope="module")
def ec():
    return default_registry().lookup(1)


@pytest.fixture(scope="module")
def keypair(ec):
    return ec.keygen(random.Random(5))


@pytest.fixture(scope="module")
def tree(ec):
    rng = random.Random(6)
    return MerkleTree([LeafEntry(1, i, ec.keygen(rng)[0]) for i in range(16)])


def make_kroot(lk=128, ds_bits=512, rng=None, **overrides):
    rng = rng or random.Random(1)
    fields = dict(
        pkid=2, cidkr=1, hash_fn=HashAlgo.SHA256, mac_fn=MacAlgo.HMAC_SHA256,
        key_bits=lk, tag_bits=40, maclt=0x21, wn=1200, towh=1,
        alpha=rng.getrandbits(48), kroot=Bits(rng.getrandbits(lk), lk),
        ds=Bits(rng.getrandbits(ds_bits), ds_bits),
    )
    fields.update(overrides)
    return DsmKroot(**fields)


class TestCodeTables:
    def test_assigned_values(self):
        assert decode_ks(0) == 96 and decode_ks(8) == 256
        assert decode_ts(5) == 20 and decode_ts(9) == 40
        assert encode_ks(128) == 4 and encode_ts(40) == 9

    def test_reserved_rejected(self):
        with pytest.raises(ReservedCode):
            decode_ks(9)
        with pytest.raises(ReservedCode):
            decode_ts(0)
        with pytest.raises(ReservedCode):
            decode_ts(10)

    def test_extension_registry(self):
        assert decode_ts(15, {15: 10}) == 10
        assert encode_ts(10, {15: 10}) == 15


class TestNmaHeader:
    def test_eight_bits_round_trip(self):
        header = NmaHeader(NmaStatus.OPERATIONAL, 3, Cpks.EOC)
        bits = header.to_bits()
        assert len(bits) == 8
        assert NmaHeader.from_bits(bits) == header


class TestCpksTransitions:
    def test_renewal_from_nominal(self):
        header = NmaHeader(NmaStatus.OPERATIONAL, 1, Cpks.NOMINAL)
        out = cpks_transition(header, LifecycleEvent.CHAIN_RENEWAL)
        assert out.cpks == Cpks.EOC and out.cid == 2

    def test_cid_wraps(self):
        header = NmaHeader(NmaStatus.OPERATIONAL, 3, Cpks.NOMINAL)
        assert cpks_transition(header, LifecycleEvent.CHAIN_RENEWAL).cid == 0

    def test_nominal_identity(self):
        header = NmaHeader(NmaStatus.OPERATIONAL, 1, Cpks.NOMINAL)
        assert cpks_transition(header, LifecycleEvent.NOMINAL) == header

    def test_revocation_from_eoc(self):
        header = NmaHeader(NmaStatus.OPERATIONAL, 2, Cpks.EOC)
        assert cpks_transition(header, LifecycleEvent.CHAIN_REVOCATION).cpks == Cpks.CREV

    def test_undefined_pair(self):
        header = NmaHeader(NmaStatus.OPERATIONAL, 1, Cpks.CREV)
        with pytest.raises(InvalidTransition):
            cpks_transition(header, LifecycleEvent.CHAIN_RENEWAL)


class TestKrootCodec:
    @pytest.mark.parametrize("lk,ds,expected_bits,expected_blocks", [
        (96, 512, 728, 7),       # classical lower corner
        (256, 1056, 1456, 14),   # classical upper corner
    ])
    def test_corner_lengths(self, lk, ds, expected_bits, expected_blocks):
        msg = make_kroot(lk=lk, ds_bits=ds)
        assert msg.length_bits() == expected_bits
        assert msg.block_count() == expected_blocks
        assert len(serialize_dsm_kroot(msg)) == expected_bits

    def test_falcon_signature_needs_extended(self):
        msg = make_kroot(lk=256, ds_bits=5328)
        assert kroot_body_bits(256, 5328) == 104 * 55
        with pytest.raises(SignatureTooLarge):
            serialize_dsm_kroot(msg, Mode.NOMINAL)
        assert len(serialize_dsm_kroot(msg, Mode.EXTENDED)) == 104 * 55

    def test_round_trip_random(self):
        rng = random.Random(11)
        for _ in range(300):
            lk = rng.choice((96, 128, 192, 256))
            ds = rng.choice((512, 1056))
            msg = make_kroot(lk=lk, ds_bits=ds, rng=rng,
                             pkid=rng.randrange(16), cidkr=rng.randrange(4),
                             towh=rng.randrange(168), wn=rng.randrange(4096))
            assert parse_dsm_kroot(serialize_dsm_kroot(msg), ds) == msg

    def test_nonzero_padding_rejected(self):
        blob = serialize_dsm_kroot(make_kroot())
        tampered = blob[:-1] + Bits.from_binary("1")
        with pytest.raises(MalformedDsm):
            parse_dsm_kroot(tampered, 512)

    def test_start_time_property(self):
        msg = make_kroot(towh=5, wn=1000)
        assert msg.start_time == GstTime(1000, 5 * 3600)


class TestKrootSigning:
    def test_build_sign_verify(self, ec, keypair):
        pk, sk = keypair
        params = TeslaParams(key_bits=128, tag_bits=40, chain_length=10,
                             start=GstTime(1200, 7200), chain_id=1)
        chain = generate_chain(params, Bits.from_bytes(bytes(16)))
        nma = NmaHeader(NmaStatus.OPERATIONAL, 1, Cpks.NOMINAL)
        msg = build_dsm_kroot(chain, ec, sk, nma, pkid=3, alpha=42)
        assert verify_dsm_kroot(msg, nma, ec, pk)
        assert msg.kroot == chain.root_key
        assert parse_dsm_kroot(serialize_dsm_kroot(msg), 512) == msg

    def test_tampered_root_key_fails(self, ec, keypair):
        pk, sk = keypair
        params = TeslaParams(key_bits=128, tag_bits=40, chain_length=10,
                             start=GstTime(1200, 7200), chain_id=1)
        chain = generate_chain(params, Bits.from_bytes(bytes(16)))
        nma = NmaHeader(NmaStatus.OPERATIONAL, 1, Cpks.NOMINAL)
        msg = build_dsm_kroot(chain, ec, sk, nma, pkid=3)
        import dataclasses
        bad = dataclasses.replace(msg, kroot=msg.kroot.flip(0))
        assert not verify_dsm_kroot(bad, nma, ec, pk)

    def test_hour_alignment_required(self, ec, keypair):
        params = TeslaParams(key_bits=128, tag_bits=40, chain_length=10,
                             start=GstTime(1200, 3630), chain_id=1)
        chain = generate_chain(params, Bits.from_bytes(bytes(16)))
        with pytest.raises(ValueError):
            build_dsm_kroot(chain, ec, keypair[1],
                            NmaHeader(NmaStatus.OPERATIONAL, 1, Cpks.NOMINAL), pkid=3)


class TestPkrCodec:
    @pytest.mark.parametrize("npk_bits,expected_bits,expected_blocks", [
        (264, 1352, 13),    # P-256 encoded key: lower corner
        (536, 1664, 16),    # P-521 encoded key: exactly the nominal cap
    ])
    def test_corner_lengths(self, npk_bits, expected_bits, expected_blocks):
        assert pkr_body_bits(npk_bits) == expected_bits
        rng = random.Random(2)
        msg = DsmPkr(1, 4, tuple(bytes([i]) * 32 for i in range(4)),
                     Bits(rng.getrandbits(npk_bits), npk_bits))
        assert msg.block_count() == expected_blocks
        assert len(serialize_dsm_pkr(msg)) == expected_bits

    def test_falcon_key_needs_extended(self):
        assert pkr_body_bits(7176) == 8216
        assert 8216 // 104 == 79
        rng = random.Random(3)
        msg = DsmPkr(7, 0, tuple(bytes([i]) * 32 for i in range(4)),
                     Bits(rng.getrandbits(7176), 7176))
        with pytest.raises(KeyTooLarge):
            serialize_dsm_pkr(msg, Mode.NOMINAL)
        assert len(serialize_dsm_pkr(msg, Mode.EXTENDED)) == 8216

    def test_round_trip_random(self):
        rng = random.Random(13)
        for _ in range(300):
            npk_bits = rng.choice((264, 536))
            msg = DsmPkr(rng.randrange(16), rng.randrange(16),
                         tuple(rng.randbytes(32) for _ in range(4)),
                         Bits(rng.getrandbits(npk_bits), npk_bits))
            assert parse_dsm_pkr(serialize_dsm_pkr(msg), npk_bits) == msg


class TestPkrVerification:
    def test_genuine_verifies(self, ec, tree):
        entry = tree.entries[3]
        msg = build_dsm_pkr(entry.npk, 1, 3, tree)
        assert verify_pkr(msg, tree.root)

    def test_bit_flip_sweep(self, tree):
        entry = tree.entries[3]
        msg = build_dsm_pkr(entry.npk, 1, 3, tree)
        for i in range(0, len(entry.npk), 7):
            import dataclasses
            assert not verify_pkr(dataclasses.replace(msg, npk=msg.npk.flip(i)), tree.root)
        for node_i in range(4):
            import dataclasses
            path = list(msg.merkle_path)
            node = bytearray(path[node_i])
            node[0] ^= 0x80
            path[node_i] = bytes(node)
            assert not verify_pkr(dataclasses.replace(msg, merkle_path=tuple(path)), tree.root)

    def test_wrong_slot_rejected(self, tree):
        entry = tree.entries[3]
        import dataclasses
        msg = build_dsm_pkr(entry.npk, 1, 3, tree)
        wrong_slot = dataclasses.replace(msg, npkid=4)
        assert not verify_pkr(wrong_slot, tree.root)


class TestSegmentation:
    def test_kroot_seven_blocks(self):
        blocks = segment(Bits.zeros(728), Mode.NOMINAL)
        assert len(blocks) == 7

    def test_pkr_sixteen_blocks_saturates_bid(self):
        blocks = segment(Bits.zeros(1664), Mode.NOMINAL)
        assert len(blocks) == 16
        with pytest.raises(CapacityExceeded):
            segment(Bits.zeros(1664 + 104), Mode.NOMINAL)

    def test_extended_gross_capacity(self):
        blocks = segment(Bits.zeros(13312), Mode.EXTENDED)
        assert len(blocks) == 128
        with pytest.raises(CapacityExceeded):
            segment(Bits.zeros(13312 + 104), Mode.EXTENDED)

    def test_wire_blocks_lose_three_bits_extended(self):
        payload = Bits.zeros(1352)
        nominal = wire_segment(payload, Mode.NOMINAL)
        extended = wire_segment(payload, Mode.EXTENDED)
        assert all(len(b) == 104 for b in nominal)
        assert all(len(b) == 101 for b in extended)
        assert len(nominal) == 13
        assert len(extended) == math.ceil(1352 / 101)
        # Payloads past the nominal cap ride the wider id space only.
        assert len(wire_segment(Bits.zeros(5720), Mode.EXTENDED)) == math.ceil(5720 / 101)


class TestAccumulation:
    def payload(self, blocks=7):
        rng = random.Random(blocks)
        return Bits(rng.getrandbits(blocks * 104), blocks * 104)

    def test_reverse_order_identical(self):
        payload = self.payload()
        blocks = segment(payload, Mode.NOMINAL)
        stream = DsmBlockStream(3, expected_blocks=len(blocks))
        for i in reversed(range(len(blocks))):
            result = stream.add(i, blocks[i])
        assert result == Accumulation.COMPLETE
        assert stream.assembled() == payload

    def test_missing_block_incomplete_forever(self):
        blocks = segment(self.payload(), Mode.NOMINAL)
        stream = DsmBlockStream(3, expected_blocks=len(blocks))
        for i in range(1, len(blocks)):
            assert stream.add(i, blocks[i]) == Accumulation.INCOMPLETE
        for i in range(1, len(blocks)):  # duplicates are idempotent
            assert stream.add(i, blocks[i]) == Accumulation.INCOMPLETE
        assert stream.add(0, blocks[0]) == Accumulation.COMPLETE

    def test_conflicting_block_flagged(self):
        blocks = segment(self.payload(), Mode.NOMINAL)
        stream = DsmBlockStream(3, expected_blocks=len(blocks))
        stream.add(2, blocks[2])
        assert stream.add(2, blocks[2].flip(5)) == Accumulation.CONFLICT
        assert stream.add(2, blocks[2]) == Accumulation.INCOMPLETE  # original kept

    def test_accumulate_function_checks_dsm_id(self):
        blocks = segment(self.payload(), Mode.NOMINAL)
        stream = DsmBlockStream(3, expected_blocks=len(blocks))
        assert accumulate(stream, (4, 0, blocks[0])) == Accumulation.CONFLICT
        assert accumulate(stream, (3, 0, blocks[0])) == Accumulation.INCOMPLETE

    def test_extended_wire_truncation(self):
        payload = Bits(random.Random(9).getrandbits(5720), 5720)
        blocks = wire_segment(payload, Mode.EXTENDED)
        stream = DsmBlockStream(1, Mode.EXTENDED, expected_blocks=len(blocks),
                                payload_bits=5720)
        order = list(range(len(blocks)))
        random.Random(4).shuffle(order)
        for i in order:
            stream.add(i, blocks[i])
        assert stream.assembled() == payload


class TestHkrootTransport:
    def test_nominal_pack_parse(self):
        header = NmaHeader(NmaStatus.OPERATIONAL, 2, Cpks.NOMINAL)
        block = Bits(random.Random(1).getrandbits(104), 104)
        bits = pack_hkroot(header, 5, 9, block, Mode.NOMINAL)
        assert len(bits) == 120
        assert parse_hkroot(bits, Mode.NOMINAL) == (header, 5, 9, block)

    def test_extended_pack_parse(self):
        header = NmaHeader(NmaStatus.TEST, 0, Cpks.EOC)
        block = Bits(random.Random(2).getrandbits(101), 101)
        bits = pack_hkroot(header, 14, 97, block, Mode.EXTENDED)
        assert len(bits) == 120
        assert parse_hkroot(bits, Mode.EXTENDED) == (header, 14, 97, block)

    def test_block_size_must_match_mode(self):
        header = NmaHeader(NmaStatus.OPERATIONAL, 0, Cpks.NOMINAL)
        with pytest.raises(MalformedDsm):
            pack_hkroot(header, 0, 0, Bits.zeros(101), Mode.NOMINAL)


class TestGoldenVectors:
    def test_dsm_vectors(self):
        import os
        from pathlib import Path
        vec_dir = Path(os.environ.get(
            "OSNMA_LAB_VECTORS",
            Path(__file__).parent.parent / "src" / "osnmalab" / "vectors"))
        lines = (vec_dir / "dsm.txt").read_text().splitlines()
        pairs = [(lines[i], lines[i + 1]) for i in range(len(lines))
                 if lines[i].startswith("# kind=")]
        assert len(pairs) == 2
        for annotation, blob_hex in pairs:
            meta = dict(item.split("=") for item in annotation[2:].split())
            if meta["kind"] == "kroot":
                blob = Bits.from_hex(blob_hex, int(meta["blocks"]) * 104)
                msg = parse_dsm_kroot(blob, int(meta["ds_bits"]))
                assert msg.pkid == int(meta["pkid"]) and msg.cidkr == int(meta["cidkr"])
                assert msg.key_bits == int(meta["ks"]) and msg.tag_bits == int(meta["ts"])
                assert msg.alpha == int(meta["alpha"])
                assert serialize_dsm_kroot(msg).to_hex() == blob_hex
            else:
                blob = Bits.from_hex(blob_hex, int(meta["blocks"]) * 104)
                msg = parse_dsm_pkr(blob, int(meta["npk_bits"]))
                assert msg.npkt == int(meta["npkt"]) and msg.npkid == int(meta["npkid"])
                assert serialize_dsm_pkr(msg).to_hex() == blob_hex
