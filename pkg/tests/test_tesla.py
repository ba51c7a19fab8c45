"""Key chains, tags, and the MACK codec against independent oracles."""

import hashlib
import hmac as hmac_mod
import random

import pytest

from osnmalab.bits import Bits
from osnmalab.framing import GstTime
from osnmalab import tesla
from osnmalab.tesla import (
    BadLength,
    BadSeedLength,
    IndexOrder,
    MalformedPadding,
    RootKeyUse,
    Tag,
    TagInfo,
    TeslaParams,
    TooManyTags,
    Verdict,
    build_mack,
    check_chain,
    derive_previous,
    dump_chain,
    generate_chain,
    header_tag_info,
    load_chain,
    make_tag,
    parse_mack,
    rescaled,
    serialize_mack,
    verify_key,
    verify_tags,
)


def params(lk=128, lt=40, n=20, cid=1, start=GstTime(1200, 3600)):
    return TeslaParams(key_bits=lk, tag_bits=lt, chain_length=n, start=start, chain_id=cid)


def seed_bits(lk=128, fill=0x5A):
    return Bits.from_bytes(bytes([fill]) * (lk // 8))


def oracle_derive(key_bytes: bytes, index: int, p: TeslaParams) -> bytes:
    """Independent reimplementation of one derivation step."""
    gst = p.start.add_subframes(index)
    salt = bytes([p.chain_id])
    salt += ((gst.week % 4096) << 20 | gst.tow_seconds).to_bytes(4, "big")
    return hashlib.sha256(key_bytes + salt).digest()[: p.key_bits // 8]


class TestChain:
    def test_single_derivation(self):
        p = params(n=1)
        chain = generate_chain(p, seed_bits())
        assert len(chain.keys) == 2
        assert chain.root_key == derive_previous(chain.seed_key, 1, p)

    def test_iterated_hash_oracle_n100(self):
        p = params(n=100)
        chain = generate_chain(p, seed_bits())
        key = seed_bits().to_bytes()
        for index in range(100, 0, -1):
            key = oracle_derive(key, index, p)
        assert chain.root_key.to_bytes() == key

    def test_different_seeds_different_roots(self):
        p = params(n=10)
        roots = {generate_chain(p, seed_bits(fill=f)).root_key for f in range(8)}
        assert len(roots) == 8

    def test_bad_seed_length(self):
        with pytest.raises(BadSeedLength):
            generate_chain(params(lk=128), Bits.zeros(96))

    def test_root_never_signs(self):
        chain = generate_chain(params(n=5), seed_bits())
        with pytest.raises(RootKeyUse):
            chain.signing_key(0)
        assert chain.signing_key(1) == chain.keys[1]


class TestVerifyKey:
    def test_one_step(self):
        p = params(n=5)
        chain = generate_chain(p, seed_bits())
        assert verify_key(chain.keys[1], 1, (chain.root_key, 0), p)

    def test_bridges_gaps(self):
        p = params(n=60)
        chain = generate_chain(p, seed_bits())
        assert verify_key(chain.keys[50], 50, (chain.keys[30], 30), p)
        assert verify_key(chain.keys[60], 60, (chain.root_key, 0), p)

    def test_single_bit_flip_sweep(self):
        p = params(lk=96, n=3)
        chain = generate_chain(p, seed_bits(lk=96))
        genuine = chain.keys[1]
        for i in range(96):
            assert not verify_key(genuine.flip(i), 1, (chain.root_key, 0), p)

    def test_index_order_enforced(self):
        p = params(n=5)
        chain = generate_chain(p, seed_bits())
        with pytest.raises(IndexOrder):
            verify_key(chain.keys[1], 1, (chain.keys[2], 2), p)

    def test_random_subset_deletion_bridges(self):
        # Dropping any disclosed keys never blocks later verification.
        p = params(n=40)
        chain = generate_chain(p, seed_bits())
        rng = random.Random(3)
        for _ in range(20):
            kept = sorted(rng.sample(range(1, 41), 8))
            trusted = (chain.root_key, 0)
            for idx in kept:
                assert verify_key(chain.keys[idx], idx, trusted, p)
                trusted = (chain.keys[idx], idx)


class TestTags:
    def test_deterministic(self):
        p = params()
        key = seed_bits()
        info = TagInfo(1, 0, 0)
        assert make_tag(key, b"data", p, info) == make_tag(key, b"data", p, info)

    def test_hmac_oracle_full_width(self):
        p = params(lt=40)
        key = seed_bits()
        info = TagInfo(7, 4, 2)
        expected = hmac_mod.new(
            key.to_bytes(), bytes([7, 0x42]) + b"payload", hashlib.sha256).digest()
        tag = make_tag(key, b"payload", p, info)
        assert tag.tag_bits.to_bytes() == expected[:5]

    def test_distinct_keys_distinct_tags(self):
        p = params(lt=40)
        rng = random.Random(9)
        info = TagInfo(1, 0, 0)
        collisions = 0
        for _ in range(2000):
            k1 = Bits(rng.getrandbits(128), 128)
            k2 = Bits(rng.getrandbits(128), 128)
            if make_tag(k1, b"x", p, info).tag_bits == make_tag(k2, b"x", p, info).tag_bits:
                collisions += 1
        assert collisions <= 1  # ~2000 * 2^-40 expected

    def test_info_layout(self):
        info = TagInfo(prn=0xAB, adkd=12, cop=3)
        assert info.to_bits().to_hex() == "abc3"
        assert TagInfo.from_bits(info.to_bits()) == info


class TestTagCount:
    @pytest.mark.parametrize("lk,lt,expected", [
        (128, 40, 6),    # floor(352 / 56)
        (256, 40, 4),    # lower bound
        (96, 20, 10),    # upper bound
    ])
    def test_formula_points(self, lk, lt, expected):
        assert params(lk=lk, lt=lt).tag_count == expected

    def test_full_grid_within_bounds(self):
        for lk in tesla.KEY_SIZES:
            for lt in tesla.TAG_SIZES:
                n_t = params(lk=lk, lt=lt).tag_count
                assert 4 <= n_t <= 10
                assert n_t == (480 - lk) // (lt + 16)


class TestMackCodec:
    def build(self, p, subframe_offset=5):
        chain = generate_chain(p, seed_bits(p.key_bits))
        sf = chain.start_subframe + subframe_offset
        entries = [(header_tag_info(1), b"nav-data"), (TagInfo(1, 4, 0), b"timing")]
        return chain, build_mack(chain, sf, entries, 1)

    def test_serialized_length_grid(self):
        for lk in tesla.KEY_SIZES:
            for lt in tesla.TAG_SIZES:
                p = params(lk=lk, lt=lt)
                _, msg = self.build(p)
                assert len(serialize_mack(msg, p)) == 480

    def test_round_trip_random_messages(self):
        rng = random.Random(17)
        for _ in range(500):
            lk = rng.choice(tesla.KEY_SIZES)
            lt = rng.choice(tesla.TAG_SIZES)
            p = params(lk=lk, lt=lt)
            tags = tuple(
                Tag(Bits(rng.getrandbits(lt), lt),
                    TagInfo(rng.randrange(256), rng.randrange(16), rng.randrange(16)))
                for _ in range(p.tag_count - 1))
            msg = tesla.MackMessage(Bits(rng.getrandbits(lt), lt), rng.getrandbits(12),
                                    tags, Bits(rng.getrandbits(lk), lk))
            assert parse_mack(serialize_mack(msg, p), p) == msg

    def test_all_zero_parse(self):
        p = params(lk=128, lt=40)
        msg = parse_mack(Bits.zeros(480), p)
        assert msg.header_tag.uint == 0 and msg.macseq == 0
        assert msg.key.uint == 0
        assert all(t.tag_bits.uint == 0 for t in msg.tags)

    def test_bad_length(self):
        with pytest.raises(BadLength):
            parse_mack(Bits.zeros(479), params())

    def test_nonzero_padding_rejected(self):
        p = params(lk=128, lt=40)
        blob = Bits.zeros(479) + Bits.from_binary("1")
        with pytest.raises(MalformedPadding):
            parse_mack(blob, p)

    def test_too_many_tags(self):
        p = params(lk=256, lt=40)  # 4 slots
        chain = generate_chain(p, seed_bits(256))
        entries = [(TagInfo(1, 0, 0), b"x")] * 5
        with pytest.raises(TooManyTags):
            build_mack(chain, chain.start_subframe + 5, entries, 1)

    def test_disclosed_key_delay(self):
        p = params(n=30)
        chain = generate_chain(p, seed_bits())
        sf = chain.start_subframe + 12
        msg = build_mack(chain, sf, [(header_tag_info(1), b"d")], 1)
        assert msg.key == chain.keys[11]
        slow = build_mack(chain, sf, [(header_tag_info(1, tesla.ADKD_SLOW), b"d")], 10)
        assert slow.key == chain.keys[2]

    def test_golden_vectors(self, tmp_path):
        import os
        from pathlib import Path
        vec_dir = Path(os.environ.get(
            "OSNMA_LAB_VECTORS",
            Path(__file__).parent.parent / "src" / "osnmalab" / "vectors"))
        lines = (vec_dir / "mack.txt").read_text().splitlines()
        pairs = [(lines[i], lines[i + 1]) for i in range(len(lines)) if lines[i].startswith("# lk=")]
        assert pairs
        for annotation, blob_hex in pairs:
            meta = dict(item.split("=") for item in annotation[2:].split())
            p = params(lk=int(meta["lk"]), lt=int(meta["lt"]))
            msg = parse_mack(Bits.from_hex(blob_hex, 480), p)
            assert msg.header_tag.to_hex() == meta["header_tag"]
            assert msg.macseq == int(meta["macseq"])
            assert msg.key.to_hex() == meta["key"]
            assert serialize_mack(msg, p).to_hex() == blob_hex


class TestReceiverVerify:
    def setup_method(self):
        self.p = params(n=30)
        self.chain = generate_chain(self.p, seed_bits())
        self.info = TagInfo(1, 0, 0)
        key = self.chain.keys[5]
        self.pending = [
            tesla.PendingTag(make_tag(key, b"subframe-data", self.p, self.info), b"subframe-data"),
            tesla.PendingTag(make_tag(key, b"other", self.p, self.info), b"other"),
        ]

    def test_genuine_flow_authentic(self):
        verdicts = verify_tags(self.pending, (self.chain.keys[5], 5),
                               (self.chain.root_key, 0), self.p)
        assert verdicts == [Verdict.AUTHENTIC, Verdict.AUTHENTIC]

    def test_tampered_data_forged(self):
        tampered = [tesla.PendingTag(self.pending[0].tag, b"subframe-datA")]
        verdicts = verify_tags(tampered, (self.chain.keys[5], 5),
                               (self.chain.root_key, 0), self.p)
        assert verdicts == [Verdict.FORGED]

    def test_bad_key_gates_everything(self):
        bogus = self.chain.keys[5].flip(0)
        verdicts = verify_tags(self.pending, (bogus, 5), (self.chain.root_key, 0), self.p)
        assert verdicts == [Verdict.KEY_UNVERIFIED, Verdict.KEY_UNVERIFIED]

    def test_root_index_never_authenticates(self):
        verdicts = verify_tags(self.pending, (self.chain.root_key, 0),
                               (self.chain.root_key, -1), self.p)
        assert set(verdicts) == {Verdict.KEY_UNVERIFIED}


class TestChainDump:
    def test_round_trip(self):
        chain = generate_chain(params(n=10), seed_bits())
        text = dump_chain(chain)
        loaded = load_chain(text)
        assert loaded.keys == chain.keys
        assert loaded.params.key_bits == 128
        assert check_chain(loaded)

    def test_dump_layout(self):
        chain = generate_chain(params(n=3), seed_bits())
        lines = dump_chain(chain).splitlines()
        assert lines[0].startswith("l_K=128 N=3 hash=SHA-256 cid=1")
        assert len(lines) == 5
        assert lines[1] == chain.root_key.to_hex()

    def test_tampered_dump_fails_check(self):
        chain = generate_chain(params(n=4), seed_bits())
        keys = list(chain.keys)
        keys[2] = keys[2].flip(7)
        assert not check_chain(tesla.TeslaChain(chain.params, tuple(keys)))


class TestForgeryStatistics:
    def test_single_guess_rate_scaled_lt10(self):
        # Acceptance anchor: acceptance rate of random guesses against
        # 10-bit tags stays within 3 sigma of 2^-10 over 1e5 trials.
        p = rescaled(params(lk=96, lt=20), 10)
        rng = random.Random(1234)
        key = Bits(rng.getrandbits(96), 96)
        info = TagInfo(1, 0, 0)
        trials = 100_000
        hits = 0
        for i in range(trials):
            tag = make_tag(key, i.to_bytes(4, "big"), p, info)
            if rng.getrandbits(10) == tag.tag_bits.uint:
                hits += 1
        expected = trials * 2**-10
        sigma = (trials * 2**-10 * (1 - 2**-10)) ** 0.5
        assert abs(hits - expected) <= 3 * sigma
