import random

import pytest

from cratedict.core_bits import AccessMeter
from cratedict.csd import CountingSetDictionary, VarCountingSetDictionary


def test_allocation_and_worked_sizes():
    csd = CountingSetDictionary(support=5, payload_bits=10, max_count=8)
    assert csd.counter_bits == 3
    assert csd.record_bits == 14
    assert csd.allocated_bits == 5 * (10 + 3 + 1) == 70
    assert csd.buf.bits == 70


def test_insert_count_delete_cycle():
    csd = CountingSetDictionary(support=4, payload_bits=8, max_count=4)
    assert csd.insert(0x21) == "new"
    assert csd.insert(0x21) == "counted"
    assert csd.insert(0x07) == "new"
    assert csd.query(0x21) == 2
    assert csd.query(0x07) == 1
    assert csd.query(0x55) == 0
    # records stay sorted by payload
    assert [p for p, _ in csd.verify()] == [0x07, 0x21]
    assert csd.delete(0x21)
    assert csd.query(0x21) == 1
    assert csd.delete(0x21)
    assert csd.query(0x21) == 0
    assert not csd.delete(0x21)
    # physical compaction zeroes the tail
    assert csd.buf.peek(csd.record_bits, csd.buf.bits - csd.record_bits) == 0
    csd.verify()


def test_overflow_signals():
    csd = CountingSetDictionary(support=2, payload_bits=4, max_count=2)
    assert csd.insert(1) == "new"
    assert csd.insert(2) == "new"
    assert csd.insert(3) is None          # support exhausted
    assert csd.insert(1) == "counted"
    assert csd.insert(1) is None          # counter ceiling
    assert csd.query(1) == 2
    csd.verify()


def test_rank_addressed_records():
    csd = CountingSetDictionary(support=6, payload_bits=12, max_count=4)
    assert csd.insert_at(0, 0xA10)
    assert csd.insert_at(1, 0xA20)
    assert csd.insert_at(1, 0xA15)
    assert [p for p, _ in csd.verify()] == [0xA10, 0xA15, 0xA20]
    assert csd.increment_at(1)
    assert csd.count_at(1) == 2
    assert csd.decrement_at(1) == 1
    assert csd.decrement_at(1) == 0
    assert [p for p, _ in csd.verify()] == [0xA10, 0xA20]
    csd.replace_payload_at(0, 0xA11)
    assert csd.payload_at(0) == 0xA11
    csd.verify()


def test_group_range_by_prefix():
    csd = CountingSetDictionary(support=8, payload_bits=8, max_count=2)
    for p in (0x12, 0x15, 0x31, 0x33, 0x35):
        csd.insert(p)
    assert csd.group_range(0x1, 4) == (0, 2)
    assert csd.group_range(0x3, 4) == (2, 5)
    assert csd.group_range(0x2, 4) == (2, 2)
    assert csd.group_range(0x0, 4) == (0, 0)
    assert csd.group_range(0xF, 4) == (5, 5)


def test_differential_vs_counter_map():
    rng = random.Random(0xD1CE)
    csd = CountingSetDictionary(support=8, payload_bits=6, max_count=8)
    oracle: dict[int, int] = {}
    for _ in range(100_000):
        p = rng.randrange(64)
        action = rng.random()
        if action < 0.45:
            status = csd.insert(p)
            if p in oracle:
                want = "counted" if oracle[p] < 8 else None
            else:
                want = "new" if len(oracle) < 8 else None
            assert status == want
            if status:
                oracle[p] = oracle.get(p, 0) + 1
        elif action < 0.8:
            present = oracle.get(p, 0) > 0
            assert csd.delete(p) == present
            if present:
                oracle[p] -= 1
                if not oracle[p]:
                    del oracle[p]
        else:
            assert csd.query(p) == oracle.get(p, 0)
    assert csd.verify() == sorted(oracle.items())


def test_csd_meter_constant_cost():
    meter = AccessMeter()
    csd = CountingSetDictionary(support=89, payload_bits=56, max_count=4096,
                                block_words=16, meter=meter)
    words = -(-csd.allocated_bits // 1024) * 16
    assert words == 96  # six 1024-bit virtual words
    costs = set()
    for p in range(89):
        before = meter.total
        assert csd.insert(p) == "new"
        costs.add(meter.total - before)
    assert costs == {2 * words}
    before = meter.total
    csd.query(5)
    assert meter.total - before == words


def test_csd_serialization_roundtrip():
    csd = CountingSetDictionary(support=5, payload_bits=10, max_count=8)
    csd.insert(0x2B)
    csd.insert(0x2B)
    csd.insert(0x1F)
    clone = CountingSetDictionary(support=5, payload_bits=10, max_count=8)
    clone.load_bytes(csd.to_bytes())
    assert clone.verify() == csd.verify()


# -- variable-length frames ---------------------------------------------------


def frag(s):
    return (int(s, 2) if s else 0, len(s))


def test_varcsd_allocation_and_empty_layout():
    v = VarCountingSetDictionary(cap_f=4, len_budget=6, frames=8)
    assert v.allocated_bits == 2 * (4 + 6 + 8) == 36
    # empty store is just frame separators
    assert v.buf.peek(0, 16) == int("11" * 8, 2)
    assert v.decode() == [[] for _ in range(8)]


def test_varcsd_frame_isolation():
    v = VarCountingSetDictionary(cap_f=6, len_budget=12, frames=3)
    assert v.insert(1, 0, *frag("010"))
    assert v.insert(0, 0, *frag("1"))
    assert v.insert(1, 1, *frag(""))
    assert v.insert(2, 0, *frag("0011"))
    assert v.read_frame(0) == [frag("1")]
    assert v.read_frame(1) == [frag("010"), frag("")]
    assert v.read_frame(2) == [frag("0011")]
    assert v.replace(1, 0, *frag("0110"))
    assert v.read_frame(1) == [frag("0110"), frag("")]
    assert v.delete(1, 0) == frag("0110")
    assert v.read_frame(1) == [frag("")]
    v.verify()


def test_varcsd_overflow_signals():
    v = VarCountingSetDictionary(cap_f=2, len_budget=4, frames=2)
    assert v.insert(0, 0, *frag("1111"))
    assert not v.insert(1, 0, *frag("0"))   # length budget
    assert v.insert(1, 0, *frag(""))
    assert not v.insert(1, 1, *frag(""))    # element capacity
    assert not v.replace(1, 0, *frag("1"))  # budget again
    v.verify()


def test_varcsd_differential_random_ops():
    rng = random.Random(123)
    v = VarCountingSetDictionary(cap_f=10, len_budget=30, frames=4)
    mirror = [[] for _ in range(4)]
    for _ in range(20_000):
        fi = rng.randrange(4)
        group = mirror[fi]
        action = rng.random()
        if action < 0.5:
            ln = rng.randint(0, 5)
            bits = rng.getrandbits(ln) if ln else 0
            rank = rng.randint(0, len(group))
            ok = v.insert(fi, rank, bits, ln)
            fits = (sum(len(g) for g in mirror) < 10 and
                    sum(l for g in mirror for _, l in g) + ln <= 30)
            assert ok == fits
            if ok:
                group.insert(rank, (bits, ln))
        elif action < 0.8 and group:
            rank = rng.randrange(len(group))
            assert v.delete(fi, rank) == group.pop(rank)
        elif group:
            rank = rng.randrange(len(group))
            ln = rng.randint(0, 5)
            bits = rng.getrandbits(ln) if ln else 0
            total = sum(l for g in mirror for _, l in g)
            fits = total - group[rank][1] + ln <= 30
            assert v.replace(fi, rank, bits, ln) == fits
            if fits:
                group[rank] = (bits, ln)
        assert v.read_frame(fi) == group
    v.verify()


def test_varcsd_serialization_roundtrip():
    v = VarCountingSetDictionary(cap_f=4, len_budget=8, frames=3)
    v.insert(0, 0, *frag("01"))
    v.insert(2, 0, *frag(""))
    v.insert(2, 1, *frag("110"))
    clone = VarCountingSetDictionary(cap_f=4, len_budget=8, frames=3)
    clone.load_bytes(v.to_bytes())
    assert clone.frame_elems == v.frame_elems
    clone.verify()


def test_varcsd_rank_bounds():
    v = VarCountingSetDictionary(cap_f=4, len_budget=8, frames=2)
    with pytest.raises(IndexError):
        v.insert(0, 1, *frag("1"))
    with pytest.raises(IndexError):
        v.delete(0, 0)
