import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cratedict.core_bits import AccessMeter
from cratedict.pocket_dict import PocketDictionary, VarPocketDictionary, encode_fragment

WORKED_SET = [
    (0, 0b001011), (0, 0b011111), (0, 0b100100), (1, 0b101111),
    (3, 0b001010), (3, 0b011111), (4, 0b000111), (4, 0b000111),
]


def test_worked_example_layout():
    pd = PocketDictionary(m=5, f=8, value_bits=6)
    assert pd.allocated_bits == 5 + 8 * (1 + 6) == 61
    shuffled = WORKED_SET[:]
    random.Random(3).shuffle(shuffled)
    for q, r in shuffled:
        assert pd.insert(q, r)
    assert pd.header.peek(0, 13) == int("1110100110110", 2)
    body = "001011011111100100101111001010011111000111000111"
    assert pd.body.peek(0, 48) == int(body, 2)
    assert pd.full
    assert not pd.insert(2, 1)  # at capacity
    assert pd.query(4, 0b000111) == 2
    assert pd.query(2, 0) == 0
    assert pd.range_of(3) == (4, 6)
    assert pd.verify() == sorted(WORKED_SET)


def test_insert_delete_examples():
    pd = PocketDictionary(m=4, f=6, value_bits=4)
    for q, r in [(1, 3), (1, 3), (2, 9), (0, 15)]:
        assert pd.insert(q, r)
    assert pd.query(1, 3) == 2
    assert pd.delete(1, 3)
    assert pd.query(1, 3) == 1
    assert pd.delete(1, 3)
    assert not pd.delete(1, 3)
    assert pd.query(1, 3) == 0
    assert pd.occupancy == 2
    pd.verify()


def test_rank_addressed_mutations():
    pd = PocketDictionary(m=3, f=5, value_bits=5)
    assert pd.insert_at(1, 0, 7)
    assert pd.insert_at(1, 0, 9)      # explicit rank, not value order
    assert pd.insert_at(1, 2, 11)
    assert pd.read_group(1) == [9, 7, 11]
    assert pd.value_at(1, 1) == 7
    pd.replace_at(1, 1, 30)
    assert pd.read_group(1) == [9, 30, 11]
    assert pd.delete_at(1, 0) == 9
    assert pd.read_group(1) == [30, 11]
    with pytest.raises(IndexError):
        pd.delete_at(1, 5)
    pd.verify()


def test_differential_vs_counts_oracle():
    rng = random.Random(0xBEEF)
    pd = PocketDictionary(m=6, f=10, value_bits=4)
    oracle: dict[tuple[int, int], int] = {}
    for _ in range(30_000):
        q = rng.randrange(6)
        r = rng.randrange(16)
        action = rng.random()
        if action < 0.45:
            ok = pd.insert(q, r)
            assert ok == (sum(oracle.values()) < 10)
            if ok:
                oracle[(q, r)] = oracle.get((q, r), 0) + 1
        elif action < 0.8:
            present = oracle.get((q, r), 0) > 0
            assert pd.delete(q, r) == present
            if present:
                oracle[(q, r)] -= 1
        else:
            assert pd.query(q, r) == oracle.get((q, r), 0)
    assert pd.verify() == sorted(k for k, v in oracle.items() for _ in range(v))


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 7)), max_size=12))
@settings(max_examples=200, deadline=None)
def test_sorted_order_invariant(pairs):
    pd = PocketDictionary(m=5, f=12, value_bits=3)
    for q, r in pairs:
        assert pd.insert(q, r)
    assert pd.verify() == sorted(pairs)


def test_meter_cost_constant_per_op_kind():
    meter = AccessMeter()
    pd = PocketDictionary(m=102, f=129, value_bits=10, block_words=16, meter=meter)
    words = -(-pd.allocated_bits // 1024) * 16
    assert words == 32  # two 1024-bit virtual words
    costs = set()
    rng = random.Random(5)
    for _ in range(129):
        before = meter.total
        assert pd.insert(rng.randrange(102), rng.randrange(1024))
        costs.add(meter.total - before)
    assert costs == {2 * words}
    before = meter.total
    assert not pd.insert(0, 0)  # rejected insert still reads the component
    assert meter.total - before == words
    before = meter.total
    pd.query(3, 5)
    assert meter.total - before == words


def test_pd_serialization_roundtrip():
    pd = PocketDictionary(m=5, f=8, value_bits=6)
    for q, r in WORKED_SET:
        pd.insert(q, r)
    clone = PocketDictionary(m=5, f=8, value_bits=6)
    clone.load_bytes(pd.to_bytes())
    assert clone.counts == pd.counts
    assert clone.occupancy == pd.occupancy
    assert clone.verify() == pd.verify()


# -- variable-length store ----------------------------------------------------


def frag(s: str) -> tuple[int, int]:
    return (int(s, 2) if s else 0, len(s))


def test_encode_fragment():
    assert encode_fragment(0b101, 3) == int("01" "00" "01" "10", 2)
    assert encode_fragment(0, 0) == 0b10  # empty string is a lone end marker


def test_varpd_basic_flow():
    vpd = VarPocketDictionary(slots_m=4, cap_f=6, len_budget=10)
    assert vpd.allocated_bits == 4 + 3 * 6 + 2 * 10
    assert vpd.insert(2, 0, *frag("01"))
    assert vpd.insert(2, 1, *frag("001"))
    assert vpd.insert(0, 0, *frag(""))
    assert vpd.read_group(2) == [frag("01"), frag("001")]
    assert vpd.read_group(0) == [frag("")]
    assert vpd.read_group(1) == []
    assert vpd.replace(2, 0, *frag("0111"))
    assert vpd.read_group(2) == [frag("0111"), frag("001")]
    assert vpd.delete(2, 1) == frag("001")
    assert vpd.read_group(2) == [frag("0111")]
    vpd.verify()


def test_varpd_overflow_signals():
    vpd = VarPocketDictionary(slots_m=2, cap_f=3, len_budget=5)
    assert vpd.insert(0, 0, *frag("111"))
    assert vpd.insert(0, 1, *frag("00"))
    assert not vpd.insert(1, 0, *frag("1"))      # length budget exhausted
    assert vpd.insert(1, 0, *frag(""))
    assert not vpd.insert(1, 1, *frag(""))       # element capacity exhausted
    assert not vpd.replace(0, 1, *frag("001"))   # would exceed length budget
    assert vpd.read_group(0) == [frag("111"), frag("00")]
    vpd.verify()


def test_varpd_differential_random_ops():
    rng = random.Random(99)
    vpd = VarPocketDictionary(slots_m=5, cap_f=12, len_budget=40)
    mirror: list[list[tuple[int, int]]] = [[] for _ in range(5)]
    for _ in range(8000):
        slot = rng.randrange(5)
        group = mirror[slot]
        action = rng.random()
        if action < 0.5:
            length = rng.randint(0, 6)
            bits = rng.getrandbits(length) if length else 0
            rank = rng.randint(0, len(group))
            ok = vpd.insert(slot, rank, bits, length)
            fits = (sum(len(g) for g in mirror) < 12 and
                    sum(l for g in mirror for _, l in g) + length <= 40)
            assert ok == fits
            if ok:
                group.insert(rank, (bits, length))
        elif action < 0.75 and group:
            rank = rng.randrange(len(group))
            assert vpd.delete(slot, rank) == group.pop(rank)
        elif group:
            rank = rng.randrange(len(group))
            length = rng.randint(0, 6)
            bits = rng.getrandbits(length) if length else 0
            total = sum(l for g in mirror for _, l in g)
            fits = total - group[rank][1] + length <= 40
            assert vpd.replace(slot, rank, bits, length) == fits
            if fits:
                group[rank] = (bits, length)
        assert vpd.read_group(slot) == group
    assert [e for _, e in vpd.verify()] == [e for g in mirror for e in g]


def test_varpd_serialization_roundtrip():
    vpd = VarPocketDictionary(slots_m=4, cap_f=6, len_budget=12)
    vpd.insert(1, 0, *frag("0101"))
    vpd.insert(1, 1, *frag(""))
    vpd.insert(3, 0, *frag("11"))
    clone = VarPocketDictionary(slots_m=4, cap_f=6, len_budget=12)
    clone.load_bytes(vpd.to_bytes())
    assert clone.elems == vpd.elems
    assert clone.counts == vpd.counts
    assert clone.payload_bits == vpd.payload_bits
    clone.verify()
