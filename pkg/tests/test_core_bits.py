import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cratedict.core_bits import (
    AccessMeter,
    BitBuffer,
    select_zero_in_int,
    word_span,
)
from cratedict.errors import (
    BitBoundsError,
    BitValueError,
    RegionFullError,
    SelectNotFoundError,
)


def test_read_write_roundtrip_basic():
    buf = BitBuffer(130)
    buf.write_bits(0, 8, 0xAB)
    buf.write_bits(8, 8, 0xCD)
    assert buf.read_bits(0, 16) == 0xABCD
    buf.write_bits(125, 5, 0b10101)
    assert buf.read_bits(125, 5) == 0b10101
    assert buf.read_bits(0, 0) == 0
    buf.write_bits(3, 5, 0)
    assert buf.read_bits(0, 8) == 0b10100000


def test_bounds_and_value_errors():
    buf = BitBuffer(64)
    with pytest.raises(BitBoundsError):
        buf.read_bits(60, 5)
    with pytest.raises(BitBoundsError):
        buf.read_bits(-1, 2)
    with pytest.raises(BitValueError):
        buf.write_bits(0, 4, 16)
    with pytest.raises(BitValueError):
        buf.write_bits(0, 4, -1)


@given(st.data())
@settings(max_examples=300, deadline=None)
def test_write_then_read_property(data):
    bits = data.draw(st.integers(min_value=1, max_value=300))
    buf = BitBuffer(bits)
    writes = data.draw(st.lists(st.tuples(st.integers(0, bits - 1),
                                          st.integers(1, 64)), max_size=12))
    mirror = [0] * bits
    for off, ln in writes:
        ln = min(ln, bits - off)
        if ln == 0:
            continue
        val = data.draw(st.integers(0, (1 << ln) - 1))
        buf.write_bits(off, ln, val)
        for i in range(ln):
            mirror[off + i] = (val >> (ln - 1 - i)) & 1
    for off, ln in writes:
        ln = min(ln, bits - off)
        got = buf.read_bits(off, ln)
        want = 0
        for i in range(ln):
            want = (want << 1) | mirror[off + i]
        assert got == want


def test_random_roundtrip_bulk():
    rng = random.Random(0xC0FFEE)
    buf = BitBuffer(1 << 12)
    mirror = [0] * buf.bits
    for _ in range(20000):
        off = rng.randrange(buf.bits)
        ln = rng.randint(0, min(64, buf.bits - off))
        if rng.random() < 0.5 and ln:
            val = rng.getrandbits(ln)
            buf.write_bits(off, ln, val)
            for i in range(ln):
                mirror[off + i] = (val >> (ln - 1 - i)) & 1
        else:
            want = 0
            for i in range(ln):
                want = (want << 1) | mirror[off + i]
            assert buf.read_bits(off, ln) == want


def naive_select_zero(bits, offset, length, k):
    seen = 0
    for i in range(offset, offset + length):
        if bits[i] == 0:
            if seen == k:
                return i
            seen += 1
    return None


def test_select_zero_examples():
    buf = BitBuffer(13)
    # unary counts (3,1,0,2,2) over 5 runs
    val = int("1110100110110", 2)
    buf.write_bits(0, 13, val)
    assert buf.select_zero(0, 13, 0) == 3
    assert buf.select_zero(0, 13, 1) == 5
    assert buf.select_zero(0, 13, 2) == 6
    assert buf.select_zero(0, 13, 4) == 12
    with pytest.raises(SelectNotFoundError):
        buf.select_zero(0, 13, 5)


def test_select_zero_vs_naive_scan():
    rng = random.Random(1234)
    for _ in range(10_000):
        length = rng.randint(1, 200)
        offset = rng.randint(0, 40)
        buf = BitBuffer(offset + length + rng.randint(0, 30))
        bits = [rng.randint(0, 1) for _ in range(buf.bits)]
        for i, b in enumerate(bits):
            if b:
                buf.poke(i, 1, 1)
        k = rng.randint(0, length)
        want = naive_select_zero(bits, offset, length, k)
        if want is None:
            with pytest.raises(SelectNotFoundError):
                buf.select_zero(offset, length, k)
        else:
            assert buf.select_zero(offset, length, k) == want


def test_select_zero_in_int_wide():
    # zeros straddling 64-bit chunk boundaries
    length = 200
    window = (1 << length) - 1
    for pos in (0, 63, 64, 65, 127, 128, 199):
        w = window & ~(1 << (length - 1 - pos))
        assert select_zero_in_int(w, length, 0) == pos


def test_shift_insert_and_delete():
    buf = BitBuffer(24)
    # region is the whole buffer; insert values at the front, keep sorted feel
    buf.shift_insert(0, 24, 0, 8, 0xBB)
    buf.shift_insert(0, 24, 0, 8, 0xAA)
    assert buf.read_bits(0, 16) == 0xAABB
    buf.shift_insert(0, 24, 8, 8, 0xCC)
    assert buf.read_bits(0, 24) == 0xAACCBB
    with pytest.raises(RegionFullError):
        buf.shift_insert(0, 24, 0, 8, 0x01)
    buf.shift_delete(0, 24, 8, 8)
    assert buf.read_bits(0, 24) == 0xAABB00
    buf.shift_delete(0, 24, 0, 8)
    assert buf.read_bits(0, 24) == 0xBB0000
    # deleting zeroed space is a no-op on content
    buf.shift_delete(0, 24, 8, 16)
    assert buf.read_bits(0, 24) == 0xBB0000


def test_shift_insert_region_isolation():
    buf = BitBuffer(32)
    buf.write_bits(0, 8, 0xFF)
    buf.write_bits(24, 8, 0xEE)
    # inner region [8, 24) must not disturb its neighbors
    buf.shift_insert(8, 24, 8, 8, 0x55)
    assert buf.read_bits(0, 8) == 0xFF
    assert buf.read_bits(8, 8) == 0x55
    assert buf.read_bits(24, 8) == 0xEE
    buf.shift_delete(8, 24, 8, 8)
    assert buf.read_bits(0, 8) == 0xFF
    assert buf.read_bits(8, 16) == 0
    assert buf.read_bits(24, 8) == 0xEE


@given(st.data())
@settings(max_examples=200, deadline=None)
def test_shift_insert_delete_inverse_property(data):
    bits = data.draw(st.integers(8, 120))
    buf = BitBuffer(bits)
    rs = data.draw(st.integers(0, bits - 4))
    re = data.draw(st.integers(rs + 4, bits))
    fill = data.draw(st.integers(0, (1 << (re - rs)) - 1))
    ln = data.draw(st.integers(1, re - rs))
    # keep the last ln bits of the region free
    fill &= ~((1 << ln) - 1)
    buf.poke(rs, re - rs, fill)
    off = data.draw(st.integers(rs, re - ln))
    val = data.draw(st.integers(0, (1 << ln) - 1))
    before = buf.peek(0, bits)
    buf.shift_insert(rs, re, off, ln, val)
    assert buf.peek(off, ln) == val
    buf.shift_delete(rs, re, off, ln)
    assert buf.peek(0, bits) == before


def test_word_span():
    assert word_span(0, 0) == 0
    assert word_span(0, 1) == 1
    assert word_span(0, 64) == 1
    assert word_span(0, 65) == 2
    assert word_span(63, 2) == 2
    assert word_span(64, 64) == 1
    assert word_span(100, 300) == 6


def test_meter_charges():
    meter = AccessMeter()
    buf = BitBuffer(256, meter=meter)
    buf.read_bits(0, 64)
    assert meter.reads == 1
    buf.read_bits(60, 8)  # straddles two words
    assert meter.reads == 3
    buf.write_bits(0, 128, 0)
    assert meter.writes == 2
    buf.select_zero(0, 256, 0)
    assert meter.reads == 3 + 4
    buf.shift_insert(0, 256, 0, 8, 0xFF)  # one read + one write pass
    assert (meter.reads, meter.writes) == (11, 6)
    buf.shift_delete(0, 256, 0, 8)
    assert (meter.reads, meter.writes) == (15, 10)
    # soundness: every pass over B bits costs at most ceil(B/64)+1 words
    assert meter.total == sum([1, 2, 2, 4, 4, 4, 4, 4])


def test_meter_op_scoping_and_pause():
    meter = AccessMeter()
    buf = BitBuffer(128, meter=meter)
    with meter.op("insert"):
        buf.write_bits(0, 128, 1)
        with meter.op("inner"):  # nested scope folds into the outer op
            buf.read_bits(0, 64)
    assert meter.per_op_max == 3
    assert meter.per_kind["insert"][2] == 3
    assert "inner" not in meter.per_kind
    with meter.op("query"):
        buf.read_bits(0, 1)
    assert meter.per_kind["query"] == [1, 1, 1]
    assert meter.per_op_max == 3
    with meter.pause():
        buf.read_bits(0, 128)
    assert meter.reads == 2  # paused work is free
    snap = meter.snapshot()
    assert snap["per_kind"]["insert"]["max"] == 3
    meter.reset()
    assert meter.total == 0 and meter.per_kind == {}


def test_serialization_roundtrip():
    rng = random.Random(7)
    for bits in (1, 7, 8, 64, 65, 130, 1521):
        buf = BitBuffer(bits)
        for _ in range(10):
            off = rng.randrange(bits)
            buf.poke(off, 1, 1)
        raw = buf.to_bytes()
        assert len(raw) == (bits + 7) // 8
        other = BitBuffer(bits)
        other.load_bytes(raw)
        assert other == buf
    bad = BitBuffer(4)
    with pytest.raises(BitValueError):
        bad.load_bytes(b"\x01")  # nonzero padding
