"""Backing-store behavior: per-bin linked lists, counting, pop, metering."""

import random

import pytest

from cratedict.core_bits import AccessMeter
from cratedict.hashing import derive_params
from cratedict.sid import Sid


def small_params(**overrides):
    base = {"sid_buckets": 8, "csd_support": 4}
    base.update(overrides)
    return derive_params(2 ** 12, rho=2 ** 6, w_eff=64, overrides=base)


def test_single_insert_links_head():
    sid = Sid(small_params())
    assert sid.insert(3, hb=5, q=2, value=9)
    assert sid.heads[5] == 3
    assert sid.query(3, 5, 2, 9) == 1
    assert sid.query(3, 5, 2, 8) == 0
    payload = sid.csds[3].records[0][0]
    assert sid.unpack_key(sid.key_of(payload)) == (5, 2, 9)
    assert sid.ptrs_of(payload) == (sid.null, sid.null)
    sid.audit_lists()


def test_duplicate_increments_counter():
    sid = Sid(small_params())
    for _ in range(3):
        assert sid.insert(4, hb=1, q=0, value=7)
    assert sid.query(4, 1, 0, 7) == 3
    assert sid.csds[4].size == 1
    assert sid.pop(1) == (0, 7)
    assert sid.query(4, 1, 0, 7) == 2
    assert sid.heads[1] == 4
    sid.audit_lists()


def test_link_and_unlink_across_buckets():
    sid = Sid(small_params())
    sid.insert(3, hb=5, q=1, value=1)
    sid.insert(1, hb=5, q=2, value=2)
    sid.audit_lists()
    # newest store becomes the head
    assert sid.heads[5] == 1
    assert sid.ptrs_of(sid.csds[1].records[0][0]) == (3, sid.null)
    assert sid.ptrs_of(sid.csds[3].records[0][0]) == (sid.null, 1)
    assert sid.delete(1, hb=5, q=2, value=2)
    sid.audit_lists()
    assert sid.heads[5] == 3
    assert sid.ptrs_of(sid.csds[3].records[0][0]) == (sid.null, sid.null)
    assert not sid.delete(1, hb=5, q=2, value=2)


def test_middle_unlink_rewrites_both_neighbors():
    sid = Sid(small_params())
    for bucket in (6, 4, 2):
        sid.insert(bucket, hb=0, q=bucket, value=0)
    assert sid.heads[0] == 2
    assert sid.delete(4, hb=0, q=4, value=0)
    sid.audit_lists()
    assert sid.heads[0] == 2
    assert sid.ptrs_of(sid.csds[2].records[0][0]) == (6, sid.null)
    assert sid.ptrs_of(sid.csds[6].records[0][0]) == (sid.null, 2)


def test_shared_pointers_across_same_bin_records():
    sid = Sid(small_params())
    sid.insert(2, hb=3, q=0, value=1)
    sid.insert(2, hb=3, q=5, value=2)
    sid.insert(7, hb=3, q=1, value=3)
    sid.audit_lists()
    a, b = (rec[0] for rec in sid.csds[2].records)
    assert sid.ptrs_of(a) == sid.ptrs_of(b) == (sid.null, 7)
    # removing only one of two same-bin records must not touch the list
    assert sid.delete(2, hb=3, q=0, value=1)
    assert sid.heads[3] == 7
    assert sid.ptrs_of(sid.csds[2].records[0][0]) == (sid.null, 7)
    sid.audit_lists()


def test_pop_takes_newest_store_smallest_record():
    sid = Sid(small_params())
    sid.insert(5, hb=2, q=3, value=4)
    sid.insert(5, hb=2, q=1, value=6)
    sid.insert(0, hb=2, q=7, value=0)
    assert sid.pop(2) == (7, 0)       # store 0 linked last
    assert sid.pop(2) == (1, 6)       # then store 5, smallest (q, value) first
    assert sid.pop(2) == (3, 4)
    assert sid.pop(2) is None
    assert sid.heads[2] == sid.null
    sid.audit_lists()


def test_support_overflow_leaves_store_unchanged():
    sid = Sid(small_params())
    for q in range(4):
        assert sid.insert(1, hb=6, q=q, value=0)
    before = sid.to_blobs()
    assert not sid.insert(1, hb=6, q=4, value=0)
    assert not sid.insert(1, hb=7, q=0, value=0)
    assert sid.to_blobs() == before
    sid.audit_lists()


def test_counter_overflow_leaves_store_unchanged():
    sid = Sid(small_params(csd_max_count=2))
    assert sid.insert(1, hb=6, q=0, value=0)
    assert sid.insert(1, hb=6, q=0, value=0)
    before = sid.to_blobs()
    assert not sid.insert(1, hb=6, q=0, value=0)
    assert sid.to_blobs() == before
    assert sid.query(1, 6, 0, 0) == 2


def test_random_ops_match_mirror():
    params = small_params(csd_support=3)
    sid = Sid(params)
    rng = random.Random(0xC0)
    mirror: dict[tuple[int, int, int, int], int] = {}

    def hb_total(hb):
        return sum(c for (b, h, q, v), c in mirror.items() if h == hb)

    for step in range(4000):
        op = rng.randrange(4)
        bucket = rng.randrange(params.sid_buckets)
        hb, q, v = rng.randrange(6), rng.randrange(4), rng.randrange(3)
        key = (bucket, hb, q, v)
        if op == 0:
            count = mirror.get(key, 0)
            size = sid.csds[bucket].size
            expect = (count > 0 and count < params.csd_max_count) or \
                     (count == 0 and size < params.csd_support)
            assert sid.insert(bucket, hb, q, v) == expect
            if expect:
                mirror[key] = count + 1
        elif op == 1:
            ok = sid.delete(bucket, hb, q, v)
            assert ok == (mirror.get(key, 0) > 0)
            if ok:
                mirror[key] -= 1
                if not mirror[key]:
                    del mirror[key]
        elif op == 2:
            assert sid.query(bucket, hb, q, v) == mirror.get(key, 0)
        else:
            head = sid.heads[hb]
            res = sid.pop(hb)
            if res is None:
                assert head == sid.null and hb_total(hb) == 0
            else:
                pq, pv = res
                pkey = (head, hb, pq, pv)
                assert mirror.get(pkey, 0) > 0
                mirror[pkey] -= 1
                if not mirror[pkey]:
                    del mirror[pkey]
        if step % 200 == 0:
            sid.audit_lists()
            for csd in sid.csds:
                csd.verify()
    sid.audit_lists()
    assert sid.cardinality() == sum(mirror.values())


def test_serialization_roundtrip():
    params = small_params()
    sid = Sid(params)
    rng = random.Random(7)
    for _ in range(300):
        sid.insert(rng.randrange(params.sid_buckets), rng.randrange(6),
                   rng.randrange(4), rng.randrange(8))
    blobs = sid.to_blobs()
    assert len(blobs) == sid.blob_count
    clone = Sid(params)
    clone.load_blobs(blobs)
    assert clone.heads == sid.heads
    assert all(a.buf == b.buf for a, b in zip(clone.csds, sid.csds))
    assert clone.cardinality() == sid.cardinality()


def test_meter_block_granular_charges():
    params = small_params()
    meter = AccessMeter()
    sid = Sid(params, meter)
    csd_words = sid.csds[0]._touch_words
    blk = params.block_words

    meter.reset()
    sid.insert(3, hb=5, q=2, value=9)   # fresh record, fresh list
    assert (meter.reads, meter.writes) == (csd_words + blk, csd_words + blk)

    meter.reset()
    sid.insert(3, hb=5, q=2, value=9)   # duplicate: store only
    assert (meter.reads, meter.writes) == (csd_words, csd_words)

    meter.reset()
    sid.insert(1, hb=5, q=0, value=0)   # link with a nonempty successor
    assert (meter.reads, meter.writes) == (2 * csd_words + blk, 2 * csd_words + blk)

    meter.reset()
    assert sid.query(1, 5, 0, 0) == 1
    assert (meter.reads, meter.writes) == (csd_words, 0)

    meter.reset()
    sid.pop(5)                          # head store empties: unlink + relink
    assert (meter.reads, meter.writes) == (blk + 2 * csd_words, 2 * csd_words + blk)

    meter.reset()
    assert sid.query(1, 5, 0, 0) == 0
    assert (meter.reads, meter.writes) == (csd_words, 0)
