"""Shared backing store for bins that fill up ("the spare").

Elements forwarded out of a full bin land in one of ``sid_buckets`` counting
stores chosen by an independent keyed hash.  To pop an element back into a
specific bin without scanning every store, the stores holding elements of
bin ``hb`` form a doubly-linked list: a per-bin head index plus next/prev
store indices carried inside the records themselves (every record of the
same bin within one store carries identical pointers).  New stores are
linked at the head, so the newest store is popped from first.

A record's payload is ``key | next | prev`` where the key packs
``(hb, q, value)``; ``value`` is a full remainder in the dense layout and a
motel pointer in the sparse one.  In sparse mode this module also owns the
per-store motels and the variable-length fragment stores that shadow each
counting store, but their contents are driven by the sparse crate logic.

Meter charges are issued here at whole-component granularity (each store
spans a fixed number of virtual words by construction), so the store
classes themselves are constructed unmetered.
"""

from __future__ import annotations

from .core_bits import MACHINE_WORD, BitBuffer
from .csd import CountingSetDictionary, VarCountingSetDictionary
from .hashing import Params
from .pocket_motel import PocketMotel


class Sid:
    def __init__(self, params: Params, meter=None):
        self.params = params
        self.meter = meter
        self.null = params.sid_buckets
        bw = params.block_words
        self.csds = [
            CountingSetDictionary(params.csd_support, params.csd_payload_bits,
                                  params.csd_max_count, bw)
            for _ in range(params.sid_buckets)
        ]
        self.heads_buf = BitBuffer(params.heads_bits)
        self.heads = [self.null] * params.pds_per_crate
        for hb in range(params.pds_per_crate):
            self.heads_buf.poke(self._head_off(hb), params.head_ptr_bits, self.null)
        self.csd_motels: list[PocketMotel] = []
        self.varcsds: list[VarCountingSetDictionary] = []
        if params.mode == "sparse":
            if params.csd_motel_entry_bits is not None:
                self.csd_motels = [
                    PocketMotel(params.csd_support, params.csd_motel_entry_bits,
                                bw, meter)
                    for _ in range(params.sid_buckets)
                ]
            self.varcsds = [
                VarCountingSetDictionary(params.varcsd_f, params.varcsd_len,
                                         params.frames_per_varcsd, bw, meter)
                for _ in range(params.varcsds_per_sid)
            ]

    # -- payload packing ----------------------------------------------------

    def pack_key(self, hb: int, q: int, value: int) -> int:
        p = self.params
        return ((hb << p.q_bits) | q) << p.sid_value_bits | value

    def unpack_key(self, key: int) -> tuple[int, int, int]:
        p = self.params
        value = key & ((1 << p.sid_value_bits) - 1)
        key >>= p.sid_value_bits
        return key >> p.q_bits, key & ((1 << p.q_bits) - 1), value

    def pack_payload(self, key: int, nxt: int, prev: int) -> int:
        hp = self.params.head_ptr_bits
        pad = self.params.csd_payload_bits - self.params.sid_key_bits - 2 * hp
        return ((key << (2 * hp + pad)) | (nxt << hp) | prev)

    def key_of(self, payload: int) -> int:
        pad = self.params.csd_payload_bits - self.params.sid_key_bits
        return payload >> pad

    def ptrs_of(self, payload: int) -> tuple[int, int]:
        hp = self.params.head_ptr_bits
        mask = (1 << hp) - 1
        return (payload >> hp) & mask, payload & mask

    # -- metering -------------------------------------------------------------

    def touch_csd(self, bucket: int, write: bool) -> None:
        if self.meter is not None:
            words = self.csds[bucket]._touch_words
            self.meter.add_reads(words)
            if write:
                self.meter.add_writes(words)

    def touch_varcsd(self, index: int, write: bool) -> None:
        if self.meter is not None:
            words = self.varcsds[index]._touch_words
            self.meter.add_reads(words)
            if write:
                self.meter.add_writes(words)

    def _head_off(self, hb: int) -> int:
        p = self.params
        block, slot = divmod(hb, p.heads_per_block)
        return block * p.w_eff + slot * p.head_ptr_bits

    # -- list maintenance -------------------------------------------------------

    def head(self, hb: int) -> int:
        # head entries never straddle a block, so this is exactly one block
        if self.meter is not None:
            self.meter.add_reads(self.params.block_words)
        return self.heads[hb]

    def set_head(self, hb: int, value: int) -> None:
        if self.meter is not None:
            self.meter.add_writes(self.params.block_words)
        self.heads[hb] = value
        self.heads_buf.poke(self._head_off(hb), self.params.head_ptr_bits, value)

    def hb_range(self, bucket: int, hb: int) -> tuple[int, int]:
        csd = self.csds[bucket]
        return csd.group_range(hb, self.params.hb_bits)

    def set_group_ptrs(self, bucket: int, hb: int, *, nxt: int | None = None,
                       prev: int | None = None) -> None:
        """Rewrite the shared list pointers on every record of bin hb."""
        csd = self.csds[bucket]
        hp = self.params.head_ptr_bits
        start, end = csd.group_range(hb, self.params.hb_bits)
        for rank in range(start, end):
            payload = csd.records[rank][0]
            old_nxt, old_prev = self.ptrs_of(payload)
            new_nxt = nxt if nxt is not None else old_nxt
            new_prev = prev if prev is not None else old_prev
            payload = ((payload >> (2 * hp)) << (2 * hp)) | (new_nxt << hp) | new_prev
            csd.replace_payload_at(rank, payload)
        self.touch_csd(bucket, write=True)

    def finish_link(self, hb: int, bucket: int, nxt: int) -> None:
        """Make ``bucket`` the new list head (records already carry ``nxt``)."""
        self.set_head(hb, bucket)
        if nxt != self.null:
            self.set_group_ptrs(nxt, hb, prev=bucket)

    def finish_unlink(self, hb: int, nxt: int, prev: int) -> None:
        """Splice a store whose last record of bin hb was just removed."""
        if prev == self.null:
            self.set_head(hb, nxt)
        else:
            self.set_group_ptrs(prev, hb, nxt=nxt)
        if nxt != self.null:
            self.set_group_ptrs(nxt, hb, prev=prev)

    # -- dense-mode operations ----------------------------------------------

    def insert(self, bucket: int, hb: int, q: int, value: int) -> bool:
        """Store one copy of (hb, q, value); False when out of capacity."""
        p = self.params
        csd = self.csds[bucket]
        key = self.pack_key(hb, q, value)
        start, end = csd.group_range(key, p.sid_key_bits)
        if end > start:
            ok = csd.increment_at(start)
            self.touch_csd(bucket, write=ok)
            return ok
        if csd.size == p.csd_support:
            self.touch_csd(bucket, write=False)
            return False
        hb_start, hb_end = csd.group_range(hb, p.hb_bits)
        if hb_end > hb_start:
            nxt, prev = self.ptrs_of(csd.records[hb_start][0])
            link = False
        else:
            nxt, prev = self.head(hb), self.null
            link = True
        csd.insert_at(start, self.pack_payload(key, nxt, prev))
        self.touch_csd(bucket, write=True)
        if link:
            self.finish_link(hb, bucket, nxt)
        return True

    def query(self, bucket: int, hb: int, q: int, value: int) -> int:
        csd = self.csds[bucket]
        key = self.pack_key(hb, q, value)
        start, end = csd.group_range(key, self.params.sid_key_bits)
        self.touch_csd(bucket, write=False)
        return csd.records[start][1] if end > start else 0

    def delete(self, bucket: int, hb: int, q: int, value: int) -> bool:
        csd = self.csds[bucket]
        key = self.pack_key(hb, q, value)
        start, end = csd.group_range(key, self.params.sid_key_bits)
        if end == start:
            self.touch_csd(bucket, write=False)
            return False
        nxt, prev = self.ptrs_of(csd.records[start][0])
        csd.decrement_at(start)
        self.touch_csd(bucket, write=True)
        hb_start, hb_end = csd.group_range(hb, self.params.hb_bits)
        if hb_end == hb_start:
            self.finish_unlink(hb, nxt, prev)
        return True

    def pop(self, hb: int) -> tuple[int, int] | None:
        """Remove and return one (q, value) of bin hb from the newest store."""
        bucket = self.head(hb)
        if bucket == self.null:
            return None
        csd = self.csds[bucket]
        start, end = csd.group_range(hb, self.params.hb_bits)
        assert end > start, "list head holds no record of its bin"
        payload = csd.records[start][0]
        _, q, value = self.unpack_key(self.key_of(payload))
        nxt, prev = self.ptrs_of(payload)
        assert prev == self.null, "list head has a predecessor"
        csd.decrement_at(start)
        self.touch_csd(bucket, write=True)
        new_start, new_end = csd.group_range(hb, self.params.hb_bits)
        if new_end == new_start:
            self.finish_unlink(hb, nxt, prev)
        return q, value

    # -- audit / serialization ---------------------------------------------

    def cardinality(self) -> int:
        return sum(c for csd in self.csds for _, c in csd.records)

    def audit_lists(self) -> None:
        """Heads and record pointers must describe consistent per-bin lists."""
        p = self.params
        members: dict[int, dict[int, tuple[int, int]]] = {}
        for bucket, csd in enumerate(self.csds):
            per_hb: dict[int, tuple[int, int]] = {}
            for payload, _ in csd.records:
                hb = self.key_of(payload) >> (p.q_bits + p.sid_value_bits)
                ptrs = self.ptrs_of(payload)
                if hb in per_hb:
                    assert per_hb[hb] == ptrs, \
                        f"records of bin {hb} in store {bucket} disagree on pointers"
                else:
                    per_hb[hb] = ptrs
            for hb, ptrs in per_hb.items():
                members.setdefault(hb, {})[bucket] = ptrs
        for hb in range(p.pds_per_crate):
            expect = members.get(hb, {})
            stored = self.heads[hb]
            assert stored == self.heads_buf.peek(self._head_off(hb), p.head_ptr_bits)
            if not expect:
                assert stored == self.null, f"dangling head for bin {hb}"
                continue
            seen = []
            bucket, prev = stored, self.null
            while bucket != self.null:
                assert bucket in expect and bucket not in seen, \
                    f"list of bin {hb} is corrupt at store {bucket}"
                nxt, stored_prev = expect[bucket]
                assert stored_prev == prev, f"bad back-link in list of bin {hb}"
                seen.append(bucket)
                prev, bucket = bucket, nxt
            assert len(seen) == len(expect), f"list of bin {hb} misses stores"

    def to_blobs(self) -> list[bytes]:
        blobs = [self.heads_buf.to_bytes()]
        blobs.extend(csd.to_bytes() for csd in self.csds)
        blobs.extend(m.to_bytes() for m in self.csd_motels)
        blobs.extend(v.to_bytes() for v in self.varcsds)
        return blobs

    def load_blobs(self, blobs: list[bytes]) -> None:
        it = iter(blobs)
        self.heads_buf.load_bytes(next(it))
        self.heads = [
            self.heads_buf.peek(self._head_off(hb), self.params.head_ptr_bits)
            for hb in range(self.params.pds_per_crate)
        ]
        for csd in self.csds:
            csd.load_bytes(next(it))
        for motel in self.csd_motels:
            motel.load_bytes(next(it))
        for varcsd in self.varcsds:
            varcsd.load_bytes(next(it))
        self.audit_lists()

    @property
    def blob_count(self) -> int:
        return 1 + len(self.csds) + len(self.csd_motels) + len(self.varcsds)

    def allocated_bits(self) -> int:
        total = self.heads_buf.bits
        total += sum(csd.allocated_bits for csd in self.csds)
        total += sum(m.allocated_bits for m in self.csd_motels)
        total += sum(v.allocated_bits for v in self.varcsds)
        return total
