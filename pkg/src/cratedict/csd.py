"""Counting stores for elements that spill out of their bins.

``CountingSetDictionary`` packs up to ``support`` records, each a caller-
defined payload plus a duplicate counter and a valid bit, left-justified and
physically compacted on removal.  Payload order is the caller's: sorted
inserts bisect on the packed integer, rank inserts go exactly where asked.

``VarCountingSetDictionary`` is its variable-length companion: a single
2-bit-symbol stream holding one fragment per record for a group of
consecutive stores ("frames"), with ``10`` ending a fragment and ``11``
ending a frame.
"""

from __future__ import annotations

from bisect import bisect_left

from .core_bits import MACHINE_WORD, BitBuffer
from .hashing import ceil_log2
from .pocket_dict import SYM_END

SYM_FRAME = 0b11


class CountingSetDictionary:
    """Sorted packed records of (payload, counter), capacity ``support``."""

    __slots__ = ("support", "payload_bits", "max_count", "counter_bits",
                 "record_bits", "block_words", "meter", "buf", "records",
                 "_touch_words")

    def __init__(self, support: int, payload_bits: int, max_count: int,
                 block_words: int = 1, meter=None):
        self.support = support
        self.payload_bits = payload_bits
        self.max_count = max_count
        self.counter_bits = ceil_log2(max_count)
        self.record_bits = payload_bits + self.counter_bits + 1
        self.block_words = block_words
        self.meter = meter
        self.buf = BitBuffer(support * self.record_bits)
        self.records: list[list[int]] = []  # [payload, count]
        w_eff = MACHINE_WORD * block_words
        self._touch_words = -(-self.allocated_bits // w_eff) * block_words

    @property
    def allocated_bits(self) -> int:
        return self.support * self.record_bits

    @property
    def size(self) -> int:
        return len(self.records)

    def _charge(self, write: bool) -> None:
        if self.meter is not None:
            self.meter.add_reads(self._touch_words)
            if write:
                self.meter.add_writes(self._touch_words)

    def _pack(self, payload: int, count: int) -> int:
        return (((payload << self.counter_bits) | (count - 1)) << 1) | 1

    def _write_count(self, rank: int, count: int) -> None:
        if self.counter_bits:
            self.buf.poke(rank * self.record_bits + self.payload_bits,
                          self.counter_bits, count - 1)

    # -- lookup -------------------------------------------------------------

    def find(self, payload: int) -> int | None:
        self._charge(write=False)
        keys = [p for p, _ in self.records]
        rank = bisect_left(keys, payload)
        if rank < len(keys) and keys[rank] == payload:
            return rank
        return None

    def query(self, payload: int) -> int:
        rank = self.find(payload)
        return self.records[rank][1] if rank is not None else 0

    def group_range(self, prefix: int, prefix_bits: int) -> tuple[int, int]:
        """Rank range of records whose leading ``prefix_bits`` equal prefix."""
        self._charge(write=False)
        shift = self.payload_bits - prefix_bits
        start = None
        for i, (p, _) in enumerate(self.records):
            if p >> shift == prefix:
                if start is None:
                    start = i
            elif start is not None:
                return start, i
            elif p >> shift > prefix:
                return i, i
        if start is not None:
            return start, len(self.records)
        return len(self.records), len(self.records)

    def payload_at(self, rank: int) -> int:
        self._charge(write=False)
        return self.records[rank][0]

    def count_at(self, rank: int) -> int:
        self._charge(write=False)
        return self.records[rank][1]

    # -- mutation -------------------------------------------------------------

    def _splice_in(self, rank: int, payload: int) -> None:
        rb = self.record_bits
        self.buf.shift_insert(0, self.buf.bits, rank * rb, rb,
                              self._pack(payload, 1))
        self.records.insert(rank, [payload, 1])

    def insert(self, payload: int) -> str | None:
        """Sorted insert; counts duplicates.  None signals overflow."""
        keys = [p for p, _ in self.records]
        rank = bisect_left(keys, payload)
        if rank < len(keys) and keys[rank] == payload:
            if self.records[rank][1] == self.max_count:
                self._charge(write=False)
                return None
            self.records[rank][1] += 1
            self._write_count(rank, self.records[rank][1])
            self._charge(write=True)
            return "counted"
        if len(self.records) == self.support:
            self._charge(write=False)
            return None
        self._splice_in(rank, payload)
        self._charge(write=True)
        return "new"

    def insert_at(self, rank: int, payload: int) -> bool:
        if len(self.records) == self.support:
            self._charge(write=False)
            return False
        if not 0 <= rank <= len(self.records):
            raise IndexError(f"rank {rank} outside {len(self.records)} records")
        self._splice_in(rank, payload)
        self._charge(write=True)
        return True

    def increment_at(self, rank: int) -> bool:
        if self.records[rank][1] == self.max_count:
            self._charge(write=False)
            return False
        self.records[rank][1] += 1
        self._write_count(rank, self.records[rank][1])
        self._charge(write=True)
        return True

    def decrement_at(self, rank: int) -> int:
        """Drop one copy; removes and compacts the record when it hits zero."""
        remaining = self.records[rank][1] - 1
        if remaining == 0:
            rb = self.record_bits
            self.buf.shift_delete(0, self.buf.bits, rank * rb, rb)
            del self.records[rank]
        else:
            self.records[rank][1] = remaining
            self._write_count(rank, remaining)
        self._charge(write=True)
        return remaining

    def delete(self, payload: int) -> bool:
        rank = self.find(payload)
        if rank is None:
            return False
        self.decrement_at(rank)
        return True

    def replace_payload_at(self, rank: int, payload: int) -> None:
        self.records[rank][0] = payload
        self.buf.poke(rank * self.record_bits, self.payload_bits, payload)
        self._charge(write=True)

    # -- audit / serialization ---------------------------------------------

    def decode(self) -> list[tuple[int, int]]:
        out = []
        rb = self.record_bits
        for rank in range(self.support):
            rec = self.buf.peek(rank * rb, rb)
            if not rec & 1:
                if rec:
                    raise AssertionError("invalid record is not zeroed")
                tail = self.buf.peek(rank * rb, self.buf.bits - rank * rb)
                if tail:
                    raise AssertionError("records are not left-justified")
                break
            payload = rec >> (self.counter_bits + 1)
            count = ((rec >> 1) & ((1 << self.counter_bits) - 1)) + 1
            out.append((payload, count))
        return out

    def verify(self) -> list[tuple[int, int]]:
        items = self.decode()
        assert items == [(p, c) for p, c in self.records], "record cache diverged"
        return items

    def to_bytes(self) -> bytes:
        return self.buf.to_bytes()

    def load_bytes(self, raw: bytes) -> None:
        self.buf.load_bytes(raw)
        self.records = [[p, c] for p, c in self.decode()]


class VarCountingSetDictionary:
    """Fragment streams for ``frames`` consecutive counting stores."""

    __slots__ = ("cap_f", "len_budget", "frames", "block_words", "meter",
                 "buf", "frame_elems", "occupancy", "payload_bits",
                 "_touch_words")

    def __init__(self, cap_f: int, len_budget: int, frames: int,
                 block_words: int = 1, meter=None):
        self.cap_f = cap_f
        self.len_budget = len_budget
        self.frames = frames
        self.block_words = block_words
        self.meter = meter
        self.buf = BitBuffer(2 * (cap_f + len_budget + frames))
        self.frame_elems: list[list[tuple[int, int]]] = [[] for _ in range(frames)]
        self.occupancy = 0
        self.payload_bits = 0
        w_eff = MACHINE_WORD * block_words
        self._touch_words = -(-self.allocated_bits // w_eff) * block_words
        # an empty store is `frames` frame separators in a row
        for i in range(frames):
            self.buf.poke(2 * i, 2, SYM_FRAME)

    @property
    def allocated_bits(self) -> int:
        return 2 * (self.cap_f + self.len_budget + self.frames)

    def _charge(self, write: bool) -> None:
        if self.meter is not None:
            self.meter.add_reads(self._touch_words)
            if write:
                self.meter.add_writes(self._touch_words)

    def _frame_syms(self, frame: int) -> int:
        return sum(ln + 1 for _, ln in self.frame_elems[frame])

    def _offset_of(self, frame: int, rank: int) -> int:
        syms = sum(self._frame_syms(i) + 1 for i in range(frame))
        syms += sum(ln + 1 for _, ln in self.frame_elems[frame][:rank])
        return 2 * syms

    def read_frame(self, frame: int) -> list[tuple[int, int]]:
        self._charge(write=False)
        return list(self.frame_elems[frame])

    def insert(self, frame: int, rank: int, bits: int, length: int) -> bool:
        if self.occupancy + 1 > self.cap_f or self.payload_bits + length > self.len_budget:
            self._charge(write=False)
            return False
        elems = self.frame_elems[frame]
        if not 0 <= rank <= len(elems):
            raise IndexError(f"rank {rank} outside frame of {len(elems)}")
        from .pocket_dict import encode_fragment

        offset = self._offset_of(frame, rank)
        self.buf.shift_insert(0, self.buf.bits, offset, 2 * (length + 1),
                              encode_fragment(bits, length))
        elems.insert(rank, (bits, length))
        self.occupancy += 1
        self.payload_bits += length
        self._charge(write=True)
        return True

    def delete(self, frame: int, rank: int) -> tuple[int, int]:
        elems = self.frame_elems[frame]
        if not 0 <= rank < len(elems):
            raise IndexError(f"rank {rank} outside frame of {len(elems)}")
        bits, length = elems[rank]
        offset = self._offset_of(frame, rank)
        self.buf.shift_delete(0, self.buf.bits, offset, 2 * (length + 1))
        del elems[rank]
        self.occupancy -= 1
        self.payload_bits -= length
        self._charge(write=True)
        return bits, length

    def replace(self, frame: int, rank: int, bits: int, length: int) -> bool:
        elems = self.frame_elems[frame]
        if not 0 <= rank < len(elems):
            raise IndexError(f"rank {rank} outside frame of {len(elems)}")
        _, old_len = elems[rank]
        if self.payload_bits - old_len + length > self.len_budget:
            self._charge(write=False)
            return False
        from .pocket_dict import encode_fragment

        offset = self._offset_of(frame, rank)
        self.buf.shift_delete(0, self.buf.bits, offset, 2 * (old_len + 1))
        self.buf.shift_insert(0, self.buf.bits, offset, 2 * (length + 1),
                              encode_fragment(bits, length))
        elems[rank] = (bits, length)
        self.payload_bits += length - old_len
        self._charge(write=True)
        return True

    # -- audit / serialization ---------------------------------------------

    def decode(self) -> list[list[tuple[int, int]]]:
        frames: list[list[tuple[int, int]]] = []
        current: list[tuple[int, int]] = []
        bits = 0
        length = 0
        pos = 0
        while len(frames) < self.frames:
            sym = self.buf.peek(pos, 2)
            pos += 2
            if sym == SYM_FRAME:
                if length:
                    raise AssertionError("frame separator inside a fragment")
                frames.append(current)
                current = []
            elif sym == SYM_END:
                current.append((bits, length))
                bits = 0
                length = 0
            else:
                bits = (bits << 1) | (sym & 1)
                length += 1
        if self.buf.peek(pos, self.buf.bits - pos):
            raise AssertionError("nonzero stream tail")
        return frames

    def verify(self) -> list[list[tuple[int, int]]]:
        frames = self.decode()
        assert frames == self.frame_elems, "frame cache diverged"
        assert self.occupancy == sum(len(f) for f in frames)
        assert self.payload_bits == sum(ln for f in frames for _, ln in f)
        return frames

    def to_bytes(self) -> bytes:
        return self.buf.to_bytes()

    def load_bytes(self, raw: bytes) -> None:
        self.buf.load_bytes(raw)
        self.frame_elems = self.decode()
        self.occupancy = sum(len(f) for f in self.frame_elems)
        self.payload_bits = sum(ln for f in self.frame_elems for _, ln in f)
