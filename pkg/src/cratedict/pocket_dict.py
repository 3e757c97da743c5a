"""Fixed-capacity quotienting bins.

A bin holds up to ``f`` values bucketed by quotient slot: a unary header of
``m + f`` bits encodes per-quotient counts (count of slot i as ``1``s, then a
``0``), and a packed body keeps the values in header order.  Values are full
remainders in the dense layout and motel pointers (or retrieval labels) in
the sparse one; ordering inside a quotient group is the caller's business
for pointer payloads, so both sorted and rank-addressed mutations exist.

The variable-length variant stores one bit string per element using 2-bit
symbols (``00``/``01`` data, ``10`` end-of-string), with the same unary
header addressing scheme.

Every public operation charges the meter for one pass over the whole
component per direction, rounded up to the structure's virtual words; the
layouts are sized to span a constant number of those.
"""

from __future__ import annotations

from .core_bits import MACHINE_WORD, BitBuffer

SYM_END = 0b10


class PocketDictionary:
    """Bounded multiset of (quotient, value) pairs with unary group counts."""

    __slots__ = ("m", "f", "value_bits", "block_words", "meter", "header",
                 "body", "counts", "occupancy", "_touch_words", "_mask")

    def __init__(self, m: int, f: int, value_bits: int, block_words: int = 1,
                 meter=None):
        self.m = m
        self.f = f
        self.value_bits = value_bits
        self.block_words = block_words
        self.meter = meter
        self.header = BitBuffer(m + f)
        self.body = BitBuffer(f * value_bits)
        self.counts = [0] * m
        self.occupancy = 0
        w_eff = MACHINE_WORD * block_words
        self._touch_words = -(-self.allocated_bits // w_eff) * block_words
        self._mask = (1 << value_bits) - 1

    @property
    def allocated_bits(self) -> int:
        return self.m + self.f * (1 + self.value_bits)

    @property
    def full(self) -> bool:
        return self.occupancy == self.f

    def _charge(self, write: bool) -> None:
        if self.meter is not None:
            self.meter.add_reads(self._touch_words)
            if write:
                self.meter.add_writes(self._touch_words)

    # -- addressing -------------------------------------------------------

    def group_start(self, q: int) -> int:
        return sum(self.counts[:q])

    def range_of(self, q: int) -> tuple[int, int]:
        """Slot range [start, end) of quotient group q (one metered read)."""
        self._charge(write=False)
        start = self.group_start(q)
        return start, start + self.counts[q]

    def _group_values(self, q: int) -> list[int]:
        k = self.counts[q]
        if not k:
            return []
        start = self.group_start(q)
        vb = self.value_bits
        blob = self.body.peek(start * vb, k * vb)
        return [(blob >> ((k - 1 - i) * vb)) & self._mask for i in range(k)]

    def read_group(self, q: int) -> list[int]:
        self._charge(write=False)
        return self._group_values(q)

    def value_at(self, q: int, rank: int) -> int:
        self._charge(write=False)
        slot = self.group_start(q) + rank
        return self.body.peek(slot * self.value_bits, self.value_bits)

    def rank_of(self, q: int, value: int) -> int | None:
        """Rank of the first copy of value inside group q, or None."""
        self._charge(write=False)
        for i, v in enumerate(self._group_values(q)):
            if v == value:
                return i
        return None

    # -- queries ----------------------------------------------------------

    def query(self, q: int, value: int) -> int:
        """Multiplicity of (q, value); one metered read of the component."""
        self._charge(write=False)
        return sum(1 for v in self._group_values(q) if v == value)

    # -- mutation ----------------------------------------------------------

    def _splice_in(self, q: int, idx: int, value: int) -> None:
        start = self.group_start(q)
        vb = self.value_bits
        self.body.shift_insert(0, self.body.bits, (start + idx) * vb, vb, value)
        self.header.shift_insert(0, self.header.bits, start + q, 1, 1)
        self.counts[q] += 1
        self.occupancy += 1

    def insert(self, q: int, value: int) -> bool:
        """Sorted insert; duplicates land after their equals.  False if full."""
        if self.occupancy == self.f:
            self._charge(write=False)
            return False
        idx = sum(1 for v in self._group_values(q) if v <= value)
        self._splice_in(q, idx, value)
        self._charge(write=True)
        return True

    def insert_at(self, q: int, rank: int, value: int) -> bool:
        """Insert at an explicit rank inside group q.  False if full."""
        if self.occupancy == self.f:
            self._charge(write=False)
            return False
        if not 0 <= rank <= self.counts[q]:
            raise IndexError(f"rank {rank} outside group of {self.counts[q]}")
        self._splice_in(q, rank, value)
        self._charge(write=True)
        return True

    def _splice_out(self, q: int, idx: int) -> int:
        start = self.group_start(q)
        vb = self.value_bits
        value = self.body.peek((start + idx) * vb, vb)
        self.body.shift_delete(0, self.body.bits, (start + idx) * vb, vb)
        self.header.shift_delete(0, self.header.bits, start + q, 1)
        self.counts[q] -= 1
        self.occupancy -= 1
        return value

    def delete(self, q: int, value: int) -> bool:
        """Remove one copy of (q, value); False when absent."""
        idx = None
        for i, v in enumerate(self._group_values(q)):
            if v == value:
                idx = i
                break
        if idx is None:
            self._charge(write=False)
            return False
        self._splice_out(q, idx)
        self._charge(write=True)
        return True

    def delete_at(self, q: int, rank: int) -> int:
        if not 0 <= rank < self.counts[q]:
            raise IndexError(f"rank {rank} outside group of {self.counts[q]}")
        value = self._splice_out(q, rank)
        self._charge(write=True)
        return value

    def replace_at(self, q: int, rank: int, value: int) -> None:
        if not 0 <= rank < self.counts[q]:
            raise IndexError(f"rank {rank} outside group of {self.counts[q]}")
        slot = self.group_start(q) + rank
        self.body.poke(slot * self.value_bits, self.value_bits, value)
        self._charge(write=True)

    # -- audit / serialization ---------------------------------------------

    def decode(self) -> list[tuple[int, int]]:
        """Re-parse the bit images (ignoring caches); audit entry point."""
        counts = []
        run = 0
        for i in range(self.header.bits):
            if self.header.peek(i, 1):
                run += 1
            else:
                counts.append(run)
                run = 0
                if len(counts) == self.m:
                    tail = self.header.peek(i + 1, self.header.bits - i - 1)
                    if tail:
                        raise AssertionError("nonzero header tail")
                    break
        else:
            raise AssertionError("header is missing group terminators")
        out = []
        slot = 0
        vb = self.value_bits
        for q, k in enumerate(counts):
            for _ in range(k):
                out.append((q, self.body.peek(slot * vb, vb)))
                slot += 1
        if self.body.peek(slot * vb, self.body.bits - slot * vb):
            raise AssertionError("nonzero body tail")
        return out

    def verify(self) -> list[tuple[int, int]]:
        """Check cached counts against the bit images; returns the contents."""
        items = self.decode()
        counts = [0] * self.m
        for q, _ in items:
            counts[q] += 1
        assert counts == self.counts, "count cache diverged from header"
        assert len(items) == self.occupancy
        return items

    def to_bytes(self) -> bytes:
        return self.header.to_bytes() + self.body.to_bytes()

    def load_bytes(self, raw: bytes) -> None:
        cut = (self.header.bits + 7) // 8
        self.header.load_bytes(raw[:cut])
        self.body.load_bytes(raw[cut:])
        self.counts = [0] * self.m
        items = self.decode()
        for q, _ in items:
            self.counts[q] += 1
        self.occupancy = len(items)


def encode_fragment(bits: int, length: int) -> int:
    """2-bit-symbol encoding of a fragment: data symbols then end-of-string."""
    out = 0
    for i in range(length):
        out = (out << 2) | ((bits >> (length - 1 - i)) & 1)
    return (out << 2) | SYM_END


class VarPocketDictionary:
    """Bounded store of variable-length bit strings, unary-headed like a bin.

    Capacity is ``cap_f`` strings and ``len_budget`` total payload bits;
    the body spends two bits per payload bit and two per end marker, so the
    whole component occupies exactly ``slots_m + 3*cap_f + 2*len_budget``
    bits.  Mutations that would exceed either budget return False and leave
    the store untouched.
    """

    __slots__ = ("slots_m", "cap_f", "len_budget", "block_words", "meter",
                 "header", "body", "counts", "elems", "occupancy",
                 "payload_bits", "_touch_words")

    def __init__(self, slots_m: int, cap_f: int, len_budget: int,
                 block_words: int = 1, meter=None):
        self.slots_m = slots_m
        self.cap_f = cap_f
        self.len_budget = len_budget
        self.block_words = block_words
        self.meter = meter
        self.header = BitBuffer(slots_m + cap_f)
        self.body = BitBuffer(2 * (len_budget + cap_f))
        self.counts = [0] * slots_m
        self.elems: list[tuple[int, int]] = []  # (bits, length) in body order
        self.occupancy = 0
        self.payload_bits = 0
        w_eff = MACHINE_WORD * block_words
        self._touch_words = -(-self.allocated_bits // w_eff) * block_words

    @property
    def allocated_bits(self) -> int:
        return self.slots_m + 3 * self.cap_f + 2 * self.len_budget

    def _charge(self, write: bool) -> None:
        if self.meter is not None:
            self.meter.add_reads(self._touch_words)
            if write:
                self.meter.add_writes(self._touch_words)

    def group_start(self, slot: int) -> int:
        return sum(self.counts[:slot])

    def _offset_of(self, elem_index: int) -> int:
        return 2 * sum(ln + 1 for _, ln in self.elems[:elem_index])

    def read_group(self, slot: int) -> list[tuple[int, int]]:
        self._charge(write=False)
        start = self.group_start(slot)
        return self.elems[start:start + self.counts[slot]]

    def insert(self, slot: int, rank: int, bits: int, length: int) -> bool:
        if self.occupancy + 1 > self.cap_f or self.payload_bits + length > self.len_budget:
            self._charge(write=False)
            return False
        if not 0 <= rank <= self.counts[slot]:
            raise IndexError(f"rank {rank} outside group of {self.counts[slot]}")
        index = self.group_start(slot) + rank
        offset = self._offset_of(index)
        self.body.shift_insert(0, self.body.bits, offset, 2 * (length + 1),
                               encode_fragment(bits, length))
        self.header.shift_insert(0, self.header.bits,
                                 self.group_start(slot) + slot, 1, 1)
        self.elems.insert(index, (bits, length))
        self.counts[slot] += 1
        self.occupancy += 1
        self.payload_bits += length
        self._charge(write=True)
        return True

    def delete(self, slot: int, rank: int) -> tuple[int, int]:
        if not 0 <= rank < self.counts[slot]:
            raise IndexError(f"rank {rank} outside group of {self.counts[slot]}")
        index = self.group_start(slot) + rank
        bits, length = self.elems[index]
        offset = self._offset_of(index)
        self.body.shift_delete(0, self.body.bits, offset, 2 * (length + 1))
        self.header.shift_delete(0, self.header.bits,
                                 self.group_start(slot) + slot, 1)
        del self.elems[index]
        self.counts[slot] -= 1
        self.occupancy -= 1
        self.payload_bits -= length
        self._charge(write=True)
        return bits, length

    def replace(self, slot: int, rank: int, bits: int, length: int) -> bool:
        """Swap one stored string for another; False if the budget runs out."""
        if not 0 <= rank < self.counts[slot]:
            raise IndexError(f"rank {rank} outside group of {self.counts[slot]}")
        index = self.group_start(slot) + rank
        _, old_len = self.elems[index]
        if self.payload_bits - old_len + length > self.len_budget:
            self._charge(write=False)
            return False
        offset = self._offset_of(index)
        self.body.shift_delete(0, self.body.bits, offset, 2 * (old_len + 1))
        self.body.shift_insert(0, self.body.bits, offset, 2 * (length + 1),
                               encode_fragment(bits, length))
        self.elems[index] = (bits, length)
        self.payload_bits += length - old_len
        self._charge(write=True)
        return True

    # -- audit / serialization ---------------------------------------------

    def decode(self) -> list[tuple[int, tuple[int, int]]]:
        """Re-parse header and symbol stream; returns (slot, fragment) pairs."""
        counts = []
        run = 0
        for i in range(self.header.bits):
            if self.header.peek(i, 1):
                run += 1
            else:
                counts.append(run)
                run = 0
                if len(counts) == self.slots_m:
                    if self.header.peek(i + 1, self.header.bits - i - 1):
                        raise AssertionError("nonzero header tail")
                    break
        else:
            raise AssertionError("header is missing group terminators")
        total = sum(counts)
        elems = []
        pos = 0
        while len(elems) < total:
            bits = 0
            length = 0
            while True:
                sym = self.body.peek(pos, 2)
                pos += 2
                if sym == SYM_END:
                    break
                if sym & 0b10:
                    raise AssertionError("unexpected separator symbol")
                bits = (bits << 1) | (sym & 1)
                length += 1
            elems.append((bits, length))
        if self.body.peek(pos, self.body.bits - pos):
            raise AssertionError("nonzero body tail")
        out = []
        it = iter(elems)
        for slot, k in enumerate(counts):
            for _ in range(k):
                out.append((slot, next(it)))
        return out

    def verify(self) -> list[tuple[int, tuple[int, int]]]:
        items = self.decode()
        assert [e for _, e in items] == self.elems, "fragment cache diverged"
        counts = [0] * self.slots_m
        for slot, _ in items:
            counts[slot] += 1
        assert counts == self.counts
        assert self.occupancy == len(items)
        assert self.payload_bits == sum(ln for _, (_, ln) in items)
        return items

    def to_bytes(self) -> bytes:
        return self.header.to_bytes() + self.body.to_bytes()

    def load_bytes(self, raw: bytes) -> None:
        cut = (self.header.bits + 7) // 8
        self.header.load_bytes(raw[:cut])
        self.body.load_bytes(raw[cut:])
        self.counts = [0] * self.slots_m
        self.elems = []
        for slot, frag in self.decode():
            self.counts[slot] += 1
            self.elems.append(frag)
        self.occupancy = len(self.elems)
        self.payload_bits = sum(ln for _, ln in self.elems)
