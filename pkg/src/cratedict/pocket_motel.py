"""Stable-pointer slab for fixed-width entries.

A motel keeps ``slots`` entries of ``entry_bits`` each, one occupancy bit
per slot, and a head index for a LIFO free list threaded through the entry
fields of vacant slots.  Pointers (slot indices) stay valid until deleted,
which lets bins hold narrow pointers while wide payloads sit here.

Unlike bins, an access touches only the addressed slot (plus the head
field), so the meter charge scales with the entry width, not the slab.
"""

from __future__ import annotations

from .core_bits import MACHINE_WORD, BitBuffer
from .errors import ComponentOverflow, ConfigError, InvalidPointerError
from .hashing import bits_for, ceil_log2


class PocketMotel:
    __slots__ = ("slots", "entry_bits", "head_bits", "block_words", "meter",
                 "buf", "head", "occupied", "occupancy")

    def __init__(self, slots: int, entry_bits: int, block_words: int = 1,
                 meter=None):
        if slots < 1:
            raise ConfigError("motel needs at least one slot")
        if entry_bits < bits_for(slots + 1):
            raise ConfigError("entries too narrow to thread a free list")
        self.slots = slots
        self.entry_bits = entry_bits
        self.head_bits = ceil_log2(slots)
        self.block_words = block_words
        self.meter = meter
        self.buf = BitBuffer(slots * (1 + entry_bits) + self.head_bits)
        self.head = 0  # == slots when the free list is empty
        self.occupied = [False] * slots
        self.occupancy = 0
        for i in range(slots):
            self.buf.poke(self._entry_off(i), entry_bits,
                          i + 1 if i + 1 < slots else slots)

    @property
    def allocated_bits(self) -> int:
        return self.slots * (1 + self.entry_bits) + self.head_bits

    def _entry_off(self, ptr: int) -> int:
        return ptr * (1 + self.entry_bits) + 1

    def _charge_span(self, offset: int, length: int, write: bool) -> None:
        if self.meter is None or length == 0:
            return
        w_eff = MACHINE_WORD * self.block_words
        blocks = (offset + length - 1) // w_eff - offset // w_eff + 1
        self.meter.add_reads(blocks * self.block_words)
        if write:
            self.meter.add_writes(blocks * self.block_words)

    def _charge_head(self, write: bool) -> None:
        self._charge_span(self.slots * (1 + self.entry_bits),
                          max(self.head_bits, 1), write)

    def _store_head(self) -> None:
        # a full motel parks 0 in the head field; fullness is the occupancy bits
        if self.head_bits:
            self.buf.poke(self.slots * (1 + self.entry_bits), self.head_bits,
                          self.head if self.head < self.slots else 0)

    def insert(self, entry: int) -> int:
        """Claim the free-list head and store the entry; returns its pointer."""
        if self.occupancy == self.slots:
            self._charge_head(write=False)
            raise ComponentOverflow("pocket-motel")
        ptr = self.head
        off = self._entry_off(ptr)
        self._charge_span(off - 1, 1 + self.entry_bits, write=True)
        self._charge_head(write=True)
        self.head = self.buf.peek(off, self.entry_bits)
        self.buf.poke(off, self.entry_bits, entry)
        self.buf.poke(off - 1, 1, 1)
        self._store_head()
        self.occupied[ptr] = True
        self.occupancy += 1
        return ptr

    def _check_ptr(self, ptr: int) -> None:
        if not 0 <= ptr < self.slots or not self.occupied[ptr]:
            raise InvalidPointerError(f"pointer {ptr} is not occupied")

    def read(self, ptr: int) -> int:
        self._check_ptr(ptr)
        off = self._entry_off(ptr)
        self._charge_span(off - 1, 1 + self.entry_bits, write=False)
        return self.buf.peek(off, self.entry_bits)

    def replace(self, ptr: int, entry: int) -> None:
        self._check_ptr(ptr)
        off = self._entry_off(ptr)
        self._charge_span(off - 1, 1 + self.entry_bits, write=True)
        self.buf.poke(off, self.entry_bits, entry)

    def delete(self, ptr: int) -> None:
        """Release the slot onto the front of the free list."""
        self._check_ptr(ptr)
        off = self._entry_off(ptr)
        self._charge_span(off - 1, 1 + self.entry_bits, write=True)
        self._charge_head(write=True)
        self.buf.poke(off, self.entry_bits, self.head)
        self.buf.poke(off - 1, 1, 0)
        self.head = ptr
        self._store_head()
        self.occupied[ptr] = False
        self.occupancy -= 1

    # -- audit / serialization ---------------------------------------------

    def audit(self) -> None:
        """Occupied slots and the free list must partition all slots."""
        occ_bits = [bool(self.buf.peek(i * (1 + self.entry_bits), 1))
                    for i in range(self.slots)]
        assert occ_bits == self.occupied, "occupancy cache diverged"
        assert self.occupancy == sum(occ_bits)
        free = set()
        ptr = self.head
        for _ in range(self.slots - self.occupancy):
            assert 0 <= ptr < self.slots and ptr not in free, "free list corrupt"
            free.add(ptr)
            ptr = self.buf.peek(self._entry_off(ptr), self.entry_bits)
        assert ptr == self.slots or self.occupancy == self.slots, \
            "free list does not terminate at the null index"
        assert all(not occ_bits[i] for i in free)
        assert len(free) + self.occupancy == self.slots

    def to_bytes(self) -> bytes:
        return self.buf.to_bytes()

    def load_bytes(self, raw: bytes) -> None:
        self.buf.load_bytes(raw)
        self.occupied = [bool(self.buf.peek(i * (1 + self.entry_bits), 1))
                         for i in range(self.slots)]
        self.occupancy = sum(self.occupied)
        if self.occupancy == self.slots:
            self.head = self.slots
        elif self.head_bits:
            self.head = self.buf.peek(self.slots * (1 + self.entry_bits),
                                      self.head_bits)
        else:
            self.head = 0
        self.audit()
