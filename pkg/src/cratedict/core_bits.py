"""Bit-addressable buffers and the word-access meter.

Buffers are fixed-capacity bit strings backed by a single Python integer.
Bit 0 is the leftmost (most significant) bit; a multi-bit field reads as a
big-endian integer.  All metered charges are expressed in 64-bit machine
words; structures built on top additionally charge at the granularity of
their configured virtual word (``block_words`` machine words per block).
"""

from __future__ import annotations

from contextlib import contextmanager

from .errors import (
    BitBoundsError,
    BitValueError,
    RegionFullError,
    SelectNotFoundError,
)

MACHINE_WORD = 64


class AccessMeter:
    """Counts machine-word reads and writes, with per-operation maxima.

    Operations are scoped with ``begin(kind)`` / ``end()`` (or the ``op``
    context manager); nested scopes attribute their cost to the outermost
    operation.  ``pause()`` suspends counting for audits and serialization.
    """

    __slots__ = ("reads", "writes", "per_op_max", "per_kind", "_depth",
                 "_mark", "_kind", "_paused")

    def __init__(self):
        self.reads = 0
        self.writes = 0
        self.per_op_max = 0
        self.per_kind: dict[str, list[int]] = {}  # kind -> [count, total, max]
        self._depth = 0
        self._mark = 0
        self._kind = None
        self._paused = 0

    def add_reads(self, n: int) -> None:
        if not self._paused:
            self.reads += n

    def add_writes(self, n: int) -> None:
        if not self._paused:
            self.writes += n

    @property
    def total(self) -> int:
        return self.reads + self.writes

    def begin(self, kind: str) -> None:
        if self._depth == 0:
            self._mark = self.reads + self.writes
            self._kind = kind
        self._depth += 1

    def end(self) -> None:
        self._depth -= 1
        if self._depth == 0:
            cost = self.reads + self.writes - self._mark
            if cost > self.per_op_max:
                self.per_op_max = cost
            rec = self.per_kind.setdefault(self._kind, [0, 0, 0])
            rec[0] += 1
            rec[1] += cost
            if cost > rec[2]:
                rec[2] = cost

    @contextmanager
    def op(self, kind: str):
        self.begin(kind)
        try:
            yield self
        finally:
            self.end()

    @contextmanager
    def pause(self):
        self._paused += 1
        try:
            yield self
        finally:
            self._paused -= 1

    def snapshot(self) -> dict:
        stats = {
            kind: {"count": c, "total": t, "max": mx,
                   "mean": (t / c if c else 0.0)}
            for kind, (c, t, mx) in self.per_kind.items()
        }
        return {"reads": self.reads, "writes": self.writes,
                "per_op_max": self.per_op_max, "per_kind": stats}

    def reset(self) -> None:
        self.reads = 0
        self.writes = 0
        self.per_op_max = 0
        self.per_kind.clear()


def word_span(offset: int, length: int) -> int:
    """Number of 64-bit words overlapped by the bit range [offset, offset+length)."""
    if length == 0:
        return 0
    return (offset + length - 1) // MACHINE_WORD - offset // MACHINE_WORD + 1


def select_zero_in_int(window: int, length: int, k: int) -> int:
    """Position of the (k+1)-th zero bit of an MSB-first ``length``-bit value."""
    ones = (~window) & ((1 << length) - 1)  # zeros become set bits
    remaining = k
    consumed = 0
    while consumed < length:
        chunk_len = min(MACHINE_WORD, length - consumed)
        chunk = (ones >> (length - consumed - chunk_len)) & ((1 << chunk_len) - 1)
        cnt = bin(chunk).count("1")
        if remaining < cnt:
            # locate the (remaining+1)-th set bit of chunk from its MSB
            for _ in range(remaining):
                chunk &= ~(1 << (chunk.bit_length() - 1))
            return consumed + chunk_len - chunk.bit_length()
        remaining -= cnt
        consumed += chunk_len
    raise SelectNotFoundError(f"window has fewer than {k + 1} zeros")


class BitBuffer:
    """Fixed-capacity bit string with optional access metering.

    ``read_bits``/``write_bits``/``select_zero``/``shift_insert``/
    ``shift_delete`` charge the attached meter for every machine word their
    bit span overlaps, once per pass over the data.  ``peek``/``poke`` are
    the unmetered equivalents for owners that account at block granularity
    themselves.
    """

    __slots__ = ("bits", "block_words", "meter", "_v")

    def __init__(self, bits: int, block_words: int = 1, meter: AccessMeter | None = None):
        if bits < 0:
            raise BitBoundsError("negative capacity")
        if block_words < 1:
            raise BitBoundsError("block_words must be >= 1")
        self.bits = bits
        self.block_words = block_words
        self.meter = meter
        self._v = 0

    # -- bounds helpers -------------------------------------------------

    def _check(self, offset: int, length: int) -> None:
        if length < 0 or offset < 0 or offset + length > self.bits:
            raise BitBoundsError(
                f"range [{offset}, {offset + length}) outside capacity {self.bits}")

    @property
    def words(self) -> int:
        return (self.bits + MACHINE_WORD - 1) // MACHINE_WORD

    @property
    def blocks(self) -> int:
        width = MACHINE_WORD * self.block_words
        return (self.bits + width - 1) // width

    # -- unmetered primitives -------------------------------------------

    def peek(self, offset: int, length: int) -> int:
        self._check(offset, length)
        if length == 0:
            return 0
        return (self._v >> (self.bits - offset - length)) & ((1 << length) - 1)

    def poke(self, offset: int, length: int, value: int) -> None:
        self._check(offset, length)
        if value < 0 or value >> length:
            raise BitValueError(f"value {value} does not fit in {length} bits")
        if length == 0:
            return
        shift = self.bits - offset - length
        self._v = (self._v & ~(((1 << length) - 1) << shift)) | (value << shift)

    # -- metered operations ----------------------------------------------

    def read_bits(self, offset: int, length: int) -> int:
        value = self.peek(offset, length)
        if self.meter is not None:
            self.meter.add_reads(word_span(offset, length))
        return value

    def write_bits(self, offset: int, length: int, value: int) -> None:
        self.poke(offset, length, value)
        if self.meter is not None:
            self.meter.add_writes(word_span(offset, length))

    def select_zero(self, offset: int, length: int, k: int) -> int:
        """Offset (absolute) of the (k+1)-th zero inside the window; one read pass."""
        window = self.peek(offset, length)
        if self.meter is not None:
            self.meter.add_reads(word_span(offset, length))
        return offset + select_zero_in_int(window, length, k)

    def shift_insert(self, region_start: int, region_end: int,
                     offset: int, length: int, value: int) -> None:
        """Insert ``value`` at ``offset``, shifting [offset, region_end-length) right.

        The ``length`` bits falling off the end of the region must be zero.
        Costs one read pass plus one write pass over the region.
        """
        self._check(region_start, region_end - region_start)
        if not (region_start <= offset and offset + length <= region_end):
            raise BitBoundsError("insert span outside region")
        if value < 0 or value >> length:
            raise BitValueError(f"value {value} does not fit in {length} bits")
        region_len = region_end - region_start
        region = self.peek(region_start, region_len)
        if length:
            if region & ((1 << length) - 1):
                raise RegionFullError(
                    f"nonzero bits would be shifted past offset {region_end}")
            head_len = offset - region_start
            tail_len = region_end - length - offset
            head = region >> (region_len - head_len) if head_len else 0
            tail = (region >> length) & ((1 << tail_len) - 1) if tail_len else 0
            region = (((head << length) | value) << tail_len) | tail
            self.poke(region_start, region_len, region)
        if self.meter is not None:
            span = word_span(region_start, region_len)
            self.meter.add_reads(span)
            self.meter.add_writes(span)

    def shift_delete(self, region_start: int, region_end: int,
                     offset: int, length: int) -> None:
        """Remove [offset, offset+length), shifting the tail left; zero-fill the end."""
        self._check(region_start, region_end - region_start)
        if not (region_start <= offset and offset + length <= region_end):
            raise BitBoundsError("delete span outside region")
        region_len = region_end - region_start
        if length:
            region = self.peek(region_start, region_len)
            head_len = offset - region_start
            tail_len = region_end - offset - length
            head = region >> (region_len - head_len) if head_len else 0
            tail = region & ((1 << tail_len) - 1) if tail_len else 0
            region = (((head << tail_len) | tail) << length)
            self.poke(region_start, region_len, region)
        if self.meter is not None:
            span = word_span(region_start, region_len)
            self.meter.add_reads(span)
            self.meter.add_writes(span)

    # -- serialization ----------------------------------------------------

    def to_bytes(self) -> bytes:
        nbytes = (self.bits + 7) // 8
        return (self._v << (nbytes * 8 - self.bits)).to_bytes(nbytes, "big")

    def load_bytes(self, raw: bytes) -> None:
        nbytes = (self.bits + 7) // 8
        if len(raw) != nbytes:
            raise BitValueError(f"expected {nbytes} bytes, got {len(raw)}")
        pad = nbytes * 8 - self.bits
        v = int.from_bytes(raw, "big")
        if pad and v & ((1 << pad) - 1):
            raise BitValueError("nonzero padding bits")
        self._v = v >> pad

    def __eq__(self, other) -> bool:
        return (isinstance(other, BitBuffer) and other.bits == self.bits
                and other._v == self._v)

    def __hash__(self):
        return hash((self.bits, self._v))
