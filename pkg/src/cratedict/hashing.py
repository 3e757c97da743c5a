"""Parameter derivation, element decomposition, and keyed hashing.

An element of the universe splits into (crate, bin, quotient, remainder)
coordinates by pure arithmetic, so membership metadata lives entirely in
where an element is stored plus its remainder bits.  All randomness comes
from 32-byte seeds: a keyed mixer for hashing/fingerprints and a balanced
Feistel network (with cycle walking) for the set-mode permutation.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .errors import ConfigError

MU_MAX = 1.0          # slack ratio clamp
M_MIN = 4             # fewest quotient slots per bin for the dense layout
DELTA = 1.0           # growth-exponent headroom (beta = 6 + DELTA)
LEN_FACTOR = 6        # variable-store payload budget, bits per element slot
CSD_EXTRA_BLOCKS = 2  # backing-store footprint is (c + extra) virtual words
SID_BUCKET_FLOOR = 256  # minimum spare-store bucket count at tiny crate sizes
CSD_SUPPORT_CAP = 8     # distinct records per spare bucket; loads stay tiny

_M64 = (1 << 64) - 1

_ABSENT = object()


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def frac_ceil(x) -> int:
    if isinstance(x, int):
        return x
    return -((-x.numerator) // x.denominator)


def ceil_log2(x) -> int:
    """Smallest k >= 0 with 2**k >= x, exact for int and Fraction."""
    if x <= 0:
        raise ConfigError("ceil_log2 of non-positive value")
    k = 0
    while (1 << k) < x:
        k += 1
    return k


def bits_for(count: int) -> int:
    """Width needed to store values 0..count-1 (0 for a single-valued field)."""
    if count <= 1:
        return 0
    return (count - 1).bit_length()


class Decomposition(NamedTuple):
    hc: int  # crate index
    hb: int  # bin index within the crate
    q: int   # quotient slot within the bin
    r: int   # remainder


@dataclass
class Params:
    """Derived geometry for one dictionary instance.

    Everything downstream (buffer sizes, packing widths, hash ranges) is a
    pure function of these fields, so serializing the constructor inputs is
    enough to rebuild an identical instance.
    """

    n: int                      # live-cardinality cap
    rho: Fraction               # universe / n
    universe: int               # ceil(rho * n)
    w_eff: int                  # virtual word width, bits
    block_words: int            # machine words per virtual word
    mode: str                   # "dense" | "sparse"
    ell: int                    # remainder width, ceil(log2 rho)
    mu: float                   # bin slack ratio
    m: int                      # quotient slots per bin
    f: int                      # element capacity per bin
    pd_value_bits: int          # stored payload width per bin slot
    crate_size: int             # elements covered per crate (C)
    crates: int
    pds_per_crate: int
    rho_c: int                  # ceil(rho * C)
    rho_m: int                  # ceil(rho * m)
    rho_1: int                  # ceil(rho)
    hb_bits: int
    q_bits: int
    delta: float
    # spare (backing store) geometry
    sid_buckets: int            # number of CSDs per crate
    c: int                      # frame-grouping / budget constant
    head_ptr_bits: int          # list-head / list-pointer width (null = sid_buckets)
    sid_value_bits: int         # r-or-pointer width inside a CSD key
    sid_key_bits: int           # hb_bits + q_bits + sid_value_bits
    csd_payload_bits: int       # key + 2 list pointers, padded to a multiple of c
    csd_counter_bits: int
    csd_record_bits: int
    csd_support: int            # record capacity per CSD
    csd_max_count: int          # duplicate-counter ceiling
    heads_per_block: int
    heads_blocks: int
    heads_bits: int
    # sparse-only extras (zero / None when unused)
    super_group: int = 0        # bins sharing one variable-length store
    varpds_per_crate: int = 0
    varpd_m: int = 0
    varpd_f: int = 0
    varpd_len: int = 0
    pd_motel_entry_bits: int | None = None
    csd_motel_entry_bits: int | None = None
    frames_per_varcsd: int = 0
    varcsd_f: int = 0
    varcsd_len: int = 0
    varcsds_per_sid: int = 0

    def validate(self) -> None:
        if self.m < 1 or self.f < self.m or self.ell < 1 or self.crates < 1:
            raise ConfigError("degenerate geometry")
        if self.mode not in ("dense", "sparse"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.rho < 2:
            raise ConfigError("universe must be at least twice the capacity")
        if self.csd_support < 1:
            raise ConfigError("backing-store record does not fit its block budget")
        if self.csd_payload_bits % self.c:
            raise ConfigError("payload width not frame-aligned")
        if self.q_bits and self.m > (1 << self.q_bits):
            raise ConfigError("quotient width too narrow")

    def pd_bits(self) -> int:
        return self.m + self.f * (1 + self.pd_value_bits)

    def csd_bits(self) -> int:
        return self.csd_support * self.csd_record_bits

    def varpd_bits(self) -> int:
        return self.varpd_m + 3 * self.varpd_f + 2 * self.varpd_len

    def varcsd_bits(self) -> int:
        return 2 * (self.varcsd_f + self.varcsd_len + self.frames_per_varcsd)


def _as_fraction(rho) -> Fraction:
    if isinstance(rho, Fraction):
        return rho
    if isinstance(rho, int):
        return Fraction(rho)
    if isinstance(rho, float):
        return Fraction(rho)
    raise ConfigError(f"unsupported rho type {type(rho)!r}")


_OVERRIDABLE = {
    "mode", "ell", "mu", "m", "f", "crate_size", "sid_buckets", "c",
    "csd_support", "csd_max_count", "pd_value_bits", "sid_value_bits",
    "pd_motel_entry_bits", "csd_motel_entry_bits", "delta",
}


def derive_params(n: int, rho=None, w_eff: int = 64, *,
                  universe: int | None = None,
                  overrides: dict | None = None) -> Params:
    """Compute instance geometry from capacity, universe ratio, and word width.

    ``overrides`` may pin any of the tunable fields (for tests and for the
    retrieval variants); dependent quantities are recomputed around pins.
    """
    ov = dict(overrides or {})
    unknown = set(ov) - _OVERRIDABLE
    if unknown:
        raise ConfigError(f"unknown overrides: {sorted(unknown)}")

    def pick(name, computed):
        return ov[name] if name in ov else computed

    if n < 1:
        raise ConfigError("capacity must be positive")
    if w_eff < 64 or w_eff % 64:
        raise ConfigError("w_eff must be a positive multiple of 64")
    if universe is not None:
        rho = Fraction(universe, n)
    elif rho is None:
        raise ConfigError("one of rho or universe is required")
    rho = _as_fraction(rho)
    if rho < 2:
        raise ConfigError("rho must be at least 2")
    universe = frac_ceil(rho * n)

    block_words = w_eff // 64
    ell = pick("ell", ceil_log2(rho))
    log2_rho = math.log2(rho.numerator) - math.log2(rho.denominator)
    mu = pick("mu", min(MU_MAX, math.sqrt(math.log(w_eff) * log2_rho / w_eff)))
    mode = pick("mode", "dense" if w_eff // ell >= M_MIN else "sparse")
    delta = pick("delta", DELTA)

    if mode == "dense":
        pd_value_bits = pick("pd_value_bits", ell)
        m = pick("m", max(1, w_eff // pd_value_bits))
        f = pick("f", math.ceil((1 + mu) * m))
    else:
        # slot payload is a pointer into the bin's motel of f slots, so the
        # widths are mutually dependent; scan pointer widths for the best fit
        best = None
        for p in range(1, 65):
            m_p = max(1, w_eff // p)
            f_p = math.ceil((1 + mu) * m_p)
            if bits_for(f_p) <= p:
                best = (p, m_p, f_p)
                break
        if best is None:
            raise ConfigError("no feasible slot-pointer width")
        pd_value_bits = pick("pd_value_bits", best[0])
        m = pick("m", max(1, w_eff // pd_value_bits))
        f = pick("f", math.ceil((1 + mu) * m))
        if bits_for(f) > pd_value_bits:
            raise ConfigError("slot pointer too narrow for bin capacity")

    beta = 6 + delta
    if beta * math.log2(w_eff) >= math.log2(max(n, 2)):
        crate_size = n
    else:
        crate_size = min(n, w_eff ** math.ceil(beta))
    crate_size = pick("crate_size", max(crate_size, m))

    rho_1 = frac_ceil(rho)
    rho_m = frac_ceil(rho * m)
    rho_c = frac_ceil(rho * crate_size)
    crates = max(1, ceil_div(universe, rho_c))
    pds_per_crate = ceil_div(rho_c, rho_m)
    hb_bits = bits_for(pds_per_crate)
    q_bits = bits_for(m)

    # the spare store must stay a vanishing fraction of the crate as words
    # widen, so its bucket count tracks crate size rather than word width
    sid_buckets = pick("sid_buckets", max(SID_BUCKET_FLOOR, ceil_div(crate_size, 20)))
    c = pick("c", 4)
    csd_max_count = pick("csd_max_count", sid_buckets)
    head_ptr_bits = ceil_log2(sid_buckets) + 1
    counter_bits = ceil_log2(csd_max_count)
    budget_bits = (c + CSD_EXTRA_BLOCKS) * w_eff

    def pad_to_frames(bits):
        return ceil_div(bits, c) * c

    if mode == "dense":
        sid_value_bits = pick("sid_value_bits", ell)
        sid_key_bits = hb_bits + q_bits + sid_value_bits
        csd_payload_bits = pad_to_frames(sid_key_bits + 2 * head_ptr_bits)
        csd_record_bits = csd_payload_bits + counter_bits + 1
        # the block budget is a ceiling, not a target: per-bucket capacity is
        # a small constant so the spare's footprint stays flat as words widen
        csd_support = pick(
            "csd_support",
            max(1, min(CSD_SUPPORT_CAP, budget_bits // csd_record_bits)),
        )
    else:
        # CSD keys hold a pointer into the CSD's motel of csd_support slots;
        # again scan pointer widths and keep the densest feasible one
        best = None
        for p in range(0, 65):
            key_bits = hb_bits + q_bits + p
            payload = pad_to_frames(key_bits + 2 * head_ptr_bits)
            rec = payload + counter_bits + 1
            support = min(CSD_SUPPORT_CAP, budget_bits // rec)
            if support >= 1 and bits_for(support) <= p:
                if best is None or support > best[1]:
                    best = (p, support)
        if best is None:
            raise ConfigError("no feasible backing-store pointer width")
        sid_value_bits = pick("sid_value_bits", best[0])
        sid_key_bits = hb_bits + q_bits + sid_value_bits
        csd_payload_bits = pad_to_frames(sid_key_bits + 2 * head_ptr_bits)
        csd_record_bits = csd_payload_bits + counter_bits + 1
        csd_support = pick(
            "csd_support",
            max(1, min(CSD_SUPPORT_CAP, budget_bits // csd_record_bits)),
        )

    heads_per_block = max(1, w_eff // head_ptr_bits)
    heads_blocks = ceil_div(pds_per_crate, heads_per_block)

    params = Params(
        n=n, rho=rho, universe=universe, w_eff=w_eff, block_words=block_words,
        mode=mode, ell=ell, mu=mu, m=m, f=f, pd_value_bits=pd_value_bits,
        crate_size=crate_size, crates=crates, pds_per_crate=pds_per_crate,
        rho_c=rho_c, rho_m=rho_m, rho_1=rho_1, hb_bits=hb_bits, q_bits=q_bits,
        delta=delta, sid_buckets=sid_buckets, c=c, head_ptr_bits=head_ptr_bits,
        sid_value_bits=sid_value_bits, sid_key_bits=sid_key_bits,
        csd_payload_bits=csd_payload_bits, csd_counter_bits=counter_bits,
        csd_record_bits=csd_record_bits, csd_support=csd_support,
        csd_max_count=csd_max_count, heads_per_block=heads_per_block,
        heads_blocks=heads_blocks, heads_bits=heads_blocks * w_eff,
    )

    if mode == "sparse":
        g = ceil_log2(w_eff)
        params.super_group = g
        params.varpds_per_crate = ceil_div(pds_per_crate, g)
        params.varpd_m = g * m
        params.varpd_f = g * f
        params.varpd_len = LEN_FACTOR * params.varpd_f
        params.pd_motel_entry_bits = pick("pd_motel_entry_bits", ell)
        params.csd_motel_entry_bits = pick("csd_motel_entry_bits", ell)
        s = csd_payload_bits // c
        params.frames_per_varcsd = s
        params.varcsd_f = s * csd_support
        params.varcsd_len = LEN_FACTOR * params.varcsd_f
        params.varcsds_per_sid = ceil_div(sid_buckets, s)

    params.validate()
    return params


def decompose(x: int, params: Params) -> Decomposition:
    """Split an element into (crate, bin, quotient, remainder) coordinates."""
    if x < 0 or x >= params.universe:
        raise ValueError(f"element {x} outside universe [0, {params.universe})")
    hc, rem = divmod(x, params.rho_c)
    hb, rem = divmod(rem, params.rho_m)
    q, r = divmod(rem, params.rho_1)
    return Decomposition(hc, hb, q, r)


def recompose(d: Decomposition, params: Params) -> int:
    return ((d.hc * params.rho_c) + d.hb * params.rho_m
            + d.q * params.rho_1 + d.r)


# -- keyed mixing ------------------------------------------------------------


def _fin(z: int) -> int:
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def hash_keys(seed: bytes, role: bytes) -> tuple[int, int]:
    """Derive a 128-bit subkey for one hashing role from a master seed."""
    if len(seed) != 32:
        raise ConfigError("seeds must be 32 bytes")
    digest = hashlib.blake2b(seed, digest_size=16, person=role[:16]).digest()
    return int.from_bytes(digest[:8], "big"), int.from_bytes(digest[8:], "big")


def mix_int(x: int, k0: int, k1: int) -> int:
    """Keyed 64-bit mix of a non-negative integer of any width."""
    h = k0
    while True:
        h = _fin((h + (x & _M64)) & _M64) ^ k1
        x >>= 64
        if not x:
            break
    return _fin(h)


def sid_hash(key: int, buckets: int, k0: int, k1: int) -> int:
    """Bucket index of a backing-store key; independent of placement hashing."""
    return mix_int(key, k0, k1) % buckets


def fingerprint(x: int, n: int, epsilon: float, seed: bytes) -> int:
    """Hash an arbitrary element into [ceil(n / epsilon)]."""
    if not (0 < epsilon < 1):
        raise ConfigError("epsilon must be in (0, 1)")
    rng = frac_ceil(Fraction(n) / Fraction(epsilon))
    k0, k1 = hash_keys(seed, b"fingerprint")
    return mix_int(x, k0, k1) % rng


# -- set-mode permutation ----------------------------------------------------

_FEISTEL_ROUNDS = 7


def _feistel_keys(seed: bytes) -> list[tuple[int, int]]:
    return [hash_keys(seed, b"perm-round-%d" % i) for i in range(_FEISTEL_ROUNDS)]


class Permutation:
    """Keyed invertible permutation on [universe] (Feistel + cycle walking)."""

    __slots__ = ("universe", "_half", "_mask", "_keys")

    def __init__(self, universe: int, seed: bytes):
        if universe < 1:
            raise ConfigError("empty universe")
        self.universe = universe
        bits = ceil_log2(universe)
        bits += bits & 1  # balanced halves over an even bit count
        self._half = bits // 2
        self._mask = (1 << self._half) - 1
        self._keys = _feistel_keys(seed)

    def _round(self, left, right, k0, k1):
        return right, left ^ (mix_int(right, k0, k1) & self._mask)

    def _enc(self, x: int) -> int:
        left, right = x >> self._half, x & self._mask
        for k0, k1 in self._keys:
            left, right = self._round(left, right, k0, k1)
        return (left << self._half) | right

    def _dec(self, y: int) -> int:
        left, right = y >> self._half, y & self._mask
        for k0, k1 in reversed(self._keys):
            left, right = right ^ (mix_int(left, k0, k1) & self._mask), left
        return (left << self._half) | right

    def forward(self, x: int) -> int:
        if not 0 <= x < self.universe:
            raise ValueError(f"element {x} outside universe")
        if self._half == 0:
            return x
        y = self._enc(x)
        while y >= self.universe:
            y = self._enc(y)
        return y

    def inverse(self, y: int) -> int:
        if not 0 <= y < self.universe:
            raise ValueError(f"element {y} outside universe")
        if self._half == 0:
            return y
        x = self._dec(y)
        while x >= self.universe:
            x = self._dec(x)
        return x


def permute(x: int, universe: int, seed: bytes) -> int:
    return Permutation(universe, seed).forward(x)


def unpermute(y: int, universe: int, seed: bytes) -> int:
    return Permutation(universe, seed).inverse(y)
