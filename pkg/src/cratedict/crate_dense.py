"""Dense-layout dictionary: remainders are narrow enough to live inline.

The universe is carved into crates, each crate into bins of m quotient
slots.  A bin is a pocket dictionary holding full remainders; once a bin
fills, further arrivals for it are forwarded to the crate's shared backing
store, and whenever a deletion frees a slot in a full bin one forwarded
element of that bin is pulled back.  The resulting invariant (the backing
store holds elements of a bin only while that bin is full) is what makes
queries two-sided: one bin probe, plus one store probe only when the bin
is full.

Elements are multiset-counted throughout.  In set use the caller simply
never inserts an element twice.  An optional keyed permutation is applied
first so that bin loads are random regardless of the input set; the filter
skips it because its inputs are already uniform fingerprints.
"""

from __future__ import annotations

from contextlib import nullcontext
from fractions import Fraction

from .core_bits import AccessMeter
from .envelope import pack_envelope, unpack_envelope
from .errors import CapacityError, ComponentOverflow, ConfigError
from .hashing import Params, Permutation, derive_params, hash_keys, sid_hash
from .pocket_dict import PocketDictionary
from .sid import Sid


class CrateDictDense:
    KIND = "dense-dict"

    def __init__(self, params: Params, seed: bytes, *, permute: bool = True,
                 meter: AccessMeter | None = None,
                 derive_inputs: dict | None = None):
        if params.mode != "dense":
            raise ConfigError("dense layout requires dense-mode geometry")
        self.params = params
        self.seed = bytes(seed)
        self.meter = meter
        self.permute = permute
        self._derive_inputs = derive_inputs
        self._perm = Permutation(params.universe, self.seed) if permute else None
        self._bucket_keys = hash_keys(self.seed, b"sid-bucket")
        self._pds = [
            [PocketDictionary(params.m, params.f, params.pd_value_bits,
                              params.block_words, meter)
             for _ in range(params.pds_per_crate)]
            for _ in range(params.crates)
        ]
        self._sids = [Sid(params, meter) for _ in range(params.crates)]
        self.live = 0
        self.overflow_events = 0

    # -- plumbing -------------------------------------------------------------

    def _op(self, kind: str):
        return self.meter.op(kind) if self.meter is not None else nullcontext()

    def _coords(self, x: int) -> tuple[int, int, int, int, int]:
        p = self.params
        if not 0 <= x < p.universe:
            raise ValueError(f"element {x} outside universe [0, {p.universe})")
        y = self._perm.forward(x) if self._perm is not None else x
        hc, rem = divmod(y, p.rho_c)
        hb, rem = divmod(rem, p.rho_m)
        q, r = divmod(rem, p.rho_1)
        return hc, hb, q, r, y

    def _bucket(self, y: int) -> int:
        k0, k1 = self._bucket_keys
        return sid_hash(y, self.params.sid_buckets, k0, k1)

    def __len__(self) -> int:
        return self.live

    def __contains__(self, x: int) -> bool:
        return self.query(x) > 0

    # -- operations -----------------------------------------------------------

    def insert(self, x: int) -> None:
        if self.live >= self.params.n:
            raise CapacityError(f"dictionary is at capacity {self.params.n}")
        hc, hb, q, r, y = self._coords(x)
        with self._op("insert"):
            pd = self._pds[hc][hb]
            if not pd.full:
                assert pd.insert(q, r)
            else:
                # fullness came from the bin header: account for that read
                if self.meter is not None:
                    self.meter.add_reads(pd._touch_words)
                if not self._sids[hc].insert(self._bucket(y), hb, q, r):
                    self.overflow_events += 1
                    raise ComponentOverflow("backing store", detail=(
                        f"crate {hc} bucket {self._bucket(y)} cannot take "
                        f"another record"))
            self.live += 1

    def query(self, x: int) -> int:
        hc, hb, q, r, y = self._coords(x)
        with self._op("query"):
            pd = self._pds[hc][hb]
            count = pd.query(q, r)
            if pd.full:
                count += self._sids[hc].query(self._bucket(y), hb, q, r)
            return count

    def delete(self, x: int) -> None:
        hc, hb, q, r, y = self._coords(x)
        with self._op("delete"):
            pd = self._pds[hc][hb]
            if pd.query(q, r) > 0:
                pd.delete(q, r)
                popped = self._sids[hc].pop(hb)
                if popped is not None:
                    assert pd.insert(*popped)
            elif pd.full:
                if not self._sids[hc].delete(self._bucket(y), hb, q, r):
                    raise KeyError(x)
            else:
                raise KeyError(x)
            self.live -= 1

    # -- verification -----------------------------------------------------------

    def check_invariants(self) -> None:
        p = self.params
        total = 0
        for hc in range(p.crates):
            sid = self._sids[hc]
            sid.audit_lists()
            for hb, pd in enumerate(self._pds[hc]):
                decoded = pd.decode()
                pd.verify()
                for q, r in decoded:
                    assert 0 <= q < p.m and 0 <= r < p.rho_1
                total += len(decoded)
                if sid.heads[hb] != sid.null:
                    assert pd.full, \
                        f"bin {hb} of crate {hc} forwarded while not full"
            for csd in sid.csds:
                csd.verify()
                for payload, count in csd.records:
                    hb, q, value = sid.unpack_key(sid.key_of(payload))
                    assert 0 <= hb < p.pds_per_crate and 0 <= q < p.m
                    assert 0 <= value < p.rho_1
                    assert 1 <= count <= p.csd_max_count
            total += sid.cardinality()
        assert total == self.live, f"live count {self.live}, stored {total}"

    # -- reporting / serialization ---------------------------------------------

    def space_report(self) -> dict:
        p = self.params
        pd_bits = sum(pd.allocated_bits for crate in self._pds for pd in crate)
        sid_bits = sum(sid.allocated_bits() for sid in self._sids)
        return {
            "mode": p.mode, "n": p.n, "w_eff": p.w_eff, "ell": p.ell,
            "live": self.live, "pd_bits": pd_bits, "sid_bits": sid_bits,
            "total_bits": pd_bits + sid_bits,
            "crates": p.crates, "pds_per_crate": p.pds_per_crate,
            "pd_capacity": p.crates * p.pds_per_crate * p.f,
        }

    def _header(self) -> dict:
        inputs = self._derive_inputs or {}
        return {
            "n": self.params.n,
            "rho": [self.params.rho.numerator, self.params.rho.denominator],
            "w_eff": self.params.w_eff,
            "overrides": inputs.get("overrides"),
            "permute": self.permute,
            "seed": self.seed.hex(),
            "live": self.live,
        }

    def _blobs(self) -> list[bytes]:
        blobs = []
        for hc in range(self.params.crates):
            blobs.extend(pd.to_bytes() for pd in self._pds[hc])
            blobs.extend(self._sids[hc].to_blobs())
        return blobs

    def to_bytes(self) -> bytes:
        return pack_envelope(self.KIND, self._header(), self._blobs())

    def _load_blobs(self, blobs: list[bytes], live: int) -> None:
        per_crate = self.params.pds_per_crate + self._sids[0].blob_count
        if len(blobs) != per_crate * self.params.crates:
            raise ConfigError("container blob count does not match geometry")
        it = iter(blobs)
        for hc in range(self.params.crates):
            for pd in self._pds[hc]:
                pd.load_bytes(next(it))
            sid_blobs = [next(it) for _ in range(self._sids[hc].blob_count)]
            self._sids[hc].load_blobs(sid_blobs)
        self.live = live
        self.check_invariants()

    @classmethod
    def from_bytes(cls, raw: bytes, meter: AccessMeter | None = None):
        kind, header, blobs = unpack_envelope(raw)
        if kind != cls.KIND:
            raise ConfigError(f"container holds {kind!r}, expected {cls.KIND!r}")
        rho = Fraction(*header["rho"])
        overrides = header.get("overrides") or None
        params = derive_params(header["n"], rho, header["w_eff"],
                               overrides=overrides)
        obj = cls(params, bytes.fromhex(header["seed"]),
                  permute=header["permute"], meter=meter,
                  derive_inputs={"overrides": overrides})
        obj._load_blobs(blobs, header["live"])
        return obj
