"""Static k-bit function table over hashed keys.

Keys are hashed to fingerprints in a universe cubic in the key count, and
the fingerprints decompose into bin coordinates exactly like dictionary
elements.  Each key's label is stored at the rank that its shortest
distinguishing remainder prefix occupies inside its quotient group, so the
finished structure keeps only labels plus fragments: a query re-derives
the coordinates, matches the one fragment that prefixes the remainder
(fragments in a group are prefix-free, so at most one can match), and
reads the label at that rank.  Full remainders are needed only while
building, to compute the fragments, and live in throwaway side tables.

Small labels sit directly in the bin slots and backing-store records;
wide labels go to per-bin and per-bucket motels behind narrow pointers.
The build is retried with a fresh hash seed whenever fingerprints collide
or a fixed-capacity component overflows, so a completed build is exact on
every key; queries for non-keys return an arbitrary value.
"""

from __future__ import annotations

import hashlib
from contextlib import nullcontext

from .adaptive import lcp, match_ranks, plan_insert, resolve_insert
from .core_bits import AccessMeter
from .csd import CountingSetDictionary, VarCountingSetDictionary
from .envelope import pack_envelope, unpack_envelope
from .errors import ComponentOverflow, ConfigError, ConstructionFailure
from .hashing import (
    CSD_EXTRA_BLOCKS,
    LEN_FACTOR,
    bits_for,
    ceil_div,
    ceil_log2,
    decompose,
    derive_params,
    hash_keys,
    mix_int,
    sid_hash,
)
from .pocket_dict import PocketDictionary, VarPocketDictionary
from .pocket_motel import PocketMotel


def inline_label_threshold(n: int) -> int:
    """Widest label that still rides inside the bin slots themselves."""
    return 2 * ceil_log2(ceil_log2(max(n, 4)))


def _attempt_seed(master: bytes, attempt: int) -> bytes:
    return hashlib.blake2b(master, digest_size=32,
                           salt=attempt.to_bytes(8, "big")).digest()


def _record_geometry(p, k: int, inline: bool) -> tuple[int, int, int]:
    """Value width, padded payload width, and capacity of one spill store."""
    budget = (p.c + CSD_EXTRA_BLOCKS) * p.w_eff
    if inline:
        payload = ceil_div(p.hb_bits + p.q_bits + k, p.c) * p.c
        support = budget // (payload + 1)
        if support < 1:
            raise ConfigError("label too wide for a backing-store record")
        return k, payload, support
    best = None
    for vb in range(0, 65):
        payload = ceil_div(p.hb_bits + p.q_bits + vb, p.c) * p.c
        support = budget // (payload + 1)
        if support >= 1 and bits_for(support) <= vb:
            if best is None or support > best[2]:
                best = (vb, payload, support)
    if best is None:
        raise ConfigError("no feasible backing-store pointer width")
    return best


class RetrievalStructure:
    KIND = "retrieval"

    def __init__(self, n: int, k: int, w_eff: int = 64,
                 seed: bytes = b"\x00" * 32, *,
                 meter: AccessMeter | None = None,
                 overrides: dict | None = None):
        if n < 1:
            raise ConfigError("need at least one key")
        if not 1 <= k <= 4096:
            raise ConfigError("label width out of range")
        self.n = n
        self.k = k
        self.seed = bytes(seed)
        self.meter = meter
        self._overrides = dict(overrides) if overrides else None
        self.variant = "inline" if k <= inline_label_threshold(n) else "moteled"
        inline = self.variant == "inline"
        merged = dict(self._overrides or {})
        merged["mode"] = "sparse"  # fragment stores exist only in this layout
        p = derive_params(n, max(16, n * n), w_eff, overrides=merged)
        self.params = p
        self._fp_keys = hash_keys(self.seed, b"retrieval-fp")
        self._bucket_keys = hash_keys(self.seed, b"sid-bucket")

        bin_value_bits = k if inline else p.pd_value_bits
        self._pds = [
            [PocketDictionary(p.m, p.f, bin_value_bits, p.block_words, meter)
             for _ in range(p.pds_per_crate)]
            for _ in range(p.crates)
        ]
        self._varpds = [
            [VarPocketDictionary(p.varpd_m, p.varpd_f, p.varpd_len,
                                 p.block_words, meter)
             for _ in range(p.varpds_per_crate)]
            for _ in range(p.crates)
        ]
        vb, payload_bits, support = _record_geometry(p, k, inline)
        self._value_bits = vb
        self._payload_bits = payload_bits
        self._support = support
        self._frames_per = payload_bits // p.c
        self._n_varcsds = ceil_div(p.sid_buckets, self._frames_per)
        self._csds = [
            [CountingSetDictionary(support, payload_bits, 1, p.block_words,
                                   meter)
             for _ in range(p.sid_buckets)]
            for _ in range(p.crates)
        ]
        varcsd_f = self._frames_per * support
        self._varcsds = [
            [VarCountingSetDictionary(varcsd_f, LEN_FACTOR * varcsd_f,
                                      self._frames_per, p.block_words, meter)
             for _ in range(self._n_varcsds)]
            for _ in range(p.crates)
        ]
        if inline:
            self._motels = None
            self._csd_motels = None
        else:
            # entries widened when k is narrower than the free-list links
            bin_entry = max(k, bits_for(p.f + 1))
            store_entry = max(k, bits_for(support + 1))
            self._motels = [
                [PocketMotel(p.f, bin_entry, p.block_words, meter)
                 for _ in range(p.pds_per_crate)]
                for _ in range(p.crates)
            ]
            self._csd_motels = [
                [PocketMotel(support, store_entry, p.block_words, meter)
                 for _ in range(p.sid_buckets)]
                for _ in range(p.crates)
            ]
        self.live = 0
        self.attempts = 0

    # -- plumbing -------------------------------------------------------------

    def _op(self, kind: str):
        return self.meter.op(kind) if self.meter is not None else nullcontext()

    def _fp(self, x: int) -> int:
        k0, k1 = self._fp_keys
        return mix_int(x, k0, k1) % self.params.universe

    def _bucket(self, y: int) -> int:
        k0, k1 = self._bucket_keys
        return sid_hash(y, self.params.sid_buckets, k0, k1)

    def _vslot(self, hb: int, q: int) -> int:
        return (hb % self.params.super_group) * self.params.m + q

    def _varpd(self, hc: int, hb: int) -> VarPocketDictionary:
        return self._varpds[hc][hb // self.params.super_group]

    def _varcsd(self, hc: int, bucket: int) -> tuple[VarCountingSetDictionary, int]:
        return (self._varcsds[hc][bucket // self._frames_per],
                bucket % self._frames_per)

    def _pack_payload(self, hb: int, q: int, value: int) -> int:
        key = ((hb << self.params.q_bits) | q) << self._value_bits | value
        return key << (self._payload_bits - self.params.hb_bits
                       - self.params.q_bits - self._value_bits)

    def _payload_value(self, payload: int) -> int:
        shift = (self._payload_bits - self.params.hb_bits - self.params.q_bits
                 - self._value_bits)
        return (payload >> shift) & ((1 << self._value_bits) - 1)

    def __len__(self) -> int:
        return self.live

    # -- construction -----------------------------------------------------------

    @classmethod
    def build(cls, keys, labels, *, k: int | None = None, w_eff: int = 64,
              seed: bytes = b"\x00" * 32, retries: int = 16,
              meter: AccessMeter | None = None,
              overrides: dict | None = None) -> "RetrievalStructure":
        keys = list(keys)
        labels = list(labels)
        if not keys:
            raise ValueError("need at least one key")
        if len(keys) != len(labels):
            raise ValueError("keys and labels differ in length")
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate keys")
        if k is None:
            k = max(1, max(v.bit_length() for v in labels))
        if any(not 0 <= v < (1 << k) for v in labels):
            raise ValueError(f"labels must fit in {k} bits")
        master = bytes(seed)
        for attempt in range(retries):
            obj = cls(len(keys), k, w_eff, _attempt_seed(master, attempt),
                      meter=meter, overrides=overrides)
            fps = [obj._fp(x) for x in keys]
            if len(set(fps)) != len(fps):
                continue
            shadows: dict = {}  # full remainders, rank-aligned; build-only
            try:
                for y, v in zip(fps, labels):
                    with obj._op("build"):
                        obj._insert_build(y, v, shadows)
            except ComponentOverflow:
                continue
            obj.live = len(keys)
            obj.attempts = attempt + 1
            return obj
        raise ConstructionFailure(f"no hash seed succeeded in {retries} attempts")

    def _insert_build(self, y: int, label: int, shadows: dict) -> None:
        # Fragments must be minimal over the whole quotient group, bin and
        # spilled members together: a query compares its remainder against
        # the bin's fragments before falling back to its bucket's run, so a
        # fragment computed over only part of the group could capture a
        # member stored elsewhere.  The shadow keeps, per group, the full
        # remainder, the live fragment, and where that fragment is stored.
        p = self.params
        hc, hb, q, r = decompose(y, p)
        pd = self._pds[hc][hb]
        group = shadows.setdefault((hc, hb, q), [])
        plan = plan_insert([frag for _, frag, _ in group], r, p.ell)
        if plan.kind == "new":
            frag = plan.fragment
        else:
            hit = plan.hits[0]
            star = resolve_insert(group[hit][1], group[hit][0], r, p.ell)
            assert star.kind == "extend"  # fingerprints are distinct
            frag = star.fragment
            self._rewrite_fragment(hc, hb, q, group[hit][2], star.hit_fragment)
            group[hit][1] = star.hit_fragment
        if not pd.full:
            rank = pd.counts[q]
            if not self._varpd(hc, hb).insert(self._vslot(hb, q), rank, *frag):
                raise ComponentOverflow("fragment store")
            if self.variant == "inline":
                value = label
            else:
                value = self._motels[hc][hb].insert(label)
            assert pd.insert_at(q, rank, value)
            group.append([r, frag, ("bin", rank)])
            return
        bucket = self._bucket(y)
        csd = self._csds[hc][bucket]
        if csd.size == self._support:
            raise ComponentOverflow("backing store")
        vc, frame = self._varcsd(hc, bucket)
        prefix = (hb << p.q_bits) | q
        rs, re = csd.group_range(prefix, p.hb_bits + p.q_bits)
        if not vc.insert(frame, re, *frag):
            raise ComponentOverflow("fragment store")
        if self.variant == "inline":
            value = label
        else:
            value = self._csd_motels[hc][bucket].insert(label)
        assert csd.insert_at(re, self._pack_payload(hb, q, value))
        group.append([r, frag, ("sid", bucket, re - rs)])

    def _rewrite_fragment(self, hc: int, hb: int, q: int, where: tuple,
                          frag: tuple[int, int]) -> None:
        # bin ranks and within-run ranks are append-stable while building
        if where[0] == "bin":
            ok = self._varpd(hc, hb).replace(self._vslot(hb, q), where[1], *frag)
        else:
            _, bucket, run_rank = where
            p = self.params
            csd = self._csds[hc][bucket]
            rs, _ = csd.group_range((hb << p.q_bits) | q, p.hb_bits + p.q_bits)
            vc, frame = self._varcsd(hc, bucket)
            ok = vc.replace(frame, rs + run_rank, *frag)
        if not ok:
            raise ComponentOverflow("fragment store")

    # -- lookup -----------------------------------------------------------------

    def _locate(self, y: int):
        """(where, coordinates, slot value) of y's fragment match, or None."""
        p = self.params
        hc, hb, q, r = decompose(y, p)
        pd = self._pds[hc][hb]
        vals = pd.read_group(q)
        frags = self._varpd(hc, hb).read_group(self._vslot(hb, q))
        hits = match_ranks(frags, r, p.ell)
        if hits:
            return ("bin", hc, hb, q, hits[0], vals[hits[0]])
        if not pd.full:
            return None
        bucket = self._bucket(y)
        csd = self._csds[hc][bucket]
        vc, frame = self._varcsd(hc, bucket)
        prefix = (hb << p.q_bits) | q
        rs, re = csd.group_range(prefix, p.hb_bits + p.q_bits)
        frags = vc.read_frame(frame)[rs:re]
        hits = match_ranks(frags, r, p.ell)
        if not hits:
            return None
        ks = rs + hits[0]
        return ("sid", hc, bucket, hb, ks, self._payload_value(csd.payload_at(ks)))

    def query(self, x: int) -> int:
        """Label of x when x was built in; an arbitrary value otherwise."""
        with self._op("r_query"):
            hit = self._locate(self._fp(x))
            if hit is None:
                return 0
            value = hit[-1]
            if self.variant == "inline":
                return value
            if hit[0] == "bin":
                return self._motels[hit[1]][hit[2]].read(value)
            return self._csd_motels[hit[1]][hit[2]].read(value)

    def update(self, x: int, v: int) -> None:
        """Overwrite x's label in place; KeyError when nothing matches."""
        if not 0 <= v < (1 << self.k):
            raise ValueError(f"label must fit in {self.k} bits")
        with self._op("r_update"):
            hit = self._locate(self._fp(x))
            if hit is None:
                raise KeyError(x)
            if hit[0] == "bin":
                _, hc, hb, q, rank, value = hit
                if self.variant == "inline":
                    self._pds[hc][hb].replace_at(q, rank, v)
                else:
                    self._motels[hc][hb].replace(value, v)
            else:
                _, hc, bucket, hb, ks, value = hit
                if self.variant == "inline":
                    csd = self._csds[hc][bucket]
                    payload = csd.payload_at(ks)
                    mask = (1 << self._value_bits) - 1
                    shift = (self._payload_bits - self.params.hb_bits
                             - self.params.q_bits - self._value_bits)
                    payload = (payload & ~(mask << shift)) | (v << shift)
                    csd.replace_payload_at(ks, payload)
                else:
                    self._csd_motels[hc][bucket].replace(value, v)

    # -- verification -----------------------------------------------------------

    @staticmethod
    def _assert_prefix_free(frags) -> None:
        for i in range(len(frags)):
            for j in range(i + 1, len(frags)):
                bi, li = frags[i]
                bj, lj = frags[j]
                assert lcp(bi, li, bj, lj) < min(li, lj), \
                    "fragments are not prefix-free"

    def check_invariants(self) -> None:
        p = self.params
        total = 0
        for hc in range(p.crates):
            for varpd in self._varpds[hc]:
                varpd.verify()
            for vc in self._varcsds[hc]:
                vc.verify()
            # fragments of one quotient group, wherever each member is stored
            group_frags: dict[tuple[int, int], list] = {}
            for hb, pd in enumerate(self._pds[hc]):
                pd.verify()
                varpd = self._varpd(hc, hb)
                ptrs = []
                for q in range(p.m):
                    vslot = self._vslot(hb, q)
                    start = varpd.group_start(vslot)
                    frags = varpd.elems[start:start + varpd.counts[vslot]]
                    assert len(frags) == pd.counts[q], \
                        f"bin {hb} group {q} out of step with its fragments"
                    if frags:
                        group_frags.setdefault((hb, q), []).extend(frags)
                    ptrs.extend(pd._group_values(q))
                total += pd.occupancy
                if self.variant == "moteled":
                    motel = self._motels[hc][hb]
                    motel.audit()
                    occupied = {i for i, used in enumerate(motel.occupied) if used}
                    assert sorted(ptrs) == sorted(occupied), \
                        f"bin {hb} pointers do not match its motel"
            for bucket, csd in enumerate(self._csds[hc]):
                records = csd.verify()
                vc, frame = self._varcsd(hc, bucket)
                frags = vc.frame_elems[frame]
                assert len(frags) == csd.size
                prefixes = []
                ptrs = []
                for rank, (payload, count) in enumerate(records):
                    assert count == 1
                    shift = self._payload_bits - p.hb_bits - p.q_bits
                    prefix = payload >> shift
                    hb, q = prefix >> p.q_bits, prefix & ((1 << p.q_bits) - 1)
                    assert 0 <= hb < p.pds_per_crate and 0 <= q < p.m
                    assert self._pds[hc][hb].full, \
                        f"bucket {bucket} holds a record of non-full bin {hb}"
                    prefixes.append(prefix)
                    ptrs.append(self._payload_value(payload))
                    group_frags.setdefault((hb, q), []).append(frags[rank])
                assert prefixes == sorted(prefixes), \
                    f"bucket {bucket} runs are not in key order"
                total += csd.size
                if self.variant == "moteled":
                    motel = self._csd_motels[hc][bucket]
                    motel.audit()
                    occupied = {i for i, used in enumerate(motel.occupied) if used}
                    assert sorted(ptrs) == sorted(occupied)
            for frags in group_frags.values():
                self._assert_prefix_free(frags)
        assert total == self.live, f"live count {self.live}, stored {total}"

    # -- reporting / serialization ---------------------------------------------

    def space_report(self) -> dict:
        p = self.params
        pd_bits = sum(pd.allocated_bits for crate in self._pds for pd in crate)
        varpd_bits = sum(v.allocated_bits for crate in self._varpds for v in crate)
        csd_bits = sum(c.allocated_bits for crate in self._csds for c in crate)
        varcsd_bits = sum(v.allocated_bits for crate in self._varcsds for v in crate)
        motel_bits = 0
        if self.variant == "moteled":
            motel_bits += sum(m.allocated_bits
                              for crate in self._motels for m in crate)
            motel_bits += sum(m.allocated_bits
                              for crate in self._csd_motels for m in crate)
        total = pd_bits + varpd_bits + csd_bits + varcsd_bits + motel_bits
        return {
            "variant": self.variant, "n": self.n, "k": self.k,
            "w_eff": p.w_eff, "live": self.live,
            "pd_bits": pd_bits, "varpd_bits": varpd_bits,
            "csd_bits": csd_bits, "varcsd_bits": varcsd_bits,
            "motel_bits": motel_bits, "total_bits": total,
            "bits_per_label": total / (self.n * self.k),
        }

    def _blob_list(self) -> list[bytes]:
        blobs = []
        for hc in range(self.params.crates):
            blobs.extend(pd.to_bytes() for pd in self._pds[hc])
            blobs.extend(v.to_bytes() for v in self._varpds[hc])
            blobs.extend(c.to_bytes() for c in self._csds[hc])
            blobs.extend(v.to_bytes() for v in self._varcsds[hc])
            if self.variant == "moteled":
                blobs.extend(m.to_bytes() for m in self._motels[hc])
                blobs.extend(m.to_bytes() for m in self._csd_motels[hc])
        return blobs

    def to_bytes(self) -> bytes:
        header = {
            "n": self.n, "k": self.k, "w_eff": self.params.w_eff,
            "seed": self.seed.hex(), "live": self.live,
            "attempts": self.attempts, "overrides": self._overrides,
        }
        return pack_envelope(self.KIND, header, self._blob_list())

    @classmethod
    def from_bytes(cls, raw: bytes, meter: AccessMeter | None = None):
        kind, header, blobs = unpack_envelope(raw)
        if kind != cls.KIND:
            raise ConfigError(f"container holds {kind!r}, expected {cls.KIND!r}")
        obj = cls(header["n"], header["k"], header["w_eff"],
                  bytes.fromhex(header["seed"]), meter=meter,
                  overrides=header.get("overrides") or None)
        p = obj.params
        per_crate = (p.pds_per_crate + p.varpds_per_crate + p.sid_buckets
                     + obj._n_varcsds)
        if obj.variant == "moteled":
            per_crate += p.pds_per_crate + p.sid_buckets
        if len(blobs) != per_crate * p.crates:
            raise ConfigError("container blob count does not match geometry")
        it = iter(blobs)
        for hc in range(p.crates):
            for pd in obj._pds[hc]:
                pd.load_bytes(next(it))
            for v in obj._varpds[hc]:
                v.load_bytes(next(it))
            for c in obj._csds[hc]:
                c.load_bytes(next(it))
            for v in obj._varcsds[hc]:
                v.load_bytes(next(it))
            if obj.variant == "moteled":
                for m in obj._motels[hc]:
                    m.load_bytes(next(it))
                for m in obj._csd_motels[hc]:
                    m.load_bytes(next(it))
        obj.live = header["live"]
        obj.attempts = header.get("attempts", 0)
        obj.check_invariants()
        return obj


__all__ = ["RetrievalStructure", "inline_label_threshold"]
