"""Sparse-layout dictionary: remainders too wide to keep inline.

Bins keep the same quotienting discipline as the dense layout, but a bin
slot now holds a pointer into the bin's motel, where the full remainder
lives.  What gets compared on the fast path is an adaptive fragment of the
remainder (see adaptive.py), stored in a variable-length pocket shared by a
super-group of neighboring bins.  The backing store mirrors the same split:
counting-store records point into per-bucket motels, and their fragments
live in frame stores, one frame per bucket.

A membership query therefore reads fragments first and touches a full
remainder at most twice: once for the bin-side candidate and once for the
store-side candidate.  Inserts read at most one full remainder, to decide
between "same element" and "fragments must grow".

Fragment budgets are finite, so deletions that must pull a forwarded
element back into a bin pre-plan the whole move and raise ComponentOverflow
with the structure untouched if the rebuilt fragments would not fit.
"""

from __future__ import annotations

import bisect
from contextlib import nullcontext
from fractions import Fraction
from typing import NamedTuple

from . import adaptive
from .core_bits import AccessMeter
from .envelope import pack_envelope, unpack_envelope
from .errors import CapacityError, ComponentOverflow, ConfigError
from .hashing import Params, Permutation, derive_params, hash_keys, sid_hash
from .pocket_dict import PocketDictionary, VarPocketDictionary
from .pocket_motel import PocketMotel
from .sid import Sid


class _BinInsert(NamedTuple):
    kind: str                     # "new" | "dup" | "extend"
    hits: list[int]
    fragment: tuple[int, int]
    hit_fragment: tuple[int, int] | None
    len_delta: int


class _PopCandidate(NamedTuple):
    bucket: int
    abs_rank: int
    q: int
    ptr: int
    r: int
    count: int
    nxt: int
    prev: int
    run_start: int
    run_frags: list[tuple[int, int]]


class CrateDictSparse:
    KIND = "sparse-dict"

    def __init__(self, params: Params, seed: bytes, *, permute: bool = True,
                 meter: AccessMeter | None = None,
                 derive_inputs: dict | None = None):
        if params.mode != "sparse":
            raise ConfigError("sparse layout requires sparse-mode geometry")
        self.params = params
        self.seed = bytes(seed)
        self.meter = meter
        self.permute = permute
        self._derive_inputs = derive_inputs
        self._perm = Permutation(params.universe, self.seed) if permute else None
        self._bucket_keys = hash_keys(self.seed, b"sid-bucket")
        bw = params.block_words
        self._pds = [
            [PocketDictionary(params.m, params.f, params.pd_value_bits, bw, meter)
             for _ in range(params.pds_per_crate)]
            for _ in range(params.crates)
        ]
        self._motels = [
            [PocketMotel(params.f, params.pd_motel_entry_bits, bw, meter)
             for _ in range(params.pds_per_crate)]
            for _ in range(params.crates)
        ]
        self._varpds = [
            [VarPocketDictionary(params.varpd_m, params.varpd_f,
                                 params.varpd_len, bw, meter)
             for _ in range(params.varpds_per_crate)]
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

    def _vslot(self, hb: int, q: int) -> int:
        return (hb % self.params.super_group) * self.params.m + q

    def _varpd(self, hc: int, hb: int) -> VarPocketDictionary:
        return self._varpds[hc][hb // self.params.super_group]

    def _varcsd(self, sid: Sid, bucket: int):
        s = self.params.frames_per_varcsd
        return sid.varcsds[bucket // s], bucket % s

    def __len__(self) -> int:
        return self.live

    def __contains__(self, x: int) -> bool:
        return self.query(x) > 0

    # -- bin-side planning ------------------------------------------------------

    def _plan_bin_insert(self, vals: list[int], frags: list[tuple[int, int]],
                         motel: PocketMotel, r: int) -> _BinInsert:
        """May read one full remainder.  vals/frags describe one slot group."""
        ell = self.params.ell
        plan = adaptive.plan_insert(frags, r, ell)
        if plan.kind == "new":
            return _BinInsert("new", [], plan.fragment, None, plan.fragment[1])
        hits = plan.hits
        r_star = motel.read(vals[hits[0]])
        res = adaptive.resolve_insert(frags[hits[0]], r_star, r, ell)
        if res.kind == "duplicate":
            return _BinInsert("dup", hits, res.fragment, None, res.fragment[1])
        growth = res.hit_fragment[1] - frags[hits[0]][1]
        return _BinInsert("extend", hits, res.fragment, res.hit_fragment,
                          res.fragment[1] + len(hits) * growth)

    @staticmethod
    def _fragment_room(var, extra_len: int) -> bool:
        return (var.occupancy + 1 <= var.cap_f
                and var.payload_bits + extra_len <= var.len_budget)

    def _commit_bin_insert(self, pd: PocketDictionary, varpd: VarPocketDictionary,
                           motel: PocketMotel, slot_q: int, vslot: int,
                           vals: list[int], plan: _BinInsert, r: int) -> None:
        ptr = motel.insert(r)
        rank = bisect.bisect_left(vals, ptr)
        if plan.kind == "extend":
            for hit in plan.hits:
                assert varpd.replace(vslot, hit, *plan.hit_fragment)
        assert pd.insert_at(slot_q, rank, ptr)
        assert varpd.insert(vslot, rank, *plan.fragment)

    # -- store-side (forwarded) operations ---------------------------------------

    def _run_range(self, csd, hb: int, q: int) -> tuple[int, int]:
        p = self.params
        return csd.group_range((hb << p.q_bits) | q, p.hb_bits + p.q_bits)

    def _sid_insert(self, hc: int, hb: int, q: int, r: int, y: int) -> bool:
        p = self.params
        sid = self._sids[hc]
        bucket = self._bucket(y)
        csd = sid.csds[bucket]
        motel = sid.csd_motels[bucket]
        varcsd, frame = self._varcsd(sid, bucket)
        rs, re = self._run_range(csd, hb, q)
        run_frags = varcsd.read_frame(frame)[rs:re]
        sid.touch_csd(bucket, write=False)
        plan = adaptive.plan_insert(run_frags, r, p.ell)
        frag_hit = None
        if plan.kind == "fetch":
            hit_abs = rs + plan.hits[0]
            _, _, ptr_star = sid.unpack_key(sid.key_of(csd.records[hit_abs][0]))
            r_star = motel.read(ptr_star)
            if r_star == r:
                ok = csd.increment_at(hit_abs)
                sid.touch_csd(bucket, write=ok)
                return ok
            res = adaptive.resolve_insert(run_frags[plan.hits[0]], r_star, r, p.ell)
            frag_new, frag_hit = res.fragment, res.hit_fragment
            len_delta = frag_new[1] + frag_hit[1] - run_frags[plan.hits[0]][1]
        else:
            frag_new = plan.fragment
            len_delta = frag_new[1]
        if csd.size == p.csd_support or not self._fragment_room(varcsd, len_delta):
            return False
        ptr = motel.insert(r)
        key = sid.pack_key(hb, q, ptr)
        ks, ke = csd.group_range(key, p.sid_key_bits)
        assert ks == ke, "fresh pointer already recorded"
        hs, he = csd.group_range(hb, p.hb_bits)
        if he > hs:
            nxt, prev = sid.ptrs_of(csd.records[hs][0])
            link = False
        else:
            nxt, prev = sid.head(hb), sid.null
            link = True
        csd.insert_at(ks, sid.pack_payload(key, nxt, prev))
        sid.touch_csd(bucket, write=True)
        if frag_hit is not None:
            assert varcsd.replace(frame, rs + plan.hits[0], *frag_hit)
        assert varcsd.insert(frame, ks, *frag_new)
        if link:
            sid.finish_link(hb, bucket, nxt)
        return True

    def _sid_locate(self, sid: Sid, bucket: int, hb: int, q: int, r: int):
        """Shared query/delete lookup; returns (abs_rank, run info) or None."""
        csd = sid.csds[bucket]
        motel = sid.csd_motels[bucket]
        varcsd, frame = self._varcsd(sid, bucket)
        rs, re = self._run_range(csd, hb, q)
        run_frags = varcsd.read_frame(frame)[rs:re]
        sid.touch_csd(bucket, write=False)
        hits = adaptive.match_ranks(run_frags, r, self.params.ell)
        if not hits:
            return None
        abs_rank = rs + hits[0]
        _, _, ptr = sid.unpack_key(sid.key_of(csd.records[abs_rank][0]))
        if motel.read(ptr) != r:
            return None
        return abs_rank, ptr, rs, run_frags, hits[0], varcsd, frame

    def _sid_query(self, hc: int, hb: int, q: int, r: int, y: int) -> int:
        sid = self._sids[hc]
        bucket = self._bucket(y)
        found = self._sid_locate(sid, bucket, hb, q, r)
        return 0 if found is None else sid.csds[bucket].records[found[0]][1]

    def _sid_delete(self, hc: int, hb: int, q: int, r: int, y: int) -> bool:
        p = self.params
        sid = self._sids[hc]
        bucket = self._bucket(y)
        found = self._sid_locate(sid, bucket, hb, q, r)
        if found is None:
            return False
        abs_rank, ptr, rs, run_frags, run_idx, varcsd, frame = found
        csd = sid.csds[bucket]
        payload, count = csd.records[abs_rank]
        if count > 1:
            csd.decrement_at(abs_rank)
            sid.touch_csd(bucket, write=True)
            return True
        nxt, prev = sid.ptrs_of(payload)
        shrink = adaptive.plan_shrink(run_frags, run_idx)
        csd.decrement_at(abs_rank)
        sid.touch_csd(bucket, write=True)
        sid.csd_motels[bucket].delete(ptr)
        varcsd.delete(frame, abs_rank)
        if shrink is not None:
            for idx in shrink.ranks:
                assert varcsd.replace(frame, rs + idx, *shrink.fragment)
        hs, he = csd.group_range(hb, p.hb_bits)
        if he == hs:
            sid.finish_unlink(hb, nxt, prev)
        return True

    def _sid_peek_pop(self, hc: int, hb: int) -> _PopCandidate | None:
        p = self.params
        sid = self._sids[hc]
        bucket = sid.head(hb)
        if bucket == sid.null:
            return None
        csd = sid.csds[bucket]
        hs, he = csd.group_range(hb, p.hb_bits)
        assert he > hs, "list head holds no record of its bin"
        payload, count = csd.records[hs]
        rec_hb, q, ptr = sid.unpack_key(sid.key_of(payload))
        assert rec_hb == hb
        nxt, prev = sid.ptrs_of(payload)
        assert prev == sid.null
        r = sid.csd_motels[bucket].read(ptr)
        varcsd, frame = self._varcsd(sid, bucket)
        rs, re = self._run_range(csd, hb, q)
        run_frags = varcsd.read_frame(frame)[rs:re]
        sid.touch_csd(bucket, write=False)
        return _PopCandidate(bucket, hs, q, ptr, r, count, nxt, prev, rs, run_frags)

    def _sid_commit_pop(self, hc: int, hb: int, cand: _PopCandidate) -> None:
        p = self.params
        sid = self._sids[hc]
        csd = sid.csds[cand.bucket]
        if cand.count > 1:
            csd.decrement_at(cand.abs_rank)
            sid.touch_csd(cand.bucket, write=True)
            return
        shrink = adaptive.plan_shrink(cand.run_frags, cand.abs_rank - cand.run_start)
        csd.decrement_at(cand.abs_rank)
        sid.touch_csd(cand.bucket, write=True)
        sid.csd_motels[cand.bucket].delete(cand.ptr)
        varcsd, frame = self._varcsd(sid, cand.bucket)
        varcsd.delete(frame, cand.abs_rank)
        if shrink is not None:
            for idx in shrink.ranks:
                assert varcsd.replace(frame, cand.run_start + idx, *shrink.fragment)
        hs, he = csd.group_range(hb, p.hb_bits)
        if he == hs:
            sid.finish_unlink(hb, cand.nxt, cand.prev)

    # -- operations -----------------------------------------------------------

    def insert(self, x: int) -> None:
        p = self.params
        if self.live >= p.n:
            raise CapacityError(f"dictionary is at capacity {p.n}")
        hc, hb, q, r, y = self._coords(x)
        with self._op("insert"):
            pd = self._pds[hc][hb]
            if not pd.full:
                varpd = self._varpd(hc, hb)
                motel = self._motels[hc][hb]
                vslot = self._vslot(hb, q)
                vals = pd.read_group(q)
                frags = varpd.read_group(vslot)
                plan = self._plan_bin_insert(vals, frags, motel, r)
                if not self._fragment_room(varpd, plan.len_delta):
                    self.overflow_events += 1
                    raise ComponentOverflow("fragment store", detail=(
                        f"crate {hc} super-group {hb // p.super_group} budget"))
                self._commit_bin_insert(pd, varpd, motel, q, vslot, vals, plan, r)
            else:
                if self.meter is not None:
                    self.meter.add_reads(pd._touch_words)
                if not self._sid_insert(hc, hb, q, r, y):
                    self.overflow_events += 1
                    raise ComponentOverflow("backing store", detail=(
                        f"crate {hc} bucket {self._bucket(y)}"))
            self.live += 1

    def query(self, x: int) -> int:
        p = self.params
        hc, hb, q, r, y = self._coords(x)
        with self._op("query"):
            pd = self._pds[hc][hb]
            vals = pd.read_group(q)
            frags = self._varpd(hc, hb).read_group(self._vslot(hb, q))
            hits = adaptive.match_ranks(frags, r, p.ell)
            count = 0
            if hits and self._motels[hc][hb].read(vals[hits[0]]) == r:
                count = len(hits)
            if pd.full:
                count += self._sid_query(hc, hb, q, r, y)
            return count

    def delete(self, x: int) -> None:
        p = self.params
        hc, hb, q, r, y = self._coords(x)
        with self._op("delete"):
            pd = self._pds[hc][hb]
            varpd = self._varpd(hc, hb)
            motel = self._motels[hc][hb]
            vslot = self._vslot(hb, q)
            vals = pd.read_group(q)
            frags = varpd.read_group(vslot)
            hits = adaptive.match_ranks(frags, r, p.ell)
            in_bin = bool(hits) and motel.read(vals[hits[0]]) == r
            if not in_bin:
                if not (pd.full and self._sid_delete(hc, hb, q, r, y)):
                    raise KeyError(x)
                self.live -= 1
                return
            victim = hits[0]
            shrink = adaptive.plan_shrink(frags, victim) if len(hits) == 1 else None
            savings = 0
            if shrink is not None:
                pre = shrink.ranks[0] + (shrink.ranks[0] >= victim)
                savings = len(shrink.ranks) * (frags[pre][1] - shrink.fragment[1])
            popped = self._sid_peek_pop(hc, hb) if pd.full else None
            re_plan = None
            if popped is not None:
                # re-plan against the popped element's own slot group, as it
                # will stand after the victim is gone
                vslot2 = self._vslot(hb, popped.q)
                if popped.q == q:
                    vals2 = vals[:victim] + vals[victim + 1:]
                    frags2 = frags[:victim] + frags[victim + 1:]
                    if shrink is not None:
                        for idx in shrink.ranks:
                            frags2[idx] = shrink.fragment
                else:
                    vals2 = pd.read_group(popped.q)
                    frags2 = varpd.read_group(vslot2)
                re_plan = self._plan_bin_insert(vals2, frags2, motel, popped.r)
                final = (varpd.payload_bits - frags[victim][1] - savings
                         + re_plan.len_delta)
                if final > varpd.len_budget:
                    self.overflow_events += 1
                    raise ComponentOverflow("fragment store", detail=(
                        f"crate {hc} super-group {hb // p.super_group} cannot "
                        f"re-admit a forwarded element"))
            motel.delete(vals[victim])
            pd.delete_at(q, victim)
            varpd.delete(vslot, victim)
            if shrink is not None:
                for idx in shrink.ranks:
                    assert varpd.replace(vslot, idx, *shrink.fragment)
            if popped is not None:
                self._sid_commit_pop(hc, hb, popped)
                self._commit_bin_insert(pd, varpd, motel, popped.q, vslot2,
                                        vals2, re_plan, popped.r)
            self.live -= 1

    # -- verification -----------------------------------------------------------

    def _motel_entry(self, motel: PocketMotel, ptr: int) -> int:
        # unmetered: audits read entries without touching the meter
        return motel.buf.peek(motel._entry_off(ptr), motel.entry_bits)

    def check_invariants(self) -> None:
        p = self.params
        total = 0
        for hc in range(p.crates):
            sid = self._sids[hc]
            sid.audit_lists()
            for varpd in self._varpds[hc]:
                varpd.verify()
            for hb, pd in enumerate(self._pds[hc]):
                pd.verify()
                motel = self._motels[hc][hb]
                motel.audit()
                varpd = self._varpd(hc, hb)
                seen_ptrs = []
                for q in range(p.m):
                    vals = pd._group_values(q)
                    frags = varpd.elems[varpd.group_start(self._vslot(hb, q)):
                                        varpd.group_start(self._vslot(hb, q))
                                        + varpd.counts[self._vslot(hb, q)]]
                    assert len(vals) == len(frags), \
                        f"bin {hb} slot {q}: {len(vals)} ptrs, {len(frags)} fragments"
                    rems = [self._motel_entry(motel, ptr) for ptr in vals]
                    adaptive.verify_group(frags, rems, p.ell)
                    seen_ptrs.extend(vals)
                assert sorted(seen_ptrs) == \
                    [i for i, used in enumerate(motel.occupied) if used]
                total += pd.occupancy
                if sid.heads[hb] != sid.null:
                    assert pd.full, \
                        f"bin {hb} of crate {hc} forwarded while not full"
            for bucket, csd in enumerate(sid.csds):
                csd.verify()
                motel = sid.csd_motels[bucket]
                motel.audit()
                varcsd, frame = self._varcsd(sid, bucket)
                frags = varcsd.frame_elems[frame]
                assert len(frags) == csd.size
                runs: dict[tuple[int, int], tuple[list, list]] = {}
                seen_ptrs = []
                for rank, (payload, count) in enumerate(csd.records):
                    hb, q, ptr = sid.unpack_key(sid.key_of(payload))
                    assert 0 <= hb < p.pds_per_crate and 0 <= q < p.m
                    assert 1 <= count <= p.csd_max_count
                    rems, rfrags = runs.setdefault((hb, q), ([], []))
                    rems.append(self._motel_entry(motel, ptr))
                    rfrags.append(frags[rank])
                    seen_ptrs.append(ptr)
                    total += count
                for (hb, q), (rems, rfrags) in runs.items():
                    assert len(set(rems)) == len(rems), \
                        f"bucket {bucket} run ({hb},{q}) stores one element twice"
                    adaptive.verify_group(rfrags, rems, p.ell)
                assert sorted(seen_ptrs) == \
                    [i for i, used in enumerate(motel.occupied) if used]
        assert total == self.live, f"live count {self.live}, stored {total}"

    # -- reporting / serialization ---------------------------------------------

    def space_report(self) -> dict:
        p = self.params
        pd_bits = sum(pd.allocated_bits for crate in self._pds for pd in crate)
        motel_bits = sum(m.allocated_bits for crate in self._motels for m in crate)
        varpd_bits = sum(v.allocated_bits for crate in self._varpds for v in crate)
        sid_bits = sum(sid.allocated_bits() for sid in self._sids)
        return {
            "mode": p.mode, "n": p.n, "w_eff": p.w_eff, "ell": p.ell,
            "live": self.live, "pd_bits": pd_bits, "motel_bits": motel_bits,
            "varpd_bits": varpd_bits, "sid_bits": sid_bits,
            "total_bits": pd_bits + motel_bits + varpd_bits + sid_bits,
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

    def to_bytes(self) -> bytes:
        blobs = []
        for hc in range(self.params.crates):
            blobs.extend(pd.to_bytes() for pd in self._pds[hc])
            blobs.extend(m.to_bytes() for m in self._motels[hc])
            blobs.extend(v.to_bytes() for v in self._varpds[hc])
            blobs.extend(self._sids[hc].to_blobs())
        return pack_envelope(self.KIND, self._header(), blobs)

    def _load_blobs(self, blobs: list[bytes], live: int) -> None:
        p = self.params
        per_crate = (p.pds_per_crate * 2 + p.varpds_per_crate
                     + self._sids[0].blob_count)
        if len(blobs) != per_crate * p.crates:
            raise ConfigError("container blob count does not match geometry")
        it = iter(blobs)
        for hc in range(p.crates):
            for pd in self._pds[hc]:
                pd.load_bytes(next(it))
            for motel in self._motels[hc]:
                motel.load_bytes(next(it))
            for varpd in self._varpds[hc]:
                varpd.load_bytes(next(it))
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
