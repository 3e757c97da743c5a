"""Adaptive remainder fragments for the sparse layout.

When remainders are too wide to keep inline, each element stores only a
prefix of its remainder that is long enough to tell it apart from the other
distinct remainders in its slot group.  The stored set is always the
pointwise-minimal one: an element's fragment is one bit longer than its
deepest agreement with any other distinct remainder in the group, and a
group with a single distinct remainder needs no bits at all.  Copies of the
same element share one fragment.

Minimality buys two properties this module leans on heavily:

* the fragment set is prefix-free across distinct remainders, so a query
  remainder matches at most one distinct fragment;
* the true pairwise agreement of two distinct remainders is visible within
  their fragments (both diverge before either fragment ends), so membership
  changes can be re-planned from the stored fragments alone.

The only full-remainder fetch ever needed is on insert, when the new
remainder extends past a matching fragment and the divergence point lies
beyond it.  All functions here are pure planning helpers; the sparse crate
applies their results to its stores and does the metering.

Fragments are (bits, length) pairs, most significant bit first; remainders
are ``ell``-bit integers.
"""

from __future__ import annotations

from typing import NamedTuple


def lcp(a: int, la: int, b: int, lb: int) -> int:
    """Length of the longest common prefix of two MSB-first fragments."""
    n = min(la, lb)
    if n <= 0:
        return 0
    diff = (a >> (la - n)) ^ (b >> (lb - n))
    return n if not diff else n - diff.bit_length()


def prefix_of(r: int, ell: int, length: int) -> tuple[int, int]:
    return r >> (ell - length), length


def matches(fragment: tuple[int, int], r: int, ell: int) -> bool:
    bits, length = fragment
    return length <= ell and (r >> (ell - length)) == bits


def match_ranks(fragments: list[tuple[int, int]], r: int, ell: int) -> list[int]:
    """Ranks whose fragment is a prefix of r.  All hits share one fragment."""
    hits = [i for i, frag in enumerate(fragments) if matches(frag, r, ell)]
    assert len({fragments[i] for i in hits}) <= 1, "fragment set not prefix-free"
    return hits


class InsertPlan(NamedTuple):
    kind: str                             # "new" | "fetch"
    hits: list[int]
    fragment: tuple[int, int] | None     # set for "new"


def plan_insert(fragments: list[tuple[int, int]], r: int, ell: int) -> InsertPlan:
    """First insert stage, from stored fragments only.

    "new": no fragment matches; the returned fragment is final and nothing
    else changes.  "fetch": the matching element's full remainder must be
    read and fed to resolve_insert.
    """
    hits = match_ranks(fragments, r, ell)
    if hits:
        return InsertPlan("fetch", hits, None)
    best = 0
    for bits, length in fragments:
        best = max(best, lcp(bits, length, r, ell))
    length = 1 + best if fragments else 0
    assert length <= ell
    return InsertPlan("new", [], prefix_of(r, ell, length))


class ResolvePlan(NamedTuple):
    kind: str                             # "duplicate" | "extend"
    fragment: tuple[int, int]            # for the new element
    hit_fragment: tuple[int, int] | None  # replacement for every hit rank


def resolve_insert(star_fragment: tuple[int, int], r_star: int, r: int,
                   ell: int) -> ResolvePlan:
    """Second insert stage, after fetching the matched full remainder."""
    if r_star == r:
        return ResolvePlan("duplicate", star_fragment, None)
    length = lcp(r_star, ell, r, ell) + 1
    assert length <= ell
    return ResolvePlan("extend", prefix_of(r, ell, length),
                       prefix_of(r_star, ell, length))


class ShrinkPlan(NamedTuple):
    ranks: list[int]                     # post-removal ranks to rewrite
    fragment: tuple[int, int]


def plan_shrink(fragments: list[tuple[int, int]],
                victim: int) -> ShrinkPlan | None:
    """Plan fragment rewrites for removing the last copy of one remainder.

    ``fragments`` is the group before removal, ``victim`` the departing
    rank.  Returned ranks are positions after the victim is gone.  At most
    one distinct remainder ever shrinks; its copies all rewrite together.
    """
    rest = [frag for i, frag in enumerate(fragments) if i != victim]
    assert fragments[victim] not in rest, "victim still has copies"
    if not rest:
        return None
    distinct = sorted(set(rest))
    if len(distinct) == 1:
        if distinct[0][1] == 0:
            return None
        return ShrinkPlan(list(range(len(rest))), (0, 0))
    shrunk = None
    for bits, length in distinct:
        deepest = max(lcp(bits, length, b2, l2)
                      for b2, l2 in distinct if (b2, l2) != (bits, length))
        new_len = deepest + 1
        assert new_len <= length, "stored fragments were not minimal"
        if new_len < length:
            assert shrunk is None, "more than one remainder shrank"
            shrunk = ((bits, length), (bits >> (length - new_len), new_len))
    if shrunk is None:
        return None
    old, new = shrunk
    return ShrinkPlan([i for i, frag in enumerate(rest) if frag == old], new)


def compute_group_fragments(remainders: list[int], ell: int) -> list[tuple[int, int]]:
    """Batch form: minimal fragments for a whole group at once."""
    distinct = sorted(set(remainders))
    frag_of: dict[int, tuple[int, int]] = {}
    for r in distinct:
        if len(distinct) == 1:
            frag_of[r] = (0, 0)
            continue
        deepest = max(lcp(r, ell, r2, ell) for r2 in distinct if r2 != r)
        assert deepest < ell, "distinct remainders collide"
        frag_of[r] = prefix_of(r, ell, deepest + 1)
    return [frag_of[r] for r in remainders]


def verify_group(fragments: list[tuple[int, int]], remainders: list[int],
                 ell: int) -> None:
    """Audit hook: stored fragments must be exactly the minimal set."""
    assert fragments == compute_group_fragments(remainders, ell)
