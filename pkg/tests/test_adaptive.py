"""Minimal distinguishing-prefix planning, checked against worked examples
and a brute-force replanner."""

import random

import pytest

from cratedict.adaptive import (
    compute_group_fragments,
    lcp,
    match_ranks,
    plan_insert,
    plan_shrink,
    resolve_insert,
    verify_group,
)


def frag(s: str) -> tuple[int, int]:
    return (int(s, 2) if s else 0, len(s))


def test_lcp_examples():
    assert lcp(*frag("0010"), *frag("0111")) == 1
    assert lcp(*frag("0010"), *frag("0011")) == 3
    assert lcp(*frag("0010"), *frag("1100")) == 0
    assert lcp(*frag("0010"), *frag("0010")) == 4
    assert lcp(*frag("001"), *frag("0010")) == 3
    assert lcp(*frag(""), *frag("1")) == 0


def test_batch_worked_examples():
    ell = 4
    assert compute_group_fragments([0b0010, 0b0111], ell) == \
        [frag("00"), frag("01")]
    assert compute_group_fragments([0b0010, 0b0011, 0b1100], ell) == \
        [frag("0010"), frag("0011"), frag("1")]
    assert compute_group_fragments([0b0110], ell) == [frag("")]
    assert compute_group_fragments([], ell) == []
    # copies share the fragment of their value
    assert compute_group_fragments([0b0010, 0b0111, 0b0010], ell) == \
        [frag("00"), frag("01"), frag("00")]


def test_insert_no_match_is_final():
    ell = 4
    frags = [frag("0010"), frag("0011"), frag("1")]
    plan = plan_insert(frags, 0b0110, ell)
    assert plan.kind == "new" and plan.hits == []
    assert plan.fragment == frag("01")
    verify_group(frags + [plan.fragment], [0b0010, 0b0011, 0b1100, 0b0110], ell)


def test_insert_into_empty_group():
    plan = plan_insert([], 0b1010, 4)
    assert plan.kind == "new" and plan.fragment == frag("")


def test_insert_extend_both_sides():
    ell = 4
    frags = [frag("00"), frag("01")]
    plan = plan_insert(frags, 0b0111, ell)
    assert plan.kind == "fetch" and plan.hits == [1]
    res = resolve_insert(frags[1], 0b0110, 0b0111, ell)
    assert res.kind == "extend"
    assert res.fragment == frag("0111") and res.hit_fragment == frag("0110")
    frags[1] = res.hit_fragment
    verify_group(frags + [res.fragment], [0b0010, 0b0110, 0b0111], ell)


def test_insert_duplicate_shares_fragment():
    ell = 4
    frags = [frag("00"), frag("01")]
    plan = plan_insert(frags, 0b0110, ell)
    assert plan.kind == "fetch" and plan.hits == [1]
    res = resolve_insert(frags[1], 0b0110, 0b0110, ell)
    assert res.fragment == frags[1]
    assert res.kind == "duplicate"
    verify_group(frags + [frags[1]], [0b0010, 0b0110, 0b0110], ell)


def test_insert_matches_all_copies():
    ell = 4
    frags = [frag(""), frag("")]
    plan = plan_insert(frags, 0b0111, ell)
    assert plan.kind == "fetch" and plan.hits == [0, 1]
    res = resolve_insert(frag(""), 0b0010, 0b0111, ell)
    assert res.hit_fragment == frag("00") and res.fragment == frag("01")


def test_shrink_single_survivor_drops_to_empty():
    plan = plan_shrink([frag("00"), frag("01")], 0)
    assert plan is not None
    assert plan.ranks == [0] and plan.fragment == frag("")


def test_shrink_rewrites_deep_neighbor():
    # removing 0010 leaves {0011, 1100}: 0011 shrinks to a single bit
    frags = [frag("0010"), frag("0011"), frag("1")]
    plan = plan_shrink(frags, 0)
    assert plan is not None
    assert plan.ranks == [0] and plan.fragment == frag("0")
    verify_group([frag("0"), frag("1")], [0b0011, 0b1100], 4)


def test_shrink_often_unnecessary():
    # removing 1100 from {0010, 0011, 1100} cannot shorten the deep pair
    assert plan_shrink([frag("0010"), frag("0011"), frag("1")], 2) is None
    # copies keep each other long
    assert plan_shrink([frag("0"), frag("1"), frag("1")], 0) is not None
    assert plan_shrink([frag("0"), frag("0"), frag("1")], 2) is not None


def test_shrink_copies_rewrite_together():
    plan = plan_shrink([frag("0"), frag("1"), frag("1")], 0)
    assert plan is not None
    assert plan.ranks == [0, 1] and plan.fragment == frag("")


def test_match_ranks_prefix_free_guard():
    with pytest.raises(AssertionError):
        match_ranks([frag("0"), frag("01")], 0b0100, 4)


def test_random_groups_track_batch_recompute():
    rng = random.Random(0xAD)
    for trial in range(300):
        ell = rng.choice([3, 5, 8, 16])
        group: list[int] = []
        frags: list[tuple[int, int]] = []
        for _ in range(rng.randrange(1, 24)):
            if group and rng.random() < 0.35:
                victim = rng.randrange(len(group))
                value = group[victim]
                if group.count(value) == 1:
                    plan = plan_shrink(frags, victim)
                    del group[victim], frags[victim]
                    if plan is not None:
                        for rank in plan.ranks:
                            frags[rank] = plan.fragment
                else:
                    del group[victim], frags[victim]
            else:
                r = rng.randrange(1 << ell)
                plan = plan_insert(frags, r, ell)
                if plan.kind == "new":
                    frags.append(plan.fragment)
                else:
                    res = resolve_insert(frags[plan.hits[0]],
                                         group[plan.hits[0]], r, ell)
                    if res.kind == "extend":
                        for rank in plan.hits:
                            frags[rank] = res.hit_fragment
                    frags.append(res.fragment)
                group.append(r)
            verify_group(frags, group, ell)
