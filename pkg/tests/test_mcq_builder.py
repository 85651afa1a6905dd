"""Option construction: forward candidates, related-event dedup, distractor
draws, chunked test samples, and the documented invariants."""
from __future__ import annotations

import random

import pytest

from causalmcq.mcq import (
    NONE_OF_ABOVE,
    BuilderConfig,
    BuildError,
    TooManyOptionsError,
    build_split,
    build_test_samples,
    build_train_sample,
    forward_candidates,
    sample_from_dict,
    sample_to_dict,
)
from causalmcq.synthetic import make_document
from helpers import S1, S2

from helpers import (
    build_simple_doc,
    check_sample_invariants,
    expected_test_sample_count,
)

CFG = BuilderConfig()


def test_golden_sample_frozen(golden_sample):
    assert golden_sample.sample_id == "fx1#ev3#0"
    assert golden_sample.question == "What are the causes and effects of the tsunami?"
    assert [(o.letter, o.mention_id, o.surface) for o in golden_sample.options] == [
        ("A", "ev4", "destroyed"),
        ("B", "ev5", "arrived"),
        ("C", "ev6", "flooding"),
        ("D", None, NONE_OF_ABOVE),
    ]
    assert golden_sample.gold_letters == {"A", "C"}
    assert golden_sample.context.first_sentence == 1
    assert golden_sample.context.last_sentence == 2
    assert golden_sample.context.text == S1 + " " + S2


def test_forward_candidates_order_and_coref(volcano_doc):
    assert forward_candidates(volcano_doc, "ev6") == []
    assert forward_candidates(volcano_doc, "ev4") == ["ev5", "ev6"]
    # ev2 corefers with ev1, so it is not a candidate for ev1
    assert forward_candidates(volcano_doc, "ev1") == ["ev3", "ev4", "ev5", "ev6"]


def test_unrelated_observed_gets_none_gold(volcano_doc):
    sample = build_train_sample(volcano_doc, "ev5", CFG)
    assert sample.gold_letters == {sample.none_letter}
    assert all(o.mention_id != "ev5" for o in sample.options)


def test_none_gold_when_related_only_backward():
    # m2 is linked only to m0 and m1, both before it
    doc = build_simple_doc(
        "bk", ["storm", "flood", "rescue", "quake", "fire", "riot"],
        links=[(0, 2), (1, 2)],
    )
    sample = build_train_sample(doc, "m2", CFG)
    assert sample.gold_letters == {sample.none_letter}


def test_coref_dedup_keeps_closest(volcano_doc):
    # observed ev3 relates to ev4 and ev6; add a cluster over them elsewhere
    doc = build_simple_doc(
        "cd",
        ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"],
        links=[(0, 2), (0, 4)],
        clusters=[[2, 4]],
    )
    # both forward related mentions m2 and m4 corefer; only closest m2 kept
    sample = build_train_sample(doc, "m0", CFG)
    gold_mentions = {
        o.mention_id for o in sample.options if o.letter in sample.gold_letters
    }
    assert gold_mentions == {"m2"}
    assert all(o.mention_id != "m4" for o in sample.options), (
        "cluster mate of a kept option must not appear as distractor"
    )


def test_min_distractors_with_one_related():
    doc = build_simple_doc(
        "md",
        ["a0", "a1", "a2", "a3", "a4", "a5"],
        links=[(0, 1)],
    )
    sample = build_train_sample(doc, "m0", CFG)
    event_options = [o for o in sample.options if o.mention_id is not None]
    assert len(event_options) == 4  # 1 related + max(3, 5-1-1)=3 distractors
    assert len(sample.gold_letters) == 1


def test_many_related_exceed_num_options():
    # related at indices 0,2,4,6,8 (clique); unrelated at 1,3,5,7,9
    related = [0, 2, 4, 6, 8]
    links = [(a, b) for i, a in enumerate(related) for b in related[i + 1 :]]
    doc = build_simple_doc("mr", [f"w{i}" for i in range(10)], links=links)
    sample = build_train_sample(doc, "m0", CFG)
    event_options = [o for o in sample.options if o.mention_id is not None]
    # 4 kept related + max(3, 5-1-4)=3 distractors = 7 events, 8 options total
    assert len(event_options) == 7
    assert len(sample.options) == 8
    assert len(sample.gold_letters) == 4


def test_small_pool_takes_whole_pool():
    doc = build_simple_doc("sp", ["x0", "x1", "x2"], links=[(0, 1)])
    sample = build_train_sample(doc, "m0", CFG)
    event_options = [o.mention_id for o in sample.options if o.mention_id]
    assert sorted(event_options) == ["m1", "m2"]  # pool was just m2


def test_duplicate_surfaces_disambiguated():
    doc = build_simple_doc(
        "dup", ["storm", "crash", "crash", "crash"], links=[(0, 1), (0, 2), (0, 3)]
    )
    sample = build_train_sample(doc, "m0", CFG)
    surfaces = [o.surface for o in sample.options if o.mention_id]
    assert surfaces == ["crash", "crash (2)", "crash (3)"]


def test_same_seed_identical_different_seed_same_gold():
    rng = random.Random(5)
    doc = make_document("det", rng, num_events=16, num_related=6, topology="random")
    a = build_train_sample(doc, "e1", BuilderConfig(seed=3))
    b = build_train_sample(doc, "e1", BuilderConfig(seed=3))
    assert a == b
    c = build_train_sample(doc, "e1", BuilderConfig(seed=4))
    gold_of = lambda s: {
        o.mention_id for o in s.options if o.letter in s.gold_letters
    }
    assert gold_of(a) == gold_of(c)


def test_test_mode_chunking_sizes():
    doc = build_simple_doc(
        "ch", [f"t{i}" for i in range(10)], links=[(0, 9)]
    )
    samples = build_test_samples(doc, "m0", CFG)
    event_counts = [
        sum(1 for o in s.options if o.mention_id is not None) for s in samples
    ]
    assert event_counts == [4, 4, 1]  # 9 forward candidates at width 4
    assert [s.sample_id for s in samples] == ["ch#m0#0", "ch#m0#1", "ch#m0#2"]
    assert build_test_samples(doc, "m9", CFG) == []


def test_test_mode_chunk_union_covers_all_pairs(small_corpus):
    for doc in small_corpus:
        for ev in doc.position_order():
            observed = ev.mention_id
            samples = build_test_samples(doc, observed, CFG)
            seen = [
                o.mention_id
                for s in samples
                for o in s.options
                if o.mention_id is not None
            ]
            assert seen == forward_candidates(doc, observed)
            assert len(seen) == len(set(seen))


def test_train_split_one_sample_per_event(small_corpus):
    samples = build_split(small_corpus, "train", CFG)
    assert len(samples) == sum(len(d.events) for d in small_corpus)
    assert len({s.sample_id for s in samples}) == len(samples)


def test_test_split_count_matches_ceiling_sum(small_corpus):
    samples = build_split(small_corpus, "test", CFG)
    assert len(samples) == expected_test_sample_count(small_corpus, CFG.num_options)


def test_train_non_none_fraction_exact(small_corpus):
    samples = build_split(small_corpus, "train", CFG)
    measured = sum(
        1 for s in samples if s.gold_letters != {s.none_letter}
    )
    expected = 0
    for doc in small_corpus:
        for ev in doc.position_order():
            related = doc.related_events(ev.mention_id)
            fwd = set(forward_candidates(doc, ev.mention_id))
            if related & fwd:
                expected += 1
    assert measured == expected


def test_too_many_options_rejected():
    n = 30
    links = [(a, b) for a in range(n) for b in range(a + 1, n)]
    doc = build_simple_doc("big", [f"q{i}" for i in range(n)], links=links)
    with pytest.raises(TooManyOptionsError):
        build_train_sample(doc, "m0", CFG)


def test_bad_config_rejected():
    with pytest.raises(BuildError):
        BuilderConfig(num_options=2)
    with pytest.raises(BuildError):
        BuilderConfig(min_distractors=-1)
    with pytest.raises(BuildError):
        build_split([], "dev", CFG)


def test_sample_dict_round_trip(golden_sample):
    assert sample_from_dict(sample_to_dict(golden_sample)) == golden_sample


def test_invariants_over_random_cases():
    for case in range(200):
        rng = random.Random(1000 + case)
        num_events = rng.randint(4, 16)
        num_clusters = rng.randint(0, min(2, num_events // 3))
        max_related = num_events - num_clusters
        num_related = rng.choice([n for n in range(max_related + 1) if n != 1])
        doc = make_document(
            f"p{case}",
            rng,
            num_events=num_events,
            num_related=num_related,
            topology=rng.choice(["clique", "chain", "random"]),
            num_clusters=num_clusters,
            unique_triggers=rng.random() < 0.7,
        )
        cfg = BuilderConfig(num_options=rng.randint(3, 8), seed=case)
        for ev in doc.position_order():
            check_sample_invariants(build_train_sample(doc, ev.mention_id, cfg), doc, cfg)
            for sample in build_test_samples(doc, ev.mention_id, cfg):
                check_sample_invariants(sample, doc, cfg)
