"""Seeded synthetic corpora: documents with event mentions, coreference
clusters, and causal links of configurable shape.

Used by the test suite (property sweeps need thousands of varied documents)
and by the distribution checks (which need exact per-document event and
linked-event counts). All randomness comes from the caller's generator, so
corpora are reproducible from a seed.
"""
from __future__ import annotations

import random

from .corpus import CausalLink, Document, EventMention, validate_document
from .util import sample_without_replacement, shuffled, substream

VOCABULARY = (
    "earthquake", "eruption", "tsunami", "flood", "fire", "collapse",
    "explosion", "landslide", "storm", "drought", "protest", "strike",
    "crash", "outbreak", "blackout", "evacuation", "rescue", "shutdown",
    "spill", "leak", "riot", "famine", "heatwave", "blizzard", "surge",
    "outage", "derailment", "sinking", "uprising", "ceasefire", "bombing",
    "invasion", "recall", "layoff", "merger", "default", "bailout",
    "verdict", "election", "inauguration",
)

OPENERS = ("Officials", "Residents", "Witnesses", "Reporters", "Analysts")

TOPOLOGIES = ("clique", "chain", "random")


class GenerationError(Exception):
    """Requested document shape is infeasible."""


def _pick_triggers(rng: random.Random, count: int, unique: bool) -> list[str]:
    if unique:
        base = sample_without_replacement(rng, list(VOCABULARY), min(count, len(VOCABULARY)))
        out = list(base)
        i = 0
        while len(out) < count:
            out.append(f"{VOCABULARY[i % len(VOCABULARY)]}{i // len(VOCABULARY) + 2}")
            i += 1
        return out
    return [rng.choice(VOCABULARY) for _ in range(count)]


def _sentence_with_events(opener: str, triggers: list[str]) -> tuple[str, list[tuple[int, int]]]:
    """Build one sentence embedding the triggers; returns (text, offsets)."""
    words = [opener, "described", "the", triggers[0]]
    slots = {3}
    for trigger in triggers[1:]:
        words.extend(["and", "the", trigger])
        slots.add(len(words) - 1)
    words.extend(["in", "detail."])

    text = " ".join(words)
    offsets = []
    pos = 0
    for i, word in enumerate(words):
        if i in slots:
            offsets.append((pos, pos + len(word)))
        pos += len(word) + 1
    return text, offsets


def make_document(
    doc_id: str,
    rng: random.Random,
    num_events: int,
    num_related: int | None = None,
    topology: str = "random",
    num_clusters: int = 0,
    cluster_size: int = 2,
    unique_triggers: bool = True,
    max_events_per_sentence: int = 3,
    extra_link_rate: float = 0.25,
) -> Document:
    """One synthetic document.

    Exactly `num_related` events end up with at least one causal link (at
    most one per coreference cluster, since links inside a cluster are
    invalid). Topologies: "clique" links every related pair, "chain" links
    consecutive related events, "random" guarantees coverage via a shuffled
    chain plus extra random pairs.
    """
    if topology not in TOPOLOGIES:
        raise GenerationError(f"unknown topology {topology!r}")
    if num_events < 1:
        raise GenerationError("num_events must be >= 1")
    if num_clusters * cluster_size > num_events:
        raise GenerationError("clusters demand more events than available")

    if num_related is None:
        num_related = max(0, num_events // 2)
    max_related = num_events - num_clusters * (cluster_size - 1)
    if not 0 <= num_related <= max_related:
        raise GenerationError(
            f"num_related={num_related} infeasible for num_events={num_events} "
            f"with {num_clusters} clusters of {cluster_size}"
        )
    if num_related == 1:
        raise GenerationError("a single related event cannot carry a link")

    indices = list(range(num_events))

    cluster_groups: list[list[int]] = []
    clustered: set[int] = set()
    if num_clusters:
        picked = sample_without_replacement(rng, indices, num_clusters * cluster_size)
        for c in range(num_clusters):
            group = sorted(picked[c * cluster_size : (c + 1) * cluster_size])
            cluster_groups.append(group)
            clustered.update(group)

    triggers = _pick_triggers(rng, num_events, unique_triggers)
    if not unique_triggers:
        for group in cluster_groups:
            for idx in group[1:]:
                triggers[idx] = triggers[group[0]]

    cluster_of_idx: dict[int, int] = {}
    for ci, group in enumerate(cluster_groups):
        for idx in group:
            cluster_of_idx[idx] = ci

    eligible = [
        idx
        for idx in indices
        if idx not in cluster_of_idx
        or idx == cluster_groups[cluster_of_idx[idx]][0]
    ]
    related = sorted(sample_without_replacement(rng, eligible, num_related))

    links: set[tuple[int, int]] = set()

    def add_link(a: int, b: int) -> None:
        if rng.random() < 0.5:
            a, b = b, a
        if (a, b) not in links and (b, a) not in links:
            links.add((a, b))

    if num_related >= 2:
        if topology == "clique":
            for i in range(len(related)):
                for j in range(i + 1, len(related)):
                    add_link(related[i], related[j])
        elif topology == "chain":
            for i in range(len(related) - 1):
                add_link(related[i], related[i + 1])
        else:
            order = shuffled(rng, related)
            for i in range(len(order) - 1):
                add_link(order[i], order[i + 1])
            for i in range(len(related)):
                for j in range(i + 1, len(related)):
                    if rng.random() < extra_link_rate:
                        add_link(related[i], related[j])

    sentences: list[str] = []
    events: list[EventMention] = []
    cursor = 0
    while cursor < num_events:
        take = min(rng.randint(1, max_events_per_sentence), num_events - cursor)
        batch = list(range(cursor, cursor + take))
        text, offsets = _sentence_with_events(
            rng.choice(OPENERS), [triggers[i] for i in batch]
        )
        sentence_index = len(sentences)
        sentences.append(text)
        for idx, (start, end) in zip(batch, offsets):
            events.append(
                EventMention(
                    mention_id=f"e{idx + 1}",
                    sentence_index=sentence_index,
                    char_start=start,
                    char_end=end,
                    trigger=triggers[idx],
                )
            )
        cursor += take

    doc = Document(
        doc_id=doc_id,
        sentences=tuple(sentences),
        events=tuple(events),
        coref_clusters=tuple(
            frozenset(f"e{idx + 1}" for idx in group) for group in cluster_groups
        ),
        causal_links=tuple(
            CausalLink(cause=f"e{a + 1}", effect=f"e{b + 1}")
            for a, b in sorted(links)
        ),
    )
    validate_document(doc)
    return doc


def _link_sentence_mix(doc: Document) -> tuple[bool, bool]:
    has_intra = has_inter = False
    for link in doc.causal_links:
        same = (
            doc.mention(link.cause).sentence_index
            == doc.mention(link.effect).sentence_index
        )
        has_intra = has_intra or same
        has_inter = has_inter or not same
    return has_intra, has_inter


def fixture_corpus(seed: int, num_docs: int = 6) -> list[Document]:
    """Documents of 10-20 events with coreference clusters and a guaranteed
    mix of same-sentence and cross-sentence causal links."""
    docs = []
    for d in range(num_docs):
        rng = substream(seed, "fixture", d)
        for _ in range(100):
            num_events = rng.randint(10, 20)
            doc = make_document(
                doc_id=f"doc{d:03d}",
                rng=rng,
                num_events=num_events,
                num_related=max(2, num_events // 2),
                topology="random",
                num_clusters=rng.randint(1, 2),
                cluster_size=2,
                unique_triggers=True,
            )
            has_intra, has_inter = _link_sentence_mix(doc)
            if has_intra and has_inter:
                docs.append(doc)
                break
        else:
            raise GenerationError(f"could not mix link kinds for doc {d}")
    return docs


def stats_corpus(
    seed: int,
    num_docs: int,
    num_events: int,
    num_related: int,
    max_events_per_sentence: int = 4,
) -> list[Document]:
    """Corpus with exact per-document event and linked-event counts, no
    coreference, clique links: every related event is linked to every other."""
    return [
        make_document(
            doc_id=f"stat{d:04d}",
            rng=substream(seed, "stats", d),
            num_events=num_events,
            num_related=num_related,
            topology="clique",
            num_clusters=0,
            unique_triggers=True,
            max_events_per_sentence=max_events_per_sentence,
        )
        for d in range(num_docs)
    ]
