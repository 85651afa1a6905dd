"""Multiple-choice sample construction from (document, observed event).

Train mode emits one sample per event: the forward causally-related events
(deduplicated per coreference cluster, keeping the closest) become gold
options, padded with uniformly drawn unrelated distractors. Test mode chunks
every forward candidate into consecutive option sets. Both modes append a
final "None of the above" option.
"""
from __future__ import annotations

import string
from dataclasses import dataclass

from .corpus import Document
from .util import sample_without_replacement, substream

NONE_OF_ABOVE = "None of the above"
LETTERS = string.ascii_uppercase

MODE_TRAIN = "train"
MODE_TEST = "test"


class BuildError(Exception):
    """Sample construction failure."""


class TooManyOptionsError(BuildError):
    """More options than available letters (26)."""


@dataclass(frozen=True)
class BuilderConfig:
    num_options: int = 5
    min_distractors: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_options < 3:
            raise BuildError(f"num_options must be >= 3, got {self.num_options}")
        if self.min_distractors < 0:
            raise BuildError(
                f"min_distractors must be >= 0, got {self.min_distractors}"
            )


@dataclass(frozen=True)
class ClippedContext:
    observed: str
    first_sentence: int
    last_sentence: int
    text: str


@dataclass(frozen=True)
class OptionItem:
    letter: str
    mention_id: str | None
    surface: str

    @property
    def is_none_of_above(self) -> bool:
        return self.mention_id is None


@dataclass(frozen=True)
class MCQSample:
    sample_id: str
    doc_id: str
    mode: str
    observed: str
    context: ClippedContext
    question: str
    options: tuple[OptionItem, ...]
    gold_letters: frozenset[str]

    @property
    def none_letter(self) -> str:
        return self.options[-1].letter

    @property
    def option_letters(self) -> frozenset[str]:
        return frozenset(opt.letter for opt in self.options)

    def mention_of(self, letter: str) -> str | None:
        for opt in self.options:
            if opt.letter == letter:
                return opt.mention_id
        raise BuildError(f"{self.sample_id}: no option with letter {letter!r}")


def forward_candidates(doc: Document, observed: str) -> list[str]:
    """Mention ids strictly after `observed` in position order, skipping
    mentions coreferent with it."""
    rank = doc.rank(observed)
    cluster = doc.cluster_of(observed)
    return [
        ev.mention_id
        for ev in doc.position_order()
        if doc.rank(ev.mention_id) > rank and ev.mention_id not in cluster
    ]


def _question(doc: Document, observed: str) -> str:
    trigger = doc.mention(observed).trigger
    return f"What are the causes and effects of the {trigger}?"


def _disambiguated_surfaces(doc: Document, mention_ids: list[str]) -> list[str]:
    counts: dict[str, int] = {}
    surfaces = []
    for mid in mention_ids:
        trigger = doc.mention(mid).trigger
        n = counts.get(trigger, 0) + 1
        counts[trigger] = n
        surfaces.append(trigger if n == 1 else f"{trigger} ({n})")
    return surfaces


def _clip_context(doc: Document, observed: str, event_options: list[str]) -> ClippedContext:
    first = doc.mention(observed).sentence_index
    if event_options:
        last = doc.mention(event_options[-1]).sentence_index
    else:
        last = first
    text = " ".join(doc.sentences[first : last + 1])
    return ClippedContext(
        observed=observed, first_sentence=first, last_sentence=last, text=text
    )


def _assemble(
    doc: Document,
    mode: str,
    observed: str,
    chunk_index: int,
    event_options: list[str],
    gold_mentions: set[str],
) -> MCQSample:
    if len(event_options) + 1 > len(LETTERS):
        raise TooManyOptionsError(
            f"{doc.doc_id}: {len(event_options) + 1} options exceed {len(LETTERS)}"
        )
    surfaces = _disambiguated_surfaces(doc, event_options)
    options = [
        OptionItem(letter=LETTERS[i], mention_id=mid, surface=surf)
        for i, (mid, surf) in enumerate(zip(event_options, surfaces))
    ]
    none_letter = LETTERS[len(event_options)]
    options.append(OptionItem(letter=none_letter, mention_id=None, surface=NONE_OF_ABOVE))
    if gold_mentions:
        gold = frozenset(
            opt.letter for opt in options if opt.mention_id in gold_mentions
        )
    else:
        gold = frozenset({none_letter})
    return MCQSample(
        sample_id=f"{doc.doc_id}#{observed}#{chunk_index}",
        doc_id=doc.doc_id,
        mode=mode,
        observed=observed,
        context=_clip_context(doc, observed, event_options),
        question=_question(doc, observed),
        options=tuple(options),
        gold_letters=gold,
    )


def build_train_sample(doc: Document, observed: str, cfg: BuilderConfig) -> MCQSample:
    related = doc.related_events(observed)
    fwd = forward_candidates(doc, observed)

    kept: list[str] = []
    seen_clusters: set[frozenset[str]] = set()
    for mid in fwd:
        if mid not in related:
            continue
        cluster = doc.cluster_of(mid)
        if cluster in seen_clusters:
            continue
        seen_clusters.add(cluster)
        kept.append(mid)

    kept_clusters: set[str] = set()
    for mid in kept:
        kept_clusters.update(doc.cluster_of(mid))
    pool = [m for m in fwd if m not in related and m not in kept_clusters]

    want = max(cfg.min_distractors, cfg.num_options - 1 - len(kept))
    rng = substream(cfg.seed, "distractors", doc.doc_id, observed)
    drawn = sample_without_replacement(rng, pool, want)

    event_options = sorted(kept + drawn, key=doc.rank)
    return _assemble(doc, MODE_TRAIN, observed, 0, event_options, set(kept))


def build_test_samples(doc: Document, observed: str, cfg: BuilderConfig) -> list[MCQSample]:
    fwd = forward_candidates(doc, observed)
    if not fwd:
        return []
    related = doc.related_events(observed)
    width = cfg.num_options - 1
    samples = []
    for chunk_index, start in enumerate(range(0, len(fwd), width)):
        chunk = fwd[start : start + width]
        gold = {m for m in chunk if m in related}
        samples.append(
            _assemble(doc, MODE_TEST, observed, chunk_index, chunk, gold)
        )
    return samples


def build_split(docs: list[Document], mode: str, cfg: BuilderConfig) -> list[MCQSample]:
    if mode not in (MODE_TRAIN, MODE_TEST):
        raise BuildError(f"unknown mode {mode!r}")
    out: list[MCQSample] = []
    for doc in docs:
        for ev in doc.position_order():
            if mode == MODE_TRAIN:
                out.append(build_train_sample(doc, ev.mention_id, cfg))
            else:
                out.extend(build_test_samples(doc, ev.mention_id, cfg))
    return out


def sample_to_dict(sample: MCQSample) -> dict:
    return {
        "id": sample.sample_id,
        "doc_id": sample.doc_id,
        "mode": sample.mode,
        "observed": sample.observed,
        "question": sample.question,
        "context": {
            "first": sample.context.first_sentence,
            "last": sample.context.last_sentence,
            "text": sample.context.text,
        },
        "options": [
            {"letter": o.letter, "mention_id": o.mention_id, "surface": o.surface}
            for o in sample.options
        ],
        "gold": sorted(sample.gold_letters),
    }


def sample_from_dict(raw: dict) -> MCQSample:
    ctx = raw["context"]
    return MCQSample(
        sample_id=raw["id"],
        doc_id=raw["doc_id"],
        mode=raw["mode"],
        observed=raw["observed"],
        context=ClippedContext(
            observed=raw["observed"],
            first_sentence=ctx["first"],
            last_sentence=ctx["last"],
            text=ctx["text"],
        ),
        question=raw["question"],
        options=tuple(
            OptionItem(
                letter=o["letter"], mention_id=o["mention_id"], surface=o["surface"]
            )
            for o in raw["options"]
        ),
        gold_letters=frozenset(raw["gold"]),
    )
