"""Canonical corpus model: documents, event mentions, coreference, causal links.

The interchange format is one JSON object per document:

    {
      "doc_id": str,
      "sentences": [str, ...],
      "events": [{"id": str, "sentence": int, "start": int, "end": int,
                  "trigger": str}, ...],
      "coref": [[event_id, ...], ...],
      "causal": [{"cause": event_id, "effect": event_id}, ...]
    }

Offsets are character offsets into the sentence text, end-exclusive.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class CorpusError(Exception):
    """Base class for corpus loading and validation failures."""


class SchemaError(CorpusError):
    """Structurally malformed document (wrong types, missing fields)."""


class InvariantError(CorpusError):
    """Well-formed JSON whose content breaks a corpus invariant."""


class UnknownMentionError(CorpusError):
    """An event id was referenced that the document does not define."""


@dataclass(frozen=True)
class EventMention:
    mention_id: str
    sentence_index: int
    char_start: int
    char_end: int
    trigger: str


@dataclass(frozen=True)
class CausalLink:
    cause: str
    effect: str


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple[str, ...]
    events: tuple[EventMention, ...]
    coref_clusters: tuple[frozenset[str], ...]
    causal_links: tuple[CausalLink, ...]
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)
    _rank: dict = field(default_factory=dict, repr=False, compare=False)
    _cluster_of: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_id = {ev.mention_id: ev for ev in self.events}
        ordered = sorted(self.events, key=position_key)
        rank = {ev.mention_id: i for i, ev in enumerate(ordered)}
        cluster_of: dict[str, frozenset[str]] = {}
        for cluster in self.coref_clusters:
            for mid in cluster:
                cluster_of[mid] = cluster
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_rank", rank)
        object.__setattr__(self, "_cluster_of", cluster_of)

    def mention(self, mention_id: str) -> EventMention:
        try:
            return self._by_id[mention_id]
        except KeyError:
            raise UnknownMentionError(
                f"{self.doc_id}: unknown event id {mention_id!r}"
            ) from None

    def rank(self, mention_id: str) -> int:
        """Position of the mention in document order (sentence, then offset)."""
        self.mention(mention_id)
        return self._rank[mention_id]

    def position_order(self) -> tuple[EventMention, ...]:
        return tuple(sorted(self.events, key=position_key))

    def cluster_of(self, mention_id: str) -> frozenset[str]:
        """Coreference cluster containing the mention; singleton if unclustered."""
        self.mention(mention_id)
        return self._cluster_of.get(mention_id, frozenset({mention_id}))

    def related_events(self, mention_id: str) -> frozenset[str]:
        """Mentions directly linked to `mention_id` as cause or effect.

        Only links naming the mention itself count; links of its coreferent
        mentions are not inherited. Members of the mention's own cluster are
        excluded even if a (invalid upstream) link names them.
        """
        self.mention(mention_id)
        own = self.cluster_of(mention_id)
        related = set()
        for link in self.causal_links:
            if link.cause == mention_id:
                related.add(link.effect)
            elif link.effect == mention_id:
                related.add(link.cause)
        return frozenset(related - own)


def position_key(ev: EventMention) -> tuple[int, int, int, str]:
    return (ev.sentence_index, ev.char_start, ev.char_end, ev.mention_id)


def _require(cond: bool, exc: type[CorpusError], msg: str) -> None:
    if not cond:
        raise exc(msg)


def validate_document(doc: Document) -> None:
    """Raise InvariantError/UnknownMentionError when the document is inconsistent."""
    did = doc.doc_id
    _require(bool(did), InvariantError, "document has empty doc_id")
    _require(len(doc.sentences) > 0, InvariantError, f"{did}: no sentences")
    for i, text in enumerate(doc.sentences):
        _require(
            isinstance(text, str) and len(text) > 0,
            InvariantError,
            f"{did}: sentence {i} is empty",
        )

    seen_ids: set[str] = set()
    seen_pos: set[tuple[int, int]] = set()
    for ev in doc.events:
        _require(bool(ev.mention_id), InvariantError, f"{did}: event with empty id")
        _require(
            ev.mention_id not in seen_ids,
            InvariantError,
            f"{did}: duplicate event id {ev.mention_id!r}",
        )
        seen_ids.add(ev.mention_id)
        _require(
            0 <= ev.sentence_index < len(doc.sentences),
            InvariantError,
            f"{did}: event {ev.mention_id!r} sentence {ev.sentence_index} out of range",
        )
        sent = doc.sentences[ev.sentence_index]
        _require(
            0 <= ev.char_start < ev.char_end <= len(sent),
            InvariantError,
            f"{did}: event {ev.mention_id!r} offsets [{ev.char_start},{ev.char_end}) "
            f"out of bounds for sentence of length {len(sent)}",
        )
        _require(
            sent[ev.char_start : ev.char_end] == ev.trigger,
            InvariantError,
            f"{did}: event {ev.mention_id!r} trigger {ev.trigger!r} does not match "
            f"sentence text {sent[ev.char_start:ev.char_end]!r}",
        )
        pos = (ev.sentence_index, ev.char_start)
        _require(
            pos not in seen_pos,
            InvariantError,
            f"{did}: two events share position (sentence {pos[0]}, offset {pos[1]})",
        )
        seen_pos.add(pos)

    clustered: set[str] = set()
    for cluster in doc.coref_clusters:
        _require(
            len(cluster) >= 2,
            InvariantError,
            f"{did}: coreference cluster with fewer than two mentions",
        )
        for mid in cluster:
            _require(
                mid in seen_ids,
                UnknownMentionError,
                f"{did}: coreference cluster names unknown event {mid!r}",
            )
            _require(
                mid not in clustered,
                InvariantError,
                f"{did}: event {mid!r} appears in more than one coreference cluster",
            )
            clustered.add(mid)

    for link in doc.causal_links:
        for mid in (link.cause, link.effect):
            _require(
                mid in seen_ids,
                UnknownMentionError,
                f"{did}: causal link names unknown event {mid!r}",
            )
        _require(
            link.cause != link.effect,
            InvariantError,
            f"{did}: causal link from {link.cause!r} to itself",
        )
        _require(
            doc.cluster_of(link.cause) != doc.cluster_of(link.effect),
            InvariantError,
            f"{did}: causal link {link.cause!r} -> {link.effect!r} joins "
            f"coreferent mentions",
        )


def document_from_dict(raw: dict) -> Document:
    """Parse one interchange object into a validated Document."""
    if not isinstance(raw, dict):
        raise SchemaError(f"document is not an object: {type(raw).__name__}")
    did = raw.get("doc_id")
    if not isinstance(did, str):
        raise SchemaError(f"doc_id missing or not a string: {did!r}")

    def fail(path: str, detail: str) -> None:
        raise SchemaError(f"{did}: {path}: {detail}")

    sentences = raw.get("sentences")
    if not isinstance(sentences, list) or not all(
        isinstance(s, str) for s in sentences
    ):
        fail("sentences", "expected a list of strings")

    events = []
    raw_events = raw.get("events")
    if not isinstance(raw_events, list):
        fail("events", "expected a list")
    for i, item in enumerate(raw_events):
        if not isinstance(item, dict):
            fail(f"events[{i}]", "expected an object")
        try:
            events.append(
                EventMention(
                    mention_id=item["id"],
                    sentence_index=item["sentence"],
                    char_start=item["start"],
                    char_end=item["end"],
                    trigger=item["trigger"],
                )
            )
        except KeyError as exc:
            fail(f"events[{i}]", f"missing field {exc.args[0]!r}")
        ev = events[-1]
        if not isinstance(ev.mention_id, str):
            fail(f"events[{i}].id", "expected a string")
        if not all(
            isinstance(v, int) and not isinstance(v, bool)
            for v in (ev.sentence_index, ev.char_start, ev.char_end)
        ):
            fail(f"events[{i}]", "sentence/start/end must be integers")
        if not isinstance(ev.trigger, str):
            fail(f"events[{i}].trigger", "expected a string")

    clusters = []
    raw_coref = raw.get("coref", [])
    if not isinstance(raw_coref, list):
        fail("coref", "expected a list")
    for i, group in enumerate(raw_coref):
        if not isinstance(group, list) or not all(
            isinstance(m, str) for m in group
        ):
            fail(f"coref[{i}]", "expected a list of event ids")
        if len(set(group)) != len(group):
            fail(f"coref[{i}]", "repeated event id within cluster")
        clusters.append(frozenset(group))

    links = []
    raw_causal = raw.get("causal", [])
    if not isinstance(raw_causal, list):
        fail("causal", "expected a list")
    for i, item in enumerate(raw_causal):
        if (
            not isinstance(item, dict)
            or not isinstance(item.get("cause"), str)
            or not isinstance(item.get("effect"), str)
        ):
            fail(f"causal[{i}]", 'expected {"cause": id, "effect": id}')
        links.append(CausalLink(cause=item["cause"], effect=item["effect"]))

    doc = Document(
        doc_id=did,
        sentences=tuple(sentences),
        events=tuple(events),
        coref_clusters=tuple(clusters),
        causal_links=tuple(links),
    )
    validate_document(doc)
    return doc


def document_to_dict(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "sentences": list(doc.sentences),
        "events": [
            {
                "id": ev.mention_id,
                "sentence": ev.sentence_index,
                "start": ev.char_start,
                "end": ev.char_end,
                "trigger": ev.trigger,
            }
            for ev in doc.events
        ],
        "coref": [sorted(cluster) for cluster in doc.coref_clusters],
        "causal": [
            {"cause": link.cause, "effect": link.effect}
            for link in doc.causal_links
        ],
    }


def document_from_flat_dict(raw: dict) -> Document:
    """Normalize a document annotated with document-level character offsets.

    Input shape: {"doc_id": str, "text": str,
                  "sentence_spans": [[start, end], ...],
                  "events": [{"id", "start", "end"}, ...],
                  "coref": [[ids]], "causal": [{"cause", "effect"}]}.
    Sentence texts are sliced out of `text`; each event must fall inside one
    sentence span and its offsets are rebased to that sentence.
    """
    if not isinstance(raw, dict):
        raise SchemaError(f"document is not an object: {type(raw).__name__}")
    did = raw.get("doc_id")
    if not isinstance(did, str):
        raise SchemaError(f"doc_id missing or not a string: {did!r}")
    text = raw.get("text")
    if not isinstance(text, str):
        raise SchemaError(f"{did}: text: expected a string")
    spans = raw.get("sentence_spans")
    if not isinstance(spans, list) or not spans:
        raise SchemaError(f"{did}: sentence_spans: expected a non-empty list")

    prev_end = 0
    for i, span in enumerate(spans):
        if (
            not isinstance(span, (list, tuple))
            or len(span) != 2
            or not all(isinstance(v, int) for v in span)
        ):
            raise SchemaError(f"{did}: sentence_spans[{i}]: expected [start, end]")
        start, end = span
        if not (prev_end <= start < end <= len(text)):
            raise SchemaError(
                f"{did}: sentence_spans[{i}]: [{start},{end}) not ascending "
                f"within text of length {len(text)}"
            )
        prev_end = end

    events = []
    for i, item in enumerate(raw.get("events", [])):
        if not isinstance(item, dict):
            raise SchemaError(f"{did}: events[{i}]: expected an object")
        try:
            eid, start, end = item["id"], item["start"], item["end"]
        except KeyError as exc:
            raise SchemaError(
                f"{did}: events[{i}]: missing field {exc.args[0]!r}"
            ) from None
        home = None
        for si, (s_start, s_end) in enumerate(spans):
            if s_start <= start and end <= s_end:
                home = si
                break
        if home is None:
            raise SchemaError(
                f"{did}: events[{i}]: offsets [{start},{end}) cross or miss "
                f"every sentence span"
            )
        s_start = spans[home][0]
        events.append(
            {
                "id": eid,
                "sentence": home,
                "start": start - s_start,
                "end": end - s_start,
                "trigger": text[start:end],
            }
        )

    return document_from_dict(
        {
            "doc_id": did,
            "sentences": [text[s:e] for s, e in spans],
            "events": events,
            "coref": raw.get("coref", []),
            "causal": raw.get("causal", []),
        }
    )


def load_corpus(path: str | Path) -> list[Document]:
    """Load a corpus file: a JSON array of documents (canonical), or JSONL
    with one document per line."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("["):
        try:
            raw_docs = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(raw_docs, list):
            raise SchemaError(f"{path}: expected a JSON array of documents")
    else:
        raw_docs = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw_docs.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from None

    docs = []
    seen: set[str] = set()
    for raw in raw_docs:
        doc = document_from_dict(raw)
        if doc.doc_id in seen:
            raise InvariantError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        docs.append(doc)
    return docs


def save_corpus(path: str | Path, docs: Iterable[Document]) -> int:
    from .util import write_json

    payload = [document_to_dict(d) for d in docs]
    write_json(path, payload)
    return len(payload)


def iter_corpus(path: str | Path) -> Iterator[Document]:
    for doc in load_corpus(path):
        yield doc
