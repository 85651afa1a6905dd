"""Independent reference implementations used to cross-check the package.

Everything here is written against the documented behavior, deliberately
using different algorithms than the implementation (char scanning instead of
regex, math.comb instead of ratio products, explicit position comparisons
instead of precomputed ranks).
"""
from __future__ import annotations

import json
import math
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from itertools import groupby

from causalmcq.corpus import CausalLink, Document, EventMention, validate_document
from causalmcq.mcq import NONE_OF_ABOVE, BuilderConfig, MCQSample

S0 = "A powerful eruption shook the island at dawn."
S1 = "The eruption triggered a tsunami that destroyed the harbor."
S2 = "Rescue teams arrived after the flooding subsided."


def _volcano_mention(
    mid: str, sentence_index: int, text: str, trigger: str
) -> EventMention:
    start = text.find(trigger)
    assert start >= 0, f"{trigger!r} not in {text!r}"
    return EventMention(
        mention_id=mid,
        sentence_index=sentence_index,
        char_start=start,
        char_end=start + len(trigger),
        trigger=trigger,
    )


def make_volcano_doc() -> Document:
    """Hand-written document whose expected samples and serializations were
    worked out on paper."""
    doc = Document(
        doc_id="fx1",
        sentences=(S0, S1, S2),
        events=(
            _volcano_mention("ev1", 0, S0, "eruption"),
            _volcano_mention("ev2", 1, S1, "eruption"),
            _volcano_mention("ev3", 1, S1, "tsunami"),
            _volcano_mention("ev4", 1, S1, "destroyed"),
            _volcano_mention("ev5", 2, S2, "arrived"),
            _volcano_mention("ev6", 2, S2, "flooding"),
        ),
        coref_clusters=(frozenset({"ev1", "ev2"}),),
        causal_links=(
            CausalLink("ev1", "ev3"),
            CausalLink("ev3", "ev4"),
            CausalLink("ev3", "ev6"),
        ),
    )
    validate_document(doc)
    return doc


class FaultHandler(BaseHTTPRequestHandler):
    """Scripted chat-completion endpoint for fault-injection tests.

    The owning server pops one script entry per request: {"text": ...} is a
    well-formed reply, {"status": N} an error code (optionally with
    {"headers": {...}}), {"raw": bytes} a verbatim body, and {"delay": s}
    stalls before responding. Records every request and tracks the peak
    number of concurrent handlers.
    """

    def do_POST(self):
        srv = self.server
        with srv.lock:
            srv.in_flight += 1
            srv.peak = max(srv.peak, srv.in_flight)
        try:
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length)
            with srv.lock:
                srv.requests.append(
                    {
                        "body": body,
                        "auth": self.headers.get("Authorization"),
                        "path": self.path,
                    }
                )
                step = srv.script.pop(0) if srv.script else {"text": "spare"}
            if "delay" in step:
                time.sleep(step["delay"])
            if "raw" in step:
                payload = step["raw"]
            elif "text" in step:
                payload = json.dumps(
                    {"choices": [{"message": {"content": step["text"]}}]}
                ).encode("utf-8")
            else:
                payload = b'{"error": "injected"}'
        finally:
            # Decrement before replying: the caller frees its slot only after
            # reading the reply, so counting past this point would race the
            # caller's next request and overstate concurrency.
            with srv.lock:
                srv.in_flight -= 1
        try:
            self.send_response(step.get("status", 200))
            for key, value in step.get("headers", {}).items():
                self.send_header(key, value)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)
        except OSError:
            pass  # client gave up (timeout tests)

    def log_message(self, *args):
        pass


def start_fault_server() -> ThreadingHTTPServer:
    """Serve FaultHandler on an ephemeral port; caller calls shutdown()."""
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), FaultHandler)
    httpd.script = []
    httpd.requests = []
    httpd.lock = threading.Lock()
    httpd.in_flight = 0
    httpd.peak = 0
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    return httpd


def oracle_parse_letters(
    raw: str, option_letters: set[str], none_letter: str
) -> tuple[set[str], str]:
    """Rule-table reimplementation of answer parsing via char grouping."""
    runs = [
        "".join(chars)
        for is_alpha, chars in groupby(raw, key=str.isalpha)
        if is_alpha
    ]
    saw_candidate = False
    valid: set[str] = set()
    for run in runs:
        if len(run) == 1:
            saw_candidate = True
            if run.upper() in option_letters:
                valid.add(run.upper())
        elif run == run.upper():
            saw_candidate = True
            if set(run) <= option_letters:
                valid |= set(run)
    if not valid:
        return {none_letter}, ("unknown_letters" if saw_candidate else "fallback_none")
    if len(valid) > 1:
        valid.discard(none_letter)
    return valid, "ok"


def position_tuple(doc: Document, mention_id: str) -> tuple[int, int]:
    ev = doc.mention(mention_id)
    return (ev.sentence_index, ev.char_start)


def comes_after(doc: Document, a: str, b: str) -> bool:
    return position_tuple(doc, a) > position_tuple(doc, b)


def direct_related(doc: Document, observed: str) -> set[str]:
    """Partners of links that name the observed mention itself."""
    out = set()
    for link in doc.causal_links:
        if link.cause == observed:
            out.add(link.effect)
        if link.effect == observed:
            out.add(link.cause)
    return out - set(doc.cluster_of(observed))


def forward_related(doc: Document, observed: str) -> set[str]:
    return {
        m for m in direct_related(doc, observed) if comes_after(doc, m, observed)
    }


def check_sample_invariants(sample: MCQSample, doc: Document, cfg: BuilderConfig) -> None:
    """Assert every documented option invariant; raises AssertionError."""
    letters = [opt.letter for opt in sample.options]
    expected = [chr(ord("A") + i) for i in range(len(letters))]
    assert letters == expected, f"letters not consecutive from A: {letters}"

    none_opts = [opt for opt in sample.options if opt.mention_id is None]
    assert len(none_opts) == 1, "exactly one final option must be the None option"
    assert sample.options[-1].mention_id is None, "None option must be last"
    assert sample.options[-1].surface == NONE_OF_ABOVE

    assert sample.gold_letters, "gold letters empty"
    assert sample.gold_letters <= set(letters), "gold letters outside options"
    none_letter = sample.options[-1].letter
    if none_letter in sample.gold_letters:
        assert sample.gold_letters == {none_letter}, "gold mixes None with events"

    event_options = [opt for opt in sample.options if opt.mention_id is not None]
    positions = [position_tuple(doc, opt.mention_id) for opt in event_options]
    assert positions == sorted(positions), "event options out of position order"

    observed_pos = position_tuple(doc, sample.observed)
    observed_cluster = doc.cluster_of(sample.observed)
    for opt in event_options:
        assert position_tuple(doc, opt.mention_id) > observed_pos, (
            f"option {opt.mention_id} not after observed"
        )
        assert opt.mention_id not in observed_cluster, (
            f"option {opt.mention_id} coreferent with observed"
        )

    assert sample.context.first_sentence == doc.mention(sample.observed).sentence_index
    if event_options:
        last_opt = event_options[-1].mention_id
        assert sample.context.last_sentence == doc.mention(last_opt).sentence_index
    else:
        assert sample.context.last_sentence == sample.context.first_sentence
    for opt in event_options:
        s = doc.mention(opt.mention_id).sentence_index
        assert sample.context.first_sentence <= s <= sample.context.last_sentence
    assert sample.context.text == " ".join(
        doc.sentences[sample.context.first_sentence : sample.context.last_sentence + 1]
    )

    trigger = doc.mention(sample.observed).trigger
    assert sample.question == f"What are the causes and effects of the {trigger}?"

    related = direct_related(doc, sample.observed)
    if sample.mode == "train":
        fwd_rel = forward_related(doc, sample.observed)
        gold_mentions = {
            opt.mention_id
            for opt in event_options
            if opt.letter in sample.gold_letters
        }
        clusters_hit = {frozenset(doc.cluster_of(m)) for m in fwd_rel}
        assert len(gold_mentions) == len(clusters_hit), (
            "gold must keep exactly one mention per related cluster"
        )
        for m in gold_mentions:
            assert m in fwd_rel, f"gold option {m} is not forward related"
            closer = [
                o
                for o in fwd_rel
                if o in doc.cluster_of(m) and position_tuple(doc, o) < position_tuple(doc, m)
            ]
            assert not closer, f"gold option {m} is not the closest cluster member"

        distractors = [
            opt.mention_id
            for opt in event_options
            if opt.letter not in sample.gold_letters
        ]
        for m in distractors:
            assert m not in related, f"distractor {m} is causally related"
            for g in gold_mentions:
                assert m not in doc.cluster_of(g), (
                    f"distractor {m} coreferent with gold option {g}"
                )
        pool = [
            m
            for m in _forward_candidates_oracle(doc, sample.observed)
            if m not in related
            and not any(m in doc.cluster_of(g) for g in gold_mentions)
        ]
        floor = min(cfg.min_distractors, len(pool))
        assert len(distractors) >= floor, (
            f"only {len(distractors)} distractors, pool holds {len(pool)}"
        )
    else:
        assert len(sample.options) <= cfg.num_options, "test sample exceeds |D| options"
        gold_mentions = {
            opt.mention_id
            for opt in event_options
            if opt.letter in sample.gold_letters
        }
        for opt in event_options:
            should_be_gold = opt.mention_id in related
            assert (opt.mention_id in gold_mentions) == should_be_gold


def _forward_candidates_oracle(doc: Document, observed: str) -> list[str]:
    cluster = doc.cluster_of(observed)
    out = [
        ev.mention_id
        for ev in sorted(doc.events, key=lambda e: (e.sentence_index, e.char_start))
        if comes_after(doc, ev.mention_id, observed) and ev.mention_id not in cluster
    ]
    return out


def expected_test_sample_count(docs: list[Document], num_options: int) -> int:
    width = num_options - 1
    total = 0
    for doc in docs:
        for ev in doc.events:
            f = len(_forward_candidates_oracle(doc, ev.mention_id))
            total += math.ceil(f / width)
    return total


def exact_binom_ratio(n: int, y: int, d: int) -> float:
    if y < d:
        return 0.0
    return math.comb(y, d) / math.comb(n, d)


def independent_linearize(doc: Document, graph) -> str:
    """Sort-then-emit reimplementation of graph serialization."""
    order = {m: i for i, m in enumerate(
        sorted(
            (e.mention_id for e in doc.events),
            key=lambda m: (doc.mention(m).sentence_index, doc.mention(m).char_start),
        )
    )}

    counts: dict[str, int] = {}
    surface: dict[str, str] = {}
    for mid in sorted(graph.nodes, key=order.__getitem__):
        t = doc.mention(mid).trigger
        counts[t] = counts.get(t, 0) + 1
        surface[mid] = t if counts[t] == 1 else "%s (%d)" % (t, counts[t])

    parts: list[str] = []
    for x, y in sorted(graph.coref_edges, key=lambda e: (order[e[0]], order[e[1]])):
        parts.append("%s is %s" % (surface[x], surface[y]))
        parts.append("%s is %s" % (surface[y], surface[x]))
    for c, e in sorted(graph.causal_edges, key=lambda p: (order[p[0]], order[p[1]])):
        parts.append("%s is the cause of %s" % (surface[c], surface[e]))
        parts.append("%s is the effect of %s" % (surface[e], surface[c]))
    return ", ".join(parts)


def build_simple_doc(
    doc_id: str,
    triggers: list[str],
    links: list[tuple[int, int]] = (),
    clusters: list[list[int]] = (),
    sentence_of: list[int] | None = None,
) -> Document:
    """Links and clusters given as trigger indices; one sentence per event
    unless sentence_of groups several into one sentence."""
    from causalmcq.corpus import CausalLink, Document, EventMention, validate_document

    if sentence_of is None:
        sentence_of = list(range(len(triggers)))
    groups: list[list[int]] = [[] for _ in range(max(sentence_of) + 1)]
    for idx, s in enumerate(sentence_of):
        groups[s].append(idx)
    sentences_list: list[str] = []
    events_list: list[EventMention] = []
    for s, members in enumerate(groups):
        text = "The " + " and the ".join(triggers[i] for i in members) + " happened."
        pos = 0
        for i in members:
            start = text.index(triggers[i], pos)
            pos = start + len(triggers[i])
            events_list.append(
                EventMention(
                    mention_id=f"m{i}",
                    sentence_index=s,
                    char_start=start,
                    char_end=pos,
                    trigger=triggers[i],
                )
            )
        sentences_list.append(text)
    sentences = tuple(sentences_list)
    events = tuple(events_list)
    doc = Document(
        doc_id=doc_id,
        sentences=sentences,
        events=events,
        coref_clusters=tuple(frozenset(f"m{i}" for i in c) for c in clusters),
        causal_links=tuple(CausalLink(f"m{a}", f"m{b}") for a, b in links),
    )
    validate_document(doc)
    return doc


def gold_pair_oracle(docs: list[Document]) -> set[tuple[str, str, str]]:
    pairs = set()
    for doc in docs:
        for link in doc.causal_links:
            a, b = sorted((link.cause, link.effect))
            pairs.add((doc.doc_id, a, b))
    return pairs
