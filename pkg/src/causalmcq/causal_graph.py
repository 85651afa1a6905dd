"""Event graphs over clipped sentence spans, with natural-language
serialization and parsing.

A graph's nodes are the span's causally linked events plus their in-span
coreferent mentions. Serialization lists coreference clauses first, then
causal clauses, each immediately restated in reverse ("X is Y, Y is X";
"X is the cause of Y, Y is the effect of X"), all joined by ", ".
"""
from __future__ import annotations

from dataclasses import dataclass

from .corpus import Document

REL_COREF = " is "
REL_CAUSE = " is the cause of "
REL_EFFECT = " is the effect of "


@dataclass(frozen=True)
class EventGraph:
    nodes: tuple[str, ...]
    coref_edges: frozenset[tuple[str, str]]
    causal_edges: frozenset[tuple[str, str]]

    @property
    def is_empty(self) -> bool:
        return not self.nodes


EMPTY_GRAPH = EventGraph(nodes=(), coref_edges=frozenset(), causal_edges=frozenset())


def build_graph(doc: Document, first_sentence: int, last_sentence: int) -> EventGraph:
    """Graph over the inclusive sentence span [first_sentence, last_sentence].

    Only causal links with both endpoints inside the span contribute; an
    in-span mention enters the node set either through such a link or by
    being coreferent with a node that has one.
    """

    def in_span(mid: str) -> bool:
        return first_sentence <= doc.mention(mid).sentence_index <= last_sentence

    causal = set()
    core: set[str] = set()
    for link in doc.causal_links:
        if in_span(link.cause) and in_span(link.effect):
            causal.add((link.cause, link.effect))
            core.add(link.cause)
            core.add(link.effect)

    nodes = set(core)
    for mid in core:
        for other in doc.cluster_of(mid):
            if other != mid and in_span(other):
                nodes.add(other)

    coref = set()
    for cluster in doc.coref_clusters:
        members = sorted(cluster & nodes, key=doc.rank)
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                coref.add((members[i], members[j]))

    ordered = tuple(sorted(nodes, key=doc.rank))
    return EventGraph(
        nodes=ordered, coref_edges=frozenset(coref), causal_edges=frozenset(causal)
    )


def surface_map(doc: Document, graph: EventGraph) -> dict[str, str]:
    """Mapping from disambiguated trigger surface to mention id.

    Nodes are visited in position order; repeated trigger strings get a
    1-based ordinal suffix, matching option-surface disambiguation.
    """
    counts: dict[str, int] = {}
    mapping: dict[str, str] = {}
    for mid in graph.nodes:
        trigger = doc.mention(mid).trigger
        n = counts.get(trigger, 0) + 1
        counts[trigger] = n
        surface = trigger if n == 1 else f"{trigger} ({n})"
        mapping[surface] = mid
    return mapping


def linearize(graph: EventGraph, doc: Document) -> str:
    if graph.is_empty:
        return ""
    surfaces = {mid: surf for surf, mid in surface_map(doc, graph).items()}
    clauses: list[str] = []
    for x, y in sorted(graph.coref_edges, key=lambda e: (doc.rank(e[0]), doc.rank(e[1]))):
        clauses.append(f"{surfaces[x]}{REL_COREF}{surfaces[y]}")
        clauses.append(f"{surfaces[y]}{REL_COREF}{surfaces[x]}")
    for c, e in sorted(graph.causal_edges, key=lambda e: (doc.rank(e[0]), doc.rank(e[1]))):
        clauses.append(f"{surfaces[c]}{REL_CAUSE}{surfaces[e]}")
        clauses.append(f"{surfaces[e]}{REL_EFFECT}{surfaces[c]}")
    return ", ".join(clauses)


def parse_linearized(
    text: str, surface_to_mention: dict[str, str]
) -> tuple[EventGraph, list[str]]:
    """Reconstruct a graph from serialized clauses.

    Reverse restatements are deduplicated; "is the effect of" folds into its
    forward causal form. Clauses that do not match any relation pattern or
    whose surfaces are not in the mapping become warnings, never errors.
    """
    order = {mid: i for i, mid in enumerate(surface_to_mention.values())}
    warnings: list[str] = []
    coref: set[tuple[str, str]] = set()
    causal: set[tuple[str, str]] = set()
    mentioned: set[str] = set()

    def resolve(surface: str) -> str | None:
        mid = surface_to_mention.get(surface)
        if mid is None:
            warnings.append(f"unknown event surface {surface!r}")
        return mid

    for clause in text.split(", "):
        clause = clause.strip()
        if not clause:
            continue
        for rel in (REL_CAUSE, REL_EFFECT, REL_COREF):
            if rel in clause:
                left, _, right = clause.partition(rel)
                a, b = resolve(left), resolve(right)
                if a is None or b is None:
                    break
                mentioned.update((a, b))
                if rel == REL_CAUSE:
                    causal.add((a, b))
                elif rel == REL_EFFECT:
                    causal.add((b, a))
                elif a != b:
                    pair = (a, b) if order[a] < order[b] else (b, a)
                    coref.add(pair)
                break
        else:
            warnings.append(f"unparseable clause {clause!r}")

    nodes = tuple(sorted(mentioned, key=order.__getitem__))
    graph = EventGraph(
        nodes=nodes, coref_edges=frozenset(coref), causal_edges=frozenset(causal)
    )
    return graph, warnings


def span_key(doc_id: str, first_sentence: int, last_sentence: int) -> str:
    return f"{doc_id}#s{first_sentence}-{last_sentence}"
