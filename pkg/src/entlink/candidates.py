"""Candidate generation: per-mention interpretation, dual-source retrieval,
description attachment, and the capped priority merge.

The shipped retriever is lexical and dependency-free; dense retrievers can
be plugged in through `register_retriever` under the same contract.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable

from .kb import KnowledgeBase, normalize
from .llm import LlmClient, LlmRequest, PromptTemplate, TransportError, render

if TYPE_CHECKING:
    from .corpus import Document, Mention

SOURCES = ("original", "llm", "merged")

ALIAS_WEIGHT = 0.7
OVERLAP_WEIGHT = 0.3

# Exact alias matches score 1.0; near-misses are capped below it so an exact
# match always outranks a token permutation of the same title.
_NEAR_MISS_CAP = 0.99

STOPWORDS = frozenset(
    """a an and are as at be but by for from has have in is it its of on or
    that the this to was were will with""".split()
)

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(normalize(text))


@dataclass(frozen=True)
class Candidate:
    id: str
    title: str
    score: float
    # Recoverable from the KB, so excluded from equality and the wire format.
    description: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"candidate {self.id}: score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class CandidateList:
    source: str
    items: tuple[Candidate, ...] = ()

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        ids = [c.id for c in self.items]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate candidate ids in list")
        if self.source != "merged":
            scores = [c.score for c in self.items]
            if any(a < b for a, b in zip(scores, scores[1:])):
                raise ValueError(f"{self.source} candidates must be sorted by descending score")

    def ids(self) -> list[str]:
        return [c.id for c in self.items]

    def __len__(self) -> int:
        return len(self.items)


# --- retrieval --------------------------------------------------------------

Retriever = Callable[[KnowledgeBase, str, "Mention", int], list[tuple[str, float]]]

_RETRIEVERS: dict[str, Retriever] = {}


def register_retriever(name: str) -> Callable[[Retriever], Retriever]:
    def _register(fn: Retriever) -> Retriever:
        _RETRIEVERS[name] = fn
        return fn

    return _register


def get_retriever(name: str) -> Retriever:
    try:
        return _RETRIEVERS[name]
    except KeyError:
        known = ", ".join(sorted(_RETRIEVERS))
        raise ValueError(f"unknown retriever '{name}' (known: {known})") from None


def _jaccard(a: set[str], b: set[str]) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


@register_retriever("lexical")
def lexical_retriever(
    kb: KnowledgeBase, context: str, mention: Mention, k: int
) -> list[tuple[str, float]]:
    """Score every entity as 0.7 * alias match + 0.3 * context/description overlap.

    Alias match is 1.0 on an exact normalized alias or title match, otherwise
    a token Jaccard between surface and title. Overlap is a stopword-filtered
    token Jaccard between the context and the entity description. Zero-score
    entities are dropped; ties break lexicographically by id.
    """
    exact_ids = set(kb.lookup_alias(mention.surface))
    surface_tokens = set(tokenize(mention.surface))
    context_tokens = set(tokenize(context)) - STOPWORDS
    scored: list[tuple[str, float]] = []
    for entity_id in kb.ids():
        entity = kb.get(entity_id)
        if entity_id in exact_ids:
            alias = 1.0
        else:
            alias = min(_jaccard(surface_tokens, set(tokenize(entity.title))), _NEAR_MISS_CAP)
        overlap = _jaccard(context_tokens, set(tokenize(entity.description)) - STOPWORDS)
        score = ALIAS_WEIGHT * alias + OVERLAP_WEIGHT * overlap
        if score > 0.0:
            scored.append((entity_id, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def retrieve(
    kb: KnowledgeBase,
    context: str,
    mention: Mention,
    k: int,
    *,
    retriever: Retriever | None = None,
    source: str = "original",
) -> CandidateList:
    """Top-k scored candidates for a mention given a context string.

    Called once with the document text (C_original) and once with the LLM
    interpretation (C_LLM). Output is normalized regardless of the plug-in:
    positive scores only, descending order, id tie-break, at most k items.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    fn = retriever or _RETRIEVERS["lexical"]
    pairs = [(eid, s) for eid, s in fn(kb, context, mention, k) if s > 0.0]
    pairs.sort(key=lambda pair: (-pair[1], pair[0]))
    items = tuple(
        Candidate(id=eid, title=kb.get(eid).title, score=score) for eid, score in pairs[:k]
    )
    return CandidateList(source=source, items=items)


def attach_descriptions(kb: KnowledgeBase, clist: CandidateList) -> CandidateList:
    """Pair each candidate with its KB description.

    An id missing from the KB is a retriever bug and raises rather than being
    silently dropped.
    """
    items = tuple(replace(c, description=kb.description(c.id)) for c in clist.items)
    return CandidateList(source=clist.source, items=items)


# --- interpretation ---------------------------------------------------------


def interpret(
    doc: Document,
    mention_index: int,
    client: LlmClient,
    tpl: PromptTemplate,
    *,
    temperature: float = 0.0,
    max_tokens: int = 256,
) -> str:
    """Contextual interpretation of one mention.

    An empty completion falls back to the mention surface so the pipeline
    never stalls on a silent model.
    """
    mention = doc.mentions[mention_index]
    prompt = render(tpl, {"text": doc.text, "mention": mention.surface})
    try:
        completion = client.complete(
            LlmRequest(user=prompt, temperature=temperature, max_tokens=max_tokens)
        )
    except TransportError as exc:
        raise TransportError(f"doc {doc.doc_id} mention {mention_index}: {exc}") from exc
    return completion.strip() or mention.surface


# --- merge ------------------------------------------------------------------


def merge_candidates(
    c_original: CandidateList, c_llm: CandidateList, cap: int = 10
) -> CandidateList:
    """Round-robin interleave with original-first seniority, deduped, capped.

    Turns alternate between the two lists starting with c_original; each turn
    takes that source's next not-yet-included id. Within-source rank order is
    preserved, so c_original's top candidate is always first in the output.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    queues = (deque(c_original.items), deque(c_llm.items))
    seen: set[str] = set()
    merged: list[Candidate] = []
    turn = 0
    while len(merged) < cap and (queues[0] or queues[1]):
        queue = queues[turn]
        while queue and queue[0].id in seen:
            queue.popleft()
        if queue:
            candidate = queue.popleft()
            seen.add(candidate.id)
            merged.append(candidate)
        turn ^= 1
    return CandidateList(source="merged", items=tuple(merged))
