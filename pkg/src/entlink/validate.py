"""Global self-validation: entity-replaced text, per-mention pass/fail
verdicts against the whole-document context, and one-shot re-selection of
failures. Re-selected assignments are final and never validated again.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from .candidates import Candidate, CandidateList
from .disambig import Choice, ask_choice, format_options
from .llm import LlmClient, LlmRequest, PromptTemplate, render

if TYPE_CHECKING:
    from .corpus import Document, Mention, Prediction

_VERDICT = re.compile(r"^\s*(yes|no)\b[\s,.:;!?\-–—]*", re.IGNORECASE)


@dataclass(frozen=True)
class LinkedMention:
    """One non-NIL stage-2 assignment: what was linked, to what, with which text."""

    mention_index: int
    surface: str
    title: str
    description: str


@dataclass(frozen=True)
class GlobalContext:
    original: str
    replaced: str
    descriptions: tuple[LinkedMention, ...]


@dataclass(frozen=True)
class Verdict:
    mention_index: int
    passed: bool
    explanation: str
    unparseable: bool = False


def _stage2_candidate(pred: Prediction) -> Candidate | None:
    if pred.chosen_index == 0:
        return None
    return pred.c_final.items[pred.chosen_index - 1]


def _check_alignment(doc: Document, predictions: Sequence[Prediction]) -> None:
    if len(predictions) != len(doc.mentions):
        raise ValueError(
            f"doc {doc.doc_id}: {len(predictions)} predictions for "
            f"{len(doc.mentions)} mentions"
        )
    for i, pred in enumerate(predictions):
        if pred.doc_id != doc.doc_id or pred.mention_index != i:
            raise ValueError(f"doc {doc.doc_id}: prediction {i} is misaligned")


def substitute(doc: Document, predictions: Sequence[Prediction]) -> str:
    """Entity-replaced text: every non-NIL mention span becomes the predicted
    title; NIL mentions keep their surface. Spans are replaced right-to-left
    so earlier byte offsets stay valid.
    """
    _check_alignment(doc, predictions)
    raw = bytearray(doc.text.encode("utf-8"))
    for mention, pred in sorted(
        zip(doc.mentions, predictions), key=lambda pair: pair[0].start, reverse=True
    ):
        candidate = _stage2_candidate(pred)
        if candidate is not None:
            raw[mention.start : mention.end] = candidate.title.encode("utf-8")
    return raw.decode("utf-8")


def build_global_context(doc: Document, predictions: Sequence[Prediction]) -> GlobalContext:
    _check_alignment(doc, predictions)
    linked = []
    for i, (mention, pred) in enumerate(zip(doc.mentions, predictions)):
        candidate = _stage2_candidate(pred)
        if candidate is not None:
            linked.append(
                LinkedMention(
                    mention_index=i,
                    surface=mention.surface,
                    title=candidate.title,
                    description=candidate.description,
                )
            )
    return GlobalContext(
        original=doc.text,
        replaced=substitute(doc, predictions),
        descriptions=tuple(linked),
    )


def format_descriptions(g: GlobalContext, target_index: int | None = None) -> str:
    """Linked-entity block for prompts; the target line is marked with '>>>'."""
    lines = []
    for lm in g.descriptions:
        marker = ">>>" if lm.mention_index == target_index else "-"
        lines.append(f'{marker} "{lm.surface}" is linked to "{lm.title}": {lm.description}'.rstrip())
    return "\n".join(lines)


def parse_verdict(completion: str) -> tuple[bool, str, bool]:
    """(passed, explanation, unparseable) from a leading YES/NO token.

    Anything without the token passes: re-selection is the risky action, so
    it is never triggered on noise.
    """
    match = _VERDICT.match(completion)
    if match is None:
        return True, completion.strip(), True
    passed = match.group(1).lower() == "yes"
    return passed, completion[match.end() :].strip(), False


def validate_all(
    g: GlobalContext,
    client: LlmClient,
    tpl: PromptTemplate,
    *,
    temperature: float = 0.0,
    max_tokens: int = 256,
) -> list[Verdict]:
    """One verdict call per linked mention, each seeing the full global context."""
    if not g.descriptions:
        raise ValueError("no linked mentions to validate")
    verdicts = []
    for lm in g.descriptions:
        prompt = render(
            tpl,
            {
                "mention": lm.surface,
                "global_original": g.original,
                "global_replaced": g.replaced,
                "descriptions": format_descriptions(g, target_index=lm.mention_index),
            },
        )
        completion = client.complete(
            LlmRequest(user=prompt, temperature=temperature, max_tokens=max_tokens)
        )
        passed, explanation, unparseable = parse_verdict(completion)
        verdicts.append(
            Verdict(
                mention_index=lm.mention_index,
                passed=passed,
                explanation=explanation,
                unparseable=unparseable,
            )
        )
    return verdicts


def reselect(
    mention: Mention,
    g: GlobalContext,
    candidates: CandidateList,
    client: LlmClient,
    tpl: PromptTemplate,
    *,
    temperature: float = 0.0,
    max_tokens: int = 256,
) -> Choice:
    """Re-pick for a failed mention with the global context in the prompt.

    Same mechanics as stage-2 selection, including the retry-then-NIL policy;
    the result is final.
    """
    if not candidates.items:
        return Choice(index=0, raw="")
    prompt = render(
        tpl,
        {
            "mention": mention.surface,
            "candidates": format_options(candidates),
            "global_original": g.original,
            "global_replaced": g.replaced,
            "descriptions": format_descriptions(g),
        },
    )
    return ask_choice(
        prompt, len(candidates.items), client, temperature=temperature, max_tokens=max_tokens
    )
