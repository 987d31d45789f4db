"""Multiple-choice disambiguation: option rendering, index parsing, and the
retry-then-abstain selection policy. Index 0 always means NIL.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .candidates import CandidateList
from .llm import LlmClient, LlmRequest, PromptTemplate, render

if TYPE_CHECKING:
    from .corpus import Mention

NONE_OPTION = "0. None of the above"
RETRY_INSTRUCTION = "Answer with a single number."

_INT_RUN = re.compile(r"\d+")


class ChoiceParseError(ValueError):
    """No usable index in a completion (missing or out of range)."""


@dataclass(frozen=True)
class Choice:
    index: int
    raw: str
    unparseable: bool = False

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError("choice index must be >= 0")


def format_options(clist: CandidateList) -> str:
    """Dense 1-based option block with a trailing abstention option."""
    lines = [
        f"{i}. {c.title} - {c.description}".rstrip()
        for i, c in enumerate(clist.items, start=1)
    ]
    lines.append(NONE_OPTION)
    return "\n".join(lines)


def build_choice_prompt(
    text: str,
    mention: Mention,
    interpretation: str,
    c_final: CandidateList,
    tpl: PromptTemplate,
) -> str:
    if not c_final.items:
        raise ValueError("empty candidate list short-circuits to NIL; no prompt is built")
    return render(
        tpl,
        {
            "text": text,
            "mention": mention.surface,
            "interpretation": interpretation,
            "candidates": format_options(c_final),
        },
    )


def parse_choice(completion: str, n_options: int) -> Choice:
    """First standalone integer (a digit run bounded by non-digits).

    Valid iff 0 <= value <= n_options; anything else is a parse failure,
    never a guess.
    """
    if n_options < 1:
        raise ValueError("n_options must be >= 1")
    match = _INT_RUN.search(completion)
    if match is None:
        raise ChoiceParseError(f"no integer in completion: {completion[:80]!r}")
    value = int(match.group())
    if value > n_options:
        raise ChoiceParseError(f"index {value} out of range 0..{n_options}")
    return Choice(index=value, raw=completion)


def ask_choice(
    prompt: str,
    n_options: int,
    client: LlmClient,
    *,
    temperature: float = 0.0,
    max_tokens: int = 256,
) -> Choice:
    """One completion, one retry with an explicit format nudge, then NIL."""
    completion = client.complete(
        LlmRequest(user=prompt, temperature=temperature, max_tokens=max_tokens)
    )
    try:
        return parse_choice(completion, n_options)
    except ChoiceParseError:
        pass
    retry = client.complete(
        LlmRequest(
            user=f"{prompt}\n\n{RETRY_INSTRUCTION}",
            temperature=temperature,
            max_tokens=max_tokens,
        )
    )
    try:
        return parse_choice(retry, n_options)
    except ChoiceParseError:
        return Choice(index=0, raw=retry, unparseable=True)


def select(
    text: str,
    mention: Mention,
    interpretation: str,
    c_final: CandidateList,
    client: LlmClient,
    tpl: PromptTemplate,
    *,
    temperature: float = 0.0,
    max_tokens: int = 256,
) -> Choice:
    """Pick a candidate index for the mention; empty lists abstain without a call."""
    if not c_final.items:
        return Choice(index=0, raw="")
    prompt = build_choice_prompt(text, mention, interpretation, c_final, tpl)
    return ask_choice(
        prompt, len(c_final.items), client, temperature=temperature, max_tokens=max_tokens
    )
