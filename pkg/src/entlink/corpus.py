"""Gold-annotated corpus loading and prediction serialization.

Mention offsets are byte offsets into the UTF-8 encoding of the document
text; the loader rejects spans that split a multi-byte sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .candidates import Candidate, CandidateList

VALIDATED_PASS = "pass"
VALIDATED_FAIL = "fail"
VALIDATED_NOT_RUN = "not_run"
VALIDATED_STATES = (VALIDATED_PASS, VALIDATED_FAIL, VALIDATED_NOT_RUN)


class CorpusLoadError(ValueError):
    """A corpus or prediction file could not be parsed or is inconsistent."""


@dataclass(frozen=True)
class Mention:
    start: int
    end: int
    surface: str
    gold_id: str | None = None


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    mentions: tuple[Mention, ...] = ()

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise CorpusLoadError("doc_id must be non-empty")
        ordered = tuple(sorted(self.mentions, key=lambda m: m.start))
        object.__setattr__(self, "mentions", ordered)
        raw = self.text.encode("utf-8")
        prev_end = 0
        for i, mention in enumerate(ordered):
            where = f"doc {self.doc_id} mention {i}"
            if not (0 <= mention.start < mention.end <= len(raw)):
                raise CorpusLoadError(
                    f"{where}: span ({mention.start}, {mention.end}) out of bounds"
                )
            if mention.start < prev_end:
                raise CorpusLoadError(f"{where}: overlaps previous mention")
            try:
                piece = raw[mention.start : mention.end].decode("utf-8")
            except UnicodeDecodeError:
                raise CorpusLoadError(f"{where}: span splits a UTF-8 sequence") from None
            if piece != mention.surface:
                raise CorpusLoadError(
                    f"{where}: surface {mention.surface!r} does not match slice {piece!r}"
                )
            prev_end = mention.end


@dataclass(frozen=True)
class Prediction:
    """Per-mention pipeline outcome with the full stage trace.

    chosen_index and reselected_index are 1-based positions into c_final,
    with 0 meaning NIL. final_id is None for NIL.
    """

    doc_id: str
    mention_index: int
    interpretation: str
    c_original: CandidateList
    c_llm: CandidateList
    c_final: CandidateList
    chosen_index: int
    validated: str = VALIDATED_NOT_RUN
    reselected_index: int | None = None
    final_id: str | None = None
    audit: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= self.chosen_index <= len(self.c_final.items):
            raise ValueError(
                f"chosen_index {self.chosen_index} out of range for "
                f"{len(self.c_final.items)} candidates"
            )
        if self.validated not in VALIDATED_STATES:
            raise ValueError(f"validated must be one of {VALIDATED_STATES}")
        if self.reselected_index is not None:
            if self.validated != VALIDATED_FAIL:
                raise ValueError("reselected_index present without a failed validation")
            if self.reselected_index < 0:
                raise ValueError("reselected_index must be >= 0")

    @property
    def effective_index(self) -> int:
        if self.validated == VALIDATED_FAIL and self.reselected_index is not None:
            return self.reselected_index
        return self.chosen_index


def load_corpus(path: str | Path) -> list[Document]:
    """Load a JSONL corpus, one document object per line, validating spans."""
    path = Path(path)
    if not path.exists():
        raise CorpusLoadError(f"corpus file not found: {path}")
    docs: list[Document] = []
    seen_ids: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusLoadError(f"line {line_no}: invalid JSON: {exc.msg}") from exc
            doc = _parse_document(obj, line_no)
            if doc.doc_id in seen_ids:
                raise CorpusLoadError(f"line {line_no}: duplicate doc_id {doc.doc_id}")
            seen_ids.add(doc.doc_id)
            docs.append(doc)
    return docs


def _parse_document(obj: object, line_no: int) -> Document:
    if not isinstance(obj, dict):
        raise CorpusLoadError(f"line {line_no}: expected a JSON object")
    doc_id = obj.get("doc_id")
    text = obj.get("text")
    if not isinstance(doc_id, str) or not doc_id:
        raise CorpusLoadError(f"line {line_no}: missing or empty 'doc_id'")
    if not isinstance(text, str):
        raise CorpusLoadError(f"line {line_no}: missing 'text'")
    raw_mentions = obj.get("mentions", [])
    if not isinstance(raw_mentions, list):
        raise CorpusLoadError(f"line {line_no}: 'mentions' must be a list")
    mentions = []
    for i, m in enumerate(raw_mentions):
        if not isinstance(m, dict):
            raise CorpusLoadError(f"line {line_no}: mention {i} must be an object")
        try:
            mentions.append(
                Mention(
                    start=int(m["start"]),
                    end=int(m["end"]),
                    surface=str(m["surface"]),
                    gold_id=m.get("gold_id"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusLoadError(f"line {line_no}: mention {i}: {exc}") from exc
    return Document(doc_id=doc_id, text=text, mentions=tuple(mentions))


def _candidates_to_json(clist: CandidateList) -> list[dict]:
    return [{"id": c.id, "title": c.title, "score": c.score} for c in clist.items]


def _candidates_from_json(items: list, source: str) -> CandidateList:
    cands = tuple(
        Candidate(id=c["id"], title=c["title"], score=c["score"]) for c in items
    )
    return CandidateList(source=source, items=cands)


def prediction_to_dict(pred: Prediction) -> dict:
    """Stable-order JSON form; candidate descriptions are recoverable from the KB."""
    return {
        "doc_id": pred.doc_id,
        "mention_index": pred.mention_index,
        "interpretation": pred.interpretation,
        "c_original": _candidates_to_json(pred.c_original),
        "c_llm": _candidates_to_json(pred.c_llm),
        "c_final": _candidates_to_json(pred.c_final),
        "chosen_index": pred.chosen_index,
        "validated": pred.validated,
        "reselected_index": pred.reselected_index,
        "final_id": pred.final_id,
        "audit": list(pred.audit),
    }


def prediction_from_dict(obj: dict) -> Prediction:
    try:
        return Prediction(
            doc_id=obj["doc_id"],
            mention_index=obj["mention_index"],
            interpretation=obj["interpretation"],
            c_original=_candidates_from_json(obj["c_original"], "original"),
            c_llm=_candidates_from_json(obj["c_llm"], "llm"),
            c_final=_candidates_from_json(obj["c_final"], "merged"),
            chosen_index=obj["chosen_index"],
            validated=obj["validated"],
            reselected_index=obj["reselected_index"],
            final_id=obj["final_id"],
            audit=tuple(obj.get("audit", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusLoadError(f"malformed prediction record: {exc}") from exc


def write_predictions(preds: list[Prediction], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for pred in preds:
            fh.write(json.dumps(prediction_to_dict(pred), ensure_ascii=False))
            fh.write("\n")


def load_predictions(path: str | Path) -> list[Prediction]:
    path = Path(path)
    if not path.exists():
        raise CorpusLoadError(f"prediction file not found: {path}")
    preds = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusLoadError(f"line {line_no}: invalid JSON: {exc.msg}") from exc
            preds.append(prediction_from_dict(obj))
    return preds
