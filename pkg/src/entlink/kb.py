"""Knowledge base: entity storage, description lookup, and the alias index."""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

_WS_RUN = re.compile(r"\s+")


class KbLoadError(ValueError):
    """A knowledge-base file could not be parsed or violates its schema."""


class UnknownEntityError(LookupError):
    """An entity id that does not exist in the knowledge base."""


def normalize(surface: str) -> str:
    """Canonical surface form: NFC, lowercase, whitespace runs collapsed."""
    s = unicodedata.normalize("NFC", surface).lower()
    return _WS_RUN.sub(" ", s).strip()


@dataclass(frozen=True)
class Entity:
    id: str
    title: str
    description: str = ""
    aliases: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("entity id must be non-empty")
        if not self.title:
            raise ValueError(f"entity {self.id}: title must be non-empty")


class KnowledgeBase:
    """Read-only entity store. Safe to share across pipeline workers."""

    def __init__(self, entities: list[Entity]):
        self._entities: dict[str, Entity] = {}
        for ent in entities:
            if ent.id in self._entities:
                raise KbLoadError(f"duplicate id {ent.id}")
            self._entities[ent.id] = ent
        index: dict[str, set[str]] = {}
        for ent in self._entities.values():
            for surface in (ent.title, *ent.aliases):
                index.setdefault(normalize(surface), set()).add(ent.id)
        self._alias_index = {key: tuple(sorted(ids)) for key, ids in index.items()}

    def __len__(self) -> int:
        return len(self._entities)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self._entities

    def ids(self) -> list[str]:
        return sorted(self._entities)

    def get(self, entity_id: str) -> Entity:
        try:
            return self._entities[entity_id]
        except KeyError:
            raise UnknownEntityError(f"unknown entity id: {entity_id}") from None

    def description(self, entity_id: str) -> str:
        """Stored description for the id; empty string is a legal value."""
        return self.get(entity_id).description

    def lookup_alias(self, surface: str) -> list[str]:
        """Ids whose normalized title or alias equals normalize(surface).

        Returns a lexicographically ordered list; empty on miss.
        """
        return list(self._alias_index.get(normalize(surface), ()))


def _parse_entity(obj: object, line_no: int) -> Entity:
    if not isinstance(obj, dict):
        raise KbLoadError(f"line {line_no}: expected a JSON object")
    entity_id = obj.get("id")
    title = obj.get("title")
    if not isinstance(entity_id, str) or not entity_id:
        raise KbLoadError(f"line {line_no}: missing or empty 'id'")
    if not isinstance(title, str) or not title:
        raise KbLoadError(f"line {line_no}: missing or empty 'title'")
    description = obj.get("description", "")
    if not isinstance(description, str):
        raise KbLoadError(f"line {line_no}: 'description' must be a string")
    aliases = obj.get("aliases", [])
    if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
        raise KbLoadError(f"line {line_no}: 'aliases' must be a list of strings")
    return Entity(id=entity_id, title=title, description=description, aliases=tuple(aliases))


def load_kb(path: str | Path) -> KnowledgeBase:
    """Load a JSONL knowledge base, one entity object per line.

    Raises KbLoadError with the offending line number on malformed input and
    on duplicate ids.
    """
    path = Path(path)
    if not path.exists():
        raise KbLoadError(f"knowledge base file not found: {path}")
    entities: list[Entity] = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise KbLoadError(f"line {line_no}: invalid JSON: {exc.msg}") from exc
            ent = _parse_entity(obj, line_no)
            if ent.id in seen:
                raise KbLoadError(f"duplicate id {ent.id} (line {line_no})")
            seen[ent.id] = line_no
            entities.append(ent)
    return KnowledgeBase(entities)
