"""Vocabulary, triplets, and the indexed triple store shared by every stage."""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Iterator, NamedTuple

AS_HEAD = "head"
AS_TAIL = "tail"


class Triplet(NamedTuple):
    head: int
    relation: int
    tail: int


class Neighbor(NamedTuple):
    """One incident edge of a focal entity.

    ``direction`` is the role the focal entity plays in the stored triplet:
    AS_HEAD means the triplet is (focal, relation, entity), AS_TAIL means
    (entity, relation, focal). ``entity`` is always the other endpoint.
    """

    entity: int
    relation: int
    direction: str


class Vocabulary:
    """Bijection between names and dense integer ids, assigned in first-seen order."""

    def __init__(self) -> None:
        self.entity_names: list[str] = []
        self.relation_names: list[str] = []
        self._entity_ids: dict[str, int] = {}
        self._relation_ids: dict[str, int] = {}

    def add_entity(self, name: str) -> int:
        eid = self._entity_ids.get(name)
        if eid is None:
            eid = len(self.entity_names)
            self._entity_ids[name] = eid
            self.entity_names.append(name)
        return eid

    def add_relation(self, name: str) -> int:
        rid = self._relation_ids.get(name)
        if rid is None:
            rid = len(self.relation_names)
            self._relation_ids[name] = rid
            self.relation_names.append(name)
        return rid

    def entity_id(self, name: str) -> int:
        return self._entity_ids[name]

    def relation_id(self, name: str) -> int:
        return self._relation_ids[name]

    def entity_name(self, eid: int) -> str:
        return self.entity_names[eid]

    def relation_name(self, rid: int) -> str:
        return self.relation_names[rid]

    @property
    def num_entities(self) -> int:
        return len(self.entity_names)

    @property
    def num_relations(self) -> int:
        return len(self.relation_names)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return (self.entity_names == other.entity_names
                and self.relation_names == other.relation_names)

    def __repr__(self) -> str:
        return f"Vocabulary({self.num_entities} entities, {self.num_relations} relations)"


class TripleStore:
    """Immutable, deduplicated triplet set with adjacency and degree indices.

    Duplicate triplets are stored once. Self-loops are allowed and count twice
    towards the degree of their entity (once as head, once as tail). Adjacency
    lists keep first-insertion order, which downstream code relies on for
    reproducible candidate ordering.
    """

    def __init__(self, triplets: Iterable[Triplet],
                 num_entities: int | None = None,
                 num_relations: int | None = None) -> None:
        self._ordered: list[Triplet] = []
        self._set: set[Triplet] = set()
        self.out_index: dict[int, list[tuple[int, int]]] = defaultdict(list)  # e -> [(r, t)]
        self.in_index: dict[int, list[tuple[int, int]]] = defaultdict(list)   # e -> [(h, r)]
        max_ent = -1
        max_rel = -1
        for raw in triplets:
            t = Triplet(*raw)
            if num_entities is not None and not (0 <= t.head < num_entities and 0 <= t.tail < num_entities):
                raise ValueError(f"entity id out of range in triplet {t} (num_entities={num_entities})")
            if num_relations is not None and not 0 <= t.relation < num_relations:
                raise ValueError(f"relation id out of range in triplet {t} (num_relations={num_relations})")
            if t.head < 0 or t.relation < 0 or t.tail < 0:
                raise ValueError(f"negative id in triplet {t}")
            if t in self._set:
                continue
            self._set.add(t)
            self._ordered.append(t)
            self.out_index[t.head].append((t.relation, t.tail))
            self.in_index[t.tail].append((t.head, t.relation))
            max_ent = max(max_ent, t.head, t.tail)
            max_rel = max(max_rel, t.relation)
        self.num_entities = num_entities if num_entities is not None else max_ent + 1
        self.num_relations = num_relations if num_relations is not None else max_rel + 1

    def contains(self, head: int, relation: int, tail: int) -> bool:
        return Triplet(head, relation, tail) in self._set

    def __contains__(self, triplet: Triplet) -> bool:
        return Triplet(*triplet) in self._set

    def degree(self, entity: int) -> int:
        return len(self.out_index.get(entity, ())) + len(self.in_index.get(entity, ()))

    def neighbors(self, entity: int) -> list[Neighbor]:
        """All incident edges of ``entity``: head-direction edges first, then tail-direction.

        Isolated entities yield an empty list.
        """
        out = [Neighbor(entity=t, relation=r, direction=AS_HEAD)
               for r, t in self.out_index.get(entity, ())]
        inc = [Neighbor(entity=h, relation=r, direction=AS_TAIL)
               for h, r in self.in_index.get(entity, ())]
        return out + inc

    def entities(self) -> set[int]:
        """Entities incident to at least one stored triplet."""
        return set(self.out_index) | set(self.in_index)

    def __len__(self) -> int:
        return len(self._ordered)

    def __iter__(self) -> Iterator[Triplet]:
        return iter(self._ordered)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TripleStore):
            return NotImplemented
        return self._ordered == other._ordered

    def __repr__(self) -> str:
        return f"TripleStore({len(self)} triplets, {self.num_entities} entities, {self.num_relations} relations)"
