"""Closed-form candidate embeddings for out-of-knowledge-graph entities.

Each auxiliary neighbor of an OOKG entity yields one candidate by inverting
the translational assumption of the pretrained model. With the entity as
head of (e, r, t): e = t - r for TransE and e = t o r^{-1} for RotatE; as
tail of (h, r, e): e = h + r and e = h o r. RotatE inversion negates the
relation phases (complex conjugation), which is exact for unit-modulus
rotations and never divides.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import AS_HEAD, TripleStore
from .models import ROTATE, EmbeddingTables

logger = logging.getLogger(__name__)


class EstimationError(ValueError):
    """The entity has no usable auxiliary neighbor."""


@dataclass
class Candidate:
    """One estimated embedding and the auxiliary neighbor that produced it."""

    vector: np.ndarray
    source_entity: int
    source_relation: int
    direction: str  # role of the OOKG entity in the generating triplet


@dataclass
class CandidateSet:
    entity: int
    candidates: list[Candidate]

    def __len__(self) -> int:
        return len(self.candidates)


def estimate_candidates(tables: EmbeddingTables, aux_store: TripleStore, entity: int,
                        ikg_entities: frozenset[int] | set[int]) -> CandidateSet:
    """Candidates for ``entity``, ordered by aux-store neighbor order.

    Neighbors whose other endpoint is not an in-graph entity (dirty aux data)
    are skipped with a warning rather than failing the whole entity. Raises
    EstimationError when no candidate remains.
    """
    candidates: list[Candidate] = []
    skipped = 0
    rotate = tables.model == ROTATE
    for nb in aux_store.neighbors(entity):
        if nb.entity not in ikg_entities or nb.entity >= tables.num_entities:
            skipped += 1
            continue
        other = tables.entity_vec(nb.entity)
        if rotate:
            rot = np.exp(1j * tables.relation[nb.relation])
            vec = other * np.conj(rot) if nb.direction == AS_HEAD else other * rot
        else:
            rel = tables.relation[nb.relation]
            vec = other - rel if nb.direction == AS_HEAD else other + rel
        candidates.append(Candidate(vec, nb.entity, nb.relation, nb.direction))
    if skipped:
        logger.warning("entity %d: skipped %d aux neighbors with out-of-graph endpoints",
                       entity, skipped)
    if not candidates:
        raise EstimationError(f"entity {entity} has no usable aux neighbors")
    return CandidateSet(entity, candidates)


def cap_neighbors(candidate_set: CandidateSet, k: int,
                  rng: np.random.Generator) -> CandidateSet:
    """Uniform subset of at most k candidates, without replacement.

    Original candidate order is preserved; the set is returned unchanged when
    it already fits.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    cands = candidate_set.candidates
    if len(cands) <= k:
        return CandidateSet(candidate_set.entity, list(cands))
    idx = np.sort(rng.choice(len(cands), size=k, replace=False))
    return CandidateSet(candidate_set.entity, [cands[i] for i in idx])
