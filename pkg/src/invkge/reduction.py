"""Reduce a candidate set to one embedding by weighted average.

Three weighting schemes: correlation-based (query-aware, from relation
co-occurrence conditionals), degree-based (favors candidates produced via
well-connected training entities), and uniform (the ablation baseline).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import TripleStore, Vocabulary
from .estimation import CandidateSet

logger = logging.getLogger(__name__)

CORRELATION = "correlation"
DEGREE = "degree"
UNIFORM = "uniform"
SCHEMES = (CORRELATION, DEGREE, UNIFORM)

DEFAULT_SMOOTHING = 0.1


@dataclass
class RelationCorrelation:
    """Dense conditional co-occurrence matrix over relations.

    ``conditional[r1, r2]`` is P(r2 | r1): among entities whose training
    neighbor set contains r1, the fraction that also contains r2. An entity
    counts once per relation regardless of multiplicity. ``support[r]`` is the
    number of entities carrying r at all; zero-support relations have all-zero
    rows.
    """

    conditional: np.ndarray
    support: np.ndarray


def build_correlation(train_store: TripleStore,
                      num_relations: int | None = None) -> RelationCorrelation:
    if len(train_store) == 0:
        raise ValueError("correlation requires a nonempty training store")
    n_rel = num_relations if num_relations is not None else train_store.num_relations
    count = np.zeros((n_rel, n_rel))
    for e in sorted(train_store.entities()):
        rels = {r for r, _ in train_store.out_index.get(e, ())}
        rels.update(r for _, r in train_store.in_index.get(e, ()))
        idx = np.fromiter(rels, dtype=np.int64)
        count[np.ix_(idx, idx)] += 1.0
    support = np.diag(count).copy()
    denom = np.where(support > 0, support, 1.0)
    conditional = np.where(support[:, None] > 0, count / denom[:, None], 0.0)
    return RelationCorrelation(conditional, support.astype(np.int64))


def uniform_weights(candidate_set: CandidateSet) -> np.ndarray:
    n = len(candidate_set)
    if n == 0:
        raise ValueError("empty candidate set")
    return np.full(n, 1.0 / n)


def degree_weights(candidate_set: CandidateSet, train_store: TripleStore,
                   smoothing: float = DEFAULT_SMOOTHING) -> np.ndarray:
    """Weights proportional to log(training degree of the source entity + smoothing)."""
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    raw = np.array([np.log(train_store.degree(c.source_entity) + smoothing)
                    for c in candidate_set.candidates])
    return _normalize(raw, DEGREE)


def correlation_weights(candidate_set: CandidateSet, correlation: RelationCorrelation,
                        query_relation: int) -> np.ndarray:
    """Query-aware weights: P(source relation | query) + P(query | source relation)."""
    p = correlation.conditional
    raw = np.array([p[query_relation, c.source_relation] + p[c.source_relation, query_relation]
                    for c in candidate_set.candidates])
    return _normalize(raw, CORRELATION)


def _normalize(raw: np.ndarray, scheme: str) -> np.ndarray:
    if raw.size == 0:
        raise ValueError("empty candidate set")
    raw = np.clip(raw, 0.0, None)
    total = raw.sum()
    if total <= 0.0:
        logger.warning("all %s weights are zero; falling back to uniform", scheme)
        return np.full(raw.size, 1.0 / raw.size)
    return raw / total


def candidate_weights(scheme: str, candidate_set: CandidateSet, *,
                      correlation: RelationCorrelation | None = None,
                      query_relation: int | None = None,
                      train_store: TripleStore | None = None,
                      smoothing: float = DEFAULT_SMOOTHING) -> np.ndarray:
    """Dispatch to one of the weighting schemes; weights are >= 0 and sum to 1."""
    if scheme == UNIFORM:
        return uniform_weights(candidate_set)
    if scheme == DEGREE:
        if train_store is None:
            raise ValueError("degree weights need the training store")
        return degree_weights(candidate_set, train_store, smoothing)
    if scheme == CORRELATION:
        if correlation is None or query_relation is None:
            raise ValueError("correlation weights need the correlation matrix and a query relation")
        return correlation_weights(candidate_set, correlation, query_relation)
    raise ValueError(f"unknown weighting scheme {scheme!r}")


def reduce_candidates(candidate_set: CandidateSet, weights: np.ndarray) -> np.ndarray:
    """Element-wise weighted sum of the candidate vectors (complex for RotatE)."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(candidate_set),):
        raise ValueError(f"expected {len(candidate_set)} weights, got shape {w.shape}")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    mat = np.stack([c.vector for c in candidate_set.candidates])
    return w @ mat


def save_correlation_csv(correlation: RelationCorrelation, vocab: Vocabulary,
                         path: str | Path) -> None:
    """Inspection dump: one row per r1 with P(r2|r1) columns."""
    names = vocab.relation_names
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("relation," + ",".join(names) + "\n")
        for i, name in enumerate(names):
            row = ",".join(f"{v:.6g}" for v in correlation.conditional[i])
            f.write(f"{name},{row}\n")
