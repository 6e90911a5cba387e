"""Filtered link-prediction ranking, triplet classification, and ablations.

Ranking is over the in-graph entity set with the filtered protocol: every
candidate that forms a known-true triplet with the query (other than the
ground truth itself) is removed before the rank is computed. Ties are broken
by the mean of the best and worst tied positions. Classification applies
relation-specific distance thresholds tuned for accuracy on the labeled
validation split.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .core import AS_HEAD, AS_TAIL, Triplet, TripleStore
from .datasets import BenchmarkSplits, build_filter_set
from .estimation import CandidateSet, EstimationError, cap_neighbors, estimate_candidates
from .models import ROTATE, EmbeddingTables, translation_distance
from .reduction import (CORRELATION, DEGREE, DEFAULT_SMOOTHING, RelationCorrelation,
                        build_correlation, candidate_weights, reduce_candidates)
from .seeding import substream

logger = logging.getLogger(__name__)

ABLATION_VARIANTS = ("cap1", "cap8", "cap32", "uniform", "ratio")


class FilterIndex:
    """Known-true triplets indexed for candidate filtering."""

    def __init__(self, triplets: Iterable[Triplet]):
        self.tails_of: dict[tuple[int, int], set[int]] = defaultdict(set)
        self.heads_of: dict[tuple[int, int], set[int]] = defaultdict(set)
        for h, r, t in triplets:
            self.tails_of[(h, r)].add(t)
            self.heads_of[(r, t)].add(h)

    def known(self, known_entity: int, relation: int, missing: str) -> set[int]:
        if missing == AS_TAIL:
            return self.tails_of.get((known_entity, relation), set())
        return self.heads_of.get((relation, known_entity), set())


@dataclass
class LpQuery:
    """One ranking query: a known side, a relation, and the entity to recover."""

    known_entity: int
    known_vec: np.ndarray
    relation: int
    missing: str  # AS_HEAD or AS_TAIL: the slot being ranked
    answer: int


@dataclass
class Thresholds:
    """Per-relation distance cutoffs; unseen relations fall back to ``default``."""

    per_relation: dict[int, float]
    default: float

    def for_relation(self, relation: int) -> float:
        return self.per_relation.get(relation, self.default)


@dataclass
class EvalReport:
    task: str
    num_queries: int
    mrr: float | None = None
    hits1: float | None = None
    hits10: float | None = None
    accuracy: float | None = None
    counts: dict[str, int] = field(default_factory=dict)
    config: dict = field(default_factory=dict)


def filtered_rank(tables: EmbeddingTables, query: LpQuery,
                  filter_index: FilterIndex | Iterable[Triplet],
                  candidate_ids: np.ndarray) -> float:
    """Rank (>= 1) of the ground truth among the candidates, filtered.

    Candidates other than the answer that form a known-true triplet with the
    query are dropped; ties are resolved to the mean of the optimistic and
    pessimistic positions. Accepts a FilterIndex or any triplet iterable
    (indexed on the fly).
    """
    if not isinstance(filter_index, FilterIndex):
        filter_index = FilterIndex(filter_index)
    cids = np.asarray(candidate_ids)
    pos = np.flatnonzero(cids == query.answer)
    if pos.size == 0:
        raise ValueError(f"ground truth {query.answer} is not among the candidates")
    dists = _candidate_distances(tables, query, cids)
    keep = _keep_mask(filter_index, query, cids)
    gt_d = dists[pos[0]]
    kept = dists[keep]
    better = int(np.count_nonzero(kept < gt_d))
    tied = int(np.count_nonzero(kept == gt_d))  # includes the ground truth
    return better + (1 + tied) / 2.0


def _candidate_distances(tables: EmbeddingTables, query: LpQuery,
                         cids: np.ndarray) -> np.ndarray:
    cand = tables.entity_matrix()[cids]
    rel = tables.relation_vec(query.relation)
    if query.missing == AS_TAIL:
        return translation_distance(tables.model, tables.norm_order, query.known_vec, rel, cand)
    return translation_distance(tables.model, tables.norm_order, cand, rel, query.known_vec)


def _keep_mask(filter_index: FilterIndex, query: LpQuery, cids: np.ndarray) -> np.ndarray:
    known = filter_index.known(query.known_entity, query.relation, query.missing)
    keep = np.ones(len(cids), dtype=bool)
    if known:
        drop = np.fromiter((e for e in known if e != query.answer), dtype=np.int64)
        if drop.size:
            keep &= ~np.isin(cids, drop)
    return keep


class _OokgEmbedder:
    """Shared estimation/reduction cache for one evaluation run."""

    def __init__(self, tables: EmbeddingTables, splits: BenchmarkSplits, scheme: str,
                 correlation: RelationCorrelation | None, smoothing: float,
                 neighbor_cap: int | None, seed: int):
        self.tables = tables
        self.scheme = scheme
        self.smoothing = smoothing
        self.neighbor_cap = neighbor_cap
        self.seed = seed
        self.ikg = splits.ikg_entities
        self.aux_store = TripleStore(splits.aux, num_entities=splits.vocab.num_entities,
                                     num_relations=splits.vocab.num_relations)
        self.train_store = TripleStore(splits.train, num_entities=splits.vocab.num_entities,
                                       num_relations=splits.vocab.num_relations)
        if scheme == CORRELATION and correlation is None:
            correlation = build_correlation(self.train_store, splits.vocab.num_relations)
        self.correlation = correlation
        self._cand_cache: dict[int, CandidateSet | None] = {}
        self._vec_cache: dict = {}

    def _candidates(self, entity: int) -> CandidateSet | None:
        if entity not in self._cand_cache:
            try:
                cset = estimate_candidates(self.tables, self.aux_store, entity, self.ikg)
            except EstimationError:
                cset = None
            if cset is not None and self.neighbor_cap is not None:
                cset = cap_neighbors(cset, self.neighbor_cap,
                                     substream(self.seed, "capping", entity))
            self._cand_cache[entity] = cset
        return self._cand_cache[entity]

    def embed(self, entity: int, query_relation: int) -> np.ndarray | None:
        """Reduced embedding, or None when the entity has no usable neighbors.

        Correlation weights depend on the query relation, so those embeddings
        are cached per (entity, relation); the other schemes cache per entity.
        """
        key = (entity, query_relation) if self.scheme == CORRELATION else entity
        if key not in self._vec_cache:
            cset = self._candidates(entity)
            if cset is None:
                self._vec_cache[key] = None
            else:
                w = candidate_weights(self.scheme, cset, correlation=self.correlation,
                                      query_relation=query_relation,
                                      train_store=self.train_store, smoothing=self.smoothing)
                self._vec_cache[key] = reduce_candidates(cset, w)
        return self._vec_cache[key]


def _map_ordered(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def link_prediction(tables: EmbeddingTables, splits: BenchmarkSplits,
                    scheme: str = CORRELATION, *,
                    correlation: RelationCorrelation | None = None,
                    smoothing: float = DEFAULT_SMOOTHING,
                    neighbor_cap: int | None = None, seed: int = 0,
                    threads: int = 1) -> EvalReport:
    """Filtered MRR / Hits@1 / Hits@10 over the test split.

    For each test triplet the OOKG side is estimated and reduced (per query
    relation when the scheme is correlation-based) and the missing in-graph
    entity is ranked against all in-graph entities. Dangling OOKG entities
    receive the worst post-filter rank and are counted in the report.
    """
    embedder = _OokgEmbedder(tables, splits, scheme, correlation, smoothing,
                             neighbor_cap, seed)
    findex = FilterIndex(build_filter_set(splits))
    cids = np.array(sorted(splits.ikg_entities), dtype=np.int64)
    if cids.size == 0:
        raise ValueError("no in-graph entities to rank over")
    ookg = splits.ookg_entities
    counts: dict[str, int] = defaultdict(int)

    jobs: list[tuple[LpQuery, bool]] = []  # (query, dangling)
    labels = splits.test_labels
    for i, trip in enumerate(splits.test):
        if labels is not None and labels[i] != 1:
            counts["negatives_skipped"] += 1
            continue
        head_ookg = trip.head in ookg
        tail_ookg = trip.tail in ookg
        if head_ookg and tail_ookg:
            counts["skipped_both_ookg"] += 1
            continue
        if head_ookg:
            known, missing, answer = trip.head, AS_TAIL, trip.tail
        elif tail_ookg:
            known, missing, answer = trip.tail, AS_HEAD, trip.head
        else:
            counts["ikg_only"] += 1
            known, missing, answer = trip.head, AS_TAIL, trip.tail
        if known in ookg:
            vec = embedder.embed(known, trip.relation)
        else:
            vec = tables.entity_vec(known)
        if vec is None:
            counts["dangling"] += 1
        jobs.append((LpQuery(known, vec, trip.relation, missing, answer), vec is None))

    if not jobs:
        raise ValueError("no evaluable test triplets")

    def rank_one(job: tuple[LpQuery, bool]) -> float:
        query, dangling = job
        if dangling:
            keep = _keep_mask(findex, query, cids)
            return float(np.count_nonzero(keep))  # worst possible rank
        return filtered_rank(tables, query, findex, cids)

    ranks = np.array(_map_ordered(rank_one, jobs, threads))
    report = EvalReport(
        task="lp",
        num_queries=len(ranks),
        mrr=float(np.mean(1.0 / ranks)),
        hits1=float(np.mean(ranks <= 1)),
        hits10=float(np.mean(ranks <= 10)),
        counts=dict(counts),
        config={"scheme": scheme, "neighbor_cap": neighbor_cap, "seed": seed,
                "smoothing": smoothing},
    )
    return report


def tune_thresholds(tables: EmbeddingTables, valid: list[Triplet],
                    labels: list[int]) -> Thresholds:
    """Relation-specific cutoffs maximizing validation accuracy.

    Candidate cutoffs are the midpoints between consecutive distinct
    validation distances plus -inf / +inf; among accuracy ties the smallest
    cutoff wins. The ``default`` threshold is tuned the same way on the
    pooled validation set and serves relations absent from validation.
    """
    if not valid:
        raise ValueError("validation set is empty")
    if labels is None or len(labels) != len(valid):
        raise ValueError("labeled validation triplets required")
    data = np.array(valid, dtype=np.int64)
    ent = tables.entity_matrix()
    h = ent[data[:, 0]]
    t = ent[data[:, 2]]
    if tables.model == ROTATE:
        r = np.exp(1j * tables.relation[data[:, 1]])
    else:
        r = tables.relation[data[:, 1]]
    dists = translation_distance(tables.model, tables.norm_order, h, r, t)
    y = np.array(labels) == 1

    per_relation: dict[int, float] = {}
    for rel in np.unique(data[:, 1]):
        mask = data[:, 1] == rel
        per_relation[int(rel)], _ = _best_threshold(dists[mask], y[mask])
    default, _ = _best_threshold(dists, y)
    return Thresholds(per_relation, default)


def _best_threshold(dists: np.ndarray, positive: np.ndarray) -> tuple[float, float]:
    """Smallest cutoff maximizing accuracy of 'positive iff distance <= cutoff'."""
    order = np.argsort(dists, kind="stable")
    ds = dists[order]
    ys = positive[order]
    uniq = np.unique(ds)
    cands = np.concatenate([[-np.inf], (uniq[:-1] + uniq[1:]) / 2.0, [np.inf]])
    pos_cum = np.concatenate([[0], np.cumsum(ys)])
    neg_cum = np.concatenate([[0], np.cumsum(~ys)])
    total_neg = neg_cum[-1]
    best_cut, best_correct = -np.inf, -1
    for c in cands:
        k = int(np.searchsorted(ds, c, side="right"))
        correct = int(pos_cum[k] + (total_neg - neg_cum[k]))
        if correct > best_correct:
            best_correct, best_cut = correct, float(c)
    return best_cut, best_correct / len(ds)


def triplet_classification(tables: EmbeddingTables, splits: BenchmarkSplits,
                           scheme: str = DEGREE, *,
                           thresholds: Thresholds | None = None,
                           correlation: RelationCorrelation | None = None,
                           smoothing: float = DEFAULT_SMOOTHING,
                           neighbor_cap: int | None = None, seed: int = 0,
                           threads: int = 1) -> EvalReport:
    """Accuracy of thresholded distances on the labeled test split.

    OOKG sides (one or both) are estimated from their own aux neighborhoods;
    a triplet with a dangling OOKG entity is classified negative. Thresholds
    are tuned on the validation split when not supplied.
    """
    if splits.test_labels is None or splits.valid_labels is None:
        raise ValueError("triplet classification needs labeled valid/test splits")
    if thresholds is None:
        thresholds = tune_thresholds(tables, splits.valid, splits.valid_labels)
    embedder = _OokgEmbedder(tables, splits, scheme, correlation, smoothing,
                             neighbor_cap, seed)
    ookg = splits.ookg_entities
    counts: dict[str, int] = defaultdict(int)

    def resolve(entity: int, relation: int) -> np.ndarray | None:
        if entity in ookg:
            return embedder.embed(entity, relation)
        return tables.entity_vec(entity)

    jobs = []
    for trip, label in zip(splits.test, splits.test_labels):
        hv = resolve(trip.head, trip.relation)
        tv = resolve(trip.tail, trip.relation)
        if hv is None or tv is None:
            counts["dangling"] += 1
        jobs.append((hv, trip.relation, tv, label))
    if not jobs:
        raise ValueError("no evaluable test triplets")

    def classify(job) -> bool:
        hv, rel, tv, label = job
        if hv is None or tv is None:
            pred = -1
        else:
            d = float(translation_distance(tables.model, tables.norm_order, hv,
                                           tables.relation_vec(rel), tv))
            pred = 1 if d <= thresholds.for_relation(rel) else -1
        return pred == label

    correct = _map_ordered(classify, jobs, threads)
    report = EvalReport(
        task="classification",
        num_queries=len(jobs),
        accuracy=float(np.mean(correct)),
        counts=dict(counts),
        config={"scheme": scheme, "neighbor_cap": neighbor_cap, "seed": seed,
                "smoothing": smoothing},
    )
    return report


def ablate(tables: EmbeddingTables, splits: BenchmarkSplits, variants: list[str], *,
           task: str = "lp", scheme: str | None = None,
           correlation: RelationCorrelation | None = None,
           smoothing: float = DEFAULT_SMOOTHING, seed: int = 0, threads: int = 1,
           ratio_runs: list[tuple[str, EmbeddingTables, BenchmarkSplits]] | None = None,
           ) -> list[tuple[str, EvalReport]]:
    """Run the requested ablation variants and return (name, report) pairs.

    ``capK`` variants keep at most K randomly chosen candidates per entity,
    ``uniform`` replaces the weighting scheme, and ``ratio`` re-runs the base
    evaluation on each (name, tables, splits) entry of ``ratio_runs`` (one
    dataset per OOKG ratio).
    """
    base_scheme = scheme or (CORRELATION if task == "lp" else DEGREE)

    def run(run_tables, run_splits, run_scheme, cap):
        if task == "lp":
            return link_prediction(run_tables, run_splits, run_scheme,
                                   correlation=correlation if run_tables is tables else None,
                                   smoothing=smoothing, neighbor_cap=cap, seed=seed,
                                   threads=threads)
        return triplet_classification(run_tables, run_splits, run_scheme,
                                      correlation=correlation if run_tables is tables else None,
                                      smoothing=smoothing, neighbor_cap=cap, seed=seed,
                                      threads=threads)

    results: list[tuple[str, EvalReport]] = []
    for variant in variants:
        if variant == "uniform":
            results.append((variant, run(tables, splits, "uniform", None)))
        elif variant.startswith("cap") and variant[3:].isdigit():
            results.append((variant, run(tables, splits, base_scheme, int(variant[3:]))))
        elif variant == "ratio":
            if not ratio_runs:
                raise ValueError("ratio variant requires per-dataset (tables, splits) runs")
            for name, run_tables, run_splits in ratio_runs:
                results.append((f"ratio:{name}", run(run_tables, run_splits, base_scheme, None)))
        else:
            raise ValueError(f"unknown ablation variant {variant!r}")
    return results


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("label", "task", "num_queries", "mrr", "hits_at_1", "hits_at_10",
                "accuracy", "dangling", "skipped_both_ookg")


def format_report(label: str, report: EvalReport) -> str:
    lines = [f"== {label} ({report.task}) ==", f"queries: {report.num_queries}"]
    if report.mrr is not None:
        lines += [f"MRR:     {report.mrr:.4f}",
                  f"Hits@1:  {report.hits1:.4f}",
                  f"Hits@10: {report.hits10:.4f}"]
    if report.accuracy is not None:
        lines.append(f"accuracy: {report.accuracy:.4f}")
    for key in sorted(report.counts):
        lines.append(f"{key}: {report.counts[key]}")
    for key in sorted(report.config):
        lines.append(f"config.{key}: {report.config[key]}")
    return "\n".join(lines) + "\n"


def write_report_csv(path: str | Path, reports: list[tuple[str, EvalReport]]) -> None:
    def fmt(x) -> str:
        if x is None:
            return ""
        if isinstance(x, float):
            return f"{x:.6f}"
        return str(x)

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(_CSV_COLUMNS) + "\n")
        for label, rep in reports:
            row = [label, rep.task, rep.num_queries, rep.mrr, rep.hits1, rep.hits10,
                   rep.accuracy, rep.counts.get("dangling", 0),
                   rep.counts.get("skipped_both_ookg", 0)]
            f.write(",".join(fmt(x) for x in row) + "\n")
