"""Benchmark split loading, validation, and synthetic split generation.

A benchmark is four TSV files (train / valid / aux / test). Training and
validation triplets use only in-graph (IKG) entities; the auxiliary set joins
each out-of-knowledge-graph (OOKG) entity to IKG entities and is available
only at inference time; test triplets involve at least one OOKG entity.
Classification-task valid/test files carry a trailing label column.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Triplet, Vocabulary
from .models import TRANSE, EmbeddingTables
from .seeding import substream

logger = logging.getLogger(__name__)

TASK_LP = "lp"
TASK_CLASSIFICATION = "classification"

SPLIT_FILENAMES = {"train": "train.txt", "valid": "valid.txt", "aux": "aux.txt", "test": "test.txt"}

_MAX_LISTED_VIOLATIONS = 10


class DatasetFormatError(ValueError):
    """A split file could not be parsed (message carries file and line number)."""


class DatasetValidationError(ValueError):
    """Loaded splits violate the benchmark structure."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        listed = "; ".join(violations[:_MAX_LISTED_VIOLATIONS])
        suffix = "" if len(violations) <= _MAX_LISTED_VIOLATIONS else f" (+{len(violations) - _MAX_LISTED_VIOLATIONS} more)"
        super().__init__(f"{len(violations)} split invariant violation(s): {listed}{suffix}")


class _Infeasible(Exception):
    """Internal: one generation attempt could not satisfy the split invariants."""


@dataclass
class BenchmarkSplits:
    """The four splits of one benchmark plus derived entity partitions."""

    task: str
    vocab: Vocabulary
    train: list[Triplet]
    valid: list[Triplet]
    aux: list[Triplet]
    test: list[Triplet]
    valid_labels: list[int] | None
    test_labels: list[int] | None
    ikg_entities: frozenset[int]
    ookg_entities: frozenset[int]
    dangling_ookg: frozenset[int]


def _normalize_task(task: str) -> str:
    if task in (TASK_LP,):
        return TASK_LP
    if task in (TASK_CLASSIFICATION, "tc"):
        return TASK_CLASSIFICATION
    raise ValueError(f"unknown task {task!r}, expected 'lp' or 'classification'")


def _parse_label(token: str, path, lineno: int) -> int:
    if token == "1":
        return 1
    if token in ("-1", "0"):
        return -1
    raise DatasetFormatError(f"{path}:{lineno}: bad label {token!r} (expected 1, -1 or 0)")


def _parse_file(path: str | Path, labeled: bool) -> list[tuple[str, str, str, int | None]]:
    rows: list[tuple[str, str, str, int | None]] = []
    expected = 4 if labeled else 3
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != expected:
                detail = "label column unexpected for this task" if len(cols) == 4 and not labeled \
                    else f"expected {expected} tab-separated columns, got {len(cols)}"
                raise DatasetFormatError(f"{path}:{lineno}: {detail}")
            label = _parse_label(cols[3], path, lineno) if labeled else None
            rows.append((cols[0], cols[1], cols[2], label))
    return rows


def _entities_of(triplets: list[Triplet]) -> set[int]:
    out: set[int] = set()
    for t in triplets:
        out.add(t.head)
        out.add(t.tail)
    return out


def _assemble(task: str,
              train_rows: list[tuple[str, str, str, int | None]],
              valid_rows: list[tuple[str, str, str, int | None]],
              aux_rows: list[tuple[str, str, str, int | None]],
              test_rows: list[tuple[str, str, str, int | None]]) -> BenchmarkSplits:
    """Build vocabulary (first-seen order: train, valid, aux, test) and validate."""
    vocab = Vocabulary()

    def convert(rows):
        trips, labels = [], []
        for h, r, t, lab in rows:
            trips.append(Triplet(vocab.add_entity(h), vocab.add_relation(r), vocab.add_entity(t)))
            labels.append(lab)
        return trips, labels

    train, _ = convert(train_rows)
    valid, valid_labels = convert(valid_rows)
    aux, _ = convert(aux_rows)
    test, test_labels = convert(test_rows)

    ikg = frozenset(_entities_of(train))
    ookg = frozenset((_entities_of(aux) | _entities_of(test)) - ikg)

    violations: list[str] = []
    for t in valid:
        if t.head not in ikg or t.tail not in ikg:
            violations.append(f"valid triplet {_names(vocab, t)} uses an entity absent from train")
    for t in aux:
        n_ookg = (t.head in ookg) + (t.tail in ookg)
        if n_ookg != 1:
            kind = "no out-of-graph entity" if n_ookg == 0 else "two out-of-graph entities"
            violations.append(f"aux triplet {_names(vocab, t)} has {kind}")
    for t in test:
        if t.head not in ookg and t.tail not in ookg:
            violations.append(f"test triplet {_names(vocab, t)} has no out-of-graph entity")
    if not aux and test:
        violations.append("aux split is empty but test is not: test entities cannot be estimated")
    if violations:
        raise DatasetValidationError(violations)

    aux_entities = _entities_of(aux)
    dangling = frozenset(e for e in _entities_of(test) if e in ookg and e not in aux_entities)
    if dangling:
        logger.warning("%d out-of-graph test entities have no aux neighbors and will be "
                       "scored pessimistically", len(dangling))

    labeled = task == TASK_CLASSIFICATION
    return BenchmarkSplits(
        task=task, vocab=vocab, train=train, valid=valid, aux=aux, test=test,
        valid_labels=valid_labels if labeled else None,
        test_labels=test_labels if labeled else None,
        ikg_entities=ikg, ookg_entities=ookg, dangling_ookg=dangling)


def _names(vocab: Vocabulary, t: Triplet) -> str:
    return f"({vocab.entity_name(t.head)}, {vocab.relation_name(t.relation)}, {vocab.entity_name(t.tail)})"


def load_splits(train_path, valid_path, aux_path, test_path, task: str = TASK_LP) -> BenchmarkSplits:
    """Load and validate the four split files.

    For the classification task valid/test must carry a fourth 0/1-or-±1 label
    column; for link prediction a label column anywhere is a format error.
    Raises DatasetFormatError on malformed lines and DatasetValidationError
    (listing offending triplets) on structural violations.
    """
    task = _normalize_task(task)
    labeled = task == TASK_CLASSIFICATION
    train_rows = _parse_file(train_path, labeled=False)
    valid_rows = _parse_file(valid_path, labeled=labeled)
    aux_rows = _parse_file(aux_path, labeled=False)
    test_rows = _parse_file(test_path, labeled=labeled)
    return _assemble(task, train_rows, valid_rows, aux_rows, test_rows)


def load_split_dir(directory: str | Path, task: str = TASK_LP) -> BenchmarkSplits:
    """Load a benchmark from a directory with the conventional file names."""
    d = Path(directory)
    return load_splits(d / SPLIT_FILENAMES["train"], d / SPLIT_FILENAMES["valid"],
                       d / SPLIT_FILENAMES["aux"], d / SPLIT_FILENAMES["test"], task=task)


def write_splits(splits: BenchmarkSplits, directory: str | Path) -> dict[str, Path]:
    """Write the four TSV files; byte-deterministic for identical splits."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {name: d / fname for name, fname in SPLIT_FILENAMES.items()}
    _write_file(paths["train"], splits.vocab, splits.train, None)
    _write_file(paths["valid"], splits.vocab, splits.valid, splits.valid_labels)
    _write_file(paths["aux"], splits.vocab, splits.aux, None)
    _write_file(paths["test"], splits.vocab, splits.test, splits.test_labels)
    return paths


def _write_file(path: Path, vocab: Vocabulary, triplets: list[Triplet],
                labels: list[int] | None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for i, t in enumerate(triplets):
            line = f"{vocab.entity_name(t.head)}\t{vocab.relation_name(t.relation)}\t{vocab.entity_name(t.tail)}"
            if labels is not None:
                line += f"\t{labels[i]}"
            f.write(line + "\n")


def build_filter_set(splits: BenchmarkSplits) -> frozenset[Triplet]:
    """All known-true triplets across the four splits (negatives excluded)."""
    positives: list[Triplet] = list(splits.train) + list(splits.aux)
    positives += _positives(splits.valid, splits.valid_labels)
    positives += _positives(splits.test, splits.test_labels)
    return frozenset(positives)


def _positives(triplets: list[Triplet], labels: list[int] | None) -> list[Triplet]:
    if labels is None:
        return list(triplets)
    return [t for t, lab in zip(triplets, labels) if lab == 1]


# ---------------------------------------------------------------------------
# Synthetic split generators
# ---------------------------------------------------------------------------

def generate_synthetic_splits(seed: int, num_entities: int, num_relations: int,
                              num_triplets: int, ookg_fraction: float,
                              *, task: str = TASK_LP,
                              max_aux_per_entity: int = 4,
                              max_test_per_entity: int = 2) -> BenchmarkSplits:
    """Uniform-random splits satisfying every benchmark invariant.

    Purely a loader/validator fixture: the triplets carry no learnable
    structure. Deterministic for a fixed seed. Raises ValueError if the
    parameters cannot yield feasible splits after a few retries.
    """
    task = _normalize_task(task)
    if not 0.0 < ookg_fraction < 1.0:
        raise ValueError("ookg_fraction must be strictly between 0 and 1")
    if num_entities < 4 or num_relations < 1 or num_triplets < 1:
        raise ValueError("need at least 4 entities, 1 relation and 1 triplet")
    last: Exception | None = None
    for attempt in range(3):
        rng = substream(seed, "synthetic", attempt)
        try:
            return _synthetic_once(rng, num_entities, num_relations, num_triplets,
                                   ookg_fraction, task, max_aux_per_entity, max_test_per_entity)
        except _Infeasible as exc:
            last = exc
    raise ValueError(f"could not generate feasible synthetic splits: {last}")


def _synthetic_once(rng, num_entities, num_relations, num_triplets, ookg_fraction,
                    task, max_aux, max_test) -> BenchmarkSplits:
    ents = [f"e{i}" for i in range(num_entities)]
    rels = [f"r{j}" for j in range(num_relations)]
    n_ookg = max(1, int(round(ookg_fraction * num_entities)))
    if num_entities - n_ookg < 2:
        raise _Infeasible("fewer than two in-graph entities")
    order = rng.permutation(num_entities)
    ookg_names = [ents[i] for i in order[:n_ookg]]
    ikg_names = [ents[i] for i in order[n_ookg:]]

    def rand_rel() -> str:
        return rels[int(rng.integers(num_relations))]

    def rand_of(pool: list[str]) -> str:
        return pool[int(rng.integers(len(pool)))]

    train: list[tuple[str, str, str, None]] = []
    seen: set[tuple[str, str, str]] = set()
    if num_triplets >= len(ikg_names):
        chain = rng.permutation(len(ikg_names))
        for a, b in zip(chain[:-1], chain[1:]):
            trip = (ikg_names[a], rand_rel(), ikg_names[b])
            if trip not in seen and len(train) < num_triplets:
                seen.add(trip)
                train.append((*trip, None))
    budget = 50 * num_triplets
    while len(train) < num_triplets and budget > 0:
        budget -= 1
        trip = (rand_of(ikg_names), rand_rel(), rand_of(ikg_names))
        if trip not in seen:
            seen.add(trip)
            train.append((*trip, None))
    if len(train) < num_triplets:
        raise _Infeasible("triplet budget exceeds the distinct-triplet pool")

    covered = sorted({r[0] for r in train} | {r[2] for r in train})
    if len(covered) < 2:
        raise _Infeasible("train covers fewer than two entities")

    labeled = task == TASK_CLASSIFICATION
    positive_rows = set(seen)

    def fresh_negative(h: str, r: str) -> str | None:
        for _ in range(30):
            t2 = rand_of(covered)
            if (h, r, t2) not in positive_rows:
                return t2
        return None

    valid: list[tuple[str, str, str, int | None]] = []
    n_valid = max(1, num_triplets // 10)
    budget = 50 * n_valid
    while sum(1 for row in valid if row[3] in (None, 1)) < n_valid and budget > 0:
        budget -= 1
        trip = (rand_of(covered), rand_rel(), rand_of(covered))
        if trip in positive_rows:
            continue
        positive_rows.add(trip)
        valid.append((*trip, 1 if labeled else None))
        if labeled:
            neg_tail = fresh_negative(trip[0], trip[1])
            if neg_tail is not None:
                valid.append((trip[0], trip[1], neg_tail, -1))
    if not valid:
        raise _Infeasible("no validation triplets could be drawn")

    aux: list[tuple[str, str, str, None]] = []
    aux_rows: set[tuple[str, str, str]] = set()
    per_entity_aux: dict[str, int] = {}
    for e in ookg_names:
        want = int(rng.integers(1, max_aux + 1))
        got = 0
        budget = 50 * want
        while got < want and budget > 0:
            budget -= 1
            partner = rand_of(covered)
            rel = rand_rel()
            trip = (e, rel, partner) if rng.random() < 0.5 else (partner, rel, e)
            if trip not in aux_rows:
                aux_rows.add(trip)
                aux.append((*trip, None))
                got += 1
        if got == 0:
            raise _Infeasible(f"no aux triplet for out-of-graph entity {e}")
        per_entity_aux[e] = got
    positive_rows |= aux_rows

    test: list[tuple[str, str, str, int | None]] = []
    for e in ookg_names:
        want = int(rng.integers(1, max_test + 1))
        got = 0
        budget = 50 * want
        while got < want and budget > 0:
            budget -= 1
            partner = rand_of(covered)
            rel = rand_rel()
            trip = (e, rel, partner) if rng.random() < 0.5 else (partner, rel, e)
            if trip in positive_rows:
                continue
            positive_rows.add(trip)
            test.append((*trip, 1 if labeled else None))
            got += 1
            if labeled:
                # corrupt the in-graph side so the row still touches the OOKG entity
                for _ in range(30):
                    partner2 = rand_of(covered)
                    neg = (e, rel, partner2) if trip[0] == e else (partner2, rel, e)
                    if neg not in positive_rows:
                        test.append((*neg, -1))
                        break
        if got == 0:
            raise _Infeasible(f"no test triplet for out-of-graph entity {e}")

    return _assemble(task, train, valid, aux, test)


def generate_planted_splits(seed: int, num_entities: int = 240, num_relations: int = 8,
                            num_train: int = 700, ookg_fraction: float = 0.1,
                            *, task: str = TASK_LP, valid_fraction: float = 0.1,
                            max_offset: int = 2) -> tuple[BenchmarkSplits, EmbeddingTables]:
    """Splits whose ground-truth TransE embeddings fit every triplet exactly.

    Entities sit on a 2-D integer lattice and relations are distinct nonzero
    integer offsets; a triplet (h, r, t) exists only when point(h) + offset(r)
    == point(t), so the returned ground-truth tables give distance exactly 0
    to every positive and at least 1 (L1) to every corrupted triplet. For the
    classification task, negatives are lattice corruptions and therefore
    linearly separable from positives by a distance threshold.

    Returns the splits together with the ground-truth tables (dim 2, L1),
    indexed by the split vocabulary. OOKG entities keep their true points in
    the returned table, which evaluation never reads for estimation.
    """
    task = _normalize_task(task)
    if not 0.0 < ookg_fraction < 1.0:
        raise ValueError("ookg_fraction must be strictly between 0 and 1")
    side = math.ceil(math.sqrt(num_entities))
    offset_pool = [(a, b) for a in range(-max_offset, max_offset + 1)
                   for b in range(-max_offset, max_offset + 1) if (a, b) != (0, 0)]
    if num_relations > len(offset_pool):
        raise ValueError(f"at most {len(offset_pool)} relations with max_offset={max_offset}")
    last: Exception | None = None
    for attempt in range(3):
        rng = substream(seed, "planted", attempt)
        try:
            return _planted_once(rng, num_entities, num_relations, num_train,
                                 ookg_fraction, task, valid_fraction, side, offset_pool)
        except _Infeasible as exc:
            last = exc
    raise ValueError(f"could not generate feasible planted splits: {last}")


def _planted_once(rng, num_entities, num_relations, num_train, ookg_fraction,
                  task, valid_fraction, side, offset_pool):
    points = [(x, y) for x in range(side) for y in range(side)][:num_entities]
    perm = rng.permutation(num_entities)
    point_of = [points[perm[i]] for i in range(num_entities)]
    point_index = {p: i for i, p in enumerate(point_of)}
    chosen = rng.choice(len(offset_pool), size=num_relations, replace=False)
    offsets = [offset_pool[i] for i in chosen]

    all_triplets: list[tuple[int, int, int]] = []
    incident: dict[int, list[int]] = defaultdict(list)
    for e in range(num_entities):
        px, py = point_of[e]
        for j, (ox, oy) in enumerate(offsets):
            q = (px + ox, py + oy)
            other = point_index.get(q)
            if other is not None:
                idx = len(all_triplets)
                all_triplets.append((e, j, other))
                incident[e].append(idx)
                incident[other].append(idx)

    n_ookg = max(1, int(round(ookg_fraction * num_entities)))
    ookg: set[int] = set()
    locked: set[int] = set()
    for e in rng.permutation(num_entities):
        e = int(e)
        if len(ookg) == n_ookg:
            break
        if e in locked:
            continue
        partners = []
        for idx in incident[e]:
            h, _, t = all_triplets[idx]
            other = t if h == e else h
            if other not in ookg and other != e:
                partners.append(other)
        if len(partners) >= 2:
            ookg.add(e)
            locked.update(partners)
    if len(ookg) < n_ookg:
        raise _Infeasible("could not isolate enough out-of-graph entities")

    ikg_pool = [i for i, (h, _, t) in enumerate(all_triplets)
                if h not in ookg and t not in ookg]
    cross: dict[int, list[int]] = {e: [] for e in ookg}
    for idx, (h, _, t) in enumerate(all_triplets):
        if (h in ookg) != (t in ookg):
            cross[h if h in ookg else t].append(idx)

    # cover-first: keep every in-graph entity reachable from train
    rng.shuffle(ikg_pool)
    covered: set[int] = set()
    train_idx: list[int] = []
    remaining: list[int] = []
    for idx in ikg_pool:
        h, _, t = all_triplets[idx]
        if h not in covered or t not in covered:
            train_idx.append(idx)
            covered.add(h)
            covered.add(t)
        else:
            remaining.append(idx)
    if len(train_idx) > num_train:
        raise _Infeasible("num_train too small to cover the in-graph entities")
    fill = num_train - len(train_idx)
    if fill > len(remaining):
        raise _Infeasible("num_train exceeds the exact-triplet pool")
    train_idx += remaining[:fill]
    leftover = remaining[fill:]

    n_valid = max(1, int(round(valid_fraction * num_train)))
    if len(leftover) < n_valid:
        raise _Infeasible("no exact triplets left for validation")
    valid_idx = leftover[:n_valid]

    labeled = task == TASK_CLASSIFICATION
    covered_at = {point_of[e]: e for e in covered}

    def _adjacent_entity(target: tuple[int, int]) -> int | None:
        """Covered entity at L1 distance exactly 1 from ``target``.

        Keeps every negative at distance exactly 1 while positives sit at 0,
        so accuracy-maximizing thresholds land at 0.5 for every relation and
        classification is perfectly separable by construction.
        """
        tx, ty = target
        options = [covered_at.get(q) for q in
                   ((tx + 1, ty), (tx - 1, ty), (tx, ty + 1), (tx, ty - 1))]
        options = [e for e in options if e is not None]
        if not options:
            return None
        return options[int(rng.integers(len(options)))]

    def corrupt_tail(h: int, j: int) -> int | None:
        px, py = point_of[h]
        ox, oy = offsets[j]
        return _adjacent_entity((px + ox, py + oy))

    def corrupt_head(j: int, t: int) -> int | None:
        tx, ty = point_of[t]
        ox, oy = offsets[j]
        return _adjacent_entity((tx - ox, ty - oy))

    name = [f"e{i}" for i in range(num_entities)]
    rname = [f"r{j}" for j in range(num_relations)]

    def row(idx: int, label: int | None = None):
        h, j, t = all_triplets[idx]
        return (name[h], rname[j], name[t], label)

    train_rows = [row(i) for i in train_idx]
    valid_rows = []
    n_valid_neg = 0
    for i in valid_idx:
        h, j, t = all_triplets[i]
        valid_rows.append(row(i, 1 if labeled else None))
        if labeled:
            neg = corrupt_tail(h, j)
            if neg is not None:
                valid_rows.append((name[h], rname[j], name[neg], -1))
                n_valid_neg += 1
    if labeled and n_valid_neg == 0:
        raise _Infeasible("no validation negatives could be planted")

    aux_rows: list[tuple[str, str, str, int | None]] = []
    test_rows: list[tuple[str, str, str, int | None]] = []
    for e in sorted(ookg):
        usable = [i for i in cross[e]
                  if (all_triplets[i][0] if all_triplets[i][2] == e else all_triplets[i][2]) in covered]
        if len(usable) < 2:
            raise _Infeasible(f"out-of-graph entity {e} has too few usable edges")
        rng.shuffle(usable)
        n_test = 1 if len(usable) < 4 else 2
        for i in usable[:n_test]:
            h, j, t = all_triplets[i]
            test_rows.append(row(i, 1 if labeled else None))
            if labeled:
                if h == e:  # corrupt the in-graph tail, keep the OOKG head
                    neg = corrupt_tail(h, j)
                    if neg is not None:
                        test_rows.append((name[h], rname[j], name[neg], -1))
                else:
                    neg = corrupt_head(j, t)
                    if neg is not None:
                        test_rows.append((name[neg], rname[j], name[t], -1))
        for i in usable[n_test:]:
            aux_rows.append(row(i))

    splits = _assemble(task, train_rows, valid_rows, aux_rows, test_rows)
    entity_table = np.zeros((splits.vocab.num_entities, 2))
    for eid, ename in enumerate(splits.vocab.entity_names):
        entity_table[eid] = point_of[int(ename[1:])]
    relation_table = np.zeros((splits.vocab.num_relations, 2))
    for rid, rn in enumerate(splits.vocab.relation_names):
        relation_table[rid] = offsets[int(rn[1:])]
    tables = EmbeddingTables(TRANSE, 2, 1, entity_table, relation_table)
    return splits, tables


def generate_trainable_splits(seed: int, num_entities: int = 500, num_relations: int = 10,
                              num_train: int = 5000, ookg_fraction: float = 0.1,
                              *, task: str = TASK_LP, latent_dim: int = 4,
                              near_decay: float = 0.35, corrupt_fraction: float = 0.05,
                              skew: float = 0.8, cold_fraction: float = 0.35,
                              cold_degree: int = 2, cold_noise: float = 0.5,
                              aux_min: int = 3, aux_max: int = 8,
                              test_min: int = 1, test_max: int = 2,
                              valid_fraction: float = 0.1) -> tuple[BenchmarkSplits, EmbeddingTables]:
    """Noisy translational benchmark for end-to-end training experiments.

    Entities get latent points, relations latent offsets, and a triplet's
    missing side is drawn near point +- offset: among the nearest entities of
    the allowed pool with geometrically decaying rank probabilities (ratio
    ``near_decay``), plus a uniformly random entity with probability
    ``corrupt_fraction``. The structure is learnable by a translational model
    but never exactly satisfiable.

    A ``cold_fraction`` of the in-graph entities receives only ``cold_degree``
    training edges, drawn with an elevated corruption rate ``cold_noise``: a
    sparsely observed entity whose few edges are partly wrong ends up badly
    placed, while well-connected entities average their noise away. Auxiliary
    neighborhoods draw from the full entity pool (cold included) but test
    answers stay warm, so candidates produced via cold sources are genuinely
    unreliable, which is the signal degree-based weighting uses.
    Well-connected heads are additionally sampled with a Zipf-like ``skew``.

    Returns the splits plus the generating latent geometry packed as TransE
    tables (useful for demos; training normally starts from random tables).
    """
    task = _normalize_task(task)
    if not 0.0 < ookg_fraction < 1.0:
        raise ValueError("ookg_fraction must be strictly between 0 and 1")
    if not 0.0 < near_decay < 1.0:
        raise ValueError("near_decay must be strictly between 0 and 1")
    if not 0.0 <= cold_fraction < 1.0 or cold_degree < 1 or not 0.0 <= cold_noise <= 1.0:
        raise ValueError("cold_fraction in [0, 1), cold_degree >= 1, cold_noise in [0, 1]")
    last: Exception | None = None
    for attempt in range(3):
        rng = substream(seed, "trainable", attempt)
        try:
            return _trainable_once(rng, num_entities, num_relations, num_train, ookg_fraction,
                                   task, latent_dim, near_decay, corrupt_fraction, skew,
                                   cold_fraction, cold_degree, cold_noise,
                                   aux_min, aux_max, test_min, test_max, valid_fraction)
        except _Infeasible as exc:
            last = exc
    raise ValueError(f"could not generate feasible trainable splits: {last}")


def _trainable_once(rng, num_entities, num_relations, num_train, ookg_fraction, task,
                    latent_dim, near_decay, corrupt_fraction, skew, cold_fraction,
                    cold_degree, cold_noise, aux_min, aux_max, test_min, test_max,
                    valid_fraction):
    points = rng.uniform(0.0, 1.0, size=(num_entities, latent_dim))
    offsets = rng.uniform(-0.4, 0.4, size=(num_relations, latent_dim))

    n_ookg = max(1, int(round(ookg_fraction * num_entities)))
    if num_entities - n_ookg < 4:
        raise _Infeasible("fewer than four in-graph entities")
    perm = rng.permutation(num_entities)
    ookg = sorted(int(e) for e in perm[:n_ookg])
    ikg = sorted(int(e) for e in perm[n_ookg:])
    ikg_perm = rng.permutation(len(ikg))
    n_cold = int(round(cold_fraction * len(ikg)))
    cold = sorted(ikg[i] for i in ikg_perm[:n_cold])
    warm = sorted(ikg[i] for i in ikg_perm[n_cold:])
    if len(warm) < 4:
        raise _Infeasible("fewer than four well-connected entities")
    cold_set = set(cold)

    top_k = 8

    def build_topk(pool: list[int]) -> tuple[np.ndarray, np.ndarray]:
        """Nearest pool entities per (entity, relation, direction), computed once."""
        pool_arr = np.array(pool)
        pool_pts = points[pool_arr]
        kk = min(top_k, len(pool))
        tail = np.empty((num_entities, num_relations, kk), dtype=np.int64)
        head = np.empty((num_entities, num_relations, kk), dtype=np.int64)
        rows = np.arange(num_entities)[:, None]
        for rel in range(num_relations):
            for table, sign in ((tail, 1.0), (head, -1.0)):
                targets = points + sign * offsets[rel]
                dists = np.abs(targets[:, None, :] - pool_pts[None, :, :]).sum(axis=2)
                if kk < len(pool):
                    part = np.argpartition(dists, kk, axis=1)[:, :kk]
                else:
                    part = np.broadcast_to(np.arange(kk), (num_entities, kk))
                order = np.argsort(dists[rows, part], axis=1)
                table[:, rel, :] = pool_arr[part[rows, order]]
        return tail, head

    tail_warm, head_warm = build_topk(warm)
    tail_all, head_all = build_topk(ikg)

    # rank-decay over the top-k keeps the structure strong but the pool wide
    decay = np.cumsum([(1.0 - near_decay) * near_decay ** k for k in range(top_k)])
    decay /= decay[-1]

    def draw(cands_row: np.ndarray, pool_list: list[int], self_id: int) -> int | None:
        if rng.random() < corrupt_fraction:
            c = pool_list[int(rng.integers(len(pool_list)))]
            return None if c == self_id else c
        walk = [int(c) for c in cands_row if c != self_id]
        if not walk:
            return None
        k = int(np.searchsorted(decay, rng.random(), side="right"))
        return walk[min(k, len(walk) - 1)]

    def draw_uniform(pool_list: list[int]) -> int:
        return pool_list[int(rng.integers(len(pool_list)))]

    def incident(e: int, tail_tab: np.ndarray, head_tab: np.ndarray,
                 pool_list: list[int]) -> tuple[int, int, int] | None:
        rel = int(rng.integers(num_relations))
        if rng.random() < 0.5:
            other = draw(tail_tab[e, rel], pool_list, e)
            return None if other is None else (e, rel, other)
        other = draw(head_tab[e, rel], pool_list, e)
        return None if other is None else (other, rel, e)

    train: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()

    def add_train(trip) -> bool:
        if trip is None or trip[0] == trip[2] or trip in seen:
            return False
        seen.add(trip)
        train.append(trip)
        return True

    # seeding: every in-graph entity appears; cold ones get only cold_degree
    # edges, and those edges are wrong with probability cold_noise
    for e in ikg:
        is_cold = e in cold_set
        want = cold_degree if is_cold else 1
        made = 0
        for _ in range(60):
            if made >= want:
                break
            if is_cold and rng.random() < cold_noise:
                rel = int(rng.integers(num_relations))
                other = draw_uniform(warm)
                trip = (e, rel, other) if rng.random() < 0.5 else (other, rel, e)
            else:
                trip = incident(e, tail_warm, head_warm, warm)
            if add_train(trip):
                made += 1
        if made == 0:
            raise _Infeasible(f"could not seed entity {e}")
    if len(train) > num_train:
        raise _Infeasible("num_train too small to seed every in-graph entity")

    # fill: warm-to-warm edges with Zipf-skewed head sampling
    rank = rng.permutation(len(warm)).astype(np.float64)
    head_w = (rank + 1.0) ** (-skew)
    head_w /= head_w.sum()
    warm_arr = np.array(warm)
    head_stream = warm_arr[rng.choice(len(warm), size=6 * num_train, p=head_w)]
    for h in head_stream:
        if len(train) >= num_train:
            break
        h = int(h)
        rel = int(rng.integers(num_relations))
        add_train(None if (t := draw(tail_warm[h, rel], warm, h)) is None else (h, rel, t))
    if len(train) < num_train:
        raise _Infeasible("distinct-triplet pool exhausted")

    labeled = task == TASK_CLASSIFICATION
    positive = set(seen)

    valid: list[tuple[int, int, int, int | None]] = []
    n_valid = max(1, int(round(valid_fraction * num_train)))
    budget = 60 * n_valid
    got = 0
    while got < n_valid and budget > 0:
        budget -= 1
        h = draw_uniform(warm)
        rel = int(rng.integers(num_relations))
        t = draw(tail_warm[h, rel], warm, h)
        trip = (h, rel, t)
        if t is None or trip in positive:
            continue
        positive.add(trip)
        valid.append((*trip, 1 if labeled else None))
        got += 1
        if labeled:
            for _ in range(30):
                t2 = draw_uniform(ikg)
                if (h, rel, t2) not in positive and t2 != h:
                    valid.append((h, rel, t2, -1))
                    break
    if got == 0:
        raise _Infeasible("no validation triplets could be drawn")

    aux: list[tuple[int, int, int, None]] = []
    test: list[tuple[int, int, int, int | None]] = []
    for e in ookg:
        used: set[tuple[int, int, int]] = set()
        want_aux = int(rng.integers(aux_min, aux_max + 1))
        budget = 60 * want_aux
        while len(used) < want_aux and budget > 0:
            budget -= 1
            trip = incident(e, tail_all, head_all, ikg)  # cold sources allowed
            if trip is not None and trip not in used:
                used.add(trip)
                aux.append((*trip, None))
        if not used:
            raise _Infeasible(f"no aux edge for out-of-graph entity {e}")
        positive |= used

        want_test = int(rng.integers(test_min, test_max + 1))
        got = 0
        budget = 60 * want_test
        while got < want_test and budget > 0:
            budget -= 1
            trip = incident(e, tail_warm, head_warm, warm)  # answers stay warm
            if trip is None or trip in positive:
                continue
            positive.add(trip)
            test.append((*trip, 1 if labeled else None))
            got += 1
            if labeled:
                h, rel, t = trip
                for _ in range(30):
                    sub = draw_uniform(ikg)
                    neg = (h, rel, sub) if h == e else (sub, rel, t)
                    if neg not in positive and neg[0] != neg[2]:
                        test.append((*neg, -1))
                        break
        if got == 0:
            raise _Infeasible(f"no test edge for out-of-graph entity {e}")

    name = [f"e{i}" for i in range(num_entities)]
    rname = [f"r{j}" for j in range(num_relations)]

    def rows(items):
        return [(name[h], rname[r], name[t], lab) for h, r, t, lab in items]

    splits = _assemble(task,
                       rows([(h, r, t, None) for h, r, t in train]),
                       rows(valid), rows(aux), rows(test))
    entity_table = np.zeros((splits.vocab.num_entities, latent_dim))
    for eid, ename in enumerate(splits.vocab.entity_names):
        entity_table[eid] = points[int(ename[1:])]
    relation_table = np.zeros((splits.vocab.num_relations, latent_dim))
    for rid, rn in enumerate(splits.vocab.relation_names):
        relation_table[rid] = offsets[int(rn[1:])]
    tables = EmbeddingTables(TRANSE, latent_dim, 1, entity_table, relation_table)
    return splits, tables
