"""Parameter tables and distance/score functions for TransE and RotatE.

TransE places entities and relations in R^d and scores a triplet by the norm
of h + r - t. RotatE places entities in C^d and relations on the unit circle
(stored as phase angles), scoring by the norm of h o r - t where o is the
element-wise complex product. Entity rows for RotatE are stored as 2d floats
with interleaved real/imaginary parts so the table can be reinterpreted as a
complex matrix without copying.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Vocabulary
from .seeding import substream

TRANSE = "transe"
ROTATE = "rotate"
MODELS = (TRANSE, ROTATE)

_MAGIC = b"IKGE"
_VERSION = 1
_HEADER = struct.Struct("<4sHBBIIIQ")  # magic, version, model, norm, dim, n_ent, n_rel, seed


@dataclass
class EmbeddingTables:
    """Entity and relation parameter arrays for one model.

    ``entity`` is (num_entities, dim) for TransE and (num_entities, 2*dim)
    for RotatE (interleaved re/im). ``relation`` is (num_relations, dim):
    free vectors for TransE, phase angles for RotatE.
    """

    model: str
    dim: int
    norm_order: int
    entity: np.ndarray
    relation: np.ndarray

    @property
    def num_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def num_relations(self) -> int:
        return self.relation.shape[0]

    def entity_matrix(self) -> np.ndarray:
        """Entity table as (n, dim): real for TransE, complex view for RotatE."""
        if self.model == ROTATE:
            return self.entity.view(np.complex128)
        return self.entity

    def entity_vec(self, eid: int) -> np.ndarray:
        return self.entity_matrix()[eid]

    def relation_vec(self, rid: int) -> np.ndarray:
        """Relation as used by the distance: TransE row, or RotatE unit complex."""
        if self.model == ROTATE:
            return np.exp(1j * self.relation[rid])
        return self.relation[rid]

    def copy(self) -> "EmbeddingTables":
        return EmbeddingTables(self.model, self.dim, self.norm_order,
                               self.entity.copy(), self.relation.copy())


def init_tables(seed: int, model: str, dim: int, num_entities: int, num_relations: int,
                *, norm_order: int = 1, margin: float = 1.0) -> EmbeddingTables:
    """Uniformly initialized tables, deterministic for a given seed.

    Real parameters (and RotatE re/im parts) are drawn from
    [-margin/dim, margin/dim); RotatE phases from [-pi, pi).
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}, expected one of {MODELS}")
    if dim <= 0 or num_entities <= 0 or num_relations <= 0:
        raise ValueError("dim, num_entities and num_relations must be positive")
    if norm_order not in (1, 2):
        raise ValueError("norm_order must be 1 or 2")
    rng = substream(seed, "init")
    bound = margin / dim
    ent_width = 2 * dim if model == ROTATE else dim
    entity = rng.uniform(-bound, bound, size=(num_entities, ent_width))
    if model == ROTATE:
        relation = rng.uniform(-np.pi, np.pi, size=(num_relations, dim))
    else:
        relation = rng.uniform(-bound, bound, size=(num_relations, dim))
    return EmbeddingTables(model, dim, norm_order, entity, relation)


def translation_distance(model: str, norm_order: int, h: np.ndarray, r: np.ndarray,
                         t: np.ndarray) -> np.ndarray:
    """Distance of broadcastable stacks of raw vectors, reduced over the last axis.

    For RotatE the inputs are complex and the L1/L2 norms aggregate the
    element moduli; ``r`` must already be realized as unit complex numbers.
    """
    if model == ROTATE:
        u = h * r - t
    else:
        u = h + r - t
    a = np.abs(u)
    if norm_order == 1:
        return a.sum(axis=-1)
    return np.sqrt((a * a).sum(axis=-1))


def _resolve_entity(tables: EmbeddingTables, x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return tables.entity_vec(int(x))
    vec = np.asarray(x)
    if tables.model == ROTATE:
        if np.iscomplexobj(vec):
            if vec.shape[-1] != tables.dim:
                raise ValueError(f"expected complex entity vector of length {tables.dim}")
            return vec
        if vec.shape[-1] == 2 * tables.dim:
            return np.ascontiguousarray(vec, dtype=np.float64).view(np.complex128)
        raise ValueError(f"expected entity vector of length {tables.dim} (complex) "
                         f"or {2 * tables.dim} (interleaved floats)")
    if vec.shape[-1] != tables.dim:
        raise ValueError(f"expected entity vector of length {tables.dim}")
    return vec


def _resolve_relation(tables: EmbeddingTables, x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return tables.relation_vec(int(x))
    vec = np.asarray(x)
    if vec.shape[-1] != tables.dim:
        raise ValueError(f"expected relation vector of length {tables.dim}")
    if tables.model == ROTATE and not np.iscomplexobj(vec):
        return np.exp(1j * vec)  # phases given
    return vec


def distance(tables: EmbeddingTables, head, relation, tail) -> float:
    """Triplet distance; arguments are ids or raw vectors (estimated embeddings)."""
    h = _resolve_entity(tables, head)
    r = _resolve_relation(tables, relation)
    t = _resolve_entity(tables, tail)
    d = float(translation_distance(tables.model, tables.norm_order, h, r, t))
    if not np.isfinite(d):
        raise ValueError("non-finite distance (check inputs for nan/inf)")
    return d


def score(tables: EmbeddingTables, head, relation, tail) -> float:
    """Triplet plausibility, the negated distance."""
    return -distance(tables, head, relation, tail)


def save_checkpoint(tables: EmbeddingTables, path: str | Path, seed: int = 0) -> None:
    """Binary checkpoint: fixed header followed by float32 little-endian tables."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    model_code = MODELS.index(tables.model)
    header = _HEADER.pack(_MAGIC, _VERSION, model_code, tables.norm_order, tables.dim,
                          tables.num_entities, tables.num_relations, seed)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(tables.entity, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(tables.relation, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[EmbeddingTables, int]:
    """Inverse of :func:`save_checkpoint`; returns the tables and the stored seed."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size or raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not an embedding checkpoint")
    magic, version, model_code, norm_order, dim, n_ent, n_rel, seed = _HEADER.unpack_from(raw)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    model = MODELS[model_code]
    ent_width = 2 * dim if model == ROTATE else dim
    offset = _HEADER.size
    ent_bytes = 4 * n_ent * ent_width
    rel_bytes = 4 * n_rel * dim
    if len(raw) != offset + ent_bytes + rel_bytes:
        raise ValueError(f"{path}: truncated checkpoint")
    entity = np.frombuffer(raw, dtype="<f4", count=n_ent * ent_width, offset=offset)
    relation = np.frombuffer(raw, dtype="<f4", count=n_rel * dim, offset=offset + ent_bytes)
    entity = entity.reshape(n_ent, ent_width).astype(np.float64)
    relation = relation.reshape(n_rel, dim).astype(np.float64)
    if not (np.isfinite(entity).all() and np.isfinite(relation).all()):
        raise ValueError(f"{path}: checkpoint contains non-finite values")
    return EmbeddingTables(model, dim, norm_order, entity, relation), seed


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    payload = {"entities": vocab.entity_names, "relations": vocab.relation_names}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False)
        f.write("\n")


def load_vocabulary(path: str | Path) -> Vocabulary:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    vocab = Vocabulary()
    for name in payload["entities"]:
        vocab.add_entity(name)
    for name in payload["relations"]:
        vocab.add_relation(name)
    return vocab
