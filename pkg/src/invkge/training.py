"""Pretraining with self-adversarial negative sampling and Adam.

The per-positive loss is

    L = -log sig(margin - D(h, r, t))
        - sum_i p_i * log sig(D(h'_i, r, t'_i) - margin)

where the p_i soft-weight the n negatives by their current score,
p_i proportional to exp(temperature * -D_i), normalized over the n negatives
of the same positive. The p_i are treated as constants: no gradient flows
through them. Batches are averaged; gradients are accumulated sparsely per
touched embedding row and applied with a lazy Adam update (moments of
untouched rows are left alone).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .core import Triplet
from .datasets import BenchmarkSplits
from .models import MODELS, ROTATE, TRANSE, EmbeddingTables, init_tables
from .seeding import substream

logger = logging.getLogger(__name__)

# Pretraining hyper-parameters used for the two benchmark families.
REFERENCE_CONFIGS = {
    "fb15k": dict(dim=1000, margin=24.0, temperature=1.0, num_negatives=256,
                  l2=0.0, batch_size=1024, learning_rate=1e-3, steps=100_000),
    "wn11": dict(dim=300, margin=0.5, temperature=1.0, num_negatives=128,
                 l2=1e-5, batch_size=1024, learning_rate=1e-3, steps=20_000),
}


class TrainingDivergedError(RuntimeError):
    """Raised when the loss becomes non-finite; message carries the step."""


@dataclass
class TrainConfig:
    model: str = TRANSE
    dim: int = 200
    margin: float = 12.0
    temperature: float = 1.0
    num_negatives: int = 64
    l2: float = 0.0
    batch_size: int = 1024
    learning_rate: float = 1e-3
    steps: int = 10_000
    seed: int = 0
    norm_order: int = 1
    filter_false_negatives: bool = False
    log_every: int = 100

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.dim <= 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("dim, batch_size and learning_rate must be positive")
        if self.num_negatives < 1:
            raise ValueError("need at least one negative sample")
        if self.steps < 0 or self.l2 < 0 or self.temperature < 0 or self.margin <= 0:
            raise ValueError("steps/l2/temperature must be nonnegative, margin positive")
        if self.norm_order not in (1, 2):
            raise ValueError("norm_order must be 1 or 2")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def with_overrides(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


class Adam:
    """Adam with lazy sparse row updates.

    Moment estimates exist per parameter table and are only decayed/updated
    for rows that received a gradient this step, the usual treatment for
    embedding tables. A step with an all-zero gradient on fresh state leaves
    the parameters bit-identical.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def register(self, name: str, shape: tuple[int, ...]) -> None:
        self.m[name] = np.zeros(shape)
        self.v[name] = np.zeros(shape)

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
        """Apply one update; ``grads[name]`` is (row_ids, row_gradients)."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, (ids, g) in grads.items():
            if len(ids) == 0:
                continue
            m = self.m[name][ids]
            v = self.v[name][ids]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self.m[name][ids] = m
            self.v[name][ids] = v
            params[name][ids] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _interleave(z: np.ndarray) -> np.ndarray:
    """Complex (..., d) -> real (..., 2d) with re/im interleaved (table layout)."""
    return np.ascontiguousarray(z).view(np.float64)


def _scatter_sum(ids: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum gradient rows per unique id (sort + reduceat, faster than np.add.at)."""
    uids, inv = np.unique(ids, return_inverse=True)
    order = np.argsort(inv, kind="stable")
    starts = np.searchsorted(inv[order], np.arange(len(uids)))
    return uids, np.add.reduceat(rows[order], starts, axis=0)


def sample_negatives(rng: np.random.Generator, triplet: Triplet, n: int,
                     num_entities: int) -> list[Triplet]:
    """n corruptions of ``triplet``, each replacing exactly one entity slot.

    The slot (head or tail) is chosen uniformly per negative and the
    replacement is uniform over the other num_entities - 1 entities, so a
    negative never equals the positive.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if num_entities < 2:
        raise ValueError("corruption needs at least two entities")
    out = []
    for _ in range(n):
        corrupt_head = rng.random() < 0.5
        original = triplet.head if corrupt_head else triplet.tail
        repl = int(rng.integers(num_entities - 1))
        if repl >= original:
            repl += 1
        if corrupt_head:
            out.append(Triplet(repl, triplet.relation, triplet.tail))
        else:
            out.append(Triplet(triplet.head, triplet.relation, repl))
    return out


def _sample_negative_batch(rng: np.random.Generator, batch: np.ndarray, n: int,
                           num_entities: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized corruption: returns (replacement ids, head-corrupted mask), both (B, n)."""
    bsz = batch.shape[0]
    is_head = rng.random((bsz, n)) < 0.5
    original = np.where(is_head, batch[:, 0:1], batch[:, 2:3])
    repl = rng.integers(0, num_entities - 1, size=(bsz, n))
    repl = repl + (repl >= original)
    return repl, is_head


def _batch_loss_grads(tables: EmbeddingTables, pos: np.ndarray, neg_entity: np.ndarray,
                      neg_is_head: np.ndarray, margin: float, temperature: float,
                      weights: np.ndarray | None = None):
    """Mean self-adversarial loss of a batch plus sparse gradients.

    Returns (loss, ent_ids, ent_grads, rel_ids, rel_grads, weights). Passing
    ``weights`` freezes the adversarial weights instead of recomputing them
    from the current scores, which is also how the gradient treats them.
    """
    bsz, n = neg_entity.shape
    l1 = tables.norm_order == 1
    heads, rels, tails = pos[:, 0], pos[:, 1], pos[:, 2]

    if tables.model == ROTATE:
        ent = tables.entity_matrix()
        h = ent[heads]
        t = ent[tails]
        rot = np.exp(1j * tables.relation[rels])
        hr = h * rot
        z_pos = hr - t
        a_pos = np.abs(z_pos)
        if l1:
            d_pos = a_pos.sum(axis=1)
            g_pos = np.where(a_pos > 0, z_pos / np.where(a_pos > 0, a_pos, 1.0), 0.0)
        else:
            d_pos = np.sqrt((a_pos * a_pos).sum(axis=1))
            safe = np.where(d_pos > 0, d_pos, 1.0)
            g_pos = z_pos / safe[:, None] * (d_pos > 0)[:, None]

        e_neg = ent[neg_entity]                                   # (B, n, d)
        h_neg = np.where(neg_is_head[:, :, None], e_neg, h[:, None, :])
        t_neg = np.where(neg_is_head[:, :, None], t[:, None, :], e_neg)
        hr_neg = h_neg * rot[:, None, :]
        z_neg = hr_neg - t_neg
        a_neg = np.abs(z_neg)
        if l1:
            d_neg = a_neg.sum(axis=2)
            g_neg = np.where(a_neg > 0, z_neg / np.where(a_neg > 0, a_neg, 1.0), 0.0)
        else:
            d_neg = np.sqrt((a_neg * a_neg).sum(axis=2))
            safe = np.where(d_neg > 0, d_neg, 1.0)
            g_neg = z_neg / safe[:, :, None] * (d_neg > 0)[:, :, None]
    else:
        ent = tables.entity
        h = ent[heads]
        t = ent[tails]
        rv = tables.relation[rels]
        u_pos = h + rv - t
        if l1:
            d_pos = np.abs(u_pos).sum(axis=1)
            g_pos = np.sign(u_pos)
        else:
            d_pos = np.sqrt((u_pos * u_pos).sum(axis=1))
            safe = np.where(d_pos > 0, d_pos, 1.0)
            g_pos = u_pos / safe[:, None] * (d_pos > 0)[:, None]

        # both corruptions share the residual e' - q with q = t - r or h + r;
        # the corrupted-slot gradient is sign(w) in either case
        e_neg = ent[neg_entity]
        q = np.where(neg_is_head[:, :, None], (t - rv)[:, None, :], (h + rv)[:, None, :])
        w_res = e_neg - q
        if l1:
            d_neg = np.abs(w_res).sum(axis=2)
            g_neg = np.sign(w_res)
        else:
            d_neg = np.sqrt((w_res * w_res).sum(axis=2))
            safe = np.where(d_neg > 0, d_neg, 1.0)
            g_neg = w_res / safe[:, :, None] * (d_neg > 0)[:, :, None]

    if weights is None:
        logits = -temperature * d_neg
        logits = logits - logits.max(axis=1, keepdims=True)
        weights = np.exp(logits)
        weights = weights / weights.sum(axis=1, keepdims=True)

    loss = float(np.mean(-_log_sigmoid(margin - d_pos)
                         - (weights * _log_sigmoid(d_neg - margin)).sum(axis=1)))

    c_pos = _sigmoid(d_pos - margin) / bsz                         # (B,)
    c_neg = -(weights * _sigmoid(margin - d_neg)) / bsz            # (B, n)

    if tables.model == ROTATE:
        dh_pos = _interleave(g_pos * np.conj(rot))
        dt_pos = _interleave(-g_pos)
        dth_pos = np.imag(g_pos * np.conj(hr))                     # phase gradient
        dh_neg = g_neg * np.conj(rot[:, None, :])
        dt_neg = -g_neg
        dth_neg = np.imag(g_neg * np.conj(hr_neg))
        d_corrupt = _interleave(np.where(neg_is_head[:, :, None], dh_neg, dt_neg))
        d_shared = _interleave(np.where(neg_is_head[:, :, None], dt_neg, dh_neg))
        width = 2 * tables.dim
    else:
        dh_pos = g_pos
        dt_pos = -g_pos
        dth_pos = g_pos
        d_corrupt = g_neg
        d_shared = -g_neg
        dth_neg = np.where(neg_is_head[:, :, None], g_neg, -g_neg)
        width = tables.dim

    shared_ids = np.where(neg_is_head, tails[:, None], heads[:, None])
    ent_ids_all = np.concatenate([heads, tails, neg_entity.ravel(), shared_ids.ravel()])
    ent_grads_all = np.concatenate([
        c_pos[:, None] * dh_pos,
        c_pos[:, None] * dt_pos,
        (c_neg[:, :, None] * d_corrupt).reshape(bsz * n, width),
        (c_neg[:, :, None] * d_shared).reshape(bsz * n, width),
    ])
    ent_ids, ent_grads = _scatter_sum(ent_ids_all, ent_grads_all)

    rel_rows = c_pos[:, None] * dth_pos + (c_neg[:, :, None] * dth_neg).sum(axis=1)
    rel_ids, rel_grads = _scatter_sum(rels, rel_rows)

    return loss, ent_ids, ent_grads, rel_ids, rel_grads, weights


def self_adversarial_loss(tables: EmbeddingTables, positive: Triplet,
                          negatives: list[Triplet], margin: float, temperature: float,
                          weights: np.ndarray | None = None):
    """Loss and sparse gradients for one positive and its negative samples.

    Each negative must share the relation and differ from the positive in
    exactly one entity slot. Returns (loss, grads, weights) where grads maps
    ("entity", id) / ("relation", id) to the gradient of the loss w.r.t. that
    stored row (interleaved re/im for RotatE entities, phases for RotatE
    relations). ``weights`` echoes the adversarial weights used, so callers
    can re-evaluate the loss with them frozen.
    """
    neg_entity = np.empty((1, len(negatives)), dtype=np.int64)
    neg_is_head = np.empty((1, len(negatives)), dtype=bool)
    for i, neg in enumerate(negatives):
        if neg.relation != positive.relation:
            raise ValueError(f"negative {neg} changes the relation")
        head_differs = neg.head != positive.head
        tail_differs = neg.tail != positive.tail
        if head_differs == tail_differs:
            raise ValueError(f"negative {neg} must differ from {positive} in exactly one slot")
        neg_is_head[0, i] = head_differs
        neg_entity[0, i] = neg.head if head_differs else neg.tail
    pos = np.array([positive], dtype=np.int64)
    w = None if weights is None else np.asarray(weights, dtype=np.float64).reshape(1, -1)
    loss, ent_ids, ent_grads, rel_ids, rel_grads, w_out = _batch_loss_grads(
        tables, pos, neg_entity, neg_is_head, margin, temperature, w)
    if not np.isfinite(loss):
        raise ValueError("non-finite loss (check inputs)")
    grads = {("entity", int(e)): ent_grads[i] for i, e in enumerate(ent_ids)}
    grads.update({("relation", int(r)): rel_grads[i] for i, r in enumerate(rel_ids)})
    return loss, grads, w_out[0]


def train(splits: BenchmarkSplits, config: TrainConfig) -> tuple[EmbeddingTables, list[tuple[int, float]]]:
    """Pretrain tables on the training split; returns tables and a loss trace.

    Minibatches are drawn by repeated shuffled passes over the training set;
    ``config.steps`` counts minibatch updates, not epochs. Deterministic for
    a fixed seed (serial execution). Raises TrainingDivergedError if the loss
    leaves the finite range.
    """
    if not splits.train:
        raise ValueError("training split is empty")
    num_entities = splits.vocab.num_entities
    num_relations = splits.vocab.num_relations
    tables = init_tables(config.seed, config.model, config.dim, num_entities, num_relations,
                         norm_order=config.norm_order, margin=config.margin)
    trace: list[tuple[int, float]] = []
    if config.steps == 0:
        return tables, trace

    rng_shuffle = substream(config.seed, "shuffle")
    rng_neg = substream(config.seed, "negatives")
    data = np.array(splits.train, dtype=np.int64)
    train_set = frozenset(splits.train) if config.filter_false_negatives else None

    params = {"entity": tables.entity, "relation": tables.relation}
    opt = Adam(lr=config.learning_rate)
    opt.register("entity", tables.entity.shape)
    opt.register("relation", tables.relation.shape)

    order = rng_shuffle.permutation(len(data))
    ptr = 0

    def next_batch() -> np.ndarray:
        nonlocal order, ptr
        take = []
        need = config.batch_size
        while need > 0:
            if ptr >= len(order):
                order = rng_shuffle.permutation(len(data))
                ptr = 0
            k = min(need, len(order) - ptr)
            take.append(order[ptr:ptr + k])
            ptr += k
            need -= k
        return data[np.concatenate(take)] if len(take) > 1 else data[take[0]]

    for step in range(1, config.steps + 1):
        batch = next_batch()
        neg_entity, neg_is_head = _sample_negative_batch(
            rng_neg, batch, config.num_negatives, num_entities)
        if train_set is not None:
            _resample_true_negatives(rng_neg, batch, neg_entity, neg_is_head,
                                     num_entities, train_set)
        loss, ent_ids, ent_grads, rel_ids, rel_grads, _ = _batch_loss_grads(
            tables, batch, neg_entity, neg_is_head, config.margin, config.temperature)
        if config.l2 > 0.0:
            ent_rows = tables.entity[ent_ids]
            rel_rows = tables.relation[rel_ids]
            loss += config.l2 * (float((ent_rows * ent_rows).sum())
                                 + float((rel_rows * rel_rows).sum()))
            ent_grads = ent_grads + 2.0 * config.l2 * ent_rows
            rel_grads = rel_grads + 2.0 * config.l2 * rel_rows
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at step {step}")
        opt.step(params, {"entity": (ent_ids, ent_grads), "relation": (rel_ids, rel_grads)})
        if step == 1 or step % config.log_every == 0 or step == config.steps:
            trace.append((step, loss))
    logger.info("training finished: %d steps, final loss %.6f", config.steps, trace[-1][1])
    return tables, trace


def _resample_true_negatives(rng, batch, neg_entity, neg_is_head, num_entities, train_set):
    """Redraw negatives that happen to be true training triplets (few passes)."""
    for _ in range(10):
        dirty = []
        for b in range(batch.shape[0]):
            h, r, t = batch[b]
            for j in range(neg_entity.shape[1]):
                e = neg_entity[b, j]
                trip = (e, r, t) if neg_is_head[b, j] else (h, r, e)
                if Triplet(*map(int, trip)) in train_set:
                    dirty.append((b, j))
        if not dirty:
            return
        for b, j in dirty:
            original = batch[b, 0] if neg_is_head[b, j] else batch[b, 2]
            repl = int(rng.integers(num_entities - 1))
            if repl >= original:
                repl += 1
            neg_entity[b, j] = repl
