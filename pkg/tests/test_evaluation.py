import numpy as np
import pytest

from invkge.core import AS_HEAD, AS_TAIL, Triplet
from invkge.datasets import (BenchmarkSplits, generate_planted_splits,
                             generate_trainable_splits)
from invkge.evaluation import (EvalReport, FilterIndex, LpQuery, ablate,
                               filtered_rank, format_report, link_prediction,
                               triplet_classification, tune_thresholds, write_report_csv)
from invkge.models import TRANSE, EmbeddingTables


def _line_tables(values, relation=0.0):
    """1-D TransE tables: entity i at values[i], a single relation offset."""
    entity = np.asarray(values, dtype=float).reshape(-1, 1)
    return EmbeddingTables(TRANSE, 1, 1, entity, np.array([[relation]]))


# ---------------------------------------------------------------------------
# filtered ranking
# ---------------------------------------------------------------------------

def test_rank_one_when_answer_strictly_best():
    tables = _line_tables([0.0, 5.0, 1.0, 2.0, 3.0, 4.0, 6.0, 7.0, 8.0, 9.0])
    # query: known head at 0, relation 0, answer entity 0 (distance 0)
    query = LpQuery(known_entity=1, known_vec=np.array([0.0]), relation=0,
                    missing=AS_TAIL, answer=0)
    rank = filtered_rank(tables, query, FilterIndex([]), np.arange(10))
    assert rank == 1.0


def test_tie_rank_uses_mean_of_positions():
    # three candidates (including the answer) tied at the top
    tables = _line_tables([0.0, 0.0, 0.0, 5.0, 6.0])
    query = LpQuery(known_entity=3, known_vec=np.array([0.0]), relation=0,
                    missing=AS_TAIL, answer=1)
    rank = filtered_rank(tables, query, FilterIndex([]), np.arange(5))
    assert rank == 2.0  # (1 + 3) / 2


def test_filtering_removes_known_true_candidates():
    tables = _line_tables([0.0, 0.1, 0.2, 5.0])
    query = LpQuery(known_entity=3, known_vec=np.array([0.0]), relation=0,
                    missing=AS_TAIL, answer=2)
    unfiltered = filtered_rank(tables, query, FilterIndex([]), np.arange(4))
    assert unfiltered == 3.0
    findex = FilterIndex([Triplet(3, 0, 0), Triplet(3, 0, 1)])
    assert filtered_rank(tables, query, findex, np.arange(4)) == 1.0


def test_missing_head_direction():
    tables = _line_tables([0.0, 1.0, 2.0, 3.0], relation=2.0)
    # rank heads h such that h + 2 ~ known tail 3 -> best head is entity 1
    query = LpQuery(known_entity=3, known_vec=np.array([3.0]), relation=0,
                    missing=AS_HEAD, answer=1)
    assert filtered_rank(tables, query, FilterIndex([]), np.arange(4)) == 1.0


def test_answer_must_be_a_candidate():
    tables = _line_tables([0.0, 1.0])
    query = LpQuery(0, np.array([0.0]), 0, AS_TAIL, answer=7)
    with pytest.raises(ValueError):
        filtered_rank(tables, query, FilterIndex([]), np.arange(2))


def _oracle_rank(tables, query, filter_triplets, candidate_ids):
    """Exhaustive-sort oracle with best/worst tie positions averaged."""
    known = set()
    for h, r, t in filter_triplets:
        if query.missing == AS_TAIL and (h, r) == (query.known_entity, query.relation):
            known.add(t)
        if query.missing == AS_HEAD and (r, t) == (query.relation, query.known_entity):
            known.add(h)
    scored = []
    for cid in candidate_ids:
        if cid != query.answer and cid in known:
            continue
        cand = tables.entity[cid]
        if query.missing == AS_TAIL:
            d = float(np.abs(query.known_vec + tables.relation[query.relation] - cand).sum())
        else:
            d = float(np.abs(cand + tables.relation[query.relation] - query.known_vec).sum())
        scored.append((d, int(cid)))
    scored.sort(key=lambda x: x[0])
    positions = [i + 1 for i, (d, cid) in enumerate(scored) if cid == query.answer]
    d_answer = next(d for d, cid in scored if cid == query.answer)
    best = 1 + sum(1 for d, _ in scored if d < d_answer)
    worst = sum(1 for d, _ in scored if d <= d_answer)
    return (best + worst) / 2.0


def test_filtered_rank_matches_oracle_on_random_instances():
    rng = np.random.default_rng(17)
    for _ in range(40):
        n = 20
        dim = int(rng.integers(1, 4))
        entity = np.round(rng.normal(size=(n, dim)) * 2) / 2  # coarse grid forces ties
        relation = np.round(rng.normal(size=(2, dim)) * 2) / 2
        tables = EmbeddingTables(TRANSE, dim, 1, entity, relation)
        filter_triplets = [Triplet(int(rng.integers(n)), int(rng.integers(2)),
                                   int(rng.integers(n))) for _ in range(30)]
        answer = int(rng.integers(n))
        query = LpQuery(known_entity=int(rng.integers(n)),
                        known_vec=entity[int(rng.integers(n))],
                        relation=int(rng.integers(2)),
                        missing=AS_TAIL if rng.random() < 0.5 else AS_HEAD,
                        answer=answer)
        cids = np.arange(n)
        got = filtered_rank(tables, query, FilterIndex(filter_triplets), cids)
        expected = _oracle_rank(tables, query, filter_triplets, cids)
        assert got == expected


def test_filtered_rank_never_worse_than_raw():
    rng = np.random.default_rng(19)
    for _ in range(20):
        n = 15
        entity = rng.normal(size=(n, 2))
        tables = EmbeddingTables(TRANSE, 2, 1, entity, rng.normal(size=(1, 2)))
        filter_triplets = [Triplet(int(rng.integers(n)), 0, int(rng.integers(n)))
                           for _ in range(25)]
        query = LpQuery(int(rng.integers(n)), entity[int(rng.integers(n))], 0,
                        AS_TAIL, int(rng.integers(n)))
        cids = np.arange(n)
        filtered = filtered_rank(tables, query, FilterIndex(filter_triplets), cids)
        raw = filtered_rank(tables, query, FilterIndex([]), cids)
        assert filtered <= raw


# ---------------------------------------------------------------------------
# threshold tuning
# ---------------------------------------------------------------------------

def _threshold_fixture(distances, labels):
    """Validation triplets with controlled distances: h=0, r=+0, tails at distances."""
    entity = np.concatenate([[0.0], np.asarray(distances, dtype=float)]).reshape(-1, 1)
    tables = EmbeddingTables(TRANSE, 1, 1, entity, np.zeros((1, 1)))
    valid = [Triplet(0, 0, i + 1) for i in range(len(distances))]
    return tables, valid, list(labels)


def test_thresholds_separable_midpoint():
    tables, valid, labels = _threshold_fixture([1, 2, 4, 5], [1, 1, -1, -1])
    th = tune_thresholds(tables, valid, labels)
    assert th.per_relation[0] == 3.0
    assert th.default == 3.0


def test_thresholds_all_positive_is_plus_infinity():
    tables, valid, labels = _threshold_fixture([1, 2, 3], [1, 1, 1])
    th = tune_thresholds(tables, valid, labels)
    assert th.per_relation[0] == np.inf


def test_thresholds_all_negative_is_minus_infinity():
    tables, valid, labels = _threshold_fixture([1, 2, 3], [-1, -1, -1])
    th = tune_thresholds(tables, valid, labels)
    assert th.per_relation[0] == -np.inf


def test_thresholds_prefer_smallest_on_ties():
    # {1:+, 2:-, 4:+, 5:-}: cuts at 1.5 and 4.5 both give accuracy 3/4; pick 1.5
    tables, valid, labels = _threshold_fixture([1, 2, 4, 5], [1, -1, 1, -1])
    th = tune_thresholds(tables, valid, labels)
    assert th.per_relation[0] == 1.5


def test_thresholds_empty_or_unlabeled_rejected():
    tables, valid, labels = _threshold_fixture([1], [1])
    with pytest.raises(ValueError):
        tune_thresholds(tables, [], [])
    with pytest.raises(ValueError):
        tune_thresholds(tables, valid, None)


def _oracle_threshold(dists, labels):
    uniq = np.unique(dists)
    cands = [-np.inf] + [(a + b) / 2.0 for a, b in zip(uniq[:-1], uniq[1:])] + [np.inf]
    best_cut, best_correct = None, -1
    for c in cands:
        correct = sum(1 for d, y in zip(dists, labels)
                      if (d <= c and y == 1) or (d > c and y == -1))
        if correct > best_correct:
            best_correct, best_cut = correct, c
    return best_cut, best_correct / len(dists)


def test_threshold_tuning_matches_exhaustive_oracle():
    rng = np.random.default_rng(23)
    for _ in range(30):
        n = int(rng.integers(1, 40))
        dists = np.round(rng.uniform(0, 5, size=n), 1)  # duplicates likely
        labels = [1 if rng.random() < 0.6 else -1 for _ in range(n)]
        tables, valid, _ = _threshold_fixture(dists, labels)
        th = tune_thresholds(tables, valid, labels)
        cut, acc = _oracle_threshold(dists, labels)
        assert th.per_relation[0] == cut
        # accuracy achieved at the returned threshold equals the oracle maximum
        got_acc = np.mean([(d <= th.per_relation[0]) == (y == 1)
                           for d, y in zip(dists, labels)])
        assert got_acc == acc


def test_validation_accuracy_beats_label_prior():
    rng = np.random.default_rng(29)
    for _ in range(10):
        n = 30
        dists = rng.uniform(0, 5, size=n)
        labels = [1 if rng.random() < 0.3 else -1 for _ in range(n)]
        tables, valid, _ = _threshold_fixture(dists, labels)
        th = tune_thresholds(tables, valid, labels)
        acc = np.mean([(d <= th.per_relation[0]) == (y == 1) for d, y in zip(dists, labels)])
        prior = np.mean([y == 1 for y in labels])
        assert acc >= max(prior, 1 - prior)


def test_unseen_relation_uses_global_default():
    tables, valid, labels = _threshold_fixture([1, 2, 4, 5], [1, 1, -1, -1])
    th = tune_thresholds(tables, valid, labels)
    assert th.for_relation(17) == th.default


# ---------------------------------------------------------------------------
# end-to-end evaluation on planted structure
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def planted_lp():
    return generate_planted_splits(31, 200, 8, 600, 0.12, task="lp")


@pytest.fixture(scope="module")
def planted_tc():
    return generate_planted_splits(37, 200, 8, 600, 0.12, task="classification")


@pytest.mark.parametrize("scheme", ["correlation", "degree", "uniform"])
def test_planted_link_prediction_is_perfect(planted_lp, scheme):
    splits, tables = planted_lp
    report = link_prediction(tables, splits, scheme)
    assert report.mrr == 1.0
    assert report.hits1 == 1.0
    assert report.hits10 == 1.0
    assert report.task == "lp"
    assert report.num_queries == len(splits.test)


def test_planted_classification_is_perfect(planted_tc):
    splits, tables = planted_tc
    report = triplet_classification(tables, splits, "degree")
    assert report.accuracy == 1.0
    assert report.num_queries == len(splits.test)


def test_report_metric_ranges(planted_lp):
    splits, tables = planted_lp
    report = link_prediction(tables, splits, "degree")
    assert 0.0 < report.mrr <= 1.0
    assert 0.0 <= report.hits1 <= report.hits10 <= 1.0


def test_threads_do_not_change_results(planted_lp):
    splits, tables = planted_lp
    serial = link_prediction(tables, splits, "degree", threads=1)
    threaded = link_prediction(tables, splits, "degree", threads=4)
    assert serial.mrr == threaded.mrr
    assert serial.hits10 == threaded.hits10


def test_lp_counts_dangling_and_assigns_worst_rank():
    splits, tables = generate_planted_splits(41, 150, 6, 420, 0.1, task="lp")
    # strip one OOKG entity's aux edges to make it dangling
    victim = sorted(splits.ookg_entities)[0]
    aux = [t for t in splits.aux if victim not in (t.head, t.tail)]
    crippled = BenchmarkSplits(task=splits.task, vocab=splits.vocab, train=splits.train,
                               valid=splits.valid, aux=aux, test=splits.test,
                               valid_labels=None, test_labels=None,
                               ikg_entities=splits.ikg_entities,
                               ookg_entities=splits.ookg_entities,
                               dangling_ookg=frozenset({victim}))
    report = link_prediction(tables, crippled, "uniform")
    n_victim_queries = sum(1 for t in splits.test if victim in (t.head, t.tail))
    assert report.counts.get("dangling") == n_victim_queries
    assert report.mrr < 1.0


def test_classification_dangling_predicts_negative():
    splits, tables = generate_planted_splits(43, 150, 6, 420, 0.1, task="classification")
    victim = sorted(splits.ookg_entities)[0]
    aux = [t for t in splits.aux if victim not in (t.head, t.tail)]
    crippled = BenchmarkSplits(task=splits.task, vocab=splits.vocab, train=splits.train,
                               valid=splits.valid, aux=aux, test=splits.test,
                               valid_labels=splits.valid_labels, test_labels=splits.test_labels,
                               ikg_entities=splits.ikg_entities,
                               ookg_entities=splits.ookg_entities,
                               dangling_ookg=frozenset({victim}))
    report = triplet_classification(tables, crippled, "degree")
    assert report.counts.get("dangling", 0) > 0
    # dangling positives are classified negative, so accuracy dips below 1
    assert report.accuracy < 1.0


def test_lp_requires_positive_labels_only(planted_tc):
    splits, tables = planted_tc
    report = link_prediction(tables, splits, "uniform")
    assert report.counts.get("negatives_skipped") == splits.test_labels.count(-1)
    assert report.num_queries == splits.test_labels.count(1)


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

def test_inactive_cap_reproduces_full_run(planted_lp):
    splits, tables = planted_lp
    full = link_prediction(tables, splits, "degree")
    capped = link_prediction(tables, splits, "degree", neighbor_cap=10_000, seed=3)
    assert capped.mrr == full.mrr
    assert capped.hits1 == full.hits1
    assert capped.hits10 == full.hits10


def test_ablate_variants_and_labels(planted_lp):
    splits, tables = planted_lp
    results = ablate(tables, splits, ["cap1", "cap8", "uniform"], task="lp",
                     scheme="degree", seed=0)
    assert [name for name, _ in results] == ["cap1", "cap8", "uniform"]
    for _, report in results:
        assert isinstance(report, EvalReport)
        assert report.task == "lp"


def test_ablate_unknown_variant(planted_lp):
    splits, tables = planted_lp
    with pytest.raises(ValueError):
        ablate(tables, splits, ["capx"], task="lp")
    with pytest.raises(ValueError):
        ablate(tables, splits, ["ratio"], task="lp")  # no ratio_runs given


def test_ablate_ratio_runs():
    a_splits, a_tables = generate_planted_splits(51, 150, 6, 420, 0.08, task="lp")
    b_splits, b_tables = generate_planted_splits(53, 150, 6, 420, 0.15, task="lp")
    results = ablate(a_tables, a_splits, ["ratio"], task="lp",
                     ratio_runs=[("r08", a_tables, a_splits), ("r15", b_tables, b_splits)])
    assert [name for name, _ in results] == ["ratio:r08", "ratio:r15"]


def test_both_sides_ookg_estimated_independently():
    # a test triplet may join two OOKG entities; each is estimated from its
    # own aux neighborhood (classification), while ranking skips such queries
    entity = np.array([[0.0], [1.0], [9.0], [9.0]])  # a=0, b=1; x, y unseen
    relation = np.array([[1.0]])
    tables = EmbeddingTables(TRANSE, 1, 1, entity, relation)
    from invkge.core import Vocabulary
    vocab = Vocabulary()
    for name in ("a", "b", "x", "y"):
        vocab.add_entity(name)
    vocab.add_relation("r")
    a, b, x, y = range(4)
    splits = BenchmarkSplits(
        task="classification", vocab=vocab,
        train=[Triplet(a, 0, b)],
        # positive at distance |0+1-1| = 0, negative at |0+1-0| = 1: cutoff 0.5
        valid=[Triplet(a, 0, b), Triplet(a, 0, a)],
        aux=[Triplet(a, 0, x), Triplet(y, 0, b)],  # x estimated as a+r=1, y as b-r=0
        test=[Triplet(y, 0, x), Triplet(x, 0, y)],
        valid_labels=[1, -1],
        # d(y,r,x) = |0+1-1| = 0 <= 0.5 (true positive)
        # d(x,r,y) = |1+1-0| = 2 > 0.5 (true negative)
        test_labels=[1, -1],
        ikg_entities=frozenset({a, b}), ookg_entities=frozenset({x, y}),
        dangling_ookg=frozenset())
    report = triplet_classification(tables, splits, "uniform")
    assert report.accuracy == 1.0

    lp = BenchmarkSplits(task="lp", vocab=vocab, train=splits.train, valid=[splits.valid[0]],
                         aux=splits.aux, test=[Triplet(x, 0, y), Triplet(x, 0, b)],
                         valid_labels=None, test_labels=None,
                         ikg_entities=splits.ikg_entities, ookg_entities=splits.ookg_entities,
                         dangling_ookg=frozenset())
    report = link_prediction(tables, lp, "uniform")
    assert report.counts.get("skipped_both_ookg") == 1
    assert report.num_queries == 1


def test_rotate_pipeline_end_to_end():
    # complex estimation -> complex reduction -> ranking over the complex table
    from invkge.models import ROTATE
    from invkge.training import TrainConfig, train
    splits, _ = generate_trainable_splits(2, 150, 6, 1200, 0.1)
    cfg = TrainConfig(model=ROTATE, dim=16, margin=2.0, num_negatives=8,
                      batch_size=128, steps=2000, seed=2, log_every=2000)
    tables, _ = train(splits, cfg)
    baseline = float(np.mean(1.0 / np.arange(1, len(splits.ikg_entities) + 1)))
    for scheme in ("correlation", "degree", "uniform"):
        rep = link_prediction(tables, splits, scheme, seed=2)
        assert rep.mrr > 3.0 * baseline

    tc, _ = generate_trainable_splits(3, 150, 6, 1200, 0.1, task="classification")
    tct, _ = train(tc, cfg.with_overrides(seed=3))
    rep = triplet_classification(tct, tc, "degree", threads=2)
    assert rep.accuracy > 0.55  # labels are balanced, so 0.5 is chance


def test_ablation_orderings_on_noisy_benchmark():
    # small edition of the desk benchmark: capping and uniform weights cannot win
    mrr = {}
    for seed in (0, 1, 2):
        splits, _ = generate_trainable_splits(seed, 120, 6, 900, 0.12)
        from invkge.training import TrainConfig, train
        tables, _ = train(splits, TrainConfig(dim=16, margin=2.0, num_negatives=8,
                                              batch_size=128, steps=1500, seed=seed,
                                              log_every=1500))
        for name, scheme, cap in [("full", "degree", None), ("cap1", "degree", 1),
                                  ("uniform", "uniform", None)]:
            rep = link_prediction(tables, splits, scheme, neighbor_cap=cap, seed=seed)
            mrr.setdefault(name, []).append(rep.mrr)
    means = {k: float(np.mean(v)) for k, v in mrr.items()}
    assert means["cap1"] <= means["full"]
    assert means["uniform"] <= means["full"]


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------

def test_report_csv_and_text(tmp_path, planted_lp):
    splits, tables = planted_lp
    report = link_prediction(tables, splits, "degree")
    path = tmp_path / "report.csv"
    write_report_csv(path, [("lp-degree", report)])
    lines = path.read_text().splitlines()
    assert lines[0].startswith("label,task,num_queries,mrr")
    assert lines[1].startswith("lp-degree,lp,")
    text = format_report("lp-degree", report)
    assert "MRR" in text and "1.0000" in text
