"""Represent an out-of-knowledge-graph entity without retraining.

Each auxiliary neighbor yields one closed-form candidate: with the unseen
entity as head of (e, r, t) the candidate is t - r (TransE) or t rotated
backwards (RotatE); as tail of (h, r, e) it is h + r or h rotated forwards.
A weighted average then collapses the candidates. On the exactly-planted
lattice every candidate coincides, so the reduced embedding is perfect no
matter the weights; on noisy data the weighting starts to matter.
"""

import numpy as np

from invkge import (TripleStore, build_correlation, candidate_weights, cap_neighbors,
                    distance, estimate_candidates, generate_planted_splits,
                    reduce_candidates, substream)

splits, tables = generate_planted_splits(seed=3, num_entities=240, num_relations=8,
                                         num_train=700, ookg_fraction=0.1)
vocab = splits.vocab
aux_store = TripleStore(splits.aux, num_entities=vocab.num_entities,
                        num_relations=vocab.num_relations)
train_store = TripleStore(splits.train, num_entities=vocab.num_entities,
                          num_relations=vocab.num_relations)

entity = sorted(splits.ookg_entities)[0]
true_point = tables.entity[entity]
print(f"unseen entity {vocab.entity_name(entity)} sits at {true_point} "
      f"(hidden from the estimator)")

cset = estimate_candidates(tables, aux_store, entity, splits.ikg_entities)
print(f"\n{len(cset)} candidates, one per auxiliary neighbor:")
for cand in cset.candidates:
    print(f"  via ({vocab.entity_name(cand.source_entity)}, "
          f"{vocab.relation_name(cand.source_relation)}) as {cand.direction}: "
          f"{cand.vector}  train-degree={train_store.degree(cand.source_entity)}")

correlation = build_correlation(train_store, vocab.num_relations)
for scheme, kwargs in [("uniform", {}),
                       ("degree", {"train_store": train_store}),
                       ("correlation", {"correlation": correlation,
                                        "query_relation": cset.candidates[0].source_relation})]:
    weights = candidate_weights(scheme, cset, **kwargs)
    reduced = reduce_candidates(cset, weights)
    print(f"\n{scheme:11s} weights {np.round(weights, 3)} -> {reduced} "
          f"(error {np.abs(reduced - true_point).sum():.2e})")

capped = cap_neighbors(cset, 1, substream(0, "capping", entity))
print(f"\ncapped to 1 neighbor: candidate via "
      f"{vocab.entity_name(capped.candidates[0].source_entity)} only")

# the candidate exactly inverts its generating triplet
cand = cset.candidates[0]
if cand.direction == "head":
    resid = distance(tables, cand.vector, cand.source_relation, cand.source_entity)
else:
    resid = distance(tables, cand.source_entity, cand.source_relation, cand.vector)
print(f"residual of the generating triplet at the candidate: {resid}")
