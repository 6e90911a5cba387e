"""The three synthetic benchmark generators and the split file format.

Every benchmark is four TSV files. Training and validation triplets use only
in-graph entities; the auxiliary set connects each out-of-knowledge-graph
(OOKG) entity to in-graph ones and is only available at inference time; test
triplets involve at least one OOKG entity.

  * generate_synthetic_splits  - uniform random, structure-free; a fixture
    for exercising loaders and validators.
  * generate_planted_splits    - entities on an integer lattice, relations as
    offsets; ground-truth embeddings fit every triplet exactly.
  * generate_trainable_splits  - noisy latent geometry with skewed degrees;
    learnable but never exactly satisfiable, the desk-scale training bench.
"""

import tempfile
from pathlib import Path

from invkge import (distance, generate_planted_splits, generate_synthetic_splits,
                    generate_trainable_splits, load_split_dir, write_splits)

splits = generate_synthetic_splits(seed=7, num_entities=50, num_relations=5,
                                   num_triplets=300, ookg_fraction=0.1)
print("uniform fixture:",
      f"train={len(splits.train)} valid={len(splits.valid)} aux={len(splits.aux)}",
      f"test={len(splits.test)} ookg={len(splits.ookg_entities)}")

with tempfile.TemporaryDirectory() as tmp:
    paths = write_splits(splits, tmp)
    print("wrote:", ", ".join(p.name for p in paths.values()))
    head = Path(paths["aux"]).read_text().splitlines()[0]
    print("first aux line:", head.replace("\t", " <TAB> "))
    reloaded = load_split_dir(tmp)
    print("round trip equal:", reloaded == splits)

planted, truth = generate_planted_splits(seed=7, num_entities=240, num_relations=8,
                                         num_train=700, ookg_fraction=0.1)
worst = max(distance(truth, t.head, t.relation, t.tail) for t in planted.train)
print(f"\nplanted lattice: {len(planted.train)} train triplets, "
      f"worst ground-truth distance = {worst} (exactly translational)")

noisy, latent = generate_trainable_splits(seed=7, num_entities=200, num_relations=8,
                                          num_train=1500, ookg_fraction=0.1)
sample = [distance(latent, t.head, t.relation, t.tail) for t in noisy.train[:500]]
print(f"noisy benchmark: mean latent residual over 500 train triplets = "
      f"{sum(sample) / len(sample):.3f} (structured but not exact)")
print("dangling OOKG entities:", len(noisy.dangling_ookg))
