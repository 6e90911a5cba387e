"""Translational KG embeddings with closed-form estimation of unseen entities.

Pretrains TransE/RotatE tables with self-adversarial negative sampling, then
represents out-of-knowledge-graph entities by inverting the translational
assumption over their auxiliary neighbors and reducing the resulting
candidates with correlation-, degree-, or uniform weighting. Includes the
filtered ranking / threshold-classification evaluation harness and the
neighbor-cap, uniform-weight and OOKG-ratio ablations.
"""

from .core import AS_HEAD, AS_TAIL, Neighbor, Triplet, TripleStore, Vocabulary
from .datasets import (BenchmarkSplits, DatasetFormatError, DatasetValidationError,
                       build_filter_set, generate_planted_splits, generate_synthetic_splits,
                       generate_trainable_splits, load_split_dir, load_splits, write_splits)
from .estimation import (Candidate, CandidateSet, EstimationError, cap_neighbors,
                         estimate_candidates)
from .evaluation import (EvalReport, FilterIndex, LpQuery, Thresholds, ablate,
                         filtered_rank, format_report, link_prediction,
                         triplet_classification, tune_thresholds, write_report_csv)
from .models import (MODELS, ROTATE, TRANSE, EmbeddingTables, distance, init_tables,
                     load_checkpoint, load_vocabulary, save_checkpoint, save_vocabulary,
                     score, translation_distance)
from .reduction import (CORRELATION, DEGREE, UNIFORM, RelationCorrelation,
                        build_correlation, candidate_weights, correlation_weights,
                        degree_weights, reduce_candidates, uniform_weights)
from .seeding import substream
from .training import (REFERENCE_CONFIGS, Adam, TrainConfig, TrainingDivergedError,
                       sample_negatives, self_adversarial_loss, train)

__version__ = "0.1.0"
