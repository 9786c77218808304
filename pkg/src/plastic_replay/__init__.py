"""Age-weighted replay sampling with a desk-scale verification harness."""

from .buffer import ReplayBuffer, TimestampedTransition
from .samplers import (
    BucketIndex,
    DecaySchedule,
    PerConfig,
    SampleBatch,
    bucket_rebuild,
    build_sampler,
    decay_weight,
    normalized_probabilities,
    per_priorities_and_weights,
    sample_batch_bucketed,
    sample_batch_exact,
)
from .sumtree import SumTree

__all__ = [
    "BucketIndex",
    "DecaySchedule",
    "PerConfig",
    "ReplayBuffer",
    "SampleBatch",
    "SumTree",
    "TimestampedTransition",
    "bucket_rebuild",
    "build_sampler",
    "decay_weight",
    "normalized_probabilities",
    "per_priorities_and_weights",
    "sample_batch_bucketed",
    "sample_batch_exact",
]

__version__ = "0.1.0"
