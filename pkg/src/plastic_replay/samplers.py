"""Replay sampling strategies behind one interface.

Strategies: uniform, age-weighted categorical sampling with a decay
schedule (linear decay, its reverse "augmentation" variant, exponential,
polynomial), a bucketed O(B) approximation of the age-weighted sampler,
and TD-error prioritized sampling backed by a sum tree.

Weight laws (age = current step - collection step, x = age / T):

    linear       w = max(w_min, 1 - x)
    swa          w = min(1, w_min + x)      (reverse ablation: favors old data)
    exponential  w = max(w_min, exp(-x / tau))
    polynomial   w = max(w_min, max(0, 1 - x)**p)

All laws map into [w_min, 1]. The exponential law is applied to the
normalized age x rather than the raw step count; raw steps would clamp to
w_min after a handful of steps and make tau meaningless.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .buffer import ReplayBuffer
from .errors import ConfigError, EmptyBufferError, StaleIndexError
from .sumtree import SumTree

DECAY_KINDS = ("linear", "swa", "exponential", "polynomial")


@dataclass(frozen=True)
class DecaySchedule:
    """Parametric weight-vs-age law.

    T: decay steps (age scale); w_min: weight floor in (0, 1];
    tau: time constant for the exponential law; p: polynomial exponent.
    """

    kind: str
    T: int
    w_min: float
    tau: float = 1.0
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in DECAY_KINDS:
            raise ConfigError(f"unknown decay kind {self.kind!r}, expected one of {DECAY_KINDS}")
        if self.T < 1:
            raise ConfigError(f"decay steps T must be >= 1, got {self.T}")
        if not 0.0 < self.w_min <= 1.0:
            raise ConfigError(f"w_min must be in (0, 1], got {self.w_min}")
        if self.tau <= 0.0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.p <= 0.0:
            raise ConfigError(f"p must be positive, got {self.p}")


def decay_weight(schedule: DecaySchedule, age):
    """Weight of a sample of the given age under the schedule.

    Accepts a scalar or an ndarray of ages; output lies in [w_min, 1].
    """
    x = np.asarray(age, dtype=np.float64) / schedule.T
    if schedule.kind == "linear":
        w = np.maximum(schedule.w_min, 1.0 - x)
    elif schedule.kind == "swa":
        w = np.minimum(1.0, schedule.w_min + x)
    elif schedule.kind == "exponential":
        w = np.maximum(schedule.w_min, np.exp(-x / schedule.tau))
    else:  # polynomial
        w = np.maximum(schedule.w_min, np.maximum(0.0, 1.0 - x) ** schedule.p)
    if np.isscalar(age) or np.ndim(age) == 0:
        return float(w)
    return w


def normalized_probabilities(weights) -> np.ndarray:
    """p_i = w_i / sum_j w_j, order preserved."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise EmptyBufferError("cannot normalize an empty weight vector")
    if np.any(w <= 0.0):
        raise ValueError("weights must be strictly positive")
    return w / w.sum()


def buffer_weights(buffer: ReplayBuffer, schedule: DecaySchedule, now: int | None = None) -> np.ndarray:
    """Decay weights of every live entry in logical (oldest-first) order.

    This is the O(N) per-batch weight phase of exact age-weighted sampling.
    """
    if len(buffer) == 0:
        raise EmptyBufferError("buffer is empty")
    if now is None:
        now = buffer.global_step
    return decay_weight(schedule, buffer.ages(now))


def _categorical(cumulative: np.ndarray, batch: int, rng: np.random.Generator) -> np.ndarray:
    """batch i.i.d. draws from the distribution with the given unnormalized
    cumulative weights; half-open intervals, ties resolve rightward."""
    u = rng.random(batch) * cumulative[-1]
    idx = np.searchsorted(cumulative, u, side="right")
    return np.minimum(idx, cumulative.size - 1).astype(np.int64)


def sample_batch_exact(
    buffer: ReplayBuffer,
    schedule: DecaySchedule,
    batch: int,
    rng: np.random.Generator,
    now: int | None = None,
) -> np.ndarray:
    """batch logical indices drawn i.i.d. (with replacement) from the
    age-weighted categorical distribution; O(N + batch) per call."""
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    w = buffer_weights(buffer, schedule, now)
    return _categorical(np.cumsum(w), batch, rng)


# ---------------------------------------------------------------------------
# Bucketed approximation
# ---------------------------------------------------------------------------


@dataclass
class BucketIndex:
    """B contiguous age-ordered partitions with median-weight totals.

    boundaries[b]..boundaries[b+1] delimit bucket b in logical index space;
    bucket_totals[b] approximates the bucket's weight mass as
    median weight x bucket size. Because weights are monotone in age and
    entries are age-ordered, the positional median is the value median.
    """

    bucket_count: int
    boundaries: np.ndarray  # int64, length B + 1
    bucket_totals: np.ndarray  # float64, length B
    built_at: int  # `now` used for ages at rebuild
    buffer_size: int  # live entries at rebuild
    buffer_pushes: int  # buffer.pushes at rebuild

    def bucket_sizes(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def implied_probabilities(self) -> np.ndarray:
        """Per-entry sampling probability the index induces (bucket mass
        spread uniformly across the bucket)."""
        sizes = self.bucket_sizes()
        bucket_p = self.bucket_totals / self.bucket_totals.sum()
        return np.repeat(bucket_p / sizes, sizes)


def bucket_rebuild(
    buffer: ReplayBuffer,
    schedule: DecaySchedule,
    bucket_count: int,
    now: int | None = None,
) -> BucketIndex:
    """Partition the buffer into near-equal age-ordered buckets, estimating
    each bucket's weight mass from its median entry: O(B) weight
    evaluations, no full pass over the buffer.

    Even-sized buckets use the average of the two central weights, which
    keeps totals exact whenever within-bucket weights form an arithmetic
    sequence (the unclamped linear law over consecutive ages).
    """
    if bucket_count <= 0:
        raise ConfigError(f"bucket_count must be >= 1, got {bucket_count}")
    n = len(buffer)
    if n == 0:
        raise EmptyBufferError("cannot build a bucket index over an empty buffer")
    if bucket_count > n:
        raise ConfigError(f"bucket_count {bucket_count} exceeds buffer size {n}")
    if now is None:
        now = buffer.global_step

    base, rem = divmod(n, bucket_count)
    sizes = np.full(bucket_count, base, dtype=np.int64)
    sizes[:rem] += 1
    boundaries = np.zeros(bucket_count + 1, dtype=np.int64)
    np.cumsum(sizes, out=boundaries[1:])

    lo = boundaries[:-1]
    lo_mid = lo + (sizes - 1) // 2
    hi_mid = lo + sizes // 2
    w_lo = decay_weight(schedule, now - buffer.timestamps_at(lo_mid))
    w_hi = decay_weight(schedule, now - buffer.timestamps_at(hi_mid))
    medians = 0.5 * (w_lo + w_hi)

    return BucketIndex(
        bucket_count=bucket_count,
        boundaries=boundaries,
        bucket_totals=medians * sizes,
        built_at=now,
        buffer_size=n,
        buffer_pushes=buffer.pushes,
    )


def sample_batch_bucketed(
    index: BucketIndex,
    buffer: ReplayBuffer,
    batch: int,
    rng: np.random.Generator,
    staleness_budget: float = 0.05,
) -> np.ndarray:
    """Hierarchical draw: bucket ~ Categorical(bucket_totals), then uniform
    within the bucket; O(B + batch) per call.

    Indices refer to the buffer state at rebuild time. Once more than
    ``staleness_budget`` of the buffer content has changed since the index
    was built, the draw is refused and a rebuild is required.
    """
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    drift = buffer.pushes - index.buffer_pushes
    if drift < 0:
        raise ValueError("bucket index does not belong to this buffer")
    if drift > staleness_budget * index.buffer_size:
        raise StaleIndexError(
            f"{drift} pushes since rebuild exceeds the staleness budget "
            f"({staleness_budget:.0%} of {index.buffer_size})"
        )
    buckets = _categorical(np.cumsum(index.bucket_totals), batch, rng)
    sizes = index.bucket_sizes()[buckets]
    offsets = np.minimum((rng.random(batch) * sizes).astype(np.int64), sizes - 1)
    return index.boundaries[buckets] + offsets


# ---------------------------------------------------------------------------
# Prioritized replay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PerConfig:
    """Proportional prioritization parameters: priority (|delta| + epsilon)**alpha,
    importance weight (1 / (N P(i)))**beta normalized by the max, beta annealed
    toward 1 by beta_increment per sampling step."""

    alpha: float = 0.6
    beta: float = 0.4
    beta_increment: float = 1e-6
    epsilon: float = 1e-2

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.beta_increment < 0.0:
            raise ConfigError(f"beta_increment must be >= 0, got {self.beta_increment}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


def priorities_from_td_errors(td_errors, alpha: float, epsilon: float) -> np.ndarray:
    return (np.abs(np.asarray(td_errors, dtype=np.float64)) + epsilon) ** alpha


def importance_weights(probs, n: int, beta: float) -> np.ndarray:
    w = (1.0 / (n * np.asarray(probs, dtype=np.float64))) ** beta
    return w / w.max()


def per_priorities_and_weights(td_errors, cfg: PerConfig, n: int, probs):
    """Priorities (|delta| + eps)**alpha and max-normalized importance
    weights (1/(N P(i)))**beta over a full probability vector."""
    if n <= 0:
        raise ConfigError(f"N must be positive, got {n}")
    p = np.asarray(probs, dtype=np.float64)
    if p.size == 0 or np.any(p <= 0.0):
        raise ValueError("probs must be strictly positive")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"probs must sum to 1, got {p.sum()}")
    return (
        priorities_from_td_errors(td_errors, cfg.alpha, cfg.epsilon),
        importance_weights(p, n, cfg.beta),
    )


# ---------------------------------------------------------------------------
# Strategy objects (the one interface the agent trains against)
# ---------------------------------------------------------------------------


@dataclass
class SampleBatch:
    indices: np.ndarray  # logical buffer indices
    is_weights: np.ndarray | None = None  # PER only


class UniformSampler:
    """Baseline: every live entry equally likely."""

    name = "uniform"

    def sample(self, buffer: ReplayBuffer, batch: int, rng: np.random.Generator) -> SampleBatch:
        if len(buffer) == 0:
            raise EmptyBufferError("buffer is empty")
        idx = (rng.random(batch) * len(buffer)).astype(np.int64)
        return SampleBatch(indices=idx)

    def on_push(self, buffer: ReplayBuffer, slot: int) -> None:
        pass

    def update_priorities(self, buffer: ReplayBuffer, indices, td_errors) -> None:
        pass


class DecaySampler:
    """Exact age-weighted categorical sampling under a decay schedule."""

    def __init__(self, schedule: DecaySchedule, name: str | None = None):
        self.schedule = schedule
        self.name = name if name is not None else f"swd-{schedule.kind}"

    def sample(self, buffer: ReplayBuffer, batch: int, rng: np.random.Generator) -> SampleBatch:
        return SampleBatch(indices=sample_batch_exact(buffer, self.schedule, batch, rng))

    def on_push(self, buffer: ReplayBuffer, slot: int) -> None:
        pass

    def update_priorities(self, buffer: ReplayBuffer, indices, td_errors) -> None:
        pass


class BucketedDecaySampler:
    """Age-weighted sampling through a bucket index, rebuilt lazily: before
    the first draw, on request, and whenever more than 5% of the buffer has
    changed since the last rebuild."""

    def __init__(self, schedule: DecaySchedule, bucket_count: int, name: str | None = None):
        if bucket_count <= 0:
            raise ConfigError(f"bucket_count must be >= 1, got {bucket_count}")
        self.schedule = schedule
        self.bucket_count = bucket_count
        self.name = name if name is not None else "swd-bucketed"
        self._index: BucketIndex | None = None
        self._rebuild_requested = False

    def request_rebuild(self) -> None:
        self._rebuild_requested = True

    def _needs_rebuild(self, buffer: ReplayBuffer) -> bool:
        if self._index is None or self._rebuild_requested:
            return True
        drift = buffer.pushes - self._index.buffer_pushes
        return drift > 0.05 * self._index.buffer_size

    def sample(self, buffer: ReplayBuffer, batch: int, rng: np.random.Generator) -> SampleBatch:
        if self._needs_rebuild(buffer):
            b = min(self.bucket_count, len(buffer))
            self._index = bucket_rebuild(buffer, self.schedule, b)
            self._rebuild_requested = False
        assert self._index is not None
        return SampleBatch(indices=sample_batch_bucketed(self._index, buffer, batch, rng))

    def on_push(self, buffer: ReplayBuffer, slot: int) -> None:
        pass

    def update_priorities(self, buffer: ReplayBuffer, indices, td_errors) -> None:
        pass


class PerSampler:
    """Proportional prioritized sampling over a sum tree keyed by physical
    buffer slot. Fresh transitions enter at the current max priority;
    importance weights are normalized over the sampled batch."""

    name = "per"

    def __init__(self, config: PerConfig, capacity: int):
        self.config = config
        self.tree = SumTree(capacity)
        self.beta = config.beta
        self._max_priority = 1.0

    def on_push(self, buffer: ReplayBuffer, slot: int) -> None:
        self.tree.update(slot, self._max_priority)

    def sample(self, buffer: ReplayBuffer, batch: int, rng: np.random.Generator) -> SampleBatch:
        n = len(buffer)
        if n == 0:
            raise EmptyBufferError("buffer is empty")
        total = self.tree.total()
        u = rng.random(batch) * total
        slots = np.array([self.tree.find_prefix(v) for v in u], dtype=np.int64)
        probs = np.array([self.tree.leaf(s) for s in slots]) / total
        weights = importance_weights(probs, n, self.beta)
        self.beta = min(1.0, self.beta + self.config.beta_increment)
        logical = np.array([buffer.physical_to_logical(int(s)) for s in slots], dtype=np.int64)
        return SampleBatch(indices=logical, is_weights=weights)

    def update_priorities(self, buffer: ReplayBuffer, indices, td_errors) -> None:
        prios = priorities_from_td_errors(td_errors, self.config.alpha, self.config.epsilon)
        for logical, prio in zip(indices, prios):
            slot = buffer.logical_to_physical(int(logical))
            self.tree.update(slot, float(prio))
        if prios.size:
            self._max_priority = max(self._max_priority, float(prios.max()))


SAMPLER_NAMES = ("uniform", "swd", "swd-bucketed", "swa", "exponential", "polynomial", "per")


def build_sampler(
    name: str,
    schedule: DecaySchedule | None = None,
    per_config: PerConfig | None = None,
    bucket_count: int | None = None,
    capacity: int | None = None,
):
    """Construct a fresh sampling strategy by name.

    Decay-based strategies need a schedule; `per` needs a buffer capacity.
    """
    if name == "uniform":
        return UniformSampler()
    if name in ("swd", "swa", "exponential", "polynomial"):
        if schedule is None:
            raise ConfigError(f"sampler {name!r} requires a decay schedule")
        return DecaySampler(schedule, name=name)
    if name == "swd-bucketed":
        if schedule is None:
            raise ConfigError("sampler 'swd-bucketed' requires a decay schedule")
        if bucket_count is None:
            raise ConfigError("sampler 'swd-bucketed' requires bucket_count")
        return BucketedDecaySampler(schedule, bucket_count)
    if name == "per":
        if capacity is None:
            raise ConfigError("sampler 'per' requires the buffer capacity")
        return PerSampler(per_config if per_config is not None else PerConfig(), capacity)
    raise ConfigError(f"unknown sampler {name!r}, expected one of {SAMPLER_NAMES}")
