"""Desk-scale value-learning agent with decoupled action selection.

Bootstrap targets pick the next action with the online network and score
it with a periodically hard-updated target copy. The replay buffer and the
sampling strategy are injected, so runs differ only in how batches are
drawn — which is the comparison the whole package exists to make.

All randomness flows through named streams derived from the run seed
(action selection, batch draws, environment, metrics), so one seed pins an
entire trajectory bit-for-bit on one thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .buffer import ReplayBuffer, TimestampedTransition
from .errors import ConfigError
from .nn import AdamState, GradientRecord, Mlp, adam_step, backward, forward
from .plasticity import grama_report
from .samplers import DecaySchedule, PerConfig, build_sampler
from .seeding import derive_rng


@dataclass
class AgentConfig:
    sampler: str = "swd"
    seed: int = 1
    gamma: float = 0.97
    batch_size: int = 64
    learning_starts: int = 500
    train_frequency: int = 4
    target_update_interval: int = 150
    utd: int = 1
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    exploration_fraction: float = 0.2
    learning_rate: float = 1e-3
    hidden_dims: tuple[int, ...] = (64, 64)
    buffer_capacity: int = 20_000
    decay_steps: int = 0  # 0 -> 80% of total run steps
    min_weight: float = 0.1
    tau: float = 1.0
    poly_p: float = 2.0
    bucket_count: int = 64
    per: PerConfig = field(default_factory=PerConfig)
    log_every: int = 500
    grama_eval_batch: int = 512
    grama_tau: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.utd < 1:
            raise ConfigError(f"utd must be >= 1, got {self.utd}")
        if self.train_frequency < 1:
            raise ConfigError(f"train_frequency must be >= 1, got {self.train_frequency}")


@dataclass
class MetricsRow:
    global_step: int
    episode_return: float
    grad_l1: float
    grama_inactive_frac: float
    sampler_name: str
    seed: int


@dataclass
class Batch:
    obs: np.ndarray  # (m, d)
    actions: np.ndarray  # (m,)
    rewards: np.ndarray  # (m,)
    next_obs: np.ndarray  # (m, d)
    dones: np.ndarray  # (m,) float 0/1
    indices: np.ndarray  # logical buffer indices


def fetch_batch(buffer: ReplayBuffer, indices: np.ndarray) -> Batch:
    entries = [buffer.get(int(i)) for i in indices]
    return Batch(
        obs=np.stack([e.state for e in entries]),
        actions=np.array([e.action for e in entries], dtype=np.int64),
        rewards=np.array([e.reward for e in entries], dtype=np.float64),
        next_obs=np.stack([e.next_state for e in entries]),
        dones=np.array([float(e.done) for e in entries], dtype=np.float64),
        indices=np.asarray(indices, dtype=np.int64),
    )


def decay_schedule_for(config: AgentConfig, total_steps: int) -> DecaySchedule | None:
    """Schedule implied by the configured sampler; decay steps default to
    80% of the run length."""
    kinds = {"swd": "linear", "swd-bucketed": "linear", "swa": "swa",
             "exponential": "exponential", "polynomial": "polynomial"}
    if config.sampler not in kinds:
        return None
    t = config.decay_steps if config.decay_steps > 0 else max(1, int(0.8 * total_steps))
    return DecaySchedule(
        kind=kinds[config.sampler], T=t, w_min=config.min_weight,
        tau=config.tau, p=config.poly_p,
    )


class Agent:
    """Online network, target copy, optimizer, buffer, and sampler."""

    def __init__(self, config: AgentConfig, env, total_steps: int):
        self.config = config
        self.env = env
        rng_init = derive_rng(config.seed, "net-init")
        dims = [env.observation_dim, *config.hidden_dims, env.action_count]
        self.online = Mlp.init(dims, rng_init)
        self.target = self.online.copy()
        self.opt = AdamState.init(self.online.params(), lr=config.learning_rate)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.sampler = build_sampler(
            config.sampler,
            schedule=decay_schedule_for(config, total_steps),
            per_config=config.per,
            bucket_count=config.bucket_count,
            capacity=config.buffer_capacity,
        )

    def push(self, tr: TimestampedTransition) -> None:
        slot = self.buffer.push(tr)
        self.sampler.on_push(self.buffer, slot)


def double_dqn_targets(batch: Batch, online: Mlp, target: Mlp, gamma: float) -> np.ndarray:
    """y = r + gamma * Q_target(s', argmax_a Q_online(s', a)); terminal
    transitions bootstrap nothing."""
    if batch.obs.shape[0] == 0:
        raise ValueError("empty batch")
    q_online_next, _ = forward(online, batch.next_obs)
    best = np.argmax(q_online_next, axis=1)
    q_target_next, _ = forward(target, batch.next_obs)
    boot = q_target_next[np.arange(len(best)), best]
    return batch.rewards + gamma * boot * (1.0 - batch.dones)


def train_step(
    agent: Agent, batch: Batch, is_weights: np.ndarray | None = None
) -> tuple[float, GradientRecord]:
    """One (optionally importance-weighted) squared-TD-error update.

    Returns the mean loss and the gradient record of the batch-summed loss;
    PER priorities are refreshed from the new absolute TD errors.
    """
    m = batch.obs.shape[0]
    y = double_dqn_targets(batch, agent.online, agent.target, agent.config.gamma)
    q_all, cache = forward(agent.online, batch.obs)
    rows = np.arange(m)
    delta = q_all[rows, batch.actions] - y
    w = np.ones(m) if is_weights is None else np.asarray(is_weights, dtype=np.float64)
    loss = float(np.mean(w * delta**2))
    if not math.isfinite(loss):
        raise RuntimeError(
            f"non-finite loss at optimizer step {agent.opt.step_count}: "
            f"loss={loss}, max|q|={np.abs(q_all).max():.3e}"
        )
    grad_out = np.zeros_like(q_all)
    grad_out[rows, batch.actions] = 2.0 * w * delta
    record = backward(agent.online, cache, grad_out)
    mean_grads = [(gw / m, gb / m) for gw, gb in record.param_grads]
    adam_step(agent.online.params(), mean_grads, agent.opt)
    agent.sampler.update_priorities(agent.buffer, batch.indices, np.abs(delta))
    return loss, record


def _epsilon_at(config: AgentConfig, t: int, total_steps: int) -> float:
    span = max(1.0, config.exploration_fraction * total_steps)
    frac = min(1.0, t / span)
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


def _grama_eval(agent: Agent, rng: np.random.Generator) -> float:
    """Inactive-neuron fraction on a uniformly drawn evaluation batch,
    decoupled from whatever sampler the run trains with."""
    n = len(agent.buffer)
    m = min(agent.config.grama_eval_batch, n)
    idx = (rng.random(m) * n).astype(np.int64)
    batch = fetch_batch(agent.buffer, idx)
    y = double_dqn_targets(batch, agent.online, agent.target, agent.config.gamma)
    q_all, cache = forward(agent.online, batch.obs)
    rows = np.arange(m)
    delta = q_all[rows, batch.actions] - y
    grad_out = np.zeros_like(q_all)
    grad_out[rows, batch.actions] = 2.0 * delta
    record = backward(agent.online, cache, grad_out)
    return grama_report(record, agent.config.grama_tau).inactive_fraction


def run(
    config: AgentConfig, env, total_steps: int, agent: Agent | None = None
) -> list[MetricsRow]:
    """Full training loop; fully deterministic per config on one thread.

    A pre-built Agent may be passed in for post-run inspection; by default
    a fresh one is constructed from the config.
    """
    from .plasticity import grad_l1 as grad_l1_of

    if agent is None:
        agent = Agent(config, env, total_steps)
    rng_act = derive_rng(config.seed, "action")
    rng_env = derive_rng(config.seed, "env")
    rng_sample = derive_rng(config.seed, "sampler")
    rng_metrics = derive_rng(config.seed, "metrics")

    s = env.reset(rng_env)
    ep_return, ep_len = 0.0, 0
    window_returns: list[float] = []
    last_logged_return = math.nan
    last_record: GradientRecord | None = None
    rows: list[MetricsRow] = []

    for t in range(total_steps):
        eps = _epsilon_at(config, t, total_steps)
        if rng_act.random() < eps:
            a = int(rng_act.integers(env.action_count))
        else:
            q, _ = forward(agent.online, env.encode(s))
            a = int(np.argmax(q))
        s_next, r, done = env.step(t, s, a, rng_env)
        agent.push(
            TimestampedTransition(
                state=env.encode(s), action=a, reward=r,
                next_state=env.encode(s_next), done=done, timestamp=t,
            )
        )
        ep_return += r
        ep_len += 1
        truncated = ep_len >= env.max_episode_steps
        if done or truncated:
            window_returns.append(ep_return)
            ep_return, ep_len = 0.0, 0
            s = env.reset(rng_env)
        else:
            s = s_next

        if t >= config.learning_starts and t % config.train_frequency == 0:
            for _ in range(config.utd):
                sample = agent.sampler.sample(agent.buffer, config.batch_size, rng_sample)
                batch = fetch_batch(agent.buffer, sample.indices)
                _, last_record = train_step(agent, batch, sample.is_weights)

        if (t + 1) % config.target_update_interval == 0:
            agent.target.load_from(agent.online)

        if (t + 1) % config.log_every == 0:
            if window_returns:
                last_logged_return = float(np.mean(window_returns))
                window_returns.clear()
            rows.append(
                MetricsRow(
                    global_step=t + 1,
                    episode_return=last_logged_return,
                    grad_l1=grad_l1_of(last_record) if last_record is not None else math.nan,
                    grama_inactive_frac=_grama_eval(agent, rng_metrics),
                    sampler_name=agent.sampler.name,
                    seed=config.seed,
                )
            )
    return rows
