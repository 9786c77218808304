"""Desk-scale environments.

``TabularMDP`` is a finite episodic MDP driven by exact transition and
reward tensors — the substrate for the tabular verification lab.
``NonstationaryChain`` is a deterministic corridor whose terminal rewards
flip sign mid-training, giving the agent experiment a controlled
distribution/target shift.

Step indices ``h`` are 1-based (1..H) to match value functions defined per
step; internally the tensors are 0-indexed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class TabularMDP:
    S: int
    A: int
    H: int
    P: np.ndarray  # (H, S, A, S), each row a probability vector
    R: np.ndarray  # (H, S, A), rewards in [0, 1]
    initial_state: np.ndarray  # (S,) probability vector

    def __post_init__(self):
        if self.P.shape != (self.H, self.S, self.A, self.S):
            raise ValueError(f"P has shape {self.P.shape}, expected {(self.H, self.S, self.A, self.S)}")
        if self.R.shape != (self.H, self.S, self.A):
            raise ValueError(f"R has shape {self.R.shape}, expected {(self.H, self.S, self.A)}")
        if self.initial_state.shape != (self.S,):
            raise ValueError("initial_state has the wrong shape")


def random_mdp(seed: int, S: int, A: int, H: int) -> TabularMDP:
    """Random dense MDP: Dirichlet(1) transition rows, uniform rewards in
    [0, 1], Dirichlet(1) initial-state distribution; deterministic per seed."""
    if S < 1 or A < 1 or H < 1:
        raise ConfigError(f"S, A, H must all be >= 1, got {(S, A, H)}")
    rng = np.random.default_rng(seed)
    # Dirichlet(1) rows via normalized unit-rate gammas, vectorized.
    g = rng.gamma(1.0, size=(H, S, A, S))
    P = g / g.sum(axis=-1, keepdims=True)
    R = rng.uniform(0.0, 1.0, size=(H, S, A))
    init = rng.gamma(1.0, size=S)
    init /= init.sum()
    return TabularMDP(S=S, A=A, H=H, P=P, R=R, initial_state=init)


def step(
    mdp: TabularMDP, h: int, s: int, a: int, rng: np.random.Generator
) -> tuple[int, float, bool]:
    """Sample one transition at step h (1-based); done iff h == H."""
    if not 1 <= h <= mdp.H:
        raise IndexError(f"step h={h} out of range [1, {mdp.H}]")
    if not 0 <= s < mdp.S or not 0 <= a < mdp.A:
        raise IndexError(f"state/action ({s}, {a}) out of range")
    row = mdp.P[h - 1, s, a]
    s_next = int(rng.choice(mdp.S, p=row))
    return s_next, float(mdp.R[h - 1, s, a]), h == mdp.H


def sample_initial_state(mdp: TabularMDP, rng: np.random.Generator) -> int:
    return int(rng.choice(mdp.S, p=mdp.initial_state))


@dataclass
class NonstationaryChain:
    """Deterministic corridor with terminal cells at both ends.

    Before ``shift_step`` the right end pays +1 and the left end -1; from
    ``shift_step`` on, both signs flip. Everything else is identical across
    phases, so the only thing that changes mid-training is which end is
    worth reaching. Episodes start in the middle; actions 0/1 move
    left/right; reaching either end terminates. The step function is fully
    deterministic given (global_step, s, a).
    """

    length: int = 5
    shift_step: int = 10_000
    goal_reward: float = 1.0
    max_episode_steps: int = 0  # 0 -> 4 * length

    def __post_init__(self):
        if self.length < 3:
            raise ConfigError(f"chain length must be >= 3, got {self.length}")
        if self.max_episode_steps <= 0:
            self.max_episode_steps = 4 * self.length

    @property
    def observation_dim(self) -> int:
        return self.length

    @property
    def action_count(self) -> int:
        return 2

    def phase(self, global_step: int) -> int:
        return 0 if global_step < self.shift_step else 1

    def reset(self, rng: np.random.Generator) -> int:
        return self.length // 2

    def encode(self, s: int) -> np.ndarray:
        obs = np.zeros(self.length, dtype=np.float64)
        obs[s] = 1.0
        return obs

    def terminal_reward(self, s_next: int, global_step: int) -> float:
        sign = 1.0 if self.phase(global_step) == 0 else -1.0
        if s_next == self.length - 1:
            return sign * self.goal_reward
        if s_next == 0:
            return -sign * self.goal_reward
        return 0.0

    def step(
        self, global_step: int, s: int, a: int, rng: np.random.Generator
    ) -> tuple[int, float, bool]:
        return chain_step(self, global_step, s, a, rng)

    def optimal_return(self, phase: int) -> float:
        """Best achievable episode return in the given phase (exact DP over
        the deterministic corridor)."""
        probe_step = 0 if phase == 0 else self.shift_step
        # Value iteration over remaining-step budgets.
        values = np.zeros(self.length)
        for _ in range(self.max_episode_steps):
            new = np.full(self.length, -np.inf)
            for s in range(1, self.length - 1):
                for a in (0, 1):
                    s2 = s - 1 if a == 0 else s + 1
                    r = self.terminal_reward(s2, probe_step)
                    cont = 0.0 if s2 in (0, self.length - 1) else values[s2]
                    new[s] = max(new[s], r + cont)
            new[0] = 0.0
            new[self.length - 1] = 0.0
            values = new
        return float(values[self.length // 2])


def chain_step(
    env: NonstationaryChain, global_step: int, s: int, a: int, rng: np.random.Generator
) -> tuple[int, float, bool]:
    """Deterministic left/right move; reward only on entering a terminal
    end cell, with the sign depending on the phase at global_step."""
    if not 0 <= s < env.length:
        raise IndexError(f"state {s} out of range [0, {env.length})")
    if a not in (0, 1):
        raise IndexError(f"action {a} must be 0 (left) or 1 (right)")
    s_next = max(0, s - 1) if a == 0 else min(env.length - 1, s + 1)
    r = env.terminal_reward(s_next, global_step)
    done = s_next in (0, env.length - 1)
    return s_next, r, done
