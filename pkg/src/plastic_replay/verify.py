"""Property suite behind the `verify` command.

Each check builds randomized instances, runs an independent oracle
(frequency counting, full enumeration, exact DP) against the closed-form
implementation, and reports the worst residual observed. These are the
same identities the acceptance tests pin; here they are packaged for a
one-command health check of an installed copy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import random_mdp
from .samplers import DecaySchedule
from .theory import (
    EmpiricalDistribution,
    TabularQ,
    bellman_apply,
    dist_update,
    fqi_run,
    fresh_start_instance,
    gradient_decay_slope,
    initial_gradient_decomposition,
    optimal_q,
    population_loss_decomposition,
    suboptimality_check,
)

SLOPE_BAND = (-1.2, -0.8)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_masses(rng: np.random.Generator, S: int, A: int) -> EmpiricalDistribution:
    m = rng.random((S, A))
    return EmpiricalDistribution(masses=m / m.sum(), count=1)


def check_recursion(visits: int = 10_000, seed: int = 0) -> CheckResult:
    """Convex-recursion masses vs direct frequency counts."""
    rng = np.random.default_rng(seed)
    S, A = 6, 3
    mu = EmpiricalDistribution.empty(S, A)
    counts = np.zeros((S, A))
    for _ in range(visits):
        s, a = int(rng.integers(S)), int(rng.integers(A))
        mu = dist_update(mu, (s, a))
        counts[s, a] += 1.0
    worst = float(np.max(np.abs(mu.masses - counts / visits)))
    return CheckResult("distribution recursion", worst <= 1e-12, f"max residual {worst:.3e}")


def check_loss_decomposition(instances: int = 50, seed: int = 1) -> CheckResult:
    """Residual + variance terms vs full enumeration of the expected loss."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(instances):
        S, A, H = int(rng.integers(2, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
        mdp = random_mdp(seed * 1000 + i, S, A, H)
        h = int(rng.integers(1, H + 1))
        mu = _random_masses(rng, S, A)
        f = rng.uniform(0.0, H, size=(S, A))
        g = rng.uniform(0.0, H, size=(S, A))
        resid, var = population_loss_decomposition(mu, mdp, h, f, g)
        vg = np.max(g, axis=1)
        # E over (s,a) ~ mu and s' ~ P of the squared sampled-target error.
        per_successor = (f[:, :, None] - mdp.R[h - 1][:, :, None] - vg[None, None, :]) ** 2
        enumerated = float(np.sum(mu.masses * np.sum(mdp.P[h - 1] * per_successor, axis=2)))
        worst = max(worst, abs(resid + var - enumerated))
    return CheckResult("loss decomposition", worst <= 1e-12, f"max residual {worst:.3e}")


def check_gradient_identity(instances: int = 50, seed: int = 2) -> CheckResult:
    """lhs = distributional-shift + target-drift, and drift == 0 at h = H."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_drift_at_h = 0.0
    for i in range(instances):
        S, A, H = int(rng.integers(2, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
        mdp = random_mdp(seed * 1000 + i, S, A, H)
        h = H if i % 2 == 0 else int(rng.integers(1, H + 1))
        k = int(rng.integers(2, 40))
        mu_prev = EmpiricalDistribution.empty(S, A)
        for _ in range(k - 1):
            mu_prev = dist_update(mu_prev, (int(rng.integers(S)), int(rng.integers(A))))
        if h == H:
            f_next_prev = np.zeros((S, A))
            f_next_cur = np.zeros((S, A))
        else:
            f_next_prev = rng.uniform(0.0, H, size=(S, A))
            f_next_cur = rng.uniform(0.0, H, size=(S, A))
        t_prev = bellman_apply(mdp, h, f_next_prev)
        f_prev = rng.uniform(0.0, H, size=(S, A))
        support = mu_prev.masses > 0.0
        f_prev[support] = t_prev[support]  # exact minimizer of the previous round
        visit = (int(rng.integers(S)), int(rng.integers(A)))
        mu_k = dist_update(mu_prev, visit)
        d_hat = np.zeros((S, A))
        d_hat[visit] = 1.0
        dec = initial_gradient_decomposition(
            mu_k, d_hat, mdp, h, f_prev, f_next_prev, f_next_cur, k
        )
        worst = max(worst, dec.residual())
        if h == H:
            worst_drift_at_h = max(worst_drift_at_h, float(np.max(np.abs(dec.target_drift_term))))
    ok = worst <= 1e-9 and worst_drift_at_h == 0.0
    return CheckResult(
        "gradient decomposition",
        ok,
        f"max identity residual {worst:.3e}, max drift at h=H {worst_drift_at_h:.3e}",
    )


def check_suboptimality_bound(instances: int = 100, seed: int = 3) -> CheckResult:
    """gap <= bound on random value tables; exact equality at the optimum."""
    rng = np.random.default_rng(seed)
    violations = 0
    worst_slack = np.inf
    exact_ok = True
    for i in range(instances):
        S, A, H = int(rng.integers(2, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
        mdp = random_mdp(seed * 1000 + i, S, A, H)
        f_hats = TabularQ(rng.uniform(0.0, H, size=(H, S, A)))
        gap, bound = suboptimality_check(mdp, f_hats)
        if gap > bound:
            violations += 1
        worst_slack = min(worst_slack, bound - gap)
        gap0, bound0 = suboptimality_check(mdp, TabularQ(optimal_q(mdp)))
        if gap0 != 0.0 or bound0 != 0.0:
            exact_ok = False
    ok = violations == 0 and exact_ok
    return CheckResult(
        "suboptimality bound",
        ok,
        f"{instances - violations}/{instances} hold, min slack {worst_slack:.3e}, "
        f"exact at optimum: {exact_ok}",
    )


def check_decay_slope(
    instances: int = 10, rounds: int = 1024, k_min: int = 16, seed: int = 4
) -> CheckResult:
    """log-log slope of the final-step gradient norm vs round index."""
    slopes = []
    for i in range(instances):
        mdp, starts = fresh_start_instance(seed * 100 + i, rounds)
        res = fqi_run(mdp, rounds, rng=np.random.default_rng(seed * 100 + i), initial_states=starts)
        slopes.append(gradient_decay_slope(res.grad_norms[:, mdp.H - 1], k_min, rounds))
    lo, hi = min(slopes), max(slopes)
    ok = SLOPE_BAND[0] <= lo and hi <= SLOPE_BAND[1]
    return CheckResult(
        "1/k gradient decay", ok, f"slopes in [{lo:.3f}, {hi:.3f}] (band {SLOPE_BAND})"
    )


def check_swd_restoration(instances: int = 10, rounds: int = 256, seed: int = 5) -> CheckResult:
    """Age-weighted gradient norm exceeds uniform's in late rounds."""
    schedule = DecaySchedule(kind="linear", T=rounds, w_min=0.1)
    worst_frac = 1.0
    for i in range(instances):
        mdp, starts = fresh_start_instance(seed * 100 + i, rounds)
        res = fqi_run(
            mdp, rounds, sampler_weighting=schedule,
            rng=np.random.default_rng(seed * 100 + i), initial_states=starts,
        )
        late = slice(rounds // 2, rounds)
        uniform = res.grad_norms[late, mdp.H - 1]
        weighted = res.weighted_grad_norms[late, mdp.H - 1]
        worst_frac = min(worst_frac, float(np.mean(weighted > uniform)))
    return CheckResult(
        "weighted gradient restoration", worst_frac >= 0.9,
        f"min late-round win fraction {worst_frac:.3f}",
    )


def run_all(quick: bool = False) -> list[CheckResult]:
    if quick:
        return [
            check_recursion(visits=2000),
            check_loss_decomposition(instances=10),
            check_gradient_identity(instances=10),
            check_suboptimality_bound(instances=20),
            check_decay_slope(instances=3, rounds=256),
            check_swd_restoration(instances=3, rounds=128),
        ]
    return [
        check_recursion(),
        check_loss_decomposition(),
        check_gradient_identity(),
        check_suboptimality_bound(),
        check_decay_slope(),
        check_swd_restoration(),
    ]
