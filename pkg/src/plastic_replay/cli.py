"""Command-line front door.

Subcommands:
  verify  run the tabular property suite; nonzero exit on any failure
  train   run the agent per (sampler, seed) cell and write metrics CSVs
  bench   time exact vs bucketed weight computation and sampling
  stats   aggregate metrics CSVs into IQM + stratified bootstrap CIs

Configuration is a flat key = value text file plus --key=value overrides.
All outputs are deterministic for a fixed configuration: floats are
written with shortest round-trip formatting and every random stream is
derived from the per-run seed.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import glob as globlib
import os
import sys
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from . import verify as verifylab
from .agent import AgentConfig, MetricsRow, run
from .buffer import ReplayBuffer, TimestampedTransition
from .envs import NonstationaryChain
from .errors import ConfigError
from .samplers import (
    SAMPLER_NAMES,
    DecaySchedule,
    PerConfig,
    bucket_rebuild,
    buffer_weights,
    sample_batch_bucketed,
    _categorical,
)
from .seeding import derive_rng
from .stats import ScoreMatrix, iqm, stratified_bootstrap_ci

METRICS_HEADER = ["global_step", "episode_return", "grad_l1", "grama_inactive_frac", "sampler", "seed"]


def _fmt(x: float) -> str:
    """Shortest-round-trip decimal form of a double."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    experiment: str = "chain-directional"
    env: str = "chain"
    chain_length: int = 5
    shift_step: int = 0  # 0 -> 40% of total_steps
    total_steps: int = 20_000
    samplers: tuple[str, ...] = ("swd", "uniform", "swa")
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    out_dir: str = "out"
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
    buffer_capacity: int = 0  # 0 -> total_steps (keep the whole history)
    decay_steps: int = 0  # 0 -> 80% of total_steps
    min_weight: float = 0.1
    tau: float = 1.0
    poly_p: float = 2.0
    bucket_count: int = 64
    per_alpha: float = 0.6
    per_beta: float = 0.4
    per_beta_increment: float = 1e-6
    per_epsilon: float = 1e-2
    log_every: int = 500
    grama_eval_batch: int = 512
    grama_tau: float = 0.1

    def __post_init__(self):
        if self.env != "chain":
            raise ConfigError(f"unknown env {self.env!r}; the training command supports 'chain'")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {self.seeds}")
        for name in self.samplers:
            if name not in SAMPLER_NAMES:
                raise ConfigError(f"unknown sampler {name!r}, expected one of {SAMPLER_NAMES}")


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _parse_str_tuple(text: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


_FIELD_PARSERS = {
    "experiment": str,
    "env": str,
    "chain_length": int,
    "shift_step": int,
    "total_steps": int,
    "samplers": _parse_str_tuple,
    "seeds": _parse_int_tuple,
    "out_dir": str,
    "gamma": float,
    "batch_size": int,
    "learning_starts": int,
    "train_frequency": int,
    "target_update_interval": int,
    "utd": int,
    "epsilon_start": float,
    "epsilon_end": float,
    "exploration_fraction": float,
    "learning_rate": float,
    "hidden_dims": _parse_int_tuple,
    "buffer_capacity": int,
    "decay_steps": int,
    "min_weight": float,
    "tau": float,
    "poly_p": float,
    "bucket_count": int,
    "per_alpha": float,
    "per_beta": float,
    "per_beta_increment": float,
    "per_epsilon": float,
    "log_every": int,
    "grama_eval_batch": int,
    "grama_tau": float,
}

assert set(_FIELD_PARSERS) == {f.name for f in fields(RunConfig)}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    """Parse flat `key = value` lines; '#' starts a comment."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _FIELD_PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown configuration key {key!r}")
        try:
            values[key] = _FIELD_PARSERS[key](value)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def load_run_config(path: str, overrides: list[str]) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        values = parse_config_text(f.read(), source=path)
    for token in overrides:
        if not token.startswith("--") or "=" not in token:
            raise ConfigError(f"override {token!r} must look like --key=value")
        key, _, value = token[2:].partition("=")
        if key not in _FIELD_PARSERS:
            raise ConfigError(f"override names unknown configuration key {key!r}")
        try:
            values[key] = _FIELD_PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad override value for {key!r}: {exc}") from exc
    return RunConfig(**values)


def agent_config_for(cfg: RunConfig, sampler: str, seed: int) -> AgentConfig:
    capacity = cfg.buffer_capacity if cfg.buffer_capacity > 0 else cfg.total_steps
    return AgentConfig(
        sampler=sampler,
        seed=seed,
        gamma=cfg.gamma,
        batch_size=cfg.batch_size,
        learning_starts=cfg.learning_starts,
        train_frequency=cfg.train_frequency,
        target_update_interval=cfg.target_update_interval,
        utd=cfg.utd,
        epsilon_start=cfg.epsilon_start,
        epsilon_end=cfg.epsilon_end,
        exploration_fraction=cfg.exploration_fraction,
        learning_rate=cfg.learning_rate,
        hidden_dims=cfg.hidden_dims,
        buffer_capacity=capacity,
        decay_steps=cfg.decay_steps,
        min_weight=cfg.min_weight,
        tau=cfg.tau,
        poly_p=cfg.poly_p,
        bucket_count=cfg.bucket_count,
        per=PerConfig(
            alpha=cfg.per_alpha, beta=cfg.per_beta,
            beta_increment=cfg.per_beta_increment, epsilon=cfg.per_epsilon,
        ),
        log_every=cfg.log_every,
        grama_eval_batch=cfg.grama_eval_batch,
        grama_tau=cfg.grama_tau,
    )


def env_for(cfg: RunConfig) -> NonstationaryChain:
    shift = cfg.shift_step if cfg.shift_step > 0 else (2 * cfg.total_steps) // 5
    return NonstationaryChain(length=cfg.chain_length, shift_step=shift)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def write_metrics_csv(path: str, rows: list[MetricsRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow(
                [
                    r.global_step,
                    _fmt(r.episode_return),
                    _fmt(r.grad_l1),
                    _fmt(r.grama_inactive_frac),
                    r.sampler_name,
                    r.seed,
                ]
            )


def _worker_count() -> int:
    raw = os.environ.get("PLASTIC_REPLAY_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"PLASTIC_REPLAY_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def _train_cell(payload: tuple[dict, str, int, str]) -> str:
    cfg_values, sampler, seed, out_path = payload
    cfg = RunConfig(**cfg_values)
    rows = run(agent_config_for(cfg, sampler, seed), env_for(cfg), cfg.total_steps)
    write_metrics_csv(out_path, rows)
    return out_path


def cmd_train(config_path: str, overrides: list[str]) -> int:
    cfg = load_run_config(config_path, overrides)
    exp_dir = os.path.join(cfg.out_dir, cfg.experiment)
    os.makedirs(exp_dir, exist_ok=True)

    cfg_values = {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}
    jobs = []
    for sampler in cfg.samplers:
        for seed in cfg.seeds:
            out_path = os.path.join(exp_dir, f"{sampler}_{seed}.csv")
            jobs.append((cfg_values, sampler, seed, out_path))

    workers = _worker_count()
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_train_cell, jobs))
    else:
        for job in jobs:
            _train_cell(job)

    manifest = os.path.join(exp_dir, "manifest.txt")
    with open(manifest, "w", encoding="utf-8") as f:
        for name in sorted(cfg_values):
            value = cfg_values[name]
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            f.write(f"{name} = {value}\n")
        for job in sorted(j[3] for j in jobs):
            f.write(f"file = {os.path.basename(job)}\n")
    print(f"wrote {len(jobs)} run CSVs and manifest to {exp_dir}")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def _bench_buffer(n: int) -> ReplayBuffer:
    buf = ReplayBuffer(n)
    obs = np.zeros(1)
    for t in range(n):
        buf.push(TimestampedTransition(obs, 0, 0.0, obs, False, timestamp=t))
    return buf


def run_bench(n: int, b: int, batch: int, reps: int) -> dict[str, float]:
    """Mean per-batch wall time of the weight phase and the sampling phase
    for exact vs bucketed age-weighted sampling."""
    if not n >= b >= 1:
        raise ConfigError(f"need N >= B >= 1, got N={n}, B={b}")
    schedule = DecaySchedule(kind="linear", T=80_000, w_min=0.1)
    buf = _bench_buffer(n)
    rng = np.random.default_rng(0)

    def time_exact() -> tuple[float, float]:
        t0 = time.perf_counter()
        w = buffer_weights(buf, schedule)
        t1 = time.perf_counter()
        _categorical(np.cumsum(w), batch, rng)
        t2 = time.perf_counter()
        return t1 - t0, t2 - t1

    def time_bucketed() -> tuple[float, float]:
        t0 = time.perf_counter()
        index = bucket_rebuild(buf, schedule, b)
        t1 = time.perf_counter()
        sample_batch_bucketed(index, buf, batch, rng)
        t2 = time.perf_counter()
        return t1 - t0, t2 - t1

    time_exact()  # warm-up both paths before timing
    time_bucketed()
    exact = np.array([time_exact() for _ in range(reps)])
    bucketed = np.array([time_bucketed() for _ in range(reps)])
    ew, es = exact.mean(axis=0)
    bw, bs = bucketed.mean(axis=0)
    return {
        "n": n,
        "b": b,
        "batch": batch,
        "reps": reps,
        "exact_weight_s": ew,
        "exact_sample_s": es,
        "bucket_weight_s": bw,
        "bucket_sample_s": bs,
        "weight_speedup": ew / bw,
        "total_speedup": (ew + es) / (bw + bs),
    }


def cmd_bench(n: int, b: int, batch: int, reps: int, out: str | None) -> int:
    result = run_bench(n, b, batch, reps)
    print(f"exact    weight {result['exact_weight_s'] * 1e3:9.3f} ms   "
          f"sample {result['exact_sample_s'] * 1e3:9.3f} ms")
    print(f"bucketed weight {result['bucket_weight_s'] * 1e3:9.3f} ms   "
          f"sample {result['bucket_sample_s'] * 1e3:9.3f} ms")
    print(f"weight-phase speedup {result['weight_speedup']:.1f}x, "
          f"total speedup {result['total_speedup']:.1f}x")
    if out:
        os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
        with open(out, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(list(result))
            w.writerow([result["n"], result["b"], result["batch"], result["reps"]]
                       + [_fmt(result[k]) for k in list(result)[4:]])
        print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------


def _final_score(path: str) -> tuple[str, str, float]:
    """(task, sampler, final episode_return) of one metrics CSV."""
    task = os.path.basename(os.path.dirname(path)) or "default"
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != METRICS_HEADER:
            raise ConfigError(f"{path}:1: unexpected header {header}")
        last = None
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(METRICS_HEADER):
                raise ConfigError(f"{path}:{lineno}: expected {len(METRICS_HEADER)} fields, got {len(row)}")
            try:
                score = float(row[1])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad episode_return {row[1]!r}") from exc
            last = (row[4], score)
        if last is None:
            raise ConfigError(f"{path}: no data rows")
    return task, last[0], last[1]


def cmd_stats(pattern: str, level: float, reps: int, out_dir: str, seed: int = 0) -> int:
    paths = sorted(globlib.glob(pattern))
    if not paths:
        print(f"error: no files match {pattern!r}", file=sys.stderr)
        return 2
    by_sampler: dict[str, dict[str, list[float]]] = {}
    for path in paths:
        task, sampler, score = _final_score(path)
        by_sampler.setdefault(sampler, {}).setdefault(task, []).append(score)

    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, "summary.csv")
    plot_path = os.path.join(out_dir, "plot_data.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as fs, open(
        plot_path, "w", newline="", encoding="utf-8"
    ) as fp:
        ws, wp = csv.writer(fs), csv.writer(fp)
        ws.writerow(["sampler", "n_tasks", "n_runs", "iqm", "ci_lo", "ci_hi", "level", "reps"])
        wp.writerow(["sampler", "iqm", "ylo", "yhi"])
        for sampler in sorted(by_sampler):
            matrix = ScoreMatrix({t: np.array(v) for t, v in sorted(by_sampler[sampler].items())})
            point = iqm(matrix.pooled())
            lo, hi = stratified_bootstrap_ci(matrix, reps, level, derive_rng(seed, f"stats-{sampler}"))
            n_runs = sum(len(v) for v in by_sampler[sampler].values())
            print(f"{sampler:14s} IQM {point:10.4f}   CI[{level:.0%}] ({lo:.4f}, {hi:.4f})   "
                  f"tasks {len(by_sampler[sampler])}, runs {n_runs}")
            ws.writerow([sampler, len(by_sampler[sampler]), n_runs,
                         _fmt(point), _fmt(lo), _fmt(hi), _fmt(level), reps])
            wp.writerow([sampler, _fmt(point), _fmt(lo), _fmt(hi)])
    print(f"wrote {summary_path} and {plot_path}")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(quick: bool, trace_dir: str | None) -> int:
    results = verifylab.run_all(quick=quick)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.detail}")
        failed += 0 if r.passed else 1
    if trace_dir:
        _write_verify_traces(trace_dir, quick)
    if failed:
        print(f"{failed} check(s) failed", file=sys.stderr)
        return 1
    print("all checks passed")
    return 0


def _write_verify_traces(trace_dir: str, quick: bool) -> None:
    """Per-round gradient-norm traces (uniform vs age-weighted) as CSV."""
    from .theory import fqi_run, fresh_start_instance

    os.makedirs(trace_dir, exist_ok=True)
    rounds = 128 if quick else 512
    schedule = DecaySchedule(kind="linear", T=rounds, w_min=0.1)
    for i in range(2):
        mdp, starts = fresh_start_instance(400 + i, rounds)
        res = fqi_run(mdp, rounds, sampler_weighting=schedule,
                      rng=np.random.default_rng(400 + i), initial_states=starts)
        path = os.path.join(trace_dir, f"gradient_trace_{i}.csv")
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["k", "grad_norm", "weighted_grad_norm"])
            for k in range(rounds):
                w.writerow([k + 1, _fmt(res.grad_norms[k, 0]), _fmt(res.weighted_grad_norms[k, 0])])
        print(f"wrote {path}")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="plastic-replay", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run the tabular property suite")
    p_verify.add_argument("--quick", action="store_true", help="reduced instance counts")
    p_verify.add_argument("--trace-dir", default=None, help="also dump gradient-trace CSVs here")

    p_train = sub.add_parser("train", help="run agent cells and write metrics CSVs")
    p_train.add_argument("--config", required=True, help="flat key = value configuration file")

    p_bench = sub.add_parser("bench", help="time exact vs bucketed sampling")
    p_bench.add_argument("--n", type=int, required=True, help="buffer size")
    p_bench.add_argument("--b", type=int, required=True, help="bucket count")
    p_bench.add_argument("--batch", type=int, default=256)
    p_bench.add_argument("--reps", type=int, default=30)
    p_bench.add_argument("--out", default=None, help="optional CSV output path")

    p_stats = sub.add_parser("stats", help="aggregate metrics CSVs")
    p_stats.add_argument("--glob", required=True, help="glob over metrics CSV files")
    p_stats.add_argument("--level", type=float, default=0.95)
    p_stats.add_argument("--reps", type=int, default=2000)
    p_stats.add_argument("--out", default=os.path.join("out", "stats"))

    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "verify":
            if extra:
                parser.error(f"unrecognized arguments: {' '.join(extra)}")
            return cmd_verify(args.quick, args.trace_dir)
        if args.command == "train":
            return cmd_train(args.config, extra)
        if args.command == "bench":
            if extra:
                parser.error(f"unrecognized arguments: {' '.join(extra)}")
            return cmd_bench(args.n, args.b, args.batch, args.reps, args.out)
        if args.command == "stats":
            if extra:
                parser.error(f"unrecognized arguments: {' '.join(extra)}")
            return cmd_stats(args.glob, args.level, args.reps, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
