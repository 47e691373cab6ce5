"""Genetic global step, memetically composed with the local step.

Iteration 1 evaluates random seed words only; from iteration 2 onward every
agent is driven to a local minimum before selection, so the population
always consists of locally optimal words. Elitism keeps the best words
verbatim; tournament selection, uniform crossover, and per-bit mutation
restore diversity.

Determinism contract: every random decision draws from a stream keyed by
(seed, iteration, agent slot), and results are merged in slot order, so runs
are bit-identical regardless of worker-pool size.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigurationError, InfeasibleWordError
from .model import (ObjectiveKind, ObjectiveSpec, OperatorBundle, RunConfig,
                    Word, word_from_enabled)
from .objectives import eval_gamma, eval_q
from .reanalysis import init_state
from .local_step import local_search

__all__ = [
    "Agent",
    "IterationLog",
    "MemeticResult",
    "memetic_optimize",
    "SweepPoint",
    "pareto_sweep",
    "nondominated_mask",
    "write_convergence_csv",
    "write_frontier_csv",
    "write_word_file",
    "read_word_file",
]


@dataclass
class Agent:
    """One member of the population: a locally optimal word and its value."""

    word: Word
    f_val: float
    local_commits: int = 0
    stream_key: tuple = ()


@dataclass
class IterationLog:
    iteration: int
    best_f: float
    mean_f: float
    agent_f: tuple
    hamming_mean: float
    removals_cum: int
    additions_cum: int
    elapsed_s: float
    best_word: Word


@dataclass
class MemeticResult:
    best: Agent
    log: list[IterationLog]
    iterations_used: int
    wall_time_s: float
    removals_evaluated: int
    additions_evaluated: int


def _agent_rng(seed: int, iteration: int, slot: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, iteration, slot)))


def _hamming_mean(words: list[Word]) -> float:
    n = len(words)
    if n < 2:
        return 0.0
    bits = np.stack([w.bits for w in words]).astype(np.int8)
    total = 0
    for i in range(n):
        total += int(np.abs(bits[i + 1:] - bits[i]).sum())
    return total / (n * (n - 1) / 2)


def _evaluate_slot(bundle: OperatorBundle, objective: ObjectiveSpec,
                   config: RunConfig, word: Word, iteration: int,
                   slot: int, run_local: bool):
    """Evaluate one word, optionally driving it to a local minimum.

    Returns (agent, removals_delta, additions_delta).
    """
    try:
        state = init_state(bundle, word, objective,
                           refactor_period=config.refactor_period)
    except InfeasibleWordError:
        return Agent(word=word, f_val=float("inf"),
                     stream_key=(iteration, slot)), 0, 0
    commits = 0
    if run_local:
        state, trace = local_search(state, bundle, objective,
                                    eps_loc=config.eps_loc,
                                    max_iters=config.max_local_iters)
        commits = len(trace)
        word = word_from_enabled(state.enabled, bundle)
    return (Agent(word=word, f_val=state.f_val, local_commits=commits,
                  stream_key=(iteration, slot)),
            state.counters.removals_evaluated,
            state.counters.additions_evaluated)


def _tournament(pop: list[Agent], rng: np.random.Generator, size: int) -> Agent:
    idx = rng.integers(0, len(pop), size=size)
    best = min(idx, key=lambda i: (pop[i].f_val, i))
    return pop[int(best)]


def _offspring(pop: list[Agent], rng: np.random.Generator,
               config: RunConfig, mutation_rate: float) -> Word:
    a = _tournament(pop, rng, config.tournament_size)
    b = _tournament(pop, rng, config.tournament_size)
    child = a.word.bits.copy()
    if rng.random() < config.crossover_rate:
        take_b = rng.random(child.size) < 0.5
        child[take_b] = b.word.bits[take_b]
    flips = rng.random(child.size) < mutation_rate
    child ^= flips
    return Word(child)


def memetic_optimize(bundle: OperatorBundle, objective: ObjectiveSpec,
                     config: RunConfig, threads: int = 1) -> MemeticResult:
    """Run the memetic loop; returns the best agent and a per-iteration log.

    Stops after max_global_iters iterations or when the relative improvement
    of the best objective between consecutive iterations falls below
    eps_glob.
    """
    config.validate()
    objective.validate_for(bundle)
    n_opt = bundle.n_opt
    if n_opt < 1:
        raise ConfigurationError("bundle has no controllable DOF to optimize")
    mutation_rate = config.mutation_rate if config.mutation_rate is not None \
        else 1.0 / n_opt
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def run_batch(jobs):
        # jobs: list of (word, iteration, slot, run_local); slot-ordered merge
        fn = lambda args: _evaluate_slot(bundle, objective, config, *args)
        if pool is None:
            return [fn(j) for j in jobs]
        return list(pool.map(fn, jobs))

    t0 = time.perf_counter()
    log: list[IterationLog] = []
    removals_cum = 0
    additions_cum = 0

    try:
        # iteration 1: random seed words, no local step yet
        seeds = []
        for i in range(config.n_agents):
            rng = _agent_rng(config.rng_seed, 1, i)
            bits = rng.random(n_opt) < config.init_fill_probability
            seeds.append((Word(bits), 1, i, False))
        results = run_batch(seeds)
        pop = [r[0] for r in results]
        removals_cum += sum(r[1] for r in results)
        additions_cum += sum(r[2] for r in results)

        def log_iteration(j):
            fs = np.array([a.f_val for a in pop])
            best_slot = int(min(range(len(pop)), key=lambda i: (pop[i].f_val, i)))
            log.append(IterationLog(
                iteration=j, best_f=float(fs[best_slot]), mean_f=float(np.mean(fs)),
                agent_f=tuple(float(v) for v in fs),
                hamming_mean=_hamming_mean([a.word for a in pop]),
                removals_cum=removals_cum, additions_cum=additions_cum,
                elapsed_s=time.perf_counter() - t0,
                best_word=pop[best_slot].word.copy()))

        log_iteration(1)
        iterations = 1
        for j in range(2, config.max_global_iters + 1):
            order = sorted(range(len(pop)), key=lambda i: (pop[i].f_val, i))
            elites = [pop[i] for i in order[:config.elitism_count]]

            jobs = []
            keep: list[Optional[Agent]] = []
            for slot in range(config.n_agents):
                if slot < len(elites):
                    if j == 2:
                        # first local pass: elites are still raw seeds
                        jobs.append((elites[slot].word.copy(), j, slot, True))
                        keep.append(None)
                    else:
                        keep.append(elites[slot])
                else:
                    rng = _agent_rng(config.rng_seed, j, slot)
                    jobs.append((_offspring(pop, rng, config, mutation_rate),
                                 j, slot, True))
                    keep.append(None)
            results = run_batch(jobs)
            it = iter(results)
            new_pop = []
            for slot in range(config.n_agents):
                if keep[slot] is not None:
                    new_pop.append(keep[slot])
                else:
                    agent, dr, da = next(it)
                    removals_cum += dr
                    additions_cum += da
                    new_pop.append(agent)
            pop = new_pop
            log_iteration(j)
            iterations = j

            prev, cur = log[-2].best_f, log[-1].best_f
            if np.isfinite(prev) and np.isfinite(cur):
                if abs(prev - cur) / max(abs(prev), 1e-300) < config.eps_glob:
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    best_slot = int(min(range(len(pop)), key=lambda i: (pop[i].f_val, i)))
    return MemeticResult(best=pop[best_slot], log=log,
                         iterations_used=iterations,
                         wall_time_s=time.perf_counter() - t0,
                         removals_evaluated=removals_cum,
                         additions_evaluated=additions_cum)


def write_convergence_csv(log: list[IterationLog], path: Union[str, Path],
                          log_wall_time: bool = False) -> None:
    """Per-agent convergence rows: iter,agent,f,hamming_mean,removals_cum,additions_cum,elapsed_s.

    Wall time is volatile; unless `log_wall_time` is set the column is
    written as 0.0 so identical runs produce byte-identical files.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "agent", "f", "hamming_mean",
                         "removals_cum", "additions_cum", "elapsed_s"])
        for entry in log:
            elapsed = repr(entry.elapsed_s) if log_wall_time else "0.0"
            for agent_idx, f in enumerate(entry.agent_f):
                writer.writerow([entry.iteration, agent_idx, repr(f),
                                 repr(entry.hamming_mean), entry.removals_cum,
                                 entry.additions_cum, elapsed])


def write_word_file(word: Word, bundle_hash: str, path: Union[str, Path]) -> None:
    """One ASCII 0/1 per controllable DOF, after a header naming the bundle."""
    with open(path, "w") as fh:
        fh.write(f"# bundle_hash={bundle_hash}\n")
        fh.write(word.to_string() + "\n")


def read_word_file(path: Union[str, Path],
                   expected_hash: Optional[str] = None) -> tuple[Word, Optional[str]]:
    lines = Path(path).read_text().splitlines()
    header = None
    bits_line = None
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "bundle_hash=" in line:
                header = line.split("bundle_hash=", 1)[1].strip()
            continue
        bits_line = line
        break
    if bits_line is None:
        raise ConfigurationError(f"no word found in {path}")
    if expected_hash is not None and header is not None and header != expected_hash:
        raise ConfigurationError(
            f"word file was produced for bundle {header}, not {expected_hash}")
    return Word.from_string(bits_line), header


@dataclass
class SweepPoint:
    zeta: float
    q_over_qlb: float
    gamma_sq: float
    best_f: float
    best_word: Word
    dominated: bool = False


def nondominated_mask(points: np.ndarray) -> np.ndarray:
    """Boolean mask of nondominated rows of an (n, 2) array (minimize both)."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if (pts[j, 0] <= pts[i, 0] and pts[j, 1] <= pts[i, 1]
                    and (pts[j, 0] < pts[i, 0] or pts[j, 1] < pts[i, 1])):
                keep[i] = False
                break
    return keep


def pareto_sweep(bundle: OperatorBundle, objective_template: ObjectiveSpec,
                 zeta_values, config: RunConfig, threads: int = 1
                 ) -> tuple[list[SweepPoint], list[MemeticResult]]:
    """Scalarized trade-off sweep: one memetic run per weight zeta.

    Each run's best word is scored in the (Q/Q_lb, |Gamma|^2) plane and the
    nondominated subset is flagged as the frontier.
    """
    zetas = list(zeta_values)
    if not zetas:
        raise ConfigurationError("zeta sweep needs at least one value")
    if objective_template.kind != ObjectiveKind.Q_MATCHED:
        raise ConfigurationError("pareto_sweep expects a q_matched objective template")
    feed = objective_template.resolved_feed_index(bundle)
    v = bundle.excitation(objective_template.excitation_index)

    points: list[SweepPoint] = []
    results: list[MemeticResult] = []
    for zi, zeta in enumerate(zetas):
        spec = objective_template.with_zeta(zeta)
        seed = int(np.random.SeedSequence((config.rng_seed, zi)).generate_state(1)[0])
        cfg = replace(config, rng_seed=seed)
        res = memetic_optimize(bundle, spec, cfg, threads=threads)
        state = init_state(bundle, res.best.word, spec,
                           refactor_period=config.refactor_period)
        current = state.embedded_current(bundle.n_dof)
        q = eval_q(current, bundle).q
        _, gamma = eval_gamma(current, v, feed, spec.Z0)
        points.append(SweepPoint(zeta=float(zeta),
                                 q_over_qlb=q / spec.q_lb_ref,
                                 gamma_sq=abs(gamma) ** 2,
                                 best_f=res.best.f_val,
                                 best_word=res.best.word))
        results.append(res)

    mask = nondominated_mask(np.array([[p.q_over_qlb, p.gamma_sq] for p in points]))
    for p, keep in zip(points, mask):
        p.dominated = not keep
    return points, results


def write_frontier_csv(points: list[SweepPoint], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["zeta", "q_over_qlb", "gamma_sq", "dominated"])
        for p in points:
            writer.writerow([repr(p.zeta), repr(p.q_over_qlb),
                             repr(p.gamma_sq), int(p.dominated)])
