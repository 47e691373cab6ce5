"""Greedy topology-sensitivity descent.

Each iteration evaluates every single-DOF removal/addition and commits the
one with the best (lowest) objective value, provided it strictly improves.
Strict improvement guarantees cycle-freedom; the terminal word has no
improving single-bit neighbour (1-swap optimality).
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .model import ObjectiveSpec, OperatorBundle, StructureState
from .reanalysis import Candidate, Move, commit, evaluate_candidates

__all__ = [
    "LocalTraceEntry",
    "SensitivityRow",
    "local_search",
    "sensitivity_map",
    "write_sensitivity_csv",
    "read_sensitivity_csv",
]


@dataclass
class LocalTraceEntry:
    iteration: int
    f: float
    move: Move
    removals_evaluated: int
    additions_evaluated: int
    elapsed_s: float


def _move_rank(c: Candidate) -> tuple:
    # ties: lowest DOF index, removals before additions
    return (c.f, c.move.dof, 0 if c.move.kind == "remove" else 1)


def local_search(state: StructureState, bundle: OperatorBundle,
                 objective: ObjectiveSpec, eps_loc: float = 1e-7,
                 max_iters: int = 10000) -> tuple[StructureState, list[LocalTraceEntry]]:
    """Descend to a 1-swap-optimal word; f is non-increasing along the trace.

    Stops when no move strictly improves, when the relative change between
    consecutive objective values drops below eps_loc, or at max_iters.
    """
    trace: list[LocalTraceEntry] = []
    start = time.perf_counter()
    for it in range(1, max_iters + 1):
        candidates = evaluate_candidates(state, bundle, objective)
        if not candidates:
            break
        best = min(candidates, key=_move_rank)
        if not best.f < state.f_val:
            break
        f_prev = state.f_val
        commit(state, bundle, best.move, objective)
        trace.append(LocalTraceEntry(
            iteration=it, f=state.f_val, move=best.move,
            removals_evaluated=state.counters.removals_evaluated,
            additions_evaluated=state.counters.additions_evaluated,
            elapsed_s=time.perf_counter() - start))
        rel = abs(f_prev - state.f_val) / max(abs(f_prev), 1e-300)
        if rel < eps_loc:
            break
    return state, trace


@dataclass
class SensitivityRow:
    dof_index: int
    enabled: bool
    move: str
    tau: float
    f_candidate: float


def sensitivity_map(state: StructureState, bundle: OperatorBundle,
                    objective: ObjectiveSpec) -> list[SensitivityRow]:
    """Per-DOF sensitivity table over every controllable DOF.

    Enabled DOF get their removal tau, disabled DOF their addition tau;
    tau < 0 flags a move that would improve the objective.
    """
    enabled = np.zeros(bundle.n_dof, dtype=bool)
    enabled[state.enabled] = True
    rows = [SensitivityRow(dof_index=c.move.dof,
                           enabled=bool(enabled[c.move.dof]),
                           move=c.move.kind, tau=c.tau, f_candidate=c.f)
            for c in evaluate_candidates(state, bundle, objective)]
    rows.sort(key=lambda r: r.dof_index)
    return rows


def write_sensitivity_csv(rows: list[SensitivityRow], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dof_index", "enabled", "move", "tau", "f_candidate"])
        for r in rows:
            writer.writerow([r.dof_index, int(r.enabled), r.move,
                             repr(r.tau), repr(r.f_candidate)])


def read_sensitivity_csv(path: Union[str, Path]) -> list[SensitivityRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(SensitivityRow(
                dof_index=int(rec["dof_index"]),
                enabled=bool(int(rec["enabled"])),
                move=rec["move"],
                tau=float(rec["tau"]),
                f_candidate=float(rec["f_candidate"])))
    return rows
