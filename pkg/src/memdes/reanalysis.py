"""Inversion-free structural reanalysis.

The kernel maintains Y = (Z[S,S])^-1 for the enabled set S and produces the
exact currents of every single-DOF removal and addition in one batch:

  removal of position p:   I' = I - Y[:,p] * (I[p] / Y[p,p])
  addition of DOF m:       u = Y Z[S,m],  s = Z[m,m] - Z[S,m]^T u,
                           i_m = (V[m] - Z[S,m]^T I) / s,  I' = I - u i_m

Transposes are unconjugated throughout: Z is complex symmetric
(reciprocity), hence so is Y. Committing a move applies the matching rank-1
(or bordered) update to Y; a periodic or residual-triggered refactorization
bounds floating-point drift on long walks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import InfeasibleWordError, InvalidMoveError
from .model import (EvalCounters, ObjectiveSpec, OperatorBundle, StructureState,
                    Word, materialize)
from .objectives import objective_batch, objective_value

__all__ = [
    "Move",
    "Candidate",
    "CandidateBatch",
    "init_state",
    "batch_removal_currents",
    "batch_addition_currents",
    "commit",
    "evaluate_candidates",
    "residual",
]

# Relative pivot floor below which a candidate move is flagged infeasible.
_PIVOT_RTOL = 1e-12
# Condition estimate above which a word's reduced system counts as singular.
_COND_LIMIT = 1e14
# Residual level that forces a refactorization after a commit.
_RESIDUAL_LIMIT = 1e-9


class Move(NamedTuple):
    kind: str  # "remove" | "add"
    dof: int


class Candidate(NamedTuple):
    move: Move
    f: float
    tau: float


@dataclass
class CandidateBatch:
    """Exact candidate currents for one move family.

    `currents` holds one full-length (zero-padded) current per column, in
    ascending DOF order; infeasible columns are zeroed and flagged.
    """

    kind: str
    dofs: np.ndarray
    feasible: np.ndarray
    currents: np.ndarray
    pivots: np.ndarray
    token: int


def _v_restricted(bundle: OperatorBundle, state: StructureState) -> np.ndarray:
    return bundle.excitation(state.excitation_index)[state.enabled]


def residual(state: StructureState, bundle: OperatorBundle) -> float:
    """Drift guard ||Z[S,S] I - V[S]|| / ||V[S]||."""
    S = state.enabled
    v = _v_restricted(bundle, state)
    r = np.linalg.norm(bundle.Z[np.ix_(S, S)] @ state.I - v)
    return float(r / max(np.linalg.norm(v), 1e-300))


def _factorize(state: StructureState, bundle: OperatorBundle) -> None:
    S = state.enabled
    Zs = bundle.Z[np.ix_(S, S)]
    try:
        cond = np.linalg.cond(Zs)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise InfeasibleWordError(
            f"reduced system is numerically singular (cond ~ {cond:.2e})")
    Y = np.linalg.inv(Zs)
    state.Y = 0.5 * (Y + Y.T)  # Z symmetric -> Y symmetric; keep it exact
    state.I = state.Y @ _v_restricted(bundle, state)
    state.commits_since_refactor = 0
    state.last_residual = residual(state, bundle)


def init_state(bundle: OperatorBundle, word: Word,
               objective: Optional[ObjectiveSpec] = None,
               excitation_index: Optional[int] = None,
               refactor_period: int = 64) -> StructureState:
    """Direct factorization at agent birth; counters start at zero."""
    S = materialize(word, bundle)
    if S.size == 0:
        raise InfeasibleWordError("empty enabled set")
    exc = excitation_index
    if exc is None:
        exc = objective.excitation_index if objective is not None else 0
    state = StructureState(enabled=S, Y=np.empty((0, 0)), I=np.empty(0),
                           excitation_index=exc, refactor_period=refactor_period)
    _factorize(state, bundle)
    state.refactor_count = 0
    if objective is not None:
        state.f_val = objective_value(state.embedded_current(bundle.n_dof),
                                      bundle, objective)
    return state


def batch_removal_currents(state: StructureState,
                           bundle: OperatorBundle) -> CandidateBatch:
    """Candidate currents for removing each enabled, non-fixed DOF."""
    S = state.enabled
    removable = ~bundle.fixed_mask[S]
    positions = np.flatnonzero(removable)
    dofs = S[positions]
    k = dofs.size

    diag = np.diagonal(state.Y)
    pivot_floor = _PIVOT_RTOL * max(np.max(np.abs(diag)), 1e-300)
    d = diag[positions]
    feasible = np.abs(d) > pivot_floor

    currents = np.zeros((bundle.n_dof, k), dtype=np.complex128)
    if k:
        coef = np.where(feasible, state.I[positions] / np.where(feasible, d, 1.0), 0.0)
        cand = state.I[:, None] - state.Y[:, positions] * coef[None, :]
        cand[positions, np.arange(k)] = 0.0  # removed entry drops out exactly
        currents[S, :] = cand
        currents[:, ~feasible] = 0.0

    state.counters.removals_evaluated += k
    state.batch_token = state.mutation_token
    batch = CandidateBatch(kind="remove", dofs=dofs, feasible=feasible,
                           currents=currents, pivots=d, token=state.mutation_token)
    state._removal_batch = batch
    return batch


def batch_addition_currents(state: StructureState,
                            bundle: OperatorBundle) -> CandidateBatch:
    """Candidate currents for adding each controllable, disabled DOF."""
    S = state.enabled
    disabled = bundle.controllable_mask.copy()
    disabled[S] = False
    dofs = np.flatnonzero(disabled)
    k = dofs.size

    zdiag_max = max(np.max(np.abs(np.diagonal(bundle.Z))), 1e-300)
    currents = np.zeros((bundle.n_dof, k), dtype=np.complex128)
    if k:
        B = bundle.Z[np.ix_(S, dofs)]
        U = state.Y @ B
        s = np.diagonal(bundle.Z)[dofs] - np.einsum("ij,ij->j", B, U)
        feasible = np.abs(s) > _PIVOT_RTOL * zdiag_max
        v = bundle.excitation(state.excitation_index)
        i_new = np.where(feasible,
                         (v[dofs] - state.I @ B) / np.where(feasible, s, 1.0), 0.0)
        cand = state.I[:, None] - U * i_new[None, :]
        currents[S, :] = cand
        currents[dofs, np.arange(k)] = i_new
        currents[:, ~feasible] = 0.0
    else:
        s = np.zeros(0, dtype=np.complex128)
        feasible = np.zeros(0, dtype=bool)

    state.counters.additions_evaluated += k
    state.batch_token = state.mutation_token
    batch = CandidateBatch(kind="add", dofs=dofs, feasible=feasible,
                           currents=currents, pivots=s, token=state.mutation_token)
    state._addition_batch = batch
    return batch


def _require_feasible(state: StructureState, move: Move) -> None:
    attr = "_removal_batch" if move.kind == "remove" else "_addition_batch"
    batch = getattr(state, attr, None)
    if batch is None or batch.token != state.mutation_token:
        raise InvalidMoveError("commit requires a candidate batch computed for "
                               "the current state")
    pos = np.searchsorted(batch.dofs, move.dof)
    if pos >= batch.dofs.size or batch.dofs[pos] != move.dof:
        raise InvalidMoveError(f"DOF {move.dof} is not a {move.kind} candidate")
    if not batch.feasible[pos]:
        raise InvalidMoveError(f"{move.kind} of DOF {move.dof} was flagged infeasible")


def commit(state: StructureState, bundle: OperatorBundle, move: Move,
           objective: Optional[ObjectiveSpec] = None) -> StructureState:
    """Apply one structural move, updating Y in place (rank-1 / bordered).

    Every `refactor_period` commits, or whenever the solve residual exceeds
    1e-9, Y is rebuilt by direct factorization.
    """
    _require_feasible(state, move)
    S = state.enabled

    if move.kind == "remove":
        p = state.position_of(move.dof)
        y = state.Y[:, p]
        d = state.Y[p, p]
        Ym = np.delete(np.delete(state.Y, p, axis=0), p, axis=1)
        ym = np.delete(y, p)
        state.Y = Ym - np.outer(ym, ym) / d
        state.enabled = np.delete(S, p)
    elif move.kind == "add":
        m = int(move.dof)
        b = bundle.Z[S, m]
        u = state.Y @ b
        s = bundle.Z[m, m] - np.dot(b, u)
        q = int(np.searchsorted(S, m))
        k = S.size
        Ynew = np.empty((k + 1, k + 1), dtype=np.complex128)
        keep = np.concatenate([np.arange(q), np.arange(q + 1, k + 1)])
        core = state.Y + np.outer(u, u) / s
        Ynew[np.ix_(keep, keep)] = core
        Ynew[keep, q] = -u / s
        Ynew[q, keep] = -u / s
        Ynew[q, q] = 1.0 / s
        state.Y = Ynew
        state.enabled = np.insert(S, q, m)
    else:
        raise InvalidMoveError(f"unknown move kind {move.kind!r}")

    state.mutation_token += 1
    state.commit_count += 1
    state.commits_since_refactor += 1
    state.I = state.Y @ _v_restricted(bundle, state)

    if state.commits_since_refactor >= state.refactor_period:
        _factorize(state, bundle)
        state.refactor_count += 1
    else:
        state.last_residual = residual(state, bundle)
        if state.last_residual > _RESIDUAL_LIMIT:
            _factorize(state, bundle)
            state.refactor_count += 1

    if objective is not None:
        state.f_val = objective_value(state.embedded_current(bundle.n_dof),
                                      bundle, objective)
    return state


def evaluate_candidates(state: StructureState, bundle: OperatorBundle,
                        objective: ObjectiveSpec) -> list[Candidate]:
    """Objective value and sensitivity tau for every single-DOF move.

    tau < 0 means the move improves (decreases) the objective. Infeasible
    candidates are reported with f = +inf. The list is ordered by ascending
    DOF index with removals and additions interleaved.
    """
    rem = batch_removal_currents(state, bundle)
    add = batch_addition_currents(state, bundle)

    C = np.concatenate([rem.currents, add.currents], axis=1)
    f = np.full(C.shape[1], np.inf)
    feasible = np.concatenate([rem.feasible, add.feasible])
    if np.any(feasible):
        f[feasible] = objective_batch(C[:, feasible], bundle, objective)

    moves = [Move("remove", int(d)) for d in rem.dofs]
    moves += [Move("add", int(d)) for d in add.dofs]
    out = [Candidate(move=mv, f=float(fv), tau=float(fv - state.f_val))
           for mv, fv in zip(moves, f)]
    out.sort(key=lambda c: c.move.dof)
    return out
