"""Metric evaluation on current vectors.

All evaluators take full-length (zero-padded) current vectors so that feed
indexing, chip masks, and far-field rows line up with the bundle matrices
regardless of which DOF are enabled. `objective_value`/`objective_batch`
produce the scalar the optimizer minimizes: +inf marks infeasible or
degenerate currents so the greedy comparator needs no special cases.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .model import ObjectiveKind, ObjectiveSpec, OperatorBundle

__all__ = [
    "QBreakdown",
    "eval_q",
    "eval_gamma",
    "eval_q_matched",
    "eval_realized_gain",
    "eval_absorbed_power",
    "objective_value",
    "objective_batch",
]

_TINY = 1e-300


@dataclass
class QBreakdown:
    """Quality factor split into untuned and tuning parts, plus powers [W]."""

    q_u: float
    q_e: float
    q: float
    p_rad: float
    p_lost: float
    p_react: float


def _form(M: np.ndarray, I: np.ndarray) -> float:
    """Real value of I^H M I for Hermitian M."""
    return float(np.real(np.vdot(I, M @ I)))


def eval_q(I: np.ndarray, bundle: OperatorBundle) -> QBreakdown:
    """Quality factor of a current: q = q_u + q_e.

    q_u = (1/2) I^H W I / I^H R0 I measures untuned stored energy; q_e =
    (1/2) |I^H X I| / I^H R0 I is the penalty for tuning out the residual
    reactance. Degree-0 homogeneous in I. Non-radiating currents give +inf.
    """
    if bundle.W is None:
        raise ConfigurationError("Q evaluation requires the stored-energy matrix W")
    r = _form(bundle.R0, I)
    p_rad = 0.5 * r
    p_lost = 0.5 * _form(bundle.R_rho, I) if bundle.R_rho is not None else 0.0
    p_react = 0.5 * _form(bundle.X, I)
    if r <= _TINY:
        inf = float("inf")
        return QBreakdown(q_u=inf, q_e=inf, q=inf,
                          p_rad=p_rad, p_lost=p_lost, p_react=p_react)
    q_u = 0.5 * _form(bundle.W, I) / r
    q_e = 0.5 * abs(_form(bundle.X, I)) / r
    return QBreakdown(q_u=q_u, q_e=q_e, q=q_u + q_e,
                      p_rad=p_rad, p_lost=p_lost, p_react=p_react)


def eval_gamma(I: np.ndarray, V: np.ndarray, feed_index: int,
               Z0: complex) -> tuple[complex, complex]:
    """Input impedance and reflection coefficient at a delta-gap feed.

    Z_in = v_feed / I_feed; Gamma = (Z_in - Z0) / (Z_in + Z0). A vanishing
    feed current is reported as total mismatch (Z_in = inf, Gamma = 1).
    """
    i_f = complex(I[feed_index])
    v_f = complex(V[feed_index])
    if abs(i_f) <= _TINY:
        return complex(np.inf), complex(1.0)
    zin = v_f / i_f
    return zin, (zin - Z0) / (zin + Z0)


def eval_q_matched(I: np.ndarray, V: np.ndarray, bundle: OperatorBundle,
                   zeta: float, Z0: complex, q_lb_ref: float,
                   feed_index: int) -> float:
    """Composite objective (q / q_lb_ref) * (1 + zeta |Gamma|^2)."""
    if q_lb_ref <= 0:
        raise ConfigurationError("q_lb_ref must be > 0")
    q = eval_q(I, bundle).q
    _, gamma = eval_gamma(I, V, feed_index, Z0)
    return (q / q_lb_ref) * (1.0 + zeta * abs(gamma) ** 2)


def eval_realized_gain(I: np.ndarray, V: np.ndarray, bundle: OperatorBundle,
                       field_index: int, Z0: complex,
                       feed_index: int) -> tuple[float, float]:
    """(gain, realized gain) toward one far-field row.

    G = |F I|^2 / I^H (R0 + R_rho) I relies on the generator's F scaling;
    G_r = G (1 - |Gamma|^2) <= G accounts for feed mismatch.
    """
    f_row = bundle.field_row(field_index)
    p2 = _form(bundle.R0, I)
    if bundle.R_rho is not None:
        p2 += _form(bundle.R_rho, I)
    if p2 <= _TINY:
        return float("inf"), float("-inf")
    g = abs(np.dot(f_row, I)) ** 2 / p2
    _, gamma = eval_gamma(I, V, feed_index, Z0)
    return g, g * (1.0 - abs(gamma) ** 2)


def eval_absorbed_power(I: np.ndarray, bundle: OperatorBundle,
                        chip_mask: np.ndarray | None = None) -> float:
    """Power absorbed in the chip subregion [W].

    Implements (1/2) I^H (D^H R_rho D) I by indexing out the chip block of
    R_rho rather than building the indexation matrix.
    """
    if bundle.R_rho is None:
        raise ConfigurationError("absorbed power requires the loss matrix R_rho")
    mask = bundle.chip_mask if chip_mask is None else np.asarray(chip_mask, dtype=bool)
    if mask is None:
        raise ConfigurationError("absorbed power requires a chip mask")
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        warnings.warn("absorbed power over an empty chip mask is 0", stacklevel=2)
        return 0.0
    sub = I[idx]
    return 0.5 * float(np.real(np.vdot(sub, bundle.R_rho[np.ix_(idx, idx)] @ sub)))


def _batch_form(M: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Column-wise real quadratic forms I_k^H M I_k for Hermitian M."""
    return np.einsum("ij,ij->j", C.conj(), M @ C).real


def _batch_gamma_sq(C: np.ndarray, v_feed: complex, feed_index: int,
                    Z0: complex) -> np.ndarray:
    i_f = C[feed_index, :]
    gamma_sq = np.ones(C.shape[1])
    ok = np.abs(i_f) > _TINY
    zin = np.empty_like(i_f)
    zin[ok] = v_feed / i_f[ok]
    gamma_sq[ok] = np.abs((zin[ok] - Z0) / (zin[ok] + Z0)) ** 2
    return gamma_sq


def objective_batch(C: np.ndarray, bundle: OperatorBundle,
                    spec: ObjectiveSpec) -> np.ndarray:
    """Minimization values for a matrix of full-length currents (N x K).

    One BLAS-3 product per quadratic-form matrix covers the whole batch, so
    a candidate sweep never re-solves or re-factorizes anything.
    """
    spec.validate_for(bundle)
    if C.ndim != 2 or C.shape[0] != bundle.n_dof:
        raise ConfigurationError("candidate currents must be N x K")
    kind = spec.kind
    inf = float("inf")

    if kind in (ObjectiveKind.Q, ObjectiveKind.Q_MATCHED):
        r = _batch_form(bundle.R0, C)
        wq = _batch_form(bundle.W, C)
        xq = _batch_form(bundle.X, C)
        q = np.full(C.shape[1], inf)
        ok = r > _TINY
        q[ok] = 0.5 * (wq[ok] + np.abs(xq[ok])) / r[ok]
        if kind == ObjectiveKind.Q:
            return q
        feed = spec.resolved_feed_index(bundle)
        v = bundle.excitation(spec.excitation_index)
        gsq = _batch_gamma_sq(C, complex(v[feed]), feed, spec.Z0)
        return (q / spec.q_lb_ref) * (1.0 + spec.zeta * gsq)

    if kind == ObjectiveKind.REALIZED_GAIN:
        p2 = _batch_form(bundle.R0, C)
        if bundle.R_rho is not None:
            p2 = p2 + _batch_form(bundle.R_rho, C)
        num = np.abs(bundle.field_row(spec.field_index) @ C) ** 2
        feed = spec.resolved_feed_index(bundle)
        v = bundle.excitation(spec.excitation_index)
        gsq = _batch_gamma_sq(C, complex(v[feed]), feed, spec.Z0)
        f = np.full(C.shape[1], inf)
        ok = p2 > _TINY
        f[ok] = -(num[ok] / p2[ok]) * (1.0 - gsq[ok])
        return f

    if kind == ObjectiveKind.ABSORBED_POWER:
        idx = bundle.chip_indices
        if idx.size == 0:
            return np.zeros(C.shape[1])
        sub = C[idx, :]
        p = 0.5 * _batch_form(bundle.R_rho[np.ix_(idx, idx)], sub)
        return -p

    raise ConfigurationError(f"unknown objective kind {kind!r}")


def objective_value(I: np.ndarray, bundle: OperatorBundle,
                    spec: ObjectiveSpec) -> float:
    """Minimization value of one full-length current (same path as the batch)."""
    return float(objective_batch(I.reshape(-1, 1), bundle, spec)[0])
