"""Independent brute-force oracles.

These deliberately share no machinery with the incremental kernel or the
dual bound solvers: currents come from fresh dense solves, optima from
exhaustive enumeration, and bound cross-checks from random feasible
sampling polished with a general-purpose constrained optimizer. They exist
for correctness, not speed.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError
from .model import ObjectiveSpec, OperatorBundle, Word, materialize
from .objectives import objective_value

__all__ = [
    "dense_solve",
    "enumerate_optimum",
    "sample_feasible_bound_oracle",
    "far_field_gain",
]

_COND_LIMIT = 1e14


def dense_solve(bundle: OperatorBundle, word: Word,
                excitation_index: int = 0) -> Optional[np.ndarray]:
    """Directly solve Z[S,S] I = V[S]; returns the zero-padded current.

    Returns None when the reduced system is singular (infeasible word).
    No incremental machinery is involved.
    """
    if bundle.n_dof > 512:
        raise ConfigurationError("dense_solve is limited to 512 DOF")
    S = materialize(word, bundle)
    if S.size == 0:
        return None
    Zs = bundle.Z[np.ix_(S, S)]
    try:
        if np.linalg.cond(Zs) > _COND_LIMIT:
            return None
        I = np.linalg.solve(Zs, bundle.excitation(excitation_index)[S])
    except np.linalg.LinAlgError:
        return None
    out = np.zeros(bundle.n_dof, dtype=np.complex128)
    out[S] = I
    return out


def enumerate_optimum(bundle: OperatorBundle,
                      objective: ObjectiveSpec) -> tuple[Word, float]:
    """Exhaustive scan of all 2^N_opt words via dense solves.

    Ties resolve to the lexicographically lowest word (bit 0 most
    significant), which is also the first optimum encountered.
    """
    n_opt = bundle.n_opt
    if n_opt > 20:
        raise ConfigurationError("enumerate_optimum is limited to 20 optimizable DOF")
    best_word = None
    best_f = float("inf")
    for bits in itertools.product((False, True), repeat=n_opt):
        word = Word(np.array(bits, dtype=bool))
        I = dense_solve(bundle, word, objective.excitation_index)
        f = float("inf") if I is None else objective_value(I, bundle, objective)
        if f < best_f:
            best_f = f
            best_word = word
    return best_word, best_f


def _split(x: np.ndarray) -> np.ndarray:
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def _polish(fun, constraints, x0, maxiter=400):
    res = minimize(fun, x0, constraints=constraints, method="SLSQP",
                   options={"maxiter": maxiter, "ftol": 1e-14})
    return res


def _q_oracle(bundle: OperatorBundle, tm: bool, n_samples: int,
              seed: int) -> float:
    W, X = bundle.W, bundle.X
    if tm:
        U1 = bundle.tm_projector
        R0 = U1.conj().T @ U1
    else:
        R0 = bundle.R0
    n = bundle.n_dof
    rng = np.random.default_rng(seed)

    # vectorized random feasible sampling: pair up random currents and mix
    # each pair so the reactance form vanishes, then normalize the R0 form
    n_pairs = max(n_samples // 2, 1)
    va = rng.standard_normal((n, n_pairs)) + 1j * rng.standard_normal((n, n_pairs))
    vb = rng.standard_normal((n, n_pairs)) + 1j * rng.standard_normal((n, n_pairs))
    a = np.einsum("ij,ij->j", va.conj(), X @ va).real
    b = np.einsum("ij,ij->j", vb.conj(), X @ vb).real
    c = np.einsum("ij,ij->j", va.conj(), X @ vb).real
    disc = c * c - a * b
    ok = (disc >= 0) & (np.abs(b) > 1e-300)
    t = np.where(ok, (-c + np.sqrt(np.where(ok, disc, 0.0))) / np.where(ok, b, 1.0), 0.0)
    mixed = va + vb * t[None, :]
    r_form = np.einsum("ij,ij->j", mixed.conj(), R0 @ mixed).real
    w_form = np.einsum("ij,ij->j", mixed.conj(), W @ mixed).real
    valid = ok & (r_form > 1e-12 * np.abs(w_form).max())
    q_samples = np.where(valid, 0.5 * w_form / np.where(valid, r_form, 1.0), np.inf)
    best = float(np.min(q_samples)) if np.any(valid) else np.inf

    # polish a handful of random starts with a constrained optimizer
    def q_fun(x):
        v = _split(x)
        return 0.5 * float(np.real(np.vdot(v, W @ v)))

    cons = [
        {"type": "eq", "fun": lambda x: float(np.real(np.vdot(_split(x), R0 @ _split(x)))) - 1.0},
        {"type": "eq", "fun": lambda x: float(np.real(np.vdot(_split(x), X @ _split(x))))},
    ]
    n_polish = min(30, max(8, n_samples // 4000))
    for _ in range(n_polish):
        res = _polish(q_fun, cons, rng.standard_normal(2 * n))
        if res.success and res.fun < best:
            best = float(res.fun)
    return best


def _gain_oracle(bundle: OperatorBundle, n_samples: int, seed: int,
                 field_index: int, Z0: complex, v_in: float,
                 excitation_index: int) -> float:
    n = bundle.n_dof
    rng = np.random.default_rng(seed)
    f_row = bundle.field_row(field_index)
    R = bundle.R0 + (bundle.R_rho if bundle.R_rho is not None else 0.0)
    V = bundle.excitation(excitation_index)
    c = abs(v_in) ** 2 / complex(Z0)
    fscale = max(np.linalg.norm(f_row) ** 2, 1e-300)

    def gain_of(I):
        p2 = float(np.real(np.vdot(I, R @ I)))
        if p2 <= 0:
            return -np.inf
        return abs(np.dot(f_row, I)) ** 2 / p2

    cons = [
        {"type": "eq", "fun": lambda x: float(np.real(np.vdot(_split(x), bundle.Z @ _split(x))
                                                     - np.vdot(_split(x), V)))},
        {"type": "eq", "fun": lambda x: float(np.imag(np.vdot(_split(x), bundle.Z @ _split(x))
                                                     - np.vdot(_split(x), V)))},
        {"type": "eq", "fun": lambda x: float(np.real(np.vdot(V, _split(x)) - c))},
        {"type": "eq", "fun": lambda x: float(np.imag(np.vdot(V, _split(x)) - c))},
    ]

    def neg_intensity(x):
        return -abs(np.dot(f_row, _split(x))) ** 2 / fscale

    best = -np.inf
    n_starts = min(40, max(10, n_samples // 3000))
    x_feas = V.real.tolist() + V.imag.tolist()
    starts = [np.asarray(x_feas)] + [rng.standard_normal(2 * n) for _ in range(n_starts)]
    for x0 in starts:
        res = _polish(neg_intensity, cons, np.asarray(x0, dtype=float))
        if res.success:
            best = max(best, gain_of(_split(res.x)))
    return best


def _pabs_oracle(bundle: OperatorBundle, n_samples: int, seed: int,
                 excitation_index: int) -> float:
    n = bundle.n_dof
    rng = np.random.default_rng(seed)
    V = bundle.excitation(excitation_index)
    chip = bundle.chip_indices
    if chip.size == 0:
        return 0.0
    Rc = bundle.R_rho[np.ix_(chip, chip)]
    u_idx = np.flatnonzero(~bundle.controllable_mask)
    Zu = bundle.Z[u_idx, :]
    Vu = V[u_idx]
    pscale = max(np.linalg.norm(Rc), 1e-300)

    def pabs(I):
        sub = I[chip]
        return 0.5 * float(np.real(np.vdot(sub, Rc @ sub)))

    cons = [
        {"type": "eq", "fun": lambda x: float(np.real(np.vdot(_split(x), bundle.Z @ _split(x))
                                                     - np.vdot(_split(x), V)))},
        {"type": "eq", "fun": lambda x: float(np.imag(np.vdot(_split(x), bundle.Z @ _split(x))
                                                     - np.vdot(_split(x), V)))},
    ]
    for row in range(u_idx.size):
        cons.append({"type": "eq",
                     "fun": (lambda x, r=row: float(np.real(Zu[r] @ _split(x) - Vu[r])))})
        cons.append({"type": "eq",
                     "fun": (lambda x, r=row: float(np.imag(Zu[r] @ _split(x) - Vu[r])))})

    best = -np.inf
    n_starts = min(40, max(10, n_samples // 3000))
    I_full = np.linalg.solve(bundle.Z, V)  # physically realized full structure
    starts = [np.concatenate([I_full.real, I_full.imag])]
    starts += [rng.standard_normal(2 * n) for _ in range(n_starts)]
    for x0 in starts:
        res = _polish(lambda x: -pabs(_split(x)) / pscale, cons,
                      np.asarray(x0, dtype=float))
        if res.success:
            best = max(best, pabs(_split(res.x)))
    return best


def sample_feasible_bound_oracle(bundle: OperatorBundle, problem_kind: str,
                                 n_samples: int = 100000, seed: int = 0,
                                 field_index: int = 0, Z0: complex = 50.0,
                                 v_in: float = 1.0,
                                 excitation_index: int = 0) -> float:
    """Empirical extremum over feasible currents; a one-sided solver check.

    Kinds: "q" / "q_tm" return the best (lowest) quality factor found,
    "gain" the best matched gain, "pabs" the best absorbed power. A correct
    bound solver must weakly dominate the returned value.
    """
    if bundle.n_dof > 16:
        raise ConfigurationError("feasible-sampling oracle is limited to 16 DOF")
    if problem_kind in ("q", "q_tm"):
        return _q_oracle(bundle, problem_kind == "q_tm", n_samples, seed)
    if problem_kind == "gain":
        return _gain_oracle(bundle, n_samples, seed, field_index, Z0, v_in,
                            excitation_index)
    if problem_kind == "pabs":
        return _pabs_oracle(bundle, n_samples, seed, excitation_index)
    raise ConfigurationError(f"unknown problem kind {problem_kind!r}")


def far_field_gain(geometry, I: np.ndarray, p_loss: float = 0.0,
                   n_theta: int = 200, n_phi: int = 200) -> float:
    """Gain toward x-hat by dense far-field integration over the sphere.

    Independent of the bundle's F row and R0: radiated power comes from
    integrating the radiation intensity of the segment currents, so this
    cross-checks both the far-field scaling and the radiation operator.
    """
    from .generators import ETA0  # local import to keep oracles standalone

    k = geometry.wavenumber
    z, x, delta = geometry.z, geometry.x, geometry.delta
    ct, wt = np.polynomial.legendre.leggauss(n_theta)
    st = np.sqrt(1.0 - ct**2)
    ph = np.linspace(0.0, 2.0 * np.pi, n_phi, endpoint=False)
    dph = 2.0 * np.pi / n_phi

    amp_const = -1j * k * ETA0 / (4.0 * np.pi) * delta
    p_rad = 0.0
    for p in ph:
        rx = st * np.cos(p)
        rz = ct
        phase = np.exp(1j * k * (rx[:, None] * x[None, :] + rz[:, None] * z[None, :]))
        amp = amp_const * (phase @ I)
        intensity = np.abs(amp) ** 2 * (1.0 - rz**2) / (2.0 * ETA0)
        p_rad += float(np.sum(intensity * wt)) * dph

    phase_x = np.exp(1j * k * x)
    u_x = abs(amp_const * np.dot(phase_x, I)) ** 2 / (2.0 * ETA0)
    return 4.0 * np.pi * u_x / (p_rad + p_loss)
