"""Fundamental-bound QCQP solvers.

Three problem shapes, all solved through duality so every returned value is
a certified bound rather than a mere stationary point:

  * minimum quality factor over all currents radiating unit power at
    resonance -- dual is a concave 1-D function of the resonance multiplier,
    evaluated through a Hermitian definite pencil and maximized by
    bracketing plus bisection;
  * maximum gain with enforced matching -- the affine matching constraint is
    eliminated by parametrizing the feasible affine subspace, leaving two
    real quadratic constraints (complex-power conservation) handled by a
    two-multiplier dual Newton iteration;
  * maximum power absorbed in an uncontrollable subregion -- the
    uncontrollable block is eliminated through its own equilibrium
    equations, then the same two-multiplier dual Newton applies.

For the Newton-based bounds the dual Hessian is kept positive definite
along the path, so a converged iterate is simultaneously dual feasible and
primal feasible: the value certifies the bound with zero gap.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, SolverError
from .model import OperatorBundle

__all__ = [
    "BoundResult",
    "hermitian_pencil_min_eig",
    "q_lower_bound",
    "realized_gain_bound",
    "absorbed_power_bound",
]

_DEFLATE_TOL = 1e-10
_RESONANCE_TOL = 1e-9
_NU_LIMIT = 1e12
_NEWTON_TOL = 1e-8
_NEWTON_MAX_ITERS = 200
_FD_STEP = 1e-7


@dataclass
class BoundResult:
    """Bound value with its optimal current and dual certificates."""

    value: float
    I_opt: np.ndarray
    multipliers: tuple
    iterations: int
    residuals: dict = field(default_factory=dict)
    converged: bool = True
    flags: tuple = ()


def hermitian_pencil_min_eig(A: np.ndarray, B: np.ndarray,
                             deflate_tol: float = _DEFLATE_TOL
                             ) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue of A v = lambda B v on range(B).

    A Hermitian, B Hermitian PSD. B's (near-)null space is deflated by
    eigen-decomposition with threshold deflate_tol * ||B||; the returned
    eigenvector satisfies v^H B v = 1.
    """
    w, U = np.linalg.eigh(B)
    wmax = float(w[-1]) if w.size else 0.0
    if wmax <= 0.0:
        raise ConfigurationError("pencil matrix B is (numerically) zero")
    keep = w > deflate_tol * wmax
    if not np.any(keep):
        raise ConfigurationError("pencil matrix B has no usable range")
    Q = U[:, keep] / np.sqrt(w[keep])
    Ar = Q.conj().T @ A @ Q
    Ar = 0.5 * (Ar + Ar.conj().T)
    lam, vec = np.linalg.eigh(Ar)
    v = Q @ vec[:, 0]
    return float(lam[0]), v


def _pencil_two_lowest(A, B, deflate_tol=_DEFLATE_TOL):
    w, U = np.linalg.eigh(B)
    keep = w > deflate_tol * max(float(w[-1]), 1e-300)
    Q = U[:, keep] / np.sqrt(w[keep])
    Ar = Q.conj().T @ A @ Q
    Ar = 0.5 * (Ar + Ar.conj().T)
    lam, vec = np.linalg.eigh(Ar)
    vs = [Q @ vec[:, i] for i in range(min(2, lam.size))]
    return lam, vs


def _mix_to_resonance(v1: np.ndarray, v2: np.ndarray, X: np.ndarray,
                      R0: np.ndarray) -> Optional[np.ndarray]:
    """Blend two R0-orthonormal eigenvectors so the X form vanishes."""
    a = float(np.real(np.vdot(v1, X @ v1)))
    b = float(np.real(np.vdot(v2, X @ v2)))
    c = float(np.real(np.vdot(v1, X @ v2)))
    # (v1 + t v2): a + 2 c t + b t^2 = 0
    if abs(b) < 1e-300:
        if abs(c) < 1e-300:
            return None
        t = -a / (2.0 * c)
    else:
        disc = c * c - a * b
        if disc < 0:
            return None
        roots = np.array([(-c + np.sqrt(disc)) / b, (-c - np.sqrt(disc)) / b])
        t = float(roots[np.argmin(np.abs(roots))])
    v = v1 + t * v2
    nrm = float(np.real(np.vdot(v, R0 @ v)))
    if nrm <= 0:
        return None
    return v / np.sqrt(nrm)


def q_lower_bound(bundle: OperatorBundle, tm: bool = False) -> BoundResult:
    """Lower bound on the quality factor over all currents in the region.

    Minimizes (1/2) I^H W I subject to unit radiated-power normalization and
    zero net reactance. The dual g(nu) = lambda_min(W + nu X, R0) is concave;
    its maximizer is found by bracketing the sign change of the reactance
    form of the minimizing eigenvector, then bisection. With `tm` the
    radiation operator is replaced by the projected one built from the
    bundle's modal projector, which tightens the bound for structures that
    only radiate those modes.
    """
    if bundle.W is None:
        raise ConfigurationError("q_lower_bound requires the stored-energy matrix W")
    if tm:
        if bundle.tm_projector is None:
            raise ConfigurationError("TM-restricted bound requires tm_projector")
        U1 = bundle.tm_projector
        R0 = U1.conj().T @ U1
    else:
        R0 = bundle.R0
    W, X = bundle.W, bundle.X

    def probe(nu: float):
        lam, v = hermitian_pencil_min_eig(W + nu * X, R0)
        h = float(np.real(np.vdot(v, X @ v)))
        return h, lam, v

    iterations = 0
    h0, lam0, v0 = probe(0.0)
    iterations += 1
    if abs(h0) <= _RESONANCE_TOL:
        return BoundResult(value=0.5 * lam0, I_opt=v0, multipliers=(0.0,),
                           iterations=iterations,
                           residuals={"resonance": abs(h0)})

    # h(nu) = dg/dnu is nonincreasing (g concave); bracket its zero crossing
    if h0 > 0:
        lo, h_lo, best_lo = 0.0, h0, (lam0, v0)
        nu, hi, h_hi, best_hi = 1.0, None, None, None
        while nu <= _NU_LIMIT:
            h, lam, v = probe(nu)
            iterations += 1
            if abs(h) <= _RESONANCE_TOL:
                return BoundResult(value=0.5 * lam, I_opt=v, multipliers=(nu,),
                                   iterations=iterations,
                                   residuals={"resonance": abs(h)})
            if h < 0:
                hi, h_hi, best_hi = nu, h, (lam, v)
                break
            lo, h_lo, best_lo = nu, h, (lam, v)
            nu *= 2.0
    else:
        hi, h_hi, best_hi = 0.0, h0, (lam0, v0)
        nu, lo, h_lo, best_lo = -1.0, None, None, None
        while nu >= -_NU_LIMIT:
            h, lam, v = probe(nu)
            iterations += 1
            if abs(h) <= _RESONANCE_TOL:
                return BoundResult(value=0.5 * lam, I_opt=v, multipliers=(nu,),
                                   iterations=iterations,
                                   residuals={"resonance": abs(h)})
            if h > 0:
                lo, h_lo, best_lo = nu, h, (lam, v)
                break
            hi, h_hi, best_hi = nu, h, (lam, v)
            nu *= 2.0

    if lo is None or hi is None:
        # no resonant mixture exists: report the unconstrained minimum, flagged
        warnings.warn("no resonance multiplier found; reporting unconstrained "
                      "minimum", stacklevel=2)
        return BoundResult(value=0.5 * lam0, I_opt=v0, multipliers=(0.0,),
                           iterations=iterations,
                           residuals={"resonance": abs(h0)},
                           converged=False, flags=("no_resonance",))

    lam_mid, v_mid, h_mid, nu_mid = None, None, None, None
    for _ in range(300):
        nu_mid = 0.5 * (lo + hi)
        h_mid, lam_mid, v_mid = probe(nu_mid)
        iterations += 1
        if abs(h_mid) <= _RESONANCE_TOL:
            return BoundResult(value=0.5 * lam_mid, I_opt=v_mid,
                               multipliers=(nu_mid,), iterations=iterations,
                               residuals={"resonance": abs(h_mid)})
        if h_mid > 0:
            lo = nu_mid
        else:
            hi = nu_mid
        if hi - lo <= 1e-15 * max(1.0, abs(lo), abs(hi)):
            break

    # interval collapsed with |h| still large: eigenvalue multiplicity at the
    # dual optimum; mix the two extreme eigenvectors to zero the reactance form
    lam2, vs = _pencil_two_lowest(W + nu_mid * X, R0)
    if len(vs) == 2:
        mixed = _mix_to_resonance(vs[0], vs[1], X, R0)
        if mixed is not None:
            h = float(np.real(np.vdot(mixed, X @ mixed)))
            return BoundResult(value=0.5 * float(lam2[0]), I_opt=mixed,
                               multipliers=(nu_mid,), iterations=iterations,
                               residuals={"resonance": abs(h)},
                               flags=("degenerate_dual",))
    return BoundResult(value=0.5 * float(lam_mid), I_opt=v_mid,
                       multipliers=(nu_mid,), iterations=iterations,
                       residuals={"resonance": abs(h_mid)},
                       converged=False, flags=("bisection_stalled",))


# ---------------------------------------------------------------------------
# Two-multiplier dual Newton machinery for the gain / absorbed-power bounds.
#
# Real quadratic functionals of a complex vector t are kept as triples
# (A, b, c) meaning  g(t) = t^H A t + 2 Re(b^H t) + c  with A Hermitian.
# ---------------------------------------------------------------------------


@dataclass
class _QuadTriple:
    A: np.ndarray
    b: np.ndarray
    c: float

    def __call__(self, t: np.ndarray) -> float:
        return float(np.real(np.vdot(t, self.A @ t))
                     + 2.0 * np.real(np.vdot(self.b, t)) + self.c)


def _restrict_quadratic(M: np.ndarray, I0: np.ndarray, T: np.ndarray) -> _QuadTriple:
    """Triple of I^H M I under the affine substitution I = I0 + T t."""
    MT = M @ T
    A = T.conj().T @ MT
    A = 0.5 * (A + A.conj().T)
    b = T.conj().T @ (M @ I0)
    c = float(np.real(np.vdot(I0, M @ I0)))
    return _QuadTriple(A=A, b=b, c=c)


def _conjlinear_real_part(w: np.ndarray, const: float) -> _QuadTriple:
    """Triple of Re(t^H w) + const (zero quadratic part)."""
    n = w.shape[0]
    return _QuadTriple(A=np.zeros((n, n), dtype=np.complex128), b=0.5 * w,
                       c=const)


def _conjlinear_imag_part(w: np.ndarray, const: float) -> _QuadTriple:
    """Triple of Im(t^H w) + const."""
    n = w.shape[0]
    return _QuadTriple(A=np.zeros((n, n), dtype=np.complex128),
                       b=0.5 * (-1j) * w, c=const)


def _triple_sub(p: _QuadTriple, q: _QuadTriple) -> _QuadTriple:
    return _QuadTriple(A=p.A - q.A, b=p.b - q.b, c=p.c - q.c)


def _dual_newton_two_constraints(obj: _QuadTriple, con1: _QuadTriple,
                                 con2: _QuadTriple, scale: float
                                 ) -> tuple[np.ndarray, tuple, int, float, bool]:
    """Maximize obj(t) subject to con1(t) = 0 and con2(t) = 0.

    The dual Hessian H = a*A1 + b*A2 - A0 is kept positive definite along the
    Newton path; a converged iterate is therefore a zero-gap certificate.
    Returns (t, (alpha, beta), iterations, relative residual, certified).
    """
    A0, A1, A2 = obj.A, con1.A, con2.A

    def stationary(alpha, beta):
        if not (np.isfinite(alpha) and np.isfinite(beta)):
            return None, None
        with np.errstate(over="ignore", invalid="ignore"):
            H = alpha * A1 + beta * A2 - A0
            rhs = obj.b - alpha * con1.b - beta * con2.b
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(rhs))):
            return None, None
        try:
            cf = scipy.linalg.cho_factor(H, check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
            return None, None
        t = scipy.linalg.cho_solve(cf, rhs, check_finite=False)
        return t, H

    def residual_vec(alpha, beta):
        t, H = stationary(alpha, beta)
        if t is None:
            return None, None
        return np.array([con1(t), con2(t)]), t

    # seed multipliers: scale alpha until the Hessian goes definite
    try:
        lam_star = -hermitian_pencil_min_eig(-A0, A1)[0]
        lam_star = max(lam_star, 0.0)
    except (ConfigurationError, np.linalg.LinAlgError):
        lam_star = float(np.linalg.norm(A0, 2))
    base = max(lam_star, 1e-12)
    seeds = [(1.25 * base, 0.0), (2.0 * base, 0.0), (8.0 * base, 0.0),
             (2.0 * base, 0.5 * base), (2.0 * base, -0.5 * base)]

    total_iters = 0
    best = None
    for alpha0, beta0 in seeds:
        alpha, beta = alpha0, beta0
        grown = 0
        while residual_vec(alpha, beta)[0] is None and grown < 60:
            alpha *= 2.0
            grown += 1
        r, t = residual_vec(alpha, beta)
        if r is None:
            continue
        for _ in range(_NEWTON_MAX_ITERS):
            total_iters += 1
            rel = float(np.linalg.norm(r)) / scale
            if rel <= _NEWTON_TOL:
                break
            h_a = _FD_STEP * max(1.0, abs(alpha))
            h_b = _FD_STEP * max(1.0, abs(beta))
            r_a = residual_vec(alpha + h_a, beta)[0]
            r_b = residual_vec(alpha, beta + h_b)[0]
            if r_a is None or r_b is None:
                break
            J = np.column_stack([(r_a - r) / h_a, (r_b - r) / h_b])
            try:
                step = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(J, -r, rcond=None)[0]
            moved = False
            damp = 1.0
            for _ in range(50):
                rn, tn = residual_vec(alpha + damp * step[0], beta + damp * step[1])
                if rn is not None and (np.linalg.norm(rn) < np.linalg.norm(r)
                                       or damp < 1e-8):
                    alpha += damp * step[0]
                    beta += damp * step[1]
                    r, t = rn, tn
                    moved = True
                    break
                damp *= 0.5
            if not moved:
                break
        rel = float(np.linalg.norm(r)) / scale
        if best is None or rel < best[3]:
            best = (t, (float(alpha), float(beta)), total_iters, rel)
        if rel <= _NEWTON_TOL:
            return t, (float(alpha), float(beta)), total_iters, rel, True

    if best is None:
        raise SolverError("dual Newton could not find a definite Hessian seed")
    t, mults, iters, rel = best
    raise SolverError(f"dual Newton failed to converge: relative constraint "
                      f"residual {rel:.3e} after {iters} iterations "
                      f"(multipliers {mults[0]:.4g}, {mults[1]:.4g})")


def realized_gain_bound(bundle: OperatorBundle, field_index: int = 0,
                        Z0: complex = 50.0, v_in: float = 1.0,
                        excitation_index: int = 0,
                        matching_constraint: bool = True) -> BoundResult:
    """Upper bound on realized gain with enforced matching.

    Maximizes |F I|^2 subject to complex-power conservation I^H Z I = I^H V
    and the matching condition V^H I = |V_in|^2 / Z0. The affine matching
    constraint is eliminated by the substitution I = I_p + N t with N a
    basis of the orthogonal complement of V. With `matching_constraint`
    False the problem relaxes to the classical tuned-gain maximum
    lambda_max(F^H F, R), used for validation.
    """
    f_row = bundle.field_row(field_index)
    R = bundle.R0 + (bundle.R_rho if bundle.R_rho is not None else 0.0)
    FF = np.outer(f_row.conj(), f_row)

    if not matching_constraint:
        lam, v = hermitian_pencil_min_eig(-FF, R)
        g = -lam
        return BoundResult(value=float(g), I_opt=v, multipliers=(),
                           iterations=1, residuals={})

    V = bundle.excitation(excitation_index)
    Z0 = complex(Z0)
    if Z0.real <= 0:
        raise ConfigurationError("Z0 must have a positive real part")
    c_match = abs(v_in) ** 2 / Z0

    vv = float(np.real(np.vdot(V, V)))
    I_p = V * (c_match / vv)
    Nb = scipy.linalg.null_space(V.conj().reshape(1, -1))
    if Nb.shape[1] == 0:
        # single DOF: constraints fix the current completely
        I = I_p
        p2 = float(np.real(np.vdot(I, R @ I)))
        g = abs(np.dot(f_row, I)) ** 2 / p2 if p2 > 0 else 0.0
        pw = np.vdot(I, bundle.Z @ I) - np.vdot(I, V)
        return BoundResult(value=float(g), I_opt=I, multipliers=(),
                           iterations=0,
                           residuals={"complex_power": abs(complex(pw))},
                           flags=("fully_constrained",))

    obj = _restrict_quadratic(FF, I_p, Nb)
    # I^H V is pinned to conj(c_match) by the affine constraint, so the
    # complex-power condition splits into fixed-right-hand-side parts:
    #   I^H R I = Re(c), I^H X I = -Im(c)
    con1 = _restrict_quadratic(R, I_p, Nb)
    con1.c -= c_match.real
    con2 = _restrict_quadratic(bundle.X, I_p, Nb)
    con2.c += c_match.imag

    scale = max(abs(c_match), 1e-12)
    t, mults, iters, rel, certified = _dual_newton_two_constraints(
        obj, con1, con2, scale)
    I = I_p + Nb @ t
    p2 = float(np.real(np.vdot(I, R @ I)))
    value = abs(np.dot(f_row, I)) ** 2 / p2
    return BoundResult(value=float(value), I_opt=I, multipliers=mults,
                       iterations=iters,
                       residuals={"complex_power": rel},
                       converged=certified)


def absorbed_power_bound(bundle: OperatorBundle, excitation_index: int = 0,
                         chip_mask: Optional[np.ndarray] = None) -> BoundResult:
    """Upper bound on power absorbed in the uncontrollable chip subregion.

    The uncontrollable block is eliminated through its rows of the
    partitioned system (I_u follows from I_c and the excitation); the
    remaining problem in I_c is a two-constraint QCQP handled by the same
    dual Newton as the gain bound. Reported in watts.
    """
    if bundle.R_rho is None:
        raise ConfigurationError("absorbed_power_bound requires R_rho")
    mask = bundle.chip_mask if chip_mask is None else np.asarray(chip_mask, dtype=bool)
    if mask is None:
        raise ConfigurationError("absorbed_power_bound requires a chip mask")
    chip = np.flatnonzero(mask)
    if chip.size == 0:
        warnings.warn("absorbed-power bound over an empty chip mask is 0",
                      stacklevel=2)
        return BoundResult(value=0.0, I_opt=np.zeros(bundle.n_dof, dtype=complex),
                           multipliers=(), iterations=0)

    V = bundle.excitation(excitation_index)
    n = bundle.n_dof
    c_idx = np.flatnonzero(bundle.controllable_mask)
    u_idx = np.flatnonzero(~bundle.controllable_mask)

    Zuu = bundle.Z[np.ix_(u_idx, u_idx)]
    try:
        cond = np.linalg.cond(Zuu)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e14:
        raise ConfigurationError("uncontrollable block Z_uu is singular; the "
                                 "fixed region is not self-consistent")
    Zuu_solve = np.linalg.inv(Zuu)

    I0 = np.zeros(n, dtype=np.complex128)
    I0[u_idx] = Zuu_solve @ V[u_idx]

    # objective matrix: loss restricted to the chip block (zero elsewhere)
    M_chip = np.zeros((n, n), dtype=np.complex128)
    M_chip[np.ix_(chip, chip)] = bundle.R_rho[np.ix_(chip, chip)]

    if c_idx.size == 0:
        value = 0.5 * float(np.real(np.vdot(I0, M_chip @ I0)))
        pw = np.vdot(I0, bundle.Z @ I0) - np.vdot(I0, V)
        return BoundResult(value=value, I_opt=I0, multipliers=(), iterations=0,
                           residuals={"complex_power": abs(complex(pw))},
                           flags=("fully_constrained",))

    T = np.zeros((n, c_idx.size), dtype=np.complex128)
    T[c_idx, np.arange(c_idx.size)] = 1.0
    T[np.ix_(u_idx, np.arange(c_idx.size))] = -Zuu_solve @ bundle.Z[np.ix_(u_idx, c_idx)]

    R = bundle.R0 + bundle.R_rho
    obj = _restrict_quadratic(M_chip, I0, T)
    w = T.conj().T @ V
    i0v = complex(np.vdot(I0, V))
    con1 = _triple_sub(_restrict_quadratic(R, I0, T),
                       _conjlinear_real_part(w, i0v.real))
    con2 = _triple_sub(_restrict_quadratic(bundle.X, I0, T),
                       _conjlinear_imag_part(w, i0v.imag))

    scale = max(abs(i0v), float(np.real(np.vdot(I0, R @ I0))), 1e-12)
    t, mults, iters, rel, certified = _dual_newton_two_constraints(
        obj, con1, con2, scale)
    I = I0 + T @ t
    value = 0.5 * float(np.real(np.vdot(I, M_chip @ I)))
    return BoundResult(value=value, I_opt=I, multipliers=mults,
                       iterations=iters, residuals={"complex_power": rel},
                       converged=certified)
