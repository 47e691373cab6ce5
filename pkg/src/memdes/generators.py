"""Built-in operator generators at desk scale.

Three families:

  * RLC ladder networks -- closed-form stored energy and Q, used to pin the
    energy convention W = omega * dX/domega.
  * random passive operators -- deterministic-in-seed bundles for property
    tests (R0 = A^T A full rank, symmetric X, PSD W).
  * thin-wire dipole arrays -- pulse-basis point-matched MoM with the
    reduced kernel; a desk-scale stand-in for strip arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import toeplitz

from .errors import ConfigurationError
from .model import BundleMeta, OperatorBundle

__all__ = [
    "ETA0",
    "C0",
    "gen_rlc_ladder",
    "gen_random_passive",
    "gen_wire_array",
    "WireGeometry",
    "surface_resistivity",
    "synthesize_tm_projector",
]

ETA0 = 376.730313668   # impedance of free space [ohm]
C0 = 299792458.0       # speed of light [m/s]


def _per_cell(value: Union[float, Sequence[float]], n: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()
    if np.any(arr <= 0):
        raise ConfigurationError(f"{name} must be positive")
    return arr


def gen_rlc_ladder(n: int, R: Union[float, Sequence[float]] = 1.0,
                   L: Union[float, Sequence[float]] = 1e-9,
                   C: Union[float, Sequence[float]] = 1e-12,
                   coupling: float = 0.0, f: float = 1e9,
                   loss_cells: Optional[Sequence[int]] = None) -> OperatorBundle:
    """Ladder of series-RLC cells with nearest-neighbour inductive coupling.

    Cell i contributes R_i + j(w L_i - 1/(w C_i)) on the diagonal and j*w*M
    on the first off-diagonals. Cell resistances land in R0 ("radiation")
    except for indices in `loss_cells`, which land in R_rho instead (purely
    lossy cells). The stored-energy matrix is analytic:
    W = w * dX/dw = diag(w L_i + 1/(w C_i)) plus w*M coupling terms.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    Rv = _per_cell(R, n, "R")
    Lv = _per_cell(L, n, "L")
    Cv = _per_cell(C, n, "C")
    if f <= 0:
        raise ConfigurationError("f must be positive")
    w = 2.0 * np.pi * f

    X = np.diag(w * Lv - 1.0 / (w * Cv))
    W = np.diag(w * Lv + 1.0 / (w * Cv))
    if n > 1 and coupling != 0.0:
        off = np.full(n - 1, w * coupling)
        X += np.diag(off, 1) + np.diag(off, -1)
        W += np.diag(off, 1) + np.diag(off, -1)

    lossy = np.zeros(n, dtype=bool)
    if loss_cells is not None:
        lossy[np.asarray(list(loss_cells), dtype=int)] = True
    R0 = np.diag(np.where(lossy, 0.0, Rv))
    R_rho = np.diag(np.where(lossy, Rv, 0.0)) if np.any(lossy) else None

    Z = R0 + (R_rho if R_rho is not None else 0.0) + 1j * X
    V = np.zeros(n, dtype=np.complex128)
    V[0] = 1.0
    fixed = np.zeros(n, dtype=bool)
    fixed[0] = True

    k = w / C0
    meta = BundleMeta(frequency_hz=f, wavenumber=k, radius=1.0 / k)
    bundle = OperatorBundle(n_dof=n, Z=Z, R0=R0, X=X, W=W, R_rho=R_rho,
                            V=V, fixed_mask=fixed, controllable_mask=~fixed,
                            meta=meta)
    bundle.validate()
    return bundle


def gen_random_passive(n: int, seed: int, loss_fraction: float = 0.1,
                       n_chip: int = 0, n_field_rows: int = 1) -> OperatorBundle:
    """Random passive operator bundle, deterministic in `seed`.

    R0 = A^T A (full rank a.s.), R_rho = loss_fraction * B^T B, X symmetric,
    W = D^T D (PSD). DOF 0 carries a unit delta-gap feed and is fixed; the
    last `n_chip` DOF are marked as an uncontrollable lossy chip. V row 0 is
    the delta gap; row 1 is a dense plane-wave-like excitation.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    if loss_fraction < 0:
        raise ConfigurationError("loss_fraction must be >= 0")
    if n_chip < 0 or n_chip > n - 1:
        raise ConfigurationError("n_chip must leave at least the feed DOF free")
    rng = np.random.default_rng(seed)

    A = rng.standard_normal((n, n))
    R0 = A.T @ A
    X = rng.standard_normal((n, n))
    X = 0.5 * (X + X.T)
    D = rng.standard_normal((n, n))
    W = D.T @ D
    R_rho = None
    if loss_fraction > 0:
        B = rng.standard_normal((n, n))
        R_rho = loss_fraction * (B.T @ B)
    Z = R0 + (R_rho if R_rho is not None else 0.0) + 1j * X

    delta_gap = np.zeros(n, dtype=np.complex128)
    delta_gap[0] = 1.0
    plane_wave = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    V = np.vstack([delta_gap, plane_wave])

    F = None
    if n_field_rows > 0:
        F = rng.standard_normal((n_field_rows, n)) + 1j * rng.standard_normal((n_field_rows, n))

    fixed = np.zeros(n, dtype=bool)
    fixed[0] = True
    chip = None
    if n_chip > 0:
        # the chip is uncontrollable but always present in the structure
        chip = np.zeros(n, dtype=bool)
        chip[n - n_chip:] = True
        fixed |= chip
    controllable = ~fixed

    meta = BundleMeta(frequency_hz=1e9, wavenumber=2 * np.pi * 1e9 / C0,
                      radius=C0 / (2 * np.pi * 1e9))
    bundle = OperatorBundle(n_dof=n, Z=Z, R0=R0, X=X, W=W, R_rho=R_rho,
                            F=F, V=V, fixed_mask=fixed,
                            controllable_mask=controllable, chip_mask=chip,
                            meta=meta)
    bundle.validate()
    return bundle


def surface_resistivity(k: float, sigma: float) -> float:
    """Thin-sheet surface resistivity of a good conductor [ohm/square]."""
    if sigma <= 0:
        raise ConfigurationError("conductivity must be positive")
    return float(np.sqrt(k * ETA0 / (2.0 * sigma)))


@dataclass
class WireGeometry:
    """Segment layout of a generated wire array (for far-field oracles)."""

    z: np.ndarray          # segment center z [m]
    x: np.ndarray          # wire axis x offset per segment [m]
    delta: float           # segment length [m]
    radius: float          # wire radius [m]
    wavenumber: float      # k at the nominal frequency [1/m]
    feed_index: int
    n_dip: int
    segments_per_dipole: int


def _wire_impedance(z: np.ndarray, x: np.ndarray, delta: float, radius: float,
                    k: float, n_dip: int, nseg: int) -> np.ndarray:
    """Thin-wire impedance matrix: pulse basis, point matching, reduced kernel.

    The vector-potential term integrates exp(-jkR)/R over the source segment
    (Gauss-Legendre); the charge term is the exact difference of the kernel
    z-derivative at the segment ends. Identical segmentation on every wire
    keeps the matrix exactly symmetric (Toeplitz blocks).
    """

    def kernel(u, rho):
        R = np.sqrt(u * u + rho * rho)
        return np.exp(-1j * k * R) / R

    def kernel_dz(u, rho):
        R = np.sqrt(u * u + rho * rho)
        return -u * (1.0 + 1j * k * R) * np.exp(-1j * k * R) / R**3

    nodes, weights = np.polynomial.legendre.leggauss(16)
    nodes = nodes * (delta / 2.0)
    weights = weights * (delta / 2.0)

    zu = z[:nseg]  # shared z grid across wires
    n = n_dip * nseg
    Z = np.zeros((n, n), dtype=np.complex128)
    scale = (1j * ETA0 / (4.0 * np.pi * k)) * delta

    for p in range(n_dip):
        for q in range(p, n_dip):
            rho = radius if p == q else abs(x[p * nseg] - x[q * nseg])
            rho = max(rho, radius)
            col_u = zu - zu[0]          # z_m - z_0 for m = 0..nseg-1
            # first column: u = z_m - z'_0; first row: u = z_0 - z'_n = -col_u
            integral_col = np.zeros(nseg, dtype=np.complex128)
            for s, wq in zip(nodes, weights):
                integral_col += wq * kernel(col_u - s, rho)
            charge_col = kernel_dz(col_u + delta / 2.0, rho) - kernel_dz(col_u - delta / 2.0, rho)
            entries = scale * (k * k * integral_col + charge_col)
            block = toeplitz(entries, entries)  # kernel even in u
            Z[p * nseg:(p + 1) * nseg, q * nseg:(q + 1) * nseg] = block
            if q != p:
                Z[q * nseg:(q + 1) * nseg, p * nseg:(p + 1) * nseg] = block.T
    return Z


def gen_wire_array(n_dip: int, length_over_lambda: float = 0.55,
                   spacing_over_lambda: float = 0.25,
                   segments_per_dipole: int = 21,
                   wire_radius: Optional[float] = None,
                   conductivity: float = 5.96e7, f: float = 1e9,
                   return_geometry: bool = False):
    """Linear array of parallel thin-wire dipoles, center-fed on dipole 2.

    All dipoles share one z grid; the first element acts as a passive
    reflector and later elements as directors. The far-field row is scaled
    so that gain reads directly as |F I|^2 / (I^H (R0+R_rho) I) for the
    end-fire direction x-hat with z-hat polarization.
    """
    if n_dip < 1:
        raise ConfigurationError("n_dip must be >= 1")
    if segments_per_dipole < 3 or segments_per_dipole % 2 == 0:
        raise ConfigurationError("segments_per_dipole must be odd and >= 3 "
                                 "(center feed alignment)")
    if f <= 0 or length_over_lambda <= 0 or spacing_over_lambda < 0:
        raise ConfigurationError("frequency, length and spacing must be positive")

    lam = C0 / f
    k0 = 2.0 * np.pi / lam
    length = length_over_lambda * lam
    spacing = spacing_over_lambda * lam
    nseg = segments_per_dipole
    delta = length / nseg
    if wire_radius is None:
        wire_radius = 2e-3 * lam
    if wire_radius <= 0 or wire_radius > 0.5 * delta:
        raise ConfigurationError("wire_radius must satisfy 0 < a <= delta/2 "
                                 "(thin-wire kernel validity)")
    if n_dip > 1 and spacing <= 2.0 * wire_radius:
        raise ConfigurationError("dipole spacing smaller than a wire diameter: "
                                 "geometry overlap")

    z_one = -length / 2.0 + (np.arange(nseg) + 0.5) * delta
    z = np.tile(z_one, n_dip)
    x = np.repeat(np.arange(n_dip) * spacing, nseg)
    n = n_dip * nseg

    def lossless(kk):
        return _wire_impedance(z, x, delta, wire_radius, kk, n_dip, nseg)

    Z_ll = lossless(k0)
    R0 = 0.5 * (Z_ll.real + Z_ll.real.T)
    # W from a central frequency difference of the reactance
    rel_step = 1e-4
    X_hi = lossless(k0 * (1.0 + rel_step)).imag
    X_lo = lossless(k0 * (1.0 - rel_step)).imag
    X = 0.5 * (Z_ll.imag + Z_ll.imag.T)
    W = k0 * (X_hi - X_lo) / (2.0 * rel_step * k0)
    W = 0.5 * (W + W.T)

    rs = surface_resistivity(k0, conductivity)
    R_rho = np.diag(np.full(n, rs * delta / (2.0 * np.pi * wire_radius)))
    Z = R0 + R_rho + 1j * X

    feed_dipole = 1 if n_dip > 1 else 0
    feed = feed_dipole * nseg + nseg // 2
    V = np.zeros(n, dtype=np.complex128)
    V[feed] = 1.0
    fixed = np.zeros(n, dtype=bool)
    fixed[feed] = True

    # end-fire x-hat, z-hat polarization; scaled so G = |F I|^2 / I^H(R0+Rr)I
    F = np.sqrt(4.0 * np.pi / ETA0) * (-1j * k0 * ETA0 / (4.0 * np.pi)) \
        * delta * np.exp(1j * k0 * x)

    half_span = 0.5 * (n_dip - 1) * spacing
    radius_circ = float(np.hypot(length / 2.0, half_span))
    meta = BundleMeta(frequency_hz=f, wavenumber=k0, radius=radius_circ)

    bundle = OperatorBundle(n_dof=n, Z=Z, R0=R0, X=X, W=W, R_rho=R_rho,
                            F=F.reshape(1, -1), V=V, fixed_mask=fixed,
                            controllable_mask=~fixed, meta=meta)
    bundle.validate()
    if return_geometry:
        geom = WireGeometry(z=z, x=x, delta=delta, radius=wire_radius,
                            wavenumber=k0, feed_index=feed, n_dip=n_dip,
                            segments_per_dipole=nseg)
        return bundle, geom
    return bundle


def synthesize_tm_projector(bundle: OperatorBundle, n_modes: int,
                            seed: int = 0) -> np.ndarray:
    """Random wide projector U with U^H U <= R0 in the PSD order.

    Built as U = P L^H with R0 = L L^H (Cholesky) and P a random
    semi-unitary (n_modes x N); the projected radiation operator then never
    reports more power than R0, which keeps the restricted bound tighter.
    """
    n = bundle.n_dof
    if not (1 <= n_modes <= n):
        raise ConfigurationError("n_modes must be in [1, n_dof]")
    jitter = 1e-12 * np.linalg.norm(bundle.R0)
    Lc = np.linalg.cholesky(bundle.R0 + jitter * np.eye(n))
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n_modes)) + 1j * rng.standard_normal((n, n_modes))
    Qm, _ = np.linalg.qr(G)
    P = Qm[:, :n_modes].conj().T
    return P @ Lc.conj().T
