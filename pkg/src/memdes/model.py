"""Core domain types: operator bundles, binary words, structure state,
objective descriptors, and run configuration.

An OperatorBundle carries every system matrix needed to evaluate a design
problem (impedance, radiation, reactance, stored energy, loss, far-field
rows, excitations) together with the masks that say which degrees of
freedom the optimizer may toggle. Geometry never enters; only operators do.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ValidationError

__all__ = [
    "BundleMeta",
    "OperatorBundle",
    "Word",
    "StructureState",
    "ObjectiveKind",
    "ObjectiveSpec",
    "RunConfig",
    "materialize",
    "word_from_enabled",
]

# Relative tolerance for algebraic identities between stored matrices.
_IDENTITY_RTOL = 1e-12
# Relative floor for positive-semidefiniteness checks (vs spectral norm).
_PSD_RTOL = 1e-10


@dataclass
class BundleMeta:
    """Frequency metadata: f [Hz], wavenumber k [1/m], circumscribing radius a [m]."""

    frequency_hz: float = 0.0
    wavenumber: float = 0.0
    radius: float = 0.0

    @property
    def ka(self) -> float:
        return self.wavenumber * self.radius


def _as_complex_matrix(M, name: str, shape=None) -> np.ndarray:
    M = np.ascontiguousarray(M, dtype=np.complex128)
    if M.ndim != 2:
        raise ValidationError(f"{name} shape", f"expected 2-D array, got ndim={M.ndim}")
    if shape is not None and M.shape != shape:
        raise ValidationError(f"{name} shape", f"expected {shape}, got {M.shape}")
    return M


def _as_mask(m, n: int, name: str) -> np.ndarray:
    m = np.ascontiguousarray(m, dtype=bool)
    if m.shape != (n,):
        raise ValidationError(f"{name} shape", f"expected ({n},), got {m.shape}")
    return m


@dataclass
class OperatorBundle:
    """All system matrices, masks, and metadata for one design problem.

    Matrices are dense complex128, N x N unless noted. Z is unconjugated-
    symmetric (reciprocity); R0, X, W, R_rho are Hermitian; R0 and R_rho are
    PSD. F holds far-field projection rows (one per direction/polarization),
    V holds excitation vectors, both stored as (rows, N) arrays.
    """

    n_dof: int
    Z: np.ndarray
    R0: np.ndarray
    X: np.ndarray
    W: Optional[np.ndarray] = None
    R_rho: Optional[np.ndarray] = None
    F: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    tm_projector: Optional[np.ndarray] = None
    fixed_mask: Optional[np.ndarray] = None
    controllable_mask: Optional[np.ndarray] = None
    chip_mask: Optional[np.ndarray] = None
    meta: BundleMeta = field(default_factory=BundleMeta)

    def __post_init__(self):
        n = int(self.n_dof)
        self.n_dof = n
        self.Z = _as_complex_matrix(self.Z, "Z", (n, n))
        self.R0 = _as_complex_matrix(self.R0, "R0", (n, n))
        self.X = _as_complex_matrix(self.X, "X", (n, n))
        if self.W is not None:
            self.W = _as_complex_matrix(self.W, "W", (n, n))
        if self.R_rho is not None:
            self.R_rho = _as_complex_matrix(self.R_rho, "R_rho", (n, n))
        if self.F is not None:
            F = np.ascontiguousarray(self.F, dtype=np.complex128)
            if F.ndim == 1:
                F = F.reshape(1, -1)
            self.F = _as_complex_matrix(F, "F", (F.shape[0], n))
        if self.V is not None:
            V = np.ascontiguousarray(self.V, dtype=np.complex128)
            if V.ndim == 1:
                V = V.reshape(1, -1)
            self.V = _as_complex_matrix(V, "V", (V.shape[0], n))
        if self.tm_projector is not None:
            T = np.ascontiguousarray(self.tm_projector, dtype=np.complex128)
            self.tm_projector = _as_complex_matrix(T, "tm_projector", (T.shape[0], n))
        if self.fixed_mask is None:
            self.fixed_mask = np.zeros(n, dtype=bool)
        else:
            self.fixed_mask = _as_mask(self.fixed_mask, n, "fixed_mask")
        if self.controllable_mask is None:
            self.controllable_mask = ~self.fixed_mask
        else:
            self.controllable_mask = _as_mask(self.controllable_mask, n, "controllable_mask")
        if self.chip_mask is not None:
            self.chip_mask = _as_mask(self.chip_mask, n, "chip_mask")

    @property
    def n_opt(self) -> int:
        """Number of optimizable bits (controllable DOF)."""
        return int(np.count_nonzero(self.controllable_mask))

    @property
    def fixed_indices(self) -> np.ndarray:
        return np.flatnonzero(self.fixed_mask)

    @property
    def controllable_indices(self) -> np.ndarray:
        return np.flatnonzero(self.controllable_mask)

    @property
    def chip_indices(self) -> np.ndarray:
        if self.chip_mask is None:
            return np.zeros(0, dtype=np.intp)
        return np.flatnonzero(self.chip_mask)

    def excitation(self, index: int = 0) -> np.ndarray:
        if self.V is None or not (0 <= index < self.V.shape[0]):
            raise ConfigurationError(f"bundle has no excitation vector with index {index}")
        return self.V[index]

    def field_row(self, index: int = 0) -> np.ndarray:
        if self.F is None or not (0 <= index < self.F.shape[0]):
            raise ConfigurationError(f"bundle has no far-field row with index {index}")
        return self.F[index]

    def validate(self) -> None:
        """Check every structural invariant; raise ValidationError naming the check."""
        n = self.n_dof
        znorm = np.linalg.norm(self.Z)

        def rel(delta: float, ref: float) -> float:
            return delta / max(ref, 1e-300)

        dev = np.linalg.norm(self.Z - self.Z.T)
        if rel(dev, znorm) > _IDENTITY_RTOL:
            raise ValidationError("Z symmetry",
                                  f"||Z - Z^T|| / ||Z|| = {rel(dev, znorm):.3e}")

        for name, M in (("R0", self.R0), ("X", self.X), ("W", self.W),
                        ("R_rho", self.R_rho)):
            if M is None:
                continue
            dev = np.linalg.norm(M - M.conj().T)
            ref = np.linalg.norm(M)
            if ref > 0 and rel(dev, ref) > _IDENTITY_RTOL:
                raise ValidationError(f"{name} hermitian",
                                      f"||M - M^H|| / ||M|| = {rel(dev, ref):.3e}")

        recomposed = self.R0 + 1j * self.X
        if self.R_rho is not None:
            recomposed = recomposed + self.R_rho
        dev = np.linalg.norm(self.Z - recomposed)
        if rel(dev, znorm) > _IDENTITY_RTOL:
            raise ValidationError("Z decomposition",
                                  f"||Z - (R0 + R_rho + jX)|| / ||Z|| = {rel(dev, znorm):.3e}")

        for name, M in (("R0", self.R0), ("R_rho", self.R_rho)):
            if M is None:
                continue
            eigs = np.linalg.eigvalsh(M)
            spectral = max(abs(eigs[0]), abs(eigs[-1]), 1e-300)
            if eigs[0] < -_PSD_RTOL * spectral:
                raise ValidationError(f"{name} psd",
                                      f"min eigenvalue {eigs[0]:.3e} vs norm {spectral:.3e}")

        if np.any(self.fixed_mask & self.controllable_mask):
            raise ValidationError("mask disjointness",
                                  "fixed_mask and controllable_mask overlap")
        if self.chip_mask is not None and np.any(self.chip_mask & self.controllable_mask):
            raise ValidationError("mask disjointness",
                                  "chip_mask and controllable_mask overlap")
        if n < 1:
            raise ValidationError("n_dof", "bundle must contain at least one DOF")


@dataclass(eq=False)
class Word:
    """Binary enabled/disabled vector over the controllable DOF (the gene)."""

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=bool)
        if self.bits.ndim != 1:
            raise ConfigurationError("word bits must be a 1-D vector")

    def __len__(self) -> int:
        return int(self.bits.shape[0])

    def __eq__(self, other) -> bool:
        return isinstance(other, Word) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def from_string(cls, s: str) -> "Word":
        s = s.strip()
        if not s or any(ch not in "01" for ch in s):
            raise ConfigurationError("word string must contain only 0/1 characters")
        return cls(np.frombuffer(s.encode("ascii"), dtype=np.uint8) == ord("1"))

    def copy(self) -> "Word":
        return Word(self.bits.copy())


def materialize(word: Word, bundle: OperatorBundle) -> np.ndarray:
    """Resolve a word to its enabled index set: fixed DOF plus set bits.

    Returned indices are sorted ascending; they index rows/columns of the
    bundle matrices.
    """
    if len(word) != bundle.n_opt:
        raise ConfigurationError(
            f"word length {len(word)} does not match bundle with "
            f"{bundle.n_opt} controllable DOF")
    enabled = np.concatenate([bundle.fixed_indices,
                              bundle.controllable_indices[word.bits]])
    enabled.sort()
    return enabled.astype(np.intp)


def word_from_enabled(enabled: np.ndarray, bundle: OperatorBundle) -> Word:
    """Inverse of materialize: back out the bit vector from an enabled set."""
    on = np.zeros(bundle.n_dof, dtype=bool)
    on[np.asarray(enabled, dtype=np.intp)] = True
    return Word(on[bundle.controllable_indices])


@dataclass
class EvalCounters:
    """Structural-evaluation tallies: shapes checked for removal / addition."""

    removals_evaluated: int = 0
    additions_evaluated: int = 0

    def copy(self) -> "EvalCounters":
        return EvalCounters(self.removals_evaluated, self.additions_evaluated)


@dataclass
class StructureState:
    """Mutable solver state for one materialized word.

    Owns the maintained inverse Y = (Z[S,S])^-1, the solved current I on the
    enabled set S, the cached objective value, and evaluation counters.
    Single-owner: never share one instance mutably across threads.
    """

    enabled: np.ndarray
    Y: np.ndarray
    I: np.ndarray
    f_val: float = float("nan")
    counters: EvalCounters = field(default_factory=EvalCounters)
    excitation_index: int = 0
    refactor_period: int = 64
    commit_count: int = 0
    commits_since_refactor: int = 0
    refactor_count: int = 0
    last_residual: float = 0.0
    # Generation token guarding commit-after-batch ordering.
    batch_token: int = -1
    mutation_token: int = 0

    def embedded_current(self, n_dof: int) -> np.ndarray:
        """Current vector zero-padded to the full DOF space."""
        out = np.zeros(n_dof, dtype=np.complex128)
        out[self.enabled] = self.I
        return out

    def position_of(self, dof: int) -> int:
        p = int(np.searchsorted(self.enabled, dof))
        if p >= len(self.enabled) or self.enabled[p] != dof:
            raise ConfigurationError(f"DOF {dof} is not enabled")
        return p


class ObjectiveKind(str, Enum):
    Q = "q"
    Q_MATCHED = "q_matched"
    REALIZED_GAIN = "realized_gain"
    ABSORBED_POWER = "absorbed_power"


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which metric to optimize and its parameters.

    `sign` is +1 for metrics minimized directly and -1 for metrics maximized
    by negation (realized gain, absorbed power); the optimizer always
    minimizes sign * metric.
    """

    kind: ObjectiveKind
    zeta: float = 0.0
    Z0: complex = 50.0 + 0.0j
    q_lb_ref: Optional[float] = None
    field_index: int = 0
    feed_index: Optional[int] = None
    excitation_index: int = 0
    sign: int = 1

    @classmethod
    def q(cls, excitation_index: int = 0) -> "ObjectiveSpec":
        return cls(kind=ObjectiveKind.Q, excitation_index=excitation_index)

    @classmethod
    def q_matched(cls, zeta: float, Z0: complex = 50.0, q_lb_ref: float = 1.0,
                  feed_index: Optional[int] = None,
                  excitation_index: int = 0) -> "ObjectiveSpec":
        return cls(kind=ObjectiveKind.Q_MATCHED, zeta=float(zeta), Z0=complex(Z0),
                   q_lb_ref=float(q_lb_ref), feed_index=feed_index,
                   excitation_index=excitation_index)

    @classmethod
    def realized_gain(cls, field_index: int = 0, Z0: complex = 50.0,
                      feed_index: Optional[int] = None,
                      excitation_index: int = 0) -> "ObjectiveSpec":
        return cls(kind=ObjectiveKind.REALIZED_GAIN, Z0=complex(Z0),
                   field_index=field_index, feed_index=feed_index,
                   excitation_index=excitation_index, sign=-1)

    @classmethod
    def absorbed_power(cls, excitation_index: int = 0) -> "ObjectiveSpec":
        return cls(kind=ObjectiveKind.ABSORBED_POWER,
                   excitation_index=excitation_index, sign=-1)

    def with_zeta(self, zeta: float) -> "ObjectiveSpec":
        return replace(self, zeta=float(zeta))

    def resolved_feed_index(self, bundle: OperatorBundle) -> int:
        """Feed DOF carrying the delta gap; inferred from the excitation if unset."""
        if self.feed_index is not None:
            return int(self.feed_index)
        v = bundle.excitation(self.excitation_index)
        return int(np.argmax(np.abs(v)))

    def validate_for(self, bundle: OperatorBundle) -> None:
        """Reject objectives whose matrix prerequisites are absent."""
        kind = self.kind
        if self.zeta < 0:
            raise ConfigurationError("zeta must be >= 0")
        if kind in (ObjectiveKind.Q, ObjectiveKind.Q_MATCHED):
            if bundle.W is None:
                raise ConfigurationError(
                    f"objective {kind.value} requires the stored-energy matrix W")
        if kind == ObjectiveKind.Q_MATCHED:
            if self.q_lb_ref is None or self.q_lb_ref <= 0:
                raise ConfigurationError("q_matched requires q_lb_ref > 0")
        if kind in (ObjectiveKind.Q_MATCHED, ObjectiveKind.REALIZED_GAIN):
            if bundle.V is None:
                raise ConfigurationError(f"objective {kind.value} requires an excitation V")
        if kind == ObjectiveKind.REALIZED_GAIN:
            if bundle.F is None:
                raise ConfigurationError("realized_gain requires far-field rows F")
            bundle.field_row(self.field_index)
        if kind == ObjectiveKind.ABSORBED_POWER:
            if bundle.R_rho is None:
                raise ConfigurationError("absorbed_power requires the loss matrix R_rho")
            if bundle.chip_mask is None:
                raise ConfigurationError("absorbed_power requires a chip mask")
        if bundle.V is not None or kind != ObjectiveKind.Q:
            bundle.excitation(self.excitation_index)


@dataclass
class RunConfig:
    """Knobs for the memetic run: population, stopping, GA operators, seeds."""

    n_agents: int = 16
    max_global_iters: int = 50
    eps_glob: float = 1e-7
    eps_loc: float = 1e-7
    max_local_iters: int = 10000
    rng_seed: int = 0
    crossover_rate: float = 0.9
    mutation_rate: Optional[float] = None  # None -> 1 / N_opt
    tournament_size: int = 2
    elitism_count: int = 1
    init_fill_probability: float = 0.5
    refactor_period: int = 64
    log_wall_time: bool = False
    output_dir: Optional[str] = None

    def validate(self) -> None:
        if self.n_agents < 2:
            raise ConfigurationError("n_agents must be >= 2")
        if self.max_global_iters < 1:
            raise ConfigurationError("max_global_iters must be >= 1")
        if not (self.eps_glob > 0 and self.eps_loc > 0):
            raise ConfigurationError("eps_glob and eps_loc must be > 0")
        if not (0 < self.crossover_rate <= 1):
            raise ConfigurationError("crossover_rate must be in (0, 1]")
        if self.mutation_rate is not None and not (0 < self.mutation_rate <= 1):
            raise ConfigurationError("mutation_rate must be in (0, 1]")
        if not (0 < self.init_fill_probability <= 1):
            raise ConfigurationError("init_fill_probability must be in (0, 1]")
        if self.tournament_size < 1:
            raise ConfigurationError("tournament_size must be >= 1")
        if not (0 <= self.elitism_count <= self.n_agents):
            raise ConfigurationError("elitism_count must be in [0, n_agents]")
        if self.refactor_period < 1:
            raise ConfigurationError("refactor_period must be >= 1")
        if self.rng_seed < 0:
            raise ConfigurationError("rng_seed must be a non-negative integer")
