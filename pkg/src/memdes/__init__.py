"""Memetic binary topology optimization over operator bundles.

The package couples an inversion-free exact-reanalysis local step with a
genetic global step, evaluates Q-factor / matching / realized-gain /
absorbed-power objectives on method-of-moments style operator bundles, and
provides QCQP fundamental-bound solvers that act as optimization yardsticks
and stopping criteria.
"""

from .errors import (ConfigurationError, FormatError, InfeasibleWordError,
                     InvalidMoveError, MemdesError, SolverError, ValidationError)
from .model import (BundleMeta, ObjectiveKind, ObjectiveSpec, OperatorBundle,
                    RunConfig, StructureState, Word, materialize,
                    word_from_enabled)
from .opb import bundle_hash, read_bundle, write_bundle
from .generators import (gen_random_passive, gen_rlc_ladder, gen_wire_array,
                         surface_resistivity, synthesize_tm_projector)
from .objectives import (QBreakdown, eval_absorbed_power, eval_gamma, eval_q,
                         eval_q_matched, eval_realized_gain, objective_batch,
                         objective_value)
from .reanalysis import (Candidate, Move, batch_addition_currents,
                         batch_removal_currents, commit, evaluate_candidates,
                         init_state, residual)
from .local_step import local_search, sensitivity_map
from .global_step import (Agent, MemeticResult, memetic_optimize,
                          pareto_sweep)
from .bounds import (BoundResult, absorbed_power_bound,
                     hermitian_pencil_min_eig, q_lower_bound,
                     realized_gain_bound)
from .oracles import (dense_solve, enumerate_optimum, far_field_gain,
                      sample_feasible_bound_oracle)

__version__ = "0.1.0"
