"""Numerics for wave transition through a hyperbolic fixed point.

The package builds the invariant-manifold geometry of a barrier-top
Hamiltonian, expands trajectories in decaying exponentials, constructs
the outgoing solution of the section Cauchy problem, evaluates the
principal transition amplitude through two independent pipelines, and
cross-checks everything against a one-dimensional ODE oracle and
phase-space mass diagnostics.
"""

__version__ = "0.1.0"

from ._kernels import backend_name
from .errors import (ConvergenceError, DomainEscapeError, FoldError,
                     NumericalError, PoleError, ValidationError)
from .models import (HamiltonianModel, PhasePoint, ResonanceLattice,
                     SpectralParams, branch_roots, distance_to_lattice,
                     linearize, make_barrier_model, make_custom_model,
                     make_quadratic_model, model_from_spec, resonance_lattice,
                     spectral_params)
from .series import (ExponentLadder, PolyExpSeries, difference_ladder,
                     exponent_ladder, fit_exp_series, leading_term,
                     resolvent_integral, split_series, truncation_index)
from .flow import flow, flow_states, flow_with_jacobian, symplectic_defect
from .manifolds import (LagrangianChart, invariance_residual,
                        manifold_generating_function)
from .scenario import TransitionScenario, leading_decay, make_scenario
from .phases import (auxiliary_lagrangian, critical_time,
                     eikonal_from_section, evolve_phase, intersection_point,
                     section_phase_constant)
from .transition import (SymbolChain, TransitionEvaluation, apply_transition,
                         badset_value, outgoing_symbol, transition_symbol,
                         transition_symbol_via_transport,
                         transport_amplitude)
from .microlocal import (BallRegion, ComplementRegion, GridFunction,
                         TubeRegion, fbi_transform, frequency_mass,
                         pde_residual, weyl_apply)
from .oracle1d import (ConnectionResult, assemble_crossing_solution,
                       barrier_connection, compare_transition,
                       scaled_resonances)
from .specfun import gamma, log_gamma

__all__ = [name for name in dir() if not name.startswith("_")]
