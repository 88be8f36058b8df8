"""Pulse synthesis for coupled qubits with intruder and spectator errors.

Targeted-correction pulses cancel a known conditional level splitting;
error-robust pulses built from closed space curves flatten the fidelity
against a quasi-static range of splittings.
"""

from ._validation import (CapacityError, ContractError, DegeneracyError, PropagationError, RegimeError,
                          SynthesisError)
from .devices import (BipartitePair, Coupling, Node, TransmonChain, build_hamiltonian, computational_propagator,
                      dressed_basis, effective_splitting, fig2_chain, fig4_pair, load_device,
                      spectated_total_hamiltonian)
from .erg import (ErgPulse, ErrorCurve, arclength_reparametrize, curve_to_pulse, design_planar_curve, erg_fidelity,
                  order1_residual, order2_residual, rotation_angle, verify_error_map)
from .gates import GateTarget, spectated_entangler, standard_gate
from .operators import TimeGrid, expm_hermitian, ghz, mhz, propagate, trace_fidelity
from .pulses import Pulse
from .refine import PulseRefiner, RefineConfig, ScanResult, refine, scan_amplitude, scan_delta
from .spectrum import LineshapeFitter, absorption_doublet, fit_linewidth, merge_threshold
from .tcg import (ReducedDriveModel, TcgConstraints, TcgSynthesizer, block_offdiag_norm, constraint_residuals,
                  solve_tcg, subspace_propagators)

__version__ = "0.1.0"

__all__ = [
    "BipartitePair", "CapacityError", "ContractError", "Coupling", "DegeneracyError", "ErgPulse", "ErrorCurve",
    "GateTarget", "LineshapeFitter", "Node", "PropagationError", "Pulse", "PulseRefiner", "ReducedDriveModel",
    "RefineConfig", "RegimeError", "ScanResult", "SynthesisError", "TcgConstraints", "TcgSynthesizer", "TimeGrid",
    "TransmonChain", "absorption_doublet", "arclength_reparametrize", "block_offdiag_norm", "build_hamiltonian",
    "computational_propagator", "constraint_residuals", "curve_to_pulse", "design_planar_curve", "dressed_basis",
    "effective_splitting", "erg_fidelity", "expm_hermitian", "fig2_chain", "fig4_pair", "fit_linewidth", "ghz",
    "load_device", "merge_threshold", "mhz", "order1_residual", "order2_residual", "propagate", "refine",
    "rotation_angle", "scan_amplitude", "scan_delta", "solve_tcg", "spectated_entangler",
    "spectated_total_hamiltonian", "standard_gate", "subspace_propagators", "trace_fidelity", "verify_error_map",
]
