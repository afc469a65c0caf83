"""Time-correlated quantum process tomography for silicon spin qubits.

Submodules
----------
numerics      spectral estimation, matrix exp/log, least squares, seeding
noise         1/f charge-noise synthesis and sensitivity calibration
dynamics      piecewise-constant propagators and native gate schedules
experiments   Ramsey, Rabi, echo and CPMG benchmarks
channels      Pauli transfer matrices and error generators
tomography    windowed tomography, spectra, fidelity split, compressed model
rb            two-qubit Clifford group and interleaved RB
config, pipelines, plotting, cli   batch front-end
"""

from .channels import PauliTransferMatrix, ErrorGenerator, average_gate_fidelity, decompose, generator_basis
from .noise import OneOverFSpec, QubitNoiseParams, derive_sensitivities, synthesize_trajectory
from .numerics import BranchCutError, seeded_rng
from .tomography import CompressedGateModel, QptRunConfig, run_windowed_qpt

__version__ = "0.1.0"

__all__ = [
    "PauliTransferMatrix",
    "ErrorGenerator",
    "average_gate_fidelity",
    "decompose",
    "generator_basis",
    "OneOverFSpec",
    "QubitNoiseParams",
    "derive_sensitivities",
    "synthesize_trajectory",
    "BranchCutError",
    "seeded_rng",
    "CompressedGateModel",
    "QptRunConfig",
    "run_windowed_qpt",
]
