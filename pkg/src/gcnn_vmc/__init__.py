"""Group-equivariant CNN wavefunctions for J1-J2 Heisenberg models on 2D tori."""
from .ed import EdResult, ground_state, tabulated_wavefunction, variational_energy
from .estimator import GCNNGroundState
from .exceptions import CheckpointError, EDConvergenceError, EDRangeError, NodeError, NonFiniteActivation
from .gcnn import GcnnConfig, Wavefunction, count_params
from .heisenberg import HeisenbergModel, local_energies, local_energy
from .lattice import LatticeSpec, build_lattice, custom_lattice
from .symmetry import SymmetryGroup, build_group, validate_character
from .vmc import SamplerConfig, TrainSchedule, evaluate_energy, train

__all__ = [
    "CheckpointError", "EDConvergenceError", "EDRangeError", "EdResult", "GCNNGroundState", "GcnnConfig",
    "HeisenbergModel", "LatticeSpec", "NodeError", "NonFiniteActivation", "SamplerConfig", "SymmetryGroup",
    "TrainSchedule", "Wavefunction", "build_group", "build_lattice", "count_params", "custom_lattice",
    "evaluate_energy", "ground_state", "local_energies", "local_energy", "tabulated_wavefunction", "train",
    "validate_character", "variational_energy",
]
