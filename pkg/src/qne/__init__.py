"""Quantum neural estimation of entropies and measured relative entropies.

Hermitian operators are parameterized with a quantum circuit (eigenvectors)
and a small neural network (eigenvalues); measurement outcomes are sampled
from a dense density-operator simulator and the variational objective is
optimized with parameter-shift and backpropagation gradients.
"""

from qne.circuit import CircuitLayout, Gate, build_unitary, outcome_distribution, random_layout, sample_outcomes
from qne.estimators import (
    ExplicitEigenvalues,
    HermitianAnsatz,
    NeuralEigenvalues,
    Objective,
    Quantity,
    SampleBatch,
    TrainingConfig,
    TrainingTrace,
    estimate_quantity,
    objective_value,
    train,
)
from qne.neural import MlpParams
from qne.qcore import DensityOperator, PureState

__version__ = "0.1.0"

__all__ = [
    "CircuitLayout",
    "DensityOperator",
    "ExplicitEigenvalues",
    "Gate",
    "HermitianAnsatz",
    "MlpParams",
    "NeuralEigenvalues",
    "Objective",
    "PureState",
    "Quantity",
    "SampleBatch",
    "TrainingConfig",
    "TrainingTrace",
    "build_unitary",
    "estimate_quantity",
    "objective_value",
    "outcome_distribution",
    "random_layout",
    "sample_outcomes",
    "train",
]
