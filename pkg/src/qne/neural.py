"""Eigenvalue network: one sigmoid hidden layer, linear scalar output.

A basis index ``i`` is fed to the network as its big-endian bits in
``{0.0, 1.0}``, one input per qubit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Tuple

import numpy as np

from qne.errors import InvalidDimensionError


def encode_index(i: int, num_qubits: int) -> np.ndarray:
    if not 0 <= i < 2**num_qubits:
        raise InvalidDimensionError(f"index {i} out of range for {num_qubits} qubits")
    return np.array([(i >> (num_qubits - 1 - k)) & 1 for k in range(num_qubits)], dtype=float)


def encode_all(num_qubits: int) -> np.ndarray:
    """Bit encodings of every index, one row per index."""
    idx = np.arange(2**num_qubits)[:, None]
    shifts = np.arange(num_qubits - 1, -1, -1)[None, :]
    return ((idx >> shifts) & 1).astype(float)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class MlpParams:
    weights_in: np.ndarray  # (hidden_dim, input_dim)
    bias_in: np.ndarray  # (hidden_dim,)
    weights_out: np.ndarray  # (1, hidden_dim)
    bias_out: float

    def __post_init__(self):
        self.weights_in = np.array(self.weights_in, dtype=float)
        self.bias_in = np.array(self.bias_in, dtype=float).reshape(-1)
        self.weights_out = np.array(self.weights_out, dtype=float).reshape(1, -1)
        self.bias_out = float(self.bias_out)
        h, k = self.weights_in.shape
        if self.bias_in.shape != (h,) or self.weights_out.shape != (1, h):
            raise InvalidDimensionError("inconsistent MLP parameter shapes")
        if not np.all(np.isfinite(self.to_vector())):
            raise ValueError("MLP parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.weights_in.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.weights_in.shape[0]

    @property
    def num_params(self) -> int:
        return self.hidden_dim * (self.input_dim + 2) + 1

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "MlpParams":
        return cls(np.zeros((hidden_dim, input_dim)), np.zeros(hidden_dim), np.zeros((1, hidden_dim)), 0.0)

    @classmethod
    def glorot(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "MlpParams":
        """Weights uniform in ``±sqrt(6 / (fan_in + fan_out))``, biases zero."""
        a_in = np.sqrt(6.0 / (input_dim + hidden_dim))
        a_out = np.sqrt(6.0 / (hidden_dim + 1))
        return cls(
            rng.uniform(-a_in, a_in, size=(hidden_dim, input_dim)),
            np.zeros(hidden_dim),
            rng.uniform(-a_out, a_out, size=(1, hidden_dim)),
            0.0,
        )

    def to_vector(self) -> np.ndarray:
        """Flatten as ``[weights_in, bias_in, weights_out, bias_out]``."""
        return np.concatenate(
            [self.weights_in.ravel(), self.bias_in, self.weights_out.ravel(), [self.bias_out]]
        )

    @classmethod
    def from_vector(cls, vec, input_dim: int, hidden_dim: int) -> "MlpParams":
        vec = np.asarray(vec, dtype=float)
        h, k = hidden_dim, input_dim
        if vec.shape != (h * (k + 2) + 1,):
            raise InvalidDimensionError(f"expected {h * (k + 2) + 1} parameters, got {vec.shape}")
        a = h * k
        return cls(vec[:a].reshape(h, k), vec[a : a + h], vec[a + h : a + 2 * h].reshape(1, h), vec[-1])

    def like_vector(self, vec) -> "MlpParams":
        return MlpParams.from_vector(vec, self.input_dim, self.hidden_dim)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "weights_in": {"shape": list(self.weights_in.shape), "data": self.weights_in.ravel().tolist()},
            "bias_in": {"shape": [self.hidden_dim], "data": self.bias_in.tolist()},
            "weights_out": {"shape": [1, self.hidden_dim], "data": self.weights_out.ravel().tolist()},
            "bias_out": self.bias_out,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpParams":
        def arr(entry):
            return np.asarray(entry["data"], dtype=float).reshape(entry["shape"])

        return cls(arr(data["weights_in"]), arr(data["bias_in"]), arr(data["weights_out"]), data["bias_out"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "MlpParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _hidden(params: MlpParams, x: np.ndarray) -> np.ndarray:
    return sigmoid(x @ params.weights_in.T + params.bias_in)


def forward(params: MlpParams, i: int) -> float:
    x = encode_index(i, params.input_dim)
    return float(params.weights_out[0] @ _hidden(params, x) + params.bias_out)


def forward_all(params: MlpParams) -> np.ndarray:
    """Network output for every index ``0 .. 2**input_dim - 1``."""
    a = _hidden(params, encode_all(params.input_dim))
    return a @ params.weights_out[0] + params.bias_out


def backward_dense(params: MlpParams, upstream: np.ndarray) -> MlpParams:
    """Gradient of ``sum_i upstream[i] * f(i)`` over all parameters.

    ``upstream`` has one entry per index.
    """
    x = encode_all(params.input_dim)
    u = np.asarray(upstream, dtype=float)
    a = _hidden(params, x)
    dz = (u[:, None] * params.weights_out) * a * (1.0 - a)
    return MlpParams(dz.T @ x, dz.sum(axis=0), (u @ a)[None, :], u.sum())


def backward(params: MlpParams, per_index_output_grads: Iterable[Tuple[int, float]]) -> MlpParams:
    """Accumulated gradient of ``sum upstream * f(index)`` over ``(index, upstream)`` pairs."""
    d = 2**params.input_dim
    u = np.zeros(d)
    for i, g in per_index_output_grads:
        if not 0 <= i < d:
            raise InvalidDimensionError(f"index {i} out of range for {params.input_dim} qubits")
        u[i] += g
    return backward_dense(params, u)
