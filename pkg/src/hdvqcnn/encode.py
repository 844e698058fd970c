"""Amplitude encoding of classical feature vectors."""
from __future__ import annotations

import math

import numpy as np

from .qsim import StateVector


def num_qubits_for(dim: int) -> int:
    """Qubits needed to hold ``dim`` amplitudes (at least one)."""
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    return max(1, math.ceil(math.log2(dim)))


def encode_batch(features: np.ndarray) -> np.ndarray:
    """Encode each row of an ``(M, D)`` matrix; returns ``(M, 2**q)`` complex amplitudes.

    Rows are zero-padded up to the next power of two and scaled to unit norm.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    m, d = features.shape
    if d == 0:
        raise ValueError("cannot encode an empty vector")
    norms = np.linalg.norm(features, axis=1)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms == 0)[0])
        raise ValueError(f"row {bad} is all zeros; amplitude encoding is undefined")
    width = 2 ** num_qubits_for(d)
    out = np.zeros((m, width), dtype=complex)
    out[:, :d] = features / norms[:, None]
    return out


def amplitude_encode(x) -> StateVector:
    x = np.asarray(x, dtype=float).reshape(-1)
    amps = encode_batch(x[None, :])[0]
    return StateVector(num_qubits_for(x.shape[0]), amps)
