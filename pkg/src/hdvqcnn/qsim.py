"""Dense state-vector simulation of small qubit registers.

Qubit 0 is the most significant bit of the basis index, so the bitstring
``c`` of a basis state reads qubit 0 leftmost.

The public functions take and return :class:`StateVector` values.  The
``*_batch`` helpers work on raw ``(batch, 2**n)`` complex arrays and are what
the circuit and training code call in their inner loops.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NORM_TOL = 1e-9


@dataclass(frozen=True)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be >= 1")
        if amps.shape[0] != 2**self.num_qubits:
            raise ValueError(
                f"expected {2**self.num_qubits} amplitudes, got {amps.shape[0]}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm={norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @classmethod
    def basis(cls, bits: str) -> "StateVector":
        """Computational basis state from a bitstring such as ``"10"``."""
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(len(bits), amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


# --- gate matrices ---------------------------------------------------------

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)

for _m in (I2, X, Y, Z, H):
    _m.setflags(write=False)


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    return np.array(
        [[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex
    )


def is_unitary(gate: np.ndarray, atol: float = 1e-12) -> bool:
    gate = np.asarray(gate)
    return gate.shape == (2, 2) and np.allclose(
        gate.conj().T @ gate, I2, rtol=0, atol=atol
    )


# --- batched kernels -------------------------------------------------------


def _check_qubit(q: int, n: int) -> None:
    if not 0 <= q < n:
        raise IndexError(f"qubit {q} out of range for {n}-qubit register")


def apply_single_batch(psi: np.ndarray, gate: np.ndarray, qubit: int, n: int) -> np.ndarray:
    """Apply a 2x2 matrix to ``qubit`` of every row of ``psi`` (shape ``(B, 2**n)``)."""
    b = psi.shape[0]
    t = psi.reshape(b, 2**qubit, 2, 2 ** (n - qubit - 1))
    out = np.einsum("ij,bajc->baic", gate, t)
    return out.reshape(b, 2**n)


def apply_controlled_batch(
    psi: np.ndarray,
    control: int,
    target: int,
    gate: np.ndarray,
    n: int,
    project: bool = False,
) -> np.ndarray:
    """Apply ``gate`` to ``target`` on the control=1 subspace.

    With ``project=True`` the control=0 subspace is zeroed instead of being
    passed through, which gives ``|1><1| (x) gate``; the adjoint gradient uses
    this for derivatives of controlled rotations.
    """
    b = psi.shape[0]
    t = psi.reshape((b,) + (2,) * n)
    out = np.zeros_like(t) if project else t.copy()
    idx = [slice(None)] * (n + 1)
    idx[control + 1] = 1
    idx = tuple(idx)
    sub = t[idx]
    # axis of the target inside the control=1 slice
    axis = target + 1 if target < control else target
    moved = np.moveaxis(sub, axis, -1)
    out[idx] = np.moveaxis(moved @ gate.T, -1, axis)
    return out.reshape(b, 2**n)


def marginal_probabilities_batch(psi: np.ndarray, measured: Sequence[int], n: int) -> np.ndarray:
    b = psi.shape[0]
    probs = (np.abs(psi) ** 2).reshape((b,) + (2,) * n)
    measured = list(measured)
    rest = tuple(q + 1 for q in range(n) if q not in measured)
    if rest:
        probs = probs.sum(axis=rest)
    # remaining axes are the measured qubits in ascending order; reorder to the
    # requested order so the first listed qubit is the most significant bit
    order = sorted(measured)
    perm = [0] + [order.index(q) + 1 for q in measured]
    probs = np.transpose(probs, perm)
    return probs.reshape(b, 2 ** len(measured))


# --- StateVector API -------------------------------------------------------


def apply_single(state: StateVector, gate: np.ndarray, qubit: int) -> StateVector:
    n = state.num_qubits
    _check_qubit(qubit, n)
    out = apply_single_batch(state.amplitudes[None, :], np.asarray(gate, dtype=complex), qubit, n)
    return StateVector(n, out[0])


def apply_controlled(state: StateVector, control: int, target: int, gate: np.ndarray) -> StateVector:
    n = state.num_qubits
    _check_qubit(control, n)
    _check_qubit(target, n)
    if control == target:
        raise ValueError("control and target must differ")
    out = apply_controlled_batch(
        state.amplitudes[None, :], control, target, np.asarray(gate, dtype=complex), n
    )
    return StateVector(n, out[0])


def marginal_probabilities(state: StateVector, measured: Sequence[int]) -> np.ndarray:
    """Probability of each bitstring over ``measured`` (first listed qubit leftmost)."""
    n = state.num_qubits
    measured = list(measured)
    if not measured:
        raise ValueError("measured qubit list is empty")
    if len(set(measured)) != len(measured):
        raise ValueError(f"duplicate qubit in {measured}")
    for q in measured:
        _check_qubit(q, n)
    return marginal_probabilities_batch(state.amplitudes[None, :], measured, n)[0]
