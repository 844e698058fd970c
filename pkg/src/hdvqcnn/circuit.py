"""Layered convolution/pooling circuits built from a gate-index structure.

A model is a :class:`VqcnnLayout` (which gates act where) plus a flat angle
vector.  The angle vector is layer-major: for each layer, the angles of the
parameterized gates of the convolution block in structure order, then the two
pooling angles.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import qsim
from .qsim import StateVector

class GateKind(enum.Enum):
    X = 1
    Y = 2
    Z = 3
    I = 4
    RX = 5
    RY = 6
    RZ = 7
    CNOT = 8
    CY = 9
    CZ = 10
    CRX = 11
    CRY = 12
    CRZ = 13

    @property
    def index(self) -> int:
        return self.value

    @property
    def is_parameterized(self) -> bool:
        return self in _ROTATION_AXIS

    @property
    def is_two_qubit(self) -> bool:
        return self.value >= 8


_FIXED = {
    GateKind.X: qsim.X,
    GateKind.Y: qsim.Y,
    GateKind.Z: qsim.Z,
    GateKind.I: qsim.I2,
    GateKind.CNOT: qsim.X,
    GateKind.CY: qsim.Y,
    GateKind.CZ: qsim.Z,
}
_ROTATION_AXIS = {
    GateKind.RX: qsim.X,
    GateKind.RY: qsim.Y,
    GateKind.RZ: qsim.Z,
    GateKind.CRX: qsim.X,
    GateKind.CRY: qsim.Y,
    GateKind.CRZ: qsim.Z,
}
_ROTATION = {
    GateKind.RX: qsim.rx,
    GateKind.RY: qsim.ry,
    GateKind.RZ: qsim.rz,
    GateKind.CRX: qsim.rx,
    GateKind.CRY: qsim.ry,
    GateKind.CRZ: qsim.rz,
}

# pooling block: two controlled rotations, discarded qubit controls retained one
POOL_GATES = (GateKind.CRZ, GateKind.CRX)


def gate_matrix(kind: GateKind, angle: float | None = None) -> np.ndarray:
    """2x2 matrix acting on the target (for controlled kinds, the controlled block)."""
    if kind in _FIXED:
        return _FIXED[kind]
    return _ROTATION[kind](angle)


def gate_derivative(kind: GateKind, angle: float) -> np.ndarray:
    """d/dangle of :func:`gate_matrix`; rotations are exp(-i angle P / 2)."""
    axis = _ROTATION_AXIS[kind]
    return -0.5j * axis @ gate_matrix(kind, angle)


class PlacedGate(NamedTuple):
    kind: GateKind
    target: int
    control: int | None = None


def decode_gate(index: int, pair: tuple[int, int]) -> PlacedGate:
    """Place gate ``index`` (1..13) on a qubit pair.

    Odd single-qubit indices act on the first qubit and even ones on the
    second.  For two-qubit kinds an odd index uses the first qubit as control,
    an even index the second.
    """
    if not 1 <= index <= 13:
        raise ValueError(f"gate index {index} outside [1, 13]")
    first, second = pair
    if first == second:
        raise ValueError("pair must name two distinct qubits")
    kind = GateKind(index)
    odd = index % 2 == 1
    if kind.is_two_qubit:
        return PlacedGate(kind, second, first) if odd else PlacedGate(kind, first, second)
    return PlacedGate(kind, first if odd else second)


@dataclass(frozen=True)
class LayerPlan:
    active: tuple[int, ...]
    conv_pairs: tuple[tuple[int, int], ...]
    # (retained, discarded)
    pool_pairs: tuple[tuple[int, int], ...]

    @property
    def retained(self) -> tuple[int, ...]:
        dropped = {d for _, d in self.pool_pairs}
        return tuple(q for q in self.active if q not in dropped)


@dataclass(frozen=True)
class VqcnnLayout:
    num_qubits: int
    class_count: int
    u_structure: tuple[int, ...]
    layers: tuple[LayerPlan, ...]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def measured_qubits(self) -> tuple[int, ...]:
        return self.layers[-1].retained

    @property
    def u_param_count(self) -> int:
        return sum(GateKind(g).is_parameterized for g in self.u_structure)

    @property
    def params_per_layer(self) -> int:
        return self.u_param_count + len(POOL_GATES)


def measured_count(class_count: int) -> int:
    return max(1, math.ceil(math.log2(class_count)))


def build_layout(num_qubits: int, class_count: int, u_structure: Sequence[int]) -> VqcnnLayout:
    """Alternate convolution and pooling until the measured register remains.

    There are always log2(num_qubits) layers.  Each layer halves the active
    register but never below ceil(log2 C) qubits; once that floor is reached
    a layer pools partially or not at all (its pooling angles stay unused).
    """
    if num_qubits < 2 or num_qubits & (num_qubits - 1):
        raise ValueError(f"num_qubits must be a power of two >= 2, got {num_qubits}")
    if class_count < 2:
        raise ValueError("class_count must be >= 2")
    if class_count > 2**num_qubits:
        raise ValueError(f"{class_count} classes do not fit in {num_qubits} qubits")
    structure = tuple(int(g) for g in u_structure)
    if not structure:
        raise ValueError("u_structure must contain at least one gate")
    for g in structure:
        if not 1 <= g <= 13:
            raise ValueError(f"gate index {g} outside [1, 13]")
    floor_count = measured_count(class_count)
    active = tuple(range(num_qubits))
    layers = []
    for depth in range(1, int(math.log2(num_qubits)) + 1):
        keep = max(floor_count, num_qubits >> depth)
        conv = tuple(zip(active[:-1], active[1:]))
        pools = []
        for j in range(len(active) - keep):
            pools.append((active[2 * j], active[2 * j + 1]))
        plan = LayerPlan(active, conv, tuple(pools))
        layers.append(plan)
        active = plan.retained
    return VqcnnLayout(num_qubits, class_count, structure, tuple(layers))


def count_parameters(layout: VqcnnLayout) -> int:
    return layout.num_layers * layout.params_per_layer


def gate_cost(layout: VqcnnLayout) -> int:
    """Fundamental gates executed by one forward pass."""
    return sum(
        len(layer.conv_pairs) * len(layout.u_structure) + len(layer.pool_pairs) * len(POOL_GATES)
        for layer in layout.layers
    )


class Operation(NamedTuple):
    kind: GateKind
    target: int
    control: int | None
    param: int | None  # index into the flat angle vector


def operations(layout: VqcnnLayout) -> list[Operation]:
    """Gate sequence of the whole circuit, with angle-vector indices."""
    ops = []
    per_layer = layout.params_per_layer
    for depth, layer in enumerate(layout.layers):
        base = depth * per_layer
        for pair in layer.conv_pairs:
            slot = base
            for g in layout.u_structure:
                placed = decode_gate(g, pair)
                param = None
                if placed.kind.is_parameterized:
                    param = slot
                    slot += 1
                ops.append(Operation(placed.kind, placed.target, placed.control, param))
        pool_base = base + layout.u_param_count
        for retained, discarded in layer.pool_pairs:
            for k, kind in enumerate(POOL_GATES):
                ops.append(Operation(kind, retained, discarded, pool_base + k))
    return ops


def apply_operation(psi: np.ndarray, op: Operation, matrix: np.ndarray, n: int) -> np.ndarray:
    if op.control is None:
        return qsim.apply_single_batch(psi, matrix, op.target, n)
    return qsim.apply_controlled_batch(psi, op.control, op.target, matrix, n)


def op_matrix(op: Operation, theta: np.ndarray) -> np.ndarray:
    return gate_matrix(op.kind, None if op.param is None else theta[op.param])


def _check_theta(layout: VqcnnLayout, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    expected = count_parameters(layout)
    if theta.shape[0] != expected:
        raise ValueError(f"expected {expected} parameters, got {theta.shape[0]}")
    return theta


def evolve_batch(layout: VqcnnLayout, theta, amplitudes: np.ndarray) -> np.ndarray:
    theta = _check_theta(layout, theta)
    psi = np.asarray(amplitudes, dtype=complex)
    if psi.ndim != 2 or psi.shape[1] != 2**layout.num_qubits:
        raise ValueError(
            f"input must have {2**layout.num_qubits} amplitudes per sample, got shape {psi.shape}"
        )
    for op in operations(layout):
        psi = apply_operation(psi, op, op_matrix(op, theta), layout.num_qubits)
    return psi


def mask_and_normalize(marginals: np.ndarray, class_count: int) -> np.ndarray:
    """Drop bitstrings >= C and renormalize the valid ones per row."""
    valid = marginals[..., :class_count]
    total = valid.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("all probability mass fell on invalid bitstrings")
    return valid / total


def forward_batch(layout: VqcnnLayout, theta, amplitudes: np.ndarray) -> np.ndarray:
    """Class probabilities for a ``(B, 2**n)`` batch of encoded inputs; shape ``(B, C)``."""
    psi = evolve_batch(layout, theta, amplitudes)
    marg = qsim.marginal_probabilities_batch(psi, layout.measured_qubits, layout.num_qubits)
    return mask_and_normalize(marg, layout.class_count)


def forward(layout: VqcnnLayout, theta, state: StateVector) -> np.ndarray:
    if state.num_qubits != layout.num_qubits:
        raise ValueError(
            f"input has {state.num_qubits} qubits, layout expects {layout.num_qubits}"
        )
    return forward_batch(layout, theta, state.amplitudes[None, :])[0]


def predict(probs) -> int:
    probs = np.asarray(probs, dtype=float)
    if probs.size == 0:
        raise ValueError("empty probability vector")
    # np.argmax returns the first maximal entry
    return int(np.argmax(probs))


def predict_batch(probs: np.ndarray) -> np.ndarray:
    return np.argmax(probs, axis=-1)


# --- model files -----------------------------------------------------------


@dataclass(frozen=True)
class Model:
    layout: VqcnnLayout
    theta: np.ndarray

    def __post_init__(self):
        theta = _check_theta(self.layout, self.theta).copy()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def predict_proba(self, amplitudes: np.ndarray) -> np.ndarray:
        return forward_batch(self.layout, self.theta, amplitudes)

    @property
    def payload_size(self) -> int:
        """Numbers needed to ship the model: gate indices plus angles."""
        return len(self.layout.u_structure) + len(self.theta)


def dumps_model(model: Model) -> str:
    layout = model.layout
    lines = [
        f"num_qubits = {layout.num_qubits}",
        f"class_count = {layout.class_count}",
        f"num_layers = {layout.num_layers}",
        "gate_indices = " + ",".join(str(g) for g in layout.u_structure),
        "parameters = " + ",".join(format(float(t), ".17g") for t in model.theta),
    ]
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> Model:
    fields = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed model line: {raw!r}")
        fields[key.strip()] = value.strip()
    missing = {"num_qubits", "class_count", "num_layers", "gate_indices", "parameters"} - fields.keys()
    if missing:
        raise ValueError(f"model record missing fields: {sorted(missing)}")
    gates = [int(g) for g in fields["gate_indices"].split(",")]
    layout = build_layout(int(fields["num_qubits"]), int(fields["class_count"]), gates)
    if layout.num_layers != int(fields["num_layers"]):
        raise ValueError(
            f"record says {fields['num_layers']} layers, structure implies {layout.num_layers}"
        )
    params = fields["parameters"]
    theta = np.array([float(t) for t in params.split(",")] if params else [], dtype=float)
    return Model(layout, theta)


def save_model(model: Model, path) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path) -> Model:
    return loads_model(Path(path).read_text())
