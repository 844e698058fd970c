"""Supervised training of a fixed-structure circuit.

Gradients use the adjoint method: one forward pass, then a backward sweep
that un-computes the state and back-propagates the loss cotangent gate by
gate.  Angles shared between module instances accumulate their contributions.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import qsim
from .circuit import (
    VqcnnLayout,
    apply_operation,
    count_parameters,
    gate_derivative,
    op_matrix,
    operations,
    mask_and_normalize,
    predict_batch,
    forward_batch,
)
from .data import Dataset
from .encode import encode_batch

PROB_FLOOR = 1e-12

# (probs (B, C), targets) -> (per-sample losses (B,), dloss/dprobs (B, C))
LossGrad = Callable[[np.ndarray, object], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 25
    iterations: int = 200
    rng_seed: int = 0
    gradient_step: float = 1e-5
    # 0 gives plain SGD; > 0 enables Nesterov momentum
    momentum: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")
        if self.gradient_step <= 0:
            raise ValueError("gradient_step must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, rng_seed=int(seed))


@dataclass
class TrainHistory:
    losses: list[float]
    final_accuracy: float

    def to_table(self, delimiter: str = "\t") -> str:
        rows = [f"iteration{delimiter}loss"]
        rows += [f"{i}{delimiter}{loss:.17g}" for i, loss in enumerate(self.losses, start=1)]
        return "\n".join(rows) + "\n"


def cross_entropy_loss(probs, label: int) -> float:
    probs = np.asarray(probs, dtype=float)
    if not 0 <= label < probs.shape[0]:
        raise ValueError(f"label {label} outside [0, {probs.shape[0]})")
    return float(-np.log(max(probs[label], PROB_FLOOR)))


def cross_entropy_grad(probs: np.ndarray, labels: np.ndarray):
    rows = np.arange(probs.shape[0])
    picked = probs[rows, labels]
    clipped = np.maximum(picked, PROB_FLOOR)
    losses = -np.log(clipped)
    grad = np.zeros_like(probs)
    grad[rows, labels] = np.where(picked > PROB_FLOOR, -1.0 / clipped, 0.0)
    return losses, grad


def _basis_to_outcome(layout: VqcnnLayout) -> np.ndarray:
    n = layout.num_qubits
    basis = np.arange(2**n)
    outcome = np.zeros_like(basis)
    for q in layout.measured_qubits:
        outcome = (outcome << 1) | ((basis >> (n - 1 - q)) & 1)
    return outcome


def loss_and_gradient(
    layout: VqcnnLayout,
    theta,
    amplitudes: np.ndarray,
    targets,
    loss_grad: LossGrad = cross_entropy_grad,
) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient with respect to ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[0] != count_parameters(layout):
        raise ValueError(
            f"expected {count_parameters(layout)} parameters, got {theta.shape[0]}"
        )
    n = layout.num_qubits
    b = amplitudes.shape[0]
    ops = operations(layout)
    mats = [op_matrix(op, theta) for op in ops]

    psi = np.asarray(amplitudes, dtype=complex)
    for op, mat in zip(ops, mats):
        psi = apply_operation(psi, op, mat, n)

    marg = qsim.marginal_probabilities_batch(psi, layout.measured_qubits, n)
    probs = mask_and_normalize(marg, layout.class_count)
    losses, dprobs = loss_grad(probs, targets)
    dprobs = dprobs / b

    # through the renormalization over valid outcomes
    total = marg[:, : layout.class_count].sum(axis=1, keepdims=True)
    dmarg = np.zeros_like(marg)
    dmarg[:, : layout.class_count] = (
        dprobs - (dprobs * probs).sum(axis=1, keepdims=True)
    ) / total
    lam = dmarg[:, _basis_to_outcome(layout)] * psi

    grad = np.zeros_like(theta)
    for op, mat in zip(reversed(ops), reversed(mats)):
        inv = mat.conj().T
        psi = apply_operation(psi, op, inv, n)
        if op.param is not None:
            dmat = gate_derivative(op.kind, theta[op.param])
            if op.control is None:
                dpsi = qsim.apply_single_batch(psi, dmat, op.target, n)
            else:
                dpsi = qsim.apply_controlled_batch(psi, op.control, op.target, dmat, n, project=True)
            grad[op.param] += 2.0 * np.real(np.vdot(lam, dpsi))
        lam = apply_operation(lam, op, inv, n)
    return float(losses.mean()), grad


def gradient(layout: VqcnnLayout, theta, batch: Dataset) -> np.ndarray:
    if len(batch) == 0:
        raise ValueError("empty batch")
    return loss_and_gradient(layout, theta, encode_batch(batch.features), batch.labels)[1]


def mean_loss(layout: VqcnnLayout, theta, batch: Dataset) -> float:
    probs = forward_batch(layout, theta, encode_batch(batch.features))
    return float(cross_entropy_grad(probs, batch.labels)[0].mean())


def finite_difference_gradient(
    loss: Callable[[np.ndarray], float], theta, step: float = 1e-5
) -> np.ndarray:
    """Central differences of a scalar function of the angle vector."""
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for i in range(theta.shape[0]):
        up, down = theta.copy(), theta.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (loss(up) - loss(down)) / (2 * step)
    return grad


def init_parameters(layout: VqcnnLayout, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-np.pi, np.pi, size=count_parameters(layout))


def descend(
    layout: VqcnnLayout,
    theta0,
    amplitudes: np.ndarray,
    targets,
    cfg: TrainConfig,
    rng: np.random.Generator,
    loss_grad: LossGrad = cross_entropy_grad,
) -> tuple[np.ndarray, list[float]]:
    """Minibatch gradient descent; ``targets`` is indexed alongside ``amplitudes``."""
    theta = np.array(theta0, dtype=float)
    velocity = np.zeros_like(theta)
    m = amplitudes.shape[0]
    size = min(cfg.batch_size, m)
    losses = []
    for _ in range(cfg.iterations):
        idx = np.sort(rng.choice(m, size=size, replace=False))
        # Nesterov: evaluate the gradient at the look-ahead point
        probe = theta + cfg.momentum * velocity
        loss, grad = loss_and_gradient(layout, probe, amplitudes[idx], targets[idx], loss_grad)
        velocity = cfg.momentum * velocity - cfg.learning_rate * grad
        theta = theta + velocity
        losses.append(loss)
    return theta, losses


def train_model(
    layout: VqcnnLayout, dataset: Dataset, cfg: TrainConfig, theta0=None
) -> tuple[np.ndarray, TrainHistory]:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if dataset.labels.max() >= layout.class_count or dataset.labels.min() < 0:
        raise ValueError(f"labels must lie in [0, {layout.class_count})")
    rng = np.random.default_rng(cfg.rng_seed)
    theta = init_parameters(layout, rng) if theta0 is None else np.asarray(theta0, dtype=float)
    amps = encode_batch(dataset.features)
    theta, losses = descend(layout, theta, amps, dataset.labels, cfg, rng)
    acc = accuracy_on(layout, theta, amps, dataset.labels)
    return theta, TrainHistory(losses, acc)


def accuracy_on(layout: VqcnnLayout, theta, amplitudes: np.ndarray, labels: np.ndarray) -> float:
    preds = predict_batch(forward_batch(layout, theta, amplitudes))
    return float(np.mean(preds == labels))


def evaluate(layout: VqcnnLayout, theta, dataset: Dataset) -> float:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return accuracy_on(layout, theta, encode_batch(dataset.features), dataset.labels)
