"""One-shot federation: local search and training, public-set reports, distillation.

Message flow, all recorded in a :class:`FederationTranscript`:

1. every client uploads a report (soft labels on the public set + accuracy);
2. the selected student uploads its model (gate indices and angles);
3. the server distills and broadcasts the global model to every client.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import complexity, pso
from .circuit import Model, build_layout, forward_batch, predict_batch
from .complexity import ComplexityConfig, ComplexityReport
from .data import Dataset
from .encode import encode_batch, num_qubits_for
from .train import PROB_FLOOR, TrainConfig, accuracy_on, descend

log = logging.getLogger(__name__)

SERVER = "server"


def client_name(client_id: int) -> str:
    return f"client:{client_id}"


@dataclass
class ClientSpec:
    client_id: int
    dataset: Dataset
    complexity: ComplexityReport
    search: pso.SearchResult
    model: Model


@dataclass
class ClientReport:
    client_id: int
    accuracy: float
    soft_labels: np.ndarray

    @property
    def payload_size(self) -> int:
        return int(self.soft_labels.size) + 1


@dataclass(frozen=True)
class Message:
    direction: str  # "up" or "down"
    sender: str
    receiver: str
    kind: str  # "report" | "structure" | "global_model"
    payload_size: int


@dataclass
class FederationTranscript:
    messages: list[Message] = field(default_factory=list)

    def record(self, *args) -> None:
        self.messages.append(Message(*args))

    def payload(self, direction: str) -> int:
        return sum(m.payload_size for m in self.messages if m.direction == direction)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(m)) + "\n" for m in self.messages)


@dataclass
class FederationResult:
    global_model: Model
    student_id: int
    reports: list[ClientReport]
    clients: list[ClientSpec]
    transcript: FederationTranscript
    metrics: dict


# --- client side ---------------------------------------------------------------


def client_seed(master_seed: int, client_id: int) -> int:
    return int(np.random.SeedSequence([master_seed, client_id]).generate_state(1)[0])


def client_build(
    client_id: int,
    dataset: Dataset,
    class_count: int,
    complexity_cfg: ComplexityConfig,
    pso_cfg: pso.PsoConfig,
    seed: int,
) -> ClientSpec:
    """Estimate the gate budget from local data, search a structure, keep its trained model."""
    if len(dataset) == 0:
        raise ValueError(f"client {client_id} has no data")
    report = complexity.assess(dataset.labels, dataset.dimension, complexity_cfg)
    num_qubits = num_qubits_for(dataset.dimension)
    cfg = replace(pso_cfg, rng_seed=seed)
    result = pso.search(dataset, report.gate_count, num_qubits, class_count, cfg)
    layout = build_layout(num_qubits, class_count, result.gbest_structure)
    log.info(
        "client %d: budget %d, structure %s, train acc %.4f",
        client_id, report.gate_count, list(result.gbest_structure), result.gbest_score,
    )
    return ClientSpec(client_id, dataset, report, result, Model(layout, result.gbest_theta))


def client_infer_public(spec: ClientSpec, public: Dataset) -> ClientReport:
    layout = spec.model.layout
    if num_qubits_for(public.dimension) != layout.num_qubits:
        raise ValueError(
            f"public data of dimension {public.dimension} does not fit a "
            f"{layout.num_qubits}-qubit model"
        )
    probs = forward_batch(layout, spec.model.theta, encode_batch(public.features))
    acc = float(np.mean(predict_batch(probs) == public.labels))
    return ClientReport(spec.client_id, acc, probs)


# --- server side ---------------------------------------------------------------


def select_student(reports: Sequence[ClientReport]) -> int:
    if not reports:
        raise ValueError("no client reports")
    best = min(reports, key=lambda r: (-r.accuracy, r.client_id))
    return best.client_id


def fusion_weights(reports: Sequence[ClientReport], student_id: int) -> dict[int, float]:
    teachers = [r for r in reports if r.client_id != student_id]
    if not teachers:
        raise ValueError("fusion needs at least one teacher besides the student")
    total = sum(r.accuracy for r in teachers)
    if total <= 0:
        raise ValueError("all teacher accuracies are zero; fusion weights are undefined")
    return {r.client_id: r.accuracy / total for r in teachers}


def fuse_soft_labels(reports: Sequence[ClientReport], student_id: int) -> np.ndarray:
    """Accuracy-weighted average of the teachers' soft labels (student excluded)."""
    weights = fusion_weights(reports, student_id)
    fused = None
    for r in reports:
        if r.client_id in weights:
            term = weights[r.client_id] * r.soft_labels
            fused = term if fused is None else fused + term
    return fused


def kd_loss(mp_row, student_row, hard_label: int, lam: float) -> float:
    """lam * KL(mp || student) + (1 - lam) * cross-entropy on the hard label."""
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    losses, _ = kd_loss_grad(
        np.asarray(student_row, dtype=float)[None, :],
        (np.asarray(mp_row, dtype=float)[None, :], np.array([hard_label])),
        lam,
    )
    return float(losses[0])


def kd_loss_grad(probs: np.ndarray, targets, lam: float):
    mp, labels = targets
    sp = np.maximum(probs, PROB_FLOOR)
    live = mp > 0
    safe_mp = np.where(live, mp, 1.0)
    kl = np.where(live, mp * (np.log(safe_mp) - np.log(sp)), 0.0).sum(axis=1)
    rows = np.arange(probs.shape[0])
    ce = -np.log(sp[rows, labels])
    grad = np.where(probs > PROB_FLOOR, -lam * mp / sp, 0.0)
    picked = probs[rows, labels]
    grad[rows, labels] += np.where(picked > PROB_FLOOR, -(1 - lam) / sp[rows, labels], 0.0)
    return lam * kl + (1 - lam) * ce, grad


class _DistillTargets:
    """Row-indexable pair of fusion matrix and labels, as ``descend`` expects."""

    def __init__(self, mp: np.ndarray, labels: np.ndarray):
        self.mp, self.labels = mp, labels

    def __getitem__(self, idx):
        return self.mp[idx], self.labels[idx]


def distill(
    student: Model,
    public: Dataset,
    fused: np.ndarray,
    lam: float,
    cfg: TrainConfig,
) -> Model:
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if fused.shape != (len(public), student.layout.class_count):
        raise ValueError(
            f"fusion matrix shape {fused.shape} does not match "
            f"{len(public)} public samples x {student.layout.class_count} classes"
        )
    rng = np.random.default_rng(cfg.rng_seed)
    amps = encode_batch(public.features)
    theta, _ = descend(
        student.layout,
        student.theta,
        amps,
        _DistillTargets(fused, public.labels),
        cfg,
        rng,
        loss_grad=lambda probs, t: kd_loss_grad(probs, t, lam),
    )
    return Model(student.layout, theta)


def model_accuracy(model: Model, dataset: Dataset) -> float:
    return accuracy_on(model.layout, model.theta, encode_batch(dataset.features), dataset.labels)


# --- protocol -------------------------------------------------------------------


@dataclass(frozen=True)
class FederationConfig:
    complexity: ComplexityConfig = field(default_factory=ComplexityConfig)
    pso: pso.PsoConfig = field(default_factory=pso.PsoConfig)
    distill: TrainConfig = field(default_factory=TrainConfig)
    lam: float = 0.7
    seed: int = 0


def run_federation(
    client_data: Sequence[Dataset],
    public: Dataset,
    class_count: int,
    cfg: FederationConfig,
    test: Dataset | None = None,
    clients: Sequence[ClientSpec] | None = None,
) -> FederationResult:
    """Run build, report, select, fuse, distill and broadcast.

    Pre-built ``clients`` may be passed to skip the local search (for example
    to distill the same clients under several lambda values).
    """
    dims = {d.dimension for d in client_data} | {public.dimension}
    if test is not None:
        dims.add(test.dimension)
    if len(dims) != 1:
        raise ValueError(f"all datasets must share one feature dimension, got {sorted(dims)}")
    if len(public) > min(len(d) for d in client_data):
        warnings.warn("public set is larger than the smallest client dataset", stacklevel=2)

    transcript = FederationTranscript()
    if clients is None:
        clients = [
            client_build(i, d, class_count, cfg.complexity, cfg.pso, client_seed(cfg.seed, i))
            for i, d in enumerate(client_data, start=1)
        ]
    reports = [client_infer_public(spec, public) for spec in clients]
    for r in reports:
        transcript.record("up", client_name(r.client_id), SERVER, "report", r.payload_size)

    student_id = select_student(reports)
    student = next(c for c in clients if c.client_id == student_id).model
    transcript.record("up", client_name(student_id), SERVER, "structure", student.payload_size)

    fused = fuse_soft_labels(reports, student_id)
    global_model = distill(student, public, fused, cfg.lam, cfg.distill)
    for c in clients:
        transcript.record("down", SERVER, client_name(c.client_id), "global_model", global_model.payload_size)

    metrics = {
        "student_id": student_id,
        "lambda": cfg.lam,
        "client_public_accuracy": {r.client_id: r.accuracy for r in reports},
        "client_gate_budget": {c.client_id: c.complexity.gate_count for c in clients},
        "client_structure": {c.client_id: list(c.model.layout.u_structure) for c in clients},
        "upload_payload": transcript.payload("up"),
        "broadcast_payload": transcript.payload("down"),
        "message_count": len(transcript.messages),
    }
    if test is not None:
        client_test = {c.client_id: model_accuracy(c.model, test) for c in clients}
        metrics["client_test_accuracy"] = client_test
        metrics["mean_client_test_accuracy"] = float(np.mean(list(client_test.values())))
        metrics["global_test_accuracy"] = model_accuracy(global_model, test)
    return FederationResult(global_model, student_id, reports, list(clients), transcript, metrics)
