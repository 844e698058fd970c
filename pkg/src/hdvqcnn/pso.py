"""Particle-swarm search over convolution-block gate structures.

Positions are real vectors; a structure is read off by rounding each
coordinate (half away from zero) and clamping to the gate index range.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuit import build_layout
from .data import Dataset
from .train import TrainConfig, train_model

GATE_LOW, GATE_HIGH = 1, 13


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 15
    iterations: int = 100
    inertia: float = 0.8
    cognitive: float = 0.5
    social: float = 0.5
    rng_seed: int = 0
    inner: TrainConfig = field(default_factory=TrainConfig)
    velocity_clamp: float = 6.0
    workers: int = 1

    def __post_init__(self):
        if self.swarm_size < 1:
            raise ValueError("swarm_size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if min(self.inertia, self.cognitive, self.social) < 0:
            raise ValueError("inertia and acceleration coefficients must be >= 0")
        if self.velocity_clamp <= 0:
            raise ValueError("velocity_clamp must be > 0")


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    pbest_position: np.ndarray
    pbest_score: float = -np.inf


@dataclass
class SearchResult:
    gbest_structure: tuple[int, ...]
    gbest_theta: np.ndarray
    gbest_score: float
    trace: list[float]
    evaluations: int = 0

    def trace_table(self, delimiter: str = "\t") -> str:
        rows = [f"iteration{delimiter}gbest_score"]
        rows += [f"{i}{delimiter}{s:.17g}" for i, s in enumerate(self.trace, start=1)]
        return "\n".join(rows) + "\n"


def decode_position(position) -> tuple[int, ...]:
    position = np.asarray(position, dtype=float).reshape(-1)
    if position.size == 0:
        raise ValueError("empty position")
    rounded = np.sign(position) * np.floor(np.abs(position) + 0.5)
    return tuple(int(g) for g in np.clip(rounded, GATE_LOW, GATE_HIGH))


def step(
    swarm: list[Particle],
    gbest_position: np.ndarray,
    cfg: PsoConfig,
    rng: np.random.Generator,
) -> list[Particle]:
    """One velocity/position update of every particle, in swarm order."""
    gbest_position = np.asarray(gbest_position, dtype=float)
    out = []
    for p in swarm:
        if not (p.position.shape == p.velocity.shape == p.pbest_position.shape == gbest_position.shape):
            raise ValueError("particle vectors and gbest must share one dimension")
        r1 = rng.random(p.position.shape)
        r2 = rng.random(p.position.shape)
        v = (
            cfg.inertia * p.velocity
            + cfg.cognitive * r1 * (p.pbest_position - p.position)
            + cfg.social * r2 * (gbest_position - p.position)
        )
        v = np.clip(v, -cfg.velocity_clamp, cfg.velocity_clamp)
        out.append(Particle(p.position + v, v, p.pbest_position, p.pbest_score))
    return out


def particle_seed(rng_seed: int, particle: int, iteration: int) -> int:
    """Training seed for one fitness evaluation, independent of evaluation order."""
    return int(np.random.SeedSequence([rng_seed, particle, iteration]).generate_state(1)[0])


def fitness(
    structure,
    dataset: Dataset,
    num_qubits: int,
    class_count: int,
    inner: TrainConfig,
) -> tuple[float, np.ndarray]:
    """Train ``structure`` and score it by training-set accuracy."""
    layout = build_layout(num_qubits, class_count, structure)
    theta, history = train_model(layout, dataset, inner)
    return history.final_accuracy, theta


def _fitness_job(args):
    return fitness(*args)


def search(
    dataset: Dataset,
    gate_budget: int,
    num_qubits: int,
    class_count: int,
    cfg: PsoConfig,
) -> SearchResult:
    if gate_budget < 1:
        raise ValueError("gate_budget must be >= 1")
    rng = np.random.default_rng([cfg.rng_seed, 0x5EED])
    swarm = []
    for _ in range(cfg.swarm_size):
        pos = rng.uniform(GATE_LOW, GATE_HIGH, size=gate_budget)
        swarm.append(Particle(pos, np.zeros(gate_budget), pos.copy()))

    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    best_score = -np.inf
    best_pos = swarm[0].position.copy()
    best_theta = None
    trace = []
    evaluations = 0

    def evaluate_swarm(iteration: int):
        nonlocal best_score, best_pos, best_theta, evaluations
        jobs = [
            (
                decode_position(p.position),
                dataset,
                num_qubits,
                class_count,
                cfg.inner.with_seed(particle_seed(cfg.rng_seed, i, iteration)),
            )
            for i, p in enumerate(swarm)
        ]
        results = list(pool.map(_fitness_job, jobs)) if pool else [_fitness_job(j) for j in jobs]
        evaluations += len(results)
        # reduction in particle order; ties keep the incumbent
        for p, (score, theta) in zip(swarm, results):
            if score > p.pbest_score:
                p.pbest_score = score
                p.pbest_position = p.position.copy()
            if score > best_score:
                best_score = score
                best_pos = p.position.copy()
                best_theta = theta

    try:
        evaluate_swarm(0)
        for t in range(1, cfg.iterations + 1):
            swarm = step(swarm, best_pos, cfg, rng)
            evaluate_swarm(t)
            trace.append(best_score)
    finally:
        if pool:
            pool.shutdown()
    return SearchResult(decode_position(best_pos), best_theta, float(best_score), trace, evaluations)
