"""Label-dispersion complexity score and its mapping to a gate budget."""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class ComplexityConfig:
    """Weights, exponents and references of the complexity score.

    The defaults are calibrated (not published values): they are the grid
    point with the widest margin that maps the four MNIST reference splits
    (1000 balanced, 800:200, 3x330, 5000 balanced; D=256) onto budgets
    6, 5, 7, 7 with bounds [3, 15].  See :func:`calibrate`.
    """

    alpha1: float = 0.25
    alpha2: float = 0.05
    alpha3: float = 0.70
    t1: float = 3.0
    t2: float = 2.0
    t3: float = 3.0
    m_ref: int = 5000
    d_ref: int = 256
    gate_min: int = 3
    gate_max: int = 15

    def __post_init__(self):
        alphas = (self.alpha1, self.alpha2, self.alpha3)
        if min(alphas) < 0:
            raise ValueError("alpha weights must be nonnegative")
        if abs(sum(alphas) - 1.0) > 1e-9:
            raise ValueError(f"alpha weights must sum to 1, got {sum(alphas)}")
        if min(self.t1, self.t2, self.t3) <= 1:
            raise ValueError("exponents must be > 1")
        if self.m_ref < 2 or self.d_ref < 2:
            raise ValueError("reference sample count and dimension must be >= 2")
        if not 1 <= self.gate_min <= self.gate_max:
            raise ValueError("need 1 <= gate_min <= gate_max")


@dataclass(frozen=True)
class ComplexityReport:
    num_samples: int
    dimension: int
    sparsity: float
    dispersion: float
    q_score: float
    gate_count: int


def label_sparsity(labels: Sequence) -> float:
    """Fraction of ordered sample pairs (self-pairs included) sharing a label."""
    m = len(labels)
    if m == 0:
        raise ValueError("label list is empty")
    counts = Counter(np.asarray(labels).tolist())
    return sum(c * c for c in counts.values()) / (m * m)


def data_complexity(num_samples: int, dimension: int, s_prime: float, cfg: ComplexityConfig) -> float:
    if num_samples < 2 or dimension < 2:
        raise ValueError("sample count and dimension must both be >= 2")
    if not 0 <= s_prime < 1:
        raise ValueError(f"dispersion must lie in [0, 1), got {s_prime}")
    size_term = (math.log(num_samples) / math.log(cfg.m_ref)) ** cfg.t1
    dim_term = (math.log(dimension) / math.log(cfg.d_ref)) ** cfg.t2
    return cfg.alpha1 * size_term + cfg.alpha2 * dim_term + cfg.alpha3 * s_prime**cfg.t3


def estimate_gates(q: float, cfg: ComplexityConfig) -> int:
    if q < 0:
        raise ValueError("complexity score must be nonnegative")
    span = cfg.gate_max - cfg.gate_min
    gates = cfg.gate_min + math.floor(q * span)
    return min(max(gates, cfg.gate_min), cfg.gate_max)


def assess(labels: Sequence, dimension: int, cfg: ComplexityConfig) -> ComplexityReport:
    """Full pipeline for one client: sparsity, dispersion, score and budget."""
    s = label_sparsity(labels)
    s_prime = 1.0 - s
    q = data_complexity(len(labels), dimension, s_prime, cfg)
    return ComplexityReport(len(labels), dimension, s, s_prime, q, estimate_gates(q, cfg))


def calibrate(
    targets: Iterable[tuple[int, float, int]],
    dimension: int = 256,
    m_ref: int = 5000,
    d_ref: int = 256,
    gate_min: int = 3,
    gate_max: int = 15,
    steps: int = 20,
    exponents: Sequence[float] = (1.5, 2.0, 3.0),
) -> list[tuple[float, ComplexityConfig]]:
    """Grid-search configs reproducing ``(num_samples, dispersion, gates)`` targets.

    Returns ``(margin, config)`` pairs sorted by decreasing margin, where the
    margin is the smallest distance of any scaled score ``Q * span`` from the
    integer boundaries of its floor bucket.
    """
    targets = list(targets)
    span = gate_max - gate_min
    found = []
    for i, j in itertools.product(range(steps + 1), repeat=2):
        if i + j > steps:
            continue
        a1, a2 = i / steps, j / steps
        a3 = (steps - i - j) / steps
        for t1, t2, t3 in itertools.product(exponents, repeat=3):
            cfg = ComplexityConfig(a1, a2, a3, t1, t2, t3, m_ref, d_ref, gate_min, gate_max)
            margin = math.inf
            for m, s_prime, gates in targets:
                scaled = data_complexity(m, dimension, s_prime, cfg) * span
                if estimate_gates(scaled / span, cfg) != gates:
                    break
                margin = min(margin, scaled - math.floor(scaled), math.floor(scaled) + 1 - scaled)
            else:
                found.append((margin, cfg))
    found.sort(key=lambda item: -item[0])
    return found
