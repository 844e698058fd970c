"""Scenario configuration files.

A scenario is one TOML document made of flat ``key = value`` lines whose keys
carry dotted section prefixes, for example::

    seed = 0
    class_count = 6
    lambda = 0.7

    data.source = "blobs"          # or "idx"
    data.dimension = 16
    data.separation = 8.0
    data.offset = 1.0
    data.train_per_class = 100
    data.holdout_per_class = 200

    clients.1 = [[0, 100], [1, 100]]   # (class, count) pairs
    clients.2 = [[2, 100], [3, 100]]

    public.per_class = 25
    test.per_class = 100

    complexity.m_ref = 200
    pso.swarm_size = 6
    pso.inner.iterations = 60
    train.learning_rate = 0.05
    distill.iterations = 300
    full_baseline = false              # also train on the pooled client data

Sections ``complexity``, ``pso``, ``pso.inner``, ``train`` and ``distill``
accept the field names of :class:`ComplexityConfig`, :class:`PsoConfig` and
:class:`TrainConfig`; unknown keys are rejected.  Every random draw derives
from ``seed`` (and ``data.seed`` when given), so a file fixes a run.

With ``data.source = "idx"`` the keys ``data.train_images``,
``data.train_labels``, ``data.holdout_images`` and ``data.holdout_labels``
name IDX archives (optionally gzipped, relative to the config file) and
``data.size`` sets the downsampled side length (default 16).  Clients draw
from the training archive; the public and test sets are disjoint draws from
the holdout archive.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli

from .complexity import ComplexityConfig
from .data import (
    BLOB_OFFSET,
    Dataset,
    PartitionPlan,
    load_idx_dataset,
    partition,
    per_class_plan,
    synthetic_blobs,
)
from .federation import FederationConfig
from .pso import PsoConfig
from .train import TrainConfig


class ConfigError(ValueError):
    """The scenario file is missing, unparseable or inconsistent."""


_DATA_KEYS = {
    "source", "seed", "dimension", "separation", "offset",
    "train_per_class", "holdout_per_class",
    "train_images", "train_labels", "holdout_images", "holdout_labels", "size",
}
_TOP_KEYS = {"seed", "class_count", "lambda", "name", "full_baseline"}


@dataclass(frozen=True)
class Scenario:
    class_count: int
    clients: dict[int, tuple[tuple[int, int], ...]]
    data: dict
    public_per_class: int = 0
    test_per_class: int = 0
    seed: int = 0
    lam: float = 0.7
    complexity: ComplexityConfig = field(default_factory=ComplexityConfig)
    pso: PsoConfig = field(default_factory=PsoConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    distill: TrainConfig = field(default_factory=TrainConfig)
    name: str = ""
    full_baseline: bool = False
    base_dir: Path = Path(".")

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=int(seed))

    @property
    def data_seed(self) -> int:
        return int(self.data.get("seed", self.seed))

    def federation_config(self) -> FederationConfig:
        return FederationConfig(
            complexity=self.complexity,
            pso=self.pso,
            distill=self.distill.with_seed(self.seed),
            lam=self.lam,
            seed=self.seed,
        )

    def client_ids(self) -> list[int]:
        return sorted(self.clients)

    def build(self) -> "ScenarioData":
        """Materialize client, public and test datasets."""
        train_pool, holdout_pool = self._pools()
        ids = self.client_ids()
        plan = PartitionPlan.from_lists([self.clients[i] for i in ids], self.data_seed)
        try:
            client_sets = partition(train_pool, plan)
            classes = range(self.class_count)
            split = PartitionPlan.from_lists(
                [per_class_plan(classes, self.public_per_class),
                 per_class_plan(classes, self.test_per_class)],
                self.data_seed + 1,
            )
            public, test = partition(holdout_pool, split)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return ScenarioData(dict(zip(ids, client_sets)), public, test)

    def _pools(self) -> tuple[Dataset, Dataset]:
        source = self.data.get("source", "blobs")
        if source == "blobs":
            try:
                dim = int(self.data["dimension"])
                sep = float(self.data["separation"])
            except KeyError as exc:
                raise ConfigError(f"blob data needs data.{exc.args[0]}") from exc
            offset = float(self.data.get("offset", BLOB_OFFSET))
            train_n = int(self.data.get("train_per_class", _max_request(self.clients.values())))
            hold_n = int(self.data.get("holdout_per_class", self.public_per_class + self.test_per_class))
            s = self.data_seed
            train = synthetic_blobs(self.class_count, train_n, dim, sep, [s, 1], offset)
            hold = (
                synthetic_blobs(self.class_count, hold_n, dim, sep, [s, 2], offset)
                if hold_n > 0 else Dataset(np.zeros((0, dim)), [])
            )
            return train, hold
        if source == "idx":
            size = int(self.data.get("size", 16))
            paths = {}
            for key in ("train_images", "train_labels", "holdout_images", "holdout_labels"):
                if key not in self.data:
                    raise ConfigError(f"idx data needs data.{key}")
                path = self.base_dir / str(self.data[key])
                if not path.is_file():
                    raise ConfigError(f"data file not found: {path}")
                paths[key] = path
            train = load_idx_dataset(paths["train_images"], paths["train_labels"], size)
            hold = load_idx_dataset(paths["holdout_images"], paths["holdout_labels"], size)
            return train, hold
        raise ConfigError(f"unknown data.source {source!r} (expected 'blobs' or 'idx')")


@dataclass
class ScenarioData:
    clients: dict[int, Dataset]
    public: Dataset
    test: Dataset


def _max_request(specs) -> int:
    total: dict[int, int] = {}
    for spec in specs:
        for cls, count in spec:
            total[cls] = total.get(cls, 0) + count
    return max(total.values(), default=1)


def _section(raw: dict, name: str, cls, nested: dict | None = None):
    values = dict(raw.get(name, {}))
    if not isinstance(values, dict):
        raise ConfigError(f"{name} must be a section of key = value entries")
    allowed = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if nested and key in nested:
            continue
        if key not in allowed:
            raise ConfigError(f"unknown key {name}.{key}")
        kwargs[key] = value
    if nested:
        for key, factory in nested.items():
            if key in values:
                kwargs[key] = factory(values[key])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name} settings: {exc}") from exc


def parse_scenario(text: str, base_dir: Path | str = ".") -> Scenario:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    known = _TOP_KEYS | {"data", "clients", "public", "test", "complexity", "pso", "train", "distill"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    if "class_count" not in raw:
        raise ConfigError("class_count is required")

    data = dict(raw.get("data", {}))
    bad = set(data) - _DATA_KEYS
    if bad:
        raise ConfigError(f"unknown data keys: {sorted(bad)}")

    clients = {}
    for key, spec in raw.get("clients", {}).items():
        try:
            cid = int(key)
            pairs = tuple((int(c), int(n)) for c, n in spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"clients.{key} must be a list of [class, count] pairs") from exc
        if cid < 1:
            raise ConfigError("client ids start at 1")
        clients[cid] = pairs
    if not clients:
        raise ConfigError("at least one client is required")

    class_count = int(raw["class_count"])
    for cid, pairs in clients.items():
        for cls, count in pairs:
            if not 0 <= cls < class_count or count < 0:
                raise ConfigError(f"client {cid}: bad (class, count) pair ({cls}, {count})")

    def inner(values):
        return _section({"pso.inner": values}, "pso.inner", TrainConfig)

    try:
        return Scenario(
            class_count=class_count,
            clients=clients,
            data=data,
            public_per_class=int(raw.get("public", {}).get("per_class", 0)),
            test_per_class=int(raw.get("test", {}).get("per_class", 0)),
            seed=int(raw.get("seed", 0)),
            lam=float(raw.get("lambda", 0.7)),
            complexity=_section(raw, "complexity", ComplexityConfig),
            pso=_section(raw, "pso", PsoConfig, nested={"inner": inner}),
            train=_section(raw, "train", TrainConfig),
            distill=_section(raw, "distill", TrainConfig),
            name=str(raw.get("name", "")),
            full_baseline=bool(raw.get("full_baseline", False)),
            base_dir=Path(base_dir),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_scenario(text, path.parent)
