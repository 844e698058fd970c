"""Command-line entry point: ``hdvqcnn {estimate,search,train,federate,evaluate}``.

Every command reads one scenario file (see :mod:`hdvqcnn.config`).  Tables go
to stdout as tab-separated text with a header row; files go to ``--out``.
Exit status is 0 on success, 1 when a run fails and 2 for usage, config or
missing-file errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import complexity
from .circuit import Model, build_layout, load_model, save_model
from .config import ConfigError, Scenario, load_scenario
from .data import Dataset, concat
from .encode import num_qubits_for
from .federation import (
    client_build,
    client_seed,
    distill,
    fuse_soft_labels,
    model_accuracy,
    run_federation,
)
from .train import evaluate, train_model

log = logging.getLogger("hdvqcnn")

DELIM = "\t"

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _table(header, rows) -> str:
    lines = [DELIM.join(header)]
    lines += [DELIM.join(str(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _emit(text: str, out: Path | None, name: str) -> None:
    sys.stdout.write(text)
    if out is not None:
        (out / name).write_text(text)


def _client(scenario: Scenario, data, client_id) -> tuple[int, Dataset]:
    if client_id is None:
        raise UsageError("--client is required for this command")
    if client_id not in data.clients:
        raise UsageError(f"unknown client id {client_id}; config defines {scenario.client_ids()}")
    return client_id, data.clients[client_id]


# --- commands -------------------------------------------------------------------


def cmd_estimate(scenario: Scenario, args) -> None:
    data = scenario.build()
    rows = []
    for cid, ds in data.clients.items():
        rep = complexity.assess(ds.labels, ds.dimension, scenario.complexity)
        rows.append((
            cid, rep.num_samples, rep.dimension,
            f"{rep.sparsity:.6f}", f"{rep.dispersion:.6f}", f"{rep.q_score:.6f}", rep.gate_count,
        ))
    _emit(_table(("client", "M", "D", "s", "s_prime", "Q", "gates"), rows), args.out, "estimate.tsv")


def cmd_search(scenario: Scenario, args) -> None:
    data = scenario.build()
    cid, ds = _client(scenario, data, args.client)
    spec = client_build(
        cid, ds, scenario.class_count, scenario.complexity, scenario.pso,
        client_seed(scenario.seed, cid),
    )
    result = spec.search
    rows = [(
        cid, spec.complexity.gate_count,
        ",".join(map(str, result.gbest_structure)), f"{result.gbest_score:.4f}",
    )]
    _emit(_table(("client", "gates", "structure", "train_accuracy"), rows), args.out, f"client{cid}_search.tsv")
    if args.out is not None:
        save_model(spec.model, args.out / f"client{cid}_model.txt")
        (args.out / f"client{cid}_trace.tsv").write_text(result.trace_table(DELIM))


def cmd_train(scenario: Scenario, args) -> None:
    data = scenario.build()
    cid, ds = _client(scenario, data, args.client)
    if not args.gates:
        raise UsageError("--gates is required for train (comma-separated gate indices)")
    try:
        gates = [int(g) for g in args.gates.split(",")]
        layout = build_layout(num_qubits_for(ds.dimension), scenario.class_count, gates)
    except ValueError as exc:
        raise UsageError(f"bad --gates: {exc}") from exc
    cfg = scenario.train.with_seed(client_seed(scenario.seed, cid))
    theta, history = train_model(layout, ds, cfg)
    model = Model(layout, theta)
    rows = [(cid, ",".join(map(str, gates)), len(theta), f"{history.final_accuracy:.4f}")]
    _emit(_table(("client", "structure", "parameters", "train_accuracy"), rows), args.out, f"client{cid}_train.tsv")
    if args.out is not None:
        save_model(model, args.out / f"client{cid}_model.txt")
        (args.out / f"client{cid}_history.tsv").write_text(history.to_table(DELIM))


def cmd_federate(scenario: Scenario, args) -> None:
    data = scenario.build()
    if len(data.test) == 0:
        raise ConfigError("federate needs a held-out set (test.per_class > 0)")
    if len(data.public) == 0:
        raise ConfigError("federate needs a public set (public.per_class > 0)")
    cfg = scenario.federation_config()
    ids = scenario.client_ids()
    result = run_federation(
        [data.clients[i] for i in ids], data.public, scenario.class_count, cfg, test=data.test,
    )
    # run_federation numbers clients 1..m in the order given; ids maps back.
    student = next(c for c in result.clients if c.client_id == result.student_id).model
    one_hot = np.eye(scenario.class_count)[data.public.labels]
    fused = fuse_soft_labels(result.reports, result.student_id)
    kl_only = distill(student, data.public, fused, 1.0, cfg.distill)
    hard = distill(student, data.public, one_hot, 0.0, cfg.distill)

    n_pub = len(data.public)
    rows = []
    for c in result.clients:
        rows.append((
            f"Client Model {ids[c.client_id - 1]}", "Hard Labels", len(c.dataset),
            f"{result.metrics['client_test_accuracy'][c.client_id]:.4f}",
        ))
    rows.append(("Global Model (KL)", "Soft Labels", n_pub, f"{model_accuracy(kl_only, data.test):.4f}"))
    rows.append((
        "Global Model (KL+CE)", f"Soft + Hard Labels (lambda={scenario.lam:g})", n_pub,
        f"{result.metrics['global_test_accuracy']:.4f}",
    ))
    rows.append(("Hard-Label Baseline", "Hard Labels", n_pub, f"{model_accuracy(hard, data.test):.4f}"))
    if scenario.full_baseline:
        pooled = concat([data.clients[i] for i in ids])
        theta, _ = train_model(student.layout, pooled, scenario.train.with_seed(scenario.seed))
        rows.append((
            "Full-Data Model", "Hard Labels", len(pooled),
            f"{model_accuracy(Model(student.layout, theta), data.test):.4f}",
        ))
    _emit(_table(("model", "labels", "train_size", "accuracy"), rows), args.out, "metrics.tsv")

    if args.out is not None:
        save_model(result.global_model, args.out / "global_model.txt")
        for c in result.clients:
            save_model(c.model, args.out / f"client{ids[c.client_id - 1]}_model.txt")
        (args.out / "transcript.jsonl").write_text(result.transcript.to_jsonl())
        metrics = dict(result.metrics, hard_label_test_accuracy=model_accuracy(hard, data.test))
        (args.out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True, default=str) + "\n")


def _dataset_by_spec(scenario: Scenario, spec: str) -> Dataset:
    if not spec:
        raise UsageError("empty dataset spec")
    data = scenario.build()
    if spec == "test":
        ds = data.test
    elif spec == "public":
        ds = data.public
    elif spec.startswith("client:"):
        try:
            cid = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad dataset spec {spec!r}") from exc
        _, ds = _client(scenario, data, cid)
    else:
        raise UsageError(f"bad dataset spec {spec!r} (use test, public or client:ID)")
    if len(ds) == 0:
        raise UsageError(f"dataset {spec!r} is empty")
    return ds


def cmd_evaluate(scenario: Scenario, args) -> None:
    if args.model is None:
        raise UsageError("--model is required for evaluate")
    if not args.model.is_file():
        raise ConfigError(f"model file not found: {args.model}")
    model = load_model(args.model)
    ds = _dataset_by_spec(scenario, args.data)
    if num_qubits_for(ds.dimension) != model.layout.num_qubits:
        raise ValueError(
            f"dataset dimension {ds.dimension} does not fit a {model.layout.num_qubits}-qubit model"
        )
    acc = evaluate(model.layout, model.theta, ds)
    _emit(_table(("dataset", "samples", "accuracy"), [(args.data, len(ds), f"{acc:.4f}")]), args.out, "evaluate.tsv")


COMMANDS = {
    "estimate": cmd_estimate,
    "search": cmd_search,
    "train": cmd_train,
    "federate": cmd_federate,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdvqcnn", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, required=True, help="scenario file")
    parser.add_argument("--client", type=int, help="client id (search, train, evaluate client:ID)")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out", type=Path, help="directory for output files")
    parser.add_argument("--gates", help="comma-separated gate indices for train")
    parser.add_argument("--model", type=Path, help="model file for evaluate")
    parser.add_argument("--data", default="test", help="dataset for evaluate: test, public or client:ID")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        scenario = load_scenario(args.config)
        if args.seed is not None:
            scenario = scenario.with_seed(args.seed)
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](scenario, args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # any failure inside a run
        if args.verbose:
            log.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
