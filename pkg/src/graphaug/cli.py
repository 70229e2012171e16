"""Batch-job command line: train, embed, probe, inspect, stats.

Configuration is an INI-style file (sections of key=value) merged with
command-line overrides; unknown keys are rejected and every run writes its
resolved config next to its artifacts. Exit codes: 0 ok, 1 runtime failure,
2 configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .encoders import encode
from .errors import ConfigError, GraphAugError
from .evaluation import embed_dataset, linear_probe_graph, linear_probe_node
from .heads import apply_augmentation
from .policy import AugmentationKind, active_kinds, decide
from .rng import RngStream
from .graphs import batch_graphs
from .tensor import Tensor
from .trainer import TrainConfig, load_checkpoint, save_checkpoint, \
    train
from .tudataset import dataset_stats, parse_tudataset

OUT_ROOT_ENV = "GRAPHAUG_OUT"

# section -> {key: (type, default)}; TrainConfig owns the trainer defaults
_TRAIN_DEFAULTS = TrainConfig()
SCHEMA = {
    "data": {
        "dataset": (str, None),
        "task": (str, _TRAIN_DEFAULTS.task),
    },
    "train": {
        "epochs": (int, _TRAIN_DEFAULTS.epochs),
        "batch_size": (int, _TRAIN_DEFAULTS.batch_size),
        "learning_rate": (float, _TRAIN_DEFAULTS.learning_rate),
        "seed": (int, _TRAIN_DEFAULTS.seed),
        "policy": (str, _TRAIN_DEFAULTS.policy_kind),
        "head_temperature": (float, _TRAIN_DEFAULTS.head_temperature),
        "policy_temperature": (float, _TRAIN_DEFAULTS.policy_temperature),
        "keep_ratio": (float, _TRAIN_DEFAULTS.keep_ratio),
        "hops": (int, _TRAIN_DEFAULTS.hops),
        "early_stop_patience": (int, _TRAIN_DEFAULTS.early_stop_patience),
        "patience_unit": (str, _TRAIN_DEFAULTS.patience_unit),
        "alternation_prob": (float, _TRAIN_DEFAULTS.alternation_prob),
        "node_batch_subgraphs": (int, _TRAIN_DEFAULTS.node_batch_subgraphs),
        "clip_norm": (float, _TRAIN_DEFAULTS.clip_norm),
    },
    "encoder": {
        "hidden_dim": (int, _TRAIN_DEFAULTS.hidden_dim),
        "num_layers": (int, _TRAIN_DEFAULTS.num_layers),
        "dropout": (float, _TRAIN_DEFAULTS.dropout),
    },
    "objective": {
        "estimator": (str, _TRAIN_DEFAULTS.estimator),
        "discriminator": (str, _TRAIN_DEFAULTS.discriminator),
        "nt_xent_temperature": (float, _TRAIN_DEFAULTS.nt_xent_temperature),
    },
    "output": {
        "out_dir": (str, None),
    },
}

_FLAG_TO_KEY = {
    "dataset": ("data", "dataset"), "task": ("data", "task"),
    "epochs": ("train", "epochs"), "batch_size": ("train", "batch_size"),
    "learning_rate": ("train", "learning_rate"), "seed": ("train", "seed"),
    "policy": ("train", "policy"),
    "head_temperature": ("train", "head_temperature"),
    "policy_temperature": ("train", "policy_temperature"),
    "keep_ratio": ("train", "keep_ratio"), "hops": ("train", "hops"),
    "early_stop_patience": ("train", "early_stop_patience"),
    "patience_unit": ("train", "patience_unit"),
    "alternation_prob": ("train", "alternation_prob"),
    "node_batch_subgraphs": ("train", "node_batch_subgraphs"),
    "clip_norm": ("train", "clip_norm"),
    "hidden_dim": ("encoder", "hidden_dim"),
    "num_layers": ("encoder", "num_layers"),
    "dropout": ("encoder", "dropout"),
    "estimator": ("objective", "estimator"),
    "discriminator": ("objective", "discriminator"),
    "nt_xent_temperature": ("objective", "nt_xent_temperature"),
    "out": ("output", "out_dir"),
}


def _parse_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser[section].items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            values[(section, key)] = raw
    return values


def resolve_config(args) -> dict:
    """File values, overridden by flags, typed and defaulted per schema."""
    values = {}
    if getattr(args, "config", None):
        values.update(_parse_config_file(args.config))
    for flag, dest in _FLAG_TO_KEY.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[dest] = v
    resolved = {}
    for section, keys in SCHEMA.items():
        for key, (typ, default) in keys.items():
            raw = values.get((section, key), default)
            if raw is None:
                resolved[(section, key)] = None
                continue
            try:
                resolved[(section, key)] = typ(raw)
            except (TypeError, ValueError):
                raise ConfigError(
                    f"{section}.{key}: cannot parse {raw!r} as {typ.__name__}")
    return resolved


def _train_config(resolved) -> TrainConfig:
    try:
        return TrainConfig(
            epochs=resolved[("train", "epochs")],
            batch_size=resolved[("train", "batch_size")],
            learning_rate=resolved[("train", "learning_rate")],
            hidden_dim=resolved[("encoder", "hidden_dim")],
            num_layers=resolved[("encoder", "num_layers")],
            policy_kind=resolved[("train", "policy")],
            head_temperature=resolved[("train", "head_temperature")],
            policy_temperature=resolved[("train", "policy_temperature")],
            keep_ratio=resolved[("train", "keep_ratio")],
            hops=resolved[("train", "hops")],
            dropout=resolved[("encoder", "dropout")],
            seed=resolved[("train", "seed")],
            early_stop_patience=resolved[("train", "early_stop_patience")],
            patience_unit=resolved[("train", "patience_unit")],
            alternation_prob=resolved[("train", "alternation_prob")],
            estimator=resolved[("objective", "estimator")],
            discriminator=resolved[("objective", "discriminator")],
            nt_xent_temperature=resolved[("objective", "nt_xent_temperature")],
            task=resolved[("data", "task")],
            node_batch_subgraphs=resolved[("train", "node_batch_subgraphs")],
            clip_norm=resolved[("train", "clip_norm")],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _format_config(resolved) -> str:
    lines = []
    for section in SCHEMA:
        lines.append(f"[{section}]")
        for key in SCHEMA[section]:
            v = resolved[(section, key)]
            if v is not None:
                lines.append(f"{key} = {v}")
        lines.append("")
    return "\n".join(lines)


def _out_dir(resolved, default_name: str) -> Path:
    out = resolved[("output", "out_dir")]
    if out is None:
        root = os.environ.get(OUT_ROOT_ENV, "runs")
        out = Path(root) / default_name
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(resolved):
    path = resolved[("data", "dataset")]
    if path is None:
        raise ConfigError("data.dataset: no dataset directory given")
    if not Path(path).is_dir():
        raise ConfigError(f"data.dataset: directory not found: {path}")
    return parse_tudataset(path)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


# -- commands -----------------------------------------------------------------------


def cmd_train(args) -> int:
    resolved = resolve_config(args)
    config = _train_config(resolved)
    if args.print_config:
        print(_format_config(resolved))
        return 0
    dataset = _load_dataset(resolved)
    out = _out_dir(resolved, f"{dataset.name.lower()}-train")
    (out / "config_resolved.cfg").write_text(_format_config(resolved))
    print(f"training on {dataset.name}: {len(dataset.graphs)} graphs, "
          f"d_x={dataset.feature_dim}, task={config.task}")
    state, metrics, freqs = train(dataset, config)
    save_checkpoint(state, config, out / "checkpoint.bin")
    _write_csv(out / "metrics.csv",
               ["epoch", "step", "loss", "aug_i", "aug_j", "p_i", "p_j", "coin"],
               [[m["epoch"], m["step"], repr(m["loss"]), m["aug_i"], m["aug_j"],
                 repr(m["p_i"]), repr(m["p_j"]), m["coin"]] for m in metrics])
    _write_csv(out / "aug_frequencies.csv",
               ["epoch"] + [k.value for k in AugmentationKind],
               [[r["epoch"]] + [repr(r[k.value]) for k in AugmentationKind]
                for r in freqs])
    by_epoch = {}
    for m in metrics:
        by_epoch.setdefault(m["epoch"], []).append(m["loss"])
    for epoch in sorted(by_epoch):
        print(f"epoch {epoch}: mean loss {np.mean(by_epoch[epoch]):.4f}")
    print(f"artifacts written to {out}")
    return 0


def cmd_probe(args) -> int:
    resolved = resolve_config(args)
    state, config = load_checkpoint(args.checkpoint)
    dataset = _load_dataset(resolved)
    if dataset.feature_dim != state.input_dim:
        raise GraphAugError(
            f"checkpoint expects d_x={state.input_dim}, dataset has "
            f"d_x={dataset.feature_dim}")
    out = _out_dir(resolved, f"{dataset.name.lower()}-probe")
    table = embed_dataset(dataset, state, config)
    if config.task == "graph":
        report = linear_probe_graph(table, folds=args.folds, runs=args.runs,
                                    seed=args.probe_seed)
    else:
        report = linear_probe_node(table, runs=args.runs_node,
                                   train_frac=args.train_frac,
                                   seed=args.probe_seed)
    (out / "probe_report.json").write_text(report.to_json())
    _write_csv(out / "probe_report.csv", [], report.to_csv_rows())
    print(f"{report.protocol}: accuracy {report.mean:.4f} +/- {report.std:.4f}")
    print(f"reports written to {out}")
    return 0


def cmd_embed(args) -> int:
    resolved = resolve_config(args)
    state, config = load_checkpoint(args.checkpoint)
    dataset = _load_dataset(resolved)
    if dataset.feature_dim != state.input_dim:
        raise GraphAugError(
            f"checkpoint expects d_x={state.input_dim}, dataset has "
            f"d_x={dataset.feature_dim}")
    out = _out_dir(resolved, f"{dataset.name.lower()}-embed")
    table = embed_dataset(dataset, state, config)
    rows = [[i, table.labels[i]] + [repr(v) for v in table.vectors[i]]
            for i in range(len(table.vectors))]
    _write_csv(out / "embeddings.csv",
               ["id", "label"] + [f"dim{j}" for j in range(table.vectors.shape[1])],
               rows)
    print(f"wrote {len(rows)} embeddings to {out / 'embeddings.csv'}")
    return 0


def cmd_inspect(args) -> int:
    resolved = resolve_config(args)
    valid = [k.value for k in AugmentationKind]
    if args.head not in valid:
        print(f"unknown head {args.head!r}; valid heads: {', '.join(valid)}",
              file=sys.stderr)
        return 2
    state, config = load_checkpoint(args.checkpoint)
    dataset = _load_dataset(resolved)
    kinds = active_kinds(config.task)
    kind = AugmentationKind(args.head)
    if kind not in kinds and kind != AugmentationKind.IDENTITY:
        print(f"head {args.head!r} is not active for task {config.task!r}",
              file=sys.stderr)
        return 2
    out = _out_dir(resolved, f"{dataset.name.lower()}-inspect")
    n = min(args.num_graphs, len(dataset.graphs))
    sample = dataset.graphs[:n]
    batch = batch_graphs(sample)
    enc = encode(batch, state.omega, config.aug_encoder(state.input_dim))
    decision = decide(enc.graph_vector, config.policy_kind,
                      config.policy_temperature,
                      RngStream(args.seed or 0, "inspect-policy"),
                      state.policy, kinds)
    dist = {k.value: float(p) for k, p in zip(decision.kinds,
                                              decision.dist.data)}
    print("policy distribution:", json.dumps(dist))
    stream = RngStream(args.seed or 0, "inspect")
    for k, g in enumerate(sample):
        n0, n1 = batch.node_range(k)
        h_vk = enc.node_matrix.slice_axis(0, n0, n1)
        h_gk = enc.graph_vector.slice_axis(0, k, k + 1).reshape(
            enc.graph_vector.shape[1])
        head_out = apply_augmentation(kind, g, h_vk, h_gk, state.heads,
                                      config.keep_ratio, config.hops,
                                      config.head_temperature,
                                      stream.split(f"g{k}"))
        aug = head_out.graph
        w = (aug.edge_weights.data if isinstance(aug.edge_weights, Tensor)
             else np.asarray(aug.edge_weights))
        lines = [f"# graph {k}: {aug.num_nodes} nodes, {aug.num_edges} edges",
                 "# src dst weight"]
        lines += [f"{int(a)} {int(b)} {w[e]:.6f}"
                  for e, (a, b) in enumerate(aug.edges)]
        (out / f"graph{k}.edges").write_text("\n".join(lines) + "\n")
    (out / "policy_distribution.json").write_text(json.dumps(dist, indent=2))
    print(f"wrote {n} augmented graphs to {out}")
    return 0


def cmd_stats(args) -> int:
    resolved = resolve_config(args)
    dataset = _load_dataset(resolved)
    stats = dataset_stats(dataset)
    print(json.dumps(stats, indent=2))
    if args.out_json:
        Path(args.out_json).write_text(json.dumps(stats, indent=2))
    return 0


# -- argument plumbing ---------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--dataset", help="TUDataset-convention directory")
    p.add_argument("--task", choices=["graph", "node"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--policy", choices=["gru", "deepset", "random"])
    p.add_argument("--estimator", choices=["jsd", "nce", "nt_xent", "dv"])
    p.add_argument("--discriminator",
                   choices=["dot", "cosine", "bilinear", "mlp"])
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--num-layers", dest="num_layers", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--keep-ratio", dest="keep_ratio", type=float)
    p.add_argument("--hops", type=int)
    p.add_argument("--head-temperature", dest="head_temperature", type=float)
    p.add_argument("--policy-temperature", dest="policy_temperature", type=float)
    p.add_argument("--alternation-prob", dest="alternation_prob", type=float)
    p.add_argument("--early-stop-patience", dest="early_stop_patience", type=int)
    p.add_argument("--patience-unit", dest="patience_unit",
                   choices=["epoch", "step"])
    p.add_argument("--node-batch-subgraphs", dest="node_batch_subgraphs",
                   type=int)
    p.add_argument("--clip-norm", dest="clip_norm", type=float)
    p.add_argument("--nt-xent-temperature", dest="nt_xent_temperature",
                   type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphaug",
        description="Learned graph augmentations for contrastive learning")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    _add_config_flags(p_train)
    p_train.add_argument("--print-config", action="store_true",
                         help="print the resolved config and exit")
    p_train.set_defaults(func=cmd_train)

    p_probe = sub.add_parser("probe", help="linear-probe a checkpoint")
    _add_config_flags(p_probe)
    p_probe.add_argument("--checkpoint", required=True)
    p_probe.add_argument("--folds", type=int, default=10)
    p_probe.add_argument("--runs", type=int, default=5)
    p_probe.add_argument("--runs-node", dest="runs_node", type=int, default=20)
    p_probe.add_argument("--train-frac", dest="train_frac", type=float,
                         default=0.1)
    p_probe.add_argument("--probe-seed", dest="probe_seed", type=int, default=0)
    p_probe.set_defaults(func=cmd_probe)

    p_embed = sub.add_parser("embed", help="write embeddings for a dataset")
    _add_config_flags(p_embed)
    p_embed.add_argument("--checkpoint", required=True)
    p_embed.set_defaults(func=cmd_embed)

    p_inspect = sub.add_parser("inspect",
                               help="dump augmented graphs from a head")
    _add_config_flags(p_inspect)
    p_inspect.add_argument("--checkpoint", required=True)
    p_inspect.add_argument("--head", required=True)
    p_inspect.add_argument("--num-graphs", dest="num_graphs", type=int,
                           default=4)
    p_inspect.set_defaults(func=cmd_inspect)

    p_stats = sub.add_parser("stats", help="print dataset statistics")
    _add_config_flags(p_stats)
    p_stats.add_argument("--out-json", dest="out_json")
    p_stats.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GraphAugError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
