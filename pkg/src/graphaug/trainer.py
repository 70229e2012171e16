"""End-to-end training loop.

Per step: encode the batch with the augmentation encoder, let the policy pick
the two view augmentations, apply the sampled heads per graph, encode both
views with the shared base encoder, scale the graph vectors by the policy
probabilities, and minimize the two-view contrastive loss. Policy and head
parameters update every step; a coin flip decides whether the base or the
augmentation encoder joins them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .encoders import EncoderConfig, Encodings, encode, param_seed, \
    init_encoder_params
from .errors import CheckpointError, TrainingDivergedError
from .graphs import GraphBatch, batch_graphs, make_node_task_batch
from .heads import apply_augmentation, init_head_params
from .objective import ObjectiveConfig, batch_loss, init_discriminator_params
from .optim import AdamState, adam_step, clip_by_global_norm
from .policy import AugmentationKind, PolicyDecision, active_kinds, decide, \
    init_policy_params, scale_by_policy
from .rng import RngStream
from .tensor import ParameterSet
from . import container

GROUPS = ("omega", "policy", "heads", "theta")


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    hidden_dim: int = 32
    num_layers: int = 2
    policy_kind: str = "gru"             # gru | deepset | random
    head_temperature: float = 1.0
    policy_temperature: float = 1.0
    keep_ratio: float = 0.75
    hops: int = 2
    dropout: float = 0.0
    seed: int = 0
    early_stop_patience: int = 50
    patience_unit: str = "epoch"         # epoch | step
    alternation_prob: float = 0.5
    estimator: str = "jsd"
    discriminator: str = "dot"
    nt_xent_temperature: float = 0.5
    task: str = "graph"                  # graph | node
    node_batch_subgraphs: int = 8
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.num_layers < 1:
            raise ValueError("epochs/batch_size/num_layers out of range")
        if not (0.0 <= self.alternation_prob <= 1.0):
            raise ValueError("alternation_prob must be in [0, 1]")
        if self.patience_unit not in ("epoch", "step"):
            raise ValueError("patience_unit must be 'epoch' or 'step'")
        if self.task not in ("graph", "node"):
            raise ValueError("task must be 'graph' or 'node'")
        if not (0.0 < self.keep_ratio <= 1.0):
            raise ValueError("keep_ratio must be in (0, 1]")
        if self.head_temperature <= 0 or self.policy_temperature <= 0:
            raise ValueError("temperatures must be positive")

    def objective(self) -> ObjectiveConfig:
        return ObjectiveConfig(self.estimator, self.discriminator,
                               self.nt_xent_temperature)

    def aug_encoder(self, input_dim: int) -> EncoderConfig:
        return EncoderConfig(input_dim, self.hidden_dim, self.num_layers,
                             "gin", self.dropout, "sum")

    def base_encoder(self, input_dim: int) -> EncoderConfig:
        if self.task == "node":
            return EncoderConfig(input_dim, self.hidden_dim, 2, "gcn",
                                 self.dropout, "mean")
        return EncoderConfig(input_dim, self.hidden_dim, self.num_layers,
                             "gin", self.dropout, "sum")


@dataclass
class TrainState:
    input_dim: int
    omega: ParameterSet
    policy: ParameterSet
    heads: dict
    heads_merged: ParameterSet
    theta: ParameterSet
    adam: dict
    sample_root: RngStream
    shuffle_stream: RngStream
    coin_stream: RngStream
    epoch: int = 0
    step: int = 0
    best_loss: float = math.inf
    stale: int = 0

    def group(self, name: str) -> ParameterSet:
        return {"omega": self.omega, "policy": self.policy,
                "heads": self.heads_merged, "theta": self.theta}[name]


@dataclass
class StepResult:
    loss: float
    decision: PolicyDecision
    coin: bool                   # True: base encoder updated this step


def init_state(config: TrainConfig, input_dim: int) -> TrainState:
    kinds = active_kinds(config.task)
    omega = init_encoder_params(config.aug_encoder(input_dim),
                                param_seed(config.seed, "omega"))
    theta = init_encoder_params(config.base_encoder(input_dim),
                                param_seed(config.seed, "theta"))
    disc = init_discriminator_params(config.discriminator, config.hidden_dim,
                                     param_seed(config.seed, "disc"))
    for name, t in disc.items():
        theta.add(name, t)
    policy = init_policy_params(config.policy_kind, config.hidden_dim,
                                len(kinds), param_seed(config.seed, "policy"))
    heads = {}
    merged = ParameterSet()
    for kind in kinds:
        if kind == AugmentationKind.IDENTITY:
            continue
        ps = init_head_params(kind, config.hidden_dim, input_dim,
                              param_seed(config.seed, f"head-{kind.value}"))
        heads[kind] = ps
        for name, t in ps.items():
            merged.add(f"{kind.value}/{name}", t)
    root = RngStream(config.seed, "train")
    return TrainState(
        input_dim=input_dim,
        omega=omega, policy=policy, heads=heads, heads_merged=merged,
        theta=theta,
        adam={g: AdamState() for g in GROUPS},
        sample_root=root.split("sample"),
        shuffle_stream=root.split("shuffle"),
        coin_stream=root.split("coin"),
    )


def _collect_grads(params: ParameterSet) -> dict:
    return {name: t.grad.copy() for name, t in params.items()
            if t.grad is not None}


def _head_stats(out) -> dict:
    stats = {}
    for key, tensor in out.soft_params.items():
        stats[key] = (float(tensor.data.min()), float(tensor.data.max()))
    return stats


def train_step(batch: GraphBatch, state: TrainState,
               config: TrainConfig) -> StepResult:
    for g in GROUPS:
        state.group(g).zero_grads()
    kinds = active_kinds(config.task)
    step_stream = state.sample_root.split(f"step{state.step}")

    enc_w = encode(batch, state.omega, config.aug_encoder(state.input_dim),
                   stream=step_stream.split("dropout/omega"), training=True)
    decision = decide(enc_w.graph_vector, config.policy_kind,
                      config.policy_temperature, step_stream.split("policy"),
                      state.policy, kinds)

    views_i, views_j = [], []
    outs = []
    for k, g in enumerate(batch.graphs):
        n0, n1 = batch.node_range(k)
        h_vk = enc_w.node_matrix.slice_axis(0, n0, n1)
        h_gk = enc_w.graph_vector.slice_axis(0, k, k + 1).reshape(
            enc_w.graph_vector.shape[1])
        for view, kind, acc in (("i", decision.i, views_i),
                                ("j", decision.j, views_j)):
            applied = kind
            if kind == AugmentationKind.EDGE_PERTURB and g.num_edges == 0:
                applied = AugmentationKind.IDENTITY   # nothing to perturb
            out = apply_augmentation(applied, g, h_vk, h_gk, state.heads,
                                     config.keep_ratio, config.hops,
                                     config.head_temperature,
                                     step_stream.split(f"g{k}/{view}"))
            acc.append(out.graph)
            outs.append(out)

    batch_i = batch_graphs(views_i)
    batch_j = batch_graphs(views_j)
    enc_i = encode(batch_i, state.theta, config.base_encoder(state.input_dim),
                   stream=step_stream.split("dropout/i"), training=True)
    enc_j = encode(batch_j, state.theta, config.base_encoder(state.input_dim),
                   stream=step_stream.split("dropout/j"), training=True)
    scaled_i = scale_by_policy(enc_i.graph_vector, decision.p_i)
    scaled_j = scale_by_policy(enc_j.graph_vector, decision.p_j)
    loss = batch_loss(Encodings(enc_i.node_matrix, scaled_i),
                      Encodings(enc_j.node_matrix, scaled_j),
                      batch_i.node_to_graph, batch_j.node_to_graph,
                      config.objective(), state.theta)

    if not np.isfinite(loss.data).all():
        raise TrainingDivergedError(
            f"non-finite loss at step {state.step}: "
            f"i={decision.i.value} j={decision.j.value} "
            f"p_i={decision.p_i.item():.3e} p_j={decision.p_j.item():.3e} "
            f"head_stats={[_head_stats(o) for o in outs]}")
    loss.backward()

    coin = state.coin_stream.bernoulli(config.alternation_prob)
    update_groups = ["policy", "heads", "theta" if coin else "omega"]
    grads = {g: _collect_grads(state.group(g)) for g in update_groups}
    if config.clip_norm is not None:
        joint = {f"{g}::{n}": arr for g, gs in grads.items()
                 for n, arr in gs.items()}
        clip_by_global_norm(joint, config.clip_norm)
        for key, arr in joint.items():
            gname, pname = key.split("::", 1)
            grads[gname][pname] = arr
    for gname in update_groups:
        adam_step(state.group(gname), grads[gname], state.adam[gname],
                  config.learning_rate)
    state.step += 1
    return StepResult(loss.item(), decision, coin)


def _graph_batches(dataset, config: TrainConfig, state: TrainState):
    order = state.shuffle_stream.permutation(len(dataset.graphs))
    for start in range(0, len(order), config.batch_size):
        idx = order[start:start + config.batch_size]
        if len(idx) == 1 and len(order) > 1:
            continue            # a singleton batch has no negatives
        yield batch_graphs([dataset.graphs[int(i)] for i in idx])


def _node_batches(dataset, config: TrainConfig, state: TrainState):
    g = dataset.graphs[0]
    steps = max(1, math.ceil(g.num_nodes / config.node_batch_subgraphs))
    base = state.step
    for s in range(steps):
        stream = state.sample_root.split(f"nodebatch{base + s}")
        yield make_node_task_batch(g, config.node_batch_subgraphs, config.hops,
                                   stream)


def train(dataset, config: TrainConfig, state: TrainState | None = None):
    """Run the loop; returns (state, metrics rows, frequency rows).

    Metrics rows: epoch, step, loss, aug_i, aug_j, p_i, p_j, coin.
    Frequency rows: per-epoch normalized selection counts over all kinds.
    """
    if not dataset.graphs:
        raise ValueError("dataset is empty")
    if state is None:
        state = init_state(config, dataset.feature_dim)
    metrics = []
    frequencies = []
    all_kinds = [k.value for k in AugmentationKind]
    stop = False
    for epoch in range(state.epoch, config.epochs):
        batches = (_graph_batches(dataset, config, state)
                   if config.task == "graph"
                   else _node_batches(dataset, config, state))
        losses = []
        counts = {k: 0 for k in all_kinds}
        for batch in batches:
            res = train_step(batch, state, config)
            losses.append(res.loss)
            counts[res.decision.i.value] += 1
            counts[res.decision.j.value] += 1
            metrics.append({
                "epoch": epoch, "step": state.step - 1, "loss": res.loss,
                "aug_i": res.decision.i.value, "aug_j": res.decision.j.value,
                "p_i": res.decision.p_i.item(), "p_j": res.decision.p_j.item(),
                "coin": int(res.coin),
            })
            if config.patience_unit == "step":
                if res.loss < state.best_loss:
                    state.best_loss = res.loss
                    state.stale = 0
                else:
                    state.stale += 1
                if state.stale >= config.early_stop_patience:
                    stop = True
                    break
        state.epoch = epoch + 1
        total = max(1, sum(counts.values()))
        row = {"epoch": epoch}
        row.update({k: counts[k] / total for k in all_kinds})
        frequencies.append(row)
        if losses and config.patience_unit == "epoch":
            mean_loss = float(np.mean(losses))
            if mean_loss < state.best_loss:
                state.best_loss = mean_loss
                state.stale = 0
            else:
                state.stale += 1
            if state.stale >= config.early_stop_patience:
                stop = True
        if stop:
            break
    return state, metrics, frequencies


# -- checkpointing ------------------------------------------------------------

def save_checkpoint(state: TrainState, config: TrainConfig, path) -> None:
    tensors = {}
    for gname in GROUPS:
        group = state.group(gname)
        for name, t in group.items():
            tensors[f"params/{gname}/{name}"] = t.data
        adam = state.adam[gname]
        for name, arr in adam.m.items():
            tensors[f"adam/{gname}/m/{name}"] = arr
        for name, arr in adam.v.items():
            tensors[f"adam/{gname}/v/{name}"] = arr
    meta = {
        "kind": "train-state",
        "config": asdict(config),
        "input_dim": state.input_dim,
        "epoch": state.epoch,
        "step": state.step,
        "best_loss": state.best_loss,
        "stale": state.stale,
        "adam_steps": {g: state.adam[g].step for g in GROUPS},
        "streams": {
            "sample_root": state.sample_root.get_state(),
            "shuffle": state.shuffle_stream.get_state(),
            "coin": state.coin_stream.get_state(),
        },
    }
    container.write_container(path, meta, tensors)


def load_checkpoint(path) -> tuple[TrainState, TrainConfig]:
    meta, tensors = container.read_container(path)
    if meta.get("kind") != "train-state":
        raise CheckpointError(f"{path} is not a training checkpoint")
    config = TrainConfig(**meta["config"])
    state = init_state(config, meta["input_dim"])
    for gname in GROUPS:
        group = state.group(gname)
        for name, t in group.items():
            key = f"params/{gname}/{name}"
            if key not in tensors:
                raise CheckpointError(f"checkpoint missing parameter {key}")
            if tensors[key].shape != t.data.shape:
                raise CheckpointError(
                    f"shape mismatch for {key}: "
                    f"{tensors[key].shape} != {t.data.shape}")
            t.data = tensors[key]
        adam = state.adam[gname]
        adam.step = meta["adam_steps"][gname]
        for key, arr in tensors.items():
            prefix_m = f"adam/{gname}/m/"
            prefix_v = f"adam/{gname}/v/"
            if key.startswith(prefix_m):
                adam.m[key[len(prefix_m):]] = arr
            elif key.startswith(prefix_v):
                adam.v[key[len(prefix_v):]] = arr
    state.epoch = meta["epoch"]
    state.step = meta["step"]
    state.best_loss = meta["best_loss"]
    state.stale = meta["stale"]
    state.sample_root = RngStream.from_state(meta["streams"]["sample_root"])
    state.shuffle_stream = RngStream.from_state(meta["streams"]["shuffle"])
    state.coin_stream = RngStream.from_state(meta["streams"]["coin"])
    return state, config
