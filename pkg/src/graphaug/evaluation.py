"""Frozen-encoder linear probes.

Graph protocol: stratified 10-fold cross-validation, repeated over fold
seeds. Node protocol: repeated random splits. The classifier is multinomial
logistic regression trained full-batch with the in-repo engine; the L2
penalty is picked per training split by inner 3-fold cross-validation over a
log grid.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .encoders import encode
from .graphs import batch_graphs, khop_bfs
from .optim import AdamState, adam_step
from .rng import RngStream
from .tensor import ParameterSet, Tensor

LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
PROBE_EPOCHS = 300
PROBE_LR = 1e-2


@dataclass
class EmbeddingTable:
    vectors: np.ndarray              # (n, d_h)
    labels: np.ndarray               # (n,)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.vectors).all():
            raise ValueError("embeddings contain non-finite values")
        if len(self.vectors) != len(self.labels):
            raise ValueError("labels do not cover the embeddings")


@dataclass
class ProbeReport:
    mean: float
    std: float
    accuracies: list
    seed: int
    protocol: str

    def to_json(self) -> str:
        return json.dumps({
            "protocol": self.protocol, "seed": self.seed,
            "mean_accuracy": self.mean, "std_accuracy": self.std,
            "accuracies": self.accuracies,
        }, indent=2)

    def to_csv_rows(self) -> list:
        rows = [("run", "accuracy")]
        rows += [(i, a) for i, a in enumerate(self.accuracies)]
        rows.append(("mean", self.mean))
        rows.append(("std", self.std))
        return rows


def _report(accs: list, seed: int, protocol: str) -> ProbeReport:
    arr = np.asarray(accs, dtype=float)
    return ProbeReport(float(arr.mean()), float(arr.std()), list(map(float, arr)),
                       seed, protocol)


# -- embedding --------------------------------------------------------------------


def embed_dataset(dataset, state, config, chunk: int = 64) -> EmbeddingTable:
    """Frozen base-encoder embeddings (dropout off).

    Graph task: one graph vector per graph. Node task: one node vector per
    original node of the first graph, via BFS neighborhoods centered on each
    node in turn (the center's row is written back).
    """
    enc_cfg = config.base_encoder(dataset.feature_dim)
    if config.task == "graph":
        vecs = []
        for start in range(0, len(dataset.graphs), chunk):
            part = dataset.graphs[start:start + chunk]
            enc = encode(batch_graphs(part), state.theta, enc_cfg)
            vecs.append(enc.graph_vector.data)
        vectors = np.concatenate(vecs, axis=0)
        labels = dataset.labels()
        return EmbeddingTable(vectors, labels,
                              {"dataset": dataset.name, "task": "graph"})
    g = dataset.graphs[0]
    vectors = np.zeros((g.num_nodes, config.hidden_dim))
    for start in range(0, g.num_nodes, chunk):
        centers = range(start, min(start + chunk, g.num_nodes))
        subs = [khop_bfs(g, c, config.hops) for c in centers]
        batch = batch_graphs(subs)
        enc = encode(batch, state.theta, enc_cfg)
        for k, sub in enumerate(subs):
            n0, _ = batch.node_range(k)
            center_orig = int(sub.orig_ids[sub.center])
            vectors[center_orig] = enc.node_matrix.data[n0 + sub.center]
    if dataset.node_labels is None:
        raise ValueError("node-task probe needs node labels")
    labels = np.asarray(dataset.node_labels[0], dtype=np.int64)
    return EmbeddingTable(vectors, labels,
                          {"dataset": dataset.name, "task": "node"})


# -- logistic regression on the engine ------------------------------------------


def _standardize(train_x, *others):
    mu = train_x.mean(axis=0)
    sd = train_x.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return tuple((x - mu) / sd for x in (train_x,) + others)


def _fit_logreg(x: np.ndarray, y: np.ndarray, num_classes: int,
                l2: float) -> tuple[np.ndarray, np.ndarray]:
    n, d = x.shape
    params = ParameterSet()
    w = params.add("w", Tensor(np.zeros((d, num_classes))))
    b = params.add("b", Tensor(np.zeros(num_classes)))
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), y] = 1.0
    xt = Tensor(x)
    oh = Tensor(onehot)
    adam = AdamState()
    for _ in range(PROBE_EPOCHS):
        params.zero_grads()
        logits = xt @ w + b
        ce = (logits.logsumexp(axis=1) - (logits * oh).sum(axis=1)).mean()
        loss = ce + (w * w).sum() * (l2 / (2.0 * n))
        loss.backward()
        adam_step(params, {"w": w.grad, "b": b.grad}, adam, PROBE_LR)
    return w.data.copy(), b.data.copy()


def _accuracy(w, b, x, y) -> float:
    pred = np.argmax(x @ w + b, axis=1)
    return float((pred == y).mean())


def _stratified_folds(labels: np.ndarray, folds: int, stream: RngStream):
    """Round-robin fold assignment per class after a seeded shuffle."""
    assignment = np.zeros(len(labels), dtype=np.int64)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < 2:
            raise ValueError(
                f"class {cls} has fewer than 2 items; cannot stratify")
        idx = idx[stream.permutation(len(idx))]
        assignment[idx] = np.arange(len(idx)) % folds
    return assignment


def _select_l2(x, y, num_classes, stream: RngStream) -> float:
    """Inner 3-fold CV over the penalty grid; first best wins."""
    inner = _stratified_folds(y, 3, stream)
    best_l2, best_acc = LAMBDA_GRID[0], -1.0
    for l2 in LAMBDA_GRID:
        accs = []
        for f in range(3):
            tr, te = inner != f, inner == f
            if te.sum() == 0 or len(np.unique(y[tr])) < num_classes:
                continue
            xtr, xte = _standardize(x[tr], x[te])
            w, b = _fit_logreg(xtr, y[tr], num_classes, l2)
            accs.append(_accuracy(w, b, xte, y[te]))
        acc = float(np.mean(accs)) if accs else -1.0
        if acc > best_acc:
            best_acc, best_l2 = acc, l2
    return best_l2


def linear_probe_graph(table: EmbeddingTable, folds: int = 10, runs: int = 5,
                       seed: int = 0) -> ProbeReport:
    """Stratified k-fold probe, repeated with different fold seeds."""
    x, y = table.vectors, table.labels
    num_classes = int(y.max()) + 1
    if len(np.unique(y)) < 2:
        raise ValueError("probe needs at least two classes")
    accs = []
    for run in range(runs):
        stream = RngStream(seed + run, "probe-folds")
        assignment = _stratified_folds(y, folds, stream)
        for f in range(folds):
            tr, te = assignment != f, assignment == f
            if te.sum() == 0:
                continue
            l2 = _select_l2(x[tr], y[tr], num_classes, stream.split(f"l2-{f}"))
            xtr, xte = _standardize(x[tr], x[te])
            w, b = _fit_logreg(xtr, y[tr], num_classes, l2)
            accs.append(_accuracy(w, b, xte, y[te]))
    return _report(accs, seed, f"{folds}-fold x {runs} runs")


def linear_probe_node(table: EmbeddingTable, runs: int = 20,
                      train_frac: float = 0.1, seed: int = 0) -> ProbeReport:
    """Random-split probe over ``runs`` different splits."""
    if not (0.0 < train_frac < 1.0):
        raise ValueError("train_frac must be in (0, 1)")
    x, y = table.vectors, table.labels
    num_classes = int(y.max()) + 1
    accs = []
    for run in range(runs):
        stream = RngStream(seed + run, "probe-splits")
        order = stream.permutation(len(y))
        n_train = max(num_classes, int(round(train_frac * len(y))))
        tr_idx, te_idx = order[:n_train], order[n_train:]
        if len(np.unique(y[tr_idx])) < num_classes:
            # re-draw once with a derived stream; then accept the split
            order = stream.split("retry").permutation(len(y))
            tr_idx, te_idx = order[:n_train], order[n_train:]
        l2 = _select_l2(x[tr_idx], y[tr_idx], num_classes,
                        stream.split("l2")) \
            if len(np.unique(y[tr_idx])) == num_classes else LAMBDA_GRID[0]
        xtr, xte = _standardize(x[tr_idx], x[te_idx])
        w, b = _fit_logreg(xtr, y[tr_idx], num_classes, l2)
        accs.append(_accuracy(w, b, xte, y[te_idx]))
    return _report(accs, seed, f"{runs} random splits @ {train_frac}")
