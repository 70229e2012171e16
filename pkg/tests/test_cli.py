import json
from pathlib import Path

import pytest

from graphaug.cli import main
from graphaug.rng import RngStream


def write_synthetic_tudataset(root: Path, name="SYN", num_graphs=10):
    """Small two-class dataset in the TUDataset text convention."""
    d = root / name
    d.mkdir(parents=True, exist_ok=True)
    stream = RngStream(77, "cli-synth")
    a_lines, ind_lines, label_lines, node_label_lines = [], [], [], []
    node_id = 0
    for k in range(num_graphs):
        label = k % 2
        n = 4 + int(stream.integers(0, 3))
        base = node_id + 1                      # files are 1-based
        for i in range(n):
            ind_lines.append(str(k + 1))
            node_label_lines.append(str(int(stream.integers(0, 3))))
        if label == 0:
            pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        else:
            pairs = [(i, i + 1) for i in range(n - 1)]
        for i, j in pairs:
            a_lines.append(f"{base + i}, {base + j}")
            a_lines.append(f"{base + j}, {base + i}")
        label_lines.append(str(label))
        node_id += n
    (d / f"{name}_A.txt").write_text("\n".join(a_lines) + "\n")
    (d / f"{name}_graph_indicator.txt").write_text("\n".join(ind_lines) + "\n")
    (d / f"{name}_graph_labels.txt").write_text("\n".join(label_lines) + "\n")
    (d / f"{name}_node_labels.txt").write_text("\n".join(node_label_lines) + "\n")
    return d


@pytest.fixture
def dataset_dir(tmp_path):
    return write_synthetic_tudataset(tmp_path)


def run_cli(*argv):
    return main(list(argv))


TRAIN_ARGS = ["--epochs", "2", "--batch-size", "4", "--hidden-dim", "8",
              "--num-layers", "1", "--seed", "7"]


def test_train_writes_artifacts(dataset_dir, tmp_path, capsys):
    out = tmp_path / "run1"
    code = run_cli("train", "--dataset", str(dataset_dir), "--out", str(out),
                   *TRAIN_ARGS)
    assert code == 0
    for artifact in ("checkpoint.bin", "metrics.csv", "aug_frequencies.csv",
                     "config_resolved.cfg"):
        assert (out / artifact).exists(), artifact
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == "epoch,step,loss,aug_i,aug_j,p_i,p_j,coin"


def test_train_determinism_byte_identical(dataset_dir, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run_cli("train", "--dataset", str(dataset_dir), "--out",
                       str(out), *TRAIN_ARGS) == 0
        outs.append(out)
    for artifact in ("metrics.csv", "aug_frequencies.csv"):
        assert (outs[0] / artifact).read_bytes() == \
            (outs[1] / artifact).read_bytes()
    assert (outs[0] / "checkpoint.bin").read_bytes() == \
        (outs[1] / "checkpoint.bin").read_bytes()


def test_missing_dataset_is_config_error(tmp_path, capsys):
    code = run_cli("train", "--out", str(tmp_path / "x"), *TRAIN_ARGS)
    assert code == 2
    assert "data.dataset" in capsys.readouterr().err


def test_epochs_zero_writes_initial_checkpoint(dataset_dir, tmp_path):
    out = tmp_path / "init"
    code = run_cli("train", "--dataset", str(dataset_dir), "--out", str(out),
                   "--epochs", "0", "--hidden-dim", "8", "--num-layers", "1",
                   "--seed", "1")
    assert code == 0
    assert (out / "checkpoint.bin").exists()
    assert (out / "metrics.csv").read_text().strip() == \
        "epoch,step,loss,aug_i,aug_j,p_i,p_j,coin"


def test_print_config(dataset_dir, capsys):
    code = run_cli("train", "--dataset", str(dataset_dir), "--print-config",
                   "--epochs", "3")
    assert code == 0
    text = capsys.readouterr().out
    assert "[train]" in text and "epochs = 3" in text


def test_config_file_and_override(dataset_dir, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        f"[data]\ndataset = {dataset_dir}\n\n[train]\nepochs = 5\nseed = 2\n")
    code = run_cli("train", "--config", str(cfg), "--epochs", "1",
                   "--print-config")
    assert code == 0
    assert "epochs = 1" in capsys.readouterr().out


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[train]\nnot_a_key = 5\n")
    code = run_cli("train", "--config", str(cfg), "--print-config")
    assert code == 2
    assert "not_a_key" in capsys.readouterr().err


def trained_checkpoint(dataset_dir, tmp_path):
    out = tmp_path / "trained"
    if not (out / "checkpoint.bin").exists():
        assert run_cli("train", "--dataset", str(dataset_dir), "--out",
                       str(out), *TRAIN_ARGS) == 0
    return out / "checkpoint.bin"


def test_probe_graph_protocol(dataset_dir, tmp_path, capsys):
    ck = trained_checkpoint(dataset_dir, tmp_path)
    out = tmp_path / "probe"
    code = run_cli("probe", "--checkpoint", str(ck), "--dataset",
                   str(dataset_dir), "--out", str(out), "--folds", "5",
                   "--runs", "2")
    assert code == 0
    report = json.loads((out / "probe_report.json").read_text())
    assert len(report["accuracies"]) == 10          # folds * runs
    assert 0.0 <= report["mean_accuracy"] <= 1.0
    assert (out / "probe_report.csv").exists()


def test_probe_dim_mismatch_fails(dataset_dir, tmp_path, capsys):
    ck = trained_checkpoint(dataset_dir, tmp_path)
    other = write_synthetic_tudataset(tmp_path / "other", name="OTH")
    # OTH has the same node-label alphabet; force a different d_x via attributes
    n_nodes = len((other / "OTH_graph_indicator.txt").read_text().split())
    (other / "OTH_node_attributes.txt").write_text(
        "\n".join("0.5, 1.5" for _ in range(n_nodes)) + "\n")
    code = run_cli("probe", "--checkpoint", str(ck), "--dataset", str(other),
                   "--out", str(tmp_path / "p2"))
    assert code == 1
    assert "d_x" in capsys.readouterr().err


def test_probe_corrupt_checkpoint(dataset_dir, tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"JUNKJUNKJUNK")
    code = run_cli("probe", "--checkpoint", str(bad), "--dataset",
                   str(dataset_dir), "--out", str(tmp_path / "p3"))
    assert code == 1


def test_embed_writes_rows(dataset_dir, tmp_path):
    ck = trained_checkpoint(dataset_dir, tmp_path)
    out = tmp_path / "emb"
    code = run_cli("embed", "--checkpoint", str(ck), "--dataset",
                   str(dataset_dir), "--out", str(out))
    assert code == 0
    lines = (out / "embeddings.csv").read_text().splitlines()
    assert len(lines) == 11          # header + one row per graph
    assert lines[0].startswith("id,label,dim0")


def test_inspect_identity_dumps_inputs(dataset_dir, tmp_path, capsys):
    ck = trained_checkpoint(dataset_dir, tmp_path)
    out = tmp_path / "ins"
    code = run_cli("inspect", "--checkpoint", str(ck), "--dataset",
                   str(dataset_dir), "--out", str(out), "--head", "identity",
                   "--num-graphs", "3")
    assert code == 0
    printed = capsys.readouterr().out
    assert "policy distribution" in printed
    dist = json.loads((out / "policy_distribution.json").read_text())
    assert abs(sum(dist.values()) - 1.0) < 1e-9
    dump = (out / "graph0.edges").read_text().splitlines()
    weights = [float(line.split()[2]) for line in dump[2:]]
    assert all(w == 1.0 for w in weights)


def test_inspect_subgraph_connected(dataset_dir, tmp_path):
    ck = trained_checkpoint(dataset_dir, tmp_path)
    out = tmp_path / "ins-sub"
    code = run_cli("inspect", "--checkpoint", str(ck), "--dataset",
                   str(dataset_dir), "--out", str(out), "--head", "subgraph",
                   "--num-graphs", "4")
    assert code == 0
    for k in range(4):
        lines = (out / f"graph{k}.edges").read_text().splitlines()
        n = int(lines[0].split(":")[1].split()[0])
        edges = [(int(a), int(b)) for a, b, _ in
                 (line.split() for line in lines[2:])]
        # connectivity oracle
        adj = {v: [] for v in range(n)}
        for a, b in edges:
            adj[a].append(b)
        seen, frontier = {0}, [0]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            frontier = nxt
        assert seen == set(range(n))


def test_inspect_unknown_head(dataset_dir, tmp_path, capsys):
    ck = trained_checkpoint(dataset_dir, tmp_path)
    code = run_cli("inspect", "--checkpoint", str(ck), "--dataset",
                   str(dataset_dir), "--out", str(tmp_path / "x"),
                   "--head", "nonsense")
    assert code == 2
    err = capsys.readouterr().err
    assert "identity" in err and "node_drop" in err


def test_stats_output(dataset_dir, capsys, tmp_path):
    out_json = tmp_path / "stats.json"
    code = run_cli("stats", "--dataset", str(dataset_dir), "--out-json",
                   str(out_json))
    assert code == 0
    stats = json.loads(out_json.read_text())
    assert stats["graphs"] == 10
    assert stats["classes"] == 2


def test_out_root_env(dataset_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("GRAPHAUG_OUT", str(tmp_path / "envroot"))
    monkeypatch.chdir(tmp_path)
    code = run_cli("train", "--dataset", str(dataset_dir), "--epochs", "0",
                   "--hidden-dim", "8", "--num-layers", "1", "--seed", "0")
    assert code == 0
    assert (tmp_path / "envroot" / "syn-train" / "checkpoint.bin").exists()


def write_single_graph_dataset(root: Path, name="ONE", n=24):
    """One community graph; node labels double as probe targets."""
    d = root / name
    d.mkdir(parents=True, exist_ok=True)
    stream = RngStream(5, "cli-node")
    half = n // 2
    a_lines = []
    for i in range(n):
        for j in range(i + 1, n):
            same = (i < half) == (j < half)
            p = 0.5 if same else 0.06
            if stream.uniform() < p:
                a_lines.append(f"{i + 1}, {j + 1}")
                a_lines.append(f"{j + 1}, {i + 1}")
    (d / f"{name}_A.txt").write_text("\n".join(a_lines) + "\n")
    (d / f"{name}_graph_indicator.txt").write_text("\n".join(["1"] * n) + "\n")
    (d / f"{name}_graph_labels.txt").write_text("1\n")
    (d / f"{name}_node_labels.txt").write_text(
        "\n".join("0" if i < half else "1" for i in range(n)) + "\n")
    return d


def test_node_task_cli_roundtrip(tmp_path, capsys):
    data_dir = write_single_graph_dataset(tmp_path)
    out = tmp_path / "node-run"
    code = run_cli("train", "--dataset", str(data_dir), "--task", "node",
                   "--out", str(out), "--epochs", "1", "--hidden-dim", "8",
                   "--num-layers", "1", "--hops", "1",
                   "--node-batch-subgraphs", "4", "--seed", "3",
                   "--policy", "deepset")
    assert code == 0
    probe_out = tmp_path / "node-probe"
    code = run_cli("probe", "--checkpoint", str(out / "checkpoint.bin"),
                   "--dataset", str(data_dir), "--out", str(probe_out),
                   "--runs-node", "3", "--train-frac", "0.5")
    assert code == 0
    report = json.loads((probe_out / "probe_report.json").read_text())
    assert len(report["accuracies"]) == 3
    assert "random splits" in report["protocol"]


def test_shipped_mutag_config_parses(capsys):
    cfg = Path(__file__).resolve().parent.parent / "configs" / "mutag.cfg"
    code = run_cli("train", "--config", str(cfg), "--print-config")
    assert code == 0
    text = capsys.readouterr().out
    assert "epochs = 20" in text and "policy = gru" in text
