import json
import subprocess
import sys
import time

import numpy as np
import pytest

from lemane.cli import main, read_config, ConfigError
from lemane.factorize import read_embedding, write_embedding
from lemane.graph import from_edges, load_edge_list, write_edge_list
from lemane.proximity import assemble_proximity, log_transform
from lemane.schedule import Schedule, load_schedule, parse_init, save_schedule

from conftest import DATA


def write(path, text):
    path.write_text(text)
    return path


def small_config(tmp_path, **train):
    body = {"max_iters": 5, "n_s": 200, "d": 16, "learning_rate": 0.01, **train}
    lines = ["[graph]", f"path = {DATA / 'sbm500.txt'}", f"labels = {DATA / 'sbm500_labels.txt'}", "[train]"]
    lines += [f"{k} = {v}" for k, v in body.items()]
    lines += ["[embed]", "delta = 1e-5", "dim = 16"]
    return write(tmp_path / "run.ini", "\n".join(lines) + "\n")


def test_config_unknown_key_and_section(tmp_path):
    assert main(["train", "--config", str(write(tmp_path / "a.ini", "[train]\nbogus = 1\n")),
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["train", "--config", str(write(tmp_path / "b.ini", "[extra]\nx = 1\n")),
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["train", "--config", str(write(tmp_path / "c.ini", "[train]\nd = many\n")),
                 "--out", str(tmp_path / "o")]) == 2
    conf = read_config(write(tmp_path / "d.ini", "[train]\nd = 64\ndelta = 1e-6\nnormalize_concat = yes\n"))
    assert conf["train"] == {"d": 64, "delta": 1e-6, "normalize_concat": True}
    with pytest.raises(ConfigError):
        read_config(tmp_path / "missing.ini")


def test_config_keys_keep_case(tmp_path):
    from lemane.cli import train_config
    conf = read_config(write(tmp_path / "e.ini", "[train]\npreset = blogcatalog-class\nL = 4\n"))
    cfg = train_config(conf)
    assert cfg.L == 4 and cfg.gamma_c == 0.5


@pytest.mark.parametrize("delta", ["1e-7", "1e-6", "1e-5", "1e-4"])
def test_delta_grid_accepted(tmp_path, delta):
    conf = read_config(write(tmp_path / "g.ini", f"[train]\ndelta = {delta}\n[embed]\ndelta = {delta}\n"))
    assert conf["train"]["delta"] == float(delta)


def test_train_max_iters_zero(tmp_path):
    cfg = small_config(tmp_path, max_iters=0, init="poisson:1")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "t")]) == 0
    save_schedule(parse_init("poisson:1"), tmp_path / "want.txt")
    assert (tmp_path / "t" / "schedule.txt").read_bytes() == (tmp_path / "want.txt").read_bytes()
    assert (tmp_path / "t" / "losses.txt").read_text() == ""


def test_train_outputs_and_manifest(tmp_path):
    cfg = small_config(tmp_path, task="class")
    out = tmp_path / "t"
    assert main(["train", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    man = json.loads((out / "train_manifest.json").read_text())
    assert man["seed"] == 4 and man["threads"] == 1 and man["command"] == "train"
    assert set(man["artifacts"]) == {"schedule", "losses", "train_labeled"}
    assert len(man["inputs"]) == 2 and all(len(v) == 64 for v in man["inputs"].values())
    assert "train" in man["timings"]
    lines = (out / "losses.txt").read_text().splitlines()
    assert 1 <= len(lines) <= 5 and lines[0].split()[0] == "0"
    labeled = (out / "train_labeled.txt").read_text().split()
    assert len(labeled) == 25  # ceil(0.05 * 500)
    assert load_schedule(out / "schedule.txt").L == 15


def test_train_defaults(tmp_path):
    from lemane.cli import train_config
    cfg = train_config({"train": {}})
    assert (cfg.d, cfg.L, cfg.n_s) == (128, 15, 5000)
    preset = train_config({"train": {"preset": "blogcatalog-link", "d": 32}})
    assert (preset.delta, preset.init, preset.d) == (1e-7, "geometric:0.5", 32)


def test_class_needs_labels(tmp_path):
    assert main(["train", "--graph", str(DATA / "sbm500.txt"), "--task", "class", "--out", str(tmp_path)]) == 2


def test_bad_graph_is_data_error(tmp_path):
    bad = write(tmp_path / "bad.txt", "0 1\n1 two\n")
    assert main(["train", "--graph", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert main(["train", "--graph", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "o")]) == 3


def _path_setup(tmp_path):
    g = from_edges(3, [(0, 1), (1, 2)], directed=False)
    write_edge_list(g, tmp_path / "p.txt")
    save_schedule(Schedule([0.5, 0.5, 1.0]), tmp_path / "s.txt")
    return g


def test_embed_path_quality_and_determinism(tmp_path):
    g = _path_setup(tmp_path)
    args = ["embed", "--graph", str(tmp_path / "p.txt"), "--schedule", str(tmp_path / "s.txt"),
            "--delta", "1e-3", "--dim", "2"]
    assert main(args + ["--out", str(tmp_path / "e1")]) == 0
    assert main(args + ["--out", str(tmp_path / "e2")]) == 0
    X, side = read_embedding(tmp_path / "e1" / "embedding_X.tsv")
    Y, _ = read_embedding(tmp_path / "e1" / "embedding_Y.tsv")
    assert side == "X" and X.shape == (3, 2)
    M = log_transform(assemble_proximity(g, 1e-3, Schedule([0.5, 0.5, 1.0])), 1e-3).toarray()
    best = np.sqrt(np.sum(np.linalg.svd(M, compute_uv=False)[2:] ** 2))
    assert np.linalg.norm(M - X @ Y.T) <= 1.1 * best + 1e-12
    for name in ("embedding_X.tsv", "embedding_Y.tsv"):
        assert (tmp_path / "e1" / name).read_bytes() == (tmp_path / "e2" / name).read_bytes()


def test_embed_delta_too_large(tmp_path, capsys):
    _path_setup(tmp_path)
    code = main(["embed", "--graph", str(tmp_path / "p.txt"), "--schedule", str(tmp_path / "s.txt"),
                 "--delta", "0.9", "--dim", "2", "--out", str(tmp_path / "e")])
    assert code == 4
    assert "keeps entries" in capsys.readouterr().err


def test_embed_bad_inputs(tmp_path):
    _path_setup(tmp_path)
    base = ["embed", "--graph", str(tmp_path / "p.txt"), "--out", str(tmp_path / "e")]
    assert main(base + ["--schedule", str(write(tmp_path / "bad.txt", "junk\n")), "--dim", "2"]) == 3
    assert main(base + ["--schedule", str(tmp_path / "s.txt"), "--dim", "5"]) == 2
    assert main(base + ["--schedule", str(tmp_path / "s.txt"), "--dim", "2", "--delta", "2"]) == 2


def test_eval_link_random_embeddings(tmp_path, rng):
    n = 1000
    write_embedding(tmp_path / "embedding_X.tsv", rng.standard_normal((n, 8)), "X")
    write_embedding(tmp_path / "embedding_Y.tsv", rng.standard_normal((n, 8)), "Y")
    pairs = tmp_path / "pairs.txt"
    with open(pairs, "w") as fh:
        for lab in (1, 0):
            for u, v in rng.integers(0, n, size=(2000, 2)):
                fh.write(f"{u} {v} {lab}\n")
    assert main(["eval", "--embeddings", str(tmp_path), "--task", "link", "--pairs", str(pairs),
                 "--out", str(tmp_path / "r"), "--seed", "2"]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert {"task", "metric", "value", "seed", "split"} <= set(rep)
    assert rep["seed"] == 2 and abs(rep["value"] - 0.5) < 3 * np.sqrt(1 / 16000)


def test_eval_class_single_label_accuracy(tmp_path, rng):
    n = 300
    lab = rng.integers(0, 3, n)
    X = np.eye(3)[lab] + 0.5 * rng.standard_normal((n, 3))
    write_embedding(tmp_path / "embedding_X.tsv", X, "X")
    write_embedding(tmp_path / "embedding_Y.tsv", X, "Y")
    labels = write(tmp_path / "lab.txt", "".join(f"{i} {c}\n" for i, c in enumerate(lab)))
    assert main(["eval", "--embeddings", str(tmp_path), "--task", "class", "--labels", str(labels),
                 "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert rep["metric"] == "micro_f1" and 0 <= rep["value"] <= 1


def test_eval_dimension_mismatch(tmp_path, rng):
    write_embedding(tmp_path / "embedding_X.tsv", rng.standard_normal((10, 3)), "X")
    write_embedding(tmp_path / "embedding_Y.tsv", rng.standard_normal((10, 4)), "Y")
    pairs = write(tmp_path / "p.txt", "0 1 1\n2 3 0\n")
    assert main(["eval", "--embeddings", str(tmp_path), "--task", "link", "--pairs", str(pairs),
                 "--out", str(tmp_path / "r")]) == 3
    write_embedding(tmp_path / "embedding_Y.tsv", rng.standard_normal((10, 3)), "Y")
    labels = write(tmp_path / "lab.txt", "0 a\n25 b\n")
    assert main(["eval", "--embeddings", str(tmp_path), "--task", "class", "--labels", str(labels),
                 "--out", str(tmp_path / "r")]) == 3


def test_sample_and_split(tmp_path):
    assert main(["sample", "--graph", str(DATA / "sbm500.txt"), "--size", "100", "--out", str(tmp_path / "s")]) == 0
    sub = load_edge_list(tmp_path / "s" / "subgraph.txt", directed=False)
    mapping = (tmp_path / "s" / "mapping.txt").read_text().split()
    assert sub.n == 100 and len(set(mapping)) == 100
    assert main(["split", "--graph", str(DATA / "sbm500.txt"), "--out", str(tmp_path / "p"), "--seed", "1"]) == 0
    train = load_edge_list(tmp_path / "p" / "train_graph.txt", directed=False)
    full = load_edge_list(DATA / "sbm500.txt", directed=False)
    rows = np.loadtxt(tmp_path / "p" / "test_pairs.txt", dtype=int)
    assert train.n == full.n
    assert (rows[:, 2] == 1).sum() == (rows[:, 2] == 0).sum() == (full.m // 2) * 3 // 10
    assert train.m == full.m - 2 * (rows[:, 2] == 1).sum()


@pytest.mark.parametrize("task", ["class", "link"])
def test_pipeline_and_replay(tmp_path, task):
    cfg = small_config(tmp_path)
    out = tmp_path / "run"
    t0 = time.perf_counter()
    assert main(["pipeline", "--config", str(cfg), "--task", task, "--out", str(out)]) == 0
    assert time.perf_counter() - t0 < 120
    rep = json.loads((out / "eval" / "report.json").read_text())
    assert rep["task"] == task and 0 <= rep["value"] <= 1
    if task == "class":
        assert rep["value"] >= 0.8
    assert main(["replay", str(out / "train" / "train_manifest.json"), "--out", str(tmp_path / "rt")]) == 0
    assert main(["replay", str(out / "embed" / "embed_manifest.json"), "--out", str(tmp_path / "re")]) == 0
    for name in ("schedule.txt", "losses.txt"):
        assert (out / "train" / name).read_bytes() == (tmp_path / "rt" / name).read_bytes()
    for name in ("embedding_X.tsv", "embedding_Y.tsv"):
        assert (out / "embed" / name).read_bytes() == (tmp_path / "re" / name).read_bytes()
    man = json.loads((out / "embed" / "embed_manifest.json").read_text())
    for key, path in man["artifacts"].items():
        from lemane.cli import sha256
        assert sha256(path) == man["artifact_digests"][key]


def test_replay_detects_changed_input(tmp_path):
    _path_setup(tmp_path)
    out = tmp_path / "e"
    assert main(["embed", "--graph", str(tmp_path / "p.txt"), "--schedule", str(tmp_path / "s.txt"),
                 "--delta", "1e-3", "--dim", "2", "--out", str(out)]) == 0
    write(tmp_path / "p.txt", "0 1\n1 2\n2 0\n")
    assert main(["replay", str(out / "embed_manifest.json"), "--out", str(tmp_path / "r")]) == 3


def test_threads_do_not_change_embedding(tmp_path):
    sched = tmp_path / "s.txt"
    save_schedule(parse_init("poisson:5"), sched)
    base = ["embed", "--graph", str(DATA / "sbm500.txt"), "--schedule", str(sched), "--dim", "8", "--delta", "1e-4"]
    assert main(base + ["--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(base + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    assert (tmp_path / "a" / "embedding_X.tsv").read_bytes() == (tmp_path / "b" / "embedding_X.tsv").read_bytes()
    assert json.loads((tmp_path / "b" / "embed_manifest.json").read_text())["threads"] == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "lemane", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "pipeline" in res.stdout
