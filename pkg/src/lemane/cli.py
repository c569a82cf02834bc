"""Command-line entry point: ``lemane {train,embed,eval,sample,split,pipeline,replay}``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import link_precision, node_classification
from .factorize import EmbeddingPair, read_embedding, write_embedding
from .graph import EdgeSplit, GraphFormatError, load_edge_list, remove_edges_split, \
    sample_bfs_subgraph, write_edge_list
from .pipeline import EmptyProximityError, embed_graph
from .schedule import load_schedule, save_schedule
from .train import PRESETS, LabelSet, TrainConfig, TrainingError, load_labels, stage_rng, train_schedule

log = logging.getLogger("lemane")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration

_TRAIN_KEYS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
_SECTIONS = {
    "graph": {"path": str, "directed": bool, "labels": str},
    "train": {**{k: None for k in _TRAIN_KEYS}, "preset": str},
    "embed": {"delta": float, "dim": int, "svd": str, "dense_cap": int, "oversampling": int,
              "power_iters": int, "threads": int, "schedule": str},
    "eval": {"train_ratio": float, "split_ratio": float, "l2": float, "epochs": int},
}


def _coerce(value: str, kind):
    kind = {"int": int, "float": float, "bool": bool, "str": str}.get(kind, kind)
    if kind is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return kind(value.strip())


def read_config(path) -> dict:
    """Parse the ``key = value`` file with ``[graph] [train] [embed] [eval]``
    sections. Unknown sections or keys raise ``ConfigError``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (``L``)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {name: {} for name in _SECTIONS}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        allowed = _SECTIONS[section]
        for key, raw in cp.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            kind = allowed[key]
            if section == "train" and key != "preset":
                kind = {int: int, float: float, bool: bool}.get(type(getattr(TrainConfig(), key)), str)
            try:
                out[section][key] = _coerce(raw, kind)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return out


def train_config(conf: dict, **overrides) -> TrainConfig:
    values = dict(conf.get("train", {}))
    preset = values.pop("preset", None)
    base = dict(PRESETS[preset]) if preset else {}
    if preset and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    base.update(values)
    base.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(**base)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# manifests

def _abs(path) -> str | None:
    return None if path is None else str(Path(path).resolve())


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Manifest:
    def __init__(self, command: str, options: dict, seed: int, threads: int):
        self.data = {"command": command, "options": options, "seed": seed, "threads": threads,
                     "version": __version__, "inputs": {}, "artifacts": {}, "timings": {}}

    def add_input(self, path):
        if path:
            self.data["inputs"][_abs(path)] = sha256(path)

    def add_artifact(self, name, path):
        self.data["artifacts"][name] = _abs(path)

    def time(self, stage, seconds):
        self.data["timings"][stage] = round(seconds, 6)

    def write(self, out: Path, name: str = "manifest.json"):
        for key, path in self.data["artifacts"].items():
            self.data.setdefault("artifact_digests", {})[key] = sha256(path)
        (out / name).write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# data helpers

def _load_graph(path, directed: bool):
    try:
        return load_edge_list(path, directed)
    except OSError as exc:
        raise DataError(f"cannot read graph {path}: {exc}") from exc


def _load_labels(path, n):
    try:
        labels = load_labels(path, n)
    except OSError as exc:
        raise DataError(f"cannot read labels {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if labels.n > n:
        raise DataError(f"labels mention node {labels.n - 1} but the graph has {n} nodes")
    return labels


def _write_nodes(path, nodes):
    Path(path).write_text("".join(f"{int(v)}\n" for v in nodes), encoding="utf-8")


def _read_nodes(path):
    return np.array([int(x) for x in Path(path).read_text(encoding="utf-8").split()], dtype=np.int64)


def write_pairs(path, pos, neg):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# u v label\n")
        for u, v in pos:
            fh.write(f"{u} {v} 1\n")
        for u, v in neg:
            fh.write(f"{u} {v} 0\n")


def read_pairs(path):
    arr = np.loadtxt(path, dtype=np.int64, comments="#", ndmin=2)
    pos, neg = arr[arr[:, 2] == 1, :2], arr[arr[:, 2] == 0, :2]
    return pos, neg


def _opt(args, conf, section, key, default=None, attr=None):
    val = getattr(args, attr or key, None)
    if val is not None:
        return val
    return conf.get(section, {}).get(key, default)


def _directed(args, conf):
    if getattr(args, "directed", None) is not None:
        return args.directed
    return bool(conf["graph"].get("directed", False))


# --------------------------------------------------------------------------
# commands

def cmd_train(args, conf) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph_path = _opt(args, conf, "graph", "path", attr="graph")
    labels_path = _opt(args, conf, "graph", "labels", attr="labels")
    if not graph_path:
        raise ConfigError("no graph given (--graph or [graph] path)")
    cfg = train_config(conf, task=args.task, seed=args.seed, delta=args.delta, d=args.dim)
    if cfg.task == "class" and not labels_path:
        raise ConfigError("the class task needs labels (--labels or [graph] labels)")
    if cfg.task == "link":
        labels_path = None
    directed = _directed(args, conf)
    options = {"graph": _abs(graph_path), "labels": _abs(labels_path), "directed": directed,
               "train": dataclasses.asdict(cfg)}
    man = Manifest("train", options, cfg.seed, getattr(args, "threads", None) or 1)
    man.add_input(graph_path)
    man.add_input(labels_path)

    t0 = time.perf_counter()
    g = _load_graph(graph_path, directed)
    labels = None
    if cfg.task == "class":
        labels = _load_labels(labels_path, g.n)
        if labels.n < g.n:
            labels = _pad_labels(labels, g.n)
        labels = labels.with_train_sample(stage_rng(cfg.seed, "labels"), cfg.label_fraction)
        _write_nodes(out / "train_labeled.txt", labels.train_nodes)
        man.add_artifact("train_labeled", out / "train_labeled.txt")
    man.time("load", time.perf_counter() - t0)

    t0 = time.perf_counter()
    losses: list = []
    s = train_schedule(g, labels, cfg, history=losses)
    man.time("train", time.perf_counter() - t0)
    save_schedule(s, out / "schedule.txt")
    with open(out / "losses.txt", "w", encoding="utf-8") as fh:
        for i, v in enumerate(losses):
            fh.write(f"{i} {v:.17g}\n")
    man.add_artifact("schedule", out / "schedule.txt")
    man.add_artifact("losses", out / "losses.txt")
    man.write(out, "train_manifest.json")
    return {"schedule": s, "labels": labels}


def _pad_labels(labels: LabelSet, n: int) -> LabelSet:
    import scipy.sparse as sp
    pad = sp.csr_matrix((n - labels.n, labels.n_c))
    return LabelSet(sp.vstack([labels.indicator, pad]).tocsr(), labels.names, labels.train_nodes)


def cmd_embed(args, conf) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph_path = _opt(args, conf, "graph", "path", attr="graph")
    sched_path = _opt(args, conf, "embed", "schedule", attr="schedule")
    if not graph_path or not sched_path:
        raise ConfigError("embed needs --graph and --schedule")
    delta = _opt(args, conf, "embed", "delta", 1e-5)
    dim = _opt(args, conf, "embed", "dim", 128)
    threads = _opt(args, conf, "embed", "threads", 1)
    seed = args.seed if args.seed is not None else conf["train"].get("seed", 0)
    svd = conf["embed"].get("svd", "auto")
    directed = _directed(args, conf)
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    extra = {k: conf["embed"][k] for k in ("oversampling", "power_iters", "dense_cap") if k in conf["embed"]}
    options = {"graph": _abs(graph_path), "schedule": _abs(sched_path), "delta": delta, "dim": dim,
               "svd": svd, "directed": directed, **extra}
    man = Manifest("embed", options, seed, threads)
    man.add_input(graph_path)
    man.add_input(sched_path)
    g = _load_graph(graph_path, directed)
    try:
        s = load_schedule(sched_path)
    except (OSError, ValueError) as exc:
        raise DataError(f"bad schedule file {sched_path}: {exc}") from exc
    if dim > g.n:
        raise ConfigError(f"dim={dim} exceeds node count {g.n}")
    t0 = time.perf_counter()
    e = embed_graph(g, s, delta, dim, stage_rng(seed, "svd"), backend=svd, threads=threads, **extra)
    man.time("embed", time.perf_counter() - t0)
    write_embedding(out / "embedding_X.tsv", e.X, "X")
    write_embedding(out / "embedding_Y.tsv", e.Y, "Y")
    man.add_artifact("X", out / "embedding_X.tsv")
    man.add_artifact("Y", out / "embedding_Y.tsv")
    man.write(out, "embed_manifest.json")
    return {"embedding": e}


def _load_embedding(args) -> EmbeddingPair:
    base = Path(args.embeddings)
    try:
        X, _ = read_embedding(base / "embedding_X.tsv")
        Y, _ = read_embedding(base / "embedding_Y.tsv")
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read embeddings in {base}: {exc}") from exc
    if X.shape != Y.shape:
        raise DataError(f"X is {X.shape} but Y is {Y.shape}")
    return EmbeddingPair(X, Y)


def cmd_eval(args, conf) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    task = args.task or conf["train"].get("task", "link")
    seed = args.seed if args.seed is not None else conf["train"].get("seed", 0)
    e = _load_embedding(args)
    man = Manifest("eval", {"task": task, "embeddings": _abs(args.embeddings)}, seed, 1)
    man.add_input(Path(args.embeddings) / "embedding_X.tsv")
    man.add_input(Path(args.embeddings) / "embedding_Y.tsv")
    if task == "link":
        if not args.pairs:
            raise ConfigError("link evaluation needs --pairs (from `lemane split`)")
        pos, neg = read_pairs(args.pairs)
        if max(pos.max(initial=0), neg.max(initial=0)) >= e.n:
            raise DataError("test pairs reference nodes beyond the embedding")
        man.add_input(args.pairs)
        report = link_precision(e, EdgeSplit(None, pos, neg), seed=seed)
        report = dataclasses.replace(report, split={**report.split, "pairs": str(args.pairs)})
    else:
        labels_path = args.labels or conf["graph"].get("labels")
        if not labels_path:
            raise ConfigError("class evaluation needs --labels")
        labels = _load_labels(labels_path, e.n)
        if labels.n != e.n:
            labels = _pad_labels(labels, e.n)
        man.add_input(labels_path)
        ratio = _opt(args, conf, "eval", "train_ratio", 0.5)
        with_5pct = bool(args.train_nodes)
        if with_5pct:
            labels = dataclasses.replace(labels, train_nodes=_read_nodes(args.train_nodes))
            man.add_input(args.train_nodes)
        report = node_classification(e, labels, ratio, with_5pct, stage_rng(seed, "eval"),
                                     l2=conf["eval"].get("l2", 1e-4), epochs=conf["eval"].get("epochs", 200),
                                     seed=seed)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    man.add_artifact("report", out / "report.json")
    man.write(out, "eval_manifest.json")
    print(report.to_json())
    return {"report": report}


def cmd_sample(args, conf) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph_path = _opt(args, conf, "graph", "path", attr="graph")
    seed = args.seed if args.seed is not None else 0
    g = _load_graph(graph_path, _directed(args, conf))
    sub, mapping = sample_bfs_subgraph(g, args.size, stage_rng(seed, "sample", 0))
    write_edge_list(sub, out / "subgraph.txt")
    _write_nodes(out / "mapping.txt", mapping.sub_to_orig)
    man = Manifest("sample", {"graph": _abs(graph_path), "size": args.size}, seed, 1)
    man.add_input(graph_path)
    man.add_artifact("subgraph", out / "subgraph.txt")
    man.add_artifact("mapping", out / "mapping.txt")
    man.write(out, "sample_manifest.json")
    return {"subgraph": sub, "mapping": mapping}


def cmd_split(args, conf) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph_path = _opt(args, conf, "graph", "path", attr="graph")
    seed = args.seed if args.seed is not None else conf["train"].get("seed", 0)
    ratio = _opt(args, conf, "eval", "split_ratio", 0.3, attr="ratio")
    directed = _directed(args, conf)
    g = _load_graph(graph_path, directed)
    try:
        split = remove_edges_split(g, ratio, stage_rng(seed, "split"))
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    write_edge_list(split.train_graph, out / "train_graph.txt")
    write_pairs(out / "test_pairs.txt", split.test_pos, split.test_neg)
    man = Manifest("split", {"graph": _abs(graph_path), "ratio": ratio, "directed": directed}, seed, 1)
    man.add_input(graph_path)
    man.add_artifact("train_graph", out / "train_graph.txt")
    man.add_artifact("test_pairs", out / "test_pairs.txt")
    man.write(out, "split_manifest.json")
    return {"split": split, "n": g.n}


def cmd_pipeline(args, conf) -> dict:
    """split (link task) -> train -> embed -> eval, all under ``--out``."""
    out = Path(args.out)
    task = args.task or conf["train"].get("task", "link")
    ns = argparse.Namespace(**vars(args))
    ns.task = task
    graph = _opt(args, conf, "graph", "path", attr="graph")
    ns.graph = graph
    if task == "link":
        ns.out = str(out / "split")
        ns.ratio = None
        cmd_split(ns, conf)
        ns.graph = str(out / "split" / "train_graph.txt")
    ns.out = str(out / "train")
    cmd_train(ns, conf)
    ns.schedule = str(out / "train" / "schedule.txt")
    ns.out = str(out / "embed")
    cmd_embed(ns, conf)
    ns.embeddings = str(out / "embed")
    ns.out = str(out / "eval")
    if task == "link":
        ns.pairs = str(out / "split" / "test_pairs.txt")
    else:
        ns.train_nodes = str(out / "train" / "train_labeled.txt")
        ns.labels = _opt(args, conf, "graph", "labels", attr="labels")
    return cmd_eval(ns, conf)


def cmd_replay(args, conf) -> dict:
    """Re-run the command recorded in a manifest, writing to ``--out``."""
    data = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    for path, digest in data["inputs"].items():
        if not os.path.exists(path) or sha256(path) != digest:
            raise DataError(f"input {path} changed since the manifest was written")
    opts = data["options"]
    ns = argparse.Namespace(out=args.out, seed=data["seed"], threads=data["threads"], task=None,
                            delta=None, dim=None, directed=opts.get("directed"))
    replay_conf = {name: {} for name in _SECTIONS}
    if data["command"] == "train":
        replay_conf["train"] = dict(opts["train"])
        ns.graph, ns.labels = opts["graph"], opts["labels"]
        return cmd_train(ns, replay_conf)
    if data["command"] == "embed":
        replay_conf["embed"] = {k: opts[k] for k in ("svd", "oversampling", "power_iters", "dense_cap") if k in opts}
        ns.graph, ns.schedule, ns.delta, ns.dim = opts["graph"], opts["schedule"], opts["delta"], opts["dim"]
        return cmd_embed(ns, replay_conf)
    raise ConfigError(f"replay supports train and embed manifests, not {data['command']!r}")


# --------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lemane", description="Learned-proximity node embeddings.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp_):
        sp_.add_argument("--config", help="key = value config with [graph] [train] [embed] [eval]")
        sp_.add_argument("--out", required=True, help="output directory")
        sp_.add_argument("--seed", type=int, help="root seed (u64)")
        sp_.add_argument("--threads", type=int, help="worker threads for the push stage")
        sp_.add_argument("-v", "--verbose", action="store_true")

    def graph_opts(sp_):
        sp_.add_argument("--graph", help="edge-list file")
        g = sp_.add_mutually_exclusive_group()
        g.add_argument("--directed", dest="directed", action="store_true", default=None)
        g.add_argument("--undirected", dest="directed", action="store_false")

    t = sub.add_parser("train", help="learn a stopping schedule")
    common(t)
    graph_opts(t)
    t.add_argument("--labels")
    t.add_argument("--task", choices=["link", "class"])
    t.add_argument("--delta", type=float)
    t.add_argument("--dim", type=int)

    e = sub.add_parser("embed", help="embed a graph with a schedule",
                       description="Push-based proximity + SVD. Push estimates carry an error of up "
                                   "to delta*L per unit degree; lower delta for accuracy.")
    common(e)
    graph_opts(e)
    e.add_argument("--schedule")
    e.add_argument("--delta", type=float)
    e.add_argument("--dim", type=int)

    v = sub.add_parser("eval", help="evaluate embeddings")
    common(v)
    v.add_argument("--embeddings", required=True, help="directory with embedding_X.tsv / embedding_Y.tsv")
    v.add_argument("--task", choices=["link", "class"])
    v.add_argument("--pairs", help="test pairs file (link task)")
    v.add_argument("--labels", help="label file (class task)")
    v.add_argument("--train-nodes", help="nodes already seen by schedule training (class task)")
    v.add_argument("--train-ratio", dest="train_ratio", type=float)

    s = sub.add_parser("sample", help="draw a BFS subgraph")
    common(s)
    graph_opts(s)
    s.add_argument("--size", type=int, default=5000)

    sp_ = sub.add_parser("split", help="hide edges for link prediction")
    common(sp_)
    graph_opts(sp_)
    sp_.add_argument("--ratio", type=float)

    pl = sub.add_parser("pipeline", help="split/train/embed/eval in one go")
    common(pl)
    graph_opts(pl)
    pl.add_argument("--labels")
    pl.add_argument("--task", choices=["link", "class"])
    pl.add_argument("--delta", type=float)
    pl.add_argument("--dim", type=int)
    pl.add_argument("--train-ratio", dest="train_ratio", type=float)

    r = sub.add_parser("replay", help="re-run a train/embed manifest")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    r.add_argument("-v", "--verbose", action="store_true")
    return p


_COMMANDS = {"train": cmd_train, "embed": cmd_embed, "eval": cmd_eval, "sample": cmd_sample,
             "split": cmd_split, "pipeline": cmd_pipeline, "replay": cmd_replay}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = read_config(args.config) if getattr(args, "config", None) else {k: {} for k in _SECTIONS}
        _COMMANDS[args.command](args, conf)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GraphFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, EmptyProximityError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
