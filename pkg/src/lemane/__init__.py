"""Node embeddings from a learned personalized-PageRank stopping schedule."""

__version__ = "0.1.0"

from .graph import CsrGraph, EdgeSplit, GraphFormatError, NodeMapping, from_edges, load_edge_list  # noqa: E402
from .schedule import Schedule, init_schedule, load_schedule, save_schedule  # noqa: E402
from .sppr import exact_sppr, generalized_push, push_all_sources  # noqa: E402
from .proximity import assemble_proximity, log_transform  # noqa: E402
from .factorize import EmbeddingPair, SvdTriple, factorize  # noqa: E402
from .train import LabelSet, TrainConfig, TrainingError, train_schedule  # noqa: E402
from .evaluation import EvalReport, link_precision, node_classification  # noqa: E402
from .pipeline import EmptyProximityError, embed_graph  # noqa: E402

__all__ = [
    "CsrGraph", "EdgeSplit", "GraphFormatError", "NodeMapping", "from_edges", "load_edge_list",
    "Schedule", "init_schedule", "load_schedule", "save_schedule",
    "exact_sppr", "generalized_push", "push_all_sources",
    "assemble_proximity", "log_transform",
    "EmbeddingPair", "SvdTriple", "factorize",
    "LabelSet", "TrainConfig", "TrainingError", "train_schedule",
    "EvalReport", "link_precision", "node_classification",
    "EmptyProximityError", "embed_graph",
]
