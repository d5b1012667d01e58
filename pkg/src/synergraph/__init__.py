"""Drug-pair synergy prediction over a typed drug/protein/disease graph.

The pipeline: ingest pretrained entity embeddings, build the nine-relation
heterogeneous graph, let pre-trained drug-target and drug-drug predictors add
threshold-gated pseudo edges, run a three-layer graph attention stack, and
classify (drug, drug, cell line) triples as synergistic or antagonistic, with
confidence-filtered self-training and an inference path for drugs the graph
has never seen.
"""

__version__ = "0.1.0"

from .entities import Entity, EntityKind, EntityStore, Fingerprint, toy_fingerprint
from .featurize import (
    ExpressionProfile,
    compose_cell_embedding,
    embedding_distance,
    similarity_edges,
    tanimoto,
)
from .graph import EdgeType, HetGraph, RefinedGraph, build_graph, degree_stats, neighbors
from .metrics import MetricsReport, evaluate
from .model import (
    ModelConfig,
    SynergyModel,
    SynergyTriple,
    TrainConfig,
    forward_synergy,
    gat_forward,
    loss,
    project_features,
    refine_graph,
    train,
)
from .pipeline import (
    DrugRecord,
    LabeledSet,
    SelfTrainConfig,
    cross_validate,
    infer,
    self_train,
)
from .predictors import (
    EdgePredictor,
    PairDataset,
    PredictorConfig,
    predict_ddi,
    predict_dti,
    pretrain_predictor,
    sample_negatives,
)

__all__ = [
    "Entity",
    "EntityKind",
    "EntityStore",
    "Fingerprint",
    "toy_fingerprint",
    "ExpressionProfile",
    "compose_cell_embedding",
    "embedding_distance",
    "similarity_edges",
    "tanimoto",
    "EdgeType",
    "HetGraph",
    "RefinedGraph",
    "build_graph",
    "degree_stats",
    "neighbors",
    "MetricsReport",
    "evaluate",
    "ModelConfig",
    "SynergyModel",
    "SynergyTriple",
    "TrainConfig",
    "forward_synergy",
    "gat_forward",
    "loss",
    "project_features",
    "refine_graph",
    "train",
    "DrugRecord",
    "LabeledSet",
    "SelfTrainConfig",
    "cross_validate",
    "infer",
    "self_train",
    "EdgePredictor",
    "PairDataset",
    "PredictorConfig",
    "predict_ddi",
    "predict_dti",
    "pretrain_predictor",
    "sample_negatives",
]
