"""Trainable synergy model: per-kind projections, a three-layer graph
attention stack, threshold-gated pseudo-edge refinement, and the pair
classification head.

Message passing runs one attention layer on the ingested adjacency, then the
edge predictors propose pseudo drug-target and drug-drug edges among candidate
pairs (threshold-gated, hard), and the remaining two layers run on the refined
adjacency.  Topology is refreshed between epochs rather than differentiated
through; the predictors receive gradients from auxiliary edge losses when
joint fine-tuning is enabled.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Mapping, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .entities import EntityKind
from .errors import (
    DimMismatch,
    NonFiniteLoss,
    UnknownCell,
    UnknownDrug,
    UnknownProteinInProfile,
)
from .featurize import ExpressionProfile
from .graph import EdgeType, GraphLike, HetGraph, RefinedGraph
from .layers import Mlp, glorot, resolve_dtype, seed_all
from .predictors import EdgePredictor, PredictorConfig

PROB_EPS = 1e-7


@dataclass
class ModelConfig:
    """Dimensions and knobs of the full synergy model."""

    drug_dim: int = 2304
    protein_dim: int = 768
    disease_dim: int = 512
    common_width: int = 512
    gat_heads: tuple[int, int, int] = (4, 8, 12)
    gat_concat: Optional[tuple[bool, bool, bool]] = None  # None: concat iff heads divide width
    negative_slope: float = 0.2
    head_hidden: tuple[int, ...] = (3072, 768, 128)
    projection_hidden: tuple[int, ...] = ()
    dropout: float = 0.2
    tau_dti: float = 0.5
    tau_ddi: float = 0.5
    candidate_k: int = 50
    symmetric_pairs: bool = True
    dtype: str = "float64"
    seed: int = 0
    predictor_branch_heads: int = 8
    predictor_joint_heads: int = 12
    predictor_branch_blocks: int = 1
    predictor_joint_blocks: int = 2
    predictor_head_hidden: tuple[int, ...] = (2048, 256)
    predictor_ffn_mult: int = 2

    def __post_init__(self):
        self.gat_heads = tuple(self.gat_heads)
        if len(self.gat_heads) != 3:
            raise ValueError("exactly three attention layers are configured")
        if self.gat_concat is None:
            self.gat_concat = tuple(self.common_width % h == 0 for h in self.gat_heads)
        else:
            self.gat_concat = tuple(self.gat_concat)
        self.head_hidden = tuple(self.head_hidden)
        self.projection_hidden = tuple(self.projection_hidden)
        self.predictor_head_hidden = tuple(self.predictor_head_hidden)

    def kind_dims(self) -> dict[EntityKind, int]:
        return {
            EntityKind.DRUG: self.drug_dim,
            EntityKind.PROTEIN: self.protein_dim,
            EntityKind.DISEASE: self.disease_dim,
        }

    def to_meta(self) -> dict:
        meta = asdict(self)
        for key in ("gat_heads", "gat_concat", "head_hidden", "projection_hidden",
                    "predictor_head_hidden"):
            meta[key] = list(meta[key])
        return meta


class ProjectionSet(nn.Module):
    """One MLP per entity kind mapping its embedding width to the common one."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        dtype = resolve_dtype(config.dtype)
        self.mlps = nn.ModuleDict()
        for kind, dim in config.kind_dims().items():
            self.mlps[kind.value] = Mlp(
                dim, config.projection_hidden, config.common_width, rng,
                dtype=dtype, activation="elu",
            )

    def forward(self, kind: EntityKind, x: torch.Tensor) -> torch.Tensor:
        return self.mlps[kind.value](x)


def project_features(g: GraphLike, projections: ProjectionSet) -> torch.Tensor:
    """Apply the kind-appropriate projection to every node; (N, common)."""
    dtype = next(projections.parameters()).dtype
    width = projections.mlps[EntityKind.DRUG.value].linears[-1].out_features
    out = torch.zeros((len(g), width), dtype=dtype)
    for kind in EntityKind:
        idx = g.node_indices(kind)
        if len(idx) == 0:
            continue
        feats = torch.as_tensor(
            np.stack([g.features[i] for i in idx]), dtype=dtype
        )
        out[torch.as_tensor(idx)] = projections(kind, feats)
    return out


class GatLayer(nn.Module):
    """One multi-head graph attention layer with a shared linear transform and
    per-head attention vectors.  Heads concatenate when `concat` (head count
    must divide the output width) and average otherwise."""

    def __init__(
        self,
        in_width: int,
        out_width: int,
        heads: int,
        rng: np.random.Generator,
        concat: bool = True,
        negative_slope: float = 0.2,
        activation: bool = True,
        dtype: torch.dtype = torch.float64,
    ):
        super().__init__()
        if concat:
            if out_width % heads != 0:
                raise ValueError(f"{heads} heads do not divide output width {out_width}")
            head_dim = out_width // heads
        else:
            head_dim = out_width
        self.heads = heads
        self.head_dim = head_dim
        self.concat = concat
        self.negative_slope = negative_slope
        self.activation = activation
        self.weight = nn.Parameter(
            torch.as_tensor(glorot(rng, (heads * head_dim, in_width)), dtype=dtype)
        )
        self.att_dst = nn.Parameter(
            torch.as_tensor(rng.normal(0.0, 0.1, (heads, head_dim)), dtype=dtype)
        )
        self.att_src = nn.Parameter(
            torch.as_tensor(rng.normal(0.0, 0.1, (heads, head_dim)), dtype=dtype)
        )


def gat_forward(
    layer: GatLayer,
    g: GraphLike,
    x: torch.Tensor,
    return_attention: bool = False,
):
    """One attention update over the graph's stored edges.

    Every stored edge is used in both directions, a self-loop is always
    included, and attention weights per destination normalize to one.  Edge
    types are ignored: after projection the graph is treated homogeneously.
    """
    n = x.shape[0]
    if layer.weight.shape[1] != x.shape[1]:
        raise DimMismatch(
            f"layer expects input width {layer.weight.shape[1]}, got {x.shape[1]}"
        )
    src_np, dst_np = g.message_routes()
    loops = np.arange(n, dtype=np.int64)
    src = torch.as_tensor(np.concatenate([src_np, loops]))
    dst = torch.as_tensor(np.concatenate([dst_np, loops]))

    h, d = layer.heads, layer.head_dim
    z = (x @ layer.weight.T).view(n, h, d)
    score_dst = (z * layer.att_dst).sum(-1)  # (N, H)
    score_src = (z * layer.att_src).sum(-1)
    e = F.leaky_relu(score_dst[dst] + score_src[src], layer.negative_slope)  # (E, H)

    idx = dst.unsqueeze(1).expand(-1, h)
    e_max = torch.full((n, h), -torch.inf, dtype=x.dtype)
    e_max = e_max.scatter_reduce(0, idx, e, reduce="amax", include_self=True)
    w = torch.exp(e - e_max[dst])
    denom = torch.zeros((n, h), dtype=x.dtype).index_add_(0, dst, w)
    att = w / denom[dst]

    agg = torch.zeros((n, h, d), dtype=x.dtype)
    agg = agg.index_add_(0, dst, z[src] * att.unsqueeze(-1))
    out = agg.reshape(n, h * d) if layer.concat else agg.mean(dim=1)
    if layer.activation:
        out = F.elu(out)
    if return_attention:
        return out, (src, dst, att)
    return out


class SynergyModel(nn.Module):
    """Projections, three attention layers, the pair head, and the two edge
    predictors with their pseudo-edge thresholds."""

    def __init__(
        self,
        config: ModelConfig,
        dti: Optional[EdgePredictor] = None,
        ddi: Optional[EdgePredictor] = None,
    ):
        super().__init__()
        self.config = config
        self.torch_dtype = resolve_dtype(config.dtype)
        rng = np.random.default_rng(config.seed)
        self.projections = ProjectionSet(config, rng)
        self.gat_layers = nn.ModuleList(
            GatLayer(
                config.common_width,
                config.common_width,
                heads,
                rng,
                concat=concat,
                negative_slope=config.negative_slope,
                dtype=self.torch_dtype,
            )
            for heads, concat in zip(config.gat_heads, config.gat_concat)
        )
        self.head = Mlp(
            3 * config.common_width,
            config.head_hidden,
            2,
            rng,
            dtype=self.torch_dtype,
            activation="relu",
            dropout=config.dropout,
        )
        self.dti = dti if dti is not None else EdgePredictor(self._predictor_config("DTI"))
        self.ddi = ddi if ddi is not None else EdgePredictor(self._predictor_config("DDI"))
        if self.dti.config.dim_a != config.drug_dim or self.dti.config.dim_b != config.protein_dim:
            raise DimMismatch("DTI predictor widths do not match the model dims")
        if self.ddi.config.dim_a != config.drug_dim or self.ddi.config.dim_b != config.drug_dim:
            raise DimMismatch("DDI predictor widths do not match the model dims")

    def _predictor_config(self, kind: str) -> PredictorConfig:
        c = self.config
        return PredictorConfig(
            kind=kind,
            dim_a=c.drug_dim,
            dim_b=c.protein_dim if kind == "DTI" else c.drug_dim,
            branch_heads=c.predictor_branch_heads,
            joint_heads=c.predictor_joint_heads,
            branch_blocks=c.predictor_branch_blocks,
            joint_blocks=c.predictor_joint_blocks,
            head_hidden=c.predictor_head_hidden,
            ffn_mult=c.predictor_ffn_mult,
            dropout=c.dropout,
            dtype=c.dtype,
            seed=c.seed + 1 if kind == "DTI" else c.seed + 2,
        )


@dataclass(frozen=True)
class SynergyTriple:
    """One labelled (or unlabelled) drug-pair-on-cell-line sample."""

    drug_a: str
    drug_b: str
    cell_id: str
    label: Optional[int] = None

    def __post_init__(self):
        if self.drug_a == self.drug_b:
            raise ValueError(f"triple drugs must be distinct, got {self.drug_a!r} twice")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


# -- refinement ----------------------------------------------------------------


def default_candidates(
    g: HetGraph,
    x: torch.Tensor,
    candidate_k: int,
) -> list[tuple[int, int]]:
    """Per drug: the k nearest proteins and k nearest other drugs by cosine
    similarity of the current features.  k <= 0 enumerates every pair."""
    feats = x.detach().numpy().astype(np.float64)
    norms = np.linalg.norm(feats, axis=1)
    unit = np.divide(feats, norms[:, None], out=np.zeros_like(feats), where=norms[:, None] > 0)
    drugs = g.node_indices(EntityKind.DRUG)
    proteins = g.node_indices(EntityKind.PROTEIN)
    out: set[tuple[int, int]] = set()

    def top_k(center: int, pool: np.ndarray, k: int) -> np.ndarray:
        if k <= 0 or k >= len(pool):
            return pool
        sims = unit[pool] @ unit[center]
        order = np.lexsort((pool, -sims))
        return pool[order[:k]]

    for d in drugs:
        d = int(d)
        for p in top_k(d, proteins, candidate_k):
            out.add((d, int(p)))
        others = drugs[drugs != d]
        for d2 in top_k(d, others, candidate_k):
            out.add((min(d, int(d2)), max(d, int(d2))))
    return sorted(out)


def refine_graph(
    model: SynergyModel,
    g: HetGraph,
    x: torch.Tensor,
    candidates: Optional[Sequence[tuple[int, int]]] = None,
) -> RefinedGraph:
    """Gate candidate pairs through the edge predictors into pseudo edges.

    A drug-protein candidate with no existing drug-target edge is admitted at
    score >= tau_dti; a drug-drug candidate with no existing drug-drug
    interaction edge is admitted as P or N when that class is the argmax and
    its probability >= tau_ddi.  Existing edges always pass through unchanged.
    """
    if candidates is None:
        candidates = default_candidates(g, x, model.config.candidate_k)

    dti_pairs: list[tuple[int, int]] = []
    ddi_pairs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for i, j in candidates:
        ki, kj = g.kind_of(i), g.kind_of(j)
        if {ki, kj} == {EntityKind.DRUG, EntityKind.PROTEIN}:
            d, p = (i, j) if ki is EntityKind.DRUG else (j, i)
            if (d, p) in seen or g.has_edge(EdgeType.DTI, d, p):
                continue
            seen.add((d, p))
            dti_pairs.append((d, p))
        elif ki is EntityKind.DRUG and kj is EntityKind.DRUG and i != j:
            a, b = min(i, j), max(i, j)
            if (a, b) in seen:
                continue
            if g.has_edge(EdgeType.DDI_P, a, b) or g.has_edge(EdgeType.DDI_N, a, b):
                continue
            seen.add((a, b))
            ddi_pairs.append((a, b))

    pseudo: dict[EdgeType, set[tuple[int, int]]] = {
        EdgeType.DTI: set(),
        EdgeType.DDI_P: set(),
        EdgeType.DDI_N: set(),
    }
    with torch.no_grad():
        if dti_pairs:
            xa = torch.as_tensor(
                np.stack([g.features[d] for d, _ in dti_pairs]), dtype=model.torch_dtype
            )
            xb = torch.as_tensor(
                np.stack([g.features[p] for _, p in dti_pairs]), dtype=model.torch_dtype
            )
            scores = torch.sigmoid(model.dti.logits(xa, xb)).squeeze(-1).numpy()
            for (d, p), s in zip(dti_pairs, scores):
                if s >= model.config.tau_dti:
                    pseudo[EdgeType.DTI].add((d, p))
        if ddi_pairs:
            xa = torch.as_tensor(
                np.stack([g.features[a] for a, _ in ddi_pairs]), dtype=model.torch_dtype
            )
            xb = torch.as_tensor(
                np.stack([g.features[b] for _, b in ddi_pairs]), dtype=model.torch_dtype
            )
            probs = torch.softmax(model.ddi.logits(xa, xb), dim=-1).numpy()
            for (a, b), p3 in zip(ddi_pairs, probs):
                cls = int(np.argmax(p3))
                if cls == 0 and p3[0] >= model.config.tau_ddi:
                    pseudo[EdgeType.DDI_P] |= {(a, b), (b, a)}
                elif cls == 1 and p3[1] >= model.config.tau_ddi:
                    pseudo[EdgeType.DDI_N] |= {(a, b), (b, a)}
    return RefinedGraph(base=g, pseudo=pseudo)


# -- forward -------------------------------------------------------------------


def final_embeddings(
    model: SynergyModel,
    g: HetGraph,
    refined: Optional[RefinedGraph] = None,
    candidates: Optional[Sequence[tuple[int, int]]] = None,
) -> tuple[torch.Tensor, RefinedGraph]:
    """Post-GNN node features: one layer on the stored adjacency, refinement,
    then two layers on the refined adjacency."""
    x = project_features(g, model.projections)
    x1 = gat_forward(model.gat_layers[0], g, x)
    if refined is None:
        refined = refine_graph(model, g, x1, candidates=candidates)
    x2 = gat_forward(model.gat_layers[1], refined, x1)
    x3 = gat_forward(model.gat_layers[2], refined, x2)
    return x3, refined


def _cell_vector(
    g: HetGraph,
    x_star: torch.Tensor,
    profile: ExpressionProfile,
) -> torch.Tensor:
    rows, weights = [], []
    for pid in sorted(profile.weights):
        if pid not in g.index:
            raise UnknownProteinInProfile(
                f"profile {profile.cell_id!r}: {pid!r} is not a graph node"
            )
        idx = g.index[pid]
        if g.nodes[idx].kind is not EntityKind.PROTEIN:
            raise UnknownProteinInProfile(
                f"profile {profile.cell_id!r}: {pid!r} is not a protein node"
            )
        rows.append(idx)
        weights.append(profile.weights[pid])
    w = torch.as_tensor(np.array(weights), dtype=x_star.dtype)
    return w @ x_star[torch.as_tensor(np.array(rows, dtype=np.int64))]


def triple_probabilities(
    model: SynergyModel,
    g: HetGraph,
    x_star: torch.Tensor,
    cells: Mapping[str, ExpressionProfile],
    triples: Sequence[SynergyTriple],
    training: bool = False,
) -> torch.Tensor:
    """(B, 2) probabilities (antagonistic, synergistic) for a triple batch."""
    ia, ib = [], []
    for t in triples:
        for d in (t.drug_a, t.drug_b):
            if d not in g.index:
                raise UnknownDrug(f"drug {d!r} is not a graph node")
        ia.append(g.index[t.drug_a])
        ib.append(g.index[t.drug_b])
    cell_vecs: dict[str, torch.Tensor] = {}
    for t in triples:
        if t.cell_id in cell_vecs:
            continue
        if t.cell_id not in cells:
            raise UnknownCell(f"no expression profile for cell {t.cell_id!r}")
        cell_vecs[t.cell_id] = _cell_vector(g, x_star, cells[t.cell_id])
    xa = x_star[torch.as_tensor(np.array(ia, dtype=np.int64))]
    xb = x_star[torch.as_tensor(np.array(ib, dtype=np.int64))]
    xc = torch.stack([cell_vecs[t.cell_id] for t in triples])
    logits_ab = model.head(torch.cat([xa, xb, xc], dim=-1), training=training)
    probs = torch.softmax(logits_ab, dim=-1)
    if model.config.symmetric_pairs:
        logits_ba = model.head(torch.cat([xb, xa, xc], dim=-1), training=training)
        probs = 0.5 * (probs + torch.softmax(logits_ba, dim=-1))
    return probs


def forward_synergy(
    model: SynergyModel,
    g: HetGraph,
    cells: Mapping[str, ExpressionProfile],
    triple: SynergyTriple,
) -> np.ndarray:
    """Probability pair (antagonistic, synergistic) for one triple."""
    with torch.no_grad():
        x_star, _ = final_embeddings(model, g)
        probs = triple_probabilities(model, g, x_star, cells, [triple])
    return probs[0].numpy()


def score_triples(
    model: SynergyModel,
    g: HetGraph,
    cells: Mapping[str, ExpressionProfile],
    triples: Sequence[SynergyTriple],
    refined: Optional[RefinedGraph] = None,
) -> np.ndarray:
    """Batch eval-mode probabilities, sharing one graph forward pass."""
    if not triples:
        return np.zeros((0, 2))
    with torch.no_grad():
        x_star, _ = final_embeddings(model, g, refined=refined)
        probs = triple_probabilities(model, g, x_star, cells, triples)
    return probs.numpy()


# -- loss and training -----------------------------------------------------------


def cross_entropy_probs(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean two-class cross-entropy on probabilities, clipped at 1 - 1e-7."""
    p_true = probs.gather(1, labels.view(-1, 1)).squeeze(1)
    p_true = torch.clamp(p_true, min=PROB_EPS, max=1.0 - PROB_EPS)
    return -torch.log(p_true).mean()


@dataclass
class AuxBatches:
    """Fixed edge batches for the auxiliary predictor losses."""

    dti: Optional[tuple[torch.Tensor, torch.Tensor, torch.Tensor]] = None
    ddi: Optional[tuple[torch.Tensor, torch.Tensor, torch.Tensor]] = None


def build_aux_batches(
    model: SynergyModel,
    g: HetGraph,
    seed: int,
    max_pairs: int = 512,
) -> AuxBatches:
    """Sample known drug-target / drug-drug edges plus matched non-edges."""
    rng = np.random.default_rng(seed)
    dtype = model.torch_dtype
    aux = AuxBatches()

    def take(pairs: list, k: int) -> list:
        if len(pairs) <= k:
            return pairs
        idx = rng.choice(len(pairs), size=k, replace=False)
        return [pairs[i] for i in sorted(idx)]

    drugs = [int(i) for i in g.node_indices(EntityKind.DRUG)]
    proteins = [int(i) for i in g.node_indices(EntityKind.PROTEIN)]

    dti_pos = take(sorted(g.adjacency[EdgeType.DTI]), max_pairs)
    if dti_pos:
        pos_set = set(g.adjacency[EdgeType.DTI])
        complement = [(d, p) for d in drugs for p in proteins if (d, p) not in pos_set]
        if complement:
            idx = rng.choice(len(complement), size=min(len(dti_pos), len(complement)), replace=False)
            dti_neg = [complement[i] for i in sorted(idx)]
            pairs = dti_pos + dti_neg
            labels = [1] * len(dti_pos) + [0] * len(dti_neg)
            xa = torch.as_tensor(np.stack([g.features[a] for a, _ in pairs]), dtype=dtype)
            xb = torch.as_tensor(np.stack([g.features[b] for _, b in pairs]), dtype=dtype)
            aux.dti = (xa, xb, torch.as_tensor(np.array(labels, dtype=np.int64)))

    ddi_pos: list[tuple[int, int, int]] = []
    for cls, etype in ((0, EdgeType.DDI_P), (1, EdgeType.DDI_N)):
        for u, v in sorted(g.adjacency[etype]):
            if u < v:
                ddi_pos.append((u, v, cls))
    ddi_pos = take(ddi_pos, max_pairs)
    if ddi_pos:
        pos_set = set(g.adjacency[EdgeType.DDI_P]) | set(g.adjacency[EdgeType.DDI_N])
        complement = [
            (a, b) for ii, a in enumerate(drugs) for b in drugs[ii + 1 :] if (a, b) not in pos_set
        ]
        if complement:
            idx = rng.choice(len(complement), size=min(len(ddi_pos), len(complement)), replace=False)
            ddi_neg = [complement[i] for i in sorted(idx)]
            pairs = [(a, b) for a, b, _ in ddi_pos] + ddi_neg
            labels = [c for _, _, c in ddi_pos] + [2] * len(ddi_neg)
            xa = torch.as_tensor(np.stack([g.features[a] for a, _ in pairs]), dtype=dtype)
            xb = torch.as_tensor(np.stack([g.features[b] for _, b in pairs]), dtype=dtype)
            aux.ddi = (xa, xb, torch.as_tensor(np.array(labels, dtype=np.int64)))
    return aux


def _aux_loss(model: SynergyModel, aux: AuxBatches, training: bool) -> torch.Tensor:
    total = torch.zeros((), dtype=model.torch_dtype)
    if aux.dti is not None:
        xa, xb, y = aux.dti
        logits = model.dti.logits(xa, xb, training=training).squeeze(-1)
        total = total + F.binary_cross_entropy_with_logits(logits, y.to(logits.dtype))
    if aux.ddi is not None:
        xa, xb, y = aux.ddi
        logits = model.ddi.logits(xa, xb, training=training)
        total = total + F.cross_entropy(logits, y)
    return total


def loss_tensor(
    model: SynergyModel,
    g: HetGraph,
    cells: Mapping[str, ExpressionProfile],
    batch: Sequence[SynergyTriple],
    training: bool = False,
    refined: Optional[RefinedGraph] = None,
    aux: Optional[AuxBatches] = None,
    aux_weight: float = 0.0,
) -> torch.Tensor:
    if not batch:
        raise ValueError("empty batch")
    labels = []
    for t in batch:
        if t.label is None:
            raise ValueError(f"unlabelled triple ({t.drug_a},{t.drug_b},{t.cell_id})")
        labels.append(t.label)
    x_star, _ = final_embeddings(model, g, refined=refined)
    probs = triple_probabilities(model, g, x_star, cells, batch, training=training)
    total = cross_entropy_probs(probs, torch.as_tensor(np.array(labels, dtype=np.int64)))
    if aux is not None and aux_weight > 0.0:
        total = total + aux_weight * _aux_loss(model, aux, training)
    return total


def loss(
    model: SynergyModel,
    g: HetGraph,
    cells: Mapping[str, ExpressionProfile],
    batch: Sequence[SynergyTriple],
    refined: Optional[RefinedGraph] = None,
) -> float:
    """Eval-mode mean cross-entropy of a batch (no dropout, no aux terms)."""
    with torch.no_grad():
        value = loss_tensor(model, g, cells, batch, training=False, refined=refined)
    out = float(value)
    if not np.isfinite(out):
        raise NonFiniteLoss("synergy loss is not finite")
    return out


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-4
    batch_size: int = 0  # 0 = full batch
    seed: int = 0
    refine_every: int = 1
    variant: str = "full"  # "full" | "no-predictive"
    aux_weight: float = 0.1
    candidate_k: Optional[int] = None  # None: use the model's setting
    shuffle: bool = True

    def __post_init__(self):
        if self.variant not in ("full", "no-predictive"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.refine_every < 1:
            raise ValueError("refine_every must be >= 1")


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    pseudo_counts: list[int] = field(default_factory=list)
    variant: str = "full"

    def to_dict(self) -> dict:
        return {
            "epoch_losses": self.epoch_losses,
            "pseudo_counts": self.pseudo_counts,
            "variant": self.variant,
        }


def train(
    model: SynergyModel,
    g: HetGraph,
    cells: Mapping[str, ExpressionProfile],
    dataset: Sequence[SynergyTriple],
    config: TrainConfig,
) -> TrainReport:
    """Gradient-train all model parameters; deterministic under the seed.

    The refined adjacency is recomputed from the current predictor parameters
    every ``refine_every`` epochs.  The no-predictive variant never refines
    and leaves the predictors untouched.
    """
    if not dataset:
        raise ValueError("empty dataset")
    report = TrainReport(variant=config.variant)
    if config.epochs == 0:
        return report
    seed_all(config.seed)
    rng = np.random.default_rng(config.seed)

    no_predictive = config.variant == "no-predictive"
    aux = None
    params = (
        list(model.projections.parameters())
        + list(model.gat_layers.parameters())
        + list(model.head.parameters())
    )
    if not no_predictive and config.aux_weight > 0.0:
        aux = build_aux_batches(model, g, seed=config.seed)
        params += list(model.dti.parameters()) + list(model.ddi.parameters())
    opt = torch.optim.Adam(params, lr=config.lr)

    candidate_k = config.candidate_k
    if candidate_k is not None:
        saved_k, model.config.candidate_k = model.config.candidate_k, candidate_k

    try:
        n = len(dataset)
        bs = config.batch_size if config.batch_size > 0 else n
        refined = RefinedGraph(base=g, pseudo={})
        for epoch in range(config.epochs):
            if not no_predictive and epoch % config.refine_every == 0:
                with torch.no_grad():
                    x = project_features(g, model.projections)
                    x1 = gat_forward(model.gat_layers[0], g, x)
                    refined = refine_graph(model, g, x1)
                report.pseudo_counts.append(refined.pseudo_edge_count())
            elif no_predictive and epoch == 0:
                report.pseudo_counts.append(0)
            order = rng.permutation(n) if config.shuffle else np.arange(n)
            batch_losses = []
            for start in range(0, n, bs):
                batch = [dataset[i] for i in order[start : start + bs]]
                opt.zero_grad()
                value = loss_tensor(
                    model, g, cells, batch,
                    training=True, refined=refined, aux=aux, aux_weight=config.aux_weight,
                )
                if not torch.isfinite(value):
                    raise NonFiniteLoss(f"training loss non-finite at epoch {epoch}")
                value.backward()
                opt.step()
                batch_losses.append(float(value.detach()))
            report.epoch_losses.append(float(np.mean(batch_losses)))
    finally:
        if candidate_k is not None:
            model.config.candidate_k = saved_k
    return report
