"""Pre-trainable pairwise edge predictors.

Two flavours share one architecture: a binary drug-target scorer and a
three-class drug-drug scorer (classes: P, N, no-edge).  Each input embedding
runs through its own attention branch as a single-token sequence, the branch
outputs are concatenated, passed through joint attention blocks and an MLP
head.  Both are pre-trained standalone and later drive pseudo-edge generation
inside graph refinement.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, asdict
from typing import Mapping, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from .errors import DimMismatch, InsufficientUniverse, NonFiniteLoss
from .layers import AttentionBlock, Mlp, resolve_dtype, seed_all, to_tensor
from .metrics import auroc_score

DDI_CLASSES = ("P", "N", "no-edge")


@dataclass
class PredictorConfig:
    """Shapes and knobs of one edge predictor."""

    kind: str  # "DTI" | "DDI"
    dim_a: int  # drug embedding width
    dim_b: int  # protein width (DTI) or drug width (DDI)
    branch_heads: int = 8
    joint_heads: int = 12
    branch_blocks: int = 1
    joint_blocks: int = 2
    head_hidden: tuple[int, ...] = (2048, 256)
    ffn_mult: int = 2
    dropout: float = 0.2
    symmetric: Optional[bool] = None  # default: True for DDI, False for DTI
    dtype: str = "float64"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("DTI", "DDI"):
            raise ValueError(f"kind must be DTI or DDI, got {self.kind!r}")
        if self.symmetric is None:
            self.symmetric = self.kind == "DDI"
        if self.kind == "DDI" and self.dim_a != self.dim_b:
            raise ValueError("DDI predictor needs equal branch widths")
        self.head_hidden = tuple(self.head_hidden)

    @property
    def out_dim(self) -> int:
        return 1 if self.kind == "DTI" else 3

    def to_meta(self) -> dict:
        meta = asdict(self)
        meta["head_hidden"] = list(self.head_hidden)
        return meta


class EdgePredictor(nn.Module):
    """Pairwise scorer; parameters initialized from the config seed."""

    def __init__(self, config: PredictorConfig):
        super().__init__()
        self.config = config
        self.kind = config.kind
        dtype = resolve_dtype(config.dtype)
        self.torch_dtype = dtype
        rng = np.random.default_rng(config.seed)
        joint_width = config.dim_a + config.dim_b
        self.branch_a = nn.ModuleList(
            AttentionBlock(config.dim_a, config.branch_heads, rng, config.ffn_mult, dtype)
            for _ in range(config.branch_blocks)
        )
        self.branch_b = nn.ModuleList(
            AttentionBlock(config.dim_b, config.branch_heads, rng, config.ffn_mult, dtype)
            for _ in range(config.branch_blocks)
        )
        self.joint = nn.ModuleList(
            AttentionBlock(joint_width, config.joint_heads, rng, config.ffn_mult, dtype)
            for _ in range(config.joint_blocks)
        )
        self.head = Mlp(
            joint_width,
            config.head_hidden,
            config.out_dim,
            rng,
            dtype=dtype,
            activation="relu",
            dropout=config.dropout,
        )

    def _encode(self, xa: torch.Tensor, xb: torch.Tensor, training: bool) -> torch.Tensor:
        a = xa.unsqueeze(1)
        b = xb.unsqueeze(1)
        for block in self.branch_a:
            a = block(a)
        for block in self.branch_b:
            b = block(b)
        j = torch.cat([a, b], dim=-1)
        for block in self.joint:
            j = block(j)
        return self.head(j.squeeze(1), training=training)

    def logits(self, xa: torch.Tensor, xb: torch.Tensor, training: bool = False) -> torch.Tensor:
        """(B, out_dim) logits; DDI averages over both input orders when
        symmetric mode is on."""
        if xa.shape[-1] != self.config.dim_a or xb.shape[-1] != self.config.dim_b:
            raise DimMismatch(
                f"{self.kind} predictor expects widths "
                f"({self.config.dim_a},{self.config.dim_b}), got "
                f"({xa.shape[-1]},{xb.shape[-1]})"
            )
        out = self._encode(xa, xb, training)
        if self.config.symmetric:
            out = 0.5 * (out + self._encode(xb, xa, training))
        return out


def _as_batch(predictor: EdgePredictor, vec) -> tuple[torch.Tensor, bool]:
    t = to_tensor(vec, predictor.torch_dtype)
    if t.ndim == 1:
        return t.unsqueeze(0), True
    return t, False


def predict_dti(predictor: EdgePredictor, drug_emb, protein_emb):
    """Interaction score in (0, 1); accepts single vectors or batches."""
    if predictor.kind != "DTI":
        raise ValueError("predict_dti needs a DTI predictor")
    xa, single = _as_batch(predictor, drug_emb)
    xb, _ = _as_batch(predictor, protein_emb)
    with torch.no_grad():
        score = torch.sigmoid(predictor.logits(xa, xb)).squeeze(-1)
    out = score.numpy()
    return float(out[0]) if single else out


def predict_ddi(predictor: EdgePredictor, drug_a_emb, drug_b_emb):
    """Probability triple over (P, N, no-edge); rows sum to one."""
    if predictor.kind != "DDI":
        raise ValueError("predict_ddi needs a DDI predictor")
    xa, single = _as_batch(predictor, drug_a_emb)
    xb, _ = _as_batch(predictor, drug_b_emb)
    with torch.no_grad():
        probs = torch.softmax(predictor.logits(xa, xb), dim=-1)
    out = probs.numpy()
    return out[0] if single else out


# -- datasets -----------------------------------------------------------------


def sample_negatives(
    positives: set[tuple[str, str]],
    universe_a: Sequence[str],
    universe_b: Sequence[str],
    factor: int = 3,
    seed: int = 0,
    unordered: bool = False,
    count: Optional[int] = None,
) -> set[tuple[str, str]]:
    """Uniform sample, without replacement, from the non-positive pairs.

    Ordered mode draws from universe_a x universe_b; unordered mode (for
    drug-drug pairs) requires the two universes to coincide and draws
    canonical pairs (a < b), treating positives as unordered.  ``count``
    overrides the ``factor * len(positives)`` sample size.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    ua = sorted(set(universe_a))
    ub = sorted(set(universe_b))
    if unordered:
        if ua != ub:
            raise ValueError("unordered sampling needs one shared universe")
        pos = {tuple(sorted(p)) for p in positives}
        total = len(ua) * (len(ua) - 1) // 2
    else:
        pos = set(positives)
        total = len(ua) * len(ub)
    need = factor * len(pos) if count is None else count
    if total - len(pos) < need:
        raise InsufficientUniverse(
            f"universe holds {total - len(pos)} non-positive pairs, need {need}"
        )
    rng = np.random.default_rng(seed)
    # Rejection sampling is uniform-without-replacement; fall back to full
    # enumeration when the complement is small relative to the request.
    if total <= 200_000 or 4 * need >= total - len(pos):
        if unordered:
            complement = [
                (ua[i], ua[j])
                for i in range(len(ua))
                for j in range(i + 1, len(ua))
                if (ua[i], ua[j]) not in pos
            ]
        else:
            complement = [p for p in itertools.product(ua, ub) if p not in pos]
        idx = rng.choice(len(complement), size=need, replace=False)
        return {complement[i] for i in idx}
    chosen: set[tuple[str, str]] = set()
    while len(chosen) < need:
        i = int(rng.integers(len(ua)))
        j = int(rng.integers(len(ub)))
        if unordered:
            if i == j:
                continue
            pair = (ua[min(i, j)], ua[max(i, j)])
        else:
            pair = (ua[i], ub[j])
        if pair in pos or pair in chosen:
            continue
        chosen.add(pair)
    return chosen


@dataclass
class PairDataset:
    """Positive pairs (with optional class labels) plus sampled negatives and
    the embedding tables to resolve them."""

    positives: list[tuple[str, str, Optional[str]]]
    negatives: list[tuple[str, str]]
    emb_a: Mapping[str, np.ndarray]
    emb_b: Mapping[str, np.ndarray]
    seed: int = 0
    unordered: bool = False

    def __post_init__(self):
        pos_pairs = {(a, b) for a, b, _ in self.positives}
        overlap = pos_pairs & set(self.negatives)
        if overlap:
            raise ValueError(f"negatives intersect positives: {sorted(overlap)[:3]}")
        self.positives = sorted(self.positives, key=lambda p: (p[0], p[1]))
        self.negatives = sorted(self.negatives)

    def __len__(self) -> int:
        return len(self.positives) + len(self.negatives)


def build_pair_dataset(
    positives: Sequence[tuple[str, str] | tuple[str, str, str]],
    emb_a: Mapping[str, np.ndarray],
    emb_b: Mapping[str, np.ndarray],
    factor: int = 3,
    seed: int = 0,
    unordered: bool = False,
) -> PairDataset:
    """Normalize positives, sample ``factor`` negatives per positive."""
    norm: list[tuple[str, str, Optional[str]]] = []
    for p in positives:
        if len(p) == 2:
            norm.append((p[0], p[1], None))
        else:
            norm.append((p[0], p[1], p[2]))
    neg = sample_negatives(
        {(a, b) for a, b, _ in norm},
        sorted(emb_a),
        sorted(emb_b),
        factor=factor,
        seed=seed,
        unordered=unordered,
    )
    return PairDataset(
        positives=norm,
        negatives=sorted(neg),
        emb_a=emb_a,
        emb_b=emb_b,
        seed=seed,
        unordered=unordered,
    )


# -- pretraining --------------------------------------------------------------


@dataclass
class PretrainReport:
    losses: list[float] = field(default_factory=list)
    final_auroc: Optional[float] = None
    n_train: int = 0
    n_heldout: int = 0

    def to_dict(self) -> dict:
        return {
            "losses": self.losses,
            "final_auroc": self.final_auroc,
            "n_train": self.n_train,
            "n_heldout": self.n_heldout,
        }


def _pair_tensors(
    predictor: EdgePredictor,
    data: PairDataset,
    positives: Sequence[tuple[str, str, Optional[str]]],
    negatives: Sequence[tuple[str, str]],
):
    dtype = predictor.torch_dtype
    rows_a, rows_b, labels = [], [], []
    for a, b, lab in positives:
        rows_a.append(np.asarray(data.emb_a[a], dtype=np.float64))
        rows_b.append(np.asarray(data.emb_b[b], dtype=np.float64))
        if predictor.kind == "DTI":
            labels.append(1)
        else:
            if lab not in ("P", "N"):
                raise ValueError(f"DDI positive ({a},{b}) needs a P or N label, got {lab!r}")
            labels.append(DDI_CLASSES.index(lab))
    for a, b in negatives:
        rows_a.append(np.asarray(data.emb_a[a], dtype=np.float64))
        rows_b.append(np.asarray(data.emb_b[b], dtype=np.float64))
        labels.append(0 if predictor.kind == "DTI" else 2)
    xa = torch.as_tensor(np.stack(rows_a), dtype=dtype)
    xb = torch.as_tensor(np.stack(rows_b), dtype=dtype)
    y = torch.as_tensor(np.array(labels, dtype=np.int64))
    return xa, xb, y


def _predictor_loss(predictor: EdgePredictor, xa, xb, y, training: bool) -> torch.Tensor:
    logits = predictor.logits(xa, xb, training=training)
    if predictor.kind == "DTI":
        return nn.functional.binary_cross_entropy_with_logits(
            logits.squeeze(-1), y.to(logits.dtype)
        )
    return nn.functional.cross_entropy(logits, y)


def edge_auroc(predictor: EdgePredictor, xa, xb, y) -> Optional[float]:
    """Edge-vs-no-edge ranking quality on a labelled pair batch."""
    with torch.no_grad():
        logits = predictor.logits(xa, xb)
        if predictor.kind == "DTI":
            scores = torch.sigmoid(logits.squeeze(-1)).numpy()
            is_edge = y.numpy()
        else:
            probs = torch.softmax(logits, dim=-1).numpy()
            scores = 1.0 - probs[:, 2]
            is_edge = (y.numpy() != 2).astype(np.int64)
    if len(set(is_edge.tolist())) < 2:
        return None
    return auroc_score(scores, is_edge)


def pretrain_predictor(
    predictor: EdgePredictor,
    data: PairDataset,
    epochs: int,
    lr: float = 1e-4,
    holdout_frac: float = 0.2,
    batch_size: int = 0,
    seed: Optional[int] = None,
    resample_negatives: bool = False,
) -> PretrainReport:
    """Gradient-train the predictor on cross-entropy; returns the loss curve
    and held-out ranking AUROC.  Deterministic under the seed.

    The held-out split is stratified over positives and negatives and stays
    fixed.  Negatives are a fixed set by default; ``resample_negatives``
    redraws the training negatives every epoch (held-out pairs excluded).
    """
    if len(data) == 0:
        raise ValueError("empty pair dataset")
    seed = data.seed if seed is None else seed
    seed_all(seed)
    rng = np.random.default_rng(seed)

    pos_perm = rng.permutation(len(data.positives))
    neg_perm = rng.permutation(len(data.negatives))
    n_pos_held = int(round(holdout_frac * len(data.positives)))
    n_neg_held = int(round(holdout_frac * len(data.negatives)))
    pos_held = [data.positives[i] for i in pos_perm[:n_pos_held]]
    pos_train = [data.positives[i] for i in pos_perm[n_pos_held:]]
    neg_held = [data.negatives[i] for i in neg_perm[:n_neg_held]]
    neg_train = [data.negatives[i] for i in neg_perm[n_neg_held:]]
    report = PretrainReport(
        n_train=len(pos_train) + len(neg_train),
        n_heldout=len(pos_held) + len(neg_held),
    )

    pos_pairs = {(a, b) for a, b, _ in data.positives}
    blocked = pos_pairs | set(neg_held)
    opt = torch.optim.Adam(predictor.parameters(), lr=lr)
    xa, xb, y = _pair_tensors(predictor, data, pos_train, neg_train)
    for epoch in range(epochs):
        if resample_negatives and epoch > 0:
            fresh = sorted(
                sample_negatives(
                    blocked,
                    sorted(data.emb_a),
                    sorted(data.emb_b),
                    seed=seed + 1000 + epoch,
                    unordered=data.unordered,
                    count=len(neg_train),
                )
            )
            xa, xb, y = _pair_tensors(predictor, data, pos_train, fresh)
        n = xa.shape[0]
        perm = rng.permutation(n)
        bs = batch_size if batch_size > 0 else n
        epoch_losses = []
        for start in range(0, n, bs):
            idx = torch.as_tensor(perm[start : start + bs])
            opt.zero_grad()
            loss = _predictor_loss(predictor, xa[idx], xb[idx], y[idx], training=True)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"{predictor.kind} pretraining loss became non-finite")
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
        report.losses.append(float(np.mean(epoch_losses)))
    if report.n_heldout > 0:
        ha, hb, hy = _pair_tensors(predictor, data, pos_held, neg_held)
        report.final_auroc = edge_auroc(predictor, ha, hb, hy)
    return report
