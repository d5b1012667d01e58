"""Cell-line representation and drug-drug similarity edges.

A cell line is the weighted sum of the embeddings of its expressed proteins;
the same composition is applied once over the ingested protein embeddings and
once over the post-GNN protein rows.  Similarity edges connect two drugs when
their embedding distance is below the distance threshold or their fingerprint
Tanimoto similarity is above the similarity threshold (both comparisons
strict).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

import numpy as np

from .entities import Entity, EntityKind, EntityStore, Fingerprint
from .errors import (
    DimMismatch,
    EmptyProfile,
    KindMismatch,
    LengthMismatch,
    MissingProtein,
    ParseError,
    UnknownEntity,
)

log = logging.getLogger(__name__)

EXPRESSION_HEADER = "cell_id\tprotein_id\tweight"


@dataclass
class ExpressionProfile:
    """Sparse cell-line-to-protein weight vector."""

    cell_id: str
    weights: dict[str, float]

    def __post_init__(self):
        for pid, w in self.weights.items():
            if not np.isfinite(w):
                raise ValueError(f"profile {self.cell_id!r}: weight for {pid!r} is not finite")


@dataclass(frozen=True)
class CellLineEmbedding:
    cell_id: str
    values: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def compose_cell_embedding(
    profile: ExpressionProfile,
    table: Mapping[str, np.ndarray],
) -> CellLineEmbedding:
    """Weighted sum of protein vectors: ``sum_i w[i] * table[i]``."""
    if not profile.weights:
        raise EmptyProfile(f"profile {profile.cell_id!r} has no weights")
    keys = sorted(profile.weights)
    missing = [k for k in keys if k not in table]
    if missing:
        raise MissingProtein(
            f"profile {profile.cell_id!r}: proteins absent from table: {missing[:5]}"
        )
    mat = np.stack([np.asarray(table[k], dtype=np.float64) for k in keys])
    if mat.ndim != 2:
        raise DimMismatch("table vectors must share one dimension")
    w = np.array([profile.weights[k] for k in keys], dtype=np.float64)
    return CellLineEmbedding(cell_id=profile.cell_id, values=w @ mat)


def protein_embedding_table(store: EntityStore) -> dict[str, np.ndarray]:
    """Ingested embeddings of every protein in the store, keyed by id."""
    return {e.id: store.embedding_of(e) for e in store.entities(EntityKind.PROTEIN)}


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a AND b| / |a OR b|; 0.0 when both fingerprints are all-zero."""
    if a.length != b.length:
        raise LengthMismatch(f"fingerprint lengths differ: {a.length} vs {b.length}")
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 0.0
    inter = int(np.logical_and(a.bits, b.bits).sum())
    return inter / union


def embedding_distance(a: np.ndarray, b: np.ndarray, metric: str = "euclidean") -> float:
    """Distance between two raw drug embeddings (default L2)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    if metric == "euclidean":
        return float(np.sqrt(((a - b) ** 2).sum()))
    if metric == "cosine":
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            return 1.0
        return float(1.0 - (a @ b) / (na * nb))
    raise ValueError(f"unknown metric {metric!r}")


def similarity_edges(
    store: EntityStore,
    drugs: Optional[Iterable[Entity | str]] = None,
    dist_threshold: float = 90.0,
    tanimoto_threshold: float = 0.62,
    metric: str = "euclidean",
) -> set[tuple[str, str]]:
    """Unordered drug pairs passing the distance-or-Tanimoto test.

    A pair is included iff distance < dist_threshold OR tanimoto >
    tanimoto_threshold (strict on both sides).  Pairs where either drug lacks
    a fingerprint are tested on distance alone.  Returned pairs are canonical
    (id_a < id_b).
    """
    if drugs is None:
        ents = list(store.entities(EntityKind.DRUG))
    else:
        ents = [store._as_entity(d) for d in drugs]
    ents = sorted(ents, key=lambda e: e.id)
    embs = [store.embedding_of(e) for e in ents]
    fps = [store.fingerprint_of(e) for e in ents]
    out: set[tuple[str, str]] = set()
    skipped_fp = 0
    for i in range(len(ents)):
        for j in range(i + 1, len(ents)):
            hit = embedding_distance(embs[i], embs[j], metric) < dist_threshold
            if not hit:
                if fps[i] is not None and fps[j] is not None:
                    hit = tanimoto(fps[i], fps[j]) > tanimoto_threshold
                else:
                    skipped_fp += 1
            if hit:
                out.add((ents[i].id, ents[j].id))
    if skipped_fp:
        log.info("similarity_edges: %d pairs tested on distance only (missing fingerprints)", skipped_fp)
    return out


def load_expression_tsv(
    store: EntityStore,
    path,
    excluded_proteins: Iterable[str] = (),
    l1_normalize: bool = False,
) -> dict[str, ExpressionProfile]:
    """Load sparse expression triplets into per-cell profiles.

    Protein ids must resolve to Protein entities; ids on the excluded list are
    dropped (the configured stand-in for upstream column deletions).  Weights
    are used as-is unless ``l1_normalize`` rescales each profile to unit
    absolute mass (a stability switch for synthetic corpora).
    """
    excluded = set(excluded_proteins)
    weights: dict[str, dict[str, float]] = {}
    n_excluded = 0
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != EXPRESSION_HEADER:
        raise ParseError(path, 1, f"expected header {EXPRESSION_HEADER!r}")
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(path, line_no, f"expected 3 columns, got {len(fields)}")
        cell_id, protein_id, weight_s = (f.strip() for f in fields)
        if protein_id in excluded:
            n_excluded += 1
            continue
        try:
            entity = store.resolve(protein_id)
        except UnknownEntity:
            raise ParseError(path, line_no, f"unknown protein id {protein_id!r}") from None
        if entity.kind is not EntityKind.PROTEIN:
            raise KindMismatch(
                f"{path}:{line_no}: {protein_id!r} is a {entity.kind.value}, not a Protein"
            )
        try:
            w = float(weight_s)
        except ValueError:
            raise ParseError(path, line_no, f"bad weight {weight_s!r}") from None
        weights.setdefault(cell_id, {})[entity.id] = w
    if n_excluded:
        log.info("expression load: dropped %d rows on the excluded-protein list", n_excluded)
    if l1_normalize:
        for w in weights.values():
            mass = sum(abs(v) for v in w.values())
            if mass > 0:
                for k in w:
                    w[k] /= mass
    return {cid: ExpressionProfile(cell_id=cid, weights=w) for cid, w in weights.items()}
