"""Orchestration: cross-validation, confidence-filtered self-training, and
the inference path that handles drugs absent from the training graph.

Self-training scores a candidate pool, promotes predictions whose confidence
exceeds the threshold (strictly) to pseudo-labels, caps their number at the
size of the original set, retrains from the current parameters, and stops
once the held-out ranking gain falls below ``min_gain`` or the round budget
runs out.

Inference on an unseen drug inserts a transient node connected by computed
drug-similarity edges, lets refinement propose pseudo edges for it, and runs
the usual forward pass; the training graph itself is never modified.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import torch

from .entities import Entity, EntityKind, EntityStore, Fingerprint
from .errors import (
    MissingEmbedding,
    ParseError,
    TooFewSamples,
    UnknownCell,
    UnknownDrug,
    UnknownEntity,
)
from .featurize import ExpressionProfile, embedding_distance, tanimoto
from .graph import EdgeType, HetGraph
from .metrics import MetricsReport, auroc_score, evaluate
from .model import (
    SynergyModel,
    SynergyTriple,
    TrainConfig,
    final_embeddings,
    forward_synergy,
    score_triples,
    train,
    triple_probabilities,
)

log = logging.getLogger(__name__)

TRIPLES_HEADERS = (
    "drug_a\tdrug_b\tcell_id\tlabel",
    "drug_a\tdrug_b\tcell_id\tscore",
)
PREDICTIONS_HEADER = (
    "drug_a\tdrug_b\tcell_id\tp_antagonistic\tp_synergistic\tpredicted_label\tprovenance"
)


@dataclass
class LabeledSet:
    """Triples plus per-triple provenance: 'original' or 'pseudo' (with the
    admitting confidence)."""

    triples: list[SynergyTriple]
    provenance: list[str] = field(default_factory=list)
    confidence: list[Optional[float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.provenance:
            self.provenance = ["original"] * len(self.triples)
        if not self.confidence:
            self.confidence = [None] * len(self.triples)
        if not (len(self.triples) == len(self.provenance) == len(self.confidence)):
            raise ValueError("triples, provenance, and confidence must align")

    def __len__(self) -> int:
        return len(self.triples)

    def originals(self) -> list[SynergyTriple]:
        return [t for t, p in zip(self.triples, self.provenance) if p == "original"]

    def extended(self, pseudo: list[tuple[SynergyTriple, float]]) -> "LabeledSet":
        return LabeledSet(
            triples=self.triples + [t for t, _ in pseudo],
            provenance=self.provenance + ["pseudo"] * len(pseudo),
            confidence=self.confidence + [c for _, c in pseudo],
        )


def load_triples_tsv(
    store: EntityStore,
    cells: Mapping[str, ExpressionProfile],
    path,
    binarize_at: Optional[float] = None,
) -> list[SynergyTriple]:
    """Read labelled triples; a score column is thresholded at ``binarize_at``
    (label 1 when score > cut)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] not in TRIPLES_HEADERS:
        raise ParseError(path, 1, f"expected one of headers {TRIPLES_HEADERS}")
    is_score = lines[0] == TRIPLES_HEADERS[1]
    if is_score and binarize_at is None:
        raise ParseError(path, 1, "a score column requires a binarize threshold")
    out = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ParseError(path, line_no, f"expected 4 columns, got {len(fields)}")
        a_id, b_id, cell_id, last = (f.strip() for f in fields)
        try:
            a = store.resolve(a_id)
            b = store.resolve(b_id)
        except UnknownEntity as exc:
            raise UnknownDrug(f"{path}:{line_no}: {exc}") from None
        for ent in (a, b):
            if ent.kind is not EntityKind.DRUG:
                raise ParseError(path, line_no, f"{ent.id!r} is a {ent.kind.value}, not a Drug")
        if cell_id not in cells:
            raise UnknownCell(f"{path}:{line_no}: no expression profile for {cell_id!r}")
        if is_score:
            try:
                label = 1 if float(last) > binarize_at else 0
            except ValueError:
                raise ParseError(path, line_no, f"bad score {last!r}") from None
        else:
            if last not in ("0", "1"):
                raise ParseError(path, line_no, f"label must be 0 or 1, got {last!r}")
            label = int(last)
        out.append(SynergyTriple(drug_a=a.id, drug_b=b.id, cell_id=cell_id, label=label))
    return out


# -- cross-validation ------------------------------------------------------------


@dataclass
class CVReport:
    per_fold: list[MetricsReport]
    mean: dict

    def to_dict(self) -> dict:
        return {"per_fold": [r.to_dict() for r in self.per_fold], "mean": self.mean}


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Random partition into ``folds`` parts with sizes differing by at most 1."""
    rng = np.random.default_rng(seed)
    return np.array_split(rng.permutation(n), folds)


def _mean_reports(reports: Sequence[MetricsReport]) -> dict:
    out = {}
    for key in ("au_roc", "au_prc", "acc", "bacc", "macro_precision", "macro_f1"):
        vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        out[key] = float(np.mean(vals)) if vals else None
    out["n"] = int(sum(r.n for r in reports))
    out["folds"] = len(reports)
    return out


def cross_validate(
    model_factory: Callable[[int], SynergyModel],
    g: HetGraph,
    cells: Mapping[str, ExpressionProfile],
    dataset: Sequence[SynergyTriple],
    folds: int = 10,
    seed: int = 0,
    train_config: Optional[TrainConfig] = None,
    threshold: float = 0.5,
) -> CVReport:
    """Hold one fold out at a time, train on the rest, evaluate the fold."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if len(dataset) < folds:
        raise TooFewSamples(f"{len(dataset)} samples for {folds} folds")
    base_config = train_config or TrainConfig()
    parts = fold_indices(len(dataset), folds, seed)
    reports = []
    for k, test_idx in enumerate(parts):
        test_set = set(int(i) for i in test_idx)
        train_triples = [t for i, t in enumerate(dataset) if i not in test_set]
        test_triples = [dataset[int(i)] for i in test_idx]
        fold_seed = seed + 1000 * (k + 1)
        model = model_factory(fold_seed)
        cfg = TrainConfig(**{**base_config.__dict__, "seed": fold_seed})
        train(model, g, cells, train_triples, cfg)
        probs = score_triples(model, g, cells, test_triples)
        labels = [t.label for t in test_triples]
        reports.append(evaluate(probs[:, 1], labels, threshold=threshold))
    return CVReport(per_fold=reports, mean=_mean_reports(reports))


# -- self-training ----------------------------------------------------------------


@dataclass
class SelfTrainConfig:
    conf_threshold: float = 0.8
    max_rounds: int = 5
    min_gain: float = 0.002
    seed: int = 0
    holdout_frac: float = 0.2


@dataclass
class RoundReport:
    round: int
    admitted: int
    mean_confidence: Optional[float]
    heldout_auroc: Optional[float]
    reverted: bool = False

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "admitted": self.admitted,
            "mean_confidence": self.mean_confidence,
            "heldout_auroc": self.heldout_auroc,
            "reverted": self.reverted,
        }


def _heldout_auroc(model, g, cells, holdout) -> Optional[float]:
    if not holdout:
        return None
    labels = [t.label for t in holdout]
    if len(set(labels)) < 2:
        return None
    probs = score_triples(model, g, cells, holdout)
    return auroc_score(probs[:, 1], labels)


def self_train(
    model: SynergyModel,
    g: HetGraph,
    cells: Mapping[str, ExpressionProfile],
    labeled: LabeledSet,
    space: Union[Sequence[SynergyTriple], Callable[[], Sequence[SynergyTriple]]],
    config: SelfTrainConfig,
    train_config: Optional[TrainConfig] = None,
    holdout: Optional[Sequence[SynergyTriple]] = None,
) -> tuple[SynergyModel, list[RoundReport]]:
    """Confidence-filtered pseudo-labelling rounds on an already-trained model.

    Per round: score the candidate pool; admit argmax labels whose confidence
    strictly exceeds ``conf_threshold``; keep at most ``len(labeled)`` of them
    (highest confidence first); retrain on the union from the current
    parameters.  Stops on an empty admission, an AUROC gain below
    ``min_gain``, or after ``max_rounds``.  A final retrain whose gain falls
    short of ``min_gain`` is rolled back, so the returned model is the last
    one that still improved.
    """
    t_cfg = train_config or TrainConfig()
    candidates = list(space() if callable(space) else space)
    if holdout is None:
        rng = np.random.default_rng(config.seed)
        order = rng.permutation(len(labeled.triples))
        n_held = int(round(config.holdout_frac * len(order)))
        holdout = [labeled.triples[int(i)] for i in order[:n_held]]
        work = [labeled.triples[int(i)] for i in order[n_held:]]
        labeled = LabeledSet(triples=work)
    else:
        holdout = list(holdout)

    seen = {(t.drug_a, t.drug_b, t.cell_id) for t in labeled.triples}
    seen |= {(t.drug_b, t.drug_a, t.cell_id) for t in labeled.triples}
    seen |= {(t.drug_a, t.drug_b, t.cell_id) for t in holdout}
    seen |= {(t.drug_b, t.drug_a, t.cell_id) for t in holdout}
    pool = [t for t in candidates if (t.drug_a, t.drug_b, t.cell_id) not in seen]

    reports: list[RoundReport] = []
    current = labeled
    cap = len(labeled)  # pseudo-label budget: the original set size
    prev_auroc = _heldout_auroc(model, g, cells, holdout)
    for rnd in range(1, config.max_rounds + 1):
        admitted: list[tuple[SynergyTriple, float]] = []
        if pool:
            probs = score_triples(model, g, cells, pool)
            conf = probs.max(axis=1)
            labels = probs.argmax(axis=1)
            order = np.lexsort((np.arange(len(pool)), -conf))
            for i in order:
                if len(admitted) >= cap:
                    break
                if conf[i] > config.conf_threshold:
                    t = pool[int(i)]
                    admitted.append(
                        (
                            SynergyTriple(t.drug_a, t.drug_b, t.cell_id, int(labels[i])),
                            float(conf[i]),
                        )
                    )
        for _, c in admitted:
            assert c > config.conf_threshold
        assert len(admitted) <= cap

        if not admitted:
            reports.append(
                RoundReport(round=rnd, admitted=0, mean_confidence=None, heldout_auroc=prev_auroc)
            )
            break

        current = current.extended(admitted)
        admitted_keys = {(t.drug_a, t.drug_b, t.cell_id) for t, _ in admitted}
        pool = [t for t in pool if (t.drug_a, t.drug_b, t.cell_id) not in admitted_keys]
        snapshot = [p.detach().clone() for p in model.parameters()]
        cfg = TrainConfig(**{**t_cfg.__dict__, "seed": t_cfg.seed + rnd})
        train(model, g, cells, current.triples, cfg)
        auroc = _heldout_auroc(model, g, cells, holdout)
        report = RoundReport(
            round=rnd,
            admitted=len(admitted),
            mean_confidence=float(np.mean([c for _, c in admitted])),
            heldout_auroc=auroc,
        )
        if auroc is not None and prev_auroc is not None and auroc - prev_auroc < config.min_gain:
            with torch.no_grad():
                for p, snap in zip(model.parameters(), snapshot):
                    p.copy_(snap)
            report.reverted = True
            reports.append(report)
            break
        reports.append(report)
        prev_auroc = auroc if auroc is not None else prev_auroc
    return model, reports


def generate_candidate_triples(
    g: HetGraph,
    cells: Mapping[str, ExpressionProfile],
    exclude: Iterable[SynergyTriple],
    budget: int,
    seed: int = 0,
) -> list[SynergyTriple]:
    """Seeded random unlabelled (drug, drug, cell) triples outside ``exclude``."""
    drugs = sorted(g.nodes[int(i)].id for i in g.node_indices(EntityKind.DRUG))
    cell_ids = sorted(cells)
    if len(drugs) < 2 or not cell_ids:
        return []
    seen = set()
    for t in exclude:
        seen.add((t.drug_a, t.drug_b, t.cell_id))
        seen.add((t.drug_b, t.drug_a, t.cell_id))
    rng = np.random.default_rng(seed)
    out: list[SynergyTriple] = []
    attempts = 0
    max_attempts = 50 * budget + 100
    while len(out) < budget and attempts < max_attempts:
        attempts += 1
        i, j = rng.choice(len(drugs), size=2, replace=False)
        c = cell_ids[int(rng.integers(len(cell_ids)))]
        key = (drugs[int(i)], drugs[int(j)], c)
        if key in seen or (key[1], key[0], key[2]) in seen:
            continue
        seen.add(key)
        seen.add((key[1], key[0], key[2]))
        out.append(SynergyTriple(drug_a=key[0], drug_b=key[1], cell_id=c, label=None))
    return out


# -- inference --------------------------------------------------------------------


@dataclass
class DrugRecord:
    """Inference-side drug: identifier, raw embedding, optional fingerprint."""

    id: str
    embedding: Optional[np.ndarray] = None
    fingerprint: Optional[Fingerprint] = None


@dataclass
class InferenceReport:
    """What the unseen-drug path did: transient nodes and the edges created
    for them (similarity plus pseudo)."""

    transient_nodes: list[str] = field(default_factory=list)
    similarity_edges: list[tuple[str, str]] = field(default_factory=list)
    pseudo_edges: list[tuple[str, str, str]] = field(default_factory=list)

    def summary(self) -> str:
        if not self.transient_nodes:
            return "known"
        return (
            f"transient={','.join(self.transient_nodes)}"
            f";sim={len(self.similarity_edges)};pseudo={len(self.pseudo_edges)}"
        )

    def to_dict(self) -> dict:
        return {
            "transient_nodes": self.transient_nodes,
            "similarity_edges": [list(e) for e in self.similarity_edges],
            "pseudo_edges": [list(e) for e in self.pseudo_edges],
        }


def _extend_graph(
    model: SynergyModel,
    g: HetGraph,
    unknown: Sequence[DrugRecord],
    dist_threshold: float,
    tanimoto_threshold: float,
    metric: str,
    store: Optional[EntityStore] = None,
    report: Optional[InferenceReport] = None,
) -> HetGraph:
    """New graph with one transient drug node per record plus computed
    similarity edges; ``g`` itself is untouched."""
    nodes = list(g.nodes)
    features = list(g.features)
    adjacency = {t: set(pairs) for t, pairs in g.adjacency.items()}
    drug_idx = [int(i) for i in g.node_indices(EntityKind.DRUG)]

    new_indices = []
    for rec in unknown:
        if rec.embedding is None:
            raise MissingEmbedding(f"unseen drug {rec.id!r} has no embedding")
        emb = np.asarray(rec.embedding, dtype=np.float64).reshape(-1)
        if emb.shape[0] != model.config.drug_dim:
            raise MissingEmbedding(
                f"unseen drug {rec.id!r}: embedding dim {emb.shape[0]} != {model.config.drug_dim}"
            )
        nodes.append(Entity(id=rec.id, kind=EntityKind.DRUG))
        features.append(emb)
        new_indices.append(len(nodes) - 1)
        if report is not None:
            report.transient_nodes.append(rec.id)

    fp_of: dict[int, Optional[Fingerprint]] = {}
    for i in drug_idx:
        fp_of[i] = store.fingerprint_of(nodes[i].id) if store is not None else None
    for rec, i in zip(unknown, new_indices):
        fp_of[i] = rec.fingerprint

    def similar(i: int, j: int) -> bool:
        if embedding_distance(features[i], features[j], metric) < dist_threshold:
            return True
        if fp_of.get(i) is not None and fp_of.get(j) is not None:
            return tanimoto(fp_of[i], fp_of[j]) > tanimoto_threshold
        return False

    partners = drug_idx + new_indices
    for i in new_indices:
        for j in partners:
            if j >= i:
                continue
            if similar(i, j):
                adjacency[EdgeType.DrugSimilarity] |= {(i, j), (j, i)}
                if report is not None:
                    report.similarity_edges.append((nodes[j].id, nodes[i].id))
    return HetGraph(nodes, adjacency, features)


def infer(
    model: SynergyModel,
    g: HetGraph,
    cells: Mapping[str, ExpressionProfile],
    drug_a: DrugRecord,
    drug_b: DrugRecord,
    cell: Union[str, ExpressionProfile],
    dist_threshold: float = 90.0,
    tanimoto_threshold: float = 0.62,
    metric: str = "euclidean",
    store: Optional[EntityStore] = None,
) -> tuple[np.ndarray, InferenceReport]:
    """Probability pair for one triple, inserting transient nodes for any
    drug missing from the graph.  Returns (probs, provenance report)."""
    profile = cells.get(cell) if isinstance(cell, str) else cell
    if profile is None:
        raise UnknownCell(f"no expression profile for cell {cell!r}")
    bank = dict(cells)
    bank[profile.cell_id] = profile

    report = InferenceReport()
    unknown = [rec for rec in (drug_a, drug_b) if rec.id not in g.index]
    triple = SynergyTriple(drug_a.id, drug_b.id, profile.cell_id, label=None)
    if not unknown:
        return forward_synergy(model, g, bank, triple), report

    ext = _extend_graph(
        model, g, unknown, dist_threshold, tanimoto_threshold, metric,
        store=store, report=report,
    )
    transient = {ext.index[rec.id] for rec in unknown}
    with torch.no_grad():
        x_star, refined = final_embeddings(model, ext)
        for etype, pairs in sorted(refined.pseudo.items()):
            for u, v in sorted(pairs):
                if (u in transient or v in transient) and (
                    etype in (EdgeType.DTI,) or u < v
                ):
                    report.pseudo_edges.append((etype.value, ext.nodes[u].id, ext.nodes[v].id))
        probs = triple_probabilities(model, ext, x_star, bank, [triple])
    return probs[0].numpy(), report


def write_predictions_tsv(path, rows: Sequence[dict]) -> None:
    """Write the prediction table; rows carry the header's keys."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PREDICTIONS_HEADER + "\n")
        for r in rows:
            fh.write(
                "\t".join(
                    [
                        r["drug_a"],
                        r["drug_b"],
                        r["cell_id"],
                        f"{r['p_antagonistic']:.10f}",
                        f"{r['p_synergistic']:.10f}",
                        str(r["predicted_label"]),
                        r["provenance"],
                    ]
                )
                + "\n"
            )
