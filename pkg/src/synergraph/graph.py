"""Typed heterogeneous graph over drugs, proteins, and diseases.

Nine edge types, each with a fixed pair of permitted endpoint kinds.  The two
drug-disease relations, drug-target and protein-disease edges are stored
directed as ingested; the remaining types are stored with symmetric closure.
Message passing treats every stored edge bidirectionally and adds self-loops
on the fly, so stored adjacency stays equal to the ingested relations.

A ``HetGraph`` is immutable once built.  Refinement produces a
``RefinedGraph`` overlay holding only the pseudo edges, never a copy.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .entities import Entity, EntityKind, EntityStore
from .errors import (
    IndexOutOfRange,
    InvalidEdge,
    KindMismatch,
    MissingEmbedding,
    ParseError,
    UnknownEntity,
)


class EdgeType(str, Enum):
    DDI_P = "DDI_P"
    DDI_N = "DDI_N"
    DrugSimilarity = "DrugSimilarity"
    DTI = "DTI"
    DrugDiseaseIndication = "DrugDiseaseIndication"
    DrugDiseaseContraindication = "DrugDiseaseContraindication"
    PPI = "PPI"
    ProteinDisease = "ProteinDisease"
    DiseaseDisease = "DiseaseDisease"


#: Permitted (src kind, dst kind) per edge type.
ENDPOINT_KINDS: dict[EdgeType, tuple[EntityKind, EntityKind]] = {
    EdgeType.DDI_P: (EntityKind.DRUG, EntityKind.DRUG),
    EdgeType.DDI_N: (EntityKind.DRUG, EntityKind.DRUG),
    EdgeType.DrugSimilarity: (EntityKind.DRUG, EntityKind.DRUG),
    EdgeType.DTI: (EntityKind.DRUG, EntityKind.PROTEIN),
    EdgeType.DrugDiseaseIndication: (EntityKind.DRUG, EntityKind.DISEASE),
    EdgeType.DrugDiseaseContraindication: (EntityKind.DRUG, EntityKind.DISEASE),
    EdgeType.PPI: (EntityKind.PROTEIN, EntityKind.PROTEIN),
    EdgeType.ProteinDisease: (EntityKind.PROTEIN, EntityKind.DISEASE),
    EdgeType.DiseaseDisease: (EntityKind.DISEASE, EntityKind.DISEASE),
}

#: Types stored with symmetric closure (edge present => reverse present).
SYMMETRIC_TYPES = frozenset(
    {EdgeType.DDI_P, EdgeType.DDI_N, EdgeType.DrugSimilarity, EdgeType.PPI, EdgeType.DiseaseDisease}
)

#: The only types refinement may add as pseudo edges.
PSEUDO_TYPES = frozenset({EdgeType.DTI, EdgeType.DDI_P, EdgeType.DDI_N})

EDGES_HEADER = "src\tdst\ttype"

Edge = tuple[int, int]
Adjacency = dict[EdgeType, set[Edge]]


class HetGraph:
    """Entities as nodes, typed sparse edges, per-node feature vectors."""

    def __init__(
        self,
        nodes: Sequence[Entity],
        adjacency: Adjacency,
        features: Sequence[np.ndarray],
    ):
        if len(nodes) != len(features):
            raise ValueError("one feature vector per node required")
        self.nodes = list(nodes)
        self.features = [np.asarray(f, dtype=np.float64) for f in features]
        self.adjacency: Adjacency = {t: set(adjacency.get(t, ())) for t in EdgeType}
        self.index = {e.id: i for i, e in enumerate(self.nodes)}
        self._validate()
        self._routes: Optional[tuple[np.ndarray, np.ndarray]] = None
        self._kind_cache: Optional[dict[EntityKind, np.ndarray]] = None

    def _validate(self) -> None:
        n = len(self.nodes)
        for etype, pairs in self.adjacency.items():
            want_src, want_dst = ENDPOINT_KINDS[etype]
            sym = etype in SYMMETRIC_TYPES
            for u, v in pairs:
                if not (0 <= u < n and 0 <= v < n):
                    raise IndexOutOfRange(f"{etype.value} edge ({u},{v}) out of range")
                if u == v:
                    raise InvalidEdge(f"self-edge {u} of type {etype.value}")
                ku, kv = self.nodes[u].kind, self.nodes[v].kind
                ok = (ku, kv) == (want_src, want_dst) or (sym and (kv, ku) == (want_src, want_dst))
                if not ok:
                    raise KindMismatch(
                        f"{etype.value} edge ({self.nodes[u].id},{self.nodes[v].id}) "
                        f"connects {ku.value}-{kv.value}, expected "
                        f"{want_src.value}-{want_dst.value}"
                    )
                if sym and (v, u) not in pairs:
                    raise InvalidEdge(
                        f"{etype.value} is symmetric but ({v},{u}) is missing"
                    )

    # -- basic accessors ---------------------------------------------------

    def __len__(self) -> int:
        return len(self.nodes)

    def kind_of(self, node: int) -> EntityKind:
        return self.nodes[node].kind

    def node_indices(self, kind: EntityKind) -> np.ndarray:
        """Indices of all nodes of one kind, in node order."""
        if self._kind_cache is None:
            self._kind_cache = {
                k: np.array([i for i, e in enumerate(self.nodes) if e.kind is k], dtype=np.int64)
                for k in EntityKind
            }
        return self._kind_cache[kind]

    def edge_sets(self) -> Adjacency:
        return self.adjacency

    def has_edge(self, etype: EdgeType, u: int, v: int) -> bool:
        return (u, v) in self.adjacency[etype]

    def message_routes(self) -> tuple[np.ndarray, np.ndarray]:
        """Directed (src, dst) routes for message passing: every stored edge
        in both directions, deduplicated across types, no self-loops."""
        if self._routes is None:
            routes = set()
            for pairs in self.adjacency.values():
                for u, v in pairs:
                    routes.add((u, v))
                    routes.add((v, u))
            ordered = sorted(routes)
            src = np.array([u for u, _ in ordered], dtype=np.int64)
            dst = np.array([v for _, v in ordered], dtype=np.int64)
            self._routes = (src, dst)
        return self._routes

    def content_hash(self) -> str:
        """Stable digest of node ids and all stored edges."""
        h = hashlib.sha256()
        for e in self.nodes:
            h.update(e.id.encode("utf-8"))
            h.update(b"\x00")
        for etype in EdgeType:
            h.update(etype.value.encode("utf-8"))
            for u, v in sorted(self.adjacency[etype]):
                h.update(f"{u},{v};".encode("ascii"))
        return h.hexdigest()


@dataclass
class RefinedGraph:
    """Overlay of pseudo edges on a base graph; effective adjacency is the
    union.  Refinement never removes a base edge."""

    base: HetGraph
    pseudo: Adjacency = field(default_factory=dict)

    def __post_init__(self):
        clean: Adjacency = {}
        for etype, pairs in self.pseudo.items():
            if not pairs:
                continue
            if etype not in PSEUDO_TYPES:
                raise InvalidEdge(f"pseudo edges of type {etype.value} are not allowed")
            overlap = pairs & self.base.adjacency[etype]
            if overlap:
                raise InvalidEdge(f"pseudo {etype.value} edges duplicate base edges: {sorted(overlap)[:3]}")
            clean[etype] = set(pairs)
        self.pseudo = clean

    @property
    def nodes(self) -> list[Entity]:
        return self.base.nodes

    @property
    def features(self) -> list[np.ndarray]:
        return self.base.features

    def __len__(self) -> int:
        return len(self.base)

    def edge_sets(self) -> Adjacency:
        return {
            t: self.base.adjacency[t] | self.pseudo.get(t, set())
            for t in EdgeType
        }

    def pseudo_edge_count(self) -> int:
        total = 0
        for etype, pairs in self.pseudo.items():
            total += len(pairs) // 2 if etype in SYMMETRIC_TYPES else len(pairs)
        return total

    def node_indices(self, kind: EntityKind) -> np.ndarray:
        return self.base.node_indices(kind)

    def message_routes(self) -> tuple[np.ndarray, np.ndarray]:
        src, dst = self.base.message_routes()
        extra = set()
        for pairs in self.pseudo.values():
            for u, v in pairs:
                extra.add((u, v))
                extra.add((v, u))
        base_pairs = set(zip(src.tolist(), dst.tolist()))
        ordered = sorted(base_pairs | extra)
        return (
            np.array([u for u, _ in ordered], dtype=np.int64),
            np.array([v for _, v in ordered], dtype=np.int64),
        )


GraphLike = Union[HetGraph, RefinedGraph]


def build_graph(store: EntityStore, edges_path) -> HetGraph:
    """Build the graph from a frozen store and an edges TSV."""
    rows = []
    with open(edges_path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != EDGES_HEADER:
        raise ParseError(edges_path, 1, f"expected header {EDGES_HEADER!r}")
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(edges_path, line_no, f"expected 3 columns, got {len(fields)}")
        src_id, dst_id, type_s = (f.strip() for f in fields)
        try:
            etype = EdgeType(type_s)
        except ValueError:
            raise ParseError(edges_path, line_no, f"unknown edge type {type_s!r}") from None
        rows.append((etype, src_id, dst_id))
    return graph_from_edges(store, rows)


def graph_from_edges(
    store: EntityStore,
    edges: Iterable[tuple[EdgeType, str, str]],
) -> HetGraph:
    """Build a graph from (type, src id, dst id) triples.

    Nodes are all store entities in registration order; every node must carry
    an embedding.  Symmetric types get their reverse pair added.
    """
    nodes = list(store.entities())
    index = {e.id: i for i, e in enumerate(nodes)}
    features = []
    for e in nodes:
        if not store.has_embedding(e):
            raise MissingEmbedding(f"node {e.id!r} has no attached embedding")
        features.append(store.embedding_of(e))

    adjacency: Adjacency = {t: set() for t in EdgeType}
    for etype, src_id, dst_id in edges:
        try:
            u = index[store.resolve(src_id).id]
            v = index[store.resolve(dst_id).id]
        except UnknownEntity:
            raise
        if u == v:
            raise InvalidEdge(f"self-edge on {src_id!r} of type {etype.value}")
        want_src, want_dst = ENDPOINT_KINDS[etype]
        ku, kv = nodes[u].kind, nodes[v].kind
        sym = etype in SYMMETRIC_TYPES
        if (ku, kv) != (want_src, want_dst) and not (sym and (kv, ku) == (want_src, want_dst)):
            raise KindMismatch(
                f"{etype.value} edge ({src_id},{dst_id}) connects "
                f"{ku.value}-{kv.value}, expected {want_src.value}-{want_dst.value}"
            )
        adjacency[etype].add((u, v))
        if sym:
            adjacency[etype].add((v, u))
    return HetGraph(nodes, adjacency, features)


def neighbors(
    g: GraphLike,
    node: int,
    types: Optional[Iterable[EdgeType]] = None,
) -> set[tuple[int, EdgeType]]:
    """Nodes adjacent to ``node`` (direction-agnostic), tagged with the type.

    On a RefinedGraph the pseudo edges are included.
    """
    if not (0 <= node < len(g)):
        raise IndexOutOfRange(f"node {node} out of range")
    wanted = set(types) if types is not None else set(EdgeType)
    out: set[tuple[int, EdgeType]] = set()
    for etype, pairs in g.edge_sets().items():
        if etype not in wanted:
            continue
        for u, v in pairs:
            if u == node:
                out.add((v, etype))
            elif v == node:
                out.add((u, etype))
    return out


@dataclass(frozen=True)
class DegreeStats:
    edge_count: int
    mean_degree: float
    max_degree: int


def degree_stats(g: GraphLike) -> dict[EdgeType, DegreeStats]:
    """Per-type edge count and degree summary.

    Symmetric types report the undirected edge count.  Degree of a node is the
    number of incident stored edges of the type; the mean runs over all nodes
    whose kind the type permits.
    """
    sets = g.edge_sets()
    n = len(g)
    nodes = g.nodes if isinstance(g, HetGraph) else g.base.nodes
    out = {}
    for etype in EdgeType:
        pairs = sets[etype]
        deg = np.zeros(n, dtype=np.int64)
        sym = etype in SYMMETRIC_TYPES
        for u, v in pairs:
            deg[u] += 1
            if not sym:
                deg[v] += 1
        count = len(pairs) // 2 if sym else len(pairs)
        kinds = set(ENDPOINT_KINDS[etype])
        member = [i for i, e in enumerate(nodes) if e.kind in kinds]
        if member:
            mean = float(deg[member].mean())
            mx = int(deg[member].max())
        else:
            mean, mx = 0.0, 0
        out[etype] = DegreeStats(edge_count=count, mean_degree=mean, max_degree=mx)
    return out
