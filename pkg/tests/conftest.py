import numpy as np
import pytest
from hypothesis import settings

from synergraph.entities import EntityKind, EntityStore, toy_fingerprint
from synergraph.featurize import ExpressionProfile
from synergraph.graph import EdgeType, graph_from_edges
from synergraph.model import ModelConfig, SynergyModel, SynergyTriple

settings.register_profile("ci", deadline=None, max_examples=50)
settings.load_profile("ci")

TOY_DIMS = {EntityKind.DRUG: 8, EntityKind.PROTEIN: 6, EntityKind.DISEASE: 4}


def make_store(n_drugs=4, n_proteins=4, n_diseases=2, seed=0, dims=None, fingerprint_len=32):
    """Small frozen store with embeddings and toy fingerprints attached."""
    dims = dims or TOY_DIMS
    rng = np.random.default_rng(seed)
    store = EntityStore(dims=dims, fingerprint_len=fingerprint_len)
    for i in range(n_drugs):
        e = store.register_entity(EntityKind.DRUG, f"D{i}", descriptor=f"CC{i}N")
        store.attach_embedding(e, rng.normal(0, 1, dims[EntityKind.DRUG]))
        store.attach_fingerprint(e, toy_fingerprint(f"CC{i}N", fingerprint_len))
    for i in range(n_proteins):
        e = store.register_entity(EntityKind.PROTEIN, f"P{i}")
        store.attach_embedding(e, rng.normal(0, 1, dims[EntityKind.PROTEIN]))
    for i in range(n_diseases):
        e = store.register_entity(EntityKind.DISEASE, f"Z{i}")
        store.attach_embedding(e, rng.normal(0, 1, dims[EntityKind.DISEASE]))
    store.freeze()
    return store


def make_graph(store, edges=()):
    return graph_from_edges(store, edges)


def toy_model_config(seed=0, **overrides):
    """Model config sized to the toy store dims."""
    base = dict(
        drug_dim=8,
        protein_dim=6,
        disease_dim=4,
        common_width=8,
        gat_heads=(1, 2, 4),
        head_hidden=(12, 6),
        projection_hidden=(),
        dropout=0.0,
        candidate_k=0,
        dtype="float64",
        seed=seed,
        predictor_branch_heads=2,
        predictor_joint_heads=2,
        predictor_branch_blocks=1,
        predictor_joint_blocks=1,
        predictor_head_hidden=(6,),
        predictor_ffn_mult=1,
    )
    base.update(overrides)
    return ModelConfig(**base)


def make_cells(store, n_cells=2, seed=0, proteins_per_cell=3):
    rng = np.random.default_rng(seed)
    proteins = [e.id for e in store.entities(EntityKind.PROTEIN)]
    cells = {}
    for c in range(n_cells):
        picks = rng.choice(len(proteins), size=min(proteins_per_cell, len(proteins)), replace=False)
        cells[f"C{c}"] = ExpressionProfile(
            cell_id=f"C{c}",
            weights={proteins[int(p)]: float(rng.uniform(0.2, 1.0)) for p in picks},
        )
    return cells


@pytest.fixture
def tiny_world():
    """Store + graph + cells + a few triples, sized for fast unit tests."""
    store = make_store(n_drugs=4, n_proteins=4, n_diseases=2, seed=3)
    edges = [
        (EdgeType.DTI, "D0", "P0"),
        (EdgeType.DTI, "D1", "P1"),
        (EdgeType.PPI, "P0", "P1"),
        (EdgeType.PPI, "P2", "P3"),
        (EdgeType.DDI_P, "D0", "D1"),
        (EdgeType.DDI_N, "D2", "D3"),
        (EdgeType.DrugDiseaseIndication, "D0", "Z0"),
        (EdgeType.ProteinDisease, "P0", "Z1"),
        (EdgeType.DiseaseDisease, "Z0", "Z1"),
    ]
    g = make_graph(store, edges)
    cells = make_cells(store, n_cells=2, seed=5)
    triples = [
        SynergyTriple("D0", "D1", "C0", 1),
        SynergyTriple("D2", "D3", "C1", 0),
        SynergyTriple("D0", "D2", "C0", 1),
        SynergyTriple("D1", "D3", "C1", 0),
    ]
    return store, g, cells, triples


@pytest.fixture
def tiny_model():
    return SynergyModel(toy_model_config(seed=11))
