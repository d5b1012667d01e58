"""Seeded synthetic corpora for desk-scale runs and tests.

Entities, embeddings, typed edges, expression profiles, and labelled triples
are all drawn from one generator.  Labels are a linear function of the two
drug embeddings (order-symmetric) and the composed cell vector, cut at the
median margin, so a plain logistic fit can recover them; tests verify that
before using the corpus.
"""

from __future__ import annotations

import argparse
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .entities import (
    EntityKind,
    EntityStore,
    toy_fingerprint,
)
from .featurize import ExpressionProfile, compose_cell_embedding, protein_embedding_table
from .graph import EdgeType, HetGraph, graph_from_edges
from .model import SynergyTriple

SMILES_ALPHABET = "CNOPSFclnos123456789=#()[]"


@dataclass
class CorpusSpec:
    n_drugs: int = 30
    n_proteins: int = 40
    n_diseases: int = 5
    n_cells: int = 6
    n_triples: int = 200
    drug_dim: int = 16
    protein_dim: int = 12
    disease_dim: int = 8
    fingerprint_len: int = 64
    proteins_per_cell: int = 8
    dti_per_drug: int = 2
    n_ppi: int = 30
    n_ddi: int = 10
    n_drug_disease: int = 10
    n_protein_disease: int = 10
    n_disease_disease: int = 4
    seed: int = 0


@dataclass
class Corpus:
    spec: CorpusSpec
    store: EntityStore
    graph: HetGraph
    cells: dict[str, ExpressionProfile]
    triples: list[SynergyTriple]
    edges: list[tuple[EdgeType, str, str]]
    label_weights: dict[str, np.ndarray] = field(default_factory=dict)
    margins: Optional[np.ndarray] = None


def _random_smiles(rng: np.random.Generator, length: int = 20) -> str:
    return "".join(rng.choice(list(SMILES_ALPHABET), size=length))


def build_corpus(spec: CorpusSpec) -> Corpus:
    rng = np.random.default_rng(spec.seed)
    store = EntityStore(
        dims={
            EntityKind.DRUG: spec.drug_dim,
            EntityKind.PROTEIN: spec.protein_dim,
            EntityKind.DISEASE: spec.disease_dim,
        },
        fingerprint_len=spec.fingerprint_len,
    )
    drugs = [f"D{i:03d}" for i in range(spec.n_drugs)]
    proteins = [f"P{i:03d}" for i in range(spec.n_proteins)]
    diseases = [f"Z{i:03d}" for i in range(spec.n_diseases)]
    for did in drugs:
        smiles = _random_smiles(rng)
        e = store.register_entity(EntityKind.DRUG, did, {f"X-{did}"}, smiles)
        store.attach_embedding(e, rng.normal(0, 1, spec.drug_dim))
        store.attach_fingerprint(e, toy_fingerprint(smiles, spec.fingerprint_len))
    for pid in proteins:
        e = store.register_entity(EntityKind.PROTEIN, pid)
        store.attach_embedding(e, rng.normal(0, 1, spec.protein_dim))
    for zid in diseases:
        e = store.register_entity(EntityKind.DISEASE, zid)
        store.attach_embedding(e, rng.normal(0, 1, spec.disease_dim))

    edges: list[tuple[EdgeType, str, str]] = []
    for did in drugs:
        targets = rng.choice(spec.n_proteins, size=min(spec.dti_per_drug, spec.n_proteins), replace=False)
        for t in targets:
            edges.append((EdgeType.DTI, did, proteins[int(t)]))
    for _ in range(spec.n_ppi):
        i, j = rng.choice(spec.n_proteins, size=2, replace=False)
        edges.append((EdgeType.PPI, proteins[int(i)], proteins[int(j)]))
    for k in range(spec.n_ddi):
        i, j = rng.choice(spec.n_drugs, size=2, replace=False)
        etype = EdgeType.DDI_P if k % 2 == 0 else EdgeType.DDI_N
        edges.append((etype, drugs[int(i)], drugs[int(j)]))
    for k in range(spec.n_drug_disease):
        i = int(rng.integers(spec.n_drugs))
        j = int(rng.integers(spec.n_diseases))
        etype = EdgeType.DrugDiseaseIndication if k % 2 == 0 else EdgeType.DrugDiseaseContraindication
        edges.append((etype, drugs[i], diseases[j]))
    for _ in range(spec.n_protein_disease):
        i = int(rng.integers(spec.n_proteins))
        j = int(rng.integers(spec.n_diseases))
        edges.append((EdgeType.ProteinDisease, proteins[i], diseases[j]))
    for _ in range(spec.n_disease_disease):
        if spec.n_diseases < 2:
            break
        i, j = rng.choice(spec.n_diseases, size=2, replace=False)
        edges.append((EdgeType.DiseaseDisease, diseases[int(i)], diseases[int(j)]))
    store.freeze()
    graph = graph_from_edges(store, edges)

    cells = {}
    for c in range(spec.n_cells):
        cid = f"CELL{c:02d}"
        picks = rng.choice(spec.n_proteins, size=min(spec.proteins_per_cell, spec.n_proteins), replace=False)
        weights = {proteins[int(p)]: float(rng.uniform(0.1, 1.0)) for p in picks}
        cells[cid] = ExpressionProfile(cell_id=cid, weights=weights)

    # Planted labelling: symmetric in the drug pair, linear in the inputs.
    w_drug = rng.normal(0, 1, spec.drug_dim)
    w_cell = rng.normal(0, 1, spec.protein_dim)
    table = protein_embedding_table(store)
    cell_vec = {cid: compose_cell_embedding(p, table).values for cid, p in cells.items()}

    cell_ids = sorted(cells)
    raw: list[tuple[str, str, str]] = []
    seen = set()
    attempts = 0
    while len(raw) < spec.n_triples and attempts < 100 * spec.n_triples:
        attempts += 1
        i, j = rng.choice(spec.n_drugs, size=2, replace=False)
        c = cell_ids[int(rng.integers(len(cell_ids)))]
        key = (min(int(i), int(j)), max(int(i), int(j)), c)
        if key in seen:
            continue
        seen.add(key)
        raw.append((drugs[key[0]], drugs[key[1]], c))

    margins = np.array(
        [
            w_drug @ (store.embedding_of(a) + store.embedding_of(b)) + w_cell @ cell_vec[c]
            for a, b, c in raw
        ]
    )
    cut = float(np.median(margins))
    triples = [
        SynergyTriple(a, b, c, label=int(m > cut))
        for (a, b, c), m in zip(raw, margins)
    ]
    return Corpus(
        spec=spec,
        store=store,
        graph=graph,
        cells=cells,
        triples=triples,
        edges=edges,
        label_weights={"drug": w_drug, "cell": w_cell, "cut": np.array([cut])},
        margins=margins,
    )


def write_corpus_tsvs(corpus: Corpus, out_dir) -> dict[str, str]:
    """Write the corpus as the TSV files the CLI ingests; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def p(name):
        paths[name] = os.path.join(out_dir, name)
        return paths[name]

    store = corpus.store
    with open(p("entities.tsv"), "w", encoding="utf-8") as fh:
        fh.write("id\tkind\taliases\tdescriptor\n")
        for e in store.entities():
            fh.write(f"{e.id}\t{e.kind.value}\t{','.join(sorted(e.aliases))}\t{e.descriptor or ''}\n")
    with open(p("edges.tsv"), "w", encoding="utf-8") as fh:
        fh.write("src\tdst\ttype\n")
        for etype, a, b in corpus.edges:
            fh.write(f"{a}\t{b}\t{etype.value}\n")
    for kind, name in (
        (EntityKind.DRUG, "drug_embeddings.tsv"),
        (EntityKind.PROTEIN, "protein_embeddings.tsv"),
        (EntityKind.DISEASE, "disease_embeddings.tsv"),
    ):
        with open(p(name), "w", encoding="utf-8") as fh:
            fh.write("id\tvalues\n")
            for e in store.entities(kind):
                vals = ",".join(repr(float(v)) for v in store.embedding_of(e))
                fh.write(f"{e.id}\t{vals}\n")
    with open(p("fingerprints.tsv"), "w", encoding="utf-8") as fh:
        fh.write("id\thexbits\n")
        for e in store.entities(EntityKind.DRUG):
            fp = store.fingerprint_of(e)
            if fp is not None:
                fh.write(f"{e.id}\t{fp.to_hex()}\n")
    with open(p("expression.tsv"), "w", encoding="utf-8") as fh:
        fh.write("cell_id\tprotein_id\tweight\n")
        for cid in sorted(corpus.cells):
            prof = corpus.cells[cid]
            for pid in sorted(prof.weights):
                fh.write(f"{cid}\t{pid}\t{repr(prof.weights[pid])}\n")
    with open(p("triples.tsv"), "w", encoding="utf-8") as fh:
        fh.write("drug_a\tdrug_b\tcell_id\tlabel\n")
        for t in corpus.triples:
            fh.write(f"{t.drug_a}\t{t.drug_b}\t{t.cell_id}\t{t.label}\n")
    return paths


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Write a seeded synthetic corpus as TSV files.")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--drugs", type=int, default=30)
    ap.add_argument("--proteins", type=int, default=40)
    ap.add_argument("--diseases", type=int, default=5)
    ap.add_argument("--cells", type=int, default=6)
    ap.add_argument("--triples", type=int, default=200)
    args = ap.parse_args(argv)
    spec = CorpusSpec(
        n_drugs=args.drugs,
        n_proteins=args.proteins,
        n_diseases=args.diseases,
        n_cells=args.cells,
        n_triples=args.triples,
        seed=args.seed,
    )
    paths = write_corpus_tsvs(build_corpus(spec), args.out)
    for name in sorted(paths):
        print(paths[name])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
