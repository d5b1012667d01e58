"""Single command-line entry point for every pipeline stage.

Every command takes ``--config FILE`` (flat ``key = value`` lines) plus
repeated ``--set key=value`` overrides, validates strictly, and writes its
reports into a run directory stamped with the config hash and seed.  The
resolved config lands next to the reports, so any run can be replayed
exactly.  Outputs carry no timestamps: identical command, config, and seed
produce byte-identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from . import checkpoint as ckpt
from .config import RunConfig, describe_fields
from .entities import (
    EntityKind,
    EntityStore,
    load_embedding_table,
    load_entities_tsv,
    load_fingerprints_tsv,
)
from .errors import ConfigError, ParseError, SynergraphError
from .featurize import load_expression_tsv, similarity_edges
from .graph import EdgeType, build_graph, degree_stats, graph_from_edges
from .metrics import evaluate
from .model import ModelConfig, SynergyModel, TrainConfig, train
from .pipeline import (
    DrugRecord,
    LabeledSet,
    SelfTrainConfig,
    cross_validate,
    generate_candidate_triples,
    infer,
    load_triples_tsv,
    self_train,
    write_predictions_tsv,
)
from .predictors import EdgePredictor, PredictorConfig, build_pair_dataset, pretrain_predictor

COMMANDS = (
    "ingest",
    "build-graph",
    "pretrain-dti",
    "pretrain-ddi",
    "train",
    "self-train",
    "infer",
    "evaluate",
    "cross-validate",
)

SCORES_HEADER = "score\tlabel"


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _run_dir(cfg: RunConfig, command: str) -> str:
    resolved = cfg.resolved_text()
    digest = hashlib.sha256((command + "\n" + resolved).encode("utf-8")).hexdigest()[:10]
    path = os.path.join(cfg.out_dir, f"{command}-{digest}-seed{cfg.seed}")
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "resolved_config.txt"), "w", encoding="utf-8") as fh:
        fh.write(resolved)
    return path


def _load_store(cfg: RunConfig) -> tuple[EntityStore, dict]:
    cfg.require_paths("entities_path")
    store = EntityStore(
        dims={
            EntityKind.DRUG: cfg.drug_dim,
            EntityKind.PROTEIN: cfg.protein_dim,
            EntityKind.DISEASE: cfg.disease_dim,
        },
        fingerprint_len=cfg.fingerprint_len,
    )
    report = {"entities_rows": load_entities_tsv(store, cfg.entities_path)}
    unknown: list[str] = []
    for key, kind in (
        ("drug_embeddings_path", EntityKind.DRUG),
        ("protein_embeddings_path", EntityKind.PROTEIN),
        ("disease_embeddings_path", EntityKind.DISEASE),
    ):
        path = getattr(cfg, key)
        if path:
            cfg.require_paths(key)
            report[key.replace("_path", "_loaded")] = load_embedding_table(
                store, path, kind, unknown_out=unknown
            )
    if cfg.fingerprints_path:
        cfg.require_paths("fingerprints_path")
        report["fingerprints_loaded"] = load_fingerprints_tsv(
            store, cfg.fingerprints_path, unknown_out=unknown
        )
    report["unknown_ids"] = sorted(set(unknown))
    report["counts"] = {k.value: store.count(k) for k in EntityKind}
    store.freeze()
    return store, report


def _load_cells(cfg: RunConfig, store: EntityStore):
    cfg.require_paths("expression_path")
    return load_expression_tsv(
        store,
        cfg.expression_path,
        excluded_proteins=cfg.excluded_proteins,
        l1_normalize=cfg.normalize_expression,
    )


def _build_graph(cfg: RunConfig, store: EntityStore):
    cfg.require_paths("edges_path")
    g = build_graph(store, cfg.edges_path)
    if cfg.compute_similarity_edges:
        pairs = similarity_edges(
            store,
            dist_threshold=cfg.dist_threshold,
            tanimoto_threshold=cfg.tanimoto_threshold,
            metric=cfg.similarity_metric,
        )
        extra = [(EdgeType.DrugSimilarity, a, b) for a, b in sorted(pairs)]
        base = [
            (etype, g.nodes[u].id, g.nodes[v].id)
            for etype, pairs_ in sorted(g.adjacency.items(), key=lambda kv: kv[0].value)
            for u, v in sorted(pairs_)
        ]
        g = graph_from_edges(store, base + extra)
    return g


def _model_config(cfg: RunConfig, seed: int) -> ModelConfig:
    return ModelConfig(
        drug_dim=cfg.drug_dim,
        protein_dim=cfg.protein_dim,
        disease_dim=cfg.disease_dim,
        common_width=cfg.common_width,
        gat_heads=cfg.gat_heads,
        head_hidden=cfg.head_hidden,
        projection_hidden=cfg.projection_hidden,
        dropout=cfg.dropout,
        tau_dti=cfg.tau_dti,
        tau_ddi=cfg.tau_ddi,
        candidate_k=cfg.candidate_k,
        symmetric_pairs=cfg.symmetric_pairs,
        dtype=cfg.dtype,
        seed=seed,
        predictor_branch_heads=cfg.predictor_branch_heads,
        predictor_joint_heads=cfg.predictor_joint_heads,
        predictor_branch_blocks=cfg.predictor_branch_blocks,
        predictor_joint_blocks=cfg.predictor_joint_blocks,
        predictor_head_hidden=cfg.predictor_head_hidden,
        predictor_ffn_mult=cfg.predictor_ffn_mult,
    )


def _build_model(cfg: RunConfig, seed: int) -> SynergyModel:
    dti = ckpt.load_predictor(cfg.dti_checkpoint) if cfg.dti_checkpoint else None
    ddi = ckpt.load_predictor(cfg.ddi_checkpoint) if cfg.ddi_checkpoint else None
    return SynergyModel(_model_config(cfg, seed), dti=dti, ddi=ddi)


def _train_config(cfg: RunConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs,
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        seed=seed,
        refine_every=cfg.refine_every,
        variant="no-predictive" if cfg.no_predictive else "full",
        aux_weight=cfg.aux_weight,
    )


# -- commands -------------------------------------------------------------------


def cmd_ingest(cfg: RunConfig) -> dict:
    store, report = _load_store(cfg)
    if cfg.expression_path:
        cells = _load_cells(cfg, store)
        report["cells"] = len(cells)
    return {"ingest_report.json": report}


def cmd_build_graph(cfg: RunConfig) -> dict:
    store, ingest_report = _load_store(cfg)
    g = _build_graph(cfg, store)
    stats = degree_stats(g)
    report = {
        "nodes": len(g),
        "content_hash": g.content_hash(),
        "degree_stats": {
            t.value: {
                "edge_count": s.edge_count,
                "mean_degree": s.mean_degree,
                "max_degree": s.max_degree,
            }
            for t, s in stats.items()
        },
        "ingest": ingest_report,
    }
    return {"graph_report.json": report}


def _pretrain(cfg: RunConfig, kind: str) -> dict:
    store, _ = _load_store(cfg)
    g = _build_graph(cfg, store)
    emb = {
        k: {e.id: store.embedding_of(e) for e in store.entities(k)}
        for k in EntityKind
    }
    if kind == "DTI":
        positives = sorted(
            (g.nodes[u].id, g.nodes[v].id) for u, v in g.adjacency[EdgeType.DTI]
        )
        dataset = build_pair_dataset(
            positives, emb[EntityKind.DRUG], emb[EntityKind.PROTEIN],
            factor=cfg.negative_factor, seed=cfg.seed,
        )
        config = PredictorConfig(
            kind="DTI", dim_a=cfg.drug_dim, dim_b=cfg.protein_dim,
            branch_heads=cfg.predictor_branch_heads, joint_heads=cfg.predictor_joint_heads,
            branch_blocks=cfg.predictor_branch_blocks, joint_blocks=cfg.predictor_joint_blocks,
            head_hidden=cfg.predictor_head_hidden, ffn_mult=cfg.predictor_ffn_mult,
            dropout=cfg.dropout, dtype=cfg.dtype, seed=cfg.seed,
        )
    else:
        positives = []
        for label, etype in (("P", EdgeType.DDI_P), ("N", EdgeType.DDI_N)):
            for u, v in sorted(g.adjacency[etype]):
                if u < v:
                    positives.append((g.nodes[u].id, g.nodes[v].id, label))
        dataset = build_pair_dataset(
            sorted(positives), emb[EntityKind.DRUG], emb[EntityKind.DRUG],
            factor=cfg.negative_factor, seed=cfg.seed, unordered=True,
        )
        config = PredictorConfig(
            kind="DDI", dim_a=cfg.drug_dim, dim_b=cfg.drug_dim,
            branch_heads=cfg.predictor_branch_heads, joint_heads=cfg.predictor_joint_heads,
            branch_blocks=cfg.predictor_branch_blocks, joint_blocks=cfg.predictor_joint_blocks,
            head_hidden=cfg.predictor_head_hidden, ffn_mult=cfg.predictor_ffn_mult,
            dropout=cfg.dropout, dtype=cfg.dtype, seed=cfg.seed,
        )
    predictor = EdgePredictor(config)
    report = pretrain_predictor(
        predictor, dataset, epochs=cfg.pretrain_epochs, lr=cfg.lr,
        holdout_frac=cfg.holdout_frac, batch_size=cfg.batch_size, seed=cfg.seed,
        resample_negatives=cfg.resample_negatives,
    )
    name = kind.lower()
    return {
        f"{name}_predictor.ckpt": predictor,
        f"pretrain_{name}_report.json": {
            "kind": kind,
            "positives": len(dataset.positives),
            "negatives": len(dataset.negatives),
            **report.to_dict(),
        },
    }


def cmd_pretrain_dti(cfg: RunConfig) -> dict:
    return _pretrain(cfg, "DTI")


def cmd_pretrain_ddi(cfg: RunConfig) -> dict:
    return _pretrain(cfg, "DDI")


def _load_training_inputs(cfg: RunConfig):
    store, _ = _load_store(cfg)
    g = _build_graph(cfg, store)
    cells = _load_cells(cfg, store)
    cfg.require_paths("triples_path")
    triples = load_triples_tsv(store, cells, cfg.triples_path, binarize_at=cfg.binarize_at)
    return store, g, cells, triples


def cmd_train(cfg: RunConfig) -> dict:
    _, g, cells, triples = _load_training_inputs(cfg)
    model = _build_model(cfg, cfg.seed)
    report = train(model, g, cells, triples, _train_config(cfg, cfg.seed))
    return {"model.ckpt": model, "train_report.json": report.to_dict()}


def cmd_self_train(cfg: RunConfig) -> dict:
    store, g, cells, triples = _load_training_inputs(cfg)
    model = _build_model(cfg, cfg.seed)
    t_cfg = _train_config(cfg, cfg.seed)
    labeled = LabeledSet(triples=triples)
    train(model, g, cells, triples, t_cfg)
    rounds = []
    if not cfg.no_self_train:
        candidates = generate_candidate_triples(
            g, cells, exclude=triples, budget=cfg.candidate_budget, seed=cfg.seed
        )
        st_cfg = SelfTrainConfig(
            conf_threshold=cfg.confidence_threshold,
            max_rounds=cfg.max_rounds,
            min_gain=cfg.min_gain,
            seed=cfg.seed,
            holdout_frac=cfg.holdout_frac,
        )
        model, round_reports = self_train(
            model, g, cells, labeled, candidates, st_cfg, train_config=t_cfg
        )
        rounds = [r.to_dict() for r in round_reports]
    jsonl = "".join(json.dumps(r, sort_keys=True) + "\n" for r in rounds)
    return {
        "model.ckpt": model,
        "rounds.jsonl": jsonl,
        "self_train_report.json": {"rounds": rounds, "skipped": cfg.no_self_train},
    }


def _read_infer_rows(path) -> list[tuple[str, str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("drug_a\tdrug_b\tcell_id"):
        raise ParseError(path, 1, "expected a triples header")
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) not in (3, 4):
            raise ParseError(path, line_no, f"expected 3 or 4 columns, got {len(fields)}")
        rows.append((fields[0].strip(), fields[1].strip(), fields[2].strip()))
    return rows


def _load_infer_side_store(cfg: RunConfig) -> EntityStore | None:
    if not cfg.infer_entities_path:
        return None
    side = EntityStore(
        dims={
            EntityKind.DRUG: cfg.drug_dim,
            EntityKind.PROTEIN: cfg.protein_dim,
            EntityKind.DISEASE: cfg.disease_dim,
        },
        fingerprint_len=cfg.fingerprint_len,
    )
    cfg.require_paths("infer_entities_path")
    load_entities_tsv(side, cfg.infer_entities_path)
    if cfg.infer_drug_embeddings_path:
        cfg.require_paths("infer_drug_embeddings_path")
        load_embedding_table(side, cfg.infer_drug_embeddings_path, EntityKind.DRUG)
    if cfg.infer_fingerprints_path:
        cfg.require_paths("infer_fingerprints_path")
        load_fingerprints_tsv(side, cfg.infer_fingerprints_path)
    side.freeze()
    return side


def cmd_infer(cfg: RunConfig) -> dict:
    store, _ = _load_store(cfg)
    g = _build_graph(cfg, store)
    cells = _load_cells(cfg, store)
    cfg.require_paths("model_checkpoint", "triples_path")
    model = ckpt.load_model(cfg.model_checkpoint)
    side = _load_infer_side_store(cfg)

    def record(token: str) -> DrugRecord:
        if token in store:
            ent = store.resolve(token)
            return DrugRecord(ent.id, store.embedding_of(ent), store.fingerprint_of(ent))
        if side is not None and token in side:
            ent = side.resolve(token)
            emb = side.embedding_of(ent) if side.has_embedding(ent) else None
            return DrugRecord(ent.id, emb, side.fingerprint_of(ent))
        raise ConfigError(f"drug {token!r} found in neither the store nor the inference tables")

    rows = []
    for a_id, b_id, cell_id in _read_infer_rows(cfg.triples_path):
        probs, report = infer(
            model, g, cells, record(a_id), record(b_id), cell_id,
            dist_threshold=cfg.dist_threshold,
            tanimoto_threshold=cfg.tanimoto_threshold,
            metric=cfg.similarity_metric,
            store=store,
        )
        rows.append(
            {
                "drug_a": a_id,
                "drug_b": b_id,
                "cell_id": cell_id,
                "p_antagonistic": float(probs[0]),
                "p_synergistic": float(probs[1]),
                "predicted_label": int(probs[1] >= cfg.classification_threshold),
                "provenance": report.summary(),
            }
        )
    return {"predictions.tsv": rows}


def cmd_evaluate(cfg: RunConfig) -> dict:
    cfg.require_paths("scores_path")
    scores, labels = [], []
    with open(cfg.scores_path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != SCORES_HEADER:
        raise ParseError(cfg.scores_path, 1, f"expected header {SCORES_HEADER!r}")
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(cfg.scores_path, line_no, "expected 2 columns")
        try:
            scores.append(float(fields[0]))
            labels.append(int(fields[1]))
        except ValueError as exc:
            raise ParseError(cfg.scores_path, line_no, str(exc)) from None
    report = evaluate(scores, labels, threshold=cfg.classification_threshold)
    return {"metrics.json": report.to_dict()}


def cmd_cross_validate(cfg: RunConfig) -> dict:
    _, g, cells, triples = _load_training_inputs(cfg)

    def factory(seed: int) -> SynergyModel:
        return _build_model(cfg, seed)

    report = cross_validate(
        factory, g, cells, triples,
        folds=cfg.folds, seed=cfg.seed,
        train_config=_train_config(cfg, cfg.seed),
        threshold=cfg.classification_threshold,
    )
    return {"metrics.json": report.to_dict()}


HANDLERS = {
    "ingest": cmd_ingest,
    "build-graph": cmd_build_graph,
    "pretrain-dti": cmd_pretrain_dti,
    "pretrain-ddi": cmd_pretrain_ddi,
    "train": cmd_train,
    "self-train": cmd_self_train,
    "infer": cmd_infer,
    "evaluate": cmd_evaluate,
    "cross-validate": cmd_cross_validate,
}


def _emit(run_dir: str, outputs: dict) -> None:
    from .model import SynergyModel as _Model

    for name, payload in outputs.items():
        path = os.path.join(run_dir, name)
        if name.endswith(".json"):
            _write_json(path, payload)
        elif name.endswith(".ckpt"):
            if isinstance(payload, _Model):
                ckpt.save_model(path, payload)
            else:
                ckpt.save_predictor(path, payload)
        elif name.endswith(".jsonl"):
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(payload)
        elif name.endswith(".tsv"):
            write_predictions_tsv(path, payload)
        else:
            raise ValueError(f"unhandled output {name!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="synergraph",
        description="Drug-pair synergy prediction pipeline.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(
            name,
            help=f"run the {name} stage",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="config keys:\n" + describe_fields(),
        )
        p.add_argument("--config", default=None, help="flat key = value config file")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[],
            metavar="KEY=VALUE", help="override a config key (repeatable)",
        )
    args = parser.parse_args(argv)

    try:
        cfg = RunConfig.load(args.config, tuple(args.overrides))
    except (ConfigError, OSError) as exc:
        print(f"error: config: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    try:
        outputs = HANDLERS[args.command](cfg)
        run_dir = _run_dir(cfg, args.command)
        _emit(run_dir, outputs)
        print(run_dir)
        return 0
    except ConfigError as exc:
        print(f"error: {args.command}: ConfigError: {exc}", file=sys.stderr)
        return 1
    except SynergraphError as exc:
        print(f"error: {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
