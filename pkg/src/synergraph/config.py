"""Flat run configuration: ``key = value`` lines plus ``--set`` overrides.

Strict by construction: unknown keys and out-of-range values are rejected
before any command runs, and the fully resolved text (sufficient to replay a
run) is written into every run directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .errors import ConfigError


@dataclass(frozen=True)
class Field:
    name: str
    kind: str  # str | int | float | bool | ints | strs | optfloat | choice:<a|b>
    default: object
    help: str
    check: Optional[Callable[[object], Optional[str]]] = None


def _pos(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _unit(v):
    return None if 0.0 <= v <= 1.0 else "must be in [0, 1]"


FIELDS: list[Field] = [
    # paths
    Field("entities_path", "str", "", "entities TSV (id, kind, aliases, descriptor)"),
    Field("edges_path", "str", "", "edges TSV (src, dst, type)"),
    Field("drug_embeddings_path", "str", "", "drug embedding TSV (id, values)"),
    Field("protein_embeddings_path", "str", "", "protein embedding TSV (id, values)"),
    Field("disease_embeddings_path", "str", "", "disease embedding TSV (id, values)"),
    Field("fingerprints_path", "str", "", "optional fingerprint TSV (id, hexbits)"),
    Field("expression_path", "str", "", "expression TSV (cell_id, protein_id, weight)"),
    Field("triples_path", "str", "", "labelled triples TSV"),
    Field("scores_path", "str", "", "scores TSV (score, label) for the evaluate command"),
    Field("model_checkpoint", "str", "", "model checkpoint to load (infer/evaluate warm start)"),
    Field("dti_checkpoint", "str", "", "pretrained drug-target predictor checkpoint"),
    Field("ddi_checkpoint", "str", "", "pretrained drug-drug predictor checkpoint"),
    Field("infer_entities_path", "str", "", "entities TSV for drugs only seen at inference"),
    Field("infer_drug_embeddings_path", "str", "", "embedding TSV for inference-only drugs"),
    Field("infer_fingerprints_path", "str", "", "fingerprint TSV for inference-only drugs"),
    Field("out_dir", "str", "runs", "directory that receives per-run output folders"),
    # dimensions
    Field("drug_dim", "int", 2304, "drug embedding width", _pos),
    Field("protein_dim", "int", 768, "protein embedding width", _pos),
    Field("disease_dim", "int", 512, "disease embedding width", _pos),
    Field("common_width", "int", 512, "shared node width after projection", _pos),
    Field("fingerprint_len", "int", 2048, "fingerprint bit length", _pos),
    # thresholds
    Field("dist_threshold", "float", 90.0, "similarity edge: embedding distance below this", _nonneg),
    Field("tanimoto_threshold", "float", 0.62, "similarity edge: Tanimoto above this", _unit),
    Field("tau_dti", "float", 0.5, "pseudo drug-target edge score threshold", _unit),
    Field("tau_ddi", "float", 0.5, "pseudo drug-drug edge probability threshold", _unit),
    Field("confidence_threshold", "float", 0.8, "self-training confidence cut (strict)", _unit),
    Field("classification_threshold", "float", 0.5, "cutoff for thresholded metrics", _unit),
    Field("binarize_at", "optfloat", 0.0, "threshold for a score column in triples (score > cut -> 1)"),
    # training
    Field("epochs", "int", 100, "training epochs", _nonneg),
    Field("pretrain_epochs", "int", 100, "predictor pretraining epochs", _nonneg),
    Field("lr", "float", 1e-4, "learning rate", _pos),
    Field("dropout", "float", 0.2, "dropout rate on MLP hidden layers",
          lambda v: None if 0.0 <= v < 1.0 else "must be in [0, 1)"),
    Field("batch_size", "int", 0, "minibatch size (0 = full batch)", _nonneg),
    Field("seed", "int", 0, "root seed; all randomness derives from it"),
    Field("folds", "int", 10, "cross-validation fold count",
          lambda v: None if v >= 2 else "must be >= 2"),
    Field("candidate_k", "int", 50, "refinement candidates per drug (0 = exhaustive)", _nonneg),
    Field("refine_every", "int", 1, "epochs between topology refreshes", _pos),
    Field("negative_factor", "int", 3, "negatives per positive when pretraining predictors", _pos),
    Field("resample_negatives", "bool", False, "redraw pretraining negatives every epoch"),
    Field("aux_weight", "float", 0.1, "weight of the auxiliary edge losses during training", _nonneg),
    Field("max_rounds", "int", 5, "self-training round budget", _pos),
    Field("min_gain", "float", 0.002, "self-training stops below this held-out gain", _nonneg),
    Field("holdout_frac", "float", 0.2, "held-out fraction for gain tracking", _unit),
    Field("candidate_budget", "int", 1000, "self-training candidate pool size", _nonneg),
    # model shape
    Field("gat_heads", "ints", (4, 8, 12), "attention heads of the three layers",
          lambda v: None if len(v) == 3 and all(h > 0 for h in v) else "need three positive ints"),
    Field("head_hidden", "ints", (3072, 768, 128), "hidden widths of the pair head"),
    Field("projection_hidden", "ints", (), "hidden widths of the per-kind projections"),
    Field("predictor_branch_heads", "int", 8, "heads in each predictor branch block", _pos),
    Field("predictor_joint_heads", "int", 12, "heads in the predictor joint blocks", _pos),
    Field("predictor_branch_blocks", "int", 1, "attention blocks per predictor branch", _pos),
    Field("predictor_joint_blocks", "int", 2, "joint attention blocks per predictor", _pos),
    Field("predictor_head_hidden", "ints", (2048, 256), "hidden widths of the predictor heads"),
    Field("predictor_ffn_mult", "int", 2, "feed-forward width multiplier in attention blocks", _pos),
    Field("dtype", "choice:float64|float32", "float64", "floating point precision"),
    Field("similarity_metric", "choice:euclidean|cosine", "euclidean", "drug embedding distance metric"),
    # behaviour switches
    Field("symmetric_pairs", "bool", True, "average the pair head over both drug orders"),
    Field("compute_similarity_edges", "bool", False, "add computed similarity edges at graph build"),
    Field("no_self_train", "bool", False, "ablation: skip the self-training loop"),
    Field("no_predictive", "bool", False, "ablation: never add pseudo edges"),
    # data hygiene
    Field("excluded_proteins", "strs", (), "protein ids dropped from expression profiles"),
    Field("normalize_expression", "bool", False, "L1-normalize each expression profile at load"),
]

FIELD_BY_NAME = {f.name: f for f in FIELDS}


def _parse_value(field: Field, raw: str):
    raw = raw.strip()
    kind = field.kind
    try:
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "optfloat":
            return float(raw) if raw else None
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError("expected true/false")
        if kind == "ints":
            return tuple(int(v) for v in raw.split(",") if v.strip()) if raw else ()
        if kind == "strs":
            return tuple(v.strip() for v in raw.split(",") if v.strip()) if raw else ()
        if kind.startswith("choice:"):
            choices = kind.split(":", 1)[1].split("|")
            if raw not in choices:
                raise ValueError(f"expected one of {choices}")
            return raw
    except ValueError as exc:
        raise ConfigError(f"key {field.name!r}: {exc}") from None
    raise ConfigError(f"unhandled field kind {kind!r}")


def _render_value(field: Field, value) -> str:
    if value is None:
        return ""
    if field.kind == "bool":
        return "true" if value else "false"
    if field.kind in ("ints", "strs"):
        return ",".join(str(v) for v in value)
    if field.kind == "float" or field.kind == "optfloat":
        return repr(float(value))
    return str(value)


class RunConfig:
    """Validated flat configuration with attribute access."""

    def __init__(self, values: Optional[dict] = None):
        object.__setattr__(self, "_values", {f.name: f.default for f in FIELDS})
        for key, val in (values or {}).items():
            self.set(key, val)

    def set(self, key: str, raw) -> None:
        field = FIELD_BY_NAME.get(key)
        if field is None:
            raise ConfigError(f"unknown config key {key!r}")
        value = _parse_value(field, raw) if isinstance(raw, str) else raw
        if field.check is not None and value is not None:
            problem = field.check(value)
            if problem:
                raise ConfigError(f"key {key!r}: {problem}")
        self._values[key] = value

    def __getattr__(self, key: str):
        values = object.__getattribute__(self, "_values")
        if key in values:
            return values[key]
        raise AttributeError(key)

    def __setattr__(self, key, value):
        self.set(key, value)

    def resolved_text(self) -> str:
        """Canonical replayable rendering: one sorted ``key = value`` per line."""
        lines = [
            f"{f.name} = {_render_value(f, self._values[f.name])}"
            for f in sorted(FIELDS, key=lambda f: f.name)
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, path: Optional[str], overrides: tuple[str, ...] = ()) -> "RunConfig":
        cfg = cls()
        if path:
            with open(path, "r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    stripped = line.strip()
                    if not stripped or stripped.startswith("#"):
                        continue
                    if "=" not in stripped:
                        raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
                    key, _, raw = stripped.partition("=")
                    cfg.set(key.strip(), raw.strip())
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r}: expected key=value")
            key, _, raw = item.partition("=")
            cfg.set(key.strip(), raw.strip())
        return cfg

    def require_paths(self, *keys: str) -> None:
        import os

        for key in keys:
            value = getattr(self, key)
            if not value:
                raise ConfigError(f"command requires config key {key!r}")
            if not os.path.exists(value):
                raise ConfigError(f"key {key!r}: path {value!r} does not exist")


def describe_fields() -> str:
    """Key, default, and description for every config key (for --help)."""
    lines = []
    for f in FIELDS:
        default = _render_value(f, f.default)
        lines.append(f"  {f.name} (default: {default!r}) - {f.help}")
    return "\n".join(lines)
