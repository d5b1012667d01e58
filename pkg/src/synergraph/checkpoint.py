"""Deterministic checkpoint container.

One JSON document per file: a format-version field, the constructor metadata,
and every parameter as base64-encoded little-endian bytes.  Serialization is
canonical (sorted keys, fixed separators), so identical parameters produce
byte-identical files and loads round-trip bitwise.
"""

from __future__ import annotations

import base64
import json
from typing import Tuple

import numpy as np
import torch

from .errors import ParseError
from .model import ModelConfig, SynergyModel
from .predictors import EdgePredictor, PredictorConfig

FORMAT_VERSION = 1


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    if a.dtype.byteorder not in ("<", "=", "|"):
        a = a.astype(a.dtype.newbyteorder("<"))
    return {
        "dtype": a.dtype.str,
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(spec: dict) -> np.ndarray:
    raw = base64.b64decode(spec["data"])
    return np.frombuffer(raw, dtype=np.dtype(spec["dtype"])).reshape(spec["shape"]).copy()


def _write(path, kind: str, meta: dict, module: torch.nn.Module) -> None:
    arrays = {
        name: _encode_array(p.detach().numpy())
        for name, p in sorted(module.state_dict().items())
    }
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "arrays": arrays,
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _read(path, expect_kind: str) -> Tuple[dict, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, f"bad checkpoint JSON: {exc.msg}") from None
    if payload.get("format_version") != FORMAT_VERSION:
        raise ParseError(path, 1, f"unsupported format version {payload.get('format_version')!r}")
    if payload.get("kind") != expect_kind:
        raise ParseError(path, 1, f"checkpoint kind {payload.get('kind')!r}, expected {expect_kind!r}")
    return payload["meta"], payload["arrays"]


def _load_state(module: torch.nn.Module, arrays: dict) -> None:
    state = {name: torch.as_tensor(_decode_array(spec)) for name, spec in arrays.items()}
    module.load_state_dict(state)


def save_predictor(path, predictor: EdgePredictor) -> None:
    _write(path, "edge-predictor", predictor.config.to_meta(), predictor)


def load_predictor(path) -> EdgePredictor:
    meta, arrays = _read(path, "edge-predictor")
    meta["head_hidden"] = tuple(meta["head_hidden"])
    predictor = EdgePredictor(PredictorConfig(**meta))
    _load_state(predictor, arrays)
    return predictor


def save_model(path, model: SynergyModel) -> None:
    _write(path, "synergy-model", model.config.to_meta(), model)


def load_model(path) -> SynergyModel:
    meta, arrays = _read(path, "synergy-model")
    for key in ("gat_heads", "gat_concat", "head_hidden", "projection_hidden",
                "predictor_head_hidden"):
        meta[key] = tuple(meta[key])
    model = SynergyModel(ModelConfig(**meta))
    _load_state(model, arrays)
    return model
