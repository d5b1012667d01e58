import pytest
import torch

from synergraph.checkpoint import load_model, load_predictor, save_model, save_predictor
from synergraph.errors import ParseError
from synergraph.model import SynergyModel
from synergraph.predictors import EdgePredictor, PredictorConfig

from conftest import toy_model_config


def test_predictor_roundtrip_bitwise(tmp_path):
    p = EdgePredictor(
        PredictorConfig(
            kind="DTI", dim_a=8, dim_b=6, branch_heads=2, joint_heads=2,
            branch_blocks=1, joint_blocks=1, head_hidden=(6,), ffn_mult=1, seed=5,
        )
    )
    path = tmp_path / "dti.ckpt"
    save_predictor(path, p)
    q = load_predictor(path)
    assert q.config == p.config
    for a, b in zip(p.parameters(), q.parameters()):
        assert torch.equal(a, b)


def test_predictor_file_byte_stable(tmp_path):
    cfg = PredictorConfig(
        kind="DDI", dim_a=8, dim_b=8, branch_heads=2, joint_heads=2,
        branch_blocks=1, joint_blocks=1, head_hidden=(6,), ffn_mult=1, seed=9,
    )
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_predictor(p1, EdgePredictor(cfg))
    save_predictor(p2, EdgePredictor(cfg))
    assert p1.read_bytes() == p2.read_bytes()


def test_model_roundtrip_bitwise(tmp_path):
    m = SynergyModel(toy_model_config(seed=13))
    path = tmp_path / "model.ckpt"
    save_model(path, m)
    again = load_model(path)
    assert again.config == m.config
    for a, b in zip(m.state_dict().values(), again.state_dict().values()):
        assert torch.equal(a, b)
    # saving the loaded model reproduces the same bytes
    path2 = tmp_path / "model2.ckpt"
    save_model(path2, again)
    assert path.read_bytes() == path2.read_bytes()


def test_kind_gate(tmp_path):
    m = SynergyModel(toy_model_config(seed=1))
    path = tmp_path / "model.ckpt"
    save_model(path, m)
    with pytest.raises(ParseError):
        load_predictor(path)


def test_corrupt_json_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_model(path)
