import numpy as np
import pytest

from emgformer.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from emgformer.model import ModelConfig, init_params
from emgformer.tensor import Tensor


def test_roundtrip_preserves_order_shapes_values(tmp_path):
    params = {
        "a.w": Tensor(np.arange(6.0, dtype=np.float32).reshape(2, 3)),
        "a.b": Tensor(np.array([1.5], dtype=np.float32)),
        "deep.nested.name": Tensor(np.zeros((2, 2, 2), dtype=np.float32)),
    }
    path = tmp_path / "model.thgr"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert list(loaded) == list(params)
    for name, t in params.items():
        np.testing.assert_array_equal(loaded[name], t.data)
        assert loaded[name].dtype == np.float32


def test_float64_params_are_stored_as_f32(tmp_path):
    params = {"p": Tensor(np.array([1 / 3], dtype=np.float64))}
    path = tmp_path / "m.thgr"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert loaded["p"].dtype == np.float32
    np.testing.assert_allclose(loaded["p"], np.float32(1 / 3))


def test_magic_and_truncation_errors(tmp_path):
    path = tmp_path / "m.thgr"
    save_checkpoint(path, {"p": Tensor(np.ones(4, dtype=np.float32))})
    blob = path.read_bytes()

    bad = tmp_path / "bad.thgr"
    bad.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(bad)

    cut = tmp_path / "cut.thgr"
    cut.write_bytes(blob[:-3])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(cut)


def test_full_model_roundtrip(tmp_path):
    config = ModelConfig.from_variant("base", 100, n_classes=9)
    params = init_params(config, seed=5)
    path = tmp_path / "base.thgr"
    save_checkpoint(path, params.named())
    loaded = load_checkpoint(path)
    named = params.named()
    assert set(loaded) == set(named)
    for name, arr in loaded.items():
        np.testing.assert_array_equal(arr, named[name].data)
