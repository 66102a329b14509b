import json

import numpy as np
import pytest

from conftest import build_initialized, tiny_config
from flow_inverse_solver.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from flow_inverse_solver.errors import CheckpointError
from flow_inverse_solver.flow_model import FlowModelFactory


@pytest.fixture
def saved(tmp_path, tiny_model):
    tiny_model.training_step = 42
    return tiny_model, save_checkpoint(tiny_model, tmp_path / "model.ckpt")


class TestRoundTrip:
    def test_parameters_bit_exact(self, saved):
        model, path = saved
        loaded = load_checkpoint(path)
        assert loaded.config == model.config
        assert loaded.training_step == 42
        original = model.named_parameters()
        for name, param in loaded.named_parameters().items():
            assert param.dtype == original[name].dtype
            np.testing.assert_array_equal(param.data, original[name].data)

    def test_loaded_model_computes_same_log_prob(self, saved, rng):
        model, path = saved
        x = rng.random((3, 2, 4, 4))
        loaded = load_checkpoint(path)
        assert loaded.actnorms_initialized
        np.testing.assert_array_equal(loaded.log_prob(x).data, model.log_prob(x).data)

    def test_single_precision(self, tmp_path):
        model = build_initialized(tiny_config(precision="single"), seed=2)
        loaded = load_checkpoint(save_checkpoint(model, tmp_path / "f32.ckpt"))
        assert loaded.dtype == np.float32
        for name, param in loaded.named_parameters().items():
            np.testing.assert_array_equal(param.data, model.named_parameters()[name].data)

    def test_save_is_deterministic(self, saved, tmp_path):
        model, path = saved
        again = save_checkpoint(model, tmp_path / "again.ckpt")
        assert path.read_bytes() == again.read_bytes()

    def test_header_records_uninitialized_actnorm(self, tmp_path):
        model = FlowModelFactory.build(tiny_config(), seed=0)
        raw = save_checkpoint(model, tmp_path / "fresh.ckpt").read_bytes()
        header_len = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
        header = json.loads(raw[12:12 + header_len])
        assert not any(header["actnorm_initialized"].values())
        assert load_checkpoint(tmp_path / "fresh.ckpt").actnorms_initialized


class TestCorruption:
    def test_bad_magic(self, saved):
        _, path = saved
        path.write_bytes(b"XXXX" + path.read_bytes()[4:])
        with pytest.raises(CheckpointError) as info:
            load_checkpoint(path)
        assert info.value.offset == 0

    def test_unsupported_version(self, saved):
        _, path = saved
        raw = path.read_bytes()
        path.write_bytes(MAGIC + np.array([7], dtype="<u4").tobytes() + raw[8:])
        with pytest.raises(CheckpointError, match="Versión 7") as info:
            load_checkpoint(path)
        assert info.value.offset == 4

    def test_truncated(self, saved):
        _, path = saved
        raw = path.read_bytes()
        path.write_bytes(raw[:-10])
        with pytest.raises(CheckpointError, match="truncado"):
            load_checkpoint(path)

    def test_broken_header(self, saved):
        _, path = saved
        raw = bytearray(path.read_bytes())
        raw[12] = ord("#")
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="Cabecera") as info:
            load_checkpoint(path)
        assert info.value.offset == 12

    def test_unknown_parameter_name(self, saved):
        _, path = saved
        raw = path.read_bytes()
        target = b"scale0.step0.actnorm.bias"
        assert raw.count(target) == 1
        path.write_bytes(raw.replace(target, b"scale0.step0.actnorm.bxas"))
        with pytest.raises(CheckpointError, match="desconocido"):
            load_checkpoint(path)

    def test_offset_appears_in_message(self, saved):
        _, path = saved
        path.write_bytes(b"NFC")
        with pytest.raises(CheckpointError, match=r"offset 0"):
            load_checkpoint(path)
