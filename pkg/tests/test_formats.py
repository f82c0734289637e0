import json
import struct

import numpy as np
import pytest

from exitstream import (
    BadMagicError,
    ConfigError,
    DuplicateNameError,
    FormatError,
    NonFiniteDataError,
    SpecParseError,
    TruncatedPayloadError,
    VersionError,
    load_clip,
    load_model,
    load_spec,
    load_weights,
    offline_forward,
    save_clip,
    save_model,
    save_spec,
    save_weights,
)
from exitstream.formats import _layer_to_json
from exitstream.zoo import benchmark_network, random_clip, random_tiny_network


class TestWeightsFormat:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        tensors = {}
        for i in range(100):
            rank = int(rng.integers(1, 5))
            shape = tuple(int(rng.integers(1, 5)) for _ in range(rank))
            tensors[f"t{i}"] = rng.normal(0, 1, shape).astype(np.float32)
        path = tmp_path / "w.prvw"
        save_weights(path, tensors)
        loaded = load_weights(path)
        assert list(loaded) == list(tensors)
        for name in tensors:
            assert np.array_equal(loaded[name], tensors[name])
            assert loaded[name].dtype == np.float32

    def test_single_entry_byte_layout(self, tmp_path):
        path = tmp_path / "w.prvw"
        save_weights(path, {"b": np.array([1.0], np.float32)})
        expect = (
            b"PRVW"
            + struct.pack("<II", 1, 1)
            + struct.pack("<H", 1)
            + b"b"
            + struct.pack("<BB", 0, 1)
            + struct.pack("<I", 1)
            + bytes([0x00, 0x00, 0x80, 0x3F])
        )
        assert path.read_bytes() == expect

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "w.prvw"
        save_weights(path, {"a": np.zeros(2, np.float32)})
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(BadMagicError):
            load_weights(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "w.prvw"
        save_weights(path, {"a": np.zeros(4, np.float32)})
        data = path.read_bytes()
        path.write_bytes(data[:-3])
        with pytest.raises(TruncatedPayloadError):
            load_weights(path)

    def test_duplicate_names_rejected(self, tmp_path):
        entry = (
            struct.pack("<H", 1) + b"a" + struct.pack("<BB", 0, 1)
            + struct.pack("<I", 1) + struct.pack("<f", 2.0)
        )
        path = tmp_path / "w.prvw"
        path.write_bytes(b"PRVW" + struct.pack("<II", 1, 2) + entry + entry)
        with pytest.raises(DuplicateNameError):
            load_weights(path)

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "w.prvw"
        path.write_bytes(b"PRVW" + struct.pack("<II", 9, 0))
        with pytest.raises(VersionError):
            load_weights(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "w.prvw"
        save_weights(path, {"a": np.zeros(2, np.float32)})
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError):
            load_weights(path)


class TestClipFormat:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(1)
        clip = rng.normal(0, 1, (3, 5, 4, 6)).astype(np.float32)
        path = tmp_path / "c.prvc"
        save_clip(path, clip)
        assert np.array_equal(load_clip(path), clip)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "c.prvc"
        save_clip(path, np.zeros((1, 2, 2, 2), np.float32))
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(TruncatedPayloadError):
            load_clip(path)

    def test_dims_payload_mismatch_rejected(self, tmp_path):
        # header promises more values than the payload carries
        path = tmp_path / "c.prvc"
        path.write_bytes(struct.pack("<4sI4I", b"PRVC", 1, 1, 3, 2, 2) + b"\x00" * 8)
        with pytest.raises(TruncatedPayloadError):
            load_clip(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "c.prvc"
        path.write_bytes(struct.pack("<4sI4I", b"PRVW", 1, 1, 1, 1, 1) + b"\x00" * 4)
        with pytest.raises(BadMagicError):
            load_clip(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "c.prvc"
        payload = np.array([np.inf], np.float32).tobytes()
        path.write_bytes(struct.pack("<4sI4I", b"PRVC", 1, 1, 1, 1, 1) + payload)
        with pytest.raises(NonFiniteDataError):
            load_clip(path)

    def test_save_rejects_non_finite(self, tmp_path):
        clip = np.full((1, 1, 1, 1), np.nan, np.float32)
        with pytest.raises(NonFiniteDataError):
            save_clip(tmp_path / "c.prvc", clip)


class TestSpecFormat:
    def test_round_trip_structural_equality(self, tmp_path):
        rng = np.random.default_rng(2)
        for _ in range(10):
            net = random_tiny_network(rng)
            path = tmp_path / "net.json"
            save_spec(path, net)
            loaded = load_spec(path)
            assert loaded.input_channels == net.input_channels
            assert loaded.input_height == net.input_height
            assert loaded.input_width == net.input_width
            assert loaded.head.mode == net.head.mode
            assert loaded.head.classes == net.head.classes
            assert loaded.head.features == net.head.features
            assert [_layer_to_json(a) for a in loaded.layers] == [
                _layer_to_json(b) for b in net.layers
            ]

    def test_unknown_layer_kind_names_location(self, tmp_path):
        net = benchmark_network()
        path = tmp_path / "net.json"
        save_spec(path, net)
        doc = json.loads(path.read_text())
        doc["layers"][1]["kind"] = "conv4d"
        path.write_text(json.dumps(doc))
        with pytest.raises(SpecParseError, match=r"layers\[1\].*conv4d"):
            load_spec(path)

    def test_missing_field_names_location(self, tmp_path):
        net = benchmark_network()
        path = tmp_path / "net.json"
        save_spec(path, net)
        doc = json.loads(path.read_text())
        del doc["layers"][0]["kernel"]
        path.write_text(json.dumps(doc))
        with pytest.raises(SpecParseError, match="kernel"):
            load_spec(path)

    def test_version_mismatch(self, tmp_path):
        net = benchmark_network()
        path = tmp_path / "net.json"
        save_spec(path, net)
        doc = json.loads(path.read_text())
        doc["version"] = 2
        path.write_text(json.dumps(doc))
        with pytest.raises(VersionError):
            load_spec(path)

    def test_chain_incompatible_rejected_at_load(self, tmp_path):
        net = benchmark_network()
        path = tmp_path / "net.json"
        save_spec(path, net)
        doc = json.loads(path.read_text())
        doc["layers"][3]["in_channels"] = 7  # conv2 no longer matches conv1 output
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigError):
            load_spec(path)

    def test_invalid_json_reported(self, tmp_path):
        path = tmp_path / "net.json"
        path.write_text("{not json")
        with pytest.raises(SpecParseError):
            load_spec(path)


class TestModelRoundTrip:
    def test_forward_identical_after_reload(self, tmp_path):
        rng = np.random.default_rng(3)
        net = random_tiny_network(rng)
        clip = random_clip(rng, net, 12)
        save_model(tmp_path / "net.json", tmp_path / "net.prvw", net)
        loaded = load_model(tmp_path / "net.json", tmp_path / "net.prvw")
        a = offline_forward(clip, net)
        b = offline_forward(clip, loaded)
        assert np.array_equal(a.probs, b.probs)
        assert np.array_equal(a.logits, b.logits)

    def test_missing_tensor_reported(self, tmp_path):
        net = benchmark_network()
        save_model(tmp_path / "net.json", tmp_path / "net.prvw", net)
        from exitstream import bind_weights, load_spec as ls, load_weights as lw

        tensors = lw(tmp_path / "net.prvw")
        del tensors["conv1.weight"]
        with pytest.raises(ConfigError, match="conv1.weight"):
            bind_weights(ls(tmp_path / "net.json"), tensors)
