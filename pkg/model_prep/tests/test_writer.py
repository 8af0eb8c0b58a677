"""Serializer tests, cross-validated against the attack toolkit's reader:
whatever this package writes, that independent parser must read back.
"""
import numpy as np
import pytest

from advcf.onnx_model import parse_model, run_model
from model_prep.onnx_writer import (
    GraphBuilder,
    _attribute,
    _varint,
    graph,
    model,
    node,
    tensor,
    value_info,
)


class TestVarint:
    def test_small_values(self):
        assert _varint(0) == b"\x00"
        assert _varint(1) == b"\x01"
        assert _varint(127) == b"\x7f"
        assert _varint(128) == b"\x80\x01"
        assert _varint(300) == b"\xac\x02"

    def test_negative_uses_64_bit_twos_complement(self):
        assert len(_varint(-1)) == 10


class TestTensorRoundtrip:
    def test_float32_through_reader(self):
        arr = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
        g = GraphBuilder("t")
        g.add_input("x", [2, 3, 4])
        g.add_output("y", [2, 3, 4])
        g.add_initializer("w", arr)
        g.add_node("Identity", ["w"], ["y"])
        parsed = parse_model(g.serialize())
        assert "w" in parsed.graph.initializers
        np.testing.assert_array_equal(parsed.graph.initializers["w"], arr)

    def test_int64_dims(self):
        arr = np.array([1, -1, 4], dtype=np.int64)
        g = GraphBuilder("t")
        g.add_input("x", [3])
        g.add_output("y", [3])
        g.add_initializer("shape", arr)
        g.add_node("Identity", ["shape"], ["y"])
        parsed = parse_model(g.serialize())
        np.testing.assert_array_equal(parsed.graph.initializers["shape"], arr)

    def test_unsupported_dtype(self):
        with pytest.raises(TypeError):
            tensor("bad", np.zeros(3, dtype=np.float64))


class TestAttributes:
    def _parse_attrs(self, attrs):
        g = GraphBuilder("t")
        g.add_input("x", [1])
        g.add_output("y", [1])
        g.add_node("Fake", ["x"], ["y"], attrs)
        return parse_model(g.serialize()).graph.nodes[0].attrs

    def test_scalar_kinds(self):
        got = self._parse_attrs({"axis": 1, "alpha": 0.5, "mode": "reflect"})
        assert got["axis"] == 1
        assert got["alpha"] == pytest.approx(0.5)
        assert got["mode"] == "reflect"

    def test_sequences(self):
        got = self._parse_attrs({"pads": [1, 1, 2, 2], "scales": [1.0, 2.0]})
        assert tuple(got["pads"]) == (1, 1, 2, 2)
        assert tuple(got["scales"]) == pytest.approx((1.0, 2.0))

    def test_rejects_bool_and_mixed(self):
        with pytest.raises(TypeError):
            _attribute("flag", True)
        with pytest.raises(TypeError):
            _attribute("seq", [1, "two"])


class TestModelStructure:
    def test_metadata_fields(self):
        g = graph(
            [node("Relu", ["x"], ["y"])],
            "tiny",
            [value_info("x", [1, 2])],
            [value_info("y", [1, 2])],
        )
        parsed = parse_model(model(g, opset=13, producer="writer-test"))
        assert parsed.graph.name == "tiny"
        assert parsed.graph.nodes[0].op_type == "Relu"
        assert parsed.graph.inputs[0].name == "x"
        assert tuple(v.name for v in parsed.graph.outputs) == ("y",)

    def test_executable_by_reader(self):
        g = GraphBuilder("exec")
        g.add_input("x", [1, 4])
        g.add_output("y", [1, 2])
        g.add_initializer("w", np.array([[1, 0], [0, 1], [1, 1], [0, 0]], np.float32))
        g.add_node("MatMul", ["x", "w"], ["mm"])
        g.add_node("Relu", ["mm"], ["y"])
        parsed = parse_model(g.serialize())
        out = run_model(parsed, {"x": np.array([[1.0, -2.0, 3.0, 4.0]], np.float32)})
        np.testing.assert_allclose(out["y"], [[4.0, 1.0]])
