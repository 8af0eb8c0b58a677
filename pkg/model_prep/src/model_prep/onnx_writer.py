"""Minimal ONNX serializer: enough protobuf wire format to emit the small
convolutional graphs this package trains.

Scalars are varints or fixed32 floats, submessages and strings are
length-delimited, repeated numeric attribute fields are packed. Tensor
payloads go in raw_data as little-endian bytes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

FLOAT = 1
INT64 = 7

_ATTR_FLOAT = 1
_ATTR_INT = 2
_ATTR_STRING = 3
_ATTR_TENSOR = 4
_ATTR_FLOATS = 6
_ATTR_INTS = 7


def _varint(n: int) -> bytes:
    if n < 0:
        n &= (1 << 64) - 1
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _tag(field_no: int, wire_type: int) -> bytes:
    return _varint((field_no << 3) | wire_type)


def _ld(field_no: int, payload: bytes) -> bytes:
    return _tag(field_no, 2) + _varint(len(payload)) + payload


def _vint(field_no: int, value: int) -> bytes:
    return _tag(field_no, 0) + _varint(value)


def _string(field_no: int, value: str) -> bytes:
    return _ld(field_no, value.encode("utf-8"))


def _packed_varints(field_no: int, values) -> bytes:
    body = b"".join(_varint(int(v)) for v in values)
    return _ld(field_no, body)


def tensor(name: str, array: np.ndarray) -> bytes:
    """TensorProto with dims, data_type, name, and raw little-endian data."""
    arr = np.asarray(array)
    if arr.dtype == np.float32:
        data_type = FLOAT
    elif arr.dtype == np.int64:
        data_type = INT64
    else:
        raise TypeError(f"unsupported tensor dtype {arr.dtype}")
    out = b"".join(_vint(1, d) for d in arr.shape)
    out += _vint(2, data_type)
    out += _string(8, name)
    out += _ld(9, np.ascontiguousarray(arr).tobytes())
    return out


def _attribute(name: str, value) -> bytes:
    out = _string(1, name)
    if isinstance(value, bool):
        raise TypeError("attribute booleans are ambiguous; pass an int")
    if isinstance(value, int):
        out += _vint(3, value) + _vint(20, _ATTR_INT)
    elif isinstance(value, float):
        out += _tag(2, 5) + struct.pack("<f", value) + _vint(20, _ATTR_FLOAT)
    elif isinstance(value, str):
        out += _ld(4, value.encode("utf-8")) + _vint(20, _ATTR_STRING)
    elif isinstance(value, bytes):
        out += _ld(5, value) + _vint(20, _ATTR_TENSOR)
    elif isinstance(value, (list, tuple)):
        if all(isinstance(v, int) for v in value):
            out += _packed_varints(8, value) + _vint(20, _ATTR_INTS)
        elif all(isinstance(v, float) for v in value):
            body = b"".join(struct.pack("<f", v) for v in value)
            out += _ld(7, body) + _vint(20, _ATTR_FLOATS)
        else:
            raise TypeError(f"mixed attribute sequence for {name!r}")
    else:
        raise TypeError(f"unsupported attribute value {value!r}")
    return out


def node(
    op_type: str,
    inputs: list[str],
    outputs: list[str],
    name: str = "",
    attrs: dict | None = None,
) -> bytes:
    out = b"".join(_string(1, s) for s in inputs)
    out += b"".join(_string(2, s) for s in outputs)
    if name:
        out += _string(3, name)
    out += _string(4, op_type)
    for key in attrs or {}:
        out += _ld(5, _attribute(key, attrs[key]))
    return out


def value_info(name: str, shape: list[int], elem_type: int = FLOAT) -> bytes:
    dims = b"".join(_ld(1, _vint(1, d)) for d in shape)
    tensor_type = _vint(1, elem_type) + _ld(2, dims)
    return _string(1, name) + _ld(2, _ld(1, tensor_type))


def graph(
    nodes: list[bytes],
    name: str,
    inputs: list[bytes],
    outputs: list[bytes],
    initializers: list[bytes] | None = None,
) -> bytes:
    out = b"".join(_ld(1, n) for n in nodes)
    out += _string(2, name)
    out += b"".join(_ld(5, t) for t in initializers or [])
    out += b"".join(_ld(11, v) for v in inputs)
    out += b"".join(_ld(12, v) for v in outputs)
    return out


def model(graph_bytes: bytes, opset: int = 13, producer: str = "model-prep") -> bytes:
    opset_id = _string(1, "") + _vint(2, opset)
    out = _vint(1, 8)
    out += _string(2, producer)
    out += _ld(7, graph_bytes)
    out += _ld(8, opset_id)
    return out


@dataclass
class GraphBuilder:
    """Accumulates nodes and initializers, then serializes one model."""

    name: str
    nodes: list[bytes] = field(default_factory=list)
    initializers: list[bytes] = field(default_factory=list)
    inputs: list[bytes] = field(default_factory=list)
    outputs: list[bytes] = field(default_factory=list)
    _counter: int = 0

    def add_input(self, name: str, shape: list[int]) -> str:
        self.inputs.append(value_info(name, shape))
        return name

    def add_output(self, name: str, shape: list[int]) -> str:
        self.outputs.append(value_info(name, shape))
        return name

    def add_initializer(self, name: str, array: np.ndarray) -> str:
        self.initializers.append(tensor(name, array))
        return name

    def add_node(
        self, op_type: str, inputs: list[str], outputs: list[str],
        attrs: dict | None = None,
    ) -> str:
        self._counter += 1
        self.nodes.append(
            node(op_type, inputs, outputs, f"{op_type.lower()}_{self._counter}", attrs)
        )
        return outputs[0]

    def serialize(self, opset: int = 13) -> bytes:
        return model(
            graph(self.nodes, self.name, self.inputs, self.outputs, self.initializers),
            opset=opset,
        )
