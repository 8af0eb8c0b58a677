"""Minimal ONNX model loading and inference with numpy.

Implements just enough of the protobuf wire encoding and the operator set to
run small feed-forward image classifiers (Conv/Relu/MaxPool/Gemm/Softmax
chains and close relatives). Model files are the standard exchange format;
no external inference runtime is required.

Conventions: tensors are numpy arrays, graph values live in a name -> array
map, nodes execute in serialized order (the format guarantees topological
order). Unsupported wire features or operators raise ModelLoadError rather
than guessing.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .oracle import ModelLoadError, Oracle, Prediction, prediction_from_scores

_WIRE_VARINT = 0
_WIRE_I64 = 1
_WIRE_LEN = 2
_WIRE_I32 = 5

_TENSOR_DTYPES = {
    1: np.dtype("<f4"),
    2: np.dtype("u1"),
    3: np.dtype("i1"),
    4: np.dtype("<u2"),
    5: np.dtype("<i2"),
    6: np.dtype("<i4"),
    7: np.dtype("<i8"),
    9: np.dtype("?"),
    10: np.dtype("<f2"),
    11: np.dtype("<f8"),
    12: np.dtype("<u4"),
    13: np.dtype("<u8"),
}

_FLOAT = 1
_INT64 = 7
_INT32 = 6


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise ModelLoadError("truncated varint")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise ModelLoadError("varint exceeds 64 bits")


def _signed64(v: int) -> int:
    return v - (1 << 64) if v >= (1 << 63) else v


def _parse_fields(buf: bytes) -> dict[int, list[tuple[int, object]]]:
    """Split a message into {field_number: [(wire_type, payload), ...]}."""
    fields: dict[int, list[tuple[int, object]]] = {}
    pos = 0
    n = len(buf)
    while pos < n:
        tag, pos = _read_varint(buf, pos)
        num, wt = tag >> 3, tag & 7
        if num == 0:
            raise ModelLoadError("field number 0 is invalid")
        if wt == _WIRE_VARINT:
            val, pos = _read_varint(buf, pos)
        elif wt == _WIRE_I64:
            val, pos = buf[pos : pos + 8], pos + 8
        elif wt == _WIRE_LEN:
            ln, pos = _read_varint(buf, pos)
            if pos + ln > n:
                raise ModelLoadError("length-delimited field overruns buffer")
            val, pos = buf[pos : pos + ln], pos + ln
        elif wt == _WIRE_I32:
            val, pos = buf[pos : pos + 4], pos + 4
        else:
            raise ModelLoadError(f"unsupported wire type {wt}")
        fields.setdefault(num, []).append((wt, val))
    return fields


def _first(fields, num, default=None):
    entries = fields.get(num)
    return entries[0][1] if entries else default


def _first_varint(fields, num, default=0) -> int:
    entries = fields.get(num)
    if not entries:
        return default
    wt, val = entries[0]
    if wt != _WIRE_VARINT:
        raise ModelLoadError(f"field {num}: expected varint")
    return val


def _first_str(fields, num, default="") -> str:
    raw = _first(fields, num)
    return raw.decode("utf-8") if isinstance(raw, bytes) else default


def _repeated_varints(fields, num, signed=False) -> list[int]:
    out: list[int] = []
    for wt, val in fields.get(num, []):
        if wt == _WIRE_VARINT:
            out.append(val)
        elif wt == _WIRE_LEN:
            pos = 0
            while pos < len(val):
                v, pos = _read_varint(val, pos)
                out.append(v)
        else:
            raise ModelLoadError(f"field {num}: expected varint data")
    return [_signed64(v) for v in out] if signed else out


def _repeated_floats(fields, num) -> list[float]:
    out: list[float] = []
    for wt, val in fields.get(num, []):
        if wt == _WIRE_I32:
            out.append(struct.unpack("<f", val)[0])
        elif wt == _WIRE_LEN:
            out.extend(np.frombuffer(val, dtype="<f4").tolist())
        else:
            raise ModelLoadError(f"field {num}: expected float data")
    return out


def _decode_tensor(buf: bytes) -> tuple[str, np.ndarray]:
    f = _parse_fields(buf)
    dims = _repeated_varints(f, 1, signed=True)
    data_type = _first_varint(f, 2, 0)
    name = _first_str(f, 8)
    dtype = _TENSOR_DTYPES.get(data_type)
    if dtype is None:
        raise ModelLoadError(f"tensor {name!r}: unsupported element type {data_type}")
    raw = _first(f, 9)
    if raw is not None:
        arr = np.frombuffer(raw, dtype=dtype)
    elif data_type == _FLOAT and 4 in f:
        arr = np.array(_repeated_floats(f, 4), dtype=np.float32)
    elif data_type == _INT64 and 7 in f:
        arr = np.array(_repeated_varints(f, 7, signed=True), dtype=np.int64)
    elif data_type == _INT32 and 5 in f:
        arr = np.array(
            [np.int64(v).astype(np.int32) for v in _repeated_varints(f, 5)],
            dtype=np.int32,
        )
    else:
        arr = np.array([], dtype=dtype)
    try:
        return name, arr.reshape(dims).copy()
    except ValueError as e:
        raise ModelLoadError(f"tensor {name!r}: data does not fit dims {dims}") from e


def _decode_attribute(buf: bytes) -> tuple[str, object]:
    f = _parse_fields(buf)
    name = _first_str(f, 1)
    atype = _first_varint(f, 20, 0)
    if atype == 0:
        # exporters may omit the discriminator; infer from the populated field
        for num, inferred in ((2, 1), (3, 2), (4, 3), (5, 4), (7, 6), (8, 7)):
            if num in f:
                atype = inferred
                break
    if atype == 1:
        raw = _first(f, 2, b"\x00\x00\x00\x00")
        return name, float(struct.unpack("<f", raw)[0])
    if atype == 2:
        return name, _signed64(_first_varint(f, 3, 0))
    if atype == 3:
        return name, _first_str(f, 4)
    if atype == 4:
        return name, _decode_tensor(_first(f, 5, b""))[1]
    if atype == 6:
        return name, tuple(_repeated_floats(f, 7))
    if atype == 7:
        return name, tuple(_repeated_varints(f, 8, signed=True))
    raise ModelLoadError(f"attribute {name!r}: unsupported type {atype}")


@dataclass(frozen=True)
class OnnxNode:
    op_type: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    attrs: dict[str, object] = field(default_factory=dict)
    name: str = ""


def _decode_node(buf: bytes) -> OnnxNode:
    f = _parse_fields(buf)
    inputs = tuple(v.decode("utf-8") for _, v in f.get(1, []))
    outputs = tuple(v.decode("utf-8") for _, v in f.get(2, []))
    attrs = dict(_decode_attribute(v) for _, v in f.get(5, []))
    return OnnxNode(_first_str(f, 4), inputs, outputs, attrs, _first_str(f, 3))


@dataclass(frozen=True)
class ValueInfo:
    name: str
    elem_type: int
    shape: tuple[object, ...]


def _decode_value_info(buf: bytes) -> ValueInfo:
    f = _parse_fields(buf)
    name = _first_str(f, 1)
    elem_type = 0
    shape: tuple[object, ...] = ()
    type_raw = _first(f, 2)
    if type_raw is not None:
        tf = _parse_fields(type_raw)
        tensor_raw = _first(tf, 1)
        if tensor_raw is not None:
            ttf = _parse_fields(tensor_raw)
            elem_type = _first_varint(ttf, 1, 0)
            shape_raw = _first(ttf, 2)
            if shape_raw is not None:
                dims = []
                for _, draw in _parse_fields(shape_raw).get(1, []):
                    df = _parse_fields(draw)
                    if 1 in df:
                        dims.append(_signed64(_first_varint(df, 1)))
                    elif 2 in df:
                        dims.append(_first_str(df, 2))
                    else:
                        dims.append(None)
                shape = tuple(dims)
    return ValueInfo(name, elem_type, shape)


@dataclass(frozen=True)
class OnnxGraph:
    name: str
    nodes: tuple[OnnxNode, ...]
    initializers: dict[str, np.ndarray]
    inputs: tuple[ValueInfo, ...]
    outputs: tuple[ValueInfo, ...]


@dataclass(frozen=True)
class OnnxModel:
    graph: OnnxGraph
    ir_version: int
    opset_version: int
    producer: str

    @property
    def input_name(self) -> str:
        for vi in self.graph.inputs:
            if vi.name not in self.graph.initializers:
                return vi.name
        raise ModelLoadError("model has no non-initializer input")

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(vi.name for vi in self.graph.outputs)


def parse_model(data: bytes) -> OnnxModel:
    try:
        f = _parse_fields(data)
    except ModelLoadError:
        raise
    except Exception as e:
        raise ModelLoadError(f"unreadable model bytes: {e}") from e
    graph_raw = _first(f, 7)
    if graph_raw is None:
        raise ModelLoadError("model has no graph")
    gf = _parse_fields(graph_raw)
    nodes = tuple(_decode_node(v) for _, v in gf.get(1, []))
    initializers = dict(_decode_tensor(v) for _, v in gf.get(5, []))
    inputs = tuple(_decode_value_info(v) for _, v in gf.get(11, []))
    outputs = tuple(_decode_value_info(v) for _, v in gf.get(12, []))
    if not outputs:
        raise ModelLoadError("model graph declares no outputs")
    opset = 0
    for _, v in f.get(8, []):
        of = _parse_fields(v)
        if _first_str(of, 1) == "":
            opset = _first_varint(of, 2, 0)
    return OnnxModel(
        graph=OnnxGraph(_first_str(gf, 2), nodes, initializers, inputs, outputs),
        ir_version=_first_varint(f, 1, 0),
        opset_version=opset,
        producer=_first_str(f, 2),
    )


def load_model(path: str | Path) -> OnnxModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ModelLoadError(f"cannot read model file {path}: {e}") from e
    return parse_model(data)


def _pair(attrs, key, default) -> tuple[int, int]:
    v = attrs.get(key, default)
    return (int(v[0]), int(v[1]))


def _windows(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    # (N, C, H, W) -> (N, C, OH, OW, kh, kw)
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::sh, ::sw]


def _pad_spatial(x: np.ndarray, pads, value=0.0) -> np.ndarray:
    pt, pl, pb, pr = (int(p) for p in pads)
    if pt == pl == pb == pr == 0:
        return x
    return np.pad(
        x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), mode="constant", constant_values=value
    )


def _op_conv(node: OnnxNode, vals: list[np.ndarray]) -> np.ndarray:
    x, w = vals[0], vals[1]
    b = vals[2] if len(vals) > 2 else None
    attrs = node.attrs
    if int(attrs.get("group", 1)) != 1:
        raise ModelLoadError("Conv: only group=1 is supported")
    if tuple(int(d) for d in attrs.get("dilations", (1, 1))) != (1, 1):
        raise ModelLoadError("Conv: only dilation 1 is supported")
    sh, sw = _pair(attrs, "strides", (1, 1))
    pads = attrs.get("pads", (0, 0, 0, 0))
    kh, kw = w.shape[2], w.shape[3]
    xp = _pad_spatial(x, pads)
    win = _windows(xp, kh, kw, sh, sw)
    n, c, oh, ow = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    y = cols @ w.reshape(w.shape[0], -1).T
    y = y.reshape(n, oh, ow, w.shape[0]).transpose(0, 3, 1, 2)
    if b is not None:
        y = y + b.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(y)


def _op_maxpool(node: OnnxNode, vals: list[np.ndarray]) -> np.ndarray:
    x = vals[0]
    kh, kw = _pair(node.attrs, "kernel_shape", None)
    sh, sw = _pair(node.attrs, "strides", (kh, kw))
    xp = _pad_spatial(x, node.attrs.get("pads", (0, 0, 0, 0)), value=-np.inf)
    return np.ascontiguousarray(_windows(xp, kh, kw, sh, sw).max(axis=(4, 5)))


def _op_avgpool(node: OnnxNode, vals: list[np.ndarray]) -> np.ndarray:
    x = vals[0]
    if any(int(p) for p in node.attrs.get("pads", (0, 0, 0, 0))):
        raise ModelLoadError("AveragePool: padding is not supported")
    kh, kw = _pair(node.attrs, "kernel_shape", None)
    sh, sw = _pair(node.attrs, "strides", (kh, kw))
    return np.ascontiguousarray(_windows(x, kh, kw, sh, sw).mean(axis=(4, 5)))


def _op_gemm(node: OnnxNode, vals: list[np.ndarray]) -> np.ndarray:
    a, b = vals[0], vals[1]
    c = vals[2] if len(vals) > 2 else None
    attrs = node.attrs
    if int(attrs.get("transA", 0)):
        a = a.T
    if int(attrs.get("transB", 0)):
        b = b.T
    y = float(attrs.get("alpha", 1.0)) * (a @ b)
    if c is not None:
        y = y + float(attrs.get("beta", 1.0)) * c
    return y


def _op_reshape(node: OnnxNode, vals: list[np.ndarray]) -> np.ndarray:
    x, shape = vals[0], vals[1]
    target = [int(s) for s in np.asarray(shape).reshape(-1)]
    resolved = [x.shape[i] if s == 0 else s for i, s in enumerate(target)]
    return x.reshape(resolved)


def _op_flatten(node: OnnxNode, vals: list[np.ndarray]) -> np.ndarray:
    x = vals[0]
    axis = int(node.attrs.get("axis", 1)) % (x.ndim + 1)
    lead = int(np.prod(x.shape[:axis], dtype=np.int64)) if axis else 1
    return x.reshape(lead, -1)


def _op_softmax(node: OnnxNode, vals: list[np.ndarray]) -> np.ndarray:
    x = vals[0]
    axis = int(node.attrs.get("axis", -1))
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


_OPS = {
    "Conv": _op_conv,
    "Relu": lambda node, vals: np.maximum(vals[0], 0),
    "MaxPool": _op_maxpool,
    "AveragePool": _op_avgpool,
    "GlobalAveragePool": lambda node, vals: vals[0].mean(axis=(2, 3), keepdims=True),
    "Gemm": _op_gemm,
    "MatMul": lambda node, vals: vals[0] @ vals[1],
    "Add": lambda node, vals: vals[0] + vals[1],
    "Reshape": _op_reshape,
    "Flatten": _op_flatten,
    "Softmax": _op_softmax,
    "Identity": lambda node, vals: vals[0],
    "Constant": lambda node, vals: node.attrs["value"],
}


def run_model(model: OnnxModel, feeds: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Execute the graph on the given inputs; returns all declared outputs."""
    values: dict[str, np.ndarray] = dict(model.graph.initializers)
    values.update(feeds)
    for node in model.graph.nodes:
        op = _OPS.get(node.op_type)
        if op is None:
            raise ModelLoadError(f"unsupported operator {node.op_type!r}")
        try:
            ins = [values[name] for name in node.inputs if name]
        except KeyError as e:
            raise ModelLoadError(
                f"node {node.name or node.op_type}: missing input {e.args[0]!r}"
            ) from None
        result = op(node, ins)
        values[node.outputs[0]] = result
    missing = [n for n in model.output_names if n not in values]
    if missing:
        raise ModelLoadError(f"graph never produced outputs {missing}")
    return {n: values[n] for n in model.output_names}


@dataclass(frozen=True)
class Preprocessing:
    """Backend-owned input pipeline: resize, scale, normalize, reorder."""

    input_size: tuple[int, int]
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    channel_order: str = "rgb"
    scale: float = 1.0 / 255.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))
        if len(self.input_size) != 2 or any(v < 1 for v in self.input_size):
            raise ValueError(f"input_size {self.input_size} invalid")
        if self.channel_order not in ("rgb", "bgr"):
            raise ValueError(f'channel_order must be "rgb" or "bgr", got {self.channel_order!r}')
        if any(s == 0 for s in self.std):
            raise ValueError("std components must be nonzero")

    def apply(self, image: np.ndarray) -> np.ndarray:
        """HxWx3 uint8 RGB -> 1x3xhxw float32 model input."""
        h, w = self.input_size
        if image.shape[:2] != (h, w):
            pil = Image.fromarray(image, mode="RGB").resize((w, h), Image.BILINEAR)
            image = np.asarray(pil, dtype=np.uint8)
        x = image.astype(np.float32) * np.float32(self.scale)
        x = (x - np.asarray(self.mean, np.float32)) / np.asarray(self.std, np.float32)
        if self.channel_order == "bgr":
            x = x[:, :, ::-1]
        return np.ascontiguousarray(x.transpose(2, 0, 1)[None, ...])

    def as_json(self) -> dict:
        return {
            "input_size": list(self.input_size),
            "mean": list(self.mean),
            "std": list(self.std),
            "channel_order": self.channel_order,
            "scale": self.scale,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Preprocessing":
        return cls(
            input_size=tuple(obj["input_size"]),
            mean=tuple(obj["mean"]),
            std=tuple(obj["std"]),
            channel_order=obj.get("channel_order", "rgb"),
            scale=float(obj.get("scale", 1.0 / 255.0)),
        )


class OnnxOracle(Oracle):
    """Embedded inference oracle. Stateless per query, safe for concurrent use."""

    def __init__(
        self,
        model: OnnxModel,
        preprocessing: Preprocessing,
        label_names: tuple[str, ...] | None = None,
    ):
        self.model = model
        self.preprocessing = preprocessing
        self.label_names = label_names

    def classify(self, image: np.ndarray) -> Prediction:
        feeds = {self.model.input_name: self.preprocessing.apply(image)}
        out = run_model(self.model, feeds)[self.model.output_names[0]]
        scores = np.asarray(out, dtype=np.float64).reshape(-1)
        return prediction_from_scores(scores, self.label_names)


def open_model_oracle(
    path: str | Path, preprocessing: Preprocessing | None = None
) -> OnnxOracle:
    """Open a model bundle directory (model.onnx + preprocessing.json +
    optional labels.json) or a bare .onnx file with a sibling
    preprocessing.json.
    """
    path = Path(path)
    if path.is_dir():
        model_path = path / "model.onnx"
        pre_path = path / "preprocessing.json"
        labels_path = path / "labels.json"
    else:
        model_path = path
        pre_path = path.with_name("preprocessing.json")
        labels_path = path.with_name("labels.json")
    model = load_model(model_path)
    if preprocessing is None:
        try:
            pre_obj = json.loads(pre_path.read_text())
        except OSError as e:
            raise ModelLoadError(f"cannot read preprocessing spec {pre_path}: {e}") from e
        except ValueError as e:
            raise ModelLoadError(f"preprocessing spec {pre_path} is not JSON: {e}") from e
        try:
            preprocessing = Preprocessing.from_json(pre_obj)
        except (KeyError, TypeError, ValueError) as e:
            raise ModelLoadError(f"preprocessing spec {pre_path} invalid: {e}") from e
    label_names = None
    if labels_path.exists():
        try:
            names = json.loads(labels_path.read_text())
            label_names = tuple(str(n) for n in names)
        except (OSError, ValueError) as e:
            raise ModelLoadError(f"label table {labels_path} unreadable: {e}") from e
    return OnnxOracle(model, preprocessing, label_names)
