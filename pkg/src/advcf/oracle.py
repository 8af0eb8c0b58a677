"""Black-box classifier abstraction.

Every path to a model goes through :class:`Oracle`: classify an HxWx3 uint8
RGB image, get back a label and a per-class score vector, nothing else. Four
backends: embedded inference on a serialized model file, an HTTP endpoint, a
child process speaking JSON lines, and registered synthetic oracles with
closed-form score rules for testing.

Synthetic oracle scores are shaped so the top-1 label never changes with the
film (scores stay strictly ordered); searches over them exercise fitness
descent without early termination. Registry names ending in ``_term`` opt out
and may flip labels.
"""
from __future__ import annotations

import json
import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .images import png_base64


class OracleError(Exception):
    """Base class for classification failures."""


class ModelLoadError(OracleError):
    """Model file missing, unreadable, or structurally invalid."""


class ConnectionFailure(OracleError):
    """Remote endpoint unreachable."""


class TimeoutFailure(OracleError):
    """Remote endpoint did not answer within the configured timeout."""


class ProtocolError(OracleError):
    """Response did not match the wire contract."""


class NotCleanSampleError(OracleError):
    """The image to attack is already misclassified."""


@dataclass(frozen=True)
class Prediction:
    """Classifier output: argmax label, per-class scores, optional names."""

    label: int
    scores: tuple[float, ...]
    label_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        scores = tuple(float(s) for s in self.scores)
        object.__setattr__(self, "scores", scores)
        if not scores:
            raise ValueError("scores must be non-empty")
        # first maximum wins, matching argmax over the raw vector
        expect = max(range(len(scores)), key=lambda i: (scores[i], -i))
        if self.label != expect:
            raise ValueError(f"label {self.label} is not argmax(scores) = {expect}")

    @property
    def normalized(self) -> bool:
        return abs(sum(self.scores) - 1.0) <= 1e-4

    def as_json(self) -> dict:
        return {"label": self.label, "scores": list(self.scores)}


def prediction_from_scores(
    scores, label_names: tuple[str, ...] | None = None
) -> Prediction:
    vec = [float(s) for s in scores]
    label = int(np.argmax(np.asarray(vec)))
    return Prediction(label, tuple(vec), label_names)


class QueryLedger:
    """Thread-safe monotone counter of oracle queries, with named buckets."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._total = 0
        self._buckets: dict[str, int] = {}

    def record(self, n: int = 1, bucket: str = "default") -> None:
        if n < 0:
            raise ValueError("query count cannot decrease")
        with self._lock:
            self._total += n
            self._buckets[bucket] = self._buckets.get(bucket, 0) + n

    @property
    def total_queries(self) -> int:
        with self._lock:
            return self._total

    def breakdown(self) -> dict[str, int]:
        with self._lock:
            return dict(self._buckets)


class Oracle:
    """Behavioral interface: classify(image) -> Prediction, deterministically."""

    def classify(self, image: np.ndarray) -> Prediction:
        raise NotImplementedError


class CountingOracle(Oracle):
    """Wrapper that records every classify call in a ledger."""

    def __init__(self, inner: Oracle, ledger: QueryLedger, bucket: str = "default"):
        self.inner = inner
        self.ledger = ledger
        self.bucket = bucket

    def classify(self, image: np.ndarray) -> Prediction:
        p = self.inner.classify(image)
        self.ledger.record(1, self.bucket)
        return p


class SyntheticOracle(Oracle):
    """Deterministic oracle computing scores from image statistics."""

    def __init__(self, fn: Callable[[np.ndarray], "list[float] | tuple[float, ...]"], name: str = "synthetic"):
        self._fn = fn
        self.name = name

    def classify(self, image: np.ndarray) -> Prediction:
        return prediction_from_scores(self._fn(np.asarray(image)))


_SYNTHETIC_REGISTRY: dict[str, Callable[[], Oracle]] = {}


def register_synthetic(name: str, factory: Callable[[], Oracle]) -> None:
    _SYNTHETIC_REGISTRY[name] = factory


def make_synthetic_oracle(name: str) -> Oracle:
    try:
        return _SYNTHETIC_REGISTRY[name]()
    except KeyError:
        raise ModelLoadError(
            f"unknown synthetic oracle {name!r}; known: {sorted(_SYNTHETIC_REGISTRY)}"
        ) from None


def synthetic_names() -> tuple[str, ...]:
    return tuple(sorted(_SYNTHETIC_REGISTRY))


def _mean_rgb(image: np.ndarray) -> np.ndarray:
    return image.reshape(-1, 3).mean(axis=0, dtype=np.float64)


def _two_class(confidence: float) -> tuple[float, float]:
    # keeps argmax at class 0 for any confidence in [0, 1]
    return (0.5 + confidence / 2.0, 0.5 - confidence / 2.0)


def _register_builtins() -> None:
    def mean_red() -> Oracle:
        def fn(img):
            return _two_class(1.0 - _mean_rgb(img)[0] / 255.0)

        return SyntheticOracle(fn, "mean_red")

    def color_distance() -> Oracle:
        target = np.array([151.0, 25.0, 93.0])
        scale = float(np.linalg.norm([255.0, 255.0, 255.0]))

        def fn(img):
            return _two_class(float(np.linalg.norm(_mean_rgb(img) - target)) / scale)

        return SyntheticOracle(fn, "color_distance")

    def channel_sum() -> Oracle:
        def fn(img):
            return _two_class(float(_mean_rgb(img).sum()) / 765.0)

        return SyntheticOracle(fn, "channel_sum")

    def green_minus_blue() -> Oracle:
        def fn(img):
            m = _mean_rgb(img)
            return _two_class(0.5 + (m[1] - m[2]) / 510.0)

        return SyntheticOracle(fn, "green_minus_blue")

    def ridge() -> Oracle:
        # non-separable surface with a unique sharp optimum
        target = np.array([32.0, 224.0, 128.0])

        def fn(img):
            m = _mean_rgb(img)
            d = np.abs(m - target)
            v = 0.6 * d.max() + 0.4 * d.sum() / 3.0
            return _two_class(float(v) / 255.0)

        return SyntheticOracle(fn, "ridge")

    def brightness_linear() -> Oracle:
        def fn(img):
            return _two_class(float(np.asarray(img, np.float64).mean()) / 255.0)

        return SyntheticOracle(fn, "brightness_linear")

    def constant() -> Oracle:
        return SyntheticOracle(lambda img: (0.63, 0.37), "constant")

    def box_term() -> Oracle:
        # misclassifies iff the mean color lands in a box and the image is
        # dim enough for the film to plausibly be strong
        lo = np.array([96.0, 0.0, 160.0])
        hi = np.array([192.0, 96.0, 255.0])

        def fn(img):
            m = _mean_rgb(img)
            inside = bool(np.all(m >= lo) and np.all(m <= hi))
            return (0.2, 0.8) if inside else (0.8, 0.2)

        return SyntheticOracle(fn, "box_term")

    register_synthetic("mean_red", mean_red)
    register_synthetic("color_distance", color_distance)
    register_synthetic("channel_sum", channel_sum)
    register_synthetic("green_minus_blue", green_minus_blue)
    register_synthetic("ridge", ridge)
    register_synthetic("brightness_linear", brightness_linear)
    register_synthetic("constant", constant)
    register_synthetic("box_term", box_term)


_register_builtins()


class RemoteOracle(Oracle):
    """HTTP backend: POST /classify with a base64 PNG, parse label + scores.

    No retries: a retried query would double-count against attack budgets.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def classify(self, image: np.ndarray) -> Prediction:
        import requests

        body = {"image_png_b64": png_base64(image)}
        try:
            resp = requests.post(
                self.endpoint + "/classify", json=body, timeout=self.timeout
            )
        except requests.exceptions.Timeout as e:
            raise TimeoutFailure(f"no answer from {self.endpoint} within {self.timeout}s") from e
        except requests.exceptions.ConnectionError as e:
            raise ConnectionFailure(f"cannot reach {self.endpoint}") from e
        if resp.status_code != 200:
            raise ProtocolError(f"{self.endpoint} answered HTTP {resp.status_code}")
        return _parse_wire_prediction(resp, self.endpoint)


def _parse_wire_prediction(resp, source: str) -> Prediction:
    try:
        obj = resp.json() if hasattr(resp, "json") else json.loads(resp)
    except ValueError as e:
        raise ProtocolError(f"{source} returned non-JSON body") from e
    return _prediction_from_wire(obj, source)


def _prediction_from_wire(obj, source: str) -> Prediction:
    if not isinstance(obj, dict) or "label" not in obj or "scores" not in obj:
        raise ProtocolError(f'{source} response missing "label"/"scores"')
    try:
        label = int(obj["label"])
        scores = tuple(float(s) for s in obj["scores"])
    except (TypeError, ValueError) as e:
        raise ProtocolError(f"{source} returned malformed label/scores") from e
    try:
        return Prediction(label, scores)
    except ValueError as e:
        raise ProtocolError(f"{source}: {e}") from e


class ExecOracle(Oracle):
    """Child-process backend: one JSON request per line on stdin, one JSON
    response per line on stdout. The child persists across queries.
    """

    def __init__(self, command: str):
        self.command = command
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise ModelLoadError(f"cannot start oracle process {command!r}: {e}") from e

    def classify(self, image: np.ndarray) -> Prediction:
        line = json.dumps({"image_png_b64": png_base64(image)})
        with self._lock:
            if self._proc.poll() is not None:
                raise ConnectionFailure(f"oracle process {self.command!r} exited")
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
                answer = self._proc.stdout.readline()
            except (BrokenPipeError, OSError) as e:
                raise ConnectionFailure(f"oracle process {self.command!r} pipe broke") from e
        if not answer:
            raise ConnectionFailure(f"oracle process {self.command!r} closed its output")
        try:
            obj = json.loads(answer)
        except ValueError as e:
            raise ProtocolError(f"oracle process returned non-JSON line") from e
        return _prediction_from_wire(obj, self.command)

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "ExecOracle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_oracle(spec: str) -> Oracle:
    """Open an oracle from a backend spec string.

    Forms: ``onnx:PATH`` (model bundle), ``http:URL`` or ``https:URL``,
    ``exec:CMD`` (child process), ``synthetic:NAME`` (registry).
    """
    kind, sep, rest = spec.partition(":")
    if not sep or not rest:
        raise ValueError(f"oracle spec {spec!r} is not of the form kind:value")
    if kind == "onnx":
        from .onnx_model import open_model_oracle

        return open_model_oracle(rest)
    if kind in ("http", "https"):
        return RemoteOracle(spec)
    if kind == "exec":
        return ExecOracle(rest)
    if kind == "synthetic":
        return make_synthetic_oracle(rest)
    raise ValueError(f"unknown oracle backend {kind!r}")
