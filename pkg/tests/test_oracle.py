"""Oracle abstraction tests: prediction invariants, ledger accounting,
synthetic registry, remote wire protocol against a loopback stub, and the
child-process backend.
"""
import http.server
import json
import sys
import threading

import numpy as np
import pytest

from advcf.oracle import (
    ConnectionFailure,
    CountingOracle,
    ExecOracle,
    ModelLoadError,
    Prediction,
    ProtocolError,
    QueryLedger,
    RemoteOracle,
    SyntheticOracle,
    make_synthetic_oracle,
    open_oracle,
    prediction_from_scores,
    synthetic_names,
)


class TestPrediction:
    def test_argmax_consistency_enforced(self):
        with pytest.raises(ValueError):
            Prediction(label=0, scores=(0.2, 0.8))

    def test_first_max_wins_ties(self):
        p = Prediction(label=1, scores=(0.1, 0.45, 0.45))
        assert p.label == 1
        with pytest.raises(ValueError):
            Prediction(label=2, scores=(0.1, 0.45, 0.45))

    def test_normalized_flag(self):
        assert Prediction(0, (0.6, 0.4)).normalized
        assert not Prediction(0, (1.2, 0.8)).normalized

    def test_from_scores(self):
        p = prediction_from_scores([0.1, 0.7, 0.2])
        assert p.label == 1

    def test_empty_scores_rejected(self):
        with pytest.raises(ValueError):
            Prediction(0, ())


class TestQueryLedger:
    def test_monotone_total(self):
        led = QueryLedger()
        led.record(3, "a")
        led.record(2, "b")
        assert led.total_queries == 5
        assert led.breakdown() == {"a": 3, "b": 2}

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            QueryLedger().record(-1)

    def test_thread_safety(self):
        led = QueryLedger()

        def work():
            for _ in range(1000):
                led.record(1, "t")

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert led.total_queries == 8000

    def test_counting_oracle_matches_calls(self):
        led = QueryLedger()
        oracle = CountingOracle(SyntheticOracle(lambda img: (0.6, 0.4)), led, "run0")
        img = np.zeros((4, 4, 3), np.uint8)
        for _ in range(17):
            oracle.classify(img)
        assert led.total_queries == 17
        assert led.breakdown() == {"run0": 17}


class TestSyntheticRegistry:
    def test_known_names_present(self):
        names = synthetic_names()
        for expected in ("mean_red", "color_distance", "constant", "box_term"):
            assert expected in names

    def test_mean_red_extremes(self):
        oracle = make_synthetic_oracle("mean_red")
        red = np.zeros((4, 4, 3), np.uint8)
        red[:, :, 0] = 255
        # confidence = 1 - meanRed/255 = 0 -> shaped score 0.5
        assert oracle.classify(red).scores[0] == pytest.approx(0.5)
        black = np.zeros((4, 4, 3), np.uint8)
        assert oracle.classify(black).scores[0] == pytest.approx(1.0)

    def test_constant_ignores_input(self):
        oracle = make_synthetic_oracle("constant")
        a = oracle.classify(np.zeros((4, 4, 3), np.uint8))
        b = oracle.classify(np.full((9, 9, 3), 201, np.uint8))
        assert a == b

    def test_determinism(self):
        oracle = make_synthetic_oracle("ridge")
        img = np.random.default_rng(0).integers(0, 256, (8, 8, 3), dtype=np.uint8)
        assert oracle.classify(img) == oracle.classify(img)

    def test_unknown_name(self):
        with pytest.raises(ModelLoadError):
            make_synthetic_oracle("no_such_oracle")

    def test_shaped_scores_keep_argmax_stable(self):
        # non-terminating synthetics must never flip the top-1 label
        rng = np.random.default_rng(1)
        for name in synthetic_names():
            if name.endswith("_term"):
                continue
            oracle = make_synthetic_oracle(name)
            for _ in range(20):
                img = rng.integers(0, 256, (6, 6, 3), dtype=np.uint8)
                assert oracle.classify(img).label == 0, name

    def test_box_term_flips_inside_box(self):
        oracle = make_synthetic_oracle("box_term")
        inside = np.zeros((4, 4, 3), np.uint8)
        inside[:, :] = (150, 50, 200)
        assert oracle.classify(inside).label == 1
        outside = np.zeros((4, 4, 3), np.uint8)
        assert oracle.classify(outside).label == 0


class _StubHandler(http.server.BaseHTTPRequestHandler):
    payload: bytes = b'{"label": 1, "scores": [0.25, 0.7, 0.05]}'
    status: int = 200

    def do_POST(self):
        if self.path != "/classify":
            self.send_response(404)
            self.end_headers()
            return
        self.rfile.read(int(self.headers.get("Content-Length", 0)))
        self.send_response(self.status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(self.payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.payload = b'{"label": 1, "scores": [0.25, 0.7, 0.05]}'
    _StubHandler.status = 200
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


class TestRemoteOracle:
    def test_round_trip(self, stub_server):
        oracle = RemoteOracle(stub_server)
        p = oracle.classify(np.zeros((4, 4, 3), np.uint8))
        assert p.label == 1
        assert p.scores == (0.25, 0.7, 0.05)

    def test_unnormalized_scores_accepted(self, stub_server):
        _StubHandler.payload = b'{"label": 0, "scores": [1.5, 0.5]}'
        p = RemoteOracle(stub_server).classify(np.zeros((4, 4, 3), np.uint8))
        assert p.label == 0
        assert not p.normalized

    def test_malformed_body_is_protocol_error(self, stub_server):
        _StubHandler.payload = b"not json"
        with pytest.raises(ProtocolError):
            RemoteOracle(stub_server).classify(np.zeros((4, 4, 3), np.uint8))

    def test_missing_keys_is_protocol_error(self, stub_server):
        _StubHandler.payload = b'{"prediction": 3}'
        with pytest.raises(ProtocolError):
            RemoteOracle(stub_server).classify(np.zeros((4, 4, 3), np.uint8))

    def test_http_error_is_protocol_error(self, stub_server):
        _StubHandler.status = 500
        with pytest.raises(ProtocolError):
            RemoteOracle(stub_server).classify(np.zeros((4, 4, 3), np.uint8))

    def test_dead_endpoint_is_connection_failure(self):
        oracle = RemoteOracle("http://127.0.0.1:9", timeout=2)
        with pytest.raises(ConnectionFailure):
            oracle.classify(np.zeros((4, 4, 3), np.uint8))


_CHILD = r"""
import json, sys
for line in sys.stdin:
    obj = json.loads(line)
    assert "image_png_b64" in obj
    print(json.dumps({"label": 2, "scores": [0.1, 0.2, 0.7]}))
    sys.stdout.flush()
"""


class TestExecOracle:
    def test_round_trip(self, tmp_path):
        script = tmp_path / "child.py"
        script.write_text(_CHILD)
        with ExecOracle(f"{sys.executable} {script}") as oracle:
            p = oracle.classify(np.zeros((4, 4, 3), np.uint8))
            assert p.label == 2
            q = oracle.classify(np.full((4, 4, 3), 7, np.uint8))
            assert q.scores == (0.1, 0.2, 0.7)

    def test_dead_child_is_connection_failure(self, tmp_path):
        script = tmp_path / "dead.py"
        script.write_text("import sys; sys.exit(0)\n")
        with ExecOracle(f"{sys.executable} {script}") as oracle:
            with pytest.raises(ConnectionFailure):
                oracle.classify(np.zeros((4, 4, 3), np.uint8))
                oracle.classify(np.zeros((4, 4, 3), np.uint8))


class TestOpenOracle:
    def test_synthetic_spec(self):
        oracle = open_oracle("synthetic:constant")
        assert oracle.classify(np.zeros((2, 2, 3), np.uint8)).label == 0

    def test_bad_spec_forms(self):
        with pytest.raises(ValueError):
            open_oracle("nonsense")
        with pytest.raises(ValueError):
            open_oracle("ftp:whatever")
        with pytest.raises(ValueError):
            open_oracle("synthetic:")
