from __future__ import annotations

import http.server
import json
import threading

import pytest

from modcascade.backends import (
    HttpBackend,
    MockBackend,
    request_from_wire,
    request_to_wire,
    response_from_wire,
    response_to_wire,
)
from modcascade.core import (
    EmbeddingVector,
    IssueTaxonomy,
    ModerationLabel,
    QuestionTarget,
)
from modcascade.errors import BackendMalformed, BackendUnavailable, ConfigInvalid
from modcascade.ranker import BackendRequest, BackendResponse, QuestionSpec, transform_logits

TAXONOMY = IssueTaxonomy.default()
ISSUE = TAXONOMY.by_id(4)


def request_for(item_id: str, target=QuestionTarget.OVERALL_ACTIONABLE, priors=()) -> BackendRequest:
    return BackendRequest(
        item_id=item_id,
        embedding=EmbeddingVector((0.5, -0.25, 0.125)),
        caption=None,
        question=QuestionSpec(target, "question?"),
        prior_answers=priors,
    )


class TestMockBackend:
    def test_accuracy_one_always_agrees(self):
        truth = {f"i{k}": ModerationLabel(ISSUE, actionable=bool(k % 2)) for k in range(200)}
        backend = MockBackend(truth=truth, accuracy=1.0, noise_seed=3)
        for item_id, label in truth.items():
            pair = transform_logits(backend.answer(request_for(item_id)))
            assert (pair.p_yes > 0.5) == label.actionable
            fine = transform_logits(
                backend.answer(request_for(item_id, QuestionTarget.FINE_GRAINED_ISSUE))
            )
            assert fine.p_yes > 0.5  # every truth here carries an issue

    def test_deterministic_across_instances(self):
        label = ModerationLabel(ISSUE, actionable=True)
        a = MockBackend(truth=label, accuracy=0.8, noise_seed=11)
        b = MockBackend(truth=label, accuracy=0.8, noise_seed=11)
        for k in range(50):
            assert a.answer(request_for(f"i{k}")).logits == b.answer(request_for(f"i{k}")).logits

    def test_seed_changes_answers(self):
        label = ModerationLabel(ISSUE, actionable=True)
        a = MockBackend(truth=label, accuracy=0.6, noise_seed=1)
        b = MockBackend(truth=label, accuracy=0.6, noise_seed=2)
        answers_a = [a.answer(request_for(f"i{k}")).logits["Y"] for k in range(200)]
        answers_b = [b.answer(request_for(f"i{k}")).logits["Y"] for k in range(200)]
        assert answers_a != answers_b

    def test_agreement_rate_matches_accuracy(self):
        # law-of-large-numbers check on the seeded sampler
        label = ModerationLabel(ISSUE, actionable=True)
        for accuracy in (0.7, 0.9):
            backend = MockBackend(truth=label, accuracy=accuracy, noise_seed=5)
            agree = 0
            n = 10_000
            for k in range(n):
                response = backend.answer(request_for(f"i{k}"))
                agree += response.logits["Y"] > response.logits["N"]
            assert abs(agree / n - accuracy) <= 0.02

    def test_unknown_item_treated_benign(self):
        backend = MockBackend(truth={}, accuracy=1.0, noise_seed=0)
        pair = transform_logits(backend.answer(request_for("stranger")))
        assert pair.p_yes < 0.5

    def test_gap_jitter_bounded_and_deterministic(self):
        label = ModerationLabel(ISSUE, actionable=True)
        backend = MockBackend(truth=label, accuracy=1.0, noise_seed=9, gap=4.0, gap_jitter=1.5)
        again = MockBackend(truth=label, accuracy=1.0, noise_seed=9, gap=4.0, gap_jitter=1.5)
        gaps = set()
        for k in range(100):
            logits = backend.answer(request_for(f"i{k}")).logits
            assert logits == again.answer(request_for(f"i{k}")).logits
            gap = abs(logits["Y"] - logits["N"])
            assert 2.5 <= gap <= 5.5
            gaps.add(gap)
        assert len(gaps) > 50  # jitter actually spreads the scores

    @pytest.mark.parametrize("accuracy", [0.5, 0.2, 1.01])
    def test_accuracy_range_enforced(self, accuracy):
        with pytest.raises(ConfigInvalid):
            MockBackend(truth={}, accuracy=accuracy, noise_seed=0)

    def test_jitter_must_stay_below_gap(self):
        with pytest.raises(ConfigInvalid):
            MockBackend(truth={}, accuracy=0.9, noise_seed=0, gap=2.0, gap_jitter=2.0)


class TestWireProtocol:
    def test_request_round_trip_structure(self):
        request = request_for(
            "abc",
            QuestionTarget.OVERALL_ACTIONABLE,
            priors=((QuestionSpec(QuestionTarget.FINE_GRAINED_ISSUE, "q"), "Y"),),
        )
        wire = request_to_wire(request)
        assert wire["item_id"] == "abc"
        assert wire["question_target"] == "overall_actionable"
        assert wire["prior_answers"] == [
            {"question_target": "fine_grained_issue", "answer": "Y"}
        ]
        rebuilt = request_from_wire(json.loads(json.dumps(wire)))
        assert rebuilt.item_id == request.item_id
        assert rebuilt.embedding == request.embedding
        assert rebuilt.question.target == request.question.target
        assert [(q.target, a) for q, a in rebuilt.prior_answers] == [
            (QuestionTarget.FINE_GRAINED_ISSUE, "Y")
        ]

    def test_response_round_trip(self):
        response = BackendResponse("abc", {"Y": 1.25, "N": -0.75})
        assert response_from_wire(json.loads(json.dumps(response_to_wire(response)))) == response

    @pytest.mark.parametrize(
        "wire",
        [
            {},
            {"item_id": "a"},
            {"item_id": "a", "logits": "nope"},
            {"item_id": "a", "logits": {"Y": "high"}},
        ],
    )
    def test_malformed_response_rejected(self, wire):
        with pytest.raises(BackendMalformed):
            response_from_wire(wire)

    def test_malformed_request_rejected(self):
        with pytest.raises(BackendMalformed):
            request_from_wire({"item_id": "a"})


class _WireHandler(http.server.BaseHTTPRequestHandler):
    """Serves the bundled mock over the wire protocol."""

    mock = MockBackend(
        truth=ModerationLabel(ISSUE, actionable=True), accuracy=1.0, noise_seed=42
    )
    mode = "ok"

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        wire = json.loads(self.rfile.read(length))
        if type(self).mode == "garbage":
            payload = b"not json at all"
        else:
            request = request_from_wire(wire)
            response = type(self).mock.answer(request)
            payload = json.dumps(response_to_wire(response)).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def wire_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _WireHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _WireHandler.mode = "ok"
    yield f"http://127.0.0.1:{server.server_address[1]}/"
    server.shutdown()
    server.server_close()


class TestHttpBackend:
    def test_round_trip_against_live_server(self, wire_server):
        backend = HttpBackend(url=wire_server)
        response = backend.answer(request_for("vid-1"))
        assert response.item_id == "vid-1"
        assert transform_logits(response).p_yes > 0.5  # truth is actionable, accuracy 1.0

    def test_matches_in_process_mock(self, wire_server):
        backend = HttpBackend(url=wire_server)
        request = request_for("vid-2", QuestionTarget.FINE_GRAINED_ISSUE)
        assert backend.answer(request).logits == _WireHandler.mock.answer(request).logits

    def test_unreachable_port(self):
        backend = HttpBackend(url="http://127.0.0.1:1/", timeout=0.5)
        with pytest.raises(BackendUnavailable):
            backend.answer(request_for("vid-1"))

    def test_garbage_payload_is_malformed(self, wire_server):
        _WireHandler.mode = "garbage"
        backend = HttpBackend(url=wire_server)
        with pytest.raises(BackendMalformed):
            backend.answer(request_for("vid-1"))
