import hashlib
import json
import threading

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentmesh.errors import (
    CassetteExhausted,
    CassetteMismatch,
    InvalidRequest,
    RateLimited,
    TransportError,
)
from agentmesh.gateway import (
    CassetteRecord,
    ChatMessage,
    CompletionRequest,
    GenerationParams,
    LiveBackend,
    RecordingBackend,
    ReplayBackend,
    Role,
    complete,
    load_cassette,
    prompt_digest,
    retry_schedule,
)
from agentmesh.state import Agent
from helpers import MockChatServer

MSGS = (ChatMessage(Role.SYSTEM, "You plan."), ChatMessage(Role.USER, "Project goal: X"))


def planner_request(messages=MSGS, **params):
    return CompletionRequest(Agent.PLANNER, messages, GenerationParams(**params))


def test_digest_matches_hand_built_concatenation():
    raw = "system\x1fYou plan.\x1euser\x1fProject goal: X\x1e"
    assert prompt_digest(list(MSGS)) == hashlib.sha256(raw.encode()).hexdigest()
    assert planner_request().digest == prompt_digest(list(MSGS))


@given(st.text(min_size=1), st.text(min_size=1), st.integers(min_value=0, max_value=200))
def test_digest_stable_and_sensitive(system, user, pos):
    msgs = [ChatMessage(Role.SYSTEM, system), ChatMessage(Role.USER, user)]
    assert prompt_digest(msgs) == prompt_digest(list(msgs))
    i = pos % len(user)
    flipped = user[:i] + chr((ord(user[i]) + 1) % 0x10FFFF or 1) + user[i + 1 :]
    if flipped != user:
        changed = [msgs[0], ChatMessage(Role.USER, flipped)]
        assert prompt_digest(changed) != prompt_digest(msgs)


def test_message_and_request_invariants():
    with pytest.raises(InvalidRequest):
        ChatMessage(Role.USER, "")
    ChatMessage(Role.ASSISTANT, "")
    with pytest.raises(InvalidRequest):
        CompletionRequest(Agent.CODER, (ChatMessage(Role.USER, "hi"),))
    with pytest.raises(InvalidRequest):
        CompletionRequest(Agent.SANDBOX, MSGS)
    with pytest.raises(InvalidRequest):
        GenerationParams(temperature=1.5)
    with pytest.raises(InvalidRequest):
        GenerationParams(max_output_tokens=0)
    assert GenerationParams().temperature == 0.0
    assert GenerationParams().max_output_tokens == 2048


@pytest.mark.parametrize("attempt, delay", [(1, 0.5), (2, 1.0), (3, 2.0), (4, 4.0), (5, 8.0), (7, 8.0), (30, 8.0)])
def test_retry_schedule(attempt, delay):
    assert retry_schedule(attempt) == delay


def test_retry_schedule_is_one_based():
    with pytest.raises(ValueError):
        retry_schedule(0)


def test_replay_returns_matching_record():
    req = planner_request()
    backend = ReplayBackend([CassetteRecord(0, Agent.PLANNER, req.digest, "1. A")])
    assert complete(backend, req) == "1. A"
    assert backend.remaining == 0


def test_replay_strict_digest_mismatch():
    req = planner_request()
    backend = ReplayBackend([CassetteRecord(0, Agent.PLANNER, "f" * 64, "1. A")], strict=True)
    with pytest.raises(CassetteMismatch):
        complete(backend, req)


def test_replay_lenient_checks_role_only():
    req = planner_request()
    backend = ReplayBackend(
        [CassetteRecord(0, Agent.PLANNER, "f" * 64, "1. A"), CassetteRecord(1, Agent.CODER, "f" * 64, "x")],
        strict=False,
    )
    assert complete(backend, req) == "1. A"
    with pytest.raises(CassetteMismatch):
        complete(backend, req)  # next record belongs to the coder


def test_replay_exhausted():
    with pytest.raises(CassetteExhausted):
        complete(ReplayBackend([]), planner_request())


def test_replay_is_deterministic():
    reqs = [planner_request(), planner_request((MSGS[0], ChatMessage(Role.USER, "other")))]
    records = [CassetteRecord(i, Agent.PLANNER, r.digest, f"resp{i}") for i, r in enumerate(reqs)]
    runs = []
    for _ in range(2):
        backend = ReplayBackend(records)
        runs.append([complete(backend, r) for r in reqs])
    assert runs[0] == runs[1] == ["resp0", "resp1"]


def test_replay_serializes_concurrent_callers():
    n = 64
    records = [CassetteRecord(i, Agent.PLANNER, "0" * 64, str(i)) for i in range(n)]
    backend = ReplayBackend(records, strict=False)
    got = []
    lock = threading.Lock()

    def worker():
        for _ in range(n // 8):
            text = complete(backend, planner_request())
            with lock:
                got.append(text)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(got, key=int) == [str(i) for i in range(n)]


def test_cassette_record_validation():
    with pytest.raises(ValueError):
        CassetteRecord(0, Agent.PLANNER, "abc", "x")
    with pytest.raises(ValueError):
        CassetteRecord(0, Agent.PLANNER, "F" * 64, "x")


def test_cassette_file_format(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(
        json.dumps({"seq": 0, "agent_role": "Planner", "prompt_sha256": "a" * 64, "response": "1. A\n2. B"})
        + "\n",
        encoding="utf-8",
    )
    (record,) = load_cassette(path)
    assert record.response == "1. A\n2. B"
    assert list(json.loads(record.to_json())) == ["seq", "agent_role", "prompt_sha256", "response"]
    assert "\\n" in record.to_json() and "\n" not in record.to_json()


def test_cassette_seq_must_be_consecutive(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(
        json.dumps({"seq": 1, "agent_role": "Planner", "prompt_sha256": "a" * 64, "response": ""}) + "\n"
    )
    with pytest.raises(ValueError):
        load_cassette(path)


def test_live_retries_429_then_succeeds():
    delays = []
    with MockChatServer([(429, "slow down"), (200, "ok")]) as server:
        backend = LiveBackend(server.base_url, api_key="k", sleep=delays.append)
        assert complete(backend, planner_request()) == "ok"
        assert server.request_count == 2
    assert delays == [0.5]


def test_live_sends_chat_payload_and_credentials(monkeypatch):
    monkeypatch.setenv("AGENTMESH_API_KEY", "sk-test")
    with MockChatServer([(200, "fine")]) as server:
        backend = LiveBackend(server.base_url)
        complete(backend, planner_request(model_name="m1", temperature=0.2, max_output_tokens=99))
        body = server.requests[0]
        auth = server.headers[0]["Authorization"]
    assert body == {
        "model": "m1",
        "messages": [{"role": "system", "content": "You plan."}, {"role": "user", "content": "Project goal: X"}],
        "temperature": 0.2,
        "max_tokens": 99,
    }
    assert auth == "Bearer sk-test"


@pytest.mark.parametrize("status", [400, 401, 403])
def test_live_non_retriable_fail_immediately(status):
    delays = []
    with MockChatServer([(status, "no")] * 5) as server:
        backend = LiveBackend(server.base_url, api_key="k", sleep=delays.append)
        with pytest.raises(TransportError) as info:
            complete(backend, planner_request())
        assert server.request_count == 1
    assert info.value.status == status
    assert delays == []


def test_live_server_errors_exhaust_retry_budget():
    delays = []
    with MockChatServer([(503, "down")] * 10) as server:
        backend = LiveBackend(server.base_url, api_key="k", sleep=delays.append)
        with pytest.raises(TransportError):
            complete(backend, planner_request())
        assert server.request_count == 5  # first try + 4 retries
    assert delays == [0.5, 1.0, 2.0, 4.0]


def test_live_rate_limit_budget_exhausted():
    with MockChatServer([(429, "slow")] * 10) as server:
        backend = LiveBackend(server.base_url, api_key="k", sleep=lambda s: None)
        with pytest.raises(RateLimited):
            complete(backend, planner_request())
        assert server.request_count == 5


def test_live_transport_failure_is_retried():
    calls = []

    def handler(request):
        calls.append(request)
        if len(calls) < 3:
            raise httpx.ConnectError("refused")
        return httpx.Response(200, json={"choices": [{"message": {"content": "late"}}]})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    backend = LiveBackend("http://unused", api_key="k", sleep=lambda s: None, client=client)
    assert complete(backend, planner_request()) == "late"
    assert len(calls) == 3


def test_live_malformed_response():
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1})))
    backend = LiveBackend("http://unused", api_key="k", sleep=lambda s: None, client=client)
    with pytest.raises(TransportError):
        complete(backend, planner_request())


def test_record_then_replay_round_trip(tmp_path):
    reqs = [planner_request(), CompletionRequest(Agent.CODER, (MSGS[0], ChatMessage(Role.USER, "code")))]
    cassette = tmp_path / "rec.jsonl"
    with MockChatServer([(200, "1. A"), (200, "```\nprint(1)\n```")]) as server:
        recorder = RecordingBackend(LiveBackend(server.base_url, api_key="k"), cassette)
        live = [complete(recorder, r) for r in reqs]
    records = load_cassette(cassette)
    assert [r.seq for r in records] == [0, 1]
    assert [r.agent_role for r in records] == [Agent.PLANNER, Agent.CODER]
    assert [r.prompt_sha256 for r in records] == [r.digest for r in reqs]
    replay = ReplayBackend.from_file(cassette, strict=True)
    assert [complete(replay, r) for r in reqs] == live
