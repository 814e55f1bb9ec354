import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from advchat.config import ModelConfig
from advchat.corpus import build_vocabulary, load_corpus
from advchat.errors import UsageError
from advchat.evaluation import TIE
from advchat.model import init_model_pair
from advchat.service import ChatService, NotFound, make_server

CFG = ModelConfig(s_s=10, s_v=64, s_e=8, s_se=12, s_sed=12, n_u=2)


@pytest.fixture()
def service(tmp_path):
    vocab = build_vocabulary(load_corpus("data/toy_corpus.txt"), CFG.s_v)
    pair_a = init_model_pair(CFG, np.random.default_rng(0))
    pair_b = init_model_pair(CFG, np.random.default_rng(1))
    return ChatService(
        {"a": pair_a.gen, "b": pair_b.gen},
        pair_a.disc,
        vocab,
        CFG,
        tmp_path / "votes.jsonl",
    )


class TestChat:
    def test_empty_session_id_creates_session(self, service):
        response = service.chat("", "hello there")
        assert response["session_id"] == "s1"
        assert response["line_id"] == "s1:l0"

    def test_two_candidates_and_tie_flag(self, service):
        session = service.create_session()["session_id"]
        response = service.chat(session, "hello there")
        assert [c["model"] for c in response["candidates"]] == ["a", "b"]
        assert all(isinstance(c["text"], str) for c in response["candidates"])
        assert isinstance(response["tie"], bool)
        for c in response["candidates"]:
            if c["score"] is not None:
                assert 0.0 < c["score"] < 1.0

    def test_deterministic_across_sessions(self, service):
        s1 = service.create_session()["session_id"]
        s2 = service.create_session()["session_id"]
        utterances = ["hello there", "how are you?"]
        first = [service.chat(s1, u)["candidates"] for u in utterances]
        second = [service.chat(s2, u)["candidates"] for u in utterances]
        assert first == second

    def test_empty_utterance_rejected(self, service):
        session = service.create_session()["session_id"]
        with pytest.raises(UsageError):
            service.chat(session, "   ")

    def test_unknown_session_is_not_found(self, service):
        with pytest.raises(NotFound):
            service.chat("s999", "hello")

    def test_history_window_is_last_n_u_utterances(self, service):
        session = service.create_session()["session_id"]
        for utterance in ("hello there", "how are you?", "what time is it?"):
            service.chat(session, utterance)
        transcript = service.dialogue(session)
        assert len(transcript["lines"]) == 3


class TestVotes:
    def test_vote_round_trip_and_report(self, service):
        line = service.chat("", "hello there")["line_id"]
        record = service.vote(line, "b")
        assert record == {"line_id": line, "winner": "b", "source": "human"}
        summary = service.report()
        assert summary["human"]["counts"] == {"b": 1}
        assert summary["human"]["percentages"]["b"] == 100.0

    def test_revote_overwrites(self, service):
        line = service.chat("", "hello there")["line_id"]
        service.vote(line, "a")
        service.vote(line, "b")
        assert service.report()["human"]["counts"] == {"b": 1}

    def test_tie_vote_excluded_from_tally(self, service):
        line = service.chat("", "hello there")["line_id"]
        service.vote(line, TIE)
        summary = service.report()
        assert summary["human"]["contested"] == 0
        assert summary["human"]["percentages"] is None

    def test_unknown_line_is_not_found(self, service):
        with pytest.raises(NotFound):
            service.vote("s1:l99", "a")

    def test_invalid_winner_rejected(self, service):
        line = service.chat("", "hello there")["line_id"]
        with pytest.raises(UsageError):
            service.vote(line, "z")

    def test_vote_redirects_conversation_thread(self, service):
        session = service.create_session()["session_id"]
        response = service.chat(session, "hello there")
        line = response["line_id"]
        other = "b" if service.lines[line].chosen == "a" else "a"
        service.vote(line, other)
        assert service.lines[line].chosen == other
        chosen_tokens = service.lines[line].candidates[other]["tokens"]
        assert service.sessions[session].history[-1] == chosen_tokens

    def test_adversarial_votes_recorded_at_chat_time(self, service):
        service.chat("", "hello there")
        summary = service.report()
        adversarial = summary["adversarial"]
        assert adversarial["contested"] + (1 if adversarial["contested"] == 0 else 0) >= 0
        # exactly one adversarial record exists (winner or tie)
        from advchat.evaluation import load_votes

        votes = load_votes(service.vote_store)
        assert len([v for v in votes if v.source == "adversarial"]) == 1


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


def request(port, method, path, payload=None, raw=None):
    url = f"http://127.0.0.1:{port}{path}"
    data = raw if raw is not None else (
        json.dumps(payload).encode() if payload is not None else None
    )
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


@pytest.fixture()
def server(service, tmp_path):
    ui_dir = tmp_path / "ui"
    ui_dir.mkdir()
    (ui_dir / "index.html").write_text("<!doctype html><title>advchat</title>")
    srv = make_server(service, "127.0.0.1:0", ui_dir=ui_dir)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv
    srv.shutdown()
    srv.server_close()


class TestHttp:
    def test_session_chat_vote_report_flow(self, server):
        port = server.server_address[1]
        status, session = request(port, "POST", "/session", {})
        assert status == 200 and session["session_id"]

        status, chat = request(port, "POST", "/chat", {
            "session_id": session["session_id"], "utterance": "hello there",
        })
        assert status == 200
        assert len(chat["candidates"]) == 2

        status, vote = request(port, "POST", "/vote", {
            "line_id": chat["line_id"], "winner": "a",
        })
        assert status == 200 and vote["winner"] == "a"

        status, summary = request(port, "GET", "/report")
        assert status == 200
        assert summary["human"]["counts"] == {"a": 1}
        assert 0.0 <= summary["jaccard"] <= 1.0

    def test_unknown_fields_rejected(self, server):
        port = server.server_address[1]
        status, body = request(port, "POST", "/chat", {
            "session_id": "", "utterance": "hi", "extra": 1,
        })
        assert status == 400 and "unknown fields" in body["error"]

    def test_invalid_json_rejected(self, server):
        port = server.server_address[1]
        status, body = request(port, "POST", "/chat", raw=b"not json{")
        assert status == 400 and "JSON" in body["error"]

    def test_unknown_session_404(self, server):
        port = server.server_address[1]
        status, _ = request(port, "POST", "/chat",
                            {"session_id": "s42", "utterance": "hi"})
        assert status == 404

    def test_unknown_line_404(self, server):
        port = server.server_address[1]
        status, _ = request(port, "POST", "/vote",
                            {"line_id": "nope", "winner": "a"})
        assert status == 404

    def test_dialogue_endpoint(self, server):
        port = server.server_address[1]
        _, chat = request(port, "POST", "/chat",
                          {"session_id": "", "utterance": "hello there"})
        status, transcript = request(
            port, "GET", f"/dialogues/{chat['session_id']}"
        )
        assert status == 200
        assert transcript["lines"][0]["line_id"] == chat["line_id"]
        status, _ = request(port, "GET", "/dialogues/shrug")
        assert status == 404

    def test_unknown_route_404(self, server):
        port = server.server_address[1]
        assert request(port, "POST", "/nope", {})[0] == 404

    def test_serves_ui_index(self, server):
        port = server.server_address[1]
        url = f"http://127.0.0.1:{port}/"
        with urllib.request.urlopen(url, timeout=10) as resp:
            assert resp.status == 200
            assert b"advchat" in resp.read()


class TestRestartPersistence:
    def test_report_survives_restart(self, tmp_path):
        vocab = build_vocabulary(load_corpus("data/toy_corpus.txt"), CFG.s_v)
        pair_a = init_model_pair(CFG, np.random.default_rng(0))
        pair_b = init_model_pair(CFG, np.random.default_rng(1))
        store = tmp_path / "votes.jsonl"

        first = ChatService({"a": pair_a.gen, "b": pair_b.gen}, pair_a.disc,
                            vocab, CFG, store)
        line = first.chat("", "hello there")["line_id"]
        first.vote(line, "a")
        before = first.report()

        second = ChatService({"a": pair_a.gen, "b": pair_b.gen}, pair_a.disc,
                             vocab, CFG, store)
        assert second.report() == before
