import json

import pytest
from hypothesis import given, strategies as st

from dialogforge.errors import DialogParseError, InputError, ReplayMissError, TransportError
from dialogforge.llm import (EchoBackend, HttpBackend, LmBackendConfig,
                             LmRequest, PromptSet, RecordingBackend,
                             ReplayBackend, build_backend, generate_response,
                             lm_request_key, parse_dialog,
                             render_forward_prompt, render_reverse_prompt,
                             render_response_prompt, render_turns)
from dialogforge.records import Dialog, DialogTurn

from conftest import dialog


class TestPromptSet:
    def test_requires_examples(self):
        with pytest.raises(Exception):
            PromptSet(instruction_forward="a", instruction_reverse="b", examples=())

    def test_example_must_end_with_user(self):
        with pytest.raises(Exception):
            PromptSet(instruction_forward="a", instruction_reverse="b",
                      examples=(("q", dialog(("assistant", "hello"))),))

    def test_file_round_trip(self, prompt_set, tmp_path):
        path = tmp_path / "prompts.json"
        prompt_set.save(path)
        assert PromptSet.load(path) == prompt_set

    def test_file_schema(self, prompt_set, tmp_path):
        path = tmp_path / "prompts.json"
        prompt_set.save(path)
        payload = json.loads(path.read_text())
        assert set(payload) == {"instruction_forward", "instruction_reverse", "examples"}
        assert set(payload["examples"][0]) == {"question", "dialog"}
        assert set(payload["examples"][0]["dialog"][0]) == {"role", "text"}


class TestRendering:
    def test_forward_terminal(self, prompt_set):
        prompt = render_forward_prompt(prompt_set, "q2")
        assert prompt.endswith("Question: q2\nDialog:")

    def test_forward_role_prefixes(self, prompt_set):
        prompt = render_forward_prompt(prompt_set, "x")
        assert "User: i watched a great heist movie about dreams yesterday" in prompt
        assert "Assistant: That sounds like Inception, a 2010 science fiction film." in prompt

    def test_forward_deterministic(self, prompt_set):
        assert render_forward_prompt(prompt_set, "same") == \
            render_forward_prompt(prompt_set, "same")

    def test_forward_injective(self, prompt_set):
        assert render_forward_prompt(prompt_set, "a") != \
            render_forward_prompt(prompt_set, "b")

    def test_forward_empty_question_rejected(self, prompt_set):
        with pytest.raises(InputError):
            render_forward_prompt(prompt_set, "")

    def test_reverse_terminal_cue(self, prompt_set):
        prompt = render_reverse_prompt(prompt_set, dialog(("user", "hello there")))
        assert prompt.endswith("Question:")
        assert not prompt.endswith("Question: ")

    def test_reverse_examples_swapped_same_order(self, prompt_set):
        forward = render_forward_prompt(prompt_set, "z")
        reverse = render_reverse_prompt(prompt_set, dialog(("user", "z")))
        for question, ex_dialog in prompt_set.examples:
            assert f"Question: {question}\nDialog:\n{render_turns(ex_dialog)}" in forward
            assert f"Dialog:\n{render_turns(ex_dialog)}\nQuestion: {question}" in reverse
        # same example order in both directions
        q1, q2 = (q for q, _ in prompt_set.examples)
        assert reverse.index(q1) < reverse.index(q2)

    def test_reverse_deterministic(self, prompt_set):
        d = dialog(("user", "a"), ("assistant", "b"), ("user", "c"))
        assert render_reverse_prompt(prompt_set, d) == render_reverse_prompt(prompt_set, d)


class TestParseDialog:
    def test_happy_path(self):
        d = parse_dialog("User: a\nAssistant: b\nUser: c")
        assert [t.role for t in d.turns] == ["user", "assistant", "user"]
        assert d.last_user_text() == "c"

    def test_case_insensitive_prefixes(self):
        d = parse_dialog("user:   a\nASSISTANT: b\nUser: c")
        assert len(d.turns) == 3

    def test_multiline_turn_joined(self):
        d = parse_dialog("User: first part\nsecond part\nUser: done")
        assert d.turns[0].text == "first part second part"

    def test_stops_at_question_line(self):
        d = parse_dialog("User: a\nQuestion: should not appear\nAssistant: nope")
        assert len(d.turns) == 1

    def test_no_turns_is_error(self):
        with pytest.raises(DialogParseError):
            parse_dialog("nothing to see here")

    def test_final_turn_must_be_user(self):
        with pytest.raises(DialogParseError):
            parse_dialog("Assistant: only")

    simple_text = st.text(
        alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"),
                               whitelist_characters=" "),
        min_size=1, max_size=30).map(str.strip).filter(bool).filter(
        lambda s: "  " not in s)

    @given(st.lists(st.tuples(st.sampled_from(["user", "assistant"]), simple_text),
                    min_size=1, max_size=6).filter(lambda ts: ts[-1][0] == "user"))
    def test_render_parse_round_trip(self, turns):
        d = Dialog(tuple(DialogTurn(role=r, text=t) for r, t in turns))
        assert parse_dialog(render_turns(d)) == d


class TestEchoBackend:
    def test_forward_contract(self, prompt_set):
        prompt = render_forward_prompt(prompt_set, "who won x")
        completion = EchoBackend().complete(LmRequest(prompt=prompt))
        d = parse_dialog(completion)
        assert d.last_user_text() == "who won x"

    def test_reverse_contract(self, prompt_set):
        d = dialog(("user", "hi"), ("assistant", "hello"), ("user", "who won x"))
        prompt = render_reverse_prompt(prompt_set, d)
        assert EchoBackend().complete(LmRequest(prompt=prompt)) == "who won x"

    def test_response_contract(self, prompt_set):
        d = dialog(("user", "who won x"))
        response = generate_response(EchoBackend(), prompt_set, d)
        assert response == generate_response(EchoBackend(), prompt_set, d)
        assert "who won x" in response
        assert "User:" not in response and "Assistant:" not in response


class TestReplayBackend:
    def test_record_then_replay(self, prompt_set, tmp_path):
        record_path = tmp_path / "rec.jsonl"
        recording = RecordingBackend(EchoBackend(), record_path)
        req = LmRequest(prompt=render_forward_prompt(prompt_set, "who won y"))
        first = recording.complete(req)
        replay = ReplayBackend(record_path)
        assert replay.complete(req) == first
        assert replay.complete(req) == first

    def test_miss_names_key(self, prompt_set, tmp_path):
        record_path = tmp_path / "rec.jsonl"
        RecordingBackend(EchoBackend(), record_path).complete(
            LmRequest(prompt=render_forward_prompt(prompt_set, "a")))
        other = LmRequest(prompt=render_forward_prompt(prompt_set, "b"))
        with pytest.raises(ReplayMissError) as e:
            ReplayBackend(record_path).complete(other)
        assert e.value.key == lm_request_key(other)

    def test_record_file_schema(self, tmp_path):
        record_path = tmp_path / "rec.jsonl"
        RecordingBackend(EchoBackend(), record_path).complete(
            LmRequest(prompt="User: hi\nQuestion:"))
        entry = json.loads(record_path.read_text().splitlines()[0])
        assert set(entry) == {"key", "request", "completion"}


class TestHttpBackend:
    def test_happy_path(self):
        class Session:
            def post(self, url, json=None, headers=None, timeout=None):
                class R:
                    status_code = 200
                    text = '{"text": "User: hi"}'

                    def json(self):
                        return {"text": "User: hi"}
                return R()

        backend = HttpBackend("http://lm", session=Session())
        assert backend.complete(LmRequest(prompt="p")) == "User: hi"

    def test_transport_error(self):
        import requests

        class Session:
            def post(self, url, json=None, headers=None, timeout=None):
                raise requests.ConnectionError("refused")

        with pytest.raises(TransportError):
            HttpBackend("http://lm", session=Session()).complete(LmRequest(prompt="p"))


class TestBackendConfig:
    def test_http_requires_endpoint(self):
        with pytest.raises(InputError):
            LmBackendConfig(kind="http")

    def test_replay_requires_path(self):
        with pytest.raises(InputError):
            LmBackendConfig(kind="replay")

    def test_build_echo_with_recording(self, tmp_path):
        backend = build_backend(LmBackendConfig(
            kind="echo", record_path=str(tmp_path / "r.jsonl")))
        assert isinstance(backend, RecordingBackend)


class TestRequestKey:
    def test_stable(self):
        r = LmRequest(prompt="p", temperature=0.6, max_tokens=8, stop=("\n",))
        assert lm_request_key(r) == lm_request_key(
            LmRequest(prompt="p", temperature=0.6, max_tokens=8, stop=("\n",)))

    def test_sensitive_to_fields(self):
        a = LmRequest(prompt="p", temperature=0.6)
        b = LmRequest(prompt="p", temperature=0.0)
        assert lm_request_key(a) != lm_request_key(b)
