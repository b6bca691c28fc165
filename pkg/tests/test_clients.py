"""Record/replay fixtures and augmentation record plumbing."""

import json

import pytest

from cppf.augmenters import EdaAugmenter, ParaphraseAugmenter, precompute_augmentations
from cppf.clients import (
    AugmentationRecord,
    ReplayLLMClient,
    ReplayMissError,
    ReplayTranslationClient,
    RecordingLLMClient,
    append_fixture,
    load_fixtures,
    load_records,
    prompt_digest,
    save_records,
    translation_request_key,
)
from cppf.eda import EdaParams
from cppf.paraphrase import DemoPair
from cppf.tasks import LabeledExample


class _StaticClient:
    endpoint = "static"

    def __init__(self, completion):
        self.completion = completion
        self.calls = 0

    def complete(self, prompt):
        self.calls += 1
        return self.completion


class TestFixtures:
    def test_append_then_load(self, tmp_path):
        path = tmp_path / "fixtures.jsonl"
        append_fixture(path, "a prompt", "a completion", "unit")
        rows = load_fixtures(path)
        digest = prompt_digest("a prompt")
        assert rows[digest]["completion"] == "a completion"
        assert rows[digest]["endpoint"] == "unit"

    def test_digest_is_sha256_of_utf8(self):
        import hashlib

        assert prompt_digest("héllo") == hashlib.sha256("héllo".encode()).hexdigest()

    def test_malformed_fixture_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"prompt": "x"}) + "\n")
        with pytest.raises(Exception, match="digest"):
            load_fixtures(path)


class TestReplayClients:
    def test_llm_strict_miss(self):
        client = ReplayLLMClient({})
        with pytest.raises(ReplayMissError):
            client.complete("unknown")

    def test_llm_lax_mode(self):
        client = ReplayLLMClient({}, strict=False)
        assert client.complete("line1\nline2") == "line2"

    def test_recording_roundtrip(self, tmp_path):
        path = tmp_path / "rec.jsonl"
        recorder = RecordingLLMClient(_StaticClient("pong"), path)
        assert recorder.complete("ping") == "pong"
        replay = ReplayLLMClient(path)
        assert replay.complete("ping") == "pong"

    def test_translation_replay_identity_fixture(self, tmp_path):
        path = tmp_path / "mt.jsonl"
        append_fixture(path, translation_request_key("text", "EN", "ZH"), "text", "mt")
        append_fixture(path, translation_request_key("text", "ZH", "EN"), "text", "mt")
        client = ReplayTranslationClient(path)
        assert client.translate("text", "EN", "ZH") == "text"

    def test_translation_strict_miss(self):
        client = ReplayTranslationClient({})
        with pytest.raises(ReplayMissError, match="EN->FR"):
            client.translate("x", "EN", "FR")


class TestAugmentationRecords:
    def test_nonempty_augmented_text(self):
        with pytest.raises(ValueError, match="nonempty"):
            AugmentationRecord(
                original_id="a", original_text="x", augmented_text="", method="eda-sr"
            )

    def test_jsonl_roundtrip(self, tmp_path):
        records = [
            AugmentationRecord(
                original_id="a",
                original_text="x y",
                augmented_text="y x",
                method="eda-rs",
                meta={"seed": 1},
            )
        ]
        path = tmp_path / "records.jsonl"
        save_records(records, path)
        assert load_records(path) == records

    def test_replay_bit_determinism(self):
        """Two precompute runs over the same fixtures emit identical records."""
        examples = [
            LabeledExample(id=f"e{i}", sentence1=f"text number {i}", label="a")
            for i in range(6)
        ]
        pairs = [
            DemoPair(ex.sentence1, f"variant {i}", task_name="T", label="a")
            for i, ex in enumerate(examples)
        ]
        fixtures = {}
        from cppf.paraphrase import build_paraphrase_prompt, select_demo_pairs

        for ex in examples:
            chosen = select_demo_pairs(pairs, "T", "a", ex.sentence1)
            prompt = build_paraphrase_prompt(chosen, ex.sentence1, 1)
            digest = prompt_digest(prompt)
            fixtures[digest] = {
                "digest": digest,
                "prompt": prompt,
                "completion": f"completion for {ex.id}",
                "endpoint": "unit",
            }

        def run():
            augmenter = ParaphraseAugmenter(
                ReplayLLMClient(fixtures), pairs, "T", demo_template_id=1
            )
            return precompute_augmentations(examples, augmenter, seed=0)

        assert run() == run()

    def test_method_tag_matches_operation(self):
        examples = [LabeledExample(id="e", sentence1="alpha beta gamma", label="a")]
        augmenter = EdaAugmenter("eda-rs", lexicon={}, params=EdaParams(n_rs=1))
        records = precompute_augmentations(examples, augmenter, seed=3)
        assert records["e"].method == "eda-rs"


class _FakeResponse:
    def __init__(self, status_code=200, body=None):
        self.status_code = status_code
        self._body = body or {}

    def raise_for_status(self):
        if self.status_code >= 400:
            import requests

            raise requests.HTTPError(f"status {self.status_code}")

    def json(self):
        return self._body


class TestHttpLLMClient:
    def _client(self, monkeypatch, responses):
        from cppf import clients

        calls = []

        def fake_post(url, json=None, headers=None, timeout=None):
            calls.append({"url": url, "json": json, "headers": headers})
            return responses[min(len(calls) - 1, len(responses) - 1)]

        monkeypatch.setattr(clients.requests, "post", fake_post)
        monkeypatch.setattr(clients.time, "sleep", lambda s: None)
        client = clients.HttpLLMClient(
            endpoint="http://unit.test/v1", api_key="k", model="m"
        )
        return client, calls

    def test_completion_field(self, monkeypatch):
        client, calls = self._client(
            monkeypatch, [_FakeResponse(body={"completion": "out"})]
        )
        assert client.complete("in") == "out"
        assert calls[0]["json"]["prompt"] == "in"
        assert calls[0]["headers"]["Authorization"] == "Bearer k"

    def test_choices_style_body(self, monkeypatch):
        client, _ = self._client(
            monkeypatch, [_FakeResponse(body={"choices": [{"text": "picked"}]})]
        )
        assert client.complete("in") == "picked"

    def test_retries_server_error_then_succeeds(self, monkeypatch):
        client, calls = self._client(
            monkeypatch,
            [_FakeResponse(status_code=500), _FakeResponse(body={"completion": "ok"})],
        )
        assert client.complete("in") == "ok"
        assert len(calls) == 2

    def test_bounded_retries_exhausted(self, monkeypatch):
        from cppf.clients import ClientError

        client, calls = self._client(monkeypatch, [_FakeResponse(status_code=500)])
        with pytest.raises(ClientError, match="3 attempts"):
            client.complete("in")
        assert len(calls) == 3

    def test_requires_endpoint(self, monkeypatch):
        from cppf.clients import ClientError, HttpLLMClient

        monkeypatch.delenv("CPPF_LLM_ENDPOINT", raising=False)
        with pytest.raises(ClientError, match="endpoint"):
            HttpLLMClient()


class TestConcurrentReplay:
    def test_concurrent_reads_consistent(self):
        from concurrent.futures import ThreadPoolExecutor

        rows = {}
        for i in range(50):
            prompt = f"prompt {i}"
            digest = prompt_digest(prompt)
            rows[digest] = {
                "digest": digest, "prompt": prompt,
                "completion": f"completion {i}", "endpoint": "unit",
            }
        client = ReplayLLMClient(rows)
        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(
                pool.map(client.complete, [f"prompt {i % 50}" for i in range(400)])
            )
        assert results == [f"completion {i % 50}" for i in range(400)]
