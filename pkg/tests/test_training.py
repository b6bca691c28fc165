"""Two-phase training loop conformance and configuration fidelity."""

import random

import pytest

from cppf.augmenters import precompute_augmentations
from cppf.model import ModelConfig, init_reference_model, parameter_digest
from cppf.training import (
    HARD_STEP_CAP,
    DEFAULT_LR_SCALE,
    PairingError,
    StepRecord,
    TrainConfig,
    Trainer,
    make_pair,
    run_training,
    scale_contrastive_lr,
    task_defaults,
)
from cppf import toy


@pytest.fixture()
def toy_paraphrases(toy_split):
    augmenter = toy.make_replay_augmenter(toy_split.train_examples())
    return precompute_augmentations(toy_split.train_examples(), augmenter, seed=0)


def _trainer(toy_split, toy_spec, toy_tokenizer, paraphrases=None, **overrides):
    defaults = dict(
        task=toy_spec.name,
        batch_size_supcon=4,
        lr_supcon=1e-3,
        lr_mlm=1e-3,
        max_steps=3,
        seed=5,
    )
    defaults.update(overrides)
    config = TrainConfig(**defaults)
    model = init_reference_model(
        ModelConfig(
            vocab_size=len(toy_tokenizer.vocab),
            hidden_dim=16,
            layers=1,
            heads=2,
            max_seq_len=64,
            init_seed=2,
        )
    )
    return Trainer(model, toy_split, toy_spec, toy_tokenizer, config, paraphrases)


class TestTrainConfig:
    def test_named_defaults_table(self):
        expected = {
            "SST-2": (8, 7e-7),
            "SST-5": (20, 7e-6),
            "MNLI": (12, 7e-6),
            "CoLA": (8, 7e-6),
            "QNLI": (8, 7e-6),
            "CR": (16, 7e-6),
        }
        for task, (batch, lr) in expected.items():
            config = task_defaults(task)
            assert config.batch_size_supcon == batch
            assert config.lr_supcon == lr
            assert config.lr_mlm == 1e-5
            assert config.lr_scale == 0.7
            assert config.max_steps == 1000

    def test_lr_scale_helper(self):
        assert scale_contrastive_lr(1e-5) == pytest.approx(7e-6)
        assert DEFAULT_LR_SCALE == 0.7

    def test_unknown_task_defaults(self):
        with pytest.raises(ValueError, match="named defaults"):
            task_defaults("nope")

    def test_strategy_weights_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            TrainConfig(
                task="t", batch_size_supcon=2, lr_supcon=1e-3,
                strategy_weights={"paraphrase": 0.5, "same-class": 0.2},
            )

    def test_invalid_lr_scale(self):
        with pytest.raises(ValueError, match="lr_scale"):
            TrainConfig(task="t", batch_size_supcon=2, lr_supcon=1e-3, lr_scale=0.0)

    def test_mlm_batch_defaults_to_supcon_batch(self):
        config = TrainConfig(task="t", batch_size_supcon=12, lr_supcon=1e-3)
        assert config.mlm_batch_size == 12


class TestMakePair:
    def test_paraphrase_strategy(self, toy_split, toy_spec, toy_paraphrases):
        target = toy_split.train_examples()[0]
        v1, v2, labels, kind, digest = make_pair(
            target, toy_split, toy_spec, "paraphrase",
            lambda e: toy_paraphrases.get(e.id), random.Random(0),
        )
        assert kind == "paraphrase"
        assert (v1.view_kind, v2.view_kind) == ("original", "paraphrase")
        assert labels == (target.label, target.label)
        assert digest is not None

    def test_same_class_strategy(self, toy_split, toy_spec):
        target = toy_split.train_examples()[0]
        v1, v2, labels, kind, digest = make_pair(
            target, toy_split, toy_spec, "same-class", None, random.Random(0)
        )
        assert kind == "same-class"
        assert labels[0] == labels[1] == target.label
        assert v2.target_id != target.id
        assert digest is None

    def test_mixed_strategy_keeps_own_labels(self, toy_split, toy_spec):
        target = toy_split.train_examples()[0]
        _, v2, labels, kind, _ = make_pair(
            target, toy_split, toy_spec, "mixed", None, random.Random(0)
        )
        assert kind == "mixed"
        assert labels[0] == target.label
        assert labels[1] != target.label
        assert v2.label == labels[1]

    def test_mixed_reproducible(self, toy_split, toy_spec):
        target = toy_split.train_examples()[2]
        a = make_pair(target, toy_split, toy_spec, "mixed", None, random.Random(9))
        b = make_pair(target, toy_split, toy_spec, "mixed", None, random.Random(9))
        assert a[0].text == b[0].text
        assert a[1].text == b[1].text

    def test_missing_paraphrase_falls_back(self, toy_split, toy_spec, caplog):
        target = toy_split.train_examples()[0]
        with caplog.at_level("WARNING"):
            _, _, labels, kind, digest = make_pair(
                target, toy_split, toy_spec, "paraphrase", lambda e: None,
                random.Random(0),
            )
        assert kind == "same-class"
        assert digest is None
        assert "falling back" in caplog.text

    def test_missing_paraphrase_hard_fail(self, toy_split, toy_spec):
        target = toy_split.train_examples()[0]
        with pytest.raises(PairingError, match="no paraphrase"):
            make_pair(
                target, toy_split, toy_spec, "paraphrase", lambda e: None,
                random.Random(0), on_augment_failure="error",
            )

    def test_same_class_with_singleton_class_errors(self, toy_spec):
        from cppf.tasks import FewShotSplit, LabeledExample

        ex_a = LabeledExample(id="a", sentence1="a truly wonderful gem", label="positive")
        ex_b = LabeledExample(id="b", sentence1="a truly dreadful mess", label="negative")
        split = FewShotSplit(
            train={"positive": (ex_a,), "negative": (ex_b,)},
            dev=(), test=(), k=1, seed=0,
        )
        with pytest.raises(PairingError, match="single example"):
            make_pair(ex_a, split, toy_spec, "same-class", None, random.Random(0),
                      demo_count=1, on_augment_failure="error")


class TestTrainStep:
    def test_two_optimizer_applications_in_order(
        self, toy_split, toy_spec, toy_tokenizer, toy_paraphrases
    ):
        trainer = _trainer(toy_split, toy_spec, toy_tokenizer, toy_paraphrases)
        digest_0 = parameter_digest(trainer.model)
        record = trainer.train_step(0, trainer.next_batch())
        assert record.parameter_version == 2
        assert record.mlm_param_digest != digest_0
        assert record.supcon_param_digest != record.mlm_param_digest
        assert parameter_digest(trainer.model) == record.supcon_param_digest
        assert record.mlm_loss > 0
        assert record.supcon_loss is not None
        assert record.total_loss == record.mlm_loss + record.supcon_loss

    def test_zero_learning_rates_leave_parameters_bitwise(self, toy_split, toy_spec, toy_tokenizer, toy_paraphrases):
        trainer = _trainer(
            toy_split, toy_spec, toy_tokenizer, toy_paraphrases,
            lr_mlm=0.0, lr_supcon=0.0,
        )
        before = parameter_digest(trainer.model)
        record = trainer.train_step(0, trainer.next_batch())
        assert record.mlm_param_digest == before
        assert record.supcon_param_digest == before

    def test_supcon_lr_zero_matches_mlm_only_phase(
        self, toy_split, toy_spec, toy_tokenizer, toy_paraphrases
    ):
        """lr_supcon=0: the contrastive application is a parameter no-op."""
        trainer = _trainer(
            toy_split, toy_spec, toy_tokenizer, toy_paraphrases, lr_supcon=0.0,
            max_steps=2,
        )
        for step in range(2):
            record = trainer.train_step(step, trainer.next_batch())
            assert record.supcon_param_digest == record.mlm_param_digest

    def test_forward_count_doubles_mlm_only(
        self, toy_split, toy_spec, toy_tokenizer, toy_paraphrases
    ):
        full = _trainer(toy_split, toy_spec, toy_tokenizer, toy_paraphrases)
        full.train_step(0, full.next_batch())
        full_count = full.model.forward_calls

        baseline = _trainer(
            toy_split, toy_spec, toy_tokenizer, contrastive=False
        )
        baseline.train_step(0, baseline.next_batch())
        assert full_count == 2 * baseline.model.forward_calls

    def test_mlm_only_single_application(self, toy_split, toy_spec, toy_tokenizer):
        trainer = _trainer(toy_split, toy_spec, toy_tokenizer, contrastive=False)
        record = trainer.train_step(0, trainer.next_batch())
        assert record.parameter_version == 1
        assert record.supcon_loss is None
        assert record.supcon_param_digest is None
        assert record.pair_kinds == ("mlm-only",) * 4

    def test_strategy_weights_interleaving(self, toy_split, toy_spec, toy_tokenizer, toy_paraphrases):
        trainer = _trainer(
            toy_split, toy_spec, toy_tokenizer, toy_paraphrases,
            strategy_weights={"paraphrase": 0.4, "same-class": 0.3, "mixed": 0.3},
            max_steps=6, batch_size_supcon=6,
        )
        kinds = set()
        for step in range(6):
            record = trainer.train_step(step, trainer.next_batch())
            kinds.update(record.pair_kinds)
        assert kinds == {"paraphrase", "same-class", "mixed"}


class TestRunTraining:
    def test_max_steps_zero_returns_untouched_model(
        self, toy_split, toy_spec, toy_tokenizer
    ):
        model = init_reference_model(
            ModelConfig(vocab_size=len(toy_tokenizer.vocab), hidden_dim=16,
                        layers=1, heads=2, max_seq_len=64, init_seed=2)
        )
        before = parameter_digest(model)
        records = run_training(
            model, toy_split, toy_spec, toy_tokenizer,
            TrainConfig(task=toy_spec.name, batch_size_supcon=4, lr_supcon=1e-3,
                        max_steps=0, contrastive=False),
        )
        assert records == []
        assert parameter_digest(model) == before

    def test_hard_step_cap(self):
        assert HARD_STEP_CAP == 1000
        config = TrainConfig(task="t", batch_size_supcon=2, lr_supcon=1e-3,
                             max_steps=5000)
        assert min(config.max_steps, HARD_STEP_CAP) == 1000

    def test_determinism_records_and_checkpoint(
        self, toy_split, toy_spec, toy_tokenizer, toy_paraphrases, tmp_path
    ):
        def run(tag):
            model = init_reference_model(
                ModelConfig(vocab_size=len(toy_tokenizer.vocab), hidden_dim=16,
                            layers=1, heads=2, max_seq_len=64, init_seed=2)
            )
            records = run_training(
                model, toy_split, toy_spec, toy_tokenizer,
                TrainConfig(task=toy_spec.name, batch_size_supcon=4,
                            lr_supcon=1e-3, lr_mlm=1e-3, max_steps=4, seed=9),
                toy_paraphrases,
                checkpoint_path=tmp_path / f"{tag}.npz",
            )
            return records, parameter_digest(model)

        records_a, digest_a = run("a")
        records_b, digest_b = run("b")
        assert records_a == records_b
        assert digest_a == digest_b
        assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()

    def test_epoch_reshuffling_covers_split(self, toy_split, toy_spec, toy_tokenizer):
        trainer = _trainer(toy_split, toy_spec, toy_tokenizer, contrastive=False)
        n = len(toy_split.train_examples())
        seen = []
        batches = []
        while len(seen) < 2 * n:
            batch = trainer.next_batch()
            batches.append([ex.id for ex in batch])
            seen.extend(ex.id for ex in batch)
        first_epoch, second_epoch = seen[:n], seen[n : 2 * n]
        assert sorted(first_epoch) == sorted(e.id for e in toy_split.train_examples())
        assert sorted(second_epoch) == sorted(first_epoch)
        assert first_epoch != second_epoch  # reshuffled

    def test_mlm_loss_decreases_over_50_steps(
        self, toy_split, toy_spec, toy_tokenizer, toy_paraphrases
    ):
        model = init_reference_model(
            ModelConfig(vocab_size=len(toy_tokenizer.vocab), hidden_dim=16,
                        layers=1, heads=2, max_seq_len=64, init_seed=2)
        )
        records = run_training(
            model, toy_split, toy_spec, toy_tokenizer,
            TrainConfig(task=toy_spec.name, batch_size_supcon=4, lr_supcon=7e-4,
                        lr_mlm=1e-3, max_steps=50, seed=13),
            toy_paraphrases,
        )
        early = sum(r.mlm_loss for r in records[:10]) / 10
        late = sum(r.mlm_loss for r in records[40:]) / 10
        assert late < early

    def test_step_record_serialization(self, toy_split, toy_spec, toy_tokenizer, toy_paraphrases, tmp_path):
        import json

        from cppf.training import save_step_records

        trainer = _trainer(toy_split, toy_spec, toy_tokenizer, toy_paraphrases, max_steps=1)
        record = trainer.train_step(0, trainer.next_batch())
        path = tmp_path / "steps.jsonl"
        save_step_records([record], path)
        raw = json.loads(path.read_text().splitlines()[0])
        assert raw["step"] == 0
        assert raw["parameter_version"] == 2
        assert len(raw["demo_ids"]) == 4  # one entry per pair in the batch
        assert isinstance(record, StepRecord)
