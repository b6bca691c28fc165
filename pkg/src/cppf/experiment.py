"""Experiment runner: multi-seed train/evaluate pipelines and reports.

A run is keyed by a digest of its full configuration; artifacts land
under ``<output>/<task>/<method>/<digest>/`` with one subdirectory per
seed, so re-running a changed configuration can never silently overwrite
an older result. Reports carry per-seed metrics plus their exact
mean/standard deviation and render to JSON, CSV, and a PNG figure.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import torch

from cppf import plotting
from cppf.augmenters import (
    Augmenter,
    BackTranslationAugmenter,
    EdaAugmenter,
    ParaphraseAugmenter,
    precompute_augmentations,
)
from cppf.backtranslation import PIVOT_LANGUAGES
from cppf.clients import ReplayLLMClient, ReplayTranslationClient
from cppf.eda import EdaParams, load_lexicon
from cppf.losses import predict_label
from cppf.metrics import compute_metric
from cppf.model import (
    ModelConfig,
    ReferenceEncoder,
    init_reference_model,
    parameter_digest,
)
from cppf.paraphrase import load_demo_pairs
from cppf.prompts import assemble_prompt, render_template, sample_demonstrations
from cppf.tasks import (
    FewShotSplit,
    LabeledExample,
    TaskSpec,
    get_task,
    load_dataset,
    sample_few_shot,
)
from cppf.tokenizer import Tokenizer, Vocabulary
from cppf.training import (
    TrainConfig,
    _TASK_DEFAULTS,
    run_training,
    save_step_records,
    task_defaults,
)

logger = logging.getLogger(__name__)

EDA_EXPERIMENT_METHODS = ("eda", "eda-sr", "eda-ri", "eda-rs", "eda-rd")
BT_EXPERIMENT_METHODS = tuple(f"bt-{p}" for p in PIVOT_LANGUAGES)
EXPERIMENT_METHODS = (
    "lm-cppf",
    "mlm-only",
    "supcon-no-aug",
    *EDA_EXPERIMENT_METHODS,
    *BT_EXPERIMENT_METHODS,
)


class ExperimentError(RuntimeError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    method: str
    dataset_path: str
    output_dir: str
    test_path: str | None = None
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    k_shot: int = 16
    with_dev: bool = False
    resample_split_per_seed: bool = True
    replay_path: str | None = None
    demo_pairs_path: str | None = None
    demo_template_id: int = 1
    instruction_template_id: int | None = None
    lexicon_path: str | None = None
    eval_seed: int = 0
    model: Mapping[str, object] = field(default_factory=dict)
    train: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ExperimentError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ExperimentError("seeds must be distinct")
        if self.method not in EXPERIMENT_METHODS:
            raise ExperimentError(
                f"unknown method {self.method!r}; use one of {EXPERIMENT_METHODS}"
            )
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "model", dict(self.model))
        object.__setattr__(self, "train", dict(self.train))

    def digest(self) -> str:
        """Digest over every behavior-affecting field (not the output dir)."""
        payload = asdict(self)
        payload.pop("output_dir")
        return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        raw.pop("schema_version", None)  # written configs are reloadable
        raw.update(overrides)
        if "seeds" in raw:
            raw["seeds"] = tuple(raw["seeds"])
        return cls(**raw)


@dataclass(frozen=True)
class Report:
    task: str
    method: str
    metric: str
    seeds: tuple[int, ...]
    per_seed: Mapping[int, float]
    mean: float
    std: float | None  # None for a single seed
    config_digest: str
    checkpoint_digests: Mapping[int, str]
    runtime_seconds: float

    def digest(self) -> str:
        """Stable content digest; runtime is reporting-only and excluded."""
        payload = {
            "task": self.task,
            "method": self.method,
            "metric": self.metric,
            "seeds": list(self.seeds),
            "per_seed": {str(k): v for k, v in sorted(self.per_seed.items())},
            "mean": self.mean,
            "std": self.std,
            "config_digest": self.config_digest,
            "checkpoint_digests": {
                str(k): v for k, v in sorted(self.checkpoint_digests.items())
            },
        }
        return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "task": self.task,
            "method": self.method,
            "metric": self.metric,
            "seeds": list(self.seeds),
            "per_seed": {str(k): v for k, v in sorted(self.per_seed.items())},
            "mean": self.mean,
            "std": self.std,
            "config_digest": self.config_digest,
            "checkpoint_digests": {
                str(k): v for k, v in sorted(self.checkpoint_digests.items())
            },
            "runtime_seconds": self.runtime_seconds,
            "report_digest": self.digest(),
        }


def save_report(report: Report, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
    )


def load_report(path: str | Path) -> Report:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return Report(
        task=raw["task"],
        method=raw["method"],
        metric=raw["metric"],
        seeds=tuple(raw["seeds"]),
        per_seed={int(k): v for k, v in raw["per_seed"].items()},
        mean=raw["mean"],
        std=raw["std"],
        config_digest=raw["config_digest"],
        checkpoint_digests={int(k): v for k, v in raw["checkpoint_digests"].items()},
        runtime_seconds=raw["runtime_seconds"],
    )


def resolve_task(name: str) -> TaskSpec:
    if name == "toy-sentiment":
        from cppf.toy import toy_task

        return toy_task()
    return get_task(name)


def build_vocabulary(
    spec: TaskSpec,
    split: FewShotSplit,
    augmented_texts: Sequence[str] = (),
) -> Vocabulary:
    """Vocabulary over the training split, template words, and verbalizers."""
    texts = [spec.template.replace("<S1>", "").replace("<S2>", "")]
    texts.extend(spec.verbalizers.values())
    for ex in list(split.train_examples()) + list(split.dev):
        texts.append(ex.sentence1)
        if ex.sentence2:
            texts.append(ex.sentence2)
    texts.extend(augmented_texts)
    return Vocabulary.build(texts)


def evaluate(
    model: ReferenceEncoder,
    test_set: Sequence[LabeledExample],
    spec: TaskSpec,
    tokenizer: Tokenizer,
    split: FewShotSplit,
    demo_count: int = 2,
    seed: int = 0,
) -> float:
    """Argmax restricted-softmax prediction per example, task metric overall.

    Evaluation prompts carry demonstrations sampled from the training
    split, mirroring the training-time prompt shape; the draw is seeded so
    evaluation is deterministic.
    """
    if not test_set:
        raise ExperimentError("test set must be nonempty")
    rng = random.Random(seed)
    predictions: list[str] = []
    truths: list[str] = []
    model.eval()
    with torch.no_grad():
        for example in test_set:
            demos = sample_demonstrations(split, example, demo_count, rng)
            view = assemble_prompt(
                render_template(spec, example, "masked"),
                [render_template(spec, d, "verbalized") for d in demos],
            )
            prompt = tokenizer.encode_prompt(view.text, target_end=view.target_char_end)
            output = model(prompt)
            predictions.append(predict_label(output.mlm_logits, spec, tokenizer.vocab))
            truths.append(example.label)
    return compute_metric(spec.metric, predictions, truths)


def make_augmenter(
    method: str,
    spec: TaskSpec,
    replay_path: str | None = None,
    demo_pairs_path: str | None = None,
    lexicon_path: str | None = None,
    demo_template_id: int = 1,
    instruction_template_id: int | None = None,
) -> Augmenter | None:
    """Wire the augmenter for an experiment method from fixture paths."""
    if method in ("mlm-only", "supcon-no-aug"):
        return None
    if method == "lm-cppf":
        if not replay_path or not demo_pairs_path:
            raise ExperimentError(
                "method lm-cppf needs replay_path and demo_pairs_path fixtures"
            )
        return ParaphraseAugmenter(
            ReplayLLMClient(replay_path),
            load_demo_pairs(demo_pairs_path),
            spec.name,
            demo_template_id=demo_template_id,
            instruction_template_id=instruction_template_id,
        )
    if method in EDA_EXPERIMENT_METHODS:
        if not lexicon_path:
            raise ExperimentError(f"method {method} needs lexicon_path")
        lexicon = load_lexicon(lexicon_path)
        eda_method = "eda-all" if method == "eda" else method
        return EdaAugmenter(eda_method, lexicon, EdaParams())
    if method in BT_EXPERIMENT_METHODS:
        if not replay_path:
            raise ExperimentError(f"method {method} needs replay_path fixtures")
        pivot = method.split("-", 1)[1]
        return BackTranslationAugmenter(ReplayTranslationClient(replay_path), pivot)
    raise ExperimentError(f"unknown method {method!r}")


def _build_augmenter(config: ExperimentConfig, spec: TaskSpec) -> Augmenter | None:
    return make_augmenter(
        config.method,
        spec,
        replay_path=config.replay_path,
        demo_pairs_path=config.demo_pairs_path,
        lexicon_path=config.lexicon_path,
        demo_template_id=config.demo_template_id,
        instruction_template_id=config.instruction_template_id,
    )


def _base_train_config(config: ExperimentConfig, seed: int) -> TrainConfig:
    overrides = dict(config.train)
    overrides["seed"] = seed
    if config.method == "mlm-only":
        overrides["contrastive"] = False
    elif config.method == "supcon-no-aug":
        overrides.setdefault("pair_strategy", "same-class")
    else:
        overrides.setdefault("pair_strategy", "paraphrase")
    if config.task in _TASK_DEFAULTS:
        return task_defaults(config.task, **overrides)
    missing = {"batch_size_supcon", "lr_supcon"} - set(overrides)
    if missing:
        raise ExperimentError(
            f"task {config.task!r} has no named defaults; set {sorted(missing)} "
            "in the train overrides"
        )
    return TrainConfig(task=config.task, **overrides)


def run_experiment(config: ExperimentConfig) -> Report:
    """Train and evaluate over every seed, then aggregate and persist."""
    started = time.perf_counter()
    spec = resolve_task(config.task)
    dataset = load_dataset(config.dataset_path, task=spec)
    external_test = (
        load_dataset(config.test_path, task=spec) if config.test_path else None
    )

    run_dir = (
        Path(config.output_dir) / config.task / config.method / config.digest()
    )
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps(
            {"schema_version": 1, **asdict(config)}, indent=2, sort_keys=True
        ),
        encoding="utf-8",
    )

    per_seed: dict[int, float] = {}
    checkpoint_digests: dict[int, str] = {}
    losses_per_seed: dict[int, list[dict]] = {}

    for seed in config.seeds:
        seed_dir = run_dir / f"seed-{seed}"
        seed_dir.mkdir(exist_ok=True)
        split_seed = seed if config.resample_split_per_seed else config.seeds[0]
        split = sample_few_shot(
            dataset, config.k_shot, split_seed, task=spec, with_dev=config.with_dev
        )
        test_set = external_test if external_test is not None else list(split.test)

        augmenter = _build_augmenter(config, spec)
        paraphrases = (
            precompute_augmentations(split.train_examples(), augmenter, seed=seed)
            if augmenter is not None
            else {}
        )
        vocab = build_vocabulary(
            spec, split, [r.augmented_text for r in paraphrases.values()]
        )
        model_config = ModelConfig(
            vocab_size=len(vocab), init_seed=seed, **config.model
        )
        tokenizer = Tokenizer(vocab, max_seq_len=model_config.max_seq_len)
        model = init_reference_model(model_config)

        train_config = _base_train_config(config, seed)
        records = run_training(
            model,
            split,
            spec,
            tokenizer,
            train_config,
            paraphrases,
            checkpoint_path=seed_dir / "checkpoint.npz",
        )
        save_step_records(records, seed_dir / "steps.jsonl")
        vocab.save(seed_dir / "vocab.txt")
        losses_per_seed[seed] = [r.to_dict() for r in records]

        metric_value = evaluate(
            model,
            test_set,
            spec,
            tokenizer,
            split,
            demo_count=train_config.demo_count,
            seed=config.eval_seed,
        )
        per_seed[seed] = metric_value
        checkpoint_digests[seed] = parameter_digest(model)
        logger.info(
            "%s/%s seed %d: %s = %.4f",
            config.task,
            config.method,
            seed,
            spec.metric,
            metric_value,
        )

    values = [per_seed[s] for s in config.seeds]
    report = Report(
        task=config.task,
        method=config.method,
        metric=spec.metric,
        seeds=config.seeds,
        per_seed=per_seed,
        mean=statistics.fmean(values),
        std=statistics.stdev(values) if len(values) > 1 else None,
        config_digest=config.digest(),
        checkpoint_digests=checkpoint_digests,
        runtime_seconds=time.perf_counter() - started,
    )
    save_report(report, run_dir / "report.json")
    _write_per_seed_csv(report, run_dir / "report.csv")
    if any(losses_per_seed.values()):
        plotting.save_loss_curves(
            losses_per_seed,
            run_dir / "loss_curves.png",
            title=f"{config.task} / {config.method}",
        )
    return report


def _write_per_seed_csv(report: Report, path: Path) -> None:
    lines = ["seed,metric"]
    lines += [f"{seed},{report.per_seed[seed]}" for seed in report.seeds]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ComparisonRow:
    task: str
    method: str
    metric: str
    mean: float
    std: float | None
    n_seeds: int


def compare(reports: Sequence[Report]) -> list[ComparisonRow]:
    """Align reports over one task into comparison rows."""
    if not reports:
        raise ExperimentError("nothing to compare: empty report list")
    tasks = {report.task for report in reports}
    if len(tasks) > 1:
        raise ExperimentError(f"reports span multiple tasks: {sorted(tasks)}")
    return [
        ComparisonRow(
            task=report.task,
            method=report.method,
            metric=report.metric,
            mean=report.mean,
            std=report.std,
            n_seeds=len(report.seeds),
        )
        for report in reports
    ]


def comparison_csv(rows: Sequence[ComparisonRow]) -> str:
    lines = ["task,method,mean,std,n_seeds"]
    for row in rows:
        std = "" if row.std is None else repr(row.std)
        lines.append(f"{row.task},{row.method},{row.mean!r},{std},{row.n_seeds}")
    return "\n".join(lines) + "\n"


def comparison_text(rows: Sequence[ComparisonRow]) -> str:
    """Fixed-width table; the best mean is wrapped in ** markers."""
    best = max(row.mean for row in rows)
    header = f"{'method':<16} {'mean':>10} {'std':>10} {'seeds':>6}"
    lines = [f"task: {rows[0].task} ({rows[0].metric})", header, "-" * len(header)]
    for row in rows:
        mean = f"**{row.mean:.4f}**" if row.mean == best else f"{row.mean:.4f}"
        std = "n/a" if row.std is None else f"{row.std:.4f}"
        lines.append(f"{row.method:<16} {mean:>10} {std:>10} {row.n_seeds:>6}")
    return "\n".join(lines) + "\n"


def write_comparison(
    rows: Sequence[ComparisonRow], out_dir: str | Path
) -> dict[str, Path]:
    """Write the comparison table as CSV, text, and a PNG chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "comparison.csv"
    text_path = out_dir / "comparison.txt"
    chart_path = out_dir / "comparison.png"
    csv_path.write_text(comparison_csv(rows), encoding="utf-8")
    text_path.write_text(comparison_text(rows), encoding="utf-8")
    plotting.save_comparison_chart(
        [
            {"method": r.method, "mean": r.mean, "std": r.std, "metric": r.metric}
            for r in rows
        ],
        chart_path,
        title=f"{rows[0].task}: mean {rows[0].metric} over {rows[0].n_seeds} seeds",
    )
    return {"csv": csv_path, "text": text_path, "chart": chart_path}
