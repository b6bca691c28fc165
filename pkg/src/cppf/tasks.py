"""Task registry, dataset loading, and deterministic K-shot sampling.

A task couples a cloze template (one ``[MASK]`` slot, a ``<S1>`` slot and
optionally ``<S2>``) with an ordered label space and a one-word verbalizer
per label. Datasets are lists of labeled examples read from JSONL or CSV.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

MASK_TOKEN = "[MASK]"

DATASET_FORMATS = ("jsonl", "csv")


class TaskError(ValueError):
    """Invalid task definition or unknown task name."""


class DatasetError(ValueError):
    """Malformed dataset file or record."""


@dataclass(frozen=True)
class LabeledExample:
    """One classification example; ``sentence2`` only for pair tasks."""

    id: str
    sentence1: str
    label: str
    sentence2: str | None = None

    def __post_init__(self) -> None:
        if not self.sentence1:
            raise DatasetError(f"example {self.id!r}: sentence1 must be nonempty")


@dataclass(frozen=True)
class TaskSpec:
    """Template, ordered label space, verbalizer map, and metric for a task."""

    name: str
    template: str
    label_space: tuple[str, ...]
    verbalizers: Mapping[str, str]
    metric: str = "accuracy"  # or "matthews-correlation"

    def __post_init__(self) -> None:
        if self.template.count(MASK_TOKEN) != 1:
            raise TaskError(
                f"task {self.name!r}: template must contain exactly one {MASK_TOKEN}"
            )
        if self.metric not in ("accuracy", "matthews-correlation"):
            raise TaskError(f"task {self.name!r}: unknown metric {self.metric!r}")
        if set(self.verbalizers) != set(self.label_space):
            raise TaskError(
                f"task {self.name!r}: verbalizers must cover exactly the label space"
            )
        words = list(self.verbalizers.values())
        if len(set(words)) != len(words):
            raise TaskError(f"task {self.name!r}: verbalizer words must be distinct")
        object.__setattr__(self, "verbalizers", dict(self.verbalizers))
        object.__setattr__(self, "label_space", tuple(self.label_space))

    @property
    def is_pair_task(self) -> bool:
        return "<S2>" in self.template

    def validate_example(self, example: LabeledExample) -> None:
        if example.label not in self.label_space:
            raise DatasetError(
                f"example {example.id!r}: unknown label {example.label!r} "
                f"for task {self.name!r} (expected one of {list(self.label_space)})"
            )
        if self.is_pair_task and not example.sentence2:
            raise DatasetError(
                f"example {example.id!r}: task {self.name!r} requires sentence2"
            )


@dataclass(frozen=True)
class FewShotSplit:
    """K examples per label for training, plus optional dev and test lists."""

    train: Mapping[str, tuple[LabeledExample, ...]]
    dev: tuple[LabeledExample, ...]
    test: tuple[LabeledExample, ...]
    k: int
    seed: int

    def __post_init__(self) -> None:
        for label, examples in self.train.items():
            if len(examples) != self.k:
                raise DatasetError(
                    f"label {label!r}: expected {self.k} train examples, "
                    f"got {len(examples)}"
                )
        train_ids = {ex.id for exs in self.train.values() for ex in exs}
        test_ids = {ex.id for ex in self.test}
        overlap = train_ids & test_ids
        if overlap:
            raise DatasetError(f"train/test overlap on ids: {sorted(overlap)[:5]}")

    def train_examples(self) -> list[LabeledExample]:
        """All train examples, flattened in label-space insertion order."""
        return [ex for exs in self.train.values() for ex in exs]


_BUILTIN_TASKS: dict[str, TaskSpec] = {}
_REGISTERED_TASKS: dict[str, TaskSpec] = {}


def _builtin(spec: TaskSpec) -> TaskSpec:
    _BUILTIN_TASKS[spec.name] = spec
    return spec


_builtin(
    TaskSpec(
        name="SST-2",
        template="<S1> It was [MASK] .",
        label_space=("positive", "negative"),
        verbalizers={"positive": "great", "negative": "terrible"},
    )
)
_builtin(
    TaskSpec(
        name="SST-5",
        template="<S1> It was [MASK] .",
        label_space=("v.positive", "positive", "neutral", "negative", "v.negative"),
        verbalizers={
            "v.positive": "great",
            "positive": "good",
            "neutral": "okay",
            "negative": "bad",
            "v.negative": "terrible",
        },
    )
)
_builtin(
    TaskSpec(
        name="MNLI",
        template="<S1> ? [MASK] , <S2>",
        label_space=("entailment", "neutral", "contradiction"),
        verbalizers={"entailment": "Yes", "neutral": "Maybe", "contradiction": "No"},
    )
)
_builtin(
    TaskSpec(
        name="CoLA",
        template="<S1> This is [MASK] .",
        label_space=("grammatical", "not_grammatical"),
        verbalizers={"grammatical": "correct", "not_grammatical": "incorrect"},
        metric="matthews-correlation",
    )
)
_builtin(
    TaskSpec(
        name="QNLI",
        template="<S1> ? [MASK] , <S2>",
        label_space=("entailment", "not_entailment"),
        verbalizers={"entailment": "Yes", "not_entailment": "No"},
    )
)
_builtin(
    TaskSpec(
        name="CR",
        template="<S1> It was [MASK] .",
        label_space=("positive", "negative"),
        verbalizers={"positive": "great", "negative": "terrible"},
    )
)


def builtin_task_names() -> tuple[str, ...]:
    return tuple(_BUILTIN_TASKS)


def get_task(name: str) -> TaskSpec:
    """Look up a built-in or user-registered task by name."""
    if name in _BUILTIN_TASKS:
        return _BUILTIN_TASKS[name]
    if name in _REGISTERED_TASKS:
        return _REGISTERED_TASKS[name]
    known = sorted(set(_BUILTIN_TASKS) | set(_REGISTERED_TASKS))
    raise TaskError(f"unknown task {name!r}; known tasks: {known}")


def register_task(spec: TaskSpec, overwrite: bool = False) -> TaskSpec:
    """Register a user-defined task. Built-in names cannot be shadowed."""
    if spec.name in _BUILTIN_TASKS:
        raise TaskError(f"cannot overwrite built-in task {spec.name!r}")
    if spec.name in _REGISTERED_TASKS and not overwrite:
        raise TaskError(f"task {spec.name!r} already registered")
    _REGISTERED_TASKS[spec.name] = spec
    return spec


def load_task_file(path: str | Path) -> TaskSpec:
    """Register a task from a declarative JSON file.

    Expected keys: name, template, labelSpace (ordered list), verbalizers
    (label -> word map), and optionally metric.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        spec = TaskSpec(
            name=raw["name"],
            template=raw["template"],
            label_space=tuple(raw["labelSpace"]),
            verbalizers=dict(raw["verbalizers"]),
            metric=raw.get("metric", "accuracy"),
        )
    except KeyError as exc:
        raise TaskError(f"{path}: missing task field {exc}") from exc
    return register_task(spec, overwrite=True)


def _example_from_record(
    record: Mapping[str, object], default_id: str, where: str
) -> LabeledExample:
    try:
        sentence1 = record["sentence1"]
        label = record["label"]
    except KeyError as exc:
        raise DatasetError(f"{where}: missing field {exc}") from exc
    sentence2 = record.get("sentence2") or None
    ex_id = str(record.get("id") or default_id)
    if not isinstance(sentence1, str) or not sentence1:
        raise DatasetError(f"{where}: sentence1 must be a nonempty string")
    return LabeledExample(
        id=ex_id, sentence1=sentence1, label=str(label), sentence2=sentence2
    )


def load_dataset(
    path: str | Path,
    format: str = "jsonl",
    task: TaskSpec | None = None,
) -> list[LabeledExample]:
    """Read a dataset file into labeled examples.

    JSONL records (and CSV rows) carry {id, sentence1, sentence2?, label}.
    Records missing ``id`` get a stable one from the file line number. If
    ``task`` is given, labels and pair-slot presence are validated against it.
    """
    path = Path(path)
    if format not in DATASET_FORMATS:
        raise DatasetError(f"unknown dataset format {format!r}; use {DATASET_FORMATS}")
    examples: list[LabeledExample] = []
    if format == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                where = f"{path}:{lineno}"
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DatasetError(f"{where}: invalid JSON ({exc.msg})") from exc
                if not isinstance(record, dict):
                    raise DatasetError(f"{where}: record must be a JSON object")
                examples.append(
                    _example_from_record(record, default_id=f"line-{lineno}", where=where)
                )
    else:
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for lineno, row in enumerate(reader, start=2):
                where = f"{path}:{lineno}"
                examples.append(
                    _example_from_record(row, default_id=f"line-{lineno}", where=where)
                )
    seen: set[str] = set()
    for ex in examples:
        if ex.id in seen:
            raise DatasetError(f"{path}: duplicate example id {ex.id!r}")
        seen.add(ex.id)
    if task is not None:
        for ex in examples:
            task.validate_example(ex)
    return examples


def save_dataset(examples: Iterable[LabeledExample], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            record: dict[str, object] = {
                "id": ex.id,
                "sentence1": ex.sentence1,
                "label": ex.label,
            }
            if ex.sentence2 is not None:
                record["sentence2"] = ex.sentence2
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def sample_few_shot(
    dataset: Sequence[LabeledExample],
    k: int,
    seed: int,
    task: TaskSpec | None = None,
    with_dev: bool = False,
) -> FewShotSplit:
    """Draw exactly ``k`` examples per label, uniformly without replacement.

    The remainder of the dataset becomes the test list (and, when
    ``with_dev`` is set, a further k-per-label dev sample is carved out of
    it first). Deterministic for a fixed (dataset, k, seed).
    """
    if k < 0:
        raise DatasetError("k must be >= 0")
    by_label: dict[str, list[LabeledExample]] = {}
    if task is not None:
        for label in task.label_space:
            by_label[label] = []
    for ex in dataset:
        by_label.setdefault(ex.label, []).append(ex)

    rng = random.Random(seed)
    dev_per_label = k if with_dev else 0
    train: dict[str, tuple[LabeledExample, ...]] = {}
    dev: list[LabeledExample] = []
    held_out_ids: set[str] = set()
    for label in by_label:
        pool = by_label[label]
        need = k + dev_per_label
        if len(pool) < need:
            raise DatasetError(
                f"label {label!r} has {len(pool)} examples; need {need} (k={k})"
            )
        chosen = rng.sample(pool, need)
        train[label] = tuple(chosen[:k])
        dev.extend(chosen[k:])
        held_out_ids.update(ex.id for ex in chosen)
    test = tuple(ex for ex in dataset if ex.id not in held_out_ids)
    return FewShotSplit(train=train, dev=tuple(dev), test=test, k=k, seed=seed)


def split_to_dict(split: FewShotSplit) -> dict:
    def enc(ex: LabeledExample) -> dict:
        record: dict[str, object] = {
            "id": ex.id,
            "sentence1": ex.sentence1,
            "label": ex.label,
        }
        if ex.sentence2 is not None:
            record["sentence2"] = ex.sentence2
        return record

    return {
        "k": split.k,
        "seed": split.seed,
        "train": {label: [enc(e) for e in exs] for label, exs in split.train.items()},
        "dev": [enc(e) for e in split.dev],
        "test": [enc(e) for e in split.test],
    }


def split_from_dict(raw: Mapping) -> FewShotSplit:
    def dec(record: Mapping) -> LabeledExample:
        return LabeledExample(
            id=str(record["id"]),
            sentence1=record["sentence1"],
            label=record["label"],
            sentence2=record.get("sentence2"),
        )

    return FewShotSplit(
        train={
            label: tuple(dec(r) for r in records)
            for label, records in raw["train"].items()
        },
        dev=tuple(dec(r) for r in raw.get("dev", [])),
        test=tuple(dec(r) for r in raw.get("test", [])),
        k=int(raw["k"]),
        seed=int(raw["seed"]),
    )


def save_split(split: FewShotSplit, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(split_to_dict(split), ensure_ascii=False, indent=2), encoding="utf-8"
    )


def load_split(path: str | Path) -> FewShotSplit:
    return split_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
