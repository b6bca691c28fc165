"""Command-line entry points.

Subcommands: sample, augment, train, eval, experiment, compare, and
make-toy (generates the offline demo corpus and fixtures). Endpoint
credentials are environment-only; every other knob is a flag or a config
file field.
"""

from __future__ import annotations

import json
import logging
import random
from pathlib import Path

import click

from cppf import experiment as exp
from cppf import toy
from cppf.augmenters import precompute_augmentations
from cppf.clients import save_records
from cppf.model import ModelConfig, init_reference_model, load_checkpoint
from cppf.tasks import load_dataset, load_split, load_task_file, sample_few_shot, save_split
from cppf.tokenizer import Tokenizer, Vocabulary
from cppf.training import TrainConfig, run_training, save_step_records, task_defaults, _TASK_DEFAULTS

logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@click.group()
def main() -> None:
    """Few-shot contrastive prompt fine-tuning toolkit."""


def _resolve_task(name: str, task_file: str | None):
    if task_file:
        return load_task_file(task_file)
    return exp.resolve_task(name)


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--task", required=True)
@click.option("--task-file", type=click.Path(exists=True), default=None)
@click.option("--k", default=16, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--dev/--no-dev", default=False, show_default=True)
@click.option("--out", required=True, type=click.Path())
def sample(dataset_path, task, task_file, k, seed, dev, out):
    """Draw a K-shot split from a dataset and save it as JSON."""
    spec = _resolve_task(task, task_file)
    dataset = load_dataset(dataset_path, task=spec)
    split = sample_few_shot(dataset, k, seed, task=spec, with_dev=dev)
    save_split(split, out)
    click.echo(
        f"wrote split with {len(split.train_examples())} train / "
        f"{len(split.dev)} dev / {len(split.test)} test examples to {out}"
    )


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--task", required=True)
@click.option("--task-file", type=click.Path(exists=True), default=None)
@click.option("--method", required=True, type=click.Choice(
    [m for m in exp.EXPERIMENT_METHODS if m not in ("mlm-only", "supcon-no-aug")]
))
@click.option("--replay", "replay_path", type=click.Path(exists=True), default=None)
@click.option("--demo-pairs", "demo_pairs_path", type=click.Path(exists=True), default=None)
@click.option("--lexicon", "lexicon_path", type=click.Path(exists=True), default=None)
@click.option("--demo-template", default=1, show_default=True)
@click.option("--instruction-template", default=None, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def augment(dataset_path, task, task_file, method, replay_path, demo_pairs_path,
            lexicon_path, demo_template, instruction_template, seed, out):
    """Augment every dataset example once; write the records as JSONL."""
    spec = _resolve_task(task, task_file)
    dataset = load_dataset(dataset_path, task=spec)
    augmenter = exp.make_augmenter(
        method,
        spec,
        replay_path=replay_path,
        demo_pairs_path=demo_pairs_path,
        lexicon_path=lexicon_path,
        demo_template_id=demo_template,
        instruction_template_id=instruction_template,
    )
    records = precompute_augmentations(dataset, augmenter, seed=seed)
    save_records(records.values(), out)
    click.echo(f"wrote {len(records)} augmentation records to {out}")


@main.command()
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--task", required=True)
@click.option("--task-file", type=click.Path(exists=True), default=None)
@click.option("--method", default="lm-cppf", show_default=True,
              type=click.Choice(list(exp.EXPERIMENT_METHODS)))
@click.option("--replay", "replay_path", type=click.Path(exists=True), default=None)
@click.option("--demo-pairs", "demo_pairs_path", type=click.Path(exists=True), default=None)
@click.option("--lexicon", "lexicon_path", type=click.Path(exists=True), default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--max-steps", default=None, type=int)
@click.option("--batch-size", default=None, type=int)
@click.option("--lr-mlm", default=None, type=float)
@click.option("--lr-supcon", default=None, type=float)
@click.option("--hidden-dim", default=32, show_default=True)
@click.option("--layers", default=2, show_default=True)
@click.option("--heads", default=4, show_default=True)
@click.option("--max-seq-len", default=128, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
def train(split_path, task, task_file, method, replay_path, demo_pairs_path,
          lexicon_path, seed, max_steps, batch_size, lr_mlm, lr_supcon,
          hidden_dim, layers, heads, max_seq_len, out_dir):
    """Train one model on a saved split and persist checkpoint + step log."""
    spec = _resolve_task(task, task_file)
    split = load_split(split_path)
    augmenter = exp.make_augmenter(
        method,
        spec,
        replay_path=replay_path,
        demo_pairs_path=demo_pairs_path,
        lexicon_path=lexicon_path,
    )
    paraphrases = (
        precompute_augmentations(split.train_examples(), augmenter, seed=seed)
        if augmenter is not None
        else {}
    )
    overrides: dict = {"seed": seed}
    if max_steps is not None:
        overrides["max_steps"] = max_steps
    if batch_size is not None:
        overrides["batch_size_supcon"] = batch_size
    if lr_mlm is not None:
        overrides["lr_mlm"] = lr_mlm
    if lr_supcon is not None:
        overrides["lr_supcon"] = lr_supcon
    if method == "mlm-only":
        overrides["contrastive"] = False
    elif method == "supcon-no-aug":
        overrides["pair_strategy"] = "same-class"
    if spec.name in _TASK_DEFAULTS:
        config = task_defaults(spec.name, **overrides)
    else:
        if "batch_size_supcon" not in overrides or "lr_supcon" not in overrides:
            raise click.UsageError(
                f"task {spec.name!r} has no named defaults; pass --batch-size "
                "and --lr-supcon"
            )
        config = TrainConfig(task=spec.name, **overrides)

    vocab = exp.build_vocabulary(
        spec, split, [r.augmented_text for r in paraphrases.values()]
    )
    model_config = ModelConfig(
        vocab_size=len(vocab),
        hidden_dim=hidden_dim,
        layers=layers,
        heads=heads,
        max_seq_len=max_seq_len,
        init_seed=seed,
    )
    model = init_reference_model(model_config)
    tokenizer = Tokenizer(vocab, max_seq_len=max_seq_len)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = run_training(
        model, split, spec, tokenizer, config, paraphrases,
        checkpoint_path=out / "checkpoint.npz",
    )
    save_step_records(records, out / "steps.jsonl")
    vocab.save(out / "vocab.txt")
    final = records[-1].total_loss if records else float("nan")
    click.echo(f"trained {len(records)} steps; final total loss {final:.4f}")
    click.echo(f"artifacts in {out}")


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--test", "test_path", required=True, type=click.Path(exists=True))
@click.option("--task", required=True)
@click.option("--task-file", type=click.Path(exists=True), default=None)
@click.option("--demo-count", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
def eval_command(checkpoint, vocab_path, split_path, test_path, task, task_file,
                 demo_count, seed):
    """Evaluate a checkpoint on a test set; print the task metric."""
    spec = _resolve_task(task, task_file)
    model = load_checkpoint(checkpoint)
    vocab = Vocabulary.load(vocab_path)
    tokenizer = Tokenizer(vocab, max_seq_len=model.config.max_seq_len)
    split = load_split(split_path)
    test_set = load_dataset(test_path, task=spec)
    value = exp.evaluate(
        model, test_set, spec, tokenizer, split, demo_count=demo_count, seed=seed
    )
    click.echo(f"{spec.metric}: {value:.4f}")


@main.command("experiment")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--task", default=None, help="override the config's task")
@click.option("--method", default=None, help="override the config's method")
@click.option("--seeds", default=None, help="comma-separated seed override")
@click.option("--dataset", "dataset_path", default=None, type=click.Path(exists=True))
@click.option("--test", "test_path", default=None, type=click.Path(exists=True))
@click.option("--k-shot", default=None, type=int)
@click.option("--replay", "replay_path", default=None, type=click.Path(exists=True))
@click.option("--demo-pairs", "demo_pairs_path", default=None, type=click.Path(exists=True))
@click.option("--lexicon", "lexicon_path", default=None, type=click.Path(exists=True))
@click.option("--eval-seed", default=None, type=int)
@click.option("--output-dir", default=None, type=click.Path())
def experiment_command(config_path, task, method, seeds, dataset_path, test_path,
                       k_shot, replay_path, demo_pairs_path, lexicon_path,
                       eval_seed, output_dir):
    """Run a multi-seed experiment from a JSON config file."""
    overrides: dict = {}
    for key, value in (
        ("task", task),
        ("method", method),
        ("dataset_path", dataset_path),
        ("test_path", test_path),
        ("k_shot", k_shot),
        ("replay_path", replay_path),
        ("demo_pairs_path", demo_pairs_path),
        ("lexicon_path", lexicon_path),
        ("eval_seed", eval_seed),
        ("output_dir", output_dir),
    ):
        if value is not None:
            overrides[key] = value
    if seeds:
        overrides["seeds"] = tuple(int(s) for s in seeds.split(","))
    config = exp.ExperimentConfig.from_file(config_path, **overrides)
    report = exp.run_experiment(config)
    std = "n/a" if report.std is None else f"{report.std:.4f}"
    click.echo(
        f"{report.task}/{report.method}: mean {report.metric} "
        f"{report.mean:.4f} (std {std}, {len(report.seeds)} seeds)"
    )
    click.echo(f"report digest {report.digest()}")


@main.command()
@click.argument("reports", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
def compare(reports, out_dir):
    """Merge run reports into a comparison table (text, CSV, and chart)."""
    rows = exp.compare([exp.load_report(p) for p in reports])
    paths = exp.write_comparison(rows, out_dir)
    click.echo(exp.comparison_text(rows))
    click.echo(f"wrote {paths['csv']}, {paths['text']}, {paths['chart']}")


@main.command("make-toy")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--train-per-class", default=64, show_default=True)
@click.option("--test-size", default=500, show_default=True)
@click.option("--seed", default=7, show_default=True)
def make_toy(out_dir, train_per_class, test_size, seed):
    """Generate the synthetic task corpus, fixtures, and demo configs."""
    from cppf.eda import save_lexicon
    from cppf.tasks import save_dataset

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    toy.toy_task()
    train_pool = toy.generate_toy_dataset(train_per_class, seed, id_prefix="toy-train")
    rng = random.Random(seed + 1)
    test_pool = toy.generate_toy_dataset(
        (test_size + 1) // 2, seed + 1, id_prefix="toy-test", vocabulary="mixed"
    )
    test_set = rng.sample(test_pool, test_size)
    save_dataset(train_pool, out / "train.jsonl")
    save_dataset(test_set, out / "test.jsonl")

    demo_pairs = toy.make_demo_pairs(train_pool)
    from cppf.paraphrase import save_demo_pairs

    save_demo_pairs(demo_pairs, out / "demo_pairs.jsonl")
    fixtures = toy.make_paraphrase_fixtures(train_pool, demo_pairs)
    with (out / "paraphrase_fixtures.jsonl").open("w", encoding="utf-8") as fh:
        for row in fixtures.values():
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    mt_fixtures = toy.make_backtranslation_fixtures(train_pool)
    with (out / "mt_fixtures.jsonl").open("w", encoding="utf-8") as fh:
        for row in mt_fixtures.values():
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    save_lexicon(toy.toy_eda_lexicon(), out / "lexicon.json")

    base = {
        "task": toy.TOY_TASK_NAME,
        "dataset_path": str(out / "train.jsonl"),
        "test_path": str(out / "test.jsonl"),
        "output_dir": str(out / "runs"),
        "seeds": [1, 2, 3, 4, 5],
        "k_shot": 16,
        "replay_path": str(out / "paraphrase_fixtures.jsonl"),
        "demo_pairs_path": str(out / "demo_pairs.jsonl"),
        "lexicon_path": str(out / "lexicon.json"),
        "model": toy.toy_model_overrides(),
        "train": toy.toy_train_overrides(),
    }
    for method in ("lm-cppf", "mlm-only", "supcon-no-aug", "eda", "bt-ZH"):
        config = dict(base, method=method)
        if method.startswith("bt-"):
            config["replay_path"] = str(out / "mt_fixtures.jsonl")
        (out / f"exp-{method}.json").write_text(
            json.dumps(config, indent=2, sort_keys=True), encoding="utf-8"
        )
    click.echo(f"toy corpus and fixtures in {out}")
    click.echo(f"try: cppf experiment --config {out / 'exp-lm-cppf.json'}")


if __name__ == "__main__":
    main()
