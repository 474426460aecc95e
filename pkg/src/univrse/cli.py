"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 backend bootstrap failure,
4 empty or invalid dataset.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from . import alfa as alfa_mod
from . import harness
from .backends import MockServer, load_script
from .backends.templates import template_hashes
from .errors import (
    ConfigError,
    DuplicateId,
    EmptyRun,
    MissingImage,
    ParseError,
    SingleClassLabels,
    UnivrseError,
)
from .perturb import load_image
from .vcse import calibrate_threshold

EXIT_CONFIG = 2
EXIT_BOOTSTRAP = 3
EXIT_DATASET = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_dataset(path, task: str | None = None):
    try:
        records = harness.ingest_dataset(path)
    except (ParseError, DuplicateId, MissingImage, OSError) as exc:
        _fail(EXIT_DATASET, f"invalid dataset: {exc}")
    if task is not None:
        records = [r for r in records if r.task == task]
    if not records:
        _fail(EXIT_DATASET, f"dataset has no usable records{f' of task {task}' if task else ''}")
    return records


def _load_config(path) -> harness.RunConfig:
    try:
        return harness.load_config(path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))


def _build_backends(config: harness.RunConfig) -> harness.BackendSet:
    try:
        return harness.build_backends(config)
    except ConfigError as exc:
        _fail(EXIT_BOOTSTRAP, str(exc))


@click.group()
def main():
    """Hallucination detection for vision-language models."""


@main.command("ingest-check")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
def ingest_check(dataset):
    """Validate a JSONL dataset file."""
    records = _load_dataset(dataset)
    n_vqa = sum(1 for r in records if r.task == harness.TASK_VQA)
    click.echo(f"ok: {len(records)} records ({n_vqa} vqa, {len(records) - n_vqa} vrg)")


def _run_task(dataset, config_path, out, task):
    config = _load_config(config_path)
    records = _load_dataset(dataset, task=task)
    backends = _build_backends(config)
    if not config.dataset_name:
        config = dataclasses.replace(config, dataset_name=Path(dataset).stem)
    try:
        run_dir = harness.run(records, config, backends, out)
        harness.report(run_dir)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except UnivrseError as exc:
        _fail(1, str(exc))
    click.echo(f"run complete: {run_dir}")


@main.command("run-vqa")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def run_vqa(dataset, config_path, out):
    """Label and score the VQA records of a dataset."""
    _run_task(dataset, config_path, out, harness.TASK_VQA)


@main.command("run-vrg")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def run_vrg(dataset, config_path, out):
    """Label and score the report-generation records of a dataset."""
    _run_task(dataset, config_path, out, harness.TASK_VRG)


@main.command("label")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def label(dataset, config_path, out):
    """Produce atomic-fact alignment labels only (no uncertainty scoring)."""
    config = _load_config(config_path)
    records = _load_dataset(dataset)
    backends = _build_backends(config)
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as sink:
        for record in records:
            try:
                outcome = alfa_mod.label_sample(
                    load_image(record.image_path), record.question, record.reference,
                    backends.vlm, backends.llm,
                    run_seed=config.seed, record_key=record.id,
                    temperature=config.deploy_temperature,
                    max_tokens=config.max_tokens, top_logprobs=config.top_logprobs,
                )
            except UnivrseError as exc:
                sink.write(json.dumps({"id": record.id, "error": str(exc)}) + "\n")
                continue
            row = {
                "id": record.id,
                "response": outcome.response,
                "claims": [c.text for c in outcome.claims],
                "facts": [dataclasses.asdict(f) for f in outcome.facts],
                "judgments": [dataclasses.asdict(j) for j in outcome.judgments],
                "m": outcome.label.m,
                "h": outcome.label.h,
                "e": outcome.label.e,
                "alpha_m": outcome.label.alpha_m,
                "alpha_h": outcome.label.alpha_h,
                "alpha_e": outcome.label.alpha_e,
                "template_ids": template_hashes(),
                "backend_ids": backends.ids,
            }
            sink.write(json.dumps(row) + "\n")
    click.echo(f"labels written: {out_path}")


@main.command("calibrate")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--method", default="UniVRSE", show_default=True)
def calibrate(run_dir, method):
    """Calibrate the hallucination decision threshold on a finished run."""
    run_dir = Path(run_dir)
    try:
        records = harness._load_records(run_dir)
    except EmptyRun as exc:
        _fail(EXIT_DATASET, str(exc))
    lock = json.loads((run_dir / "config.lock.json").read_text(encoding="utf-8"))
    threshold = lock["config"]["binarize_threshold"]
    by_method = harness.scored_samples_by_method(records, threshold)
    samples = by_method.get(method)
    if not samples:
        _fail(EXIT_DATASET, f"no scores for method {method!r}")
    # calibrate on the uncertainty axis: higher means more hallucinated
    scores = [-s.confidence for s in samples]
    labels = [s.binary_halluc for s in samples]
    try:
        tau = calibrate_threshold(scores, labels)
    except SingleClassLabels as exc:
        _fail(EXIT_DATASET, str(exc))
    flagged = sum(1 for s in scores if s > tau)
    click.echo(f"method={method} tau={tau:.6f} flagged={flagged}/{len(scores)}")


@main.command("report")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
def report_cmd(run_dir):
    """Regenerate report.csv and summary.txt from stored records."""
    try:
        csv_path, summary_path = harness.report(run_dir)
    except EmptyRun as exc:
        _fail(EXIT_DATASET, str(exc))
    click.echo(summary_path.read_text(encoding="utf-8"))
    click.echo(f"report written: {csv_path}")


@main.command("mock-serve")
@click.argument("script", type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8099, show_default=True)
def mock_serve(script, host, port):
    """Serve a mock script file as a local OpenAI-compatible endpoint."""
    try:
        server = MockServer(load_script(script), host=host, port=port)
    except (OSError, json.JSONDecodeError) as exc:
        _fail(EXIT_BOOTSTRAP, f"cannot serve script: {exc}")
    click.echo(f"serving {script} at {server.url} (ctrl-c to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()


if __name__ == "__main__":
    main()
