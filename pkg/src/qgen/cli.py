"""Headless command-line access to the pipeline.

Every subcommand calls the same module operations as the HTTP server and
prints JSON to stdout (or --output FILE), so scripts and tests can diff
outputs directly. Exit codes: 0 success, 1 validated failure, 2 usage.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path
from typing import Optional

import click

from . import explorer, promptkit, report, server
from .chunker import ChunkConfig, chunk_document
from .corpus import CorpusStore
from .datastore import SplitSpec, Workspace
from .errors import QgenError
from .llm_gateway import ProviderConfig, ProviderRegistry
from .metrics import METRIC_NAMES, filter_sort
from .promptkit import ExampleStore, GenerationConfig
from .server import _parse_filter
from .trainjobs import JobManager, TrainingParams


def _emit(data, output: Optional[str]) -> None:
    text = json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True)
    if output:
        Path(output).write_text(text + "\n", "utf-8")
    else:
        click.echo(text)


def _fail(exc: QgenError) -> None:
    sys.stderr.write(json.dumps(exc.to_payload()) + "\n")
    sys.exit(1)


def load_providers(path: Optional[str]) -> ProviderRegistry:
    """Provider registry from a JSON file the user owns (never the
    workspace): a list of provider config objects; the auth secret comes
    from auth_header_secret or the env var named by auth_header_secret_env.
    """
    registry = ProviderRegistry()
    if not path:
        return registry
    for entry in json.loads(Path(path).read_text("utf-8")):
        auth = None
        name = entry.get("auth_header_name")
        secret = entry.get("auth_header_secret")
        if not secret and entry.get("auth_header_secret_env"):
            secret = os.environ.get(entry["auth_header_secret_env"], "")
        if name and secret:
            auth = (name, secret)
        registry.register(
            ProviderConfig(
                provider_id=entry["provider_id"],
                base_url=entry["base_url"],
                model_name=entry["model_name"],
                auth_header=auth,
                wire_dialect=entry.get("wire_dialect", "chat-completions"),
                timeout_ms=entry.get("timeout_ms", 30_000),
                max_retries=entry.get("max_retries", 2),
            )
        )
    return registry


@click.group()
@click.option(
    "--workspace", envvar="QGEN_WORKSPACE", required=True,
    type=click.Path(file_okay=False), help="workspace root directory",
)
@click.option("--output", type=click.Path(dir_okay=False), default=None,
              help="write JSON output to FILE instead of stdout")
@click.pass_context
def main(ctx, workspace: str, output: Optional[str]):
    ctx.ensure_object(dict)
    ctx.obj["workspace_path"] = workspace
    ctx.obj["output"] = output


def _ws(ctx) -> Workspace:
    return Workspace(ctx.obj["workspace_path"])


@main.group()
def group():
    """Document group management."""


@group.command("create")
@click.argument("name")
@click.pass_context
def group_create(ctx, name: str):
    try:
        _emit(CorpusStore(_ws(ctx)).create_group(name).to_dict(), ctx.obj["output"])
    except QgenError as exc:
        _fail(exc)


@group.command("list")
@click.pass_context
def group_list(ctx):
    _emit([g.to_dict() for g in CorpusStore(_ws(ctx)).list_groups()], ctx.obj["output"])


@main.command()
@click.option("--group", "group_id", required=True)
@click.option("--file", "file_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--title", default=None)
@click.option("--kind", "source_kind", default=None,
              type=click.Choice(["structured-json", "markdown", "plain-text", "pre-converted"]))
@click.pass_context
def ingest(ctx, group_id: str, file_path: str, title: Optional[str], source_kind: Optional[str]):
    """Ingest a document file into a group."""
    path = Path(file_path)
    if source_kind is None:
        source_kind = {
            ".json": "structured-json",
            ".md": "markdown",
            ".markdown": "markdown",
        }.get(path.suffix.lower(), "plain-text")
    try:
        doc = CorpusStore(_ws(ctx)).ingest_document(
            group_id, title or path.stem, source_kind, path.read_bytes()
        )
        _emit(doc.to_dict(), ctx.obj["output"])
    except QgenError as exc:
        _fail(exc)


@main.command()
@click.option("--doc", "doc_id", required=True)
@click.option("--max-tokens", default=300, show_default=True)
@click.option("--overlap", default=30, show_default=True)
@click.option("--include-headings/--no-include-headings", default=True)
@click.pass_context
def chunk(ctx, doc_id: str, max_tokens: int, overlap: int, include_headings: bool):
    """Chunk a document and print the chunks (not persisted)."""
    try:
        doc = CorpusStore(_ws(ctx)).get_document(doc_id)
        config = ChunkConfig(max_tokens=max_tokens, overlap_tokens=overlap,
                             include_headings=include_headings)
        _emit([c.to_dict() for c in chunk_document(doc, config)], ctx.obj["output"])
    except QgenError as exc:
        _fail(exc)


@main.command("example")
@click.option("--doc", "doc_id", required=True)
@click.option("--question", required=True)
@click.option("--answer", required=True)
@click.pass_context
def example(ctx, doc_id: str, question: str, answer: str):
    """Add a few-shot example pair to a document."""
    try:
        ws = _ws(ctx)
        CorpusStore(ws).get_document(doc_id)
        _emit(ExampleStore(ws).add_example(doc_id, question, answer).to_dict(),
              ctx.obj["output"])
    except QgenError as exc:
        _fail(exc)


@main.command()
@click.option("--group", "group_id", required=True)
@click.option("--providers", "providers_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--provider", "provider_id", required=True)
@click.option("--questions", default=2, show_default=True)
@click.option("--mode", default="zero-shot", type=click.Choice(["zero-shot", "few-shot"]))
@click.option("--num-examples", default=0)
@click.option("--max-tokens", default=300)
@click.option("--overlap", default=30)
@click.option("--metrics", "metric_names", default=",".join(METRIC_NAMES),
              help="comma-separated metric names")
@click.option("--temperature", default=0.7)
@click.option("--seed", default=0)
@click.pass_context
def generate(ctx, group_id, providers_file, provider_id, questions, mode, num_examples,
             max_tokens, overlap, metric_names, temperature, seed):
    """Generate, score, and store a QA dataset for a document group."""
    try:
        cfg = GenerationConfig(
            provider_id=provider_id,
            chunk_config=ChunkConfig(max_tokens=max_tokens, overlap_tokens=overlap),
            questions_per_chunk=questions,
            prompt_mode=mode,
            num_examples=num_examples,
            temperature=temperature,
            metrics=tuple(m for m in metric_names.split(",") if m),
            seed=seed,
        )
        dataset = promptkit.generate_for_group(
            _ws(ctx), load_providers(providers_file), group_id, cfg
        )
        _emit({
            "dataset_id": dataset.dataset_id,
            "group_id": dataset.group_id,
            "pairs": len(dataset.pairs),
            "failures": len(dataset.failures),
        }, ctx.obj["output"])
    except (QgenError, ValueError) as exc:
        if isinstance(exc, QgenError):
            _fail(exc)
        _fail(QgenError(str(exc)))


@main.command()
@click.option("--dataset", "dataset_id", required=True)
@click.option("--filter", "filter_expr", default=None,
              help="e.g. combined.bleu2>0.8,answer.meteor>=0.5")
@click.option("--sort", "sort_expr", default=None, help="e.g. combined.meteor:desc")
@click.pass_context
def score(ctx, dataset_id: str, filter_expr: Optional[str], sort_expr: Optional[str]):
    """Print a dataset's pairs, filtered and sorted by metrics."""
    try:
        dataset = _ws(ctx).load_dataset(dataset_id)
        pairs = filter_sort(dataset.pairs, _parse_filter(filter_expr, sort_expr))
        _emit([p.to_dict() for p in pairs], ctx.obj["output"])
    except QgenError as exc:
        _fail(exc)


@main.command()
@click.option("--dataset", "dataset_id", required=True)
@click.option("--test", "test_fraction", default=0.1, show_default=True)
@click.option("--valid", "valid_fraction", default=0.1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--shuffle/--no-shuffle", default=True)
@click.option("--include-context", is_flag=True, default=False)
@click.pass_context
def export(ctx, dataset_id, test_fraction, valid_fraction, seed, shuffle, include_context):
    """Export train/valid/test JSONL splits for fine-tuning."""
    try:
        ws = _ws(ctx)
        spec = SplitSpec(test_fraction=test_fraction, valid_fraction=valid_fraction,
                         shuffle=shuffle, seed=seed, include_context=include_context)
        export_dir = ws.export_training(dataset_id, spec)
        manifest = json.loads((export_dir / "manifest.json").read_text("utf-8"))
        manifest["export_dir"] = str(export_dir)
        _emit(manifest, ctx.obj["output"])
    except (QgenError, ValueError) as exc:
        if isinstance(exc, QgenError):
            _fail(exc)
        _fail(QgenError(str(exc)))


@main.command()
@click.option("--export-dir", required=True, type=click.Path(file_okay=False))
@click.option("--model", "base_model", required=True)
@click.option("--lr", "learning_rate", default=1e-5, show_default=True)
@click.option("--iters", "iterations", default=1000, show_default=True)
@click.option("--lora-layers", default=8, show_default=True)
@click.option("--batch", "batch_size", default=4, show_default=True)
@click.option("--out", "adapter_output_dir", required=True, type=click.Path(file_okay=False))
@click.option("--cmd", "command_template", envvar="QGEN_TRAIN_CMD", default=None,
              help="command template with {data} {model} {lr} {iters} {lora_layers} {batch} {out}")
@click.option("--wait/--no-wait", default=True, help="wait for the job to finish")
@click.pass_context
def train(ctx, export_dir, base_model, learning_rate, iterations, lora_layers,
          batch_size, adapter_output_dir, command_template, wait):
    """Launch the external fine-tuning command for an exported dataset."""
    if not command_template:
        _fail(QgenError("no command template (--cmd or QGEN_TRAIN_CMD)"))
    try:
        manager = JobManager(_ws(ctx))
        params = TrainingParams(
            base_model=base_model, learning_rate=learning_rate, iterations=iterations,
            lora_layers=lora_layers, batch_size=batch_size,
            adapter_output_dir=adapter_output_dir,
        )
        job = manager.create(export_dir, params, command_template)
        manager.launch(job.job_id)
        final = manager.wait(job.job_id) if wait else manager.status(job.job_id)
        _emit(final.to_dict(), ctx.obj["output"])
    except (QgenError, ValueError) as exc:
        if isinstance(exc, QgenError):
            _fail(exc)
        _fail(QgenError(str(exc)))


@main.command()
@click.option("--doc", "doc_id", required=True)
@click.option("--question", required=True)
@click.option("--model-a", required=True)
@click.option("--model-b", required=True)
@click.option("--providers", "providers_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--score", "score_answers", is_flag=True, default=False)
@click.pass_context
def compare(ctx, doc_id, question, model_a, model_b, providers_file, score_answers):
    """Ask one question of two models and record the side-by-side result."""
    try:
        record = explorer.compare(
            _ws(ctx), load_providers(providers_file), doc_id, question,
            model_a, model_b, explorer.CompareOptions(score=score_answers),
        )
        _emit(record.to_dict(), ctx.obj["output"])
    except QgenError as exc:
        _fail(exc)


@main.command("report")
@click.option("--dataset", "dataset_id", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def report_cmd(ctx, dataset_id: str, out_dir: str):
    """Write a CSV of pair scores plus metric histogram figures."""
    try:
        _emit(report.write_report(_ws(ctx), dataset_id, out_dir), ctx.obj["output"])
    except QgenError as exc:
        _fail(exc)


@main.command()
@click.option("--listen", envvar="QGEN_LISTEN", default="127.0.0.1:8080", show_default=True)
@click.option("--train-cmd", envvar="QGEN_TRAIN_CMD", default=None)
@click.pass_context
def serve(ctx, listen: str, train_cmd: Optional[str]):
    """Run the HTTP API server."""
    server.serve(ctx.obj["workspace_path"], listen=listen, train_cmd=train_cmd)


if __name__ == "__main__":
    main()
