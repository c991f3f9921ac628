"""HTTP API over the pipeline: corpus CRUD, generation runs, dataset
viewing/export, providers, training jobs, and model comparison.

Long-running work (generation runs, training jobs) returns 202 with a
pollable id; progress is polled, not pushed. All request bodies are
validated before any side effect and all responses are JSON.
"""

from __future__ import annotations

import threading
import uuid
from typing import Any, Optional

from fastapi import Body, FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import explorer, promptkit, report
from .corpus import CorpusStore
from .datastore import SplitSpec, Workspace
from .errors import DatasetNotFound, NotFound, QgenError, UnknownMetric
from .llm_gateway import ProviderConfig, ProviderRegistry
from .metrics import MetricFilter, MetricPredicate, filter_sort
from .promptkit import ExampleStore, GenerationConfig
from .trainjobs import JobManager, TrainingParams

API_VERSION = "0.1.0"


def _parse_filter(filter_expr: Optional[str], sort_expr: Optional[str]) -> MetricFilter:
    """filter: comma-separated 'field.metric>0.8' clauses;
    sort: 'field.metric:asc|desc'."""
    predicates = []
    if filter_expr:
        for clause in filter_expr.split(","):
            clause = clause.strip()
            for comparator in (">=", "<=", ">", "<"):
                if comparator in clause:
                    left, _, right = clause.partition(comparator)
                    try:
                        threshold = float(right)
                    except ValueError:
                        raise UnknownMetric(f"bad threshold in {clause!r}")
                    field_name, _, metric = left.strip().partition(".")
                    predicates.append(
                        MetricPredicate(
                            metric=metric, field=field_name,
                            comparator=comparator, threshold=threshold,
                        )
                    )
                    break
            else:
                raise UnknownMetric(f"no comparator in filter clause {clause!r}")
    sort_metric = None
    sort_field = "combined"
    descending = True
    if sort_expr:
        key, _, direction = sort_expr.partition(":")
        sort_field, _, sort_metric = key.strip().partition(".")
        if direction.strip() == "asc":
            descending = False
    return MetricFilter(
        predicates=tuple(predicates),
        sort_metric=sort_metric,
        sort_field=sort_field or "combined",
        descending=descending,
    )


def create_app(
    workspace_path: str,
    *,
    train_cmd: Optional[str] = None,
    registry: Optional[ProviderRegistry] = None,
    transport=None,
    chat_sleep=None,
) -> FastAPI:
    workspace = Workspace(workspace_path)
    corpus_store = CorpusStore(workspace)
    example_store = ExampleStore(workspace)
    registry = registry or ProviderRegistry()
    job_manager = JobManager(workspace)
    runs: dict[str, dict[str, Any]] = {}
    runs_lock = threading.Lock()

    app = FastAPI(title="qgen", version=API_VERSION)
    app.state.workspace = workspace
    app.state.registry = registry
    app.state.job_manager = job_manager

    @app.exception_handler(QgenError)
    async def qgen_error_handler(_request: Request, exc: QgenError):
        return JSONResponse(status_code=exc.http_status, content=exc.to_payload())

    @app.exception_handler(ValueError)
    async def value_error_handler(_request: Request, exc: ValueError):
        return JSONResponse(
            status_code=422, content={"code": "invalid_request", "message": str(exc)}
        )

    @app.exception_handler(StarletteHTTPException)
    async def http_error_handler(_request: Request, exc: StarletteHTTPException):
        code = "not_found" if exc.status_code == 404 else "http_error"
        return JSONResponse(
            status_code=exc.status_code, content={"code": code, "message": str(exc.detail)}
        )

    # --- health ------------------------------------------------------------

    @app.get("/healthz")
    def healthz():
        try:
            workspace.list_ids("groups")
        except Exception:
            return JSONResponse(
                status_code=503,
                content={"code": "workspace_unavailable", "message": "workspace unreadable"},
            )
        return {"status": "ok", "workspace": str(workspace.root), "version": API_VERSION}

    # --- groups / documents -------------------------------------------------

    @app.post("/api/v1/groups", status_code=201)
    def create_group(body: dict = Body(...)):
        return corpus_store.create_group(str(body.get("name", ""))).to_dict()

    @app.get("/api/v1/groups")
    def list_groups():
        return [g.to_dict() for g in corpus_store.list_groups()]

    @app.get("/api/v1/groups/{group_id}")
    def get_group(group_id: str):
        return corpus_store.get_group(group_id).to_dict()

    @app.delete("/api/v1/groups/{group_id}")
    def delete_group(group_id: str):
        corpus_store.delete_group(group_id)
        return {"deleted": group_id}

    @app.post("/api/v1/groups/{group_id}/documents", status_code=201)
    def ingest_document(group_id: str, body: dict = Body(...)):
        doc = corpus_store.ingest_document(
            group_id,
            title=str(body.get("title", "untitled")),
            source_kind=str(body.get("source_kind", "markdown")),
            payload=str(body.get("content", "")).encode("utf-8"),
        )
        return doc.to_dict()

    @app.get("/api/v1/groups/{group_id}/documents")
    def list_documents(group_id: str):
        return [d.to_dict() for d in corpus_store.list_documents(group_id)]

    @app.get("/api/v1/groups/{group_id}/documents/{doc_id}")
    def get_document(group_id: str, doc_id: str):
        doc = corpus_store.get_document(doc_id)
        if doc.group_id != group_id:
            raise NotFound(f"document {doc_id} is not in group {group_id}")
        return doc.to_dict()

    @app.delete("/api/v1/groups/{group_id}/documents/{doc_id}")
    def delete_document(group_id: str, doc_id: str):
        corpus_store.delete_document(doc_id)
        return {"deleted": doc_id}

    @app.get("/api/v1/documents/{doc_id}/text")
    def document_text(doc_id: str):
        return {"doc_id": doc_id, "text": corpus_store.canonical_text(doc_id)}

    # --- example pairs ------------------------------------------------------

    @app.post("/api/v1/documents/{doc_id}/examples", status_code=201)
    def add_example(doc_id: str, body: dict = Body(...)):
        corpus_store.get_document(doc_id)
        return example_store.add_example(
            doc_id, str(body.get("question", "")), str(body.get("answer", ""))
        ).to_dict()

    @app.get("/api/v1/documents/{doc_id}/examples")
    def list_examples(doc_id: str):
        return [e.to_dict() for e in example_store.list_examples(doc_id)]

    @app.delete("/api/v1/documents/{doc_id}/examples/{example_id}")
    def delete_example(doc_id: str, example_id: str):
        example_store.delete_example(example_id)
        return {"deleted": example_id}

    # --- generation runs ----------------------------------------------------

    @app.post("/api/v1/generate", status_code=202)
    def start_generation(body: dict = Body(...)):
        group_id = str(body.get("group_id", ""))
        cfg = GenerationConfig.from_dict({**GenerationConfig(provider_id="").to_dict(),
                                          **{k: v for k, v in body.items() if k != "group_id"}})
        corpus_store.get_group(group_id)  # validate before accepting
        registry.get(cfg.provider_id)
        run_id = uuid.uuid4().hex[:12]
        with runs_lock:
            runs[run_id] = {"state": "running", "done": 0, "failed": 0, "total": 0,
                            "dataset_id": None, "error": None}

        def on_progress(done: int, failed: int, total: int):
            with runs_lock:
                runs[run_id].update(done=done, failed=failed, total=total)

        def work():
            try:
                dataset = promptkit.generate_for_group(
                    workspace, registry, group_id, cfg,
                    transport=transport, sleep=chat_sleep, on_progress=on_progress,
                )
                with runs_lock:
                    runs[run_id].update(state="completed", dataset_id=dataset.dataset_id)
            except QgenError as exc:
                with runs_lock:
                    runs[run_id].update(state="failed", error=exc.to_payload())

        threading.Thread(target=work, daemon=True).start()
        return {"run_id": run_id}

    @app.get("/api/v1/runs/{run_id}")
    def run_status(run_id: str):
        with runs_lock:
            run = runs.get(run_id)
            if run is None:
                raise NotFound(f"no run {run_id}")
            return dict(run)

    # --- datasets -----------------------------------------------------------

    @app.get("/api/v1/datasets")
    def list_datasets():
        out = []
        for record_id in workspace.list_ids("datasets"):
            record = workspace.load("datasets", record_id)
            out.append({
                "dataset_id": record["dataset_id"],
                "group_id": record["group_id"],
                "pairs": len(record["pairs"]),
                "failures": len(record["failures"]),
                "orphaned": record["orphaned"],
                "created_at": record["created_at"],
            })
        return out

    @app.get("/api/v1/datasets/{dataset_id}")
    def get_dataset(dataset_id: str):
        return workspace.load_dataset(dataset_id).to_dict()

    @app.get("/api/v1/datasets/{dataset_id}/pairs")
    def dataset_pairs(
        dataset_id: str,
        filter: Optional[str] = Query(default=None),
        sort: Optional[str] = Query(default=None),
    ):
        dataset = workspace.load_dataset(dataset_id)
        selected = filter_sort(dataset.pairs, _parse_filter(filter, sort))
        return [p.to_dict() for p in selected]

    @app.get("/api/v1/pairs/{pair_id}/attribution")
    def pair_attribution(pair_id: str):
        for record_id in workspace.list_ids("datasets"):
            dataset = workspace.load_dataset(record_id)
            for pair in dataset.pairs:
                if pair.pair_id == pair_id:
                    chunk = dataset.chunk_by_id(pair.chunk_id)
                    return {
                        "pair_id": pair_id,
                        "chunk_id": pair.chunk_id,
                        "chunk_text": chunk.text if chunk else None,
                        "attribution": pair.attribution.to_dict(),
                        "highlights": [h.to_dict() for h in pair.highlights],
                    }
        raise NotFound(f"no pair {pair_id}")

    @app.post("/api/v1/datasets/{dataset_id}/export")
    def export_dataset(dataset_id: str, body: dict = Body(...)):
        spec = SplitSpec.from_dict({**SplitSpec().to_dict(), **body})
        export_dir = workspace.export_training(dataset_id, spec)
        import json as _json

        manifest = _json.loads((export_dir / "manifest.json").read_text("utf-8"))
        manifest["export_dir"] = str(export_dir)
        return manifest

    # --- providers ----------------------------------------------------------

    @app.post("/api/v1/providers", status_code=201)
    def register_provider(body: dict = Body(...)):
        auth = None
        if body.get("auth_header_name") and body.get("auth_header_secret"):
            auth = (str(body["auth_header_name"]), str(body["auth_header_secret"]))
        cfg = ProviderConfig(
            provider_id=str(body.get("provider_id", "")),
            base_url=str(body.get("base_url", "")),
            model_name=str(body.get("model_name", "")),
            auth_header=auth,
            wire_dialect=str(body.get("wire_dialect", "chat-completions")),
            timeout_ms=int(body.get("timeout_ms", 30_000)),
            max_retries=int(body.get("max_retries", 2)),
        )
        registry.register(cfg)
        return cfg.public_dict()

    @app.get("/api/v1/providers")
    def list_providers():
        return [p.public_dict() for p in registry.list()]

    # --- training jobs ------------------------------------------------------

    @app.post("/api/v1/train", status_code=202)
    def start_training(body: dict = Body(...)):
        params = TrainingParams.from_dict(body.get("params", {}))
        template = str(body.get("command_template") or train_cmd or "")
        if not template:
            raise QgenError("no command template configured (set --train-cmd)")
        job = job_manager.create(str(body.get("export_dir", "")), params, template)
        job_manager.launch(job.job_id)
        return {"job_id": job.job_id}

    @app.get("/api/v1/jobs/{job_id}")
    def job_status(job_id: str):
        return job_manager.status(job_id).to_dict()

    @app.get("/api/v1/jobs")
    def list_jobs():
        return [j.to_dict() for j in job_manager.list_jobs()]

    @app.delete("/api/v1/jobs/{job_id}")
    def cancel_job(job_id: str):
        job_manager.cancel(job_id)
        return job_manager.status(job_id).to_dict()

    # --- comparison ---------------------------------------------------------

    @app.post("/api/v1/compare", status_code=201)
    def run_compare(body: dict = Body(...)):
        opts = explorer.CompareOptions(
            score=bool(body.get("score", False)),
            temperature=float(body.get("temperature", 0.0)),
        )
        record = explorer.compare(
            workspace, registry,
            doc_id=str(body.get("doc_id", "")),
            question=str(body.get("question", "")),
            model_a=str(body.get("model_a", "")),
            model_b=str(body.get("model_b", "")),
            opts=opts,
            transport=transport,
        )
        return record.to_dict()

    @app.get("/api/v1/comparisons")
    def list_comparisons():
        return [r.to_dict() for r in explorer.list_comparisons(workspace)]

    # --- reports ------------------------------------------------------------

    @app.post("/api/v1/datasets/{dataset_id}/report")
    def dataset_report(dataset_id: str, body: dict = Body(default={})):
        out_dir = body.get("out_dir") or str(workspace.root / "reports" / dataset_id)
        return report.write_report(workspace, dataset_id, out_dir)

    return app


def serve(workspace_path: str, listen: str = "127.0.0.1:8080",
          train_cmd: Optional[str] = None) -> None:
    import uvicorn

    host, _, port = listen.partition(":")
    app = create_app(workspace_path, train_cmd=train_cmd)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080))
