"""HTTP job service around the editing pipeline.

Jobs are queued FIFO and executed by worker threads (one per configured
backend instance). State transitions append to an on-disk log, so a restarted
service still lists every finished run; jobs caught mid-flight by a restart
are marked failed("restart") rather than silently dropped. Artifacts (images,
masks) are content-addressed files next to the log.
"""

from __future__ import annotations

import base64
import itertools
import json
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .backend import StyleAdapterRef
from .config import BackendConfig, SamplerConfig, build_backend
from .evaluation import compute_metrics, stub_clip_provider, stub_lpips_provider
from .imageio import (
    array_to_b64,
    b64_to_array,
    load_image,
    mask_to_png_bytes,
    png_bytes_to_mask,
)
from .masking import (
    SegmentationUnavailable,
    StubSegmentationClient,
    segment,
)
from .p2p import P2PConfig
from .pipeline import EditRequest, StageError, edit
from .schedule import ScheduleError, SchedulerSpec, make_schedule
from .trajectory import TrajectoryStore

API = "/api/v1"

RUNNING_STATES = ("queued", "inverting", "denoising")


class FieldErrors(ValueError):
    """Validation failure with per-field messages."""

    def __init__(self, errors: list[dict]):
        super().__init__("; ".join(f"{e['field']}: {e['message']}" for e in errors))
        self.errors = errors


def _fail(field_name: str, message: str) -> FieldErrors:
    return FieldErrors([{"field": field_name, "message": message}])


@dataclass
class ServiceSettings:
    data_dir: Path
    backend_config: BackendConfig = field(default_factory=BackendConfig)
    workers: int = 1
    step_delay: float = 0.0  # artificial per-iteration delay, for progress tests
    seg_client: object = None
    memory_budget: int = 1 << 30

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        if self.seg_client is None:
            self.seg_client = StubSegmentationClient({})


def parse_edit_request(payload: dict, data_dir: Path) -> EditRequest:
    """Decode the wire-format edit request; raises FieldErrors on violations."""
    if not isinstance(payload, dict):
        raise _fail("body", "request body must be a JSON object")

    image = None
    if payload.get("image_b64"):
        try:
            image = b64_to_array(payload["image_b64"])
        except Exception:
            raise _fail("image_b64", "not a decodable base64 PNG")
    elif payload.get("image_path"):
        path = Path(payload["image_path"])
        if not path.exists():
            raise _fail("image_path", f"no such file: {path}")
        image = load_image(path)
    else:
        raise _fail("image_b64", "one of image_b64 or image_path is required")

    errors = []
    source_prompt = payload.get("source_prompt") or ""
    target_prompt = payload.get("target_prompt") or ""
    if not source_prompt.strip():
        errors.append({"field": "source_prompt", "message": "required"})
    if not target_prompt.strip():
        errors.append({"field": "target_prompt", "message": "required"})
    if errors:
        raise FieldErrors(errors)

    def spec_from(key: str, fallback: SchedulerSpec) -> SchedulerSpec:
        if key not in payload:
            return fallback
        try:
            return SchedulerSpec.from_json(payload[key])
        except (ScheduleError, TypeError, ValueError) as exc:
            raise _fail(key, str(exc))

    attention_schedule = spec_from("attention_schedule", SchedulerSpec.default_attention())
    latent_schedule = spec_from("latent_schedule", SchedulerSpec.default_latent())

    try:
        p2p_cfg = P2PConfig.from_json(payload.get("p2p", {}))
    except Exception as exc:
        raise _fail("p2p", str(exc))
    try:
        sampler = SamplerConfig.from_json(payload.get("sampler", {}))
    except Exception as exc:
        raise _fail("sampler", str(exc))

    mask = None
    if payload.get("mask_b64"):
        try:
            mask = png_bytes_to_mask(base64.b64decode(payload["mask_b64"]))
        except Exception:
            raise _fail("mask_b64", "not a decodable base64 PNG mask")

    adapter = None
    if payload.get("adapter"):
        try:
            adapter = StyleAdapterRef(
                ref=payload["adapter"]["ref"],
                scale=float(payload["adapter"].get("scale", 1.0)),
            )
        except Exception as exc:
            raise _fail("adapter", str(exc))

    start_iteration = int(payload.get("start_iteration", 0))
    if not (0 <= start_iteration < sampler.steps):
        raise _fail("start_iteration", f"outside [0, {sampler.steps - 1}]")

    return EditRequest(
        image=image,
        source_prompt=source_prompt,
        target_prompt=target_prompt,
        mask_prompt=payload.get("mask_prompt"),
        mask=mask,
        attention_schedule=attention_schedule,
        latent_schedule=latent_schedule,
        p2p=p2p_cfg,
        sampler=sampler,
        adapter=adapter,
        start_iteration=start_iteration,
    )


def _request_summary(payload: dict) -> dict:
    """Request echo for job records, large payloads stripped."""
    summary = {k: v for k, v in payload.items() if k not in ("image_b64", "mask_b64")}
    summary["has_image"] = bool(payload.get("image_b64") or payload.get("image_path"))
    summary["has_mask"] = bool(payload.get("mask_b64"))
    return summary


class RunStore:
    """Append-only job log plus content-addressed artifacts."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.artifacts = self.data_dir / "artifacts"
        self.artifacts.mkdir(exist_ok=True)
        self.log_path = self.data_dir / "runs.jsonl"
        self._lock = threading.Lock()
        self._records: dict[str, dict] = {}
        self._order: list[str] = []
        self._replay()

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        for line in self.log_path.read_text().splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            job_id = event["job_id"]
            if job_id not in self._records:
                self._records[job_id] = {}
                self._order.append(job_id)
            self._records[job_id].update(event)

    def append(self, job_id: str, **fields) -> dict:
        event = {"job_id": job_id, "updated_at": time.time(), **fields}
        with self._lock:
            if job_id not in self._records:
                self._records[job_id] = {}
                self._order.append(job_id)
            # progress never decreases, whatever the caller reports
            old_iter = self._records[job_id].get("iteration", 0)
            if "iteration" in fields and fields["iteration"] < old_iter:
                event["iteration"] = old_iter
            self._records[job_id].update(event)
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
            return dict(self._records[job_id])

    def get(self, job_id: str) -> Optional[dict]:
        with self._lock:
            record = self._records.get(job_id)
            return dict(record) if record else None

    def list(self, limit: int, offset: int, state: Optional[str] = None) -> tuple[list, int]:
        with self._lock:
            ids = list(reversed(self._order))  # newest first
            records = [dict(self._records[i]) for i in ids]
        if state is not None:
            records = [r for r in records if r.get("state") == state]
        return records[offset : offset + limit], len(records)

    def running_jobs(self) -> list[str]:
        with self._lock:
            return [
                job_id for job_id in self._order
                if self._records[job_id].get("state") in RUNNING_STATES
            ]

    def save_artifact(self, name: str, data: bytes) -> str:
        path = self.artifacts / name
        path.write_bytes(data)
        return str(path.relative_to(self.data_dir))

    def artifact_path(self, ref: str) -> Path:
        return self.data_dir / ref


class JobManager:
    """FIFO queue feeding one worker thread per backend instance."""

    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self.store = RunStore(settings.data_dir)
        self.trajectories = TrajectoryStore(
            settings.data_dir / "trajectories", budget_bytes=settings.memory_budget
        )
        self.queue: queue.Queue = queue.Queue()
        self.inflight: dict[str, str] = {}  # content hash -> job id
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._counter = itertools.count()
        self.providers = {"lpips": stub_lpips_provider(), "clip": stub_clip_provider()}

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        for job_id in self.store.running_jobs():
            self.store.append(
                job_id, state="failed", stage="restart",
                message="service restarted while the job was in flight",
            )
        for n in range(self.settings.workers):
            thread = threading.Thread(
                target=self._worker, name=f"lams-worker-{n}", daemon=True
            )
            thread.start()
            self._threads.append(thread)

    def stop(self) -> None:
        self._stop.set()
        for _ in self._threads:
            self.queue.put(None)
        for thread in self._threads:
            thread.join(timeout=5)

    # -- submission -----------------------------------------------------------

    def submit(self, payload: dict) -> tuple[str, bool]:
        """Queue a validated request. Returns (job_id, duplicate_inflight)."""
        request = parse_edit_request(payload, self.settings.data_dir)
        content = request.content_hash()
        with self._lock:
            existing = self.inflight.get(content)
            if existing is not None:
                return existing, True
            job_id = f"{content[:12]}-{next(self._counter):04d}-{int(time.time())}"
            self.inflight[content] = job_id
        self.store.append(
            job_id,
            state="queued",
            created_at=time.time(),
            content_hash=content,
            request=_request_summary(payload),
            total=request.sampler.steps,
            iteration=0,
        )
        self.queue.put((job_id, request, content))
        return job_id, False

    # -- execution ------------------------------------------------------------

    def _worker(self) -> None:
        backend = build_backend(self.settings.backend_config)
        while not self._stop.is_set():
            item = self.queue.get()
            if item is None:
                return
            job_id, request, content = item
            try:
                self._run_job(job_id, request, backend)
            finally:
                with self._lock:
                    if self.inflight.get(content) == job_id:
                        del self.inflight[content]
                self.queue.task_done()

    def _progress(self, job_id: str):
        delay = self.settings.step_delay

        def cb(phase: str, step: int, total: int) -> None:
            if phase == "invert":
                self.store.append(job_id, state="inverting", iteration=0, total=total)
            else:
                self.store.append(job_id, state="denoising", iteration=step, total=total)
            if delay:
                time.sleep(delay)

        return cb

    def _run_job(self, job_id: str, request: EditRequest, backend) -> None:
        try:
            result = edit(
                request, backend,
                store=self.trajectories,
                seg_client=self.settings.seg_client,
                progress_cb=self._progress(job_id),
            )
            metrics = compute_metrics(
                request.image, result.edited_image,
                request.target_prompt, self.providers,
            )
            sidecar = {
                "content_hash": result.content_hash,
                "metrics": {k: metrics[k] for k in ("lpips", "clip")},
                "providers": metrics["providers"],
                "resolved": {
                    "attention_schedule": result.attention_weights.to_json(),
                    "latent_schedule": result.latent_weights.to_json(),
                    "sampler": request.sampler.to_json(),
                    "p2p": request.p2p.to_json(),
                    "start_iteration": request.start_iteration,
                },
            }
            from .imageio import array_to_png_bytes

            image_ref = self.store.save_artifact(
                f"{result.content_hash}.png", array_to_png_bytes(result.edited_image)
            )
            recon_ref = self.store.save_artifact(
                f"{result.content_hash}.recon.png",
                array_to_png_bytes(result.reconstruction_image),
            )
            if result.mask is not None:
                mask_ref = self.store.save_artifact(
                    f"{result.content_hash}.mask.png",
                    mask_to_png_bytes(result.mask.image_mask),
                )
                sidecar["mask_ref"] = mask_ref
            sidecar_ref = self.store.save_artifact(
                f"{result.content_hash}.json",
                json.dumps(sidecar, sort_keys=True, indent=2).encode("utf-8"),
            )
            self.store.append(
                job_id, state="done",
                result_ref=image_ref, reconstruction_ref=recon_ref,
                sidecar_ref=sidecar_ref,
                metrics=sidecar["metrics"],
            )
        except StageError as exc:
            self.store.append(job_id, state="failed", stage=exc.stage, message=str(exc))
        except Exception as exc:
            self.store.append(job_id, state="failed", stage="internal", message=str(exc))


def create_app(settings: ServiceSettings) -> FastAPI:
    from contextlib import asynccontextmanager

    manager = JobManager(settings)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        manager.start()
        yield
        manager.stop()

    app = FastAPI(title="lams-edit service", lifespan=lifespan)
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"], expose_headers=["X-Empty-Match"],
    )
    app.state.manager = manager

    # -- edits ---------------------------------------------------------------

    @app.post(API + "/edits")
    async def submit_edit(request: Request):
        content_type = request.headers.get("content-type", "")
        try:
            if content_type.startswith("multipart/form-data"):
                form = await request.form()
                payload = json.loads(form.get("request", "{}"))
                upload = form.get("image")
                if upload is not None and hasattr(upload, "read"):
                    payload["image_b64"] = base64.b64encode(
                        await upload.read()
                    ).decode("ascii")
            else:
                payload = await request.json()
        except Exception:
            return JSONResponse(
                {"errors": [{"field": "body", "message": "invalid JSON"}]}, status_code=400
            )
        try:
            job_id, duplicate = manager.submit(payload)
        except FieldErrors as exc:
            return JSONResponse({"errors": exc.errors}, status_code=400)
        if duplicate:
            return JSONResponse(
                {"job_id": job_id, "detail": "identical request already in flight"},
                status_code=409,
            )
        return JSONResponse({"job_id": job_id}, status_code=202)

    @app.get(API + "/edits/{job_id}")
    def job_status(job_id: str):
        record = manager.store.get(job_id)
        if record is None:
            return JSONResponse({"detail": "unknown job"}, status_code=404)
        return record

    @app.get(API + "/edits/{job_id}/result")
    def job_result(job_id: str, format: str = "json"):
        record = manager.store.get(job_id)
        if record is None:
            return JSONResponse({"detail": "unknown job"}, status_code=404)
        if record.get("state") == "failed":
            return JSONResponse(
                {"state": "failed", "stage": record.get("stage"),
                 "message": record.get("message")},
                status_code=409,
            )
        if record.get("state") != "done":
            return JSONResponse(
                {"state": record.get("state"), "detail": "job not finished"},
                status_code=409,
            )
        image_path = manager.store.artifact_path(record["result_ref"])
        sidecar_path = manager.store.artifact_path(record["sidecar_ref"])
        if not image_path.exists() or not sidecar_path.exists():
            return JSONResponse({"detail": "artifact deleted"}, status_code=410)
        if format == "png":
            return Response(content=image_path.read_bytes(), media_type="image/png")
        sidecar = json.loads(sidecar_path.read_text())
        body = {
            "job_id": job_id,
            "image_b64": base64.b64encode(image_path.read_bytes()).decode("ascii"),
            **sidecar,
        }
        recon_path = manager.store.artifact_path(record["reconstruction_ref"])
        if recon_path.exists():
            body["reconstruction_b64"] = base64.b64encode(
                recon_path.read_bytes()
            ).decode("ascii")
        return body

    # -- masks ----------------------------------------------------------------

    @app.post(API + "/masks")
    async def mask_preview(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return JSONResponse(
                {"errors": [{"field": "body", "message": "invalid JSON"}]}, status_code=400
            )
        prompt = payload.get("mask_prompt") or ""
        if not prompt.strip():
            return JSONResponse(
                {"errors": [{"field": "mask_prompt", "message": "required"}]},
                status_code=400,
            )
        try:
            if payload.get("image_b64"):
                image = b64_to_array(payload["image_b64"])
            elif payload.get("image_path"):
                image = load_image(payload["image_path"])
            else:
                return JSONResponse(
                    {"errors": [{"field": "image_b64", "message": "image required"}]},
                    status_code=400,
                )
        except Exception:
            return JSONResponse(
                {"errors": [{"field": "image_b64", "message": "malformed image"}]},
                status_code=400,
            )
        try:
            mask, empty = segment(image, prompt, settings.seg_client)
        except SegmentationUnavailable as exc:
            return JSONResponse({"detail": str(exc)}, status_code=502)
        return Response(
            content=mask_to_png_bytes(mask),
            media_type="image/png",
            headers={"X-Empty-Match": "true" if empty else "false"},
        )

    # -- scheduler preview ------------------------------------------------------

    @app.get(API + "/schedulers/preview")
    def scheduler_preview(start: float, end: float, until: int, type: str,
                          steps: int = 50):
        try:
            spec = SchedulerSpec(start=start, end=end, until=until, decay=type)
            schedule = make_schedule(spec, steps)
        except ScheduleError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=400)
        return schedule.to_json()

    # -- history ------------------------------------------------------------------

    @app.get(API + "/runs")
    def list_runs(limit: int = 50, offset: int = 0, state: Optional[str] = None):
        records, total = manager.store.list(limit=limit, offset=offset, state=state)
        return {"runs": records, "total": total}

    return app


def load_service_settings(config_path=None, env=None) -> ServiceSettings:
    """Service settings from the shared config file plus LAMS_* overrides.

    Besides the backend keys, the file may carry {data_dir, workers,
    step_delay, stub_segments}; stub_segments maps a mask prompt to fixed
    rectangle instances ([[r0, r1, c0, c1], score]) served by the stub
    segmentation client, for deployments without a segmentation service.
    """
    import os

    from .config import load_backend_config

    env = os.environ if env is None else env
    raw: dict = {}
    if config_path is not None:
        path = Path(config_path)
        if path.suffix in (".toml", ".tml"):
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            raw = tomllib.loads(path.read_text())
        else:
            raw = json.loads(path.read_text())
    backend_config = load_backend_config(config_path, env=env)
    data_dir = env.get("LAMS_DATA_DIR", raw.get("data_dir", "./lams-data"))
    workers = int(env.get("LAMS_WORKERS", raw.get("workers", 1)))

    seg_client = None
    if raw.get("stub_segments"):
        seg_client = StubSegmentationClient({
            prompt: [(tuple(rect), float(score)) for rect, score in instances]
            for prompt, instances in raw["stub_segments"].items()
        })
    elif raw.get("segmentation_url"):
        from .masking import HttpSegmentationClient

        seg_client = HttpSegmentationClient(raw["segmentation_url"])

    return ServiceSettings(
        data_dir=Path(data_dir),
        backend_config=backend_config,
        workers=workers,
        step_delay=float(raw.get("step_delay", 0.0)),
        seg_client=seg_client,
    )
