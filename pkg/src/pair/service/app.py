"""HTTP API for segmentation, scene inspection, and edit jobs.

Edits run through the same engine as the CLI, so a given EditSpec + seed +
checkpoint yields byte-identical PNG output from either entry point.
"""
from __future__ import annotations

import hashlib
import json
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from pydantic import BaseModel

from ..checkpoint import checkpoint_fingerprint
from ..data import CATEGORY_NAMES
from ..editops import EditSpec
from ..engine import ModelContext, execute_edit, scene_for
from ..errors import (
    InvalidEditSpec,
    PairError,
    PartitionViolation,
    UnknownBackendError,
)
from ..imageio import png_bytes, png_from_bytes
from ..sceneio import scene_from_json, scene_to_json
from .config import ServiceConfig
from .jobs import JobStore, WorkerPool


class SegmentRequest(BaseModel):
    backend: str = "oracle"
    caption: str | None = None


class ImageResponse(BaseModel):
    image_id: str


class JobCreated(BaseModel):
    job_id: str


class HealthResponse(BaseModel):
    status: str
    checkpoint_fingerprint: str


def create_app(config: ServiceConfig, ctx: ModelContext | None = None) -> FastAPI:
    data_dir = Path(config.data_dir)
    images_dir = data_dir / "images"
    scenes_dir = data_dir / "scenes"
    results_dir = data_dir / "results"
    for d in (images_dir, scenes_dir, results_dir):
        d.mkdir(parents=True, exist_ok=True)

    state: dict = {"ctx": ctx, "fingerprint": ""}
    store = JobStore(data_dir / "jobs.jsonl")

    def load_scene_doc(scene_id: str) -> dict:
        path = scenes_dir / f"{scene_id}.json"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown scene {scene_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    def resolve_scene(scene_id: str):
        doc = load_scene_doc(scene_id)
        image = png_from_bytes((images_dir / f"{doc['image_id']}.png").read_bytes())
        return scene_from_json(doc["scene"], image=image)

    def run_job(job_id: str) -> None:
        job = store.get(job_id)
        if job is None:
            return
        try:
            store.transition(job_id, "running")
            spec = EditSpec.from_json(job.spec)
            scene = resolve_scene(spec.scene)
            ref_scene = resolve_scene(spec.ref_scene) if spec.ref_scene else None
            image, _ = execute_edit(
                state["ctx"],
                spec,
                scene,
                ref_scene,
                steps=config.steps,
                eta=config.eta,
                combiner=config.combiner,
                progress_cb=lambda done, total: store.update_progress(job_id, done, total),
            )
            payload = png_bytes(image)
            name = hashlib.sha256(payload).hexdigest()[:24]
            out_path = results_dir / f"{name}.png"
            out_path.write_bytes(payload)
            store.transition(job_id, "done", result_path=str(out_path))
        except Exception as exc:  # failures land in the job record
            try:
                store.transition(job_id, "failed", error=f"{type(exc).__name__}: {exc}")
            except ValueError:
                pass

    pool = WorkerPool(run_job, depth=config.queue_depth, workers=config.workers)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if state["ctx"] is None:
            state["ctx"] = ModelContext.from_checkpoint(config.checkpoint)
        try:
            state["fingerprint"] = checkpoint_fingerprint(config.checkpoint)
        except OSError:
            state["fingerprint"] = "unavailable"
        if config.oracle_dataset:
            from ..data import load_manifest, load_sample

            manifest = load_manifest(config.oracle_dataset)
            for idx in range(manifest.count):
                load_sample(manifest, idx)
        pool.start()
        yield
        pool.stop()

    app = FastAPI(title="pair-editor", lifespan=lifespan)
    app.state.store = store
    app.state.config = config

    @app.post("/api/images", response_model=ImageResponse)
    async def upload_image(request: Request) -> ImageResponse:
        body = await request.body()
        try:
            png_from_bytes(body)
        except Exception as exc:
            raise HTTPException(status_code=422, detail=f"not a decodable image: {exc}")
        image_id = hashlib.sha256(body).hexdigest()[:16]
        (images_dir / f"{image_id}.png").write_bytes(body)
        return ImageResponse(image_id=image_id)

    @app.post("/api/images/{image_id}/segment")
    def segment_image(image_id: str, req: SegmentRequest) -> dict:
        path = images_dir / f"{image_id}.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        image = png_from_bytes(path.read_bytes())
        try:
            scene = scene_for(
                state["ctx"],
                image,
                backend=req.backend,
                caption=req.caption,
                category_names=CATEGORY_NAMES,
            )
        except UnknownBackendError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except PartitionViolation as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        doc = {"image_id": image_id, "scene": scene_to_json(scene)}
        (scenes_dir / f"{image_id}.json").write_text(
            json.dumps(doc, sort_keys=True), encoding="utf-8"
        )
        return {"scene_id": image_id, **doc["scene"]}

    @app.get("/api/scenes/{scene_id}")
    def get_scene(scene_id: str) -> dict:
        doc = load_scene_doc(scene_id)
        return {"scene_id": scene_id, **doc["scene"]}

    @app.post("/api/edits", response_model=JobCreated)
    def submit_edit(body: dict) -> JobCreated:
        try:
            spec = EditSpec.from_json(body)
            spec.validate()
        except (InvalidEditSpec, KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"invalid edit spec: {exc}")
        if not spec.scene:
            raise HTTPException(status_code=422, detail="edit spec must name a scene id")
        scene = resolve_scene(spec.scene)
        ref_scene = resolve_scene(spec.ref_scene) if spec.ref_scene else None
        try:
            from ..editops import apply_edit

            apply_edit(spec, scene, ref_scene)  # dry run: surface edit errors now
        except PartitionViolation as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except InvalidEditSpec as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except PairError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        job = store.create(spec.to_json())
        if not pool.submit(job.id):
            store.transition(job.id, "failed", error="queue full")
            raise HTTPException(status_code=503, detail="job queue is full")
        return JobCreated(job_id=job.id)

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        job = store.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        return job.model_dump()

    @app.get("/api/results/{job_id}")
    def get_result(job_id: str) -> Response:
        job = store.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        if job.state != "done" or not job.result_path:
            raise HTTPException(status_code=404, detail=f"job {job_id!r} has no result")
        return Response(content=Path(job.result_path).read_bytes(), media_type="image/png")

    @app.get("/api/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", checkpoint_fingerprint=state["fingerprint"])

    frontend_dist = Path(__file__).resolve().parents[3] / "frontend" / "dist"
    if frontend_dist.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dist, html=True), name="ui")

    return app
