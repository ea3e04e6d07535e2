import html
import logging
import math
import os
from typing import Any, Dict, List

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import HTMLResponse, Response

import config
from artifacts import (CERTIFICATE_JSON, CHECKPOINT_DIR, CHECKPOINT_FIELDS, MANIFEST, TIMESERIES, checkpoint_name,
                       load_manifest, read_checkpoint, read_json, read_series_csv)
from errors import ArtifactError
from render import png_bytes, render_frame

logger = logging.getLogger(__name__)


def _finite(value: Any) -> Any:
    # JSON has no NaN or Infinity
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {key: _finite(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_finite(item) for item in value]
    return value


def create_app(root: str) -> FastAPI:
    """
    Read-only HTTP view of the run directories under `root`.

    Routes:
        GET /                               HTML list of runs
        GET /runs                           JSON list of runs
        GET /runs/{name}/manifest
        GET /runs/{name}/certificate        stored certificate, 404 until `check` has run
        GET /runs/{name}/timeseries         CSV rows as JSON
        GET /runs/{name}/frame.png?field=u&index=k
    """
    app = FastAPI(title="axisym runs", version=config.VERSION)
    root = os.path.abspath(root)

    def run_dir(name: str) -> str:
        path = os.path.join(root, name)
        if os.path.dirname(os.path.normpath(path)) != root or not os.path.isfile(os.path.join(path, MANIFEST)):
            raise HTTPException(status_code=404, detail=f"Unknown run '{name}'")
        return path

    def list_runs() -> List[Dict[str, Any]]:
        runs = []
        if not os.path.isdir(root):
            return runs
        for name in sorted(os.listdir(root)):
            path = os.path.join(root, name)
            if not os.path.isfile(os.path.join(path, MANIFEST)):
                continue
            try:
                manifest = load_manifest(path)
            except ArtifactError as exc:
                logger.warning("Skipping %s: %s", name, exc)
                continue
            runs.append({
                "name": name,
                "status": manifest.get("status"),
                "scenario": manifest.get("scenario"),
                "grid": manifest.get("grid"),
                "snapshots": manifest.get("snapshots"),
                "checked": os.path.isfile(os.path.join(path, CERTIFICATE_JSON)),
            })
        return runs

    @app.get("/", response_class=HTMLResponse)
    async def index():
        logger.info("GET /")
        items = "\n".join(
            f'    <li><a href="/runs/{html.escape(run["name"], quote=True)}/manifest">{html.escape(run["name"])}</a>'
            f' {html.escape(str(run["scenario"]))} ({html.escape(str(run["status"]))})</li>'
            for run in list_runs()
        )
        return f"<!DOCTYPE html>\n<html><body>\n  <h1>Runs</h1>\n  <ul>\n{items}\n  </ul>\n</body></html>\n"

    @app.get("/runs")
    async def runs():
        logger.info("GET /runs")
        return list_runs()

    @app.get("/runs/{name}/manifest")
    async def manifest(name: str):
        logger.info("GET /runs/%s/manifest", name)
        try:
            return load_manifest(run_dir(name))
        except ArtifactError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/runs/{name}/certificate")
    async def certificate(name: str):
        logger.info("GET /runs/%s/certificate", name)
        path = os.path.join(run_dir(name), CERTIFICATE_JSON)
        if not os.path.isfile(path):
            raise HTTPException(status_code=404, detail=f"Run '{name}' has not been checked")
        try:
            return _finite(read_json(path))
        except ArtifactError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc

    @app.get("/runs/{name}/timeseries")
    async def timeseries(name: str):
        logger.info("GET /runs/%s/timeseries", name)
        try:
            rows = read_series_csv(os.path.join(run_dir(name), TIMESERIES))
        except ArtifactError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return [_finite(row) for row in rows]

    @app.get("/runs/{name}/frame.png")
    async def frame(name: str, field: str = Query("u"), index: int = Query(0, ge=0)):
        logger.info("GET /runs/%s/frame.png field=%s index=%d", name, field, index)
        if field not in CHECKPOINT_FIELDS:
            raise HTTPException(status_code=400, detail=f"field must be one of {', '.join(CHECKPOINT_FIELDS)}")
        path = os.path.join(run_dir(name), CHECKPOINT_DIR, checkpoint_name(index))
        if not os.path.isfile(path):
            raise HTTPException(status_code=404, detail=f"Run '{name}' has no checkpoint {index}")
        try:
            header, arrays = read_checkpoint(path)
        except ArtifactError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        img = render_frame(arrays[field], f"{field}  t={header['t']:.4g}")
        return Response(content=png_bytes(img), media_type="image/png")

    return app


app = create_app(config.get_output_root())
