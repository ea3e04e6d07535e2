"""
Run directory persistence.

Layout of a run directory:
    manifest.json             config text and hash, grid, scheme, versions, status
    timeseries.csv            one row per snapshot, columns SERIES_COLUMNS
    checkpoints/ckpt_NNNNNN.bin
    certificate.json / certificate.txt     written by `check`

Checkpoints hold one text header line followed by little-endian float64
arrays in the order named by the header. Every file is written to a
temporary sibling and renamed into place.
"""

import csv
import io
import json
import logging
import math
import os
import platform
import tempfile
from typing import Any, Iterable, Optional, Sequence

import numpy as np

import config
from dynamics import SERIES_COLUMNS
from errors import ArtifactError, ConfigError
from fields import build_state
from grid import Grid, make_grid
from norms import Snapshot, TimeSeries

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TIMESERIES = "timeseries.csv"
CHECKPOINT_DIR = "checkpoints"
CERTIFICATE_JSON = "certificate.json"
CERTIFICATE_TEXT = "certificate.txt"

CHECKPOINT_MAGIC = "AXISYMCKPT"
CHECKPOINT_VERSION = 1
CHECKPOINT_FIELDS = ("u", "Gamma", "psi1")


# ========= ATOMIC WRITES =========

def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(temp_path, path)
    except OSError as exc:
        if os.path.exists(temp_path):
            os.unlink(temp_path)
        raise ArtifactError(f"Cannot write {path}: {exc}") from exc


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: str, data: Any) -> None:
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Not JSON serializable: {type(value).__name__}")


def read_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise ArtifactError(f"Missing artifact {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"Corrupt artifact {path}: {exc}") from exc


# ========= CSV TABLES =========

def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path: str, columns: Sequence[str], rows: Iterable[dict]) -> None:
    """CSV with a fixed column order; floats are written with full precision."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(row.get(column)) for column in columns])
    atomic_write_text(path, buffer.getvalue())
    logger.info("Wrote %s", path)


def write_series_csv(path: str, series: TimeSeries) -> None:
    rows = []
    for snap in series.snapshots:
        row = dict(snap.diagnostics)
        row["t"] = snap.t
        rows.append(row)
    write_table(path, SERIES_COLUMNS, rows)


def read_series_csv(path: str) -> list[dict[str, float]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            body = list(reader)
    except FileNotFoundError as exc:
        raise ArtifactError(f"Missing artifact {path}") from exc
    except OSError as exc:
        raise ArtifactError(f"Cannot read {path}: {exc}") from exc
    if header is None or tuple(header) != SERIES_COLUMNS:
        raise ArtifactError(f"{path} does not have the time-series header {','.join(SERIES_COLUMNS)}")
    rows = []
    for number, cells in enumerate(body, start=2):
        if len(cells) != len(SERIES_COLUMNS):
            raise ArtifactError(f"{path}:{number}: expected {len(SERIES_COLUMNS)} cells, got {len(cells)}")
        try:
            rows.append({name: float(cell) if cell else math.nan for name, cell in zip(SERIES_COLUMNS, cells)})
        except ValueError as exc:
            raise ArtifactError(f"{path}:{number}: {exc}") from exc
    return rows


# ========= CHECKPOINTS =========

def checkpoint_name(index: int) -> str:
    return f"ckpt_{index:06d}.bin"


def encode_checkpoint(grid: Grid, t: float, arrays: dict[str, np.ndarray], residual: float = 0.0) -> bytes:
    names = list(arrays)
    header = (f"{CHECKPOINT_MAGIC} version={CHECKPOINT_VERSION} Nr={grid.Nr} Nz={grid.Nz} "
              f"R={grid.R!r} a={grid.a!r} t={float(t)!r} residual={float(residual)!r} "
              f"fields={','.join(names)}\n")
    body = b"".join(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes(order="C") for name in names)
    return header.encode("ascii") + body


def decode_checkpoint(data: bytes, source: str = "<checkpoint>") -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    """
    Parse a checkpoint into (header, arrays).

    Raises:
        ArtifactError: bad magic, unsupported version, or a body of the wrong size
    """
    newline = data.find(b"\n")
    if newline < 0:
        raise ArtifactError(f"{source}: missing checkpoint header")
    words = data[:newline].decode("ascii", errors="replace").split()
    if not words or words[0] != CHECKPOINT_MAGIC:
        raise ArtifactError(f"{source}: not a checkpoint file")
    try:
        items = dict(word.split("=", 1) for word in words[1:])
        header = {
            "version": int(items["version"]),
            "Nr": int(items["Nr"]),
            "Nz": int(items["Nz"]),
            "R": float(items["R"]),
            "a": float(items["a"]),
            "t": float(items["t"]),
            "residual": float(items["residual"]),
            "fields": items["fields"].split(","),
        }
    except (KeyError, ValueError) as exc:
        raise ArtifactError(f"{source}: malformed checkpoint header ({exc})") from exc
    if header["version"] != CHECKPOINT_VERSION:
        raise ArtifactError(f"{source}: unsupported checkpoint version {header['version']}")
    shape = (header["Nr"], header["Nz"])
    size = shape[0] * shape[1] * 8
    body = data[newline + 1:]
    if len(body) != size * len(header["fields"]):
        raise ArtifactError(f"{source}: expected {size * len(header['fields'])} bytes of field data, "
                            f"found {len(body)}")
    arrays = {
        name: np.frombuffer(body, dtype="<f8", count=shape[0] * shape[1], offset=k * size).reshape(shape).copy()
        for k, name in enumerate(header["fields"])
    }
    return header, arrays


def write_checkpoint(path: str, snapshot: Snapshot, grid: Grid) -> None:
    state = snapshot.state
    arrays = {"u": state.u.values, "Gamma": state.Gamma.values, "psi1": state.psi1.values}
    if state.phi_shadow is not None:
        arrays["phi_shadow"] = state.phi_shadow.values
    atomic_write_bytes(path, encode_checkpoint(grid, state.t, arrays, state.elliptic_residual))


def read_checkpoint(path: str) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError as exc:
        raise ArtifactError(f"Missing checkpoint {path}") from exc
    except OSError as exc:
        raise ArtifactError(f"Cannot read {path}: {exc}") from exc
    return decode_checkpoint(data, path)


# ========= RUN DIRECTORIES =========

def build_manifest(run_config, series: Optional[TimeSeries], status: str,
                   error: Optional[Exception] = None) -> dict:
    """Manifest contents; `error` adds its category, message and the failing time and step."""
    sim = run_config.sim
    manifest = {
        "status": status,
        "config_text": run_config.canonical_text(),
        "config_hash": run_config.config_hash(),
        "grid": {"R": sim.R, "a": sim.a, "Nr": sim.Nr, "Nz": sim.Nz},
        "scenario": sim.case,
        "scheme": sim.scheme,
        "advection": sim.advection,
        "snapshots": 0 if series is None else len(series),
        "horizon": 0.0 if series is None else series.horizon,
        "versions": {
            "axisym": config.VERSION,
            "numpy": np.__version__,
            "scipy": _scipy_version(),
            "python": platform.python_version(),
        },
    }
    if error is not None:
        manifest["error"] = {
            "category": getattr(error, "category", "internal"),
            "message": str(error),
            "t": getattr(error, "t", None),
            "step": getattr(error, "step", None),
        }
    return manifest


def _scipy_version() -> str:
    import scipy

    return scipy.__version__


def save_run(directory: str, run_config, series: Optional[TimeSeries], status: str = "completed",
             error: Optional[Exception] = None) -> dict:
    """Write the CSV, the checkpoints and finally the manifest of a (possibly partial) run."""
    os.makedirs(directory, exist_ok=True)
    if series is not None and len(series):
        write_series_csv(os.path.join(directory, TIMESERIES), series)
        checkpoint_dir = os.path.join(directory, CHECKPOINT_DIR)
        for index, snap in enumerate(series.snapshots):
            write_checkpoint(os.path.join(checkpoint_dir, checkpoint_name(index)), snap, series.grid)
    manifest = build_manifest(run_config, series, status, error)
    write_json(os.path.join(directory, MANIFEST), manifest)
    logger.info("Saved %s run to %s", status, directory)
    return manifest


def load_manifest(directory: str) -> dict:
    if not os.path.isdir(directory):
        raise ArtifactError(f"Run directory {directory} does not exist")
    return read_json(os.path.join(directory, MANIFEST))


def load_run_config_from_manifest(manifest: dict):
    from run_config import parse_run_config

    try:
        return parse_run_config(manifest["config_text"])
    except KeyError as exc:
        raise ArtifactError("Manifest has no config_text") from exc
    except ConfigError as exc:
        raise ArtifactError(f"Manifest config is invalid: {exc}") from exc


def load_series(directory: str) -> tuple[TimeSeries, Any]:
    """
    Rebuild the recorded TimeSeries of a completed run, with the CSV rows as
    snapshot diagnostics and forcing re-evaluated from the scenario.

    Returns:
        (series, run_config)
    """
    import cases

    manifest = load_manifest(directory)
    if manifest.get("status") != "completed":
        raise ArtifactError(f"Run in {directory} did not complete (status '{manifest.get('status')}')")
    run_config = load_run_config_from_manifest(manifest)
    sim = run_config.sim
    grid = make_grid(sim.R, sim.a, sim.Nr, sim.Nz)
    rows = read_series_csv(os.path.join(directory, TIMESERIES))
    scenario = cases.builtin_scenario(sim.case, R=sim.R, a=sim.a, nu=sim.nu, amplitude=sim.amplitude,
                                      forcing_amplitude=sim.forcing_amplitude)

    series = TimeSeries(grid, sim.nu, metadata={
        "scenario": sim.case, "scheme": sim.scheme, "advection": sim.advection, "config": sim.to_dict(),
    })
    for index, row in enumerate(rows):
        path = os.path.join(directory, CHECKPOINT_DIR, checkpoint_name(index))
        header, arrays = read_checkpoint(path)
        if (header["Nr"], header["Nz"]) != grid.shape or header["R"] != grid.R or header["a"] != grid.a:
            raise ArtifactError(f"{path}: header grid does not match the manifest")
        missing = [name for name in CHECKPOINT_FIELDS if name not in arrays]
        if missing:
            raise ArtifactError(f"{path}: missing fields {missing}")
        if header["t"] != row["t"]:
            raise ArtifactError(f"{path}: time {header['t']} does not match CSV row time {row['t']}")
        state = build_state(header["t"], arrays["u"], arrays["Gamma"], arrays["psi1"], grid,
                            header["residual"], arrays.get("phi_shadow"))
        series.append(Snapshot(state, scenario.forcing(grid, header["t"]), dict(row)))
    if not len(series):
        raise ArtifactError(f"Run in {directory} recorded no snapshots")
    return series, run_config
