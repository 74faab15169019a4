"""Raw-binary tensor files with a JSON manifest, plus result and report output.

Manifest (UTF-8 JSON)::

    {"version": 1,
     "tensors": [{"name": "conv1", "shape": [64, 3, 3, 3], "dtype": "f32",
                  "file": "conv1.f32", "byte_order": "little"}, ...]}

Tensor payloads are headerless little-endian float32, row-major.  Codes
are headerless little-endian int32 with a JSON params sidecar.  Every file
is written to a temp name in the target directory and renamed into place.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .pipeline import PipelineConfig, check_unique_names
from .tensors import InvalidInputError, LayerReport, QuantizedTensor, QuantParams, WeightTensor

MANIFEST_VERSION = 1
F32 = np.dtype("<f4")
I32 = np.dtype("<i4")
REPORT_COLUMNS = ("layer", "method", "alpha", "loss", "time_ms", "evals", "bits", "strategy")


class ManifestError(InvalidInputError):
    """Problem with a manifest or a tensor it references.

    ``code`` is one of: unreadable-manifest, invalid-manifest, missing-file,
    size-mismatch, non-finite, duplicate-name.
    """

    def __init__(self, code: str, message: str, tensor: str | None = None):
        super().__init__(f"{tensor}: {message}" if tensor else message)
        self.code = code
        self.tensor = tensor


def atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _file_stem(index: int, name: str) -> str:
    return f"{index:04d}_{re.sub(r'[^A-Za-z0-9._-]', '_', name)}"


def _read_manifest(manifest_path: Path) -> dict:
    try:
        doc = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError("unreadable-manifest", f"cannot read manifest {manifest_path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != MANIFEST_VERSION:
        raise ManifestError("invalid-manifest", f"{manifest_path}: expected version {MANIFEST_VERSION}")
    entries = doc.get("tensors")
    if not isinstance(entries, list) or not entries:
        raise ManifestError("invalid-manifest", f"{manifest_path}: 'tensors' must be a non-empty list")
    return doc


def _entry_fields(entry, expected_dtype: str) -> tuple[str, list, str]:
    if not isinstance(entry, dict):
        raise ManifestError("invalid-manifest", "tensor entry must be an object")
    name = entry.get("name")
    if not isinstance(name, str) or not name:
        raise ManifestError("invalid-manifest", "tensor entry without a name")
    shape = entry.get("shape")
    if not isinstance(shape, list) or not shape or not all(isinstance(d, int) and d > 0 for d in shape):
        raise ManifestError("invalid-manifest", f"bad shape {shape!r}", name)
    if entry.get("dtype") != expected_dtype or entry.get("byte_order") != "little":
        raise ManifestError("invalid-manifest", f"expected dtype {expected_dtype}, byte_order little", name)
    if not isinstance(entry.get("file"), str):
        raise ManifestError("invalid-manifest", "missing 'file'", name)
    return name, shape, entry["file"]


def _read_payload(path: Path, name: str, shape: list, dtype: np.dtype) -> np.ndarray:
    try:
        raw = path.read_bytes()
    except FileNotFoundError as exc:
        raise ManifestError("missing-file", f"file not found: {path}", name) from exc
    expected = dtype.itemsize * math.prod(shape)
    if len(raw) != expected:
        raise ManifestError("size-mismatch", f"{path} has {len(raw)} bytes, expected {expected}", name)
    return np.frombuffer(raw, dtype=dtype)


def load_model(manifest_path) -> list[WeightTensor]:
    """Tensors in manifest order, float32 payloads widened to float64."""
    manifest_path = Path(manifest_path)
    doc = _read_manifest(manifest_path)
    tensors, seen = [], set()
    for entry in doc["tensors"]:
        name, shape, file = _entry_fields(entry, "f32")
        if name in seen:
            raise ManifestError("duplicate-name", "duplicate tensor name", name)
        seen.add(name)
        values = _read_payload(manifest_path.parent / file, name, shape, F32).astype(np.float64)
        if not np.isfinite(values).all():
            raise ManifestError("non-finite", "payload contains NaN or Inf", name)
        tensors.append(WeightTensor(name, tuple(shape), values))
    return tensors


def save_model(out_dir, tensors: Sequence[WeightTensor], manifest_name: str = "manifest.json") -> Path:
    """Write tensors as float32 payloads plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    check_unique_names(tensors)
    entries = []
    for i, t in enumerate(tensors):
        file = f"{_file_stem(i, t.name)}.f32"
        atomic_write(out_dir / file, t.values.astype(F32).tobytes())
        entries.append({"name": t.name, "shape": list(t.shape), "dtype": "f32",
                        "file": file, "byte_order": "little"})
    path = out_dir / manifest_name
    atomic_write(path, _dump_json({"version": MANIFEST_VERSION, "tensors": entries}))
    return path


def params_to_dict(params: QuantParams) -> dict:
    return {
        "alpha": params.alpha,
        "scale": params.scale,
        "bits": params.bits.b,
        "strategy": params.strategy,
        "w_max": params.w_max,
        "loss": params.loss,
    }


def params_from_dict(doc: dict) -> QuantParams:
    return QuantParams(doc["alpha"], doc["scale"], doc["bits"], doc["strategy"], doc["w_max"], doc.get("loss", 0.0))


def save_quantized(out_dir, quantized: Sequence[QuantizedTensor], fake: Sequence[WeightTensor] | None = None) -> None:
    """Write int32 codes + params sidecars under ``quantized.json``.

    If ``fake`` is given the fake-quantized tensors are written in the input
    format under ``fake_manifest.json`` (loadable with load_model).
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, q in enumerate(quantized):
            stem = _file_stem(i, q.name)
            atomic_write(out_dir / f"{stem}.codes.i32", q.codes.astype(I32).tobytes())
            atomic_write(out_dir / f"{stem}.params.json", _dump_json(params_to_dict(q.params)))
            entries.append({"name": q.name, "shape": list(q.shape), "dtype": "i32",
                            "file": f"{stem}.codes.i32", "byte_order": "little",
                            "params": f"{stem}.params.json"})
        atomic_write(out_dir / "quantized.json", _dump_json({"version": MANIFEST_VERSION, "tensors": entries}))
        if fake is not None:
            save_model(out_dir, fake, manifest_name="fake_manifest.json")
    except OSError as exc:
        raise OSError(f"writing quantized output to {out_dir} failed: {exc}") from exc


def load_quantized(result_manifest) -> list[QuantizedTensor]:
    result_manifest = Path(result_manifest)
    doc = _read_manifest(result_manifest)
    out = []
    for entry in doc["tensors"]:
        name, shape, file = _entry_fields(entry, "i32")
        codes = _read_payload(result_manifest.parent / file, name, shape, I32)
        try:
            params = params_from_dict(json.loads((result_manifest.parent / entry["params"]).read_text("utf-8")))
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ManifestError("missing-file", f"params sidecar unreadable: {exc}", name) from exc
        out.append(QuantizedTensor(name, tuple(shape), codes.astype(np.int64), params))
    return out


def build_report(config: PipelineConfig, reports: Iterable[LayerReport]) -> dict:
    rows = [r.as_row() for r in reports]
    return {
        "tool": "rangequant",
        "version": __version__,
        "config": {
            "bits": config.bits_weights.b,
            "first_last_bits": config.first_last_bits.b,
            "strategy": config.strategy,
            "method": config.search.method,
            "epsilon": config.search.epsilon,
            "phi": config.search.phi,
            "alpha_min": config.search.alpha_min,
        },
        "layers": rows,
        "totals": {
            "loss_sum": math.fsum(r["loss"] for r in rows),
            "wall_time_ms": round(math.fsum(r["time_ms"] for r in rows), 2),
        },
    }


def report_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def rows_csv(rows: Iterable[dict], columns: Sequence[str] = REPORT_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    return buf.getvalue()


def write_report(path, doc: dict) -> None:
    atomic_write(Path(path), report_json(doc).encode("utf-8"))


def read_report(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError("unreadable-manifest", f"cannot read report {path}: {exc}") from exc
