"""Dataset ingestion, metric providers, and fidelity-editability sweeps.

Sweeps re-run the same manifest at several generation start offsets; the
inversion trajectory of each image is computed once and served from cache for
every subsequent point. Metric models (LPIPS, CLIP, FID) are external and sit
behind provider interfaces; deterministic stubs keep the suite model-free.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .backend import DiffusionBackend
from .imageio import load_image
from .pipeline import EditRequest, edit
from .trajectory import TrajectoryStore

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("label", "start_iteration", "lpips", "clip", "fid", "n")


class ManifestError(ValueError):
    """Raised for malformed manifest files."""


@dataclass(frozen=True)
class ManifestEntry:
    image: str
    source_prompt: str
    target_prompt: str
    mask_prompt: Optional[str] = None


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    entries: tuple


def load_manifest(path: Path | str) -> DatasetManifest:
    """Parse a JSONL manifest; one entry per line, paths checked at load."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest file not found: {path}")
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
        for key in ("image", "source_prompt", "target_prompt"):
            if not obj.get(key):
                raise ManifestError(f"{path}:{lineno}: missing field {key!r}")
        image_path = (path.parent / obj["image"]).resolve()
        if not image_path.exists():
            raise ManifestError(f"{path}:{lineno}: image not found: {image_path}")
        entries.append(ManifestEntry(
            image=str(image_path),
            source_prompt=obj["source_prompt"],
            target_prompt=obj["target_prompt"],
            mask_prompt=obj.get("mask_prompt"),
        ))
    if not entries:
        logger.warning("manifest %s is empty", path)
    return DatasetManifest(dataset_id=path.stem, entries=tuple(entries))


# ---------------------------------------------------------------------------
# Metric providers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricProvider:
    name: str
    version: str
    fn: Callable


def stub_lpips_provider() -> MetricProvider:
    """Perceptual-distance stand-in: mean absolute pixel difference."""

    def fn(original: np.ndarray, edited: np.ndarray) -> float:
        return float(np.abs(np.asarray(original) - np.asarray(edited)).mean())

    return MetricProvider(name="stub-lpips", version="1", fn=fn)


def stub_clip_provider() -> MetricProvider:
    """Text-alignment stand-in: seeded hash of (image bytes, prompt)."""

    def fn(image: np.ndarray, text: str) -> float:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(image, dtype=np.float64).tobytes())
        h.update(text.encode("utf-8"))
        return int.from_bytes(h.digest()[:6], "little") / float(1 << 48)

    return MetricProvider(name="stub-clip", version="1", fn=fn)


def compute_metrics(original: np.ndarray, edited: np.ndarray, target_prompt: str,
                    providers: dict) -> dict:
    """LPIPS and CLIP scalars with provider tags; failures mark the metric
    unavailable (None) instead of failing the run."""
    out = {"lpips": None, "clip": None, "providers": {}}
    lpips = providers.get("lpips")
    if lpips is not None:
        out["providers"]["lpips"] = f"{lpips.name}@{lpips.version}"
        try:
            out["lpips"] = float(lpips.fn(original, edited))
        except Exception as exc:
            logger.warning("lpips provider failed: %s", exc)
    clip = providers.get("clip")
    if clip is not None:
        out["providers"]["clip"] = f"{clip.name}@{clip.version}"
        try:
            out["clip"] = float(clip.fn(edited, target_prompt))
        except Exception as exc:
            logger.warning("clip provider failed: %s", exc)
    return out


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TradeoffPoint:
    label: str
    start_iteration: int
    lpips: Optional[float]
    clip: Optional[float]
    fid: Optional[float]
    n: int

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


FID_MIN_RUNS = 50


def run_sweep(manifest: DatasetManifest, template: EditRequest,
              start_iterations: list, backend: DiffusionBackend,
              providers: dict, store: Optional[TrajectoryStore] = None,
              rows_path: Optional[Path | str] = None,
              seg_client=None) -> tuple[list[TradeoffPoint], list[dict]]:
    """One TradeoffPoint per start offset, aggregated over the manifest.

    Per-image rows (including failures) are returned and, when `rows_path`
    is given, persisted as JSONL. Duplicate sweep values are dropped with a
    warning. FID is only attempted with a registered provider and at least
    FID_MIN_RUNS successful runs per point.
    """
    seen = []
    for k in start_iterations:
        if k in seen:
            logger.warning("duplicate sweep value %s dropped", k)
            continue
        if not (0 <= k < template.sampler.steps):
            raise ValueError(
                f"sweep value {k} outside [0, {template.sampler.steps - 1}]"
            )
        seen.append(k)

    images = {e.image: load_image(e.image) for e in manifest.entries}
    points: list[TradeoffPoint] = []
    rows: list[dict] = []
    for k in seen:
        lpips_vals, clip_vals = [], []
        edited_images = []
        for entry in manifest.entries:
            row = {
                "label": manifest.dataset_id,
                "image": entry.image,
                "start_iteration": k,
            }
            try:
                req = dataclasses.replace(
                    template,
                    image=images[entry.image],
                    source_prompt=entry.source_prompt,
                    target_prompt=entry.target_prompt,
                    mask_prompt=entry.mask_prompt,
                    start_iteration=k,
                )
                result = edit(req, backend, store=store, seg_client=seg_client)
                metrics = compute_metrics(
                    images[entry.image], result.edited_image,
                    entry.target_prompt, providers,
                )
                row.update(
                    lpips=metrics["lpips"], clip=metrics["clip"],
                    providers=metrics["providers"], error=None,
                )
                if metrics["lpips"] is not None:
                    lpips_vals.append(metrics["lpips"])
                if metrics["clip"] is not None:
                    clip_vals.append(metrics["clip"])
                edited_images.append(result.edited_image)
            except Exception as exc:
                logger.warning("edit failed for %s at k=%s: %s", entry.image, k, exc)
                row.update(lpips=None, clip=None, providers={}, error=str(exc))
            rows.append(row)

        fid = None
        fid_provider = providers.get("fid")
        if fid_provider is not None and len(edited_images) >= FID_MIN_RUNS:
            originals = [images[e.image] for e in manifest.entries]
            fid = float(fid_provider.fn(originals, edited_images))
        points.append(TradeoffPoint(
            label=manifest.dataset_id,
            start_iteration=k,
            lpips=float(np.mean(lpips_vals)) if lpips_vals else None,
            clip=float(np.mean(clip_vals)) if clip_vals else None,
            fid=fid,
            n=len(lpips_vals),
        ))

    if rows_path is not None:
        rows_path = Path(rows_path)
        rows_path.parent.mkdir(parents=True, exist_ok=True)
        with open(rows_path, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return points, rows


def emit_report(points: list, fmt: str, path: Path | str) -> Path:
    """Write the sweep points as CSV or JSON with a stable column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for p in points:
                writer.writerow([p.label, p.start_iteration, p.lpips, p.clip, p.fid, p.n])
    elif fmt == "json":
        path.write_text(json.dumps([p.to_json() for p in points], indent=2) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}; use csv or json")
    return path
