"""Region-of-interest masks from a text prompt via a segmentation service.

The segmentation model runs out of process behind a small client protocol;
tests use a deterministic stub. Image-resolution masks are pooled to latent
resolution by exact area averaging and thresholded at one half.
"""

from __future__ import annotations

import json
import urllib.request
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np


class MaskingError(ValueError):
    """Raised on malformed masks or dimensions."""


class SegmentationUnavailable(RuntimeError):
    """Segmentation client could not be reached; the job may be retried."""


def rle_encode(mask: np.ndarray) -> dict:
    """Row-major run-length encoding; runs alternate 0s/1s starting with 0s."""
    flat = np.asarray(mask).astype(np.uint8).reshape(-1)
    counts = []
    current, run = 0, 0
    for value in flat:
        if value == current:
            run += 1
        else:
            counts.append(run)
            current, run = value, 1
    counts.append(run)
    return {"size": list(mask.shape), "counts": counts}


def rle_decode(obj: dict) -> np.ndarray:
    h, w = obj["size"]
    flat = np.zeros(h * w, dtype=np.uint8)
    pos, value = 0, 0
    for run in obj["counts"]:
        if value:
            flat[pos : pos + run] = 1
        pos += run
        value = 1 - value
    if pos != h * w:
        raise MaskingError(f"RLE covers {pos} pixels, mask has {h * w}")
    return flat.reshape(h, w)


@dataclass(frozen=True)
class SegmentInstance:
    mask: np.ndarray  # binary, image resolution
    score: float


class SegmentationClient(Protocol):
    def segment_instances(self, image: np.ndarray, prompt: str) -> list[SegmentInstance]:
        ...


class StubSegmentationClient:
    """Deterministic stand-in: fixed rectangles per prompt, for tests/demos."""

    def __init__(self, rectangles: Optional[dict] = None, available: bool = True):
        # prompt -> list of ((row0, row1, col0, col1), score), half-open bounds
        self.rectangles = rectangles or {}
        self.available = available

    def segment_instances(self, image: np.ndarray, prompt: str) -> list[SegmentInstance]:
        if not self.available:
            raise SegmentationUnavailable("stub segmentation client is offline")
        h, w = image.shape[:2]
        instances = []
        for (r0, r1, c0, c1), score in self.rectangles.get(prompt, []):
            mask = np.zeros((h, w), dtype=np.uint8)
            mask[r0:r1, c0:c1] = 1
            instances.append(SegmentInstance(mask=mask, score=score))
        return instances


class HttpSegmentationClient:
    """POSTs {image, prompt} to a segmentation service, expects RLE instances."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def segment_instances(self, image: np.ndarray, prompt: str) -> list[SegmentInstance]:
        payload = json.dumps({
            "image": np.asarray(image, dtype=np.float64).tolist(),
            "prompt": prompt,
        }).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = json.loads(response.read().decode("utf-8"))
        except OSError as exc:
            raise SegmentationUnavailable(f"segmentation service at {self.url}: {exc}") from exc
        return [
            SegmentInstance(mask=rle_decode(inst["mask"]), score=float(inst["score"]))
            for inst in body.get("instances", [])
        ]


def segment(image: np.ndarray, mask_prompt: str, client: SegmentationClient,
            policy: str = "union") -> tuple[np.ndarray, bool]:
    """Binary image-resolution mask for the prompt, plus an empty-match flag.

    `policy` is "union" (all matching instances, the default) or "top"
    (highest-scoring instance only).
    """
    if not mask_prompt.strip():
        raise MaskingError("mask prompt must be nonempty")
    if policy not in ("union", "top"):
        raise MaskingError(f"unknown instance policy {policy!r}")
    instances = client.segment_instances(image, mask_prompt)
    h, w = image.shape[:2]
    if not instances:
        return np.zeros((h, w), dtype=np.uint8), True
    if policy == "top":
        instances = [max(instances, key=lambda inst: inst.score)]
    mask = np.zeros((h, w), dtype=np.uint8)
    for inst in instances:
        if inst.mask.shape != (h, w):
            raise MaskingError(
                f"instance mask shape {inst.mask.shape} != image shape {(h, w)}"
            )
        mask |= inst.mask.astype(np.uint8)
    return mask, False


def _overlap_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Fractional coverage of each output cell by each input pixel."""
    cell = n_in / n_out
    ov = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i * cell, (i + 1) * cell
        for r in range(int(np.floor(lo)), min(n_in, int(np.ceil(hi)))):
            ov[i, r] = max(0.0, min(hi, r + 1) - max(lo, r))
    return ov / cell


def to_latent_resolution(mask: np.ndarray, latent_hw: tuple[int, int],
                         dilation: int = 0) -> np.ndarray:
    """Average-pool the mask to latent resolution, threshold at >= 0.5.

    Optional dilation (in latent cells) loosens the ROI after pooling.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise MaskingError(f"mask must be 2-d, got shape {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise MaskingError("mask entries must be 0 or 1")
    out_h, out_w = latent_hw
    if out_h < 1 or out_w < 1:
        raise MaskingError(f"latent dims must be positive, got {latent_hw}")
    in_h, in_w = mask.shape

    if in_h % out_h == 0 and in_w % out_w == 0:
        fh, fw = in_h // out_h, in_w // out_w
        pooled = mask.reshape(out_h, fh, out_w, fw).mean(axis=(1, 3))
    else:
        pooled = _overlap_matrix(out_h, in_h) @ mask @ _overlap_matrix(out_w, in_w).T

    latent_mask = (pooled >= 0.5).astype(np.uint8)
    for _ in range(dilation):
        grown = latent_mask.copy()
        grown[1:, :] |= latent_mask[:-1, :]
        grown[:-1, :] |= latent_mask[1:, :]
        grown[:, 1:] |= latent_mask[:, :-1]
        grown[:, :-1] |= latent_mask[:, 1:]
        latent_mask = grown
    return latent_mask


@dataclass(frozen=True)
class RoiMask:
    """A resolved region-of-interest mask at both resolutions."""

    image_mask: np.ndarray
    latent_mask: np.ndarray
    source: str  # "prompt" | "user"
    mask_prompt: Optional[str] = None
    empty_match: bool = False
