"""End-to-end editing pipeline.

Runs encode -> invert -> optional adapter load -> the dual-branch denoising
loop (reconstruction branch with the source prompt, edit branch with the
target prompt, attention/latent mixing against the inversion trajectory,
P2P-controlled injection, optional mask blend) -> decode.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import p2p as p2p_mod
from .backend import (
    DiffusionBackend,
    StyleAdapterRef,
    ddim_step,
    load_style_adapter,
    recordable_sites,
)
from .config import SamplerConfig
from .inversion import invert
from .masking import RoiMask, SegmentationClient, segment, to_latent_resolution
from .mixing import blend_mask, mix_attention, mix_latent
from .p2p import P2PConfig, build_token_mapping
from .schedule import SchedulerSpec, WeightSchedule, make_schedule
from .trajectory import TrajectoryStore


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for job reporting."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class EditRequest:
    """Everything a single edit needs, independent of transport."""

    image: np.ndarray
    source_prompt: str
    target_prompt: str
    attention_schedule: SchedulerSpec = field(default_factory=SchedulerSpec.default_attention)
    latent_schedule: SchedulerSpec = field(default_factory=SchedulerSpec.default_latent)
    p2p: P2PConfig = field(default_factory=P2PConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    mask_prompt: Optional[str] = None
    mask: Optional[np.ndarray] = None  # precomputed image-resolution binary mask
    adapter: Optional[StyleAdapterRef] = None
    start_iteration: int = 0

    def validate(self) -> None:
        if not self.source_prompt.strip():
            raise ValueError("source prompt must be nonempty")
        if not self.target_prompt.strip():
            raise ValueError("target prompt must be nonempty")
        if not (0 <= self.start_iteration < self.sampler.steps):
            raise ValueError(
                f"start_iteration {self.start_iteration} outside [0, {self.sampler.steps - 1}]"
            )
        if self.mask is not None and self.mask.shape != self.image.shape[:2]:
            raise ValueError(
                f"mask shape {self.mask.shape} != image shape {self.image.shape[:2]}"
            )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.image, dtype=np.float64).tobytes())
        if self.mask is not None:
            h.update(np.ascontiguousarray(self.mask, dtype=np.uint8).tobytes())
        payload = {
            "source_prompt": self.source_prompt,
            "target_prompt": self.target_prompt,
            "mask_prompt": self.mask_prompt,
            "attention_schedule": self.attention_schedule.to_json(),
            "latent_schedule": self.latent_schedule.to_json(),
            "p2p": self.p2p.to_json(),
            "sampler": self.sampler.to_json(),
            "adapter": [self.adapter.ref, self.adapter.scale] if self.adapter else None,
            "start_iteration": self.start_iteration,
        }
        h.update(json.dumps(payload, sort_keys=True).encode("utf-8"))
        return h.hexdigest()


@dataclass
class EditResult:
    edited_image: np.ndarray
    reconstruction_image: np.ndarray
    edited_latent: np.ndarray
    attention_weights: WeightSchedule
    latent_weights: WeightSchedule
    mask: Optional[RoiMask]
    iteration_seconds: list
    content_hash: str


def _resolve_mask(req: EditRequest, latent_hw: tuple[int, int],
                  seg_client: Optional[SegmentationClient]) -> Optional[RoiMask]:
    if req.mask is not None:
        image_mask = np.asarray(req.mask).astype(np.uint8)
        return RoiMask(
            image_mask=image_mask,
            latent_mask=to_latent_resolution(image_mask, latent_hw),
            source="user",
            mask_prompt=req.mask_prompt,
        )
    if req.mask_prompt:
        if seg_client is None:
            raise ValueError("mask prompt given but no segmentation client configured")
        image_mask, empty = segment(req.image, req.mask_prompt, seg_client)
        return RoiMask(
            image_mask=image_mask,
            latent_mask=to_latent_resolution(image_mask, latent_hw),
            source="prompt",
            mask_prompt=req.mask_prompt,
            empty_match=empty,
        )
    return None


def edit(req: EditRequest, backend: DiffusionBackend,
         store: Optional[TrajectoryStore] = None,
         seg_client: Optional[SegmentationClient] = None,
         progress_cb: Optional[Callable[[str, int, int], None]] = None) -> EditResult:
    """Run the full edit. progress_cb receives (phase, step, total)."""

    def stage(name: str):
        def wrap(exc: Exception) -> StageError:
            return StageError(name, str(exc))
        return wrap

    try:
        req.validate()
        T = req.sampler.steps
        wa = make_schedule(req.attention_schedule, T)
        wz = make_schedule(req.latent_schedule, T)
    except Exception as exc:
        raise stage("validate")(exc) from exc

    try:
        z0 = backend.encode(req.image)
    except Exception as exc:
        raise stage("encode")(exc) from exc

    if progress_cb is not None:
        progress_cb("invert", 0, T)
    try:
        inv_progress = None
        if progress_cb is not None:
            inv_progress = lambda t, total: progress_cb("invert", t, total)
        lat_inv, attn_inv = invert(
            z0, req.source_prompt, backend, req.sampler, store=store,
            progress_cb=inv_progress,
        )
    except Exception as exc:
        raise stage("invert")(exc) from exc

    try:
        loop_backend = (
            load_style_adapter(backend, req.adapter) if req.adapter else backend
        )
    except Exception as exc:
        raise stage("adapter")(exc) from exc

    try:
        roi = _resolve_mask(req, backend.latent_shape[-2:], seg_client)
    except Exception as exc:
        raise stage("mask")(exc) from exc

    try:
        emb_src = loop_backend.embed(req.source_prompt)
        emb_tgt = loop_backend.embed(req.target_prompt)
        mapping = build_token_mapping(
            req.source_prompt, req.target_prompt, emb_src, emb_tgt
        )
        cfg = dataclasses.replace(req.p2p, mapping=mapping)
        registry = recordable_sites(loop_backend.site_registry)
        guidance = req.sampler.guidance
        schedule = loop_backend.noise_schedule

        k = req.start_iteration
        z_rec = lat_inv.lookup(T - k)
        z_edit = z_rec.copy()
        timings = []
        for t in range(T - k, 0, -1):
            tick = time.perf_counter()
            i = T - t

            eps_rec, snap_rec = loop_backend.predict(z_rec, t, emb_src, guidance)
            z_rec_next = ddim_step(z_rec, eps_rec, t, schedule)

            _, snap_edit = loop_backend.predict(z_edit, t, emb_tgt, guidance)
            mixed = mix_attention(
                attn_inv.lookup(t), snap_edit.restrict(registry), wa[i]
            )
            injected = p2p_mod.apply(cfg, snap_rec.restrict(registry), mixed, i, T)

            eps_edit, _ = loop_backend.predict(
                z_edit, t, emb_tgt, guidance, injection=injected
            )
            z_edit_next = ddim_step(z_edit, eps_edit, t, schedule)

            z_next = mix_latent(lat_inv.lookup(t - 1), z_edit_next, wz[i])
            if roi is not None:
                z_next = blend_mask(z_next, lat_inv.lookup(t - 1), roi.latent_mask)

            z_rec, z_edit = z_rec_next, z_next
            timings.append(time.perf_counter() - tick)
            if progress_cb is not None:
                progress_cb("denoise", i + 1, T)
    except Exception as exc:
        raise stage("denoise")(exc) from exc

    try:
        edited = loop_backend.decode(z_edit)
        reconstruction = loop_backend.decode(z_rec)
    except Exception as exc:
        raise stage("decode")(exc) from exc

    return EditResult(
        edited_image=edited,
        reconstruction_image=reconstruction,
        edited_latent=z_edit,
        attention_weights=wa,
        latent_weights=wz,
        mask=roi,
        iteration_seconds=timings,
        content_hash=req.content_hash(),
    )


def reconstruct(image: np.ndarray, source_prompt: str, backend: DiffusionBackend,
                sampler: Optional[SamplerConfig] = None,
                store: Optional[TrajectoryStore] = None) -> EditResult:
    """Degenerate edit: target = source, all mixing off, no mask, no adapter."""
    off = SchedulerSpec(start=0.0, end=0.0, until=1, decay="stepped")
    req = EditRequest(
        image=image,
        source_prompt=source_prompt,
        target_prompt=source_prompt,
        attention_schedule=off,
        latent_schedule=off,
        p2p=P2PConfig(cross_replace_fraction=0.0, self_replace_fraction=0.0),
        sampler=sampler or SamplerConfig(),
    )
    return edit(req, backend, store=store)
