"""Full DDIM inversion over an input latent.

Walks z_0 -> z_T with the source prompt, capturing the latent at every step
and the attention snapshot of the predict call that produced it. Results are
cached by content key (input latent + prompt + seed + sampler + backend), so
repeated inversions of the same image are served from disk bit-identically.
"""

from __future__ import annotations

import hashlib
import logging
from typing import Callable, Optional

import numpy as np

from .backend import DiffusionBackend, ddim_invert_step, ddim_step, recordable_sites
from .config import SamplerConfig
from .trajectory import (
    AttentionTrajectory,
    LatentTrajectory,
    TrajectoryStore,
    content_key,
)

logger = logging.getLogger(__name__)


def inversion_cache_key(z0: np.ndarray, source_prompt: str, backend: DiffusionBackend,
                        sampler: SamplerConfig) -> str:
    config = {
        "sampler": {
            "steps": sampler.steps,
            "inversion_guidance": sampler.inversion_guidance,
        },
        "backend": backend.fingerprint(),
    }
    return content_key(
        np.ascontiguousarray(z0, dtype=np.float64).tobytes(),
        source_prompt, sampler.seed, config,
    )


def _prompt_fingerprint(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


def invert(z0: np.ndarray, source_prompt: str, backend: DiffusionBackend,
           sampler: SamplerConfig, store: Optional[TrajectoryStore] = None,
           progress_cb: Optional[Callable[[int, int], None]] = None,
           ) -> tuple[LatentTrajectory, AttentionTrajectory]:
    """Invert z0 under the source prompt; returns (latents 0..T, snapshots 1..T)."""
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.shape != backend.latent_shape:
        raise ValueError(
            f"latent shape {z0.shape} != backend shape {backend.latent_shape}"
        )

    key = None
    if store is not None:
        key = inversion_cache_key(z0, source_prompt, backend, sampler)
        if store.has_inversion(key):
            store.cache_hits += 1
            return store.load_inversion(key)
        store.cache_misses += 1

    T = sampler.steps
    registry = recordable_sites(backend.site_registry)
    latents = LatentTrajectory(
        direction="inversion",
        prompt_fingerprint=_prompt_fingerprint(source_prompt),
        seed=sampler.seed,
        T=T,
        store=store,
    )
    attention = AttentionTrajectory(registry=registry, store=store)

    embedding = backend.embed(source_prompt)
    latents.record(0, z0)
    z = z0
    for t in range(1, T + 1):
        eps, snapshot = backend.predict(
            z, t, embedding, guidance=sampler.inversion_guidance
        )
        z = ddim_invert_step(z, eps, t, backend.noise_schedule)
        latents.record(t, z)
        attention.record(t, snapshot.restrict(registry))
        if progress_cb is not None:
            progress_cb(t, T)

    if store is not None and key is not None:
        try:
            store.save_inversion(key, latents, attention)
        except OSError as exc:
            logger.warning("inversion cache write failed (%s); continuing uncached", exc)

    return latents, attention


def generate_from_inversion(latents: LatentTrajectory, source_prompt: str,
                            backend: DiffusionBackend, sampler: SamplerConfig,
                            ) -> np.ndarray:
    """Plain generation from z_T under the inversion settings; the round-trip
    counterpart of invert(), returning the reconstructed z_0."""
    T = latents.T
    embedding = backend.embed(source_prompt)
    z = latents.lookup(T)
    for t in range(T, 0, -1):
        eps, _ = backend.predict(z, t, embedding, guidance=sampler.inversion_guidance)
        z = ddim_step(z, eps, t, backend.noise_schedule)
    return z
