"""Core mixing algebra: convex interpolation of attention maps and latents,
and binary-mask blending of latents.

All three operations are pure. Weight endpoints (0 and 1) return the
corresponding input bitwise, and mask blending selects elementwise, so the
degenerate reductions of the full pipeline hold exactly.
"""

from __future__ import annotations

import numpy as np

from .trajectory import AttentionSnapshot


class MixingError(ValueError):
    """Raised on weight/shape violations."""


def _check_weight(w: float) -> float:
    if not (0.0 <= w <= 1.0):
        raise MixingError(f"mixing weight must be in [0, 1], got {w}")
    return float(w)


def mix_attention(a_inv: AttentionSnapshot, a_edit: AttentionSnapshot,
                  w: float) -> AttentionSnapshot:
    """Elementwise w * inverted + (1 - w) * edit at every site."""
    w = _check_weight(w)
    if a_inv.registry != a_edit.registry:
        raise MixingError("snapshots cover different site registries")
    if w == 0.0:
        return a_edit.copy()
    if w == 1.0:
        return a_inv.copy()
    mixed = {
        desc.name: w * a_inv.maps[desc.name] + (1.0 - w) * a_edit.maps[desc.name]
        for desc in a_inv.registry
    }
    return AttentionSnapshot(a_inv.registry, mixed)


def mix_latent(z_inv: np.ndarray, z_edit: np.ndarray, w: float) -> np.ndarray:
    """w * inversion-side latent + (1 - w) * edit-side latent."""
    w = _check_weight(w)
    z_inv = np.asarray(z_inv)
    z_edit = np.asarray(z_edit)
    if z_inv.shape != z_edit.shape:
        raise MixingError(f"latent shapes differ: {z_inv.shape} vs {z_edit.shape}")
    if w == 0.0:
        return z_edit.copy()
    if w == 1.0:
        return z_inv.copy()
    return w * z_inv + (1.0 - w) * z_edit


def blend_mask(z_mixed: np.ndarray, z_inv: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Inside the binary mask keep z_mixed, outside fall back to z_inv.

    The mask is latent-resolution (H x W), entries in {0, 1}, broadcast over
    channels. Selection is elementwise, so entries pass through bit-exactly.
    """
    z_mixed = np.asarray(z_mixed)
    z_inv = np.asarray(z_inv)
    mask = np.asarray(mask)
    if z_mixed.shape != z_inv.shape:
        raise MixingError(f"latent shapes differ: {z_mixed.shape} vs {z_inv.shape}")
    if mask.shape != z_mixed.shape[-2:]:
        raise MixingError(
            f"mask shape {mask.shape} != latent spatial shape {z_mixed.shape[-2:]}"
        )
    if not np.isin(mask, (0, 1)).all():
        raise MixingError("mask entries must be 0 or 1")
    return np.where(mask.astype(bool), z_mixed, z_inv)
