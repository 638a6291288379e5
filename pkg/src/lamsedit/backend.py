"""Diffusion backend contract and the deterministic toy backend used in tests.

The backend owns the noise schedule, the latent codec, prompt embedding, and
classifier-free-guided noise prediction with attention recording/injection.
DDIM stepping in both directions is pure algebra over the noise schedule and
lives here as free functions.

ToyAffineBackend is an affine stand-in for a latent-diffusion U-Net:

  mode A:  eps(z, t, tau) = b(tau)                   (z-independent)
  mode B:  eps(z, t, tau) = M @ z + b(tau),  ||M||_2 <= 0.1

Both modes emit synthetic attention maps (softmax over a seeded bilinear form
of the latent and the prompt embedding) so the recording, mixing, and
injection paths run for real. Injecting a map at a site perturbs eps by a
fixed linear functional of (injected - computed); injecting the map the
backend just computed is therefore a no-op.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .trajectory import AttentionSnapshot, SiteDescriptor

MAX_TOKENS = 8
EMBED_DIM = 16
INJECTION_GAIN = 0.05


class BackendError(ValueError):
    """Raised on shape/site/config violations at the backend boundary."""


# ---------------------------------------------------------------------------
# Noise schedule and DDIM algebra
# ---------------------------------------------------------------------------


class NoiseSchedule:
    """alpha_bar_t for t = 0..T; alpha_bar_0 = 1, strictly decreasing."""

    def __init__(self, alpha_bar: np.ndarray):
        alpha_bar = np.asarray(alpha_bar, dtype=np.float64)
        if alpha_bar.ndim != 1 or len(alpha_bar) < 2:
            raise BackendError("alpha_bar must be a 1-d sequence of length T+1")
        if alpha_bar[0] != 1.0:
            raise BackendError("alpha_bar[0] must be exactly 1")
        if not (np.diff(alpha_bar) < 0).all():
            raise BackendError("alpha_bar must be strictly decreasing")
        if alpha_bar[-1] <= 0.0 or (alpha_bar > 1.0).any():
            raise BackendError("alpha_bar entries must lie in (0, 1]")
        self.alpha_bar = alpha_bar
        self.T = len(alpha_bar) - 1

    @classmethod
    def linear_beta(cls, T: int, beta_start: float = 1e-4,
                    beta_end: float = 0.02) -> "NoiseSchedule":
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        return cls(alpha_bar)


def _check_step(t: int, schedule: NoiseSchedule) -> None:
    if not (1 <= t <= schedule.T):
        raise BackendError(f"step t={t} outside [1, {schedule.T}]")


def ddim_step(z_t: np.ndarray, eps: np.ndarray, t: int,
              schedule: NoiseSchedule) -> np.ndarray:
    """One deterministic denoising step t -> t-1 (eta = 0)."""
    _check_step(t, schedule)
    a_t = schedule.alpha_bar[t]
    a_prev = schedule.alpha_bar[t - 1]
    x0 = (z_t - np.sqrt(1.0 - a_t) * eps) / np.sqrt(a_t)
    return np.sqrt(a_prev) * x0 + np.sqrt(1.0 - a_prev) * eps


def ddim_invert_step(z_prev: np.ndarray, eps: np.ndarray, t: int,
                     schedule: NoiseSchedule) -> np.ndarray:
    """Exact algebraic inverse of ddim_step for the same eps: t-1 -> t."""
    _check_step(t, schedule)
    a_t = schedule.alpha_bar[t]
    a_prev = schedule.alpha_bar[t - 1]
    x0 = (z_prev - np.sqrt(1.0 - a_prev) * eps) / np.sqrt(a_prev)
    return np.sqrt(a_t) * x0 + np.sqrt(1.0 - a_t) * eps


# ---------------------------------------------------------------------------
# Prompt embedding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PromptEmbedding:
    """Token embeddings plus the token-to-word alignment of the source text."""

    text: str
    tokens: np.ndarray  # (n_tokens, embed_dim)
    alignment: tuple    # token index -> source word index, None for padding
    words: tuple
    is_unconditional: bool

    @property
    def n_words(self) -> int:
        return len(self.words)


def _stable_hash(text: str) -> int:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# ---------------------------------------------------------------------------
# Style adapters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StyleAdapterRef:
    """Reference to an adapter (path or registry id) plus merge scale."""

    ref: str
    scale: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.scale <= 1.0):
            raise BackendError(f"merge scale must be in [0, 1], got {self.scale}")


_ADAPTER_REGISTRY: dict[str, dict[str, np.ndarray]] = {}


def register_style_adapter(name: str, weights: dict[str, np.ndarray]) -> None:
    """Register an in-memory adapter under a registry id."""
    _ADAPTER_REGISTRY[name] = {k: np.asarray(v) for k, v in weights.items()}


def _resolve_adapter(ref: str) -> dict[str, np.ndarray]:
    path = Path(ref)
    if path.exists():
        with np.load(path) as data:
            return {k: data[k] for k in data.files}
    if ref in _ADAPTER_REGISTRY:
        return dict(_ADAPTER_REGISTRY[ref])
    raise BackendError(f"style adapter {ref!r} is neither a file nor a registered id")


# ---------------------------------------------------------------------------
# Backend contract
# ---------------------------------------------------------------------------


class DiffusionBackend:
    """Model-facing contract.

    Implementations must be deterministic: predict() depends only on
    (z, t, embedding, guidance, injection) and the backend's own weights/seed.
    A real latent-diffusion checkpoint plugs in behind this interface; the
    test suite runs entirely on ToyAffineBackend.
    """

    noise_schedule: NoiseSchedule
    latent_shape: tuple[int, int, int]
    site_registry: tuple[SiteDescriptor, ...]

    def encode(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decode(self, latent: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def embed(self, prompt: str) -> PromptEmbedding:
        raise NotImplementedError

    def predict(self, z: np.ndarray, t: int, cond: PromptEmbedding,
                guidance: float = 1.0,
                recorder: Optional[Callable[[AttentionSnapshot], None]] = None,
                injection: Optional[AttentionSnapshot | dict[str, np.ndarray]] = None,
                ) -> tuple[np.ndarray, AttentionSnapshot]:
        raise NotImplementedError

    def with_style_adapter(self, ref: StyleAdapterRef) -> "DiffusionBackend":
        raise NotImplementedError


def load_style_adapter(backend: DiffusionBackend, ref: StyleAdapterRef) -> DiffusionBackend:
    """Merge a style adapter into the denoiser weights (replace semantics).

    Returns an adapted backend; the codec, noise schedule, and site registry
    are untouched. Loading the same ref twice is idempotent.
    """
    return backend.with_style_adapter(ref)


def recordable_sites(registry: tuple[SiteDescriptor, ...],
                     max_tokens_q: int = 32 * 32) -> tuple[SiteDescriptor, ...]:
    """Sites cheap enough to record; defaults to query resolution <= 32x32."""
    return tuple(d for d in registry if d.tokens_q <= max_tokens_q)


# ---------------------------------------------------------------------------
# Toy backend
# ---------------------------------------------------------------------------


class ToyAffineBackend(DiffusionBackend):
    """Deterministic affine denoiser over identity-codec grayscale latents."""

    def __init__(self, mode: str = "A", seed: int = 0, height: int = 8,
                 width: int = 8, steps: int = 50):
        if mode not in ("A", "B"):
            raise BackendError(f"toy mode must be A or B, got {mode!r}")
        self.mode = mode
        self.seed = int(seed)
        self.noise_schedule = NoiseSchedule.linear_beta(steps)
        self.latent_shape = (1, height, width)
        self.predict_calls = 0

        n = height * width
        self._n = n
        rng = np.random.default_rng([0x1A5, self.seed])
        # Bias head: pooled token embedding -> latent-shaped eps component.
        self._w_bias = rng.standard_normal((n, EMBED_DIM)) / np.sqrt(EMBED_DIM)
        # Mode-B linear term, rescaled to spectral norm 0.1.
        m = rng.standard_normal((n, n))
        self._m_linear = 0.1 * m / np.linalg.svd(m, compute_uv=False)[0]

        self.site_registry = (
            SiteDescriptor(name=f"self@{height}x{width}", kind="self",
                           heads=2, tokens_q=n, tokens_k=n, d_k=8),
            SiteDescriptor(name=f"cross@{height}x{width}", kind="cross",
                           heads=2, tokens_q=n, tokens_k=MAX_TOKENS, d_k=8),
        )
        self._site_logits = {}
        self._site_readout = {}
        self._cross_proj = {}
        for desc in self.site_registry:
            self._site_logits[desc.name] = rng.standard_normal(desc.map_shape)
            size = desc.heads * desc.tokens_q * desc.tokens_k
            self._site_readout[desc.name] = rng.standard_normal((n, size)) / np.sqrt(size)
            if desc.kind == "cross":
                self._cross_proj[desc.name] = rng.standard_normal(EMBED_DIM)
        # Replace semantics: holds scale * delta for the active adapter only.
        self._style_bias = np.zeros(self.latent_shape)

    # -- codec (identity) ---------------------------------------------------

    def encode(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        _, h, w = self.latent_shape
        if image.shape != (h, w):
            raise BackendError(
                f"toy backend expects a {h}x{w} grayscale image, got {image.shape}"
            )
        return image[np.newaxis].copy()

    def decode(self, latent: np.ndarray) -> np.ndarray:
        latent = np.asarray(latent)
        if latent.shape != self.latent_shape:
            raise BackendError(
                f"latent shape {latent.shape} != backend shape {self.latent_shape}"
            )
        return latent[0].copy()

    # -- prompts --------------------------------------------------------------

    def embed(self, prompt: str) -> PromptEmbedding:
        words = tuple(prompt.split())
        if len(words) > MAX_TOKENS:
            raise BackendError(
                f"prompt has {len(words)} words; toy tokenizer caps at {MAX_TOKENS}"
            )
        tokens = np.zeros((MAX_TOKENS, EMBED_DIM))
        alignment = []
        for idx, word in enumerate(words):
            word_rng = np.random.default_rng([0x70C, self.seed, _stable_hash(word)])
            tokens[idx] = word_rng.standard_normal(EMBED_DIM)
            alignment.append(idx)
        alignment.extend([None] * (MAX_TOKENS - len(words)))
        return PromptEmbedding(
            text=prompt,
            tokens=tokens,
            alignment=tuple(alignment),
            words=words,
            is_unconditional=(prompt.strip() == ""),
        )

    # -- denoiser -------------------------------------------------------------

    def _pooled(self, emb: PromptEmbedding) -> np.ndarray:
        if emb.n_words == 0:
            return np.zeros(EMBED_DIM)
        return emb.tokens[: emb.n_words].mean(axis=0)

    def _bias(self, emb: PromptEmbedding) -> np.ndarray:
        b = (self._w_bias @ self._pooled(emb)).reshape(self.latent_shape)
        return b + self._style_bias

    def _synthetic_maps(self, z: np.ndarray, emb: PromptEmbedding) -> dict[str, np.ndarray]:
        zf = z.reshape(-1)
        maps = {}
        for desc in self.site_registry:
            if desc.kind == "self":
                coupling = np.outer(zf, zf)
            else:
                token_feat = emb.tokens @ self._cross_proj[desc.name]
                coupling = np.outer(zf, token_feat)
            logits = (self._site_logits[desc.name] + coupling[np.newaxis]) / np.sqrt(desc.d_k)
            logits = logits - logits.max(axis=-1, keepdims=True)
            expd = np.exp(logits)
            maps[desc.name] = expd / expd.sum(axis=-1, keepdims=True)
        return maps

    def _single_pass(self, z: np.ndarray, emb: PromptEmbedding,
                     injection: Optional[dict[str, np.ndarray]]) -> tuple[np.ndarray, dict]:
        maps = self._synthetic_maps(z, emb)
        eps = self._bias(emb)
        if self.mode == "B":
            eps = eps + (self._m_linear @ z.reshape(-1)).reshape(self.latent_shape)
        if injection:
            known = {d.name: d for d in self.site_registry}
            for name, injected in injection.items():
                if name not in known:
                    raise BackendError(f"unknown injection site {name!r}")
                injected = np.asarray(injected)
                if injected.shape != known[name].map_shape:
                    raise BackendError(
                        f"injection at {name!r}: shape {injected.shape} "
                        f"!= {known[name].map_shape}"
                    )
                delta = (injected - maps[name]).reshape(-1)
                if delta.any():
                    eps = eps + INJECTION_GAIN * (
                        self._site_readout[name] @ delta
                    ).reshape(self.latent_shape)
                maps[name] = injected.copy()
        return eps, maps

    def predict(self, z, t, cond, guidance=1.0, recorder=None, injection=None):
        z = np.asarray(z, dtype=np.float64)
        if z.shape != self.latent_shape:
            raise BackendError(
                f"latent shape {z.shape} != backend shape {self.latent_shape}"
            )
        if not (1 <= t <= self.noise_schedule.T):
            raise BackendError(f"step t={t} outside [1, {self.noise_schedule.T}]")
        if guidance < 0:
            raise BackendError(f"guidance must be >= 0, got {guidance}")
        self.predict_calls += 1

        if isinstance(injection, AttentionSnapshot):
            injection = injection.maps

        eps_cond, maps = self._single_pass(z, cond, injection)
        if guidance != 1.0:
            # Injection steers the conditional branch only.
            eps_uncond, _ = self._single_pass(z, self.embed(""), None)
            eps = eps_uncond + guidance * (eps_cond - eps_uncond)
        else:
            eps = eps_cond

        snapshot = AttentionSnapshot(self.site_registry, maps)
        if recorder is not None:
            recorder(snapshot)
        return eps, snapshot

    # -- style adapter ----------------------------------------------------------

    def with_style_adapter(self, ref: StyleAdapterRef) -> "ToyAffineBackend":
        weights = _resolve_adapter(ref.ref)
        if "delta_b" not in weights:
            raise BackendError(
                f"adapter {ref.ref!r} targets none of the denoiser weights "
                "(expected 'delta_b')"
            )
        delta = np.asarray(weights["delta_b"], dtype=np.float64)
        if delta.shape != self.latent_shape:
            raise BackendError(
                f"adapter delta shape {delta.shape} != latent shape {self.latent_shape}"
            )
        adapted = copy.copy(self)
        adapted._style_bias = ref.scale * delta
        adapted.predict_calls = 0
        return adapted

    # -- identity for caching -----------------------------------------------

    def fingerprint(self) -> dict:
        return {
            "backend": "toy",
            "mode": self.mode,
            "seed": self.seed,
            "shape": list(self.latent_shape),
            "steps": self.noise_schedule.T,
        }
