"""Prompt-to-Prompt attention control.

Derives the attention maps injected into the edit branch from the
reconstruction-branch maps and the mixed edit-branch maps. Three edit types:
word swap (replace), phrase addition (refine), and per-token reweighting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from difflib import SequenceMatcher

import numpy as np

from .backend import PromptEmbedding
from .trajectory import AttentionSnapshot

EDIT_TYPES = ("replace", "refine", "reweight")


class P2PError(ValueError):
    """Raised for invalid edit configuration or mismatched snapshots."""


@dataclass(frozen=True)
class TokenMapping:
    """Alignment between target-prompt tokens and source-prompt tokens.

    `mapped` sends a target token index to the source token index whose
    attention column it inherits; indices absent from `mapped` and listed in
    `new_tokens` belong to words only the target prompt has (including the
    case of padding positions, which always read from the edit branch).
    """

    source_words: tuple
    target_words: tuple
    mapped: dict
    new_tokens: frozenset

    def tokens_for_word(self, word: str) -> list[int]:
        return [i for i, w in enumerate(self.target_words) if w == word]


def build_token_mapping(source_prompt: str, target_prompt: str,
                        source_embed: PromptEmbedding,
                        target_embed: PromptEmbedding) -> TokenMapping:
    """Word-level alignment of the two prompts, lifted to token positions."""
    if not source_prompt.strip() or not target_prompt.strip():
        raise P2PError("both prompts must be nonempty")
    src_words, tgt_words = source_embed.words, target_embed.words

    word_map: dict[int, int] = {}
    new_words: set[int] = set()
    matcher = SequenceMatcher(a=list(src_words), b=list(tgt_words), autojunk=False)
    for op, i1, i2, j1, j2 in matcher.get_opcodes():
        if op == "equal":
            for offset in range(i2 - i1):
                word_map[j1 + offset] = i1 + offset
        elif op == "replace":
            # Word swaps pair positionally; surplus target words are new.
            for offset in range(j2 - j1):
                if offset < i2 - i1:
                    word_map[j1 + offset] = i1 + offset
                else:
                    new_words.add(j1 + offset)
        elif op == "insert":
            new_words.update(range(j1, j2))
        # "delete": source-only words have no target column to fill.

    src_word_to_token: dict[int, int] = {}
    for tok_idx, word_idx in enumerate(source_embed.alignment):
        if word_idx is not None and word_idx not in src_word_to_token:
            src_word_to_token[word_idx] = tok_idx

    mapped: dict[int, int] = {}
    new_tokens: set[int] = set()
    used_sources: set[int] = set()
    for tok_idx, word_idx in enumerate(target_embed.alignment):
        if word_idx is None:
            new_tokens.add(tok_idx)  # padding reads from the edit branch
        elif word_idx in word_map:
            src_tok = src_word_to_token.get(word_map[word_idx])
            if src_tok is None or src_tok in used_sources:
                new_tokens.add(tok_idx)
            else:
                mapped[tok_idx] = src_tok
                used_sources.add(src_tok)
        else:
            new_tokens.add(tok_idx)

    return TokenMapping(
        source_words=src_words,
        target_words=tgt_words,
        mapped=mapped,
        new_tokens=frozenset(new_tokens),
    )


@dataclass(frozen=True)
class P2PConfig:
    """Edit type, control windows, and (for reweight) per-word factors.

    The replace fractions give the share of denoising iterations during which
    cross/self attention is driven by the reconstruction branch.
    """

    edit_type: str = "replace"
    mapping: TokenMapping = None
    cross_replace_fraction: float = 0.8
    self_replace_fraction: float = 0.4
    reweight: dict = field(default_factory=dict)  # word -> factor

    def __post_init__(self):
        if self.edit_type not in EDIT_TYPES:
            raise P2PError(f"edit_type must be one of {EDIT_TYPES}, got {self.edit_type!r}")
        for frac in (self.cross_replace_fraction, self.self_replace_fraction):
            if not (0.0 <= frac <= 1.0):
                raise P2PError(f"replace fractions must be in [0, 1], got {frac}")

    def to_json(self) -> dict:
        return {
            "edit_type": self.edit_type,
            "cross_replace_fraction": self.cross_replace_fraction,
            "self_replace_fraction": self.self_replace_fraction,
            "reweight": dict(self.reweight),
        }

    @classmethod
    def from_json(cls, obj: dict, mapping: TokenMapping = None) -> "P2PConfig":
        return cls(
            edit_type=obj.get("edit_type", "replace"),
            mapping=mapping,
            cross_replace_fraction=float(obj.get("cross_replace_fraction", 0.8)),
            self_replace_fraction=float(obj.get("self_replace_fraction", 0.4)),
            reweight={str(k): float(v) for k, v in obj.get("reweight", {}).items()},
        )


def _assemble_cross(base: np.ndarray, mixed: np.ndarray,
                    mapping: TokenMapping) -> np.ndarray:
    """Mapped columns from the base map, new/padding columns from the mixed map."""
    tokens_k = mixed.shape[-1]
    out = mixed.copy()
    for tgt, src in mapping.mapped.items():
        if tgt >= tokens_k or src >= tokens_k:
            raise P2PError(
                f"token mapping {tgt}->{src} outside the {tokens_k}-token window"
            )
        out[..., tgt] = base[..., src]
    return out


def _renormalize_rows(arr: np.ndarray) -> np.ndarray:
    sums = arr.sum(axis=-1, keepdims=True)
    sums = np.where(sums <= 0.0, 1.0, sums)
    return arr / sums


def _reweight_columns(arr: np.ndarray, cfg: P2PConfig) -> np.ndarray:
    factors = np.ones(arr.shape[-1])
    for word, factor in cfg.reweight.items():
        token_idxs = cfg.mapping.tokens_for_word(word) if cfg.mapping else []
        if not token_idxs:
            raise P2PError(f"reweight word {word!r} not present in the target prompt")
        for idx in token_idxs:
            factors[idx] = factor
    if np.all(factors == 1.0):
        return arr
    return _renormalize_rows(arr * factors)


def apply(cfg: P2PConfig, base: AttentionSnapshot, mixed: AttentionSnapshot,
          iteration: int, total_steps: int) -> AttentionSnapshot:
    """Compose the injected snapshot for one denoising iteration.

    Cross-attention sites take mapped-token columns from the reconstruction
    branch while iteration < cross_replace_fraction * total_steps, and the
    mixed edit-branch map afterwards; self-attention sites swap the whole map
    within their own window. Reweight scales named target-token columns inside
    the cross window. Rows stay stochastic: column mixes are renormalized,
    and identical inputs pass through bitwise (their exact-arithmetic result).
    """
    if base.registry != mixed.registry:
        raise P2PError("base and mixed snapshots cover different site registries")
    in_cross = iteration < cfg.cross_replace_fraction * total_steps
    in_self = iteration < cfg.self_replace_fraction * total_steps

    out = {}
    for desc in mixed.registry:
        base_map = base.maps[desc.name]
        mixed_map = mixed.maps[desc.name]
        if desc.kind == "self":
            out[desc.name] = base_map.copy() if in_self else mixed_map.copy()
            continue
        if not in_cross:
            out[desc.name] = mixed_map.copy()
            continue
        if np.array_equal(base_map, mixed_map):
            # Degenerate edit (both branches agree): assembling and
            # renormalizing is the identity in exact arithmetic.
            result = mixed_map.copy()
        elif cfg.mapping is None:
            result = base_map.copy()
        else:
            result = _renormalize_rows(_assemble_cross(base_map, mixed_map, cfg.mapping))
        if cfg.edit_type == "reweight":
            result = _reweight_columns(result, cfg)
        out[desc.name] = result

    return AttentionSnapshot(mixed.registry, out)
