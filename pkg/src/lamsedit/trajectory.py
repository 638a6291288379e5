"""Latent and attention trajectories captured during inversion or generation.

A trajectory is an ordered map from timestep t to a payload: a latent tensor
(channels x H x W) or an attention snapshot (one row-stochastic map per
recorded attention site). Payloads never change after being recorded; when a
store's memory budget is exceeded they spill to disk and read back
bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

ROW_SUM_TOL = 1e-5


class TrajectoryError(ValueError):
    """Raised on duplicate/missing steps or payload shape mismatches."""


@dataclass(frozen=True)
class SiteDescriptor:
    """Identity and geometry of one recorded attention site."""

    name: str
    kind: str  # "self" | "cross"
    heads: int
    tokens_q: int
    tokens_k: int
    d_k: int

    def __post_init__(self):
        if self.kind not in ("self", "cross"):
            raise TrajectoryError(f"site kind must be self|cross, got {self.kind!r}")

    @property
    def map_shape(self) -> tuple[int, int, int]:
        return (self.heads, self.tokens_q, self.tokens_k)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "heads": self.heads,
            "tokens_q": self.tokens_q,
            "tokens_k": self.tokens_k,
            "d_k": self.d_k,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SiteDescriptor":
        return cls(
            name=obj["name"],
            kind=obj["kind"],
            heads=int(obj["heads"]),
            tokens_q=int(obj["tokens_q"]),
            tokens_k=int(obj["tokens_k"]),
            d_k=int(obj["d_k"]),
        )


class AttentionSnapshot:
    """Per-site attention maps for one step; rows are softmax outputs."""

    def __init__(self, registry: tuple[SiteDescriptor, ...], maps: dict[str, np.ndarray]):
        names = {d.name for d in registry}
        if set(maps) != names:
            raise TrajectoryError(
                f"snapshot sites {sorted(maps)} do not match registry {sorted(names)}"
            )
        for desc in registry:
            arr = maps[desc.name]
            if arr.shape != desc.map_shape:
                raise TrajectoryError(
                    f"site {desc.name!r}: map shape {arr.shape} != {desc.map_shape}"
                )
        self.registry = tuple(registry)
        self.maps = {name: np.asarray(arr) for name, arr in maps.items()}

    def site(self, name: str) -> np.ndarray:
        return self.maps[name]

    def validate_stochastic(self, tol: float = ROW_SUM_TOL) -> None:
        for desc in self.registry:
            arr = self.maps[desc.name]
            if arr.min() < -tol or arr.max() > 1.0 + tol:
                raise TrajectoryError(f"site {desc.name!r}: entries outside [0, 1]")
            row_err = np.abs(arr.sum(axis=-1) - 1.0).max()
            if row_err > tol:
                raise TrajectoryError(
                    f"site {desc.name!r}: row sums off by {row_err:.2e} (> {tol})"
                )

    def astype(self, dtype) -> "AttentionSnapshot":
        return AttentionSnapshot(
            self.registry, {n: a.astype(dtype) for n, a in self.maps.items()}
        )

    def restrict(self, registry: tuple[SiteDescriptor, ...]) -> "AttentionSnapshot":
        """View of this snapshot covering only the given (sub-)registry."""
        missing = [d.name for d in registry if d.name not in self.maps]
        if missing:
            raise TrajectoryError(f"snapshot lacks sites {missing}")
        return AttentionSnapshot(registry, {d.name: self.maps[d.name] for d in registry})

    def copy(self) -> "AttentionSnapshot":
        return AttentionSnapshot(
            self.registry, {n: a.copy() for n, a in self.maps.items()}
        )

    def allclose(self, other: "AttentionSnapshot", atol: float = 0.0) -> bool:
        if self.registry != other.registry:
            return False
        return all(
            np.allclose(self.maps[d.name], other.maps[d.name], rtol=0.0, atol=atol)
            for d in self.registry
        )


def _require_little_endian(arr: np.ndarray) -> np.ndarray:
    dt = arr.dtype.newbyteorder("<")
    return np.ascontiguousarray(arr.astype(dt, copy=False))


def write_array_payload(path: Path, arr: np.ndarray) -> None:
    """One file per payload: a JSON header line, then raw tensor bytes."""
    arr = _require_little_endian(arr)
    header = {"kind": "latent", "dtype": arr.dtype.str, "shape": list(arr.shape)}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(arr.tobytes(order="C"))


def read_array_payload(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    arr = np.frombuffer(raw, dtype=np.dtype(header["dtype"]))
    return arr.reshape(header["shape"]).copy()


def write_snapshot_payload(path: Path, snap: AttentionSnapshot) -> None:
    sites = []
    blobs = []
    for desc in snap.registry:
        arr = _require_little_endian(snap.maps[desc.name])
        entry = desc.to_json()
        entry["dtype"] = arr.dtype.str
        sites.append(entry)
        blobs.append(arr.tobytes(order="C"))
    header = {"kind": "attention", "sites": sites}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for blob in blobs:
            fh.write(blob)


def read_snapshot_payload(path: Path) -> AttentionSnapshot:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    registry = []
    maps = {}
    offset = 0
    for entry in header["sites"]:
        desc = SiteDescriptor.from_json(entry)
        dtype = np.dtype(entry["dtype"])
        count = desc.heads * desc.tokens_q * desc.tokens_k
        nbytes = count * dtype.itemsize
        arr = np.frombuffer(raw[offset : offset + nbytes], dtype=dtype)
        maps[desc.name] = arr.reshape(desc.map_shape).copy()
        registry.append(desc)
        offset += nbytes
    return AttentionSnapshot(tuple(registry), maps)


def _snapshot_nbytes(snap: AttentionSnapshot) -> int:
    return sum(arr.nbytes for arr in snap.maps.values())


def content_key(image_bytes: bytes, prompt: str, seed: int, config: dict) -> str:
    """Cache key for an inversion: input image + prompt + seed + sampler config."""
    h = hashlib.sha256()
    h.update(image_bytes)
    h.update(prompt.encode("utf-8"))
    h.update(str(seed).encode("utf-8"))
    h.update(json.dumps(config, sort_keys=True).encode("utf-8"))
    return h.hexdigest()


class TrajectoryStore:
    """Disk-backed home for trajectories: spill space plus inversion cache.

    `budget_bytes` bounds the combined in-memory payload size of all
    trajectories attached to this store; payloads recorded past the budget
    are written to `root/spill` and served from disk on lookup.
    """

    def __init__(self, root: Path | str, budget_bytes: int = 1 << 30):
        self.root = Path(root)
        self.budget_bytes = int(budget_bytes)
        self.used_bytes = 0
        self.spill_dir = self.root / "spill"
        self.cache_dir = self.root / "cache"
        self.spill_dir.mkdir(parents=True, exist_ok=True)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.cache_hits = 0
        self.cache_misses = 0

    def try_charge(self, nbytes: int) -> bool:
        if self.used_bytes + nbytes > self.budget_bytes:
            return False
        self.used_bytes += nbytes
        return True

    def release(self, nbytes: int) -> None:
        self.used_bytes = max(0, self.used_bytes - nbytes)

    def new_spill_path(self) -> Path:
        return self.spill_dir / f"{uuid.uuid4().hex}.bin"

    # -- inversion cache ----------------------------------------------------

    def _entry_dir(self, key: str) -> Path:
        return self.cache_dir / key

    def has_inversion(self, key: str) -> bool:
        return (self._entry_dir(key) / "meta.json").exists()

    def save_inversion(self, key: str, latents: "LatentTrajectory",
                       attention: "AttentionTrajectory") -> None:
        entry = self._entry_dir(key)
        entry.mkdir(parents=True, exist_ok=True)
        for t in latents.steps():
            write_array_payload(entry / f"lat_{t:05d}.bin", latents.lookup(t))
        for t in attention.steps():
            write_snapshot_payload(entry / f"attn_{t:05d}.bin", attention.lookup(t))
        meta = {
            "T": latents.T,
            "direction": latents.direction,
            "prompt_fingerprint": latents.prompt_fingerprint,
            "seed": latents.seed,
            "registry": [d.to_json() for d in attention.registry],
        }
        tmp = entry / "meta.json.tmp"
        tmp.write_text(json.dumps(meta, sort_keys=True))
        os.replace(tmp, entry / "meta.json")

    def load_inversion(self, key: str) -> tuple["LatentTrajectory", "AttentionTrajectory"]:
        entry = self._entry_dir(key)
        meta = json.loads((entry / "meta.json").read_text())
        registry = tuple(SiteDescriptor.from_json(d) for d in meta["registry"])
        latents = LatentTrajectory(
            direction=meta["direction"],
            prompt_fingerprint=meta["prompt_fingerprint"],
            seed=meta["seed"],
            T=meta["T"],
            store=self,
        )
        attention = AttentionTrajectory(registry=registry, store=self)
        for t in range(0, meta["T"] + 1):
            latents.record(t, read_array_payload(entry / f"lat_{t:05d}.bin"))
        for t in range(1, meta["T"] + 1):
            attention.record(t, read_snapshot_payload(entry / f"attn_{t:05d}.bin"))
        return latents, attention


@dataclass
class _SpilledEntry:
    path: Path
    is_snapshot: bool


class _StepMap:
    """Shared record/lookup with transparent spill for both trajectory kinds."""

    def __init__(self, store: Optional[TrajectoryStore]):
        self._store = store
        self._entries: dict[int, object] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def steps(self) -> list[int]:
        return sorted(self._entries)

    def __contains__(self, t: int) -> bool:
        return t in self._entries

    def _put(self, t: int, payload, nbytes: int, is_snapshot: bool) -> None:
        if t in self._entries:
            raise TrajectoryError(f"step {t} already recorded")
        if self._store is not None and not self._store.try_charge(nbytes):
            path = self._store.new_spill_path()
            if is_snapshot:
                write_snapshot_payload(path, payload)
            else:
                write_array_payload(path, payload)
            self._entries[t] = _SpilledEntry(path=path, is_snapshot=is_snapshot)
        else:
            self._entries[t] = payload

    def _get(self, t: int):
        if t not in self._entries:
            raise TrajectoryError(f"step {t} not recorded")
        entry = self._entries[t]
        if isinstance(entry, _SpilledEntry):
            if entry.is_snapshot:
                return read_snapshot_payload(entry.path)
            return read_array_payload(entry.path)
        return entry


class LatentTrajectory:
    """Ordered latents z_t for t = 0..T along one inversion or generation."""

    def __init__(self, direction: str, prompt_fingerprint: str, seed: int, T: int,
                 store: Optional[TrajectoryStore] = None):
        if direction not in ("inversion", "generation"):
            raise TrajectoryError(f"direction must be inversion|generation, got {direction!r}")
        self.direction = direction
        self.prompt_fingerprint = prompt_fingerprint
        self.seed = seed
        self.T = T
        self._shape: Optional[tuple[int, ...]] = None
        self._map = _StepMap(store)

    def record(self, t: int, latent: np.ndarray) -> None:
        latent = np.asarray(latent)
        if self._shape is None:
            self._shape = latent.shape
        elif latent.shape != self._shape:
            raise TrajectoryError(
                f"latent shape {latent.shape} != trajectory shape {self._shape}"
            )
        self._map._put(t, latent, latent.nbytes, is_snapshot=False)

    def lookup(self, t: int) -> np.ndarray:
        return self._map._get(t)

    def steps(self) -> list[int]:
        return self._map.steps()

    def __contains__(self, t: int) -> bool:
        return t in self._map

    def __len__(self) -> int:
        return len(self._map)

    @property
    def complete(self) -> bool:
        return len(self._map) == self.T + 1


class AttentionTrajectory:
    """Ordered attention snapshots A_t for t = 1..T, one shared site registry."""

    def __init__(self, registry: tuple[SiteDescriptor, ...],
                 store: Optional[TrajectoryStore] = None,
                 store_half: bool = False):
        self.registry = tuple(registry)
        self.store_half = store_half
        self._map = _StepMap(store)

    def record(self, t: int, snapshot: AttentionSnapshot) -> None:
        if snapshot.registry != self.registry:
            raise TrajectoryError("snapshot registry does not match trajectory registry")
        snapshot.validate_stochastic()
        if self.store_half:
            snapshot = snapshot.astype(np.float16)
        self._map._put(t, snapshot, _snapshot_nbytes(snapshot), is_snapshot=True)

    def lookup(self, t: int) -> AttentionSnapshot:
        return self._map._get(t)

    def steps(self) -> list[int]:
        return self._map.steps()

    def __contains__(self, t: int) -> bool:
        return t in self._map

    def __len__(self) -> int:
        return len(self._map)
