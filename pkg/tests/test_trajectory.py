import numpy as np
import pytest

from lamsedit.trajectory import (
    AttentionSnapshot,
    AttentionTrajectory,
    LatentTrajectory,
    SiteDescriptor,
    TrajectoryError,
    TrajectoryStore,
    content_key,
    read_array_payload,
    read_snapshot_payload,
    write_array_payload,
    write_snapshot_payload,
)

REGISTRY = (
    SiteDescriptor(name="self@4x4", kind="self", heads=2, tokens_q=16, tokens_k=16, d_k=8),
    SiteDescriptor(name="cross@4x4", kind="cross", heads=2, tokens_q=16, tokens_k=8, d_k=8),
)


def _snapshot(rng) -> AttentionSnapshot:
    maps = {}
    for desc in REGISTRY:
        raw = rng.random(desc.map_shape)
        maps[desc.name] = raw / raw.sum(axis=-1, keepdims=True)
    return AttentionSnapshot(REGISTRY, maps)


def test_latent_record_lookup_bitwise():
    traj = LatentTrajectory("inversion", "fp", seed=0, T=50)
    rng = np.random.default_rng(0)
    payloads = {t: rng.standard_normal((1, 8, 8)) for t in range(51)}
    for t, z in payloads.items():
        traj.record(t, z)
    assert traj.complete
    assert len(traj) == 51
    for t, z in payloads.items():
        assert np.array_equal(traj.lookup(t), z)


def test_duplicate_step_rejected():
    traj = LatentTrajectory("inversion", "fp", seed=0, T=5)
    traj.record(0, np.zeros((1, 4, 4)))
    with pytest.raises(TrajectoryError):
        traj.record(0, np.zeros((1, 4, 4)))


def test_shape_mismatch_rejected():
    traj = LatentTrajectory("inversion", "fp", seed=0, T=5)
    traj.record(0, np.zeros((1, 4, 4)))
    with pytest.raises(TrajectoryError):
        traj.record(1, np.zeros((1, 8, 8)))


def test_missing_step_rejected():
    traj = LatentTrajectory("generation", "fp", seed=0, T=5)
    with pytest.raises(TrajectoryError):
        traj.lookup(3)


def test_spill_round_trip_bit_identical(tmp_path):
    # budget of one payload: the second record must spill to disk
    payload = np.random.default_rng(1).standard_normal((1, 8, 8))
    store = TrajectoryStore(tmp_path, budget_bytes=payload.nbytes)
    traj = LatentTrajectory("inversion", "fp", seed=0, T=5, store=store)
    traj.record(0, payload)
    spilled = np.random.default_rng(2).standard_normal((1, 8, 8))
    traj.record(1, spilled)
    assert store.used_bytes == payload.nbytes
    assert list(store.spill_dir.iterdir())  # something actually hit disk
    assert np.array_equal(traj.lookup(1), spilled)
    assert traj.lookup(1).dtype == spilled.dtype


def test_snapshot_spill_round_trip(tmp_path):
    store = TrajectoryStore(tmp_path, budget_bytes=0)
    traj = AttentionTrajectory(REGISTRY, store=store)
    snap = _snapshot(np.random.default_rng(3))
    traj.record(1, snap)
    loaded = traj.lookup(1)
    for desc in REGISTRY:
        assert np.array_equal(loaded.maps[desc.name], snap.maps[desc.name])


def test_payload_files_bit_exact(tmp_path):
    arr = np.random.default_rng(4).standard_normal((3, 5, 7))
    path = tmp_path / "payload.bin"
    write_array_payload(path, arr)
    assert np.array_equal(read_array_payload(path), arr)

    snap = _snapshot(np.random.default_rng(5))
    spath = tmp_path / "snap.bin"
    write_snapshot_payload(spath, snap)
    loaded = read_snapshot_payload(spath)
    assert loaded.registry == REGISTRY
    for desc in REGISTRY:
        assert np.array_equal(loaded.maps[desc.name], snap.maps[desc.name])


def test_snapshot_registry_mismatch_rejected():
    traj = AttentionTrajectory(REGISTRY[:1])
    snap = _snapshot(np.random.default_rng(6))
    with pytest.raises(TrajectoryError):
        traj.record(1, snap)


def test_snapshot_stochasticity_enforced():
    maps = {d.name: np.full(d.map_shape, 0.5) for d in REGISTRY}
    snap = AttentionSnapshot(REGISTRY, maps)
    traj = AttentionTrajectory(REGISTRY)
    with pytest.raises(TrajectoryError):
        traj.record(1, snap)


def test_snapshot_wrong_shape_rejected():
    maps = {
        REGISTRY[0].name: np.ones((2, 16, 16)) / 16,
        REGISTRY[1].name: np.ones((2, 16, 9)) / 9,  # tokens_k should be 8
    }
    with pytest.raises(TrajectoryError):
        AttentionSnapshot(REGISTRY, maps)


def test_snapshot_restrict():
    snap = _snapshot(np.random.default_rng(7))
    sub = snap.restrict(REGISTRY[:1])
    assert sub.registry == REGISTRY[:1]
    assert np.array_equal(sub.maps["self@4x4"], snap.maps["self@4x4"])
    with pytest.raises(TrajectoryError):
        snap.restrict((SiteDescriptor("other", "self", 1, 4, 4, 8),))


def test_half_precision_flag():
    traj = AttentionTrajectory(REGISTRY, store_half=True)
    snap = _snapshot(np.random.default_rng(8))
    traj.record(1, snap)
    assert traj.lookup(1).maps["self@4x4"].dtype == np.float16


def test_inversion_cache_round_trip(tmp_path):
    store = TrajectoryStore(tmp_path)
    rng = np.random.default_rng(9)
    latents = LatentTrajectory("inversion", "fp", seed=1, T=3)
    for t in range(4):
        latents.record(t, rng.standard_normal((1, 4, 4)))
    attention = AttentionTrajectory(REGISTRY)
    for t in range(1, 4):
        attention.record(t, _snapshot(rng))

    key = content_key(b"img", "prompt", 1, {"steps": 3})
    assert not store.has_inversion(key)
    store.save_inversion(key, latents, attention)
    assert store.has_inversion(key)

    lat2, attn2 = store.load_inversion(key)
    assert lat2.T == 3 and lat2.direction == "inversion"
    for t in range(4):
        assert np.array_equal(lat2.lookup(t), latents.lookup(t))
    for t in range(1, 4):
        for desc in REGISTRY:
            assert np.array_equal(
                attn2.lookup(t).maps[desc.name], attention.lookup(t).maps[desc.name]
            )


def test_content_key_sensitivity():
    base = content_key(b"img", "prompt", 1, {"steps": 3})
    assert content_key(b"img2", "prompt", 1, {"steps": 3}) != base
    assert content_key(b"img", "other", 1, {"steps": 3}) != base
    assert content_key(b"img", "prompt", 2, {"steps": 3}) != base
    assert content_key(b"img", "prompt", 1, {"steps": 4}) != base
    assert content_key(b"img", "prompt", 1, {"steps": 3}) == base
