"""
Fidelity-editability sweep
==========================

Evaluate the sample manifest at several generation start offsets. Starting
later reuses more of the inversion trajectory, so content preservation
improves (stub LPIPS falls) while edit strength weakens: the trade-off curve.
Inversions are cached, so each image is inverted exactly once for the whole
sweep.
"""

import tempfile
from pathlib import Path

import numpy as np

from lamsedit import (
    EditRequest,
    SamplerConfig,
    StubSegmentationClient,
    ToyAffineBackend,
    TrajectoryStore,
    emit_report,
    load_manifest,
    run_sweep,
    stub_clip_provider,
    stub_lpips_provider,
)

manifest = load_manifest(Path(__file__).parent.parent / "data/sample_manifest/manifest.jsonl")
print(f"loaded {len(manifest.entries)} entries from {manifest.dataset_id!r}")

# half the sample entries carry a mask prompt; the stub answers each with a
# fixed rectangle, the way a segmentation service would return instances
mask_prompts = {e.mask_prompt for e in manifest.entries if e.mask_prompt}
seg_client = StubSegmentationClient(
    {prompt: [((2, 6, 2, 6), 0.9)] for prompt in mask_prompts}
)

backend = ToyAffineBackend(mode="B", seed=0)
sampler = SamplerConfig(steps=50, guidance=7.5, inversion_guidance=1.0, seed=0)
template = EditRequest(
    image=np.zeros((8, 8)), source_prompt="x", target_prompt="y", sampler=sampler
)
providers = {"lpips": stub_lpips_provider(), "clip": stub_clip_provider()}

with tempfile.TemporaryDirectory() as tmp:
    store = TrajectoryStore(Path(tmp) / "cache")
    points, rows = run_sweep(
        manifest, template, [0, 10, 20, 30, 40], backend, providers, store=store,
        seg_client=seg_client,
    )
    print(f"ran {len(rows)} edits, {store.cache_misses} inversions "
          f"({store.cache_hits} cache hits)")
    print(f"{'start':>6} {'lpips':>8} {'clip':>8} {'n':>3}")
    for p in points:
        print(f"{p.start_iteration:>6} {p.lpips:>8.4f} {p.clip:>8.4f} {p.n:>3}")

    report = emit_report(points, "csv", Path(tmp) / "report.csv")
    print("\nreport preview:")
    print(report.read_text())
