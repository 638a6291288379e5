import base64
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from lamsedit.config import BackendConfig, SamplerConfig
from lamsedit.imageio import array_to_b64, png_bytes_to_mask
from lamsedit.masking import StubSegmentationClient
from lamsedit.service import API, ServiceSettings, create_app

SAMPLER = {"steps": 8, "guidance": 7.5, "inversion_guidance": 1.0, "seed": 0}


def _settings(tmp_path, **kwargs):
    defaults = dict(
        data_dir=tmp_path / "data",
        backend_config=BackendConfig(
            backend="toy-b", sampler=SamplerConfig(steps=8, seed=0)
        ),
        seg_client=StubSegmentationClient({"the box": [((1, 5, 1, 5), 0.9)]}),
    )
    defaults.update(kwargs)
    return ServiceSettings(**defaults)


def _image_b64(seed=7):
    return array_to_b64(np.random.default_rng(seed).random((8, 8)))


def _edit_payload(**overrides):
    payload = {
        "image_b64": _image_b64(),
        "source_prompt": "a cat on a mat",
        "target_prompt": "a dog on a mat",
        "sampler": dict(SAMPLER),
        # published defaults assume T=50; these short runs need until <= 8
        "attention_schedule": {"start": 0.7, "end": 0.1, "until": 8, "type": "logistic"},
        "latent_schedule": {"start": 0.6, "end": 0.0, "until": 2, "type": "stepped"},
    }
    payload.update(overrides)
    return payload


def _wait_done(client, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        record = client.get(f"{API}/edits/{job_id}").json()
        if record["state"] in ("done", "failed"):
            return record
        time.sleep(0.02)
    raise TimeoutError(f"job {job_id} did not finish")


def test_submit_poll_result_round_trip(tmp_path):
    with TestClient(create_app(_settings(tmp_path))) as client:
        response = client.post(f"{API}/edits", json=_edit_payload())
        assert response.status_code == 202
        job_id = response.json()["job_id"]

        record = _wait_done(client, job_id)
        assert record["state"] == "done"
        assert record["iteration"] == record["total"] == 8
        assert "image_b64" not in record.get("request", {})  # no large payloads

        result = client.get(f"{API}/edits/{job_id}/result")
        assert result.status_code == 200
        body = result.json()
        assert body["metrics"]["lpips"] is not None
        assert body["resolved"]["latent_schedule"]["spec"]["type"] == "stepped"
        assert base64.b64decode(body["image_b64"])[:4] == b"\x89PNG"

        png = client.get(f"{API}/edits/{job_id}/result", params={"format": "png"})
        assert png.status_code == 200
        assert png.headers["content-type"] == "image/png"


def test_progress_monotone_while_polling(tmp_path):
    settings = _settings(tmp_path, step_delay=0.01)
    with TestClient(create_app(settings)) as client:
        job_id = client.post(f"{API}/edits", json=_edit_payload()).json()["job_id"]
        seen = []
        record = client.get(f"{API}/edits/{job_id}").json()
        while record["state"] not in ("done", "failed"):
            seen.append(record.get("iteration", 0))
            record = client.get(f"{API}/edits/{job_id}").json()
        assert record["state"] == "done"
        assert seen == sorted(seen)
        assert any(0 < i < 8 for i in seen)  # actually observed mid-run states


def test_validation_errors_name_fields(tmp_path):
    with TestClient(create_app(_settings(tmp_path))) as client:
        payload = _edit_payload()
        del payload["target_prompt"]
        response = client.post(f"{API}/edits", json=payload)
        assert response.status_code == 400
        fields = [e["field"] for e in response.json()["errors"]]
        assert "target_prompt" in fields

        response = client.post(f"{API}/edits", json={"source_prompt": "x",
                                                     "target_prompt": "y"})
        assert response.status_code == 400
        assert response.json()["errors"][0]["field"] == "image_b64"

        bad_schedule = _edit_payload(
            attention_schedule={"start": 0.1, "end": 0.9, "until": 5, "type": "linear"}
        )
        response = client.post(f"{API}/edits", json=bad_schedule)
        assert response.status_code == 400
        assert response.json()["errors"][0]["field"] == "attention_schedule"


def test_duplicate_inflight_returns_409_same_id(tmp_path):
    settings = _settings(tmp_path, step_delay=0.05)
    with TestClient(create_app(settings)) as client:
        payload = _edit_payload()
        first = client.post(f"{API}/edits", json=payload)
        assert first.status_code == 202
        job_id = first.json()["job_id"]

        second = client.post(f"{API}/edits", json=payload)
        assert second.status_code == 409
        assert second.json()["job_id"] == job_id

        _wait_done(client, job_id)
        # once finished, the same request is a fresh job again
        third = client.post(f"{API}/edits", json=payload)
        assert third.status_code == 202
        assert third.json()["job_id"] != job_id


def test_multipart_upload(tmp_path):
    import io
    import json as json_mod

    from lamsedit.imageio import array_to_png_bytes

    with TestClient(create_app(_settings(tmp_path))) as client:
        payload = _edit_payload()
        del payload["image_b64"]
        png = array_to_png_bytes(np.random.default_rng(3).random((8, 8)))
        response = client.post(
            f"{API}/edits",
            data={"request": json_mod.dumps(payload)},
            files={"image": ("input.png", io.BytesIO(png), "image/png")},
        )
        assert response.status_code == 202
        record = _wait_done(client, response.json()["job_id"])
        assert record["state"] == "done"


def test_unknown_job_404(tmp_path):
    with TestClient(create_app(_settings(tmp_path))) as client:
        assert client.get(f"{API}/edits/ghost").status_code == 404
        assert client.get(f"{API}/edits/ghost/result").status_code == 404


def test_result_before_done_409(tmp_path):
    settings = _settings(tmp_path, step_delay=0.05)
    with TestClient(create_app(settings)) as client:
        job_id = client.post(f"{API}/edits", json=_edit_payload()).json()["job_id"]
        response = client.get(f"{API}/edits/{job_id}/result")
        assert response.status_code == 409
        assert response.json()["state"] in ("queued", "inverting", "denoising")
        _wait_done(client, job_id)


def test_failed_job_result_409_names_stage(tmp_path):
    with TestClient(create_app(_settings(tmp_path))) as client:
        payload = _edit_payload(mask_prompt="nothing configured")
        settings_client = StubSegmentationClient({}, available=False)
        client.app.state.manager.settings.seg_client = settings_client
        job_id = client.post(f"{API}/edits", json=payload).json()["job_id"]
        record = _wait_done(client, job_id)
        assert record["state"] == "failed"
        assert record["stage"] == "mask"
        response = client.get(f"{API}/edits/{job_id}/result")
        assert response.status_code == 409
        assert response.json()["stage"] == "mask"


def test_deleted_artifact_410(tmp_path):
    with TestClient(create_app(_settings(tmp_path))) as client:
        job_id = client.post(f"{API}/edits", json=_edit_payload()).json()["job_id"]
        record = _wait_done(client, job_id)
        manager = client.app.state.manager
        manager.store.artifact_path(record["result_ref"]).unlink()
        assert client.get(f"{API}/edits/{job_id}/result").status_code == 410


def test_restart_preserves_history(tmp_path):
    settings = _settings(tmp_path)
    with TestClient(create_app(settings)) as client:
        job_id = client.post(f"{API}/edits", json=_edit_payload()).json()["job_id"]
        _wait_done(client, job_id)

    # a new app over the same data dir: the run is still listed, still done
    with TestClient(create_app(_settings(tmp_path))) as client:
        record = client.get(f"{API}/edits/{job_id}")
        assert record.status_code == 200
        assert record.json()["state"] == "done"
        runs = client.get(f"{API}/runs").json()
        assert any(r["job_id"] == job_id for r in runs["runs"])
        assert client.get(f"{API}/edits/{job_id}/result").status_code == 200


def test_restart_fails_interrupted_jobs(tmp_path):
    settings = _settings(tmp_path)
    # simulate a crash: append a mid-flight state without running a worker
    from lamsedit.service import RunStore

    store = RunStore(settings.data_dir)
    store.append("stuck-job", state="denoising", iteration=3, total=8)

    with TestClient(create_app(settings)) as client:
        record = client.get(f"{API}/edits/stuck-job").json()
        assert record["state"] == "failed"
        assert record["stage"] == "restart"


def test_mask_preview_rectangle(tmp_path):
    with TestClient(create_app(_settings(tmp_path))) as client:
        response = client.post(f"{API}/masks", json={
            "image_b64": _image_b64(), "mask_prompt": "the box",
        })
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/png"
        assert response.headers["x-empty-match"] == "false"
        mask = png_bytes_to_mask(response.content)
        assert mask[2, 2] == 1 and mask[7, 7] == 0


def test_mask_preview_empty_match_flag(tmp_path):
    with TestClient(create_app(_settings(tmp_path))) as client:
        response = client.post(f"{API}/masks", json={
            "image_b64": _image_b64(), "mask_prompt": "unknown thing",
        })
        assert response.status_code == 200
        assert response.headers["x-empty-match"] == "true"
        assert png_bytes_to_mask(response.content).sum() == 0


def test_mask_preview_client_down_502(tmp_path):
    settings = _settings(tmp_path, seg_client=StubSegmentationClient({}, available=False))
    with TestClient(create_app(settings)) as client:
        response = client.post(f"{API}/masks", json={
            "image_b64": _image_b64(), "mask_prompt": "x",
        })
        assert response.status_code == 502


def test_mask_preview_malformed_image_400(tmp_path):
    with TestClient(create_app(_settings(tmp_path))) as client:
        response = client.post(f"{API}/masks", json={
            "image_b64": "definitely-not-png", "mask_prompt": "x",
        })
        assert response.status_code == 400


def test_scheduler_preview_matches_golden(tmp_path):
    from tests.test_schedule import GOLDEN_WA

    with TestClient(create_app(_settings(tmp_path))) as client:
        response = client.get(f"{API}/schedulers/preview", params={
            "start": 0.7, "end": 0.1, "until": 50, "type": "logistic", "steps": 50,
        })
        assert response.status_code == 200
        weights = response.json()["weights"]
        assert len(weights) == 50
        np.testing.assert_allclose(weights, GOLDEN_WA, atol=5e-4, rtol=0)


def test_scheduler_preview_constant(tmp_path):
    with TestClient(create_app(_settings(tmp_path))) as client:
        response = client.get(f"{API}/schedulers/preview", params={
            "start": 0.4, "end": 0.4, "until": 10, "type": "linear", "steps": 20,
        })
        assert response.json()["weights"] == [0.4] * 20


def test_scheduler_preview_invalid_400(tmp_path):
    with TestClient(create_app(_settings(tmp_path))) as client:
        response = client.get(f"{API}/schedulers/preview", params={
            "start": 0.7, "end": 0.1, "until": 80, "type": "logistic", "steps": 50,
        })
        assert response.status_code == 400


def test_runs_listing_pagination_and_filter(tmp_path):
    with TestClient(create_app(_settings(tmp_path))) as client:
        assert client.get(f"{API}/runs").json()["runs"] == []
        ids = []
        for seed in range(3):
            payload = _edit_payload(image_b64=_image_b64(seed))
            ids.append(client.post(f"{API}/edits", json=payload).json()["job_id"])
        for job_id in ids:
            _wait_done(client, job_id)

        runs = client.get(f"{API}/runs").json()
        assert runs["total"] == 3
        page = client.get(f"{API}/runs", params={"limit": 2, "offset": 1}).json()
        assert len(page["runs"]) == 2
        done_only = client.get(f"{API}/runs", params={"state": "done"}).json()
        assert all(r["state"] == "done" for r in done_only["runs"])
        assert done_only["total"] == 3
