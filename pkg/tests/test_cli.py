import json

import numpy as np
import pytest
from click.testing import CliRunner

from lamsedit.cli import main
from lamsedit.imageio import load_image, save_image


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def image_file(tmp_path):
    path = tmp_path / "input.png"
    save_image(path, np.random.default_rng(7).random((8, 8)))
    return str(path)


def test_help_enumerates_documented_flags(runner):
    expectations = {
        "invert": ["--image", "--prompt", "--steps", "--seed", "--out"],
        "edit": ["--image", "--source-prompt", "--target-prompt", "--mask-prompt",
                 "--wa", "--wz", "--lora", "--start-iter", "--out"],
        "scheduler-preview": ["--wa", "--steps", "--plot"],
        "eval": ["--manifest", "--sweep", "--report"],
        "serve": ["--port"],
    }
    for command, flags in expectations.items():
        result = runner.invoke(main, [command, "--help"])
        assert result.exit_code == 0
        for flag in flags:
            assert flag in result.output, f"{command} --help missing {flag}"


def test_invert_reports_roundtrip_error(runner, image_file, tmp_path):
    out = str(tmp_path / "cache")
    result = runner.invoke(main, [
        "invert", "--image", image_file, "--prompt", "a cat on a mat",
        "--out", out, "--backend", "toy-a", "--steps", "50", "--seed", "0",
    ])
    assert result.exit_code == 0, result.output
    assert "cache key:" in result.output
    error = float(result.output.split("max-abs error:")[1].split()[0])
    assert error <= 1e-5

    # repeated call is served from cache
    again = runner.invoke(main, [
        "invert", "--image", image_file, "--prompt", "a cat on a mat",
        "--out", out, "--backend", "toy-a", "--steps", "50", "--seed", "0",
    ])
    assert again.exit_code == 0
    assert "cache hit" in again.output


def test_invert_missing_image_exits_2(runner, tmp_path):
    result = runner.invoke(main, [
        "invert", "--image", str(tmp_path / "ghost.png"), "--prompt", "x",
    ])
    assert result.exit_code == 2


def test_edit_defaults_write_image_and_sidecar(runner, image_file, tmp_path):
    out = tmp_path / "edited.png"
    result = runner.invoke(main, [
        "edit", "--image", image_file,
        "--source-prompt", "a cat on a mat", "--target-prompt", "a dog on a mat",
        "--backend", "toy-b", "--out", str(out),
        "--cache-dir", str(tmp_path / "cache"),
    ])
    assert result.exit_code == 0, result.output
    assert out.exists()
    sidecar = json.loads(out.with_suffix(".json").read_text())
    # omitted flags resolve to the published default schedulers
    assert sidecar["resolved"]["attention_schedule"]["spec"] == {
        "start": 0.7, "end": 0.1, "until": 50, "type": "logistic",
    }
    assert sidecar["resolved"]["latent_schedule"]["spec"] == {
        "start": 0.6, "end": 0.0, "until": 10, "type": "stepped",
    }
    assert "content_hash" in sidecar


def test_edit_wz_one_reproduces_input(runner, image_file, tmp_path):
    out = tmp_path / "copy.png"
    result = runner.invoke(main, [
        "edit", "--image", image_file,
        "--source-prompt", "a cat on a mat", "--target-prompt", "a dog on a mat",
        "--backend", "toy-b", "--wz", "1.0,1.0,50,stepped", "--out", str(out),
        "--cache-dir", str(tmp_path / "cache"),
    ])
    assert result.exit_code == 0, result.output
    # latent mixing pinned at 1 bypasses diffusion: output == codec round trip
    original = load_image(image_file)
    edited = load_image(out)
    assert np.array_equal(edited, original)


def test_edit_bad_schedule_type_exits_2(runner, image_file):
    result = runner.invoke(main, [
        "edit", "--image", image_file, "--source-prompt", "a", "--target-prompt", "b",
        "--wa", "0.7,0.1,50,quadratic",
    ])
    assert result.exit_code == 2
    assert "--wa" in result.output


def test_scheduler_preview_default_matches_wa(runner):
    from tests.test_schedule import GOLDEN_WA

    result = runner.invoke(main, ["scheduler-preview", "--steps", "50"])
    assert result.exit_code == 0
    rows = [line.split() for line in result.output.splitlines()
            if line.strip() and line.split()[0].isdigit()]
    assert len(rows) == 50
    for (idx, value), expected in zip(rows, GOLDEN_WA):
        assert abs(float(value) - expected) <= 5e-4


def test_scheduler_preview_constant_and_single_step(runner):
    result = runner.invoke(main, ["scheduler-preview", "--wa", "0.5,0.5,1,stepped",
                                  "--steps", "1"])
    assert result.exit_code == 0
    rows = [line for line in result.output.splitlines()
            if line.strip() and line.split()[0].isdigit()]
    assert len(rows) == 1
    assert float(rows[0].split()[1]) == 0.5


def test_scheduler_preview_plot(runner, tmp_path):
    plot = tmp_path / "curve.png"
    result = runner.invoke(main, ["scheduler-preview", "--plot", str(plot)])
    assert result.exit_code == 0
    assert plot.exists()


def test_eval_sweep_writes_report(runner, tmp_path):
    for i in range(2):
        save_image(tmp_path / f"img{i}.png", np.random.default_rng(i).random((8, 8)))
    manifest = tmp_path / "set.jsonl"
    manifest.write_text("\n".join(
        json.dumps({"image": f"img{i}.png", "source_prompt": "a cat",
                    "target_prompt": "a dog"})
        for i in range(2)
    ) + "\n")
    report = tmp_path / "report.csv"
    result = runner.invoke(main, [
        "eval", "--manifest", str(manifest), "--sweep", "0,10,20",
        "--report", str(report), "--backend", "toy-b",
        "--cache-dir", str(tmp_path / "cache"),
    ])
    assert result.exit_code == 0, result.output
    lines = report.read_text().splitlines()
    assert len(lines) == 4  # header + 3 points
    assert report.with_suffix(".rows.jsonl").exists()


def test_eval_malformed_manifest_exits_2_with_line(runner, tmp_path):
    manifest = tmp_path / "bad.jsonl"
    manifest.write_text('{"image": "x.png"}\n')
    result = runner.invoke(main, ["eval", "--manifest", str(manifest)])
    assert result.exit_code == 2
    assert ":1:" in result.output


def test_serve_starts_uvicorn(runner, tmp_path, monkeypatch):
    captured = {}

    def fake_run(app, host, port):
        captured["app"] = app
        captured["port"] = port

    monkeypatch.setattr("uvicorn.run", fake_run)
    result = runner.invoke(main, [
        "serve", "--port", "9000", "--data-dir", str(tmp_path / "data"),
    ])
    assert result.exit_code == 0, result.output
    assert captured["port"] == 9000
    assert captured["app"].title == "lams-edit service"


def test_cli_service_parity_on_content_hash(runner, image_file, tmp_path):
    """The CLI and the service resolve identical requests to identical hashes."""
    out = tmp_path / "edited.png"
    result = runner.invoke(main, [
        "edit", "--image", image_file,
        "--source-prompt", "a cat on a mat", "--target-prompt", "a dog on a mat",
        "--backend", "toy-b", "--seed", "0", "--steps", "50", "--out", str(out),
        "--cache-dir", str(tmp_path / "cache"),
    ])
    assert result.exit_code == 0, result.output
    cli_sidecar = json.loads(out.with_suffix(".json").read_text())

    from lamsedit.service import parse_edit_request

    request = parse_edit_request({
        "image_path": image_file,
        "source_prompt": "a cat on a mat",
        "target_prompt": "a dog on a mat",
        "sampler": {"steps": 50, "guidance": 7.5, "inversion_guidance": 1.0, "seed": 0},
    }, tmp_path)
    assert request.content_hash() == cli_sidecar["content_hash"]
