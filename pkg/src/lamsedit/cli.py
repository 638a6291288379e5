"""Command-line front end; drives the same library paths as the service.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

from .backend import StyleAdapterRef
from .config import BackendConfig, SamplerConfig, build_backend, load_backend_config
from .evaluation import (
    ManifestError,
    emit_report,
    load_manifest,
    run_sweep,
    stub_clip_provider,
    stub_lpips_provider,
)
from .imageio import load_image, save_image
from .inversion import generate_from_inversion, invert, inversion_cache_key
from .pipeline import EditRequest, edit
from .p2p import P2PConfig
from .schedule import (
    ScheduleError,
    SchedulerSpec,
    make_schedule,
    parse_compact_spec,
    preview_schedule,
)
from .trajectory import TrajectoryStore


def _backend_from_options(config, backend, steps, seed, guidance, inversion_guidance):
    if config is not None:
        cfg = load_backend_config(config)
    else:
        cfg = BackendConfig()
    sampler = SamplerConfig(
        steps=steps if steps is not None else cfg.sampler.steps,
        guidance=guidance if guidance is not None else cfg.sampler.guidance,
        inversion_guidance=(
            inversion_guidance if inversion_guidance is not None
            else cfg.sampler.inversion_guidance
        ),
        seed=seed if seed is not None else cfg.sampler.seed,
    )
    cfg = dataclasses.replace(
        cfg,
        backend=backend if backend is not None else cfg.backend,
        sampler=sampler,
    )
    return build_backend(cfg), sampler


def _runtime_abort(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _spec_option(value: str, flag: str) -> SchedulerSpec:
    try:
        return parse_compact_spec(value)
    except ScheduleError as exc:
        raise click.UsageError(f"{flag}: {exc}")


backend_options = [
    click.option("--config", type=click.Path(exists=True, dir_okay=False),
                 default=None, help="Backend config file (TOML or JSON)."),
    click.option("--backend", type=click.Choice(["toy-a", "toy-b", "real"]),
                 default=None, help="Backend selection (overrides config)."),
    click.option("--steps", type=int, default=None, help="DDIM step count."),
    click.option("--seed", type=int, default=None, help="Random seed."),
    click.option("--guidance", type=float, default=None, help="Generation guidance scale."),
    click.option("--inversion-guidance", type=float, default=None,
                 help="Guidance scale during inversion."),
]


def with_backend_options(fn):
    for option in reversed(backend_options):
        fn = option(fn)
    return fn


@click.group()
def main():
    """LAMS-Edit: schedule-mixed image editing on diffusion backends."""


@main.command()
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Input image (PNG).")
@click.option("--prompt", required=True, help="Source prompt describing the image.")
@click.option("--out", type=click.Path(file_okay=False), default=".lams-cache",
              help="Trajectory cache directory.")
@with_backend_options
def invert_cmd(image_path, prompt, out, config, backend, steps, seed, guidance,
               inversion_guidance):
    """Run DDIM inversion and report the reconstruction error."""
    try:
        backend_obj, sampler = _backend_from_options(
            config, backend, steps, seed, guidance, inversion_guidance
        )
        store = TrajectoryStore(Path(out))
        image = load_image(image_path)
        z0 = backend_obj.encode(image)
        key = inversion_cache_key(z0, prompt, backend_obj, sampler)
        cached = store.has_inversion(key)
        latents, _ = invert(z0, prompt, backend_obj, sampler, store=store)
        z0_hat = generate_from_inversion(latents, prompt, backend_obj, sampler)
        error = float(np.abs(z0_hat - z0).max())
        recon_path = Path(out) / f"{key[:16]}.recon.png"
        save_image(recon_path, backend_obj.decode(z0_hat))
        if cached:
            click.echo("cache hit: inversion served from cache")
        click.echo(f"cache key: {key}")
        click.echo(f"reconstruction max-abs error: {error:.3e}")
        click.echo(f"reconstruction preview: {recon_path}")
    except click.ClickException:
        raise
    except Exception as exc:
        _runtime_abort(str(exc))


main.add_command(invert_cmd, name="invert")


@main.command()
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Input image (PNG).")
@click.option("--source-prompt", required=True, help="Prompt describing the input.")
@click.option("--target-prompt", required=True, help="Prompt describing the edit.")
@click.option("--mask-prompt", default=None, help="Restrict the edit to this region.")
@click.option("--wa", default=None, help="Attention schedule start,end,until,type.")
@click.option("--wz", default=None, help="Latent schedule start,end,until,type.")
@click.option("--lora", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Style adapter file merged after inversion.")
@click.option("--lora-scale", type=float, default=1.0, help="Adapter merge scale.")
@click.option("--start-iter", type=int, default=0,
              help="Skip the first K denoising iterations (trade-off sweeps).")
@click.option("--edit-config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with full request fields; flags take precedence.")
@click.option("--out", type=click.Path(dir_okay=False), default="edited.png",
              help="Output image path; a .json sidecar lands beside it.")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=".lams-cache")
@with_backend_options
def edit_cmd(image_path, source_prompt, target_prompt, mask_prompt, wa, wz, lora,
             lora_scale, start_iter, edit_config, out, cache_dir, config, backend,
             steps, seed, guidance, inversion_guidance):
    """Edit an image: invert, then denoise with mixing, P2P, and options."""
    file_cfg = {}
    if edit_config is not None:
        file_cfg = json.loads(Path(edit_config).read_text())

    wa_spec = (
        _spec_option(wa, "--wa") if wa is not None
        else SchedulerSpec.from_json(file_cfg["attention_schedule"])
        if "attention_schedule" in file_cfg else SchedulerSpec.default_attention()
    )
    wz_spec = (
        _spec_option(wz, "--wz") if wz is not None
        else SchedulerSpec.from_json(file_cfg["latent_schedule"])
        if "latent_schedule" in file_cfg else SchedulerSpec.default_latent()
    )
    p2p_cfg = P2PConfig.from_json(file_cfg.get("p2p", {}))

    try:
        backend_obj, sampler = _backend_from_options(
            config, backend, steps, seed, guidance, inversion_guidance
        )
        request = EditRequest(
            image=load_image(image_path),
            source_prompt=source_prompt,
            target_prompt=target_prompt,
            mask_prompt=mask_prompt,
            attention_schedule=wa_spec,
            latent_schedule=wz_spec,
            p2p=p2p_cfg,
            sampler=sampler,
            adapter=StyleAdapterRef(ref=lora, scale=lora_scale) if lora else None,
            start_iteration=start_iter,
        )
        seg_client = None
        if mask_prompt:
            from .masking import StubSegmentationClient

            stub_cfg = file_cfg.get("stub_segments")
            if stub_cfg:
                seg_client = StubSegmentationClient({
                    prompt: [(tuple(rect), score) for rect, score in instances]
                    for prompt, instances in stub_cfg.items()
                })
            else:
                _runtime_abort(
                    "mask prompts need a segmentation service; configure one or "
                    "provide stub_segments in --edit-config"
                )
        store = TrajectoryStore(Path(cache_dir))
        result = edit(request, backend_obj, store=store, seg_client=seg_client)

        out = Path(out)
        save_image(out, result.edited_image)
        providers = {"lpips": stub_lpips_provider(), "clip": stub_clip_provider()}
        from .evaluation import compute_metrics

        metrics = compute_metrics(
            request.image, result.edited_image, target_prompt, providers
        )
        sidecar = {
            "content_hash": result.content_hash,
            "metrics": {k: metrics[k] for k in ("lpips", "clip")},
            "providers": metrics["providers"],
            "resolved": {
                "attention_schedule": result.attention_weights.to_json(),
                "latent_schedule": result.latent_weights.to_json(),
                "sampler": sampler.to_json(),
                "p2p": request.p2p.to_json(),
                "start_iteration": start_iter,
            },
        }
        out.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2))
        click.echo(f"edited image: {out}")
        click.echo(f"content hash: {result.content_hash}")
    except click.ClickException:
        raise
    except Exception as exc:
        _runtime_abort(str(exc))


main.add_command(edit_cmd, name="edit")


@main.command()
@click.option("--wa", default=None, help="Attention schedule start,end,until,type.")
@click.option("--wz", default=None, help="Latent schedule start,end,until,type.")
@click.option("--steps", type=int, default=50, help="Schedule length T.")
@click.option("--plot", type=click.Path(dir_okay=False), default=None,
              help="Write a curve image (requires matplotlib).")
def scheduler_preview(wa, wz, steps, plot):
    """Print the realized weight table for a scheduler spec."""
    specs = []
    if wa is not None:
        specs.append(("wA", _spec_option(wa, "--wa")))
    if wz is not None:
        specs.append(("wz", _spec_option(wz, "--wz")))
    if not specs:
        specs = [("wA", SchedulerSpec.default_attention())]
    try:
        tables = []
        for label, spec in specs:
            schedule, table = preview_schedule(spec, steps)
            click.echo(f"{label}: {spec.to_json()}")
            click.echo(table)
            tables.append((label, schedule))
        if plot is not None:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt

            fig, ax = plt.subplots()
            for label, schedule in tables:
                ax.plot(schedule.weights, label=label)
            ax.set_xlabel("denoising iteration")
            ax.set_ylabel("mixing weight")
            ax.legend()
            fig.savefig(plot)
            click.echo(f"curve image: {plot}")
    except ScheduleError as exc:
        raise click.UsageError(str(exc))
    except click.ClickException:
        raise
    except Exception as exc:
        _runtime_abort(str(exc))


main.add_command(scheduler_preview, name="scheduler-preview")


@main.command()
@click.option("--manifest", required=True, type=click.Path(dir_okay=False),
              help="JSONL manifest: image, source_prompt, target_prompt per line.")
@click.option("--sweep", default="0", help="Comma-separated start iterations.")
@click.option("--report", type=click.Path(dir_okay=False), default="report.csv",
              help="Report output path.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=".lams-cache")
@with_backend_options
def eval_cmd(manifest, sweep, report, fmt, cache_dir, config, backend, steps, seed,
             guidance, inversion_guidance):
    """Sweep start iterations over a manifest and report the trade-off."""
    try:
        parsed = load_manifest(manifest)
    except ManifestError as exc:
        raise click.UsageError(str(exc))
    try:
        sweep_values = [int(v) for v in sweep.split(",") if v.strip()]
    except ValueError:
        raise click.UsageError(f"--sweep must be comma-separated integers, got {sweep!r}")
    try:
        backend_obj, sampler = _backend_from_options(
            config, backend, steps, seed, guidance, inversion_guidance
        )
        template = EditRequest(
            image=np.zeros(backend_obj.latent_shape[-2:]),
            source_prompt="placeholder",
            target_prompt="placeholder",
            sampler=sampler,
        )
        providers = {"lpips": stub_lpips_provider(), "clip": stub_clip_provider()}
        store = TrajectoryStore(Path(cache_dir))
        points, _ = run_sweep(
            parsed, template, sweep_values, backend_obj, providers,
            store=store, rows_path=Path(report).with_suffix(".rows.jsonl"),
        )
        emit_report(points, fmt, report)
        click.echo(f"report: {report} ({len(points)} points)")
    except click.ClickException:
        raise
    except Exception as exc:
        _runtime_abort(str(exc))


main.add_command(eval_cmd, name="eval")


@main.command()
@click.option("--port", type=int, default=8000, help="Listen port.")
@click.option("--host", default="127.0.0.1", help="Bind address.")
@click.option("--data-dir", type=click.Path(file_okay=False), default=None,
              help="Run records and artifacts directory (default ./lams-data).")
@click.option("--workers", type=int, default=None, help="Backend worker count.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Service + backend config file (TOML or JSON).")
def serve(port, host, data_dir, workers, config):
    """Start the HTTP job service."""
    try:
        import dataclasses as dc

        import uvicorn

        from .service import create_app, load_service_settings

        settings = load_service_settings(config)
        if data_dir is not None:
            settings = dc.replace(settings, data_dir=Path(data_dir))
        if workers is not None:
            settings = dc.replace(settings, workers=workers)
        app = create_app(settings)
        uvicorn.run(app, host=host, port=port)
    except Exception as exc:
        _runtime_abort(str(exc))


if __name__ == "__main__":
    main()
