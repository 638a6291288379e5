"""LAMS-Edit: tuning-free image editing by mixing DDIM-inversion latent and
attention trajectories into generation under decaying weight schedules."""

from .backend import (
    DiffusionBackend,
    NoiseSchedule,
    PromptEmbedding,
    StyleAdapterRef,
    ToyAffineBackend,
    ddim_invert_step,
    ddim_step,
    load_style_adapter,
    register_style_adapter,
)
from .config import BackendConfig, SamplerConfig, build_backend, load_backend_config
from .evaluation import (
    DatasetManifest,
    MetricProvider,
    TradeoffPoint,
    compute_metrics,
    emit_report,
    load_manifest,
    run_sweep,
    stub_clip_provider,
    stub_lpips_provider,
)
from .inversion import generate_from_inversion, invert, inversion_cache_key
from .masking import (
    HttpSegmentationClient,
    RoiMask,
    StubSegmentationClient,
    segment,
    to_latent_resolution,
)
from .mixing import blend_mask, mix_attention, mix_latent
from .p2p import P2PConfig, TokenMapping, build_token_mapping
from .pipeline import EditRequest, EditResult, StageError, edit, reconstruct
from .schedule import (
    SchedulerSpec,
    WeightSchedule,
    make_schedule,
    parse_compact_spec,
    preview_schedule,
)
from .trajectory import (
    AttentionSnapshot,
    AttentionTrajectory,
    LatentTrajectory,
    SiteDescriptor,
    TrajectoryStore,
)

__version__ = "0.1.0"
