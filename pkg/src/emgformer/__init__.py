"""Dual-path transformer pipeline for sparse multichannel sEMG gesture recognition."""

from .tensor import Tensor, use_dtype, no_grad
from .optim import Adam, AdamState
from .checkpoint import save_checkpoint, load_checkpoint
from .preprocess import (
    FilterSpec,
    MuLawParams,
    PipelineConfig,
    Segment,
    design_butterworth_lowpass,
    filter_bank,
    fit_mu_law,
    mu_law_normalize,
    segment_windows,
)
from .dataset import (
    RecordingSession,
    SplitPlan,
    load_canonical,
    make_split,
    save_canonical,
    synth_dataset,
)
from .embedding import EmbeddingParams, PatchScheme, embed, make_patches
from .encoder import EncoderLayerParams, encoder_forward, msa, self_attention
from .model import (
    LossBundle,
    ModelConfig,
    ModelParams,
    count_parameters,
    forward,
    init_params,
    loss,
)
from .harness import (
    MetricsReport,
    RunManifest,
    aggregate,
    evaluate,
    position_similarity,
    run_training,
    train_subject,
    wilcoxon_signed_rank,
)

__version__ = "0.1.0"
