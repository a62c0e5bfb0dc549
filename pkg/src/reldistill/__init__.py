"""Cross-modal representation distillation toolkit.

Losses over paired feature matrices, hypersphere representation-quality
metrics, a deterministic unit-sphere distillation testbed, and portable
file formats for auditing externally produced embeddings.
"""

from . import embed_io, errors, gradcheck, losses, metrics, mlp, numerics, records, toy
from .losses import (
    LOSS_KINDS,
    ContrastiveConfig,
    LossResult,
    contrastive_loss,
    cross_modal_loss,
    evaluate_loss,
    intra_modal_loss,
    relational_loss,
    similarity_loss,
    superpool,
)
from .metrics import MetricReport, modality_gap, tolerance, uniformity
from .numerics import gram, normalize_rows, normalize_rows_backward
from .records import Checkpoint, RunRecord
from .toy import SphereDataset, ToyConfig, make_cluster_targets, run_toy, sample_uniform_sphere

__version__ = "0.1.0"

__all__ = [
    "LOSS_KINDS",
    "Checkpoint",
    "ContrastiveConfig",
    "LossResult",
    "MetricReport",
    "RunRecord",
    "SphereDataset",
    "ToyConfig",
    "contrastive_loss",
    "cross_modal_loss",
    "embed_io",
    "errors",
    "evaluate_loss",
    "gradcheck",
    "gram",
    "intra_modal_loss",
    "losses",
    "make_cluster_targets",
    "metrics",
    "mlp",
    "modality_gap",
    "normalize_rows",
    "normalize_rows_backward",
    "numerics",
    "records",
    "relational_loss",
    "run_toy",
    "sample_uniform_sphere",
    "similarity_loss",
    "superpool",
    "tolerance",
    "toy",
    "uniformity",
]
