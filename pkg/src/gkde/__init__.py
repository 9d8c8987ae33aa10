"""GKDE: online class-incremental learning with per-class kernel density
estimates over frozen per-task embeddings."""

from .errors import (
    BankFormatError,
    BankVersionError,
    ConfigError,
    ContractError,
    DomainError,
    PlacementError,
    ShapeError,
)
from .kde import ClassPdf, KernelSpec, log_density_matrix, log_pdf_density, pdf_density
from .model_bank import ModelBank, Prediction, TaskEntry, load, save
from .network import AdamState, NetworkParams, adam_step, embed, init_network
from .objective import LossConfig, gkde_loss
from .pdf_builder import build_class_pdf, build_task_pdfs, estimate_priors, generate_anchors
from .stream import (
    TaskStream,
    TrainConfig,
    average_accuracy,
    average_forgetting,
    evaluate_stream,
    synth_blobs,
    train_stream,
)

__version__ = "0.1.0"
