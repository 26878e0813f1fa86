"""Moment-matching domain regularizers and a small domain-adaptation harness."""

from .adaptation import (
    RunResult,
    SweepResult,
    TrainConfig,
    TrainingDiverged,
    default_config,
    fit,
    reverse_cross_validate,
    sensitivity_sweep,
    train,
)
from .discrepancy import (
    DiscrepancySpec,
    DiscrepancyValue,
    central_moments,
    cmd_k,
    cmd_k_grad,
    cmd_term_bound,
    mkl,
    mkl_grad,
    mmd2,
    mmd2_grad,
)
from .network import (
    LayerSpec,
    NetworkState,
    classifier_specs,
    forward,
    init_network,
    load_checkpoint,
    loss_and_grad,
    predict,
    save_checkpoint,
)
from .optim import Adadelta, Adagrad, SGD, make_optimizer
from .samples import (
    Bounds,
    DataFormatError,
    DomainDataset,
    LabeledSample,
    Sample,
    load_dense_csv,
    load_sparse_bow,
    make_synthetic_pair,
    resample_source_balanced,
)

__version__ = "0.1.0"
