"""exitstream: streaming early-exit video classification.

Causal 3D layers (front-replicated temporal padding), a cumulative-mean
classification head, an exact exit-time calculus over probability traces,
earliness-penalized training losses, and a constant-per-frame streaming
evaluator that reproduces offline results on every prefix.
"""

from .bench import (
    SweepPoint,
    SyntheticDataset,
    SyntheticDatasetConfig,
    evaluate_head,
    initial_head,
    make_synthetic_dataset,
    pareto_front,
    sweep_lambda,
    train_head,
)
from .errors import (
    BadMagicError,
    ConfigError,
    DataError,
    DuplicateNameError,
    EngineError,
    FormatError,
    NoReportYet,
    NonFiniteDataError,
    SpecParseError,
    TrainingError,
    TruncatedPayloadError,
    UsageError,
    VersionError,
)
from .exits import (
    EPS_GUARD,
    ExitAccumulator,
    ExitReport,
    decide,
    exit_distribution,
    exit_time,
    net,
    positive_prob,
    predicted_class_trace,
)
from .formats import (
    bind_weights,
    collect_weights,
    load_clip,
    load_model,
    load_spec,
    load_weights,
    save_clip,
    save_model,
    save_spec,
    save_weights,
)
from .head import (
    BINARY,
    MULTICLASS,
    HeadSpec,
    ProbTrace,
    cumulative_mean,
    head_probabilities,
)
from .layers import (
    ActivationSpec,
    CausalBatchNormSpec,
    CausalConvSpec,
    CausalPoolSpec,
    NetworkSpec,
    activation,
    causal_batchnorm,
    causal_conv3d,
    causal_pool3d,
    latest_input_index,
    offline_forward,
    temporal_output_len,
)
from .losses import LossConfig, loss_binary, loss_grad, loss_multiclass
from .stream import (
    StreamState,
    naive_forward_per_frame,
    stream_init,
    stream_push,
    stream_report,
)

__version__ = "0.1.0"
