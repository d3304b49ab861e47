"""Representation-cone analysis for task-incremental learning.

Fits minimal enclosing cones to labeled embedding sets, trains a small
encoder/decoder stack over task streams with sparse episodic replay,
probes frozen encoders with freshly trained decoders, and measures how
class cones rotate relative to their decoder columns across replay
events.
"""

from .embstore import ClassView, EmbeddingSet, load_embeddings, save_embeddings, split_by_class
from .errors import (
    CheckpointError,
    CorruptFileError,
    DimensionError,
    EmptySetError,
    FormatError,
    MissingLabelsError,
    NonFiniteGradientError,
    RepconeError,
    ScenarioError,
    UndefinedCorrelationError,
    ValidationError,
)
from .geometry import (
    Cone,
    ConeFitConfig,
    CosineHistogram,
    cone_membership,
    cone_report,
    cosine_pair_distribution,
    fit_cone,
    histogram_csv,
    load_cone_report,
    relative_position,
    save_cone,
)
from .learner import (
    AdamState,
    DecoderParams,
    EncoderParams,
    Model,
    SpanDecoderParams,
    encode,
    init_decoder,
    init_encoder,
    init_span_decoder,
    load_checkpoint,
    save_checkpoint,
)
from .metrics import (
    NeighborhoodIndex,
    RotationReport,
    TopoReport,
    decoder_drift,
    knn_index,
    pearson,
    rotation_delta,
    topo_pearson,
)
from .probe import (
    ProbeConfig,
    ProbeTimeline,
    SpanExample,
    SpanTask,
    evaluate_probe,
    probe_timeline,
    train_probe,
)
from .replay import (
    CheckpointPlan,
    MemoryBuffer,
    ReplaySchedule,
    RunLog,
    StoredExample,
    checkpoint_batches,
    draw_replay_batch,
    replay_quota,
    sequential_train,
)
from .synth import (
    CapSpec,
    GroundTruthCone,
    ScenarioSpec,
    TwoTaskScenario,
    build_scenario,
    random_rotation,
    rotate_set,
    rotation_in_plane,
    sample_cap,
    spread_axes,
    two_task_scenario,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
