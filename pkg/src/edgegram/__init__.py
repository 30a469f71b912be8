"""Skip-gram embedding training as graph edge-operator application,
executed across simulated bulk-synchronous hosts with selectable
synchronization schemes and gradient-combining reduction."""

from .analogy import (
    AccuracyReport,
    AnalogyQuestion,
    QuestionFormatError,
    answer,
    load_questions,
    score,
    write_report_csv,
)
from .combiner import CombineStats, average, gc_fold, gc_pair, orthogonality
from .corpus import (
    EdgeListError,
    WorkList,
    generate_walks,
    load_edge_list,
    partition_worklist,
    read_token_lines,
    read_tokens,
    worklist_from_lines,
    worklist_from_tokens,
    write_walks,
)
from .engine import (
    RoundRecord,
    RunConfig,
    RunMetrics,
    auto_sync_rounds,
    read_manifest,
    run,
    sequential_reference,
    write_manifest,
)
from .model import (
    LearningRateSchedule,
    Model,
    ModelParams,
    Sample,
    edge_gradient,
    init_model,
    load_embeddings,
    make_schedule,
    predict,
    sample_loss,
    save_embeddings,
    sigmoid,
)
from .sync import CombineRule, ProtocolError, SyncScheme, VolumeMeter
from .topology import MasterMap, assign_masters, inspect_round, stream_center_work
from .vocab import (
    EmptyVocabularyError,
    NegativeTable,
    Vocabulary,
    build_negative_table,
    build_vocabulary,
    read_vocabulary,
    write_vocabulary,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyReport",
    "AnalogyQuestion",
    "CombineRule",
    "CombineStats",
    "EdgeListError",
    "EmptyVocabularyError",
    "LearningRateSchedule",
    "MasterMap",
    "Model",
    "ModelParams",
    "NegativeTable",
    "ProtocolError",
    "QuestionFormatError",
    "RoundRecord",
    "RunConfig",
    "RunMetrics",
    "Sample",
    "SyncScheme",
    "Vocabulary",
    "VolumeMeter",
    "WorkList",
    "answer",
    "assign_masters",
    "auto_sync_rounds",
    "average",
    "build_negative_table",
    "build_vocabulary",
    "edge_gradient",
    "gc_fold",
    "gc_pair",
    "generate_walks",
    "init_model",
    "inspect_round",
    "load_edge_list",
    "load_embeddings",
    "load_questions",
    "make_schedule",
    "orthogonality",
    "partition_worklist",
    "predict",
    "read_manifest",
    "read_token_lines",
    "read_tokens",
    "read_vocabulary",
    "run",
    "sample_loss",
    "save_embeddings",
    "score",
    "sequential_reference",
    "sigmoid",
    "stream_center_work",
    "worklist_from_lines",
    "worklist_from_tokens",
    "write_manifest",
    "write_report_csv",
    "write_vocabulary",
    "write_walks",
]
