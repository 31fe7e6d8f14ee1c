"""Exception hierarchy shared across the package.

Every error carries a short ``code`` so the CLI can emit a structured error
object without string matching.
"""


class RDLError(Exception):
    code = "rdl_error"


# schema / inference
class SchemaError(RDLError):
    code = "schema_error"


class EmptySample(SchemaError):
    code = "empty_sample"


# ingestion
class IngestError(RDLError):
    code = "ingest_error"


class MissingTableFile(IngestError):
    code = "missing_table_file"


class DescriptorParseError(IngestError):
    code = "descriptor_parse_error"


class ArityMismatch(IngestError):
    code = "arity_mismatch"


class FileNotDatabase(IngestError):
    code = "file_not_database"


# graph
class GraphError(RDLError):
    code = "graph_error"


class DanglingReference(GraphError):
    code = "dangling_reference"


class MissingTimeColumn(GraphError):
    code = "missing_time_column"


class SnapshotFormatError(GraphError):
    code = "snapshot_format_error"


# tasks
class TaskError(RDLError):
    code = "task_error"


class TargetIsKey(TaskError):
    code = "target_is_key"


class AllTargetsNull(TaskError):
    code = "all_targets_null"


class NothingMaskable(TaskError):
    code = "nothing_maskable"


class BadRatios(TaskError):
    code = "bad_ratios"


class MissingTimestamps(TaskError):
    code = "missing_timestamps"


# sampling
class UnknownSeed(RDLError):
    code = "unknown_seed"


# encoders / models
class EmptyTrainSplit(RDLError):
    code = "empty_train_split"


class ShapeMismatch(RDLError):
    code = "shape_mismatch"


class LabelOutOfRange(RDLError):
    code = "label_out_of_range"


class CheckpointFormatError(RDLError):
    code = "checkpoint_format_error"


# metrics
class SingleClass(RDLError):
    code = "single_class"


class BadClassIndex(RDLError):
    code = "bad_class_index"


# flattening / synth
class TargetMissing(RDLError):
    code = "target_missing"


class BadSpec(RDLError):
    code = "bad_spec"


class ConfigError(RDLError):
    code = "config_error"
