"""NSL-KDD loading, encoding and windowing."""

from .nslkdd import (
    DOS_LABELS,
    FEATURE_NAMES,
    NUMERIC_NAMES,
    FeatureSchema,
    LabeledRecords,
    RawRecord,
    ScalerStats,
    apply_scaler,
    binarize_labels,
    binary_label,
    encode_records,
    fit_scaler,
    parse_records,
    write_records,
)
from .pipeline import EncodedSplit, encode_split, preprocess
from .synth import synth_generate
from .windows import (
    SplitSpec,
    WindowedDataset,
    build_windows,
    load_dataset,
    next_step_targets,
    save_dataset,
    stratified_split,
    window_indices,
)
