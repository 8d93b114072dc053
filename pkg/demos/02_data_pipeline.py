"""From NSL-KDD-format text to windowed, scaled, stratified datasets."""

import tempfile
from pathlib import Path

import numpy as np

from tsan.data import (
    SplitSpec,
    binarize_labels,
    parse_records,
    preprocess,
    save_dataset,
    load_dataset,
    synth_generate,
    window_indices,
    write_records,
)

workdir = Path(tempfile.mkdtemp())

# Synthetic records share the 43-field layout of the real files.
write_records(workdir / "train.txt", synth_generate(1500, dos_fraction=0.5, seed=1))
write_records(workdir / "test.txt", synth_generate(800, dos_fraction=0.5, seed=2))
train_records = parse_records(workdir / "train.txt")
test_records = parse_records(workdir / "test.txt")
print(train_records[0])

# Only DoS families and normal traffic are kept; everything else is dropped.
kept = binarize_labels(train_records)
print(f"kept {len(kept)} of {len(train_records)} records, DoS share {kept.labels.mean():.2f}")

# Windows end at i = w-1, w-1+s, ... ; with w=5, s=2 on ten rows that is 4, 6, 8.
print("window ends for n=10, w=5, s=2:", window_indices(10, 5, 2).tolist())

pp = preprocess(train_records, test_records, w=5, s=2, split=SplitSpec(0.2, stratified=True, seed=0))
print("encoded width f =", pp.schema.width)
print("x_temporal:", pp.train.x_temporal.shape, " x_spatial:", pp.train.x_spatial.shape)
print("train classes:", pp.train.class_counts(), " validation classes:", pp.validation.class_counts())

# The spatial view is the last row of each temporal window.
assert np.array_equal(pp.train.x_spatial, pp.train.x_temporal[:, -1, :])

size = save_dataset(workdir / "train.tsan", pp.train)
back = load_dataset(workdir / "train.tsan")
print(f"container: {size} bytes, round trip equal = {np.array_equal(back.x_temporal, pp.train.x_temporal)}")
