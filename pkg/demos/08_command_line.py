"""The `tsan` command chain, driven in-process from a scratch directory."""

import json
import os
import tempfile
from pathlib import Path

from tsan.cli import main

os.chdir(tempfile.mkdtemp())
Path("cfg.json").write_text(json.dumps({"data": {"train_path": "train.txt", "test_path": "test.txt"}}))

steps = [
    "synth-data --n 2000 --seed 1 --out train.txt",
    "synth-data --n 2000 --seed 2 --out test.txt",
    "preprocess --config cfg.json --out data",
    "pretrain --config cfg.json --data data --out pre",
    "train --config cfg.json --data data --from-pretrained pre/pretrained.tsan --out run",
    "evaluate --checkpoint run/model.tsan --data data --out eval",
    "predict --checkpoint run/model.tsan --input test.txt --out pred",
    "gradcheck --config cfg.json --data data --checkpoint run/model.tsan --out gc",
]
for step in steps:
    print("$ tsan", step)
    code = main(step.split())
    assert code == 0, (step, code)

print(Path("pred/predictions.csv").read_text().splitlines()[:4])
print(sorted(p.name for p in Path("run").iterdir()))
