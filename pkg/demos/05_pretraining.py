"""Self-supervised encoder pretraining and weight transfer."""

import numpy as np

from tsan import ModelConfig, PretrainConfig, build_model
from tsan.data import preprocess, synth_generate
from tsan.pretrain import pretrain, transfer_weights

pp = preprocess(synth_generate(1500, 0.5, seed=1), None, 5, 2)
model = build_model(ModelConfig(), width=pp.schema.width, n_protocol=pp.schema.n_protocol, seed=0)

# Temporal encoder: predict the row after each window. Spatial encoder: reconstruct its input.
result = pretrain(model, pp.train, pp.train_rows, PretrainConfig(epochs=3), seed=0)
for name, curve in result.history.items():
    print(f"{name:8s} MSE per epoch:", [round(v, 4) for v in curve])

heads_before = model["heads.main.w"].data.copy()
manifest = transfer_weights(result, model)
print(f"transferred {len(manifest)} encoder entries, e.g. {manifest[:3]}")
print("head weights untouched:", np.array_equal(heads_before, model["heads.main.w"].data))
