"""One forward pass through both encoders, the fusion block and the four heads."""

import numpy as np

from tsan import ModelConfig, build_model
from tsan.data import preprocess, synth_generate

pp = preprocess(synth_generate(600, 0.5, seed=0), None, 5, 2)
model = build_model(ModelConfig(), width=pp.schema.width, n_protocol=pp.schema.n_protocol, seed=0)
print(f"{model.n_parameters():,} trainable parameters in {len(model.params)} tensors")

batch = pp.train.subset(np.arange(8))
out = model.forward(batch.x_temporal, batch.x_spatial)
for name in ("h_temp", "h_spat", "h_combined", "y_main", "y_traffic", "y_protocol", "y_consistency"):
    print(f"{name:14s} {getattr(out, name).shape}")

# Attention rows are probability distributions.
temporal = out.temporal_attention[0]
print("temporal attention", temporal.shape, "row sums", np.unique(temporal.sum(-1).round(6)))
print("fusion attention  ", out.fusion_attention.shape)
print("window 0, head 0:\n", temporal[0, 0].round(3))

# Dropping a component changes the parameter set, not the interface.
for cfg in (ModelConfig(use_temporal=False), ModelConfig(use_spatial=False), ModelConfig(fusion="concat")):
    m = build_model(cfg, width=pp.schema.width, seed=0)
    print(cfg.use_temporal, cfg.use_spatial, cfg.fusion, "->", m.forward(batch.x_temporal, batch.x_spatial).y_main.shape)
