"""Auxiliary targets and the weighted multi-task loss."""

import numpy as np

from tsan import LossWeights, ModelConfig, build_model
from tsan.autodiff import Tape
from tsan.data import preprocess, synth_generate
from tsan.objective import build_aux_targets, compute_losses

pp = preprocess(synth_generate(600, 0.5, seed=0), None, 5, 2)
ds = pp.train.subset(np.arange(32))

# Half the windows get their rows permuted and consistency label 0.
augmented, aux = build_aux_targets(ds, pp.schema.n_protocol, shuffle_fraction=0.5, rng=np.random.default_rng(0))
print("shuffled windows:", int(aux.shuffle_mask.sum()), "of", len(ds))
print("traffic targets (window mean of scaled count):", aux.y_traffic[:4].round(3))
print("protocol targets (last record, one-hot):\n", aux.y_protocol[:4])

model = build_model(ModelConfig(), width=pp.schema.width, n_protocol=pp.schema.n_protocol, seed=0)
for weights in (LossWeights(), LossWeights().without_auxiliary()):
    with Tape() as tape:
        out = model.forward(augmented.x_temporal, augmented.x_spatial)
        losses = compute_losses(out, augmented.y, aux, weights)
    tape.backward(losses.l_total, model.parameters())
    print(weights)
    print("  ", {k: round(v, 4) for k, v in losses.values().items()})
    print("   |grad heads.traffic.w| =", float(np.abs(model["heads.traffic.w"].grad).sum()))
