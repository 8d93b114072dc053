"""The six ablation variants on synthetic data, one short run each."""

from tsan import ModelConfig, PretrainConfig, TrainConfig, build_model
from tsan.data import preprocess, synth_generate
from tsan.trainer import ABLATION_VARIANTS, ablation_table, run_ablation

pp = preprocess(synth_generate(1500, 0.5, seed=1), synth_generate(1000, 0.5, seed=2), 5, 2)
base = build_model(ModelConfig(), width=pp.schema.width, n_protocol=pp.schema.n_protocol).config

reports = {v: run_ablation(v, pp.train, pp.validation, pp.test, pp.train_rows, base,
                           TrainConfig(max_epochs=2), PretrainConfig(epochs=1), seed=0)
           for v in ABLATION_VARIANTS}
print(f"{'variant':42s} {'acc':>6s} {'f1':>6s} {'auc':>6s}")
for row in ablation_table(reports):
    print(f"{row['label']:42s} {row['accuracy']:6.3f} {row['f1']:6.3f} {row['auc_roc']:6.3f}")
