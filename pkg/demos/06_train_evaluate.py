"""Supervised training with early stopping, then a full metrics report."""

from tsan import ModelConfig, PretrainConfig, TrainConfig
from tsan.data import preprocess, synth_generate
from tsan.metrics import measure_timing
from tsan.trainer import fit

pp = preprocess(synth_generate(2000, 0.5, seed=1), synth_generate(2000, 0.5, seed=2), 5, 2)
outcome = fit(ModelConfig(), pp.train, pp.validation, pp.train_rows, TrainConfig(), PretrainConfig(), seed=0,
              test_ds=pp.test)

for row in outcome.result.history:
    print(f"epoch {row['epoch']}  l_total {row['l_total']:.4f}  val acc {row['val_accuracy']:.4f}")
print("best epoch:", outcome.result.best_epoch)

r = outcome.report
print(f"test accuracy {r.accuracy:.4f}  precision {r.precision:.4f}  recall {r.recall:.4f}  "
      f"f1 {r.f1:.4f}  AUC {r.auc_roc:.4f}")
print("confusion: tp", r.tp, "fp", r.fp, "tn", r.tn, "fn", r.fn)
print("ROC vertices:", len(r.roc_points))

timing = measure_timing(outcome.model, pp.test.x_temporal, pp.test.x_spatial, repetitions=3)
print(f"inference {timing.inference_ms_per_sample:.4f} ms/window, training {r.timing.train_seconds:.1f} s")
print("decisions at theta=0.5 on five windows:",
      (outcome.model.predict_proba(pp.test.x_temporal[:5], pp.test.x_spatial[:5]) > 0.5).astype(int),
      "labels:", pp.test.y[:5].astype(int))
