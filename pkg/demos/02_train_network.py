"""
Training the 6-6-1 network
==========================

A small ReLU network trained with Adam on minibatches of 20. The loss is
tracked per epoch, and the same model is then trained again under
per-example clipping and Gaussian noise.
"""

from pathlib import Path

import numpy as np

from dpfair import PrivacySpec, SplitSpec, TrainConfig, accuracy, load_adult, predict_proba, train

DATA = Path(__file__).resolve().parents[1] / "data" / "adult"
ds = load_adult(DATA, SplitSpec())
tr, te = ds.subset("train"), ds.subset("test")

cfg = TrainConfig(epochs=5, shuffle_seed=1, weight_init_seed=1)

history = []
params = train(tr, cfg, history=history)
print("epoch losses:", " ".join(f"{h:.4f}" for h in history))

p = predict_proba(params, te)
print(f"plain test accuracy {accuracy((p >= 0.5).astype(int), te.labels):.4f}")

# with a calibrated noise multiplier for epsilon=1, delta=1e-5
spec = PrivacySpec.for_training(1.0, 1e-5, len(tr), epochs=cfg.epochs)
print(f"noise multiplier {spec.noise_multiplier:.4f}, achieved epsilon {spec.achieved_epsilon:.4f}")
private = train(tr, cfg, privacy=spec, noise_seed=3)
p = predict_proba(private, te)
print(f"private test accuracy {accuracy((p >= 0.5).astype(int), te.labels):.4f}")

# no noise and no clipping reproduces plain training exactly
same = train(tr, cfg, privacy=PrivacySpec(1.0, 1e-5, clip_norm=np.inf), noise_seed=3)
print("degenerate private run identical:", np.array_equal(same.flat, params.flat))
