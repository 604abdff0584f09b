"""
Reject Option Classification
============================

Post-process scores so that, near the decision threshold, women receive the
favorable label and men the unfavorable one. The threshold and band width
are chosen on the validation split to maximize accuracy while keeping the
risk difference at or below 0.05.
"""

from pathlib import Path

from dpfair import (
    FairnessThresholds,
    SplitSpec,
    TrainConfig,
    accuracy,
    apply_roc,
    fit_roc,
    load_adult,
    predict_proba,
    risk_difference,
    train,
)

DATA = Path(__file__).resolve().parents[1] / "data" / "adult"
ds = load_adult(DATA, SplitSpec())
tr, va, te = ds.subset("train"), ds.subset("validation"), ds.subset("test")
params = train(tr, TrainConfig(epochs=5, shuffle_seed=2, weight_init_seed=2))

p_te = predict_proba(params, te)
plain = (p_te >= 0.5).astype(int)
th = FairnessThresholds()
rd = risk_difference(plain, te.protected)
print(f"thresholded: accuracy {accuracy(plain, te.labels):.4f}, RD {rd:.4f} -> {th.verdict(rd)}")

policy = fit_roc(predict_proba(params, va), va.labels, va.protected, rd_bound=0.05)
print(policy.to_text(), end="")

fair = apply_roc(p_te, te.protected, policy)
rd = risk_difference(fair, te.protected)
print(f"post-processed: accuracy {accuracy(fair, te.labels):.4f}, RD {rd:.4f} -> {th.verdict(rd)}")
print(f"labels changed on {(fair != plain).mean():.1%} of test rows")
