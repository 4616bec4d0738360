"""Adapting a two-moons classifier to a rotated target through hard labels only.

Run with ``python3 demos/two_moons_walkthrough.py``. Takes a few seconds.
"""
import numpy as np

from beta_dabp import BetaConfig, InProcessBlackBox, run_beta, run_kd_only, train_source_model, two_moons_task
from beta_dabp.diagnostics import ground_truth, noise_ratio

# Source moons are upright; the target set is the same shape rotated by 30 degrees.
source, target = two_moons_task()
print(f"source {source.features.shape}, target {target.features.shape}")

# The vendor trains a model on the source and exposes only argmax labels.
blackbox = InProcessBlackBox(train_source_model(source))
truth = ground_truth(target)
result = run_beta(BetaConfig(), blackbox, target)
labels = result.blackbox_labels
print(f"black-box labels are wrong on {noise_ratio(labels, truth):.1%} of the target")
rows = result.report.rows

# Each row tracks how noisy the easy and hard pseudo labels are.
print("\nepoch  rho_e  rho_h  acc_a")
for r in rows[::4]:
    print(f"{r['epoch']:>5}  {r['rho_e']:.3f}  {r['rho_h']:.3f}  {r['acc_a']:.3f}")

kd = run_kd_only(BetaConfig(), blackbox, target)
s = result.report.summary
print(f"\nsource-only {s['source_only_acc']:.3f}")
print(f"KD-only     {kd.report.summary['acc_a']:.3f}")
print(f"divided     {s['acc_a']:.3f}  (net_b {s['acc_b']:.3f})")
print(f"black-box queries during the divided run: {s['queries']}")

# Where did the adapted net still disagree with the black box?
fixed = np.flatnonzero((labels != truth) & (result.net_a.predict(target.features) == truth))
print(f"{len(fixed)} target points relabeled correctly after adaptation")
