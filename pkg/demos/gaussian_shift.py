"""Mean-shifted Gaussian blobs in four dimensions, three classes.

Compares the black box, a distillation-only baseline and the full
divided run, then looks at a single division of the target set.
"""
from beta_dabp import BetaConfig, InProcessBlackBox, gaussian_shift_task, run_beta, run_kd_only, train_source_model
from beta_dabp.diagnostics import ground_truth, noise_ratio
from beta_dabp.division import division_for
from beta_dabp.trainer import TwinNets, warmup

source, target = gaussian_shift_task()
blackbox = InProcessBlackBox(train_source_model(source))
x, truth = target.features, ground_truth(target)
labels = blackbox.predict_hard(x)

cfg = BetaConfig()
twins = warmup(TwinNets(x.shape[1], blackbox.n_classes, cfg), x, labels, cfg)
split, gmm = division_for(twins.net_a, x, labels, cfg.tau, owner="net_a")
easy, hard = split.easy, split.hard
print(f"loss mixture means {gmm.means[0]:.3f} / {gmm.means[1]:.3f}")
print(f"after warm-up: {len(easy)} easy, {len(hard)} hard")
print(f"  label noise easy {noise_ratio(labels[easy], truth[easy]):.3f}")
print(f"  label noise hard {noise_ratio(labels[hard], truth[hard]):.3f}")

for name, run in (("KD-only", run_kd_only), ("divided", run_beta)):
    s = run(cfg, blackbox, target).report.summary
    print(f"{name:8} acc {s['acc_a']:.3f}   (black box {s['source_only_acc']:.3f})")
