"""Twin-network adaptation loop: warm-up, distillation, division, cross-trained SSL."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .autodiff import concat
from .blackbox import BlackBoxHandle
from .data import LabeledVectorSet
from .diagnostics import (
    AdaptationReport,
    Discrepancy,
    accuracy,
    bound_terms,
    discrepancy_proxy,
    fit_ideal_hypothesis,
    ground_truth,
    noise_ratio,
)
from .division import SubdomainSplit, division_for
from .losses import (
    adversarial_loss,
    cross_entropy,
    kd_kl,
    mixmatch_terms,
    mutual_info,
    negative_entropy,
    one_hot,
)
from .nn import MlpClassifier, Sgd, backward_and_step
from .refinement import AugmentationPolicy, augment, co_guess_hard, mixup, refine_easy, sharpen

log = logging.getLogger(__name__)


class AdaptationError(RuntimeError):
    """A sub-step failed; ``epoch`` tells where."""

    def __init__(self, epoch: int, cause: Exception):
        super().__init__(epoch, cause)
        self.epoch = epoch
        self.cause = cause

    def __str__(self) -> str:
        return f"adaptation failed at epoch {self.epoch}: {self.cause}"


@dataclass
class BetaConfig:
    """Every knob of the adaptation run. ``epochs`` counts warm-up epochs too.

    ``entropy_weight`` is the warm-up weight on negative entropy: the warm-up
    minimizes ``CE + entropy_weight * sum p log p``, i.e. CE minus an entropy
    bonus, which keeps warm-up losses away from zero.

    The rates suit small MLPs trained for a few hundred steps; with
    ``lr_decay`` every adaptation epoch rescales them by ``(1 + 10 p) ** -0.75``.
    """

    tau: float = 0.8
    gamma: float = 0.1
    mixup_alpha: float = 1.0
    lambda_mse: float = 0.0
    sharpen_T: float = 0.5
    warmup_epochs: int = 3
    epochs: int = 23
    batch_size: int = 64
    lr_body: float = 0.1
    lr_head: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-3
    ema_momentum: float = 0.3
    entropy_weight: float = 0.2
    mi_weight: float = 1.0
    hidden: tuple = (64, 64)
    disc_hidden: int = 16
    sigma_weak: float = 0.05
    sigma_strong: float = 0.2
    dropout: float = 0.0
    views: int = 2
    finetune_epochs: int = 2
    finetune_lr_scale: float = 0.1
    lr_decay: bool = True
    freeze_pseudo_labels: bool = False
    use_adversarial: bool = True
    use_step2: bool = True
    track_bound: bool = True
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        for name in ("lr_body", "lr_head", "batch_size", "sharpen_T", "views", "disc_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1]")
        if not 0 <= self.ema_momentum < 1:
            raise ValueError("ema_momentum must be in [0, 1)")
        if self.warmup_epochs < 0 or self.epochs < self.warmup_epochs:
            raise ValueError("need 0 <= warmup_epochs <= epochs")
        for name in ("gamma", "lambda_mse", "mixup_alpha", "momentum", "weight_decay", "entropy_weight",
                     "mi_weight", "finetune_epochs", "finetune_lr_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden widths must be positive")

    @property
    def adaptation_epochs(self) -> int:
        return self.epochs - self.warmup_epochs

    def policy(self, features: np.ndarray) -> AugmentationPolicy:
        return AugmentationPolicy.for_features(features, self.sigma_weak, self.sigma_strong, self.dropout, self.views)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "BetaConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "BetaConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


# phase tags for RNG streams
_WARMUP, _STEP1, _STEP2, _REFINE, _FINETUNE, _PROBE = range(6)


class TwinNets:
    """Two independently seeded classifiers, their discriminators, optimizers and EMA tables."""

    names = ("net_a", "net_b")

    def __init__(self, n_features: int, n_classes: int, config: BetaConfig):
        seeds = np.random.SeedSequence(config.seed).generate_state(4)
        widths = [n_features, *config.hidden, n_classes]
        self.nets = [MlpClassifier(widths, seed=int(seeds[0])), MlpClassifier(widths, seed=int(seeds[1]))]
        self.discs = [
            MlpClassifier([n_classes, config.disc_hidden, 2], seed=int(seeds[2])),
            MlpClassifier([n_classes, config.disc_hidden, 2], seed=int(seeds[3])),
        ]
        self.opts = [
            Sgd.for_net(n, config.lr_body, config.lr_head, config.momentum, config.weight_decay) for n in self.nets
        ]
        self.disc_opts = [
            Sgd.for_net(d, config.lr_head, config.lr_head, config.momentum, config.weight_decay) for d in self.discs
        ]
        self.ema: list[np.ndarray | None] = [None, None]
        self._base_groups = [list(o.groups) for o in self.opts + self.disc_opts]

    def anneal(self, factor: float) -> None:
        """Set every optimizer's rates to ``factor`` times their initial values."""
        for opt, base in zip(self.opts + self.disc_opts, self._base_groups):
            opt.groups = [(params, lr * factor) for params, lr in base]

    @property
    def net_a(self) -> MlpClassifier:
        return self.nets[0]

    @property
    def net_b(self) -> MlpClassifier:
        return self.nets[1]

    def pseudo_labels(self, i: int) -> np.ndarray:
        return np.argmax(self.ema[i], axis=1)


def lr_factor(progress: float) -> float:
    """Annealing ``(1 + 10 p) ** -0.75`` for training progress ``p`` in [0, 1]."""
    return (1.0 + 10.0 * progress) ** -0.75


def ema_update(table: np.ndarray, fresh: np.ndarray, momentum: float) -> np.ndarray:
    """Convex blend ``m * table + (1 - m) * fresh``, renormalised onto the simplex."""
    if not 0 <= momentum < 1:
        raise ValueError("EMA momentum must be in [0, 1)")
    out = momentum * np.asarray(table, dtype=np.float64) + (1.0 - momentum) * np.asarray(fresh, dtype=np.float64)
    return out / out.sum(axis=1, keepdims=True)


def _batches(n: int, size: int, rng) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[lo : lo + size] for lo in range(0, n, size)]


def warmup(twins: TwinNets, x: np.ndarray, bb_labels: np.ndarray, config: BetaConfig) -> TwinNets:
    """CE on black-box labels plus the entropy penalty, for ``warmup_epochs`` epochs per network."""
    targets = one_hot(bb_labels, twins.net_a.n_classes)
    for epoch in range(config.warmup_epochs):
        for i, (net, opt) in enumerate(zip(twins.nets, twins.opts)):
            rng = _rng(config.seed, _WARMUP, epoch, i)
            for idx in _batches(len(x), config.batch_size, rng):
                logits = net.logits(x[idx])
                loss = cross_entropy(logits, targets[idx]) + negative_entropy(logits) * config.entropy_weight
                backward_and_step(loss, opt)
    return twins


def epoch_step1(twins: TwinNets, x: np.ndarray, config: BetaConfig, epoch: int) -> dict:
    """Distil each network towards its own EMA hard labels while maximising batch mutual information."""
    k = twins.net_a.n_classes
    kd_total, mi_total = 0.0, 0.0
    for i, (net, opt) in enumerate(zip(twins.nets, twins.opts)):
        targets = one_hot(twins.pseudo_labels(i), k)
        rng = _rng(config.seed, _STEP1, epoch, i)
        kd_sum = mi_sum = 0.0
        batches = _batches(len(x), config.batch_size, rng)
        for idx in batches:
            logits = net.logits(x[idx])
            l_kd = kd_kl(targets[idx], logits)
            l_mi = mutual_info(logits)
            backward_and_step(l_kd - l_mi * config.mi_weight, opt)
            kd_sum += l_kd.item()
            mi_sum += l_mi.item()
        if i == 0:
            kd_total, mi_total = kd_sum / len(batches), mi_sum / len(batches)
    return {"l_kd": kd_total, "l_mi": mi_total}


@dataclass
class RefinedSplit:
    """A division with labels refined for one trainee network."""

    split: SubdomainSplit
    easy_targets: np.ndarray
    hard_targets: np.ndarray


def refine_for(trainee: int, snapshots, x, split: SubdomainSplit, config: BetaConfig, policy, rng) -> RefinedSplit:
    """Refined easy labels from the trainee's snapshot, sharpened co-guesses for the hard side."""
    k = snapshots[0].n_classes
    easy_x = x[split.easy]
    easy_t = refine_easy(
        one_hot(split.easy_labels, k), split.clean_prob[split.easy], snapshots[trainee], easy_x, policy, rng
    )
    if len(split.hard):
        hard_t = sharpen(co_guess_hard(snapshots[0], snapshots[1], x[split.hard], policy, rng), config.sharpen_T)
    else:
        hard_t = np.zeros((0, k))
    return RefinedSplit(split, easy_t, hard_t)


def _train_on_split(net, opt, disc, disc_opt, x, refined: RefinedSplit, config, policy, rng) -> dict:
    split = refined.split
    easy_x, hard_x = x[split.easy], x[split.hard]
    n_hard = len(hard_x)
    hard_order = rng.permutation(n_hard) if n_hard else np.zeros(0, dtype=np.int64)
    dd_sum = adv_sum = 0.0
    batches = _batches(len(easy_x), config.batch_size, rng)
    adv_batches = 0
    for b, idx in enumerate(batches):
        if n_hard:
            start = (b * config.batch_size) % n_hard
            hidx = np.take(hard_order, np.arange(start, start + min(config.batch_size, n_hard)), mode="wrap")
        else:
            hidx = np.zeros(0, dtype=np.int64)
        xe = augment(easy_x[idx], "weak", policy, rng)
        ye = refined.easy_targets[idx]
        xh = augment(hard_x[hidx], "strong", policy, rng) if n_hard else np.zeros((0, x.shape[1]))
        yh = refined.hard_targets[hidx]
        pool_x, pool_y = np.vstack([xe, xh]), np.vstack([ye, yh])
        me = mixup(xe, ye, pool_x, pool_y, config.mixup_alpha, rng)
        le = net.logits(me.features)
        if n_hard:
            mh = mixup(xh, yh, pool_x, pool_y, config.mixup_alpha, rng)
            lh = net.logits(mh.features)
            hard_targets = mh.targets
        else:
            lh, hard_targets = np.zeros((0, net.n_classes)), np.zeros((0, net.n_classes))
        terms = mixmatch_terms(le, me.targets, lh, hard_targets, config.lambda_mse)
        l_dd = terms["ce"] + terms["mse"] + terms["reg"]
        loss = l_dd
        optimizers = [opt]
        if config.use_adversarial and n_hard:
            # GRL between classifier output and discriminator: the discriminator
            # ascends l_adv, the classifier receives -gamma times that gradient
            probs = concat([le, lh]).softmax().grad_reverse(config.gamma)
            ne = le.data.shape[0]
            l_adv = adversarial_loss(disc, probs[:ne], probs[ne:])
            loss = l_dd - l_adv
            optimizers.append(disc_opt)
            adv_sum += l_adv.item()
            adv_batches += 1
        backward_and_step(loss, *optimizers)
        dd_sum += l_dd.item()
    return {"l_dd": dd_sum / len(batches), "l_adv": adv_sum / adv_batches if adv_batches else None}


def epoch_step2(twins: TwinNets, x: np.ndarray, refined: list[RefinedSplit], config: BetaConfig, epoch: int) -> dict:
    """Network i trains on ``refined[i]``, which must come from the other network's division."""
    policy = config.policy(x)
    out = {}
    for i in range(2):
        owner = refined[i].split.owner
        if owner and owner == TwinNets.names[i]:
            raise ValueError(f"{TwinNets.names[i]} cannot train on its own division")
        rng = _rng(config.seed, _STEP2, epoch, i)
        stats = _train_on_split(
            twins.nets[i], twins.opts[i], twins.discs[i], twins.disc_opts[i], x, refined[i], config, policy, rng
        )
        if i == 0:
            out = stats
    return out


def divide_and_refine(twins: TwinNets, x: np.ndarray, config: BetaConfig, epoch: int):
    """Per-network division, then cross-wiring: net_a gets net_b's split and vice versa.

    Each network's losses are taken against its own EMA pseudo labels, which
    start as the black-box labels.
    """
    splits = [
        division_for(twins.nets[i], x, twins.pseudo_labels(i), config.tau, TwinNets.names[i])[0] for i in range(2)
    ]
    snapshots = [n.copy() for n in twins.nets]
    policy = config.policy(x)
    refined = []
    for i in range(2):
        rng = _rng(config.seed, _REFINE, epoch, i)
        refined.append(refine_for(i, snapshots, x, splits[1 - i], config, policy, rng))
    return splits, refined


def finetune_mi(twins: TwinNets, x: np.ndarray, config: BetaConfig) -> None:
    """A few epochs maximising mutual information alone at a reduced learning rate."""
    for i, net in enumerate(twins.nets):
        opt = Sgd.for_net(
            net,
            config.lr_body * config.finetune_lr_scale,
            config.lr_head * config.finetune_lr_scale,
            config.momentum,
            config.weight_decay,
        )
        for epoch in range(config.finetune_epochs):
            rng = _rng(config.seed, _FINETUNE, epoch, i)
            for idx in _batches(len(x), config.batch_size, rng):
                backward_and_step(-mutual_info(net.logits(x[idx])), opt)


def _row(epoch, truth, twins, x, refined: RefinedSplit | None, step1=None, step2=None, bound=None) -> dict:
    row = {c: None for c in ("l_kd", "l_mi", "l_dd", "l_adv", "rho_e", "rho_h", "acc_a", "acc_b", "bound_lhs", "bound_rhs")}
    row["epoch"] = epoch
    row.update(step1 or {})
    row.update(step2 or {})
    if truth is not None:
        row["acc_a"] = accuracy(twins.net_a.predict(x), truth)
        row["acc_b"] = accuracy(twins.net_b.predict(x), truth)
        if refined is not None:
            s = refined.split
            row["rho_e"] = noise_ratio(refined.easy_targets, truth[s.easy])
            row["rho_h"] = noise_ratio(refined.hard_targets, truth[s.hard])
    if bound is not None:
        row["bound_lhs"], row["bound_rhs"] = bound.lhs, bound.rhs
    return row


ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def _bound_for(twins, x, refined: RefinedSplit, truth, h_star, seed, epoch, alphas=None):
    """Bound terms for net_a on the split it trains on; alpha defaults to the easy fraction."""
    s = refined.split
    if len(s.easy) and len(s.hard):
        disc = discrepancy_proxy(x[s.easy], x[s.hard], seed=int(_rng(seed, _PROBE, epoch).integers(2**31)))
    else:
        disc = Discrepancy(0.0, 0.5, True)
    grid = [len(s.easy) / s.n] if alphas is None else alphas
    out = bound_terms(
        twins.net_a.predict(x), h_star.predict(x), s.easy, s.hard, refined.easy_targets, refined.hard_targets,
        truth, disc.d, grid,
    )
    return out[0] if alphas is None else out


@dataclass
class BetaResult:
    twins: TwinNets
    report: AdaptationReport
    blackbox_labels: np.ndarray
    bound_estimates: list = field(default_factory=list)

    @property
    def net_a(self) -> MlpClassifier:
        return self.twins.net_a

    @property
    def net_b(self) -> MlpClassifier:
        return self.twins.net_b


def run_beta(config: BetaConfig, blackbox: BlackBoxHandle, target: LabeledVectorSet) -> BetaResult:
    """Full pipeline; the black box is queried exactly once, for every target row."""
    x = target.features
    if x.shape[1] != blackbox.n_features:
        raise ValueError(f"dimension error: target has {x.shape[1]} features, black box expects {blackbox.n_features}")
    k = blackbox.n_classes
    bb_labels = blackbox.predict_hard(x)
    truth = ground_truth(target)
    twins = TwinNets(x.shape[1], k, config)
    report = AdaptationReport()
    try:
        warmup(twins, x, bb_labels, config)
    except Exception as e:
        raise AdaptationError(0, e) from e
    start = one_hot(bb_labels, k)
    twins.ema = [start.copy(), start.copy()]

    h_star = refined = None
    if truth is not None and config.track_bound and config.adaptation_epochs:
        h_star = fit_ideal_hypothesis(x, truth, hidden=config.hidden, seed=config.seed)

    epoch = config.warmup_epochs
    if config.adaptation_epochs:
        try:
            _, refined = divide_and_refine(twins, x, config, epoch)
        except Exception as e:
            raise AdaptationError(epoch, e) from e
        bound = _bound_for(twins, x, refined[0], truth, h_star, config.seed, epoch) if h_star else None
        report.rows.append(_row(epoch, truth, twins, x, refined[0], bound=bound))
    else:
        report.rows.append(_row(epoch, truth, twins, x, None))

    for epoch in range(config.warmup_epochs + 1, config.epochs + 1):
        try:
            if config.lr_decay:
                twins.anneal(lr_factor((epoch - config.warmup_epochs - 1) / config.adaptation_epochs))
            if not config.freeze_pseudo_labels:
                twins.ema = [ema_update(twins.ema[i], twins.nets[i].predict_proba(x), config.ema_momentum) for i in range(2)]
            s1 = epoch_step1(twins, x, config, epoch)
            s2 = None
            refined = None
            if config.use_step2:
                _, refined = divide_and_refine(twins, x, config, epoch)
                s2 = epoch_step2(twins, x, refined, config, epoch)
        except Exception as e:
            raise AdaptationError(epoch, e) from e
        bound = _bound_for(twins, x, refined[0], truth, h_star, config.seed, epoch) if (h_star and refined) else None
        report.rows.append(_row(epoch, truth, twins, x, refined[0] if refined else None, s1, s2, bound))

    estimates = []
    if config.adaptation_epochs:
        finetune_mi(twins, x, config)
        if h_star is not None and refined is not None:
            estimates = _bound_for(twins, x, refined[0], truth, h_star, config.seed, config.epochs + 1, ALPHA_GRID)

    summary = {
        "adaptation_epochs": config.adaptation_epochs,
        "queries": int(blackbox.query_count),
        "config": config.to_dict(),
        "headline": "acc_a",
    }
    if truth is not None:
        summary["acc_a"] = accuracy(twins.net_a.predict(x), truth)
        summary["acc_b"] = accuracy(twins.net_b.predict(x), truth)
        summary["source_only_acc"] = accuracy(bb_labels, truth)
    else:
        summary["acc_a"] = summary["acc_b"] = summary["source_only_acc"] = None
    report.summary = summary
    return BetaResult(twins, report, bb_labels, estimates)


def source_only_accuracy(blackbox: BlackBoxHandle, target: LabeledVectorSet) -> float:
    truth = ground_truth(target)
    if truth is None:
        raise ValueError("target set has no ground truth")
    return accuracy(blackbox.predict_hard(target.features), truth)


def run_kd_only(config: BetaConfig, blackbox: BlackBoxHandle, target: LabeledVectorSet) -> BetaResult:
    """Baseline with the same budget: warm-up, then distillation epochs without division or step 2."""
    cfg = BetaConfig.from_dict({**config.to_dict(), "use_step2": False, "track_bound": False})
    return run_beta(cfg, blackbox, target)
