"""Augmentation, easy-label refinement, hard-label co-guessing, sharpening and Mixup."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AugmentationPolicy:
    """Vector-space stand-ins for weak and strong image augmentation.

    weak:   x + N(0, sigma_weak^2)
    strong: (x + N(0, sigma_strong^2)) with each feature zeroed with
            probability ``dropout``, then scaled by U[scale_lo, scale_hi].
    """

    sigma_weak: float = 0.05
    sigma_strong: float = 0.2
    dropout: float = 0.1
    scale_lo: float = 0.8
    scale_hi: float = 1.2
    views: int = 2

    def __post_init__(self):
        if not (0 <= self.sigma_weak < self.sigma_strong):
            raise ValueError("need 0 <= sigma_weak < sigma_strong")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.views < 1:
            raise ValueError("need at least one view")

    @classmethod
    def for_features(cls, features: np.ndarray, weak=0.05, strong=0.2, dropout=0.1, views=2):
        """Jitter scales relative to the mean per-feature standard deviation."""
        sd = float(np.asarray(features).std(axis=0).mean()) or 1.0
        return cls(weak * sd, strong * sd, dropout, views=views)


def augment(x: np.ndarray, kind: str, policy: AugmentationPolicy, rng) -> np.ndarray:
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=np.float64)
    if kind == "weak":
        if policy.sigma_weak == 0:
            return x.copy()
        return x + rng.normal(0.0, policy.sigma_weak, x.shape)
    if kind != "strong":
        raise ValueError(f"unknown augmentation kind {kind!r}")
    out = x + rng.normal(0.0, policy.sigma_strong, x.shape)
    out = out * (rng.random(x.shape) >= policy.dropout)
    scale = rng.uniform(policy.scale_lo, policy.scale_hi, (x.shape[0], 1) if x.ndim == 2 else ())
    return out * scale


def _view_kind(m: int) -> str:
    return "weak" if m % 2 == 0 else "strong"


def mean_view_prediction(net, x, policy, rng, kinds=None) -> np.ndarray:
    views = policy.views
    kinds = kinds or [_view_kind(m) for m in range(views)]
    return sum(net.predict_proba(augment(x, k, policy, rng)) for k in kinds) / len(kinds)


def refine_easy(labels_onehot, clean_prob, net, x, policy: AugmentationPolicy, rng) -> np.ndarray:
    """rho * y + (1 - rho) * mean prediction of ``net`` over alternating weak/strong views."""
    y = np.asarray(labels_onehot, dtype=np.float64)
    rho = np.asarray(clean_prob, dtype=np.float64)[:, None]
    if len(y) == 0:
        return y.copy()
    avg = mean_view_prediction(net, x, policy, rng)
    return rho * y + (1.0 - rho) * avg


def co_guess_hard(net_a, net_b, x, policy: AugmentationPolicy, rng) -> np.ndarray:
    """Average of both networks' predictions over ``views`` weak views each."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return np.zeros((0, net_a.n_classes))
    total = np.zeros((len(x), net_a.n_classes))
    for _ in range(policy.views):
        total += net_a.predict_proba(augment(x, "weak", policy, rng))
        total += net_b.predict_proba(augment(x, "weak", policy, rng))
    return total / (2 * policy.views)


def sharpen(p, T: float) -> np.ndarray:
    """p^(1/T) renormalised; computed in log space so tiny T stays finite."""
    if T <= 0:
        raise ValueError("temperature must be positive")
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    with np.errstate(divide="ignore"):
        logp = np.log(p) / T
    logp = logp - logp.max(axis=1, keepdims=True)
    q = np.exp(logp)
    return q / q.sum(axis=1, keepdims=True)


@dataclass
class MixedBatch:
    features: np.ndarray
    targets: np.ndarray
    lam: np.ndarray


def mixup(x, y, pool_x, pool_y, alpha: float, rng, lam=None, partner=None) -> MixedBatch:
    """Mix each primary row with a uniformly drawn pool row, primary weight max(l, 1-l), l ~ Beta(alpha, alpha)."""
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pool_x = np.asarray(pool_x, dtype=np.float64)
    if len(pool_x) == 0:
        raise ValueError("mixup pool is empty")
    n = len(x)
    if lam is None:
        lam = rng.beta(alpha, alpha, n) if alpha > 0 else np.ones(n)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (n,))
    lam = np.maximum(lam, 1.0 - lam)
    if partner is None:
        partner = rng.integers(0, len(pool_x), n)
    l2 = lam[:, None]
    # x + (1 - l)(x2 - x) is exact when x2 == x or l == 1
    xm = x + (1.0 - l2) * (pool_x[partner] - x)
    ym = y + (1.0 - l2) * (np.asarray(pool_y, dtype=np.float64)[partner] - y)
    return MixedBatch(xm, ym, lam.copy())
