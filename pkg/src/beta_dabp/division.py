"""Loss-based split of the target set into easy and hard subdomains."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import log_softmax_np
from .losses import LOG_FLOOR

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-6


class ThresholdError(ValueError):
    pass


@dataclass
class GaussianMixture2:
    """Two-component 1-D mixture; component 0 has the smaller mean (the clean one)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihoods: list = field(default_factory=list)
    converged: bool = False
    degenerate: bool = False

    def component_logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)[..., None]
        return (
            np.log(np.maximum(self.weights, 1e-300))
            - 0.5 * np.log(2 * np.pi * self.variances)
            - 0.5 * (x - self.means) ** 2 / self.variances
        )

    def log_likelihood(self, x) -> float:
        return float(np.logaddexp.reduce(self.component_logpdf(x), axis=-1).sum())


def _order(weights, means, variances):
    if means[0] > means[1]:
        return weights[::-1].copy(), means[::-1].copy(), variances[::-1].copy()
    return weights, means, variances


def fit_gmm2(losses, max_iter: int = 100, tol: float = 1e-8) -> GaussianMixture2:
    """EM for a two-component 1-D Gaussian mixture.

    Initialised at the 10th/90th percentiles with equal weights and the
    pooled variance. Variances are floored at 1e-6. Stops once the
    log-likelihood improves by less than ``tol`` or after ``max_iter`` steps.
    Constant input returns a degenerate mixture whose clean posterior is 1
    everywhere.
    """
    x = np.asarray(losses, dtype=np.float64).ravel()
    if len(x) < 4:
        raise ValueError("need at least 4 losses to fit a mixture")
    if not np.isfinite(x).all():
        raise ValueError("losses must be finite")
    if x.var() < VAR_FLOOR * 1e-6 or np.ptp(x) == 0:
        log.warning("all losses identical; treating every sample as clean")
        return GaussianMixture2(
            np.array([1.0, 0.0]), np.array([x[0], x[0]]), np.full(2, VAR_FLOOR), [], True, True
        )
    w = np.array([0.5, 0.5])
    mu = np.percentile(x, [10, 90]).astype(np.float64)
    var = np.full(2, max(x.var(), VAR_FLOOR))
    gmm = GaussianMixture2(w, mu, var)
    lls = [gmm.log_likelihood(x)]
    for _ in range(max_iter):
        logp = gmm.component_logpdf(x)
        resp = np.exp(logp - np.logaddexp.reduce(logp, axis=1, keepdims=True))
        nk = resp.sum(axis=0) + 1e-300
        w = nk / len(x)
        mu = (resp * x[:, None]).sum(axis=0) / nk
        var = np.maximum((resp * (x[:, None] - mu) ** 2).sum(axis=0) / nk, VAR_FLOOR)
        w, mu, var = _order(w, mu, var)
        gmm = GaussianMixture2(w, mu, var)
        lls.append(gmm.log_likelihood(x))
        if abs(lls[-1] - lls[-2]) < tol:
            gmm.converged = True
            break
    gmm.log_likelihoods = lls
    return gmm


def clean_posterior(gmm: GaussianMixture2, loss) -> np.ndarray:
    """Posterior probability of the low-mean component for each loss value."""
    loss = np.asarray(loss, dtype=np.float64)
    if gmm.degenerate:
        return np.ones_like(loss)
    var = np.broadcast_to(gmm.variances, loss.shape + (2,)).copy()
    # a wider component would win back the far tail on the wrong side; past the
    # outer mean both components use the narrower variance
    right = loss > gmm.means[1]
    left = loss < gmm.means[0]
    var[right, 0] = np.minimum(var[right, 0], gmm.variances[1])
    var[left, 1] = np.minimum(var[left, 1], gmm.variances[0])
    w = np.log(np.maximum(gmm.weights, 1e-300))
    logp = w - 0.5 * np.log(2 * np.pi * var) - 0.5 * (loss[..., None] - gmm.means) ** 2 / var
    post = np.exp(logp[..., 0] - np.logaddexp(logp[..., 0], logp[..., 1]))
    return np.clip(post, 0.0, 1.0)


def per_sample_losses(net, features: np.ndarray, pseudo_labels) -> np.ndarray:
    """Cross-entropy of each row against its (one-hot or soft) pseudo label; no graph recorded."""
    logp = np.maximum(log_softmax_np(net.logits_np(features)), LOG_FLOOR)
    target = np.asarray(pseudo_labels, dtype=np.float64)
    if target.ndim == 1:
        target = np.eye(logp.shape[1])[target.astype(np.int64)]
    if target.shape != logp.shape:
        raise ValueError(f"pseudo labels {target.shape} do not match predictions {logp.shape}")
    return np.maximum(-(target * logp).sum(axis=1), 0.0)


@dataclass
class SubdomainSplit:
    """Disjoint easy/hard partition of the target indices.

    ``easy_labels`` are hard pseudo labels of the easy samples,
    ``hard_soft`` the soft labels of the hard samples, ``clean_prob`` the
    posterior for every target sample, and ``owner`` names the network
    whose losses produced the split.
    """

    easy: np.ndarray
    hard: np.ndarray
    easy_labels: np.ndarray
    hard_soft: np.ndarray
    clean_prob: np.ndarray
    tau: float
    owner: str = ""
    losses: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.clean_prob)
        if len(np.intersect1d(self.easy, self.hard)) or len(self.easy) + len(self.hard) != n:
            raise AssertionError("easy/hard must partition the target set")

    @property
    def n(self) -> int:
        return len(self.clean_prob)


def divide(pseudo_labels, posteriors, tau: float, n_classes: int | None = None, owner: str = "", losses=None):
    """Easy = posterior >= tau (keeps the hard pseudo label), hard = the rest.

    Hard samples start from the one-hot of their pseudo label because only
    hard predictions exist; co-guessing replaces it before use.
    """
    if not 0 < tau <= 1:
        raise ValueError("tau must be in (0, 1]")
    labels = np.asarray(pseudo_labels, dtype=np.int64)
    post = np.asarray(posteriors, dtype=np.float64)
    if len(labels) != len(post):
        raise ValueError("posteriors and pseudo labels are not aligned")
    k = n_classes if n_classes is not None else int(labels.max()) + 1
    mask = post >= tau
    easy = np.flatnonzero(mask)
    hard = np.flatnonzero(~mask)
    if len(easy) == 0:
        raise ThresholdError(f"no sample reaches clean probability {tau}; lower tau")
    return SubdomainSplit(
        easy=easy,
        hard=hard,
        easy_labels=labels[easy],
        hard_soft=np.eye(k)[labels[hard]],
        clean_prob=post,
        tau=tau,
        owner=owner,
        losses=None if losses is None else np.asarray(losses, dtype=np.float64),
    )


def division_for(net, features, pseudo_labels, tau: float, owner: str = "", max_iter: int = 100):
    """per_sample_losses -> fit_gmm2 -> clean_posterior -> divide, for one network."""
    losses = per_sample_losses(net, features, pseudo_labels)
    gmm = fit_gmm2(losses, max_iter=max_iter)
    post = clean_posterior(gmm, losses)
    return divide(pseudo_labels, post, tau, net.n_classes, owner, losses), gmm


def dump_division(split: SubdomainSplit, path) -> Path:
    path = Path(path)
    easy = set(split.easy.tolist())
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "loss", "clean_prob", "subdomain"])
        for i in range(split.n):
            loss = "" if split.losses is None else repr(float(split.losses[i]))
            w.writerow([i, loss, repr(float(split.clean_prob[i])), "easy" if i in easy else "hard"])
    return path
