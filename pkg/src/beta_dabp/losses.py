"""Training objectives. Every loss takes logits and works in log space.

Batched inputs are averaged over rows. Probability inputs can be turned
into logits with :func:`as_logits` since ``softmax(log p) == p``.
"""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor, concat

PROB_FLOOR = 1e-12
LOG_FLOOR = float(np.log(PROB_FLOOR))


def as_logits(probs) -> Tensor:
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    return Tensor(np.log(np.maximum(p, 1e-300)))


def one_hot(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _rows(t) -> Tensor:
    t = as_tensor(t)
    return t if t.data.ndim == 2 else t.reshape(1, -1)


def _clamped_logp(logits: Tensor) -> tuple[Tensor, np.ndarray]:
    logp = logits.log_softmax()
    return logp.clamp_min(LOG_FLOOR), logp.data < LOG_FLOOR


def cross_entropy(logits, target) -> Tensor:
    """Mean over rows of -sum_k target_k log p_k.

    Log-probabilities below log(1e-12) are clamped; the number of clamped
    entries hit by a non-zero target is stored on ``result.clamped``.
    """
    logits = _rows(logits)
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    logp, hit = _clamped_logp(logits)
    out = -(logp * target).sum(axis=1).mean()
    out.clamped = int((hit & (target > 0)).sum())
    return out


def entropy(logits) -> Tensor:
    logits = _rows(logits)
    logp = logits.log_softmax()
    return -(logp.exp() * logp).sum(axis=1).mean()


def negative_entropy(logits) -> Tensor:
    """Mean of sum_k p_k log p_k; lies in [-ln K, 0]."""
    logits = _rows(logits)
    logp = logits.log_softmax()
    return (logp.exp() * logp).sum(axis=1).mean()


def kd_kl(pseudo, logits) -> Tensor:
    """KL(pseudo || softmax(logits)), averaged over rows, with 0 log 0 = 0."""
    logits = _rows(logits)
    q = np.atleast_2d(np.asarray(pseudo, dtype=np.float64))
    q_logq = np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0).sum(axis=1)
    logp, _ = _clamped_logp(logits)
    return (Tensor(q_logq) - (logp * q).sum(axis=1)).mean()


def _mean_probs(logits: Tensor) -> Tensor:
    return logits.softmax().mean(axis=0)


def mutual_info(logits) -> Tensor:
    """H(batch-mean prediction) - mean per-row entropy, in nats."""
    logits = _rows(logits)
    m = _mean_probs(logits)
    h_mean = -(m * m.clamp_min(PROB_FLOOR).log()).sum()
    return h_mean - entropy(logits)


def reg_uniform(logits) -> Tensor:
    """KL(uniform || batch-mean prediction)."""
    logits = _rows(logits)
    k = logits.data.shape[1]
    m = _mean_probs(logits).clamp_min(PROB_FLOOR)
    pi = np.full(k, 1.0 / k)
    return (Tensor(pi * np.log(pi)) - m.log() * pi).sum()


def mixmatch_terms(easy_logits, easy_targets, hard_logits, hard_targets, lambda_mse: float = 0.0) -> dict:
    """The three parts of the division-enabled semi-supervised loss.

    The squared error is summed over classes and divided by K per row, then
    averaged over rows. An empty hard batch contributes no squared error.
    """
    easy_logits = _rows(easy_logits)
    if easy_logits.data.shape[0] == 0:
        raise ValueError("empty easy batch: the supervised term needs at least one sample")
    ce = cross_entropy(easy_logits, easy_targets)
    hard_logits = as_tensor(hard_logits)
    has_hard = hard_logits.data.ndim == 2 and hard_logits.data.shape[0] > 0
    if has_hard:
        k = hard_logits.data.shape[1]
        diff = hard_logits.softmax() - np.asarray(hard_targets, dtype=np.float64)
        mse = (diff * diff).sum(axis=1).mean() * (1.0 / k)
        reg = reg_uniform(concat([easy_logits, hard_logits]))
    else:
        mse = Tensor(0.0)
        reg = reg_uniform(easy_logits)
    return {"ce": ce, "mse": mse * lambda_mse, "reg": reg}


def mixmatch_loss(easy_logits, easy_targets, hard_logits, hard_targets, lambda_mse: float = 0.0) -> Tensor:
    t = mixmatch_terms(easy_logits, easy_targets, hard_logits, hard_targets, lambda_mse)
    return t["ce"] + t["mse"] + t["reg"]


def adversarial_loss(discriminator, easy_inputs, hard_inputs) -> Tensor:
    """E_easy[log Omega] + E_hard[log(1 - Omega)].

    Omega is the discriminator's probability for column 0 ("easy"); its
    column 1 is therefore 1 - Omega. Log-probabilities are floored at
    log(1e-12).
    """
    le, _ = _clamped_logp(discriminator.logits(easy_inputs))
    lh, _ = _clamped_logp(discriminator.logits(hard_inputs))
    return le[:, 0].mean() + lh[:, 1].mean()


STEP_TERMS = {1: ("l_kd", "l_mi"), 2: ("l_dd", "l_adv")}


def total_objective(step: int, terms: dict, gamma: float = 0.1, mi_weight: float = 1.0):
    """Step 1: l_kd - mi_weight * l_mi.  Step 2: l_dd - gamma * l_adv."""
    if step not in STEP_TERMS:
        raise ValueError(f"unknown step {step}")
    other = STEP_TERMS[3 - step]
    if any(k in terms for k in other):
        raise ValueError("step 1 and step 2 terms cannot be combined in one objective")
    a, b = STEP_TERMS[step]
    weight = mi_weight if step == 1 else gamma
    return terms[a] - terms.get(b, 0.0) * weight
