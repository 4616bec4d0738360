"""Ground-truth-aware measurements. Nothing here mutates models or splits."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .data import LabeledVectorSet, gen_two_moons
from .division import ThresholdError, division_for
from .nn import fit_classifier

METRIC_COLUMNS = [
    "epoch",
    "l_kd",
    "l_mi",
    "l_dd",
    "l_adv",
    "rho_e",
    "rho_h",
    "acc_a",
    "acc_b",
    "bound_lhs",
    "bound_rhs",
]


def ground_truth(ds: LabeledVectorSet) -> np.ndarray | None:
    """The only read path to hidden target labels."""
    return None if ds._true_labels is None else ds._true_labels.copy()


def _hard(labels) -> np.ndarray:
    a = np.asarray(labels)
    return np.argmax(a, axis=1) if a.ndim == 2 else a.astype(np.int64)


def noise_ratio(pseudo_labels, truth) -> float:
    """Fraction of pseudo labels (argmax for soft rows) that disagree with the truth; 0 for an empty side."""
    p = _hard(pseudo_labels)
    t = np.asarray(truth, dtype=np.int64)
    if len(p) != len(t):
        raise ValueError("pseudo labels and ground truth differ in length")
    return float(np.mean(p != t)) if len(p) else 0.0


def accuracy(pred, truth) -> float:
    return float(np.mean(_hard(pred) == np.asarray(truth)))


def roc_auc(scores, positive) -> float:
    """Mann-Whitney AUC: probability a random positive outscores a random negative."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos, n_neg = positive.sum(), (~positive).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative samples")
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class Discrepancy:
    d: float
    probe_error: float
    low_confidence: bool


def discrepancy_proxy(easy_feats, hard_feats, seed: int = 0, holdout: float = 0.3, epochs: int = 60) -> Discrepancy:
    """Proxy A-distance 2(1 - 2 err) of a fresh probe separating the two sets, clamped to [0, 2].

    The larger set is subsampled to the size of the smaller so that chance
    error is 0.5; the probe is scored on a held-out fraction.
    """
    easy = np.asarray(easy_feats, dtype=np.float64)
    hard = np.asarray(hard_feats, dtype=np.float64)
    if len(easy) == 0 or len(hard) == 0:
        raise ValueError("both subdomains must be non-empty")
    rng = np.random.default_rng(seed)
    m = min(len(easy), len(hard))
    easy = easy[rng.choice(len(easy), m, replace=False)]
    hard = hard[rng.choice(len(hard), m, replace=False)]
    x = np.vstack([easy, hard])
    y = np.repeat([0, 1], m)
    order = rng.permutation(2 * m)
    n_test = max(2, int(round(holdout * 2 * m)))
    test, train = order[:n_test], order[n_test:]
    if len(train) == 0:
        train = test
    probe = fit_classifier(x[train], y[train], 2, (16,), epochs, 0.05, 32, 0.9, 1e-4, seed)
    err = float(np.mean(probe.predict(x[test]) != y[test]))
    d = min(2.0, max(0.0, 2.0 * (1.0 - 2.0 * err)))
    return Discrepancy(d, err, m < 10)


def fit_ideal_hypothesis(features, truth, hidden=(64, 64), epochs: int = 150, seed: int = 0):
    """Probe for the ideal joint hypothesis: the same MLP family trained on true labels of both subdomains."""
    truth = np.asarray(truth, dtype=np.int64)
    return fit_classifier(features, truth, int(truth.max()) + 1, hidden, epochs, 0.05, 64, 0.9, 1e-4, seed)


@dataclass
class BoundEstimate:
    alpha: float
    eps_alpha: float
    eps_t: float
    d: float
    lam: float
    lam_hat: float
    rho_e: float
    rho_h: float
    lhs: float
    rhs: float
    holds: bool
    corollary_holds: bool
    target_error: float


def _err(a, b) -> float:
    return float(np.mean(a != b)) if len(a) else 0.0


def bound_terms(h_pred, h_star_pred, easy, hard, easy_pseudo, hard_pseudo, truth, d: float, alphas):
    """Count every term of the subdomain error bound for each alpha.

    The oracle error mixes the two subdomains with the same alpha as the
    pseudo-label error, eps_t = alpha eps_e(h, y_e) + (1 - alpha) eps_h(h, y_h),
    which equals the plain target error when alpha = |easy| / N.
    """
    h_pred = np.asarray(h_pred)
    hs = np.asarray(h_star_pred)
    truth = np.asarray(truth)
    ye, yh = truth[easy], truth[hard]
    pe, ph = _hard(easy_pseudo), _hard(hard_pseudo)
    e_pseudo, h_pseudo = _err(h_pred[easy], pe), _err(h_pred[hard], ph)
    e_true, h_true = _err(h_pred[easy], ye), _err(h_pred[hard], yh)
    lam = _err(hs[easy], ye) + _err(hs[hard], yh)
    lam_hat = _err(hs[easy], pe) + _err(hs[hard], ph)
    rho_e, rho_h = _err(pe, ye), _err(ph, yh)
    target_error = _err(h_pred, truth)
    out = []
    for a in alphas:
        eps_alpha = a * e_pseudo + (1 - a) * h_pseudo
        eps_t = a * e_true + (1 - a) * h_true
        lhs = abs(eps_alpha - eps_t)
        rhs = a * (d + lam + lam_hat) + rho_h
        out.append(
            BoundEstimate(
                float(a), eps_alpha, eps_t, d, lam, lam_hat, rho_e, rho_h, lhs, rhs,
                lhs <= rhs + 1e-9, lam_hat <= lam + rho_e + rho_h + 1e-9, target_error,
            )
        )
    return out


def check_bound(
    net,
    features,
    easy,
    hard,
    easy_pseudo,
    hard_pseudo,
    truth,
    alphas=(0.0, 0.25, 0.5, 0.75, 1.0),
    h_star=None,
    discrepancy: Discrepancy | None = None,
    seed: int = 0,
) -> list[BoundEstimate]:
    """Empirical bound check with a probe standing in for the ideal joint hypothesis."""
    if truth is None:
        raise ValueError("ground truth unavailable: bound diagnostics disabled")
    features = np.asarray(features)
    easy, hard = np.asarray(easy, dtype=np.int64), np.asarray(hard, dtype=np.int64)
    if h_star is None:
        h_star = fit_ideal_hypothesis(features, truth, hidden=tuple(net.widths[1:-1]), seed=seed)
    if discrepancy is None:
        if len(easy) and len(hard):
            discrepancy = discrepancy_proxy(features[easy], features[hard], seed=seed)
        else:
            discrepancy = Discrepancy(0.0, 0.5, True)
    return bound_terms(
        net.predict(features), h_star.predict(features), easy, hard, easy_pseudo, hard_pseudo, truth,
        discrepancy.d, alphas,
    )


ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)


def planted_bound_suite(n_configs: int = 20, seed: int = 0, n: int = 300, alphas=ALPHAS, tau: float = 0.5):
    """Bound checks on seeded planted tasks with 0-40% label noise and 0-60 degree rotations.

    Each configuration rotates a two-moons set, flips a random fraction of
    its labels to form pseudo labels, fits a small hypothesis ``h`` on them,
    divides with ``h``'s losses and counts every bound term. Returns one
    ``(config, estimates)`` pair per configuration.
    """
    out = []
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n_configs)):
        rng = np.random.default_rng(child)
        noise, shift = float(rng.uniform(0.0, 0.4)), float(rng.uniform(0.0, 60.0))
        tgt = gen_two_moons(n, 0.1, shift, int(rng.integers(2**31)), "target")
        x, truth = tgt.features, ground_truth(tgt)
        pseudo = np.where(rng.random(n) < noise, 1 - truth, truth)
        h = fit_classifier(x, pseudo, 2, (16,), 5, 0.05, 32, 0.9, 1e-4, i)
        try:
            split, _ = division_for(h, x, pseudo, tau)
            easy, hard = split.easy, split.hard
        except ThresholdError:
            easy, hard = np.arange(n), np.zeros(0, dtype=np.int64)
        est = check_bound(h, x, easy, hard, pseudo[easy], pseudo[hard], truth, alphas, seed=i)
        out.append(({"noise": noise, "shift_deg": shift, "n_easy": len(easy)}, est))
    return out


def write_bound_report(estimates: list[BoundEstimate], path) -> Path:
    path = Path(path)
    path.write_text(json.dumps([asdict(e) for e in estimates], indent=2))
    return path


@dataclass
class AdaptationReport:
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.rows]


def _cell(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def export_metrics(report: AdaptationReport, outdir) -> tuple[Path, Path]:
    """Write metrics.csv (fixed columns, '' for unavailable values) and summary.json."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        csv_path = outdir / "metrics.csv"
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRIC_COLUMNS)
            for row in report.rows:
                w.writerow([_cell(row.get(c)) for c in METRIC_COLUMNS])
        summary_path = outdir / "summary.json"
        summary_path.write_text(json.dumps(report.summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    except OSError as e:
        raise OSError(f"cannot write metrics to {outdir}: {e}") from e
    return csv_path, summary_path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def read_metrics(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = []
        for rec in csv.DictReader(fh):
            rows.append({k: (None if v == "" else int(v) if k == "epoch" else float(v)) for k, v in rec.items()})
        return rows
