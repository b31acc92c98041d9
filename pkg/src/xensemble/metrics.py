"""Defense-side metrics: DSR/PSR/TSR, detection error, AUROC, FPR@TPR, transferability.

Positive class for detection metrics = out-of-distribution / deceptive input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from . import nncore
from .defense import Verdict

OOD = None  # ground-truth marker for inputs without a correct label


@dataclass(frozen=True)
class DefenseRates:
    dsr: float
    psr: float
    tsr: float

    def as_row(self) -> dict:
        return {"DSR": self.dsr, "PSR": self.psr, "TSR": self.tsr}


@dataclass(frozen=True)
class DetectionStats:
    tpr: float
    fpr: float
    derror: float
    auroc: float
    fpr_at_95tpr: float


def defense_rates(verdicts: Sequence[Verdict], ground_truth: Sequence[Optional[int]]) -> DefenseRates:
    """PSR counts unflagged verdicts whose label is the true one; TSR counts
    flagged verdicts. OOD inputs (ground truth ``None``) never add to PSR.

    DSR is computed from the same integer counts as PSR + TSR, so the identity
    holds exactly.
    """
    if len(verdicts) != len(ground_truth):
        raise ValueError("verdicts and ground truth differ in length")
    n = len(verdicts)
    if n == 0:
        raise ValueError("defense_rates needs at least one verdict")
    repaired = sum(1 for v, y in zip(verdicts, ground_truth)
                   if y is not None and not v.flagged and v.label == y)
    flagged = sum(1 for v in verdicts if v.flagged)
    psr, tsr = repaired / n, flagged / n
    return DefenseRates(psr + tsr, psr, tsr)


def detection_error(tpr: float, fpr: float, beta: float = 0.5) -> float:
    for name, v in (("tpr", tpr), ("fpr", fpr), ("beta", beta)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    return beta * (1.0 - tpr) + (1.0 - beta) * fpr


def _split(scores, is_positive):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(is_positive, dtype=bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    return s, y


def auroc(scores: Sequence[float], is_positive: Sequence[bool]) -> float:
    """Probability a positive outscores a negative, ties counting 1/2.

    Mann-Whitney form: midranks over the pooled scores. With midranks the
    rank sum of positives is an exact multiple of 1/2, so the value matches
    pairwise counting without rounding drift for moderate sizes.
    """
    s, y = _split(scores, is_positive)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both positive and negative examples")
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def fpr_at_tpr(scores: Sequence[float], is_positive: Sequence[bool], tpr_target: float = 0.95) -> float:
    """Lowest FPR over thresholds "score >= t" whose TPR reaches ``tpr_target``."""
    s, y = _split(scores, is_positive)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0:
        raise ValueError("FPR@TPR needs positive examples")
    if not 0.0 < tpr_target <= 1.0:
        raise ValueError("tpr_target must lie in (0, 1]")
    best = None
    for t in np.unique(s)[::-1]:
        pred = s >= t
        tpr = (pred & y).sum() / n_pos
        if tpr >= tpr_target:
            fpr = (pred & ~y).sum() / n_neg if n_neg else 0.0
            best = fpr if best is None else min(best, fpr)
    if best is None:
        raise ValueError(f"TPR target {tpr_target} is unreachable")
    return float(best)


def detection_stats(flags: Sequence[bool], scores: Sequence[float], is_positive: Sequence[bool],
                    beta: float = 0.5) -> DetectionStats:
    """Threshold stats from binary flags plus threshold-free stats from scores."""
    f, y = _split(flags, is_positive)
    f = f.astype(bool)
    tpr = float((f & y).sum() / y.sum())
    fpr = float((f & ~y).sum() / (~y).sum())
    return DetectionStats(tpr, fpr, detection_error(tpr, fpr, beta), auroc(scores, is_positive),
                          fpr_at_tpr(scores, is_positive, 0.95))


# --- transferability --------------------------------------------------------

def transfer_rates_from_labels(from_labels: Sequence[int], to_labels: Sequence[Optional[int]],
                               true_labels: Sequence[int], target_labels: Sequence[Optional[int]],
                               mode: str) -> float:
    """Share of examples that carry over.

    untargeted: the receiving side lands on the same wrong label as the
    source. targeted: the receiving side outputs the attack target. A
    receiving label of ``None`` (a flagged ensemble verdict) never transfers.
    """
    if mode not in ("untargeted", "targeted"):
        raise ValueError(f"unknown transferability mode {mode!r}")
    n = len(from_labels)
    if n == 0:
        raise ValueError("no examples to measure")
    hits = 0
    for f, t, y, tgt in zip(from_labels, to_labels, true_labels, target_labels):
        if t is None:
            continue
        if mode == "untargeted":
            hits += int(f != y and t == f)
        else:
            hits += int(tgt is not None and t == tgt)
    return hits / n


def transferability(adv_examples, from_model: nncore.MicroModel,
                    to_models: Mapping[str, object], mode: str = "untargeted",
                    successful_only: bool = True) -> dict:
    """Per receiving model (or ensemble) transfer rate.

    ``to_models`` values are either a MicroModel or a callable mapping an
    image batch to a list of labels (``None`` for a flagged query), which is
    how an ensemble defense is measured. Only examples that fooled
    ``from_model`` are counted unless ``successful_only`` is False.
    """
    if not adv_examples:
        raise ValueError("no adversarial examples given")
    X = np.stack([np.asarray(e.perturbed, dtype=np.float64) for e in adv_examples])
    src = nncore.predict_labels(from_model, X)
    truth = [e.true_label for e in adv_examples]
    tgts = [e.target_label for e in adv_examples]
    if successful_only:
        keep = [i for i in range(len(adv_examples))
                if (src[i] != truth[i] if tgts[i] is None else src[i] == tgts[i])]
    else:
        keep = list(range(len(adv_examples)))
    if not keep:
        return {name: 0.0 for name in to_models}
    out = {}
    for name, target in to_models.items():
        if isinstance(target, nncore.MicroModel):
            labels = list(nncore.predict_labels(target, X[keep]))
        else:
            labels = list(target(X[keep]))
        out[name] = transfer_rates_from_labels([src[i] for i in keep], labels, [truth[i] for i in keep],
                                               [tgts[i] for i in keep], mode)
    return out
