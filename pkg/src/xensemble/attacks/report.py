"""Attack cost/effect metrics: ASR, MR, AdvConf, Perturb, Percept, Time."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import nncore
from ..nncore import MicroModel
from .core import AdversarialExample

PIXEL_SCALE = 255.0


@dataclass(frozen=True)
class AttackReport:
    asr: float
    mr: float
    adv_conf: float
    perturb: float
    percept: float
    mean_time_s: float
    count: int = 0
    successes: int = 0

    @property
    def zero_success(self) -> bool:
        return self.successes == 0

    def as_row(self) -> dict:
        return {"ASR": self.asr, "MR": self.mr, "AdvConf": self.adv_conf, "Perturb": self.perturb,
                "Percept": self.percept, "Time": self.mean_time_s}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["zero_success"] = self.zero_success
        return d


def rmsd(x: np.ndarray, x_adv: np.ndarray) -> float:
    """Root mean square deviation sqrt(sum(delta^2) / n)."""
    d = np.asarray(x_adv, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.sum(d * d) / d.size))


def _neighbourhoods(img: np.ndarray) -> np.ndarray:
    """3x3 neighbourhoods clipped at the border (9, 6 or 4 pixels), NaN-padded."""
    padded = np.pad(img, 1, mode="constant", constant_values=np.nan)
    return sliding_window_view(padded, (3, 3)).reshape(img.shape + (9,))


def patch_std(img: np.ndarray, literal: bool = False) -> np.ndarray:
    """Per-pixel neighbourhood spread on the 0-255 scale.

    Default: population standard deviation of the 9/6/4-pixel neighbourhood.
    ``literal=True`` evaluates sqrt(sum_{k in S_i}(V_i - mu) / n^2) with n the
    image pixel count, floored at zero before the root.
    """
    v = np.asarray(img, dtype=np.float64) * PIXEL_SCALE
    if v.ndim == 1:
        side = int(round(np.sqrt(v.size)))
        if side * side != v.size:
            raise ValueError("flat images must be square")
        v = v.reshape(side, side)
    nb = _neighbourhoods(v)
    mu = np.nanmean(nb, axis=-1)
    if not literal:
        return np.sqrt(np.nanmean((nb - mu[..., None]) ** 2, axis=-1))
    count = np.sum(~np.isnan(nb), axis=-1)
    s = count * (v - mu) / float(v.size) ** 2
    return np.sqrt(np.maximum(s, 0.0))


def percept_distance(x: np.ndarray, x_adv: np.ndarray, literal: bool = False) -> float:
    """Sensitivity-weighted mean absolute perturbation (0-255 scale).

    Each pixel's |delta| is weighted by Sen = 1 where the benign patch spread
    is <= 1 and 1 / spread otherwise, so changes in flat regions count more.
    """
    x = np.asarray(x, dtype=np.float64)
    x_adv = np.asarray(x_adv, dtype=np.float64)
    if x.shape != x_adv.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_adv.shape}")
    pstd = patch_std(x, literal=literal).reshape(x.shape)
    sen = np.where(pstd <= 1.0, 1.0, 1.0 / np.maximum(pstd, 1.0))
    delta = np.abs(x_adv - x) * PIXEL_SCALE
    return float(np.mean(delta * sen))


def evaluate_attack(examples: Sequence[AdversarialExample], model: MicroModel,
                    literal_percept: bool = False) -> AttackReport:
    """Score a batch against ``model``.

    Success is re-judged on ``model``: untargeted means the label differs from
    the true one, targeted means it equals the target. Cost columns average
    over successful examples only; with no successes they are reported as 0.
    """
    if not examples:
        raise ValueError("evaluate_attack needs at least one example")
    succ, mis, conf, pert, perc = [], [], [], [], []
    for ex in examples:
        pred = nncore.forward(model, ex.perturbed)
        wrong = pred.label != ex.true_label
        ok = wrong if ex.target_label is None else pred.label == ex.target_label
        succ.append(ok)
        mis.append(wrong)
        if ok:
            adv_class = pred.label if ex.target_label is None else ex.target_label
            conf.append(pred.probs[adv_class])
            pert.append(rmsd(ex.original, ex.perturbed))
            perc.append(percept_distance(ex.original, ex.perturbed, literal=literal_percept))
    n_succ = int(np.sum(succ))

    def mean(values):
        return float(np.mean(values)) if values else 0.0

    return AttackReport(
        asr=float(np.mean(succ)), mr=float(np.mean(mis)), adv_conf=mean(conf), perturb=mean(pert),
        percept=mean(perc), mean_time_s=float(np.mean([ex.gen_time_s for ex in examples])),
        count=len(examples), successes=n_succ,
    )
