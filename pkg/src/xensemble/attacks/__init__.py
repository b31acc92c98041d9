"""White-box attack generators and their evaluation.

Every kernel runs against a :class:`ModelGroup`; the single-model entry
points wrap one model, and :func:`ensemble_attack` wraps several so the
optimisation follows their mean loss and success requires fooling all of them.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..nncore import MicroModel
from .batchio import load_adv_batch, save_adv_batch
from .core import (KINDS, LINF_KINDS, TARGET_MODES, AdversarialExample, AttackConfig, ModelGroup,
                   resolve_target, select_target)
from .cw import run_cw2
from .gradient import run_bim, run_fgsm, run_pgd
from .jsma import pair_saliency, run_jsma, single_saliency
from .report import AttackReport, evaluate_attack, percept_distance, rmsd

_KERNELS = {"fgsm": run_fgsm, "bim": run_bim, "pgd": run_pgd, "cw2": run_cw2, "jsma": run_jsma}


def _check_kind(cfg: AttackConfig, kind: str) -> None:
    if cfg.kind != kind:
        raise ValueError(f"config is for {cfg.kind!r}, not {kind!r}")


def _run(group: ModelGroup, x, label: int, cfg: AttackConfig, target: Optional[int] = None):
    x = np.asarray(x, dtype=np.float64)
    if x.size != group.models[0].input_dim:
        from ..nncore import ShapeError
        raise ShapeError(group.models[0].input_dim, x.size)
    if target is None:
        target = resolve_target(group, x, label, cfg)
    return _KERNELS[cfg.kind](group, x, int(label), target, cfg)


def fgsm(model: MicroModel, x, label: int, cfg: AttackConfig) -> AdversarialExample:
    _check_kind(cfg, "fgsm")
    return _run(ModelGroup([model]), x, label, cfg)


def bim(model: MicroModel, x, label: int, cfg: AttackConfig) -> AdversarialExample:
    _check_kind(cfg, "bim")
    return _run(ModelGroup([model]), x, label, cfg)


def pgd(model: MicroModel, x, label: int, cfg: AttackConfig) -> AdversarialExample:
    _check_kind(cfg, "pgd")
    return _run(ModelGroup([model]), x, label, cfg)


def cw2(model: MicroModel, x, label: int, cfg: AttackConfig) -> AdversarialExample:
    _check_kind(cfg, "cw2")
    return _run(ModelGroup([model]), x, label, cfg)


def jsma(model: MicroModel, x, target: int, cfg: AttackConfig,
         true_label: Optional[int] = None) -> AdversarialExample:
    """Targeted saliency attack toward ``target``.

    ``true_label`` defaults to the model's current prediction.
    """
    _check_kind(cfg, "jsma")
    group = ModelGroup([model])
    if true_label is None:
        true_label = group.labels(np.asarray(x, dtype=np.float64))[0]
    return _run(group, x, true_label, cfg, target=int(target))


def ensemble_attack(models: Sequence[MicroModel], x, label: int, cfg: AttackConfig) -> AdversarialExample:
    """Any kernel, optimised against the mean objective of ``models``."""
    if not models:
        raise ValueError("ensemble_attack needs at least one model")
    return _run(ModelGroup(models), x, label, cfg)


def run_attack(models, x, label: int, cfg: AttackConfig) -> AdversarialExample:
    """Dispatch on ``cfg.kind`` for one model or a sequence of models."""
    if isinstance(models, MicroModel):
        models = [models]
    return ensemble_attack(models, x, label, cfg)


__all__ = [
    "KINDS", "LINF_KINDS", "TARGET_MODES", "AdversarialExample", "AttackConfig", "AttackReport",
    "ModelGroup", "bim", "cw2", "ensemble_attack", "evaluate_attack", "fgsm", "jsma", "load_adv_batch",
    "pair_saliency", "percept_distance", "pgd", "rmsd", "run_attack", "save_adv_batch", "select_target",
    "single_saliency",
]
