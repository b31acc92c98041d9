"""L-infinity sign-gradient attacks: FGSM, BIM and PGD."""

from __future__ import annotations

import time
from typing import Optional

import numpy as np

from .core import AdversarialExample, AttackConfig, ModelGroup, as_image


def _ascent_direction(group: ModelGroup, x: np.ndarray, true_label: int, target: Optional[int]) -> np.ndarray:
    # Untargeted: climb J(x, y_true). Targeted: descend J(x, y_target).
    if target is None:
        return group.loss_grad(x, true_label)[1]
    return -group.loss_grad(x, target)[1]


def _objective(group: ModelGroup, x: np.ndarray, true_label: int, target: Optional[int]) -> float:
    if target is None:
        return group.loss_grad(x, true_label)[0]
    return -group.loss_grad(x, target)[0]


def fgsm_step(group: ModelGroup, x: np.ndarray, true_label: int, target: Optional[int], theta: float) -> np.ndarray:
    """One signed step of size ``theta``, before any clipping."""
    return x + theta * np.sign(_ascent_direction(group, x, true_label, target))


def run_fgsm(group: ModelGroup, x, true_label: int, target: Optional[int], cfg: AttackConfig) -> AdversarialExample:
    x = as_image(x)
    t0 = time.perf_counter()
    adv = np.clip(fgsm_step(group, x, true_label, target, cfg.epsilon), 0.0, 1.0)
    success = group.is_success(adv, true_label, target)
    return AdversarialExample(x, adv, int(true_label), target, success, time.perf_counter() - t0,
                              cfg.kind, cfg.target_mode)


def _project(adv: np.ndarray, x: np.ndarray, eps: float) -> np.ndarray:
    return np.clip(np.clip(adv, x - eps, x + eps), 0.0, 1.0)


def _iterate(group, x, start, true_label, target, cfg) -> np.ndarray:
    adv = start
    for _ in range(cfg.max_iters):
        adv = _project(fgsm_step(group, adv, true_label, target, cfg.step), x, cfg.epsilon)
    return adv


def run_bim(group: ModelGroup, x, true_label: int, target: Optional[int], cfg: AttackConfig) -> AdversarialExample:
    x = as_image(x)
    t0 = time.perf_counter()
    adv = _iterate(group, x, x.copy(), true_label, target, cfg)
    success = group.is_success(adv, true_label, target)
    return AdversarialExample(x, adv, int(true_label), target, success, time.perf_counter() - t0,
                              cfg.kind, cfg.target_mode)


def run_pgd(group: ModelGroup, x, true_label: int, target: Optional[int], cfg: AttackConfig) -> AdversarialExample:
    """Projected ascent with ``cfg.restarts`` seeded starts inside the eps-ball.

    Returns the first successful restart, otherwise the one with the best
    attacker objective. Restart r always uses the r-th draw from the same
    seeded stream, so adding restarts never changes earlier ones.
    """
    x = as_image(x)
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    best, best_obj = None, -np.inf
    for _ in range(cfg.restarts):
        if cfg.random_init:
            start = np.clip(x + rng.uniform(-cfg.epsilon, cfg.epsilon, size=x.shape), 0.0, 1.0)
        else:
            start = x.copy()
        adv = _iterate(group, x, start, true_label, target, cfg)
        if group.is_success(adv, true_label, target):
            best = adv
            break
        obj = _objective(group, adv, true_label, target)
        if obj > best_obj:
            best, best_obj = adv, obj
    success = group.is_success(best, true_label, target)
    return AdversarialExample(x, best, int(true_label), target, success, time.perf_counter() - t0,
                              cfg.kind, cfg.target_mode)
