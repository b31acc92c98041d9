"""Carlini-Wagner L2 attack with a fixed trade-off constant."""

from __future__ import annotations

import time

import numpy as np

from .. import nncore
from .core import AdversarialExample, AttackConfig, ModelGroup, as_image

_TANH_SHRINK = 1.0 - 1e-6


def _margins(group: ModelGroup, x: np.ndarray, target: int) -> np.ndarray:
    """Z_t - max_{j != t} Z_j for every model in the group."""
    out = []
    for m in group.models:
        z = nncore.logits(m, x)
        others = np.delete(z, target)
        out.append(z[target] - others.max())
    return np.array(out)


def _hinge_grad(group: ModelGroup, x: np.ndarray, target: int, confidence: float) -> np.ndarray:
    """Gradient of mean_m max(max_{j!=t} Z_j - Z_t, -confidence) w.r.t. x."""
    grad = np.zeros(x.shape)
    for m in group.models:
        z = nncore.logits(m, x)
        masked = z.copy()
        masked[target] = -np.inf
        j = int(np.argmax(masked))
        if z[j] - z[target] > -confidence:
            up = np.zeros_like(z)
            up[j] += 1.0
            up[target] -= 1.0
            grad += nncore.logits_vjp(m, x, up)
    return grad / len(group)


def run_cw2(group: ModelGroup, x, true_label: int, target: int, cfg: AttackConfig) -> AdversarialExample:
    """Minimise ||x' - x||^2 + c * hinge over x' = (tanh(w) + 1) / 2 with Adam.

    Success (checked on the unmodified input first, then every
    ``check_every`` steps) requires every model's logit margin for the target
    to reach ``confidence``. With ``early_stop`` the first success is
    returned; otherwise the lowest-L2 success over all checks.
    """
    if target is None:
        raise ValueError("cw2 needs a target label")
    x = as_image(x)
    t0 = time.perf_counter()

    def succeeded(candidate):
        return bool(np.all(_margins(group, candidate, target) >= cfg.confidence))

    def done(adv, ok):
        return AdversarialExample(x, adv, int(true_label), int(target), ok, time.perf_counter() - t0,
                                  cfg.kind, cfg.target_mode)

    if succeeded(x):
        return done(x.copy(), True)

    w = np.arctanh((2.0 * x - 1.0) * _TANH_SHRINK)
    m1 = np.zeros_like(w)
    m2 = np.zeros_like(w)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best, best_l2 = None, np.inf
    adv = x.copy()
    for it in range(1, cfg.max_iters + 1):
        tw = np.tanh(w)
        adv = (tw + 1.0) / 2.0
        g_adv = 2.0 * (adv - x) + cfg.c * _hinge_grad(group, adv, target, cfg.confidence)
        g = g_adv * (1.0 - tw ** 2) / 2.0
        m1 = beta1 * m1 + (1 - beta1) * g
        m2 = beta2 * m2 + (1 - beta2) * g * g
        w = w - cfg.learning_rate * (m1 / (1 - beta1 ** it)) / (np.sqrt(m2 / (1 - beta2 ** it)) + eps)
        if it % cfg.check_every == 0 or it == cfg.max_iters:
            adv = (np.tanh(w) + 1.0) / 2.0
            if succeeded(adv):
                l2 = float(np.sum((adv - x) ** 2))
                if l2 < best_l2:
                    best, best_l2 = adv.copy(), l2
                if cfg.early_stop:
                    break
    if best is not None:
        return done(best, True)
    # the final iterate was checked above and failed
    return done((np.tanh(w) + 1.0) / 2.0, False)
