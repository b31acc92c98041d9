"""Jacobian saliency map attack (increasing features, pixel pairs)."""

from __future__ import annotations

import math
import time

import numpy as np

from .core import AdversarialExample, AttackConfig, ModelGroup, as_image

MAX_VALUE = 1.0


def pair_saliency(alpha: np.ndarray, beta: np.ndarray, domain: np.ndarray):
    """Best pixel pair under the saliency rule.

    ``alpha`` holds d prob_target / dx_i and ``beta`` the summed derivative
    of all other classes. A pair qualifies when alpha_p + alpha_q > 0 and
    beta_p + beta_q < 0; its score is (alpha sum) * |beta sum|. Returns the
    pair (p, q) with p < q, or None.
    """
    idx = np.flatnonzero(domain)
    if idx.shape[0] < 2:
        return None
    a, b = alpha[idx], beta[idx]
    A = a[:, None] + a[None, :]
    B = b[:, None] + b[None, :]
    ok = (A > 0) & (B < 0) & np.triu(np.ones(A.shape, dtype=bool), k=1)
    if not ok.any():
        return None
    score = np.where(ok, A * -B, -np.inf)
    i, j = np.unravel_index(int(np.argmax(score)), score.shape)
    return int(idx[i]), int(idx[j])


def single_saliency(alpha: np.ndarray, beta: np.ndarray, domain: np.ndarray):
    """Best single pixel: alpha > 0 and beta < 0, scored alpha * |beta|."""
    ok = domain & (alpha > 0) & (beta < 0)
    if not ok.any():
        return None
    return int(np.argmax(np.where(ok, alpha * -beta, -np.inf)))


def run_jsma(group: ModelGroup, x, true_label: int, target: int, cfg: AttackConfig) -> AdversarialExample:
    """Greedily push salient pixels to the maximum value until the target wins.

    At most ``floor(max_distortion * n)`` pixels change. When no pair
    qualifies, or only one pixel of budget is left, a single pixel is used.
    """
    if target is None:
        raise ValueError("jsma needs a target label")
    x = as_image(x)
    t0 = time.perf_counter()
    adv = x.copy()
    flat = adv.reshape(-1)
    n = flat.shape[0]
    budget = int(math.floor(cfg.max_distortion * n + 1e-9))
    changed = np.zeros(n, dtype=bool)
    success = group.is_success(adv, true_label, target)
    while not success and changed.sum() < budget:
        jac = group.jacobian(adv).reshape(-1, n)
        alpha = jac[target]
        beta = jac.sum(axis=0) - alpha
        domain = (~changed) & (flat < MAX_VALUE)
        pick = None
        if budget - changed.sum() >= 2:
            pick = pair_saliency(alpha, beta, domain)
        if pick is None:
            single = single_saliency(alpha, beta, domain)
            pick = None if single is None else (single,)
        if pick is None:
            break
        for p in pick:
            flat[p] = MAX_VALUE
            changed[p] = True
        success = group.is_success(adv, true_label, target)
    return AdversarialExample(x, adv, int(true_label), int(target), success, time.perf_counter() - t0,
                              cfg.kind, cfg.target_mode)
