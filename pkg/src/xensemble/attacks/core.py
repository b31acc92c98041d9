"""Attack configuration, result types and the shared model-group objective."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .. import nncore
from ..nncore import MicroModel, PredictionVector

KINDS = ("fgsm", "bim", "pgd", "cw2", "jsma")
TARGET_MODES = ("untargeted", "most", "least-likely")
LINF_KINDS = ("fgsm", "bim", "pgd")


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    target_mode: str = "untargeted"
    epsilon: float = 0.0156
    step: float = 0.0012
    max_iters: int = 10
    restarts: int = 1
    random_init: bool = True
    confidence: float = 5.0
    check_every: int = 100
    c: float = 1.0
    learning_rate: float = 0.01
    early_stop: bool = True
    max_distortion: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"unknown target mode {self.target_mode!r}")
        for name in ("epsilon", "step", "confidence", "c", "learning_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.kind in ("bim", "pgd"):
            if self.step <= 0:
                raise ValueError("iterative attacks need step > 0")
            if self.step > self.epsilon:
                raise ValueError("step must not exceed epsilon")
        if self.max_iters < 0 or self.check_every < 1 or self.restarts < 1:
            raise ValueError("max_iters >= 0, check_every >= 1 and restarts >= 1 required")
        if not 0.0 <= self.max_distortion <= 1.0:
            raise ValueError("max_distortion must lie in [0, 1]")
        if self.kind == "cw2" and self.target_mode == "untargeted":
            raise ValueError("cw2 is a targeted attack; use target_mode 'most' or 'least-likely'")
        if self.kind == "jsma" and self.target_mode == "untargeted":
            raise ValueError("jsma is a targeted attack; use target_mode 'most' or 'least-likely'")

    @property
    def targeted(self) -> bool:
        return self.target_mode != "untargeted"

    @property
    def name(self) -> str:
        return self.kind if not self.targeted else f"{self.kind}-{self.target_mode}"

    def with_seed(self, seed: int) -> "AttackConfig":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class AdversarialExample:
    original: np.ndarray
    perturbed: np.ndarray
    true_label: int
    target_label: Optional[int]
    success: bool
    gen_time_s: float
    kind: str = ""
    target_mode: str = "untargeted"

    @property
    def delta(self) -> np.ndarray:
        return self.perturbed - self.original


def select_target(pred: PredictionVector, mode: str, true_label: Optional[int] = None) -> int:
    """Target class for a targeted attack.

    ``most`` picks the highest-probability class other than the true label;
    ``least-likely`` the lowest-probability class (also skipping the true
    label, which only matters when the vector is degenerate). Ties go to the
    lowest index.
    """
    p = np.asarray(pred.probs if isinstance(pred, PredictionVector) else pred, dtype=np.float64)
    if p.shape[0] < 2:
        raise ValueError("targeted attacks need at least 2 classes")
    if mode not in ("most", "least-likely"):
        raise ValueError(f"select_target needs mode 'most' or 'least-likely', got {mode!r}")
    true_label = int(np.argmax(p)) if true_label is None else int(true_label)
    masked = p.copy()
    if mode == "most":
        masked[true_label] = -np.inf
        return int(np.argmax(masked))
    masked[true_label] = np.inf
    return int(np.argmin(masked))


class ModelGroup:
    """One or more models attacked jointly through their mean objective.

    With a single model every quantity reduces exactly to that model's.
    """

    def __init__(self, models: Sequence[MicroModel]):
        models = list(models)
        if not models:
            raise ValueError("need at least one model")
        dims = {m.input_dim for m in models}
        if len(dims) != 1:
            raise ValueError("models disagree on input dimension")
        self.models = models

    def __len__(self) -> int:
        return len(self.models)

    def mean_probs(self, x: np.ndarray) -> np.ndarray:
        return np.mean([nncore.forward(m, x).probs for m in self.models], axis=0)

    def labels(self, x: np.ndarray) -> list[int]:
        return [nncore.forward(m, x).label for m in self.models]

    def loss_grad(self, x: np.ndarray, label: int) -> tuple[float, np.ndarray]:
        total, grad = 0.0, np.zeros(np.shape(x))
        for m in self.models:
            l, g = nncore.loss_and_input_gradient(m, x, label)
            total += l
            grad += g
        n = len(self.models)
        return total / n, grad / n

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return np.mean([nncore.jacobian(m, x) for m in self.models], axis=0)

    def is_success(self, x: np.ndarray, true_label: int, target: Optional[int]) -> bool:
        labels = self.labels(x)
        if target is None:
            return all(l != true_label for l in labels)
        return all(l == target for l in labels)


def resolve_target(group: ModelGroup, x: np.ndarray, true_label: int, cfg: AttackConfig) -> Optional[int]:
    if not cfg.targeted:
        return None
    return select_target(PredictionVector(group.mean_probs(x)), cfg.target_mode, true_label)


def as_image(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)
