"""Input-denoising plus model-verification defense runtime.

A query is expanded into ``[x, df_1(x), ..., df_k(x)]``, each variant is
scored by every member of the chosen verification team, and the (k+1) x n
prediction vectors are combined by a consensus rule. If the winning label's
vote share reaches the confidence level T the query is Verified (winner
equals the target model's raw label) or Repaired (it differs); otherwise it
is Flagged.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import nncore
from .denoise import DenoiserSpec
from .diversity import EmptyPoolError, EnsembleTeam, select_team
from .nncore import MicroModel, PredictionVector

VERIFIED, REPAIRED, FLAGGED = "Verified", "Repaired", "Flagged"
RULES = ("majority", "plurality", "average", "weighted-average")
ORIGINAL = "original"


@dataclass(frozen=True)
class DefenseConfig:
    denoisers: tuple = ()
    team_policy: str = "best"
    top_m: int = 3
    consensus_rule: str = "plurality"
    confidence_level: float = 0.5
    include_target_vote: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "denoisers", tuple(self.denoisers))
        if any(not isinstance(d, DenoiserSpec) for d in self.denoisers):
            raise ValueError("denoisers must be DenoiserSpec instances")
        if self.team_policy not in ("best", "random-top-m"):
            raise ValueError(f"unknown team policy {self.team_policy!r}")
        if self.consensus_rule not in RULES:
            raise ValueError(f"unknown consensus rule {self.consensus_rule!r}")
        if not 0.0 <= self.confidence_level <= 1.0:
            raise ValueError("confidence_level must lie in [0, 1]")


@dataclass(frozen=True)
class TeamPool:
    """Serving-time model pool with its kappa-ranked teams (immutable)."""
    models: Mapping[str, MicroModel]
    target_id: str
    teams: tuple

    def __post_init__(self):
        object.__setattr__(self, "models", dict(self.models))
        object.__setattr__(self, "teams", tuple(self.teams))
        if not self.teams:
            raise EmptyPoolError("team pool is empty")
        if self.target_id not in self.models:
            raise ValueError("target model missing from pool")
        for t in self.teams:
            missing = [m for m in t.member_ids if m not in self.models]
            if missing:
                raise ValueError(f"team references unknown models {missing}")


@dataclass(frozen=True)
class ConsensusResult:
    label: Optional[int]
    share: float
    vector: Optional[PredictionVector] = None

    @property
    def reached(self) -> bool:
        return self.label is not None


@dataclass(frozen=True)
class Verdict:
    outcome: str
    label: Optional[int]
    agreement: float
    detection_score: float
    ensemble_vector: Optional[PredictionVector] = None
    per_model_vectors: dict = field(default_factory=dict)
    team: tuple = ()
    target_label: Optional[int] = None

    def __post_init__(self):
        if self.outcome not in (VERIFIED, REPAIRED, FLAGGED):
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if (self.outcome == FLAGGED) != (self.label is None):
            raise ValueError("Flagged verdicts carry no label; others must")

    @property
    def flagged(self) -> bool:
        return self.outcome == FLAGGED


def l1_distance(a, b) -> float:
    pa = np.asarray(a.probs if isinstance(a, PredictionVector) else a, dtype=np.float64)
    pb = np.asarray(b.probs if isinstance(b, PredictionVector) else b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise ValueError(f"class count mismatch: {pa.shape[0]} vs {pb.shape[0]}")
    return float(np.abs(pa - pb).sum())


def _probs_matrix(vectors) -> np.ndarray:
    return np.array([v.probs if isinstance(v, PredictionVector) else v for v in vectors], dtype=np.float64)


def detection_score(vectors: Sequence) -> float:
    """Mean pairwise L1 distance over 2: 0 for identical vectors, 1 for disjoint one-hots."""
    P = _probs_matrix(vectors)
    if P.shape[0] < 2:
        raise ValueError("detection_score needs at least two vectors")
    d = np.abs(P[:, None, :] - P[None, :, :]).sum(axis=-1)
    iu = np.triu_indices(P.shape[0], k=1)
    return float(d[iu].mean() / 2.0)


def consensus(vectors: Sequence, rule: str = "plurality") -> ConsensusResult:
    """Combine prediction vectors.

    majority: the winner needs strictly more than half the votes. plurality:
    the winner needs strictly more votes than any other label. average and
    weighted-average (weights = each vector's top confidence) take the argmax
    of the mean vector. ``share`` is always the winner's share of hard votes;
    without a winner it is the largest vote share.
    """
    if rule not in RULES:
        raise ValueError(f"unknown consensus rule {rule!r}")
    P = _probs_matrix(vectors)
    if P.shape[0] == 0:
        raise ValueError("consensus needs at least one vector")
    votes = np.argmax(P, axis=1)
    n = votes.shape[0]
    tally = Counter(votes.tolist())
    ranked = sorted(tally.items(), key=lambda kv: (-kv[1], kv[0]))
    top_label, top_count = ranked[0]

    if rule in ("majority", "plurality"):
        mean_vec = PredictionVector(P.mean(axis=0))
        if rule == "majority" and top_count * 2 <= n:
            return ConsensusResult(None, top_count / n, mean_vec)
        if rule == "plurality" and len(ranked) > 1 and ranked[1][1] == top_count:
            return ConsensusResult(None, top_count / n, mean_vec)
        return ConsensusResult(int(top_label), top_count / n, mean_vec)

    weights = np.ones(n) if rule == "average" else P.max(axis=1)
    vec = PredictionVector(weights @ P / weights.sum())
    return ConsensusResult(vec.label, tally.get(vec.label, 0) / n, vec)


def _draw_team(pool: TeamPool, cfg: DefenseConfig, rng: np.random.Generator) -> EnsembleTeam:
    return select_team(pool.teams, cfg.team_policy, cfg.top_m, rng=rng)


def _decide(vectors: dict, team: EnsembleTeam, target_id: str, target_label: int,
            cfg: DefenseConfig) -> Verdict:
    voting = [v for (_, mid), v in vectors.items() if cfg.include_target_vote or mid != target_id]
    result = consensus(voting, cfg.consensus_rule)
    score = detection_score(list(vectors.values())) if len(vectors) >= 2 else 0.0
    if result.reached and result.share >= cfg.confidence_level:
        outcome = VERIFIED if result.label == target_label else REPAIRED
        label = result.label
    else:
        outcome, label = FLAGGED, None
    return Verdict(outcome, label, result.share, score, result.vector, vectors, team.member_ids, target_label)


def _defend_many(inputs: Sequence, target_model: MicroModel, pool: TeamPool, cfg: DefenseConfig,
                 rng: np.random.Generator) -> list[Verdict]:
    names = [ORIGINAL] + [d.canonical_name for d in cfg.denoisers]
    raw = np.stack([np.asarray(x, dtype=np.float64) for x in inputs])
    stacks = [raw] + [np.stack([d.apply(img) for img in raw]) for d in cfg.denoisers]
    needed = sorted({m for t in pool.teams for m in t.member_ids})
    model_of = {mid: (target_model if mid == pool.target_id else pool.models[mid]) for mid in needed}
    probs = {(name, mid): nncore.predict_proba(model_of[mid], stack)
             for name, stack in zip(names, stacks) for mid in needed}
    target_labels = np.argmax(nncore.predict_proba(target_model, raw), axis=1)

    verdicts = []
    for q in range(raw.shape[0]):
        team = _draw_team(pool, cfg, rng)
        vectors = {(name, mid): PredictionVector(probs[(name, mid)][q])
                   for name in names for mid in team.member_ids}
        verdicts.append(_decide(vectors, team, pool.target_id, int(target_labels[q]), cfg))
    return verdicts


def defend(x, target_model: MicroModel, pool: TeamPool, cfg: DefenseConfig,
           rng: Optional[np.random.Generator] = None) -> Verdict:
    """Run one query through the defense.

    ``rng`` drives team selection under ``random-top-m``; by default a fresh
    generator seeded with ``cfg.seed`` is used.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return _defend_many([x], target_model, pool, cfg, rng)[0]


def defend_batch(inputs: Sequence, target_model: MicroModel, pool: TeamPool,
                 cfg: DefenseConfig) -> list[Verdict]:
    """Element-wise :func:`defend`, in order, with one team draw per query
    from a single generator seeded by ``cfg.seed``."""
    if len(inputs) == 0:
        return []
    return _defend_many(inputs, target_model, pool, cfg, np.random.default_rng(cfg.seed))


def undefended_verdicts(inputs: Sequence, target_model: MicroModel) -> list[Verdict]:
    """Bypass mode: every query is Verified with the target model's label."""
    return single_model_verdicts(inputs, target_model)


def single_model_verdicts(inputs: Sequence, model: MicroModel) -> list[Verdict]:
    """One model acting alone: its label is the answer, nothing is flagged."""
    if len(inputs) == 0:
        return []
    P = nncore.predict_proba(model, np.stack([np.asarray(x, dtype=np.float64) for x in inputs]))
    out = []
    for p in P:
        vec = PredictionVector(p)
        out.append(Verdict(VERIFIED, vec.label, 1.0, 0.0, vec, {}, (), vec.label))
    return out
