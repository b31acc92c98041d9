"""Kappa disagreement diversity and kappa-ranked ensemble teams."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import Hashable, Optional, Sequence

import numpy as np


class EmptyPoolError(ValueError):
    """Raised when pruning or selection leaves no team."""


def agreement_counts(preds_a: Sequence[int], preds_b: Sequence[int], num_classes: int) -> np.ndarray:
    """K x K co-label counts; entry (i, j) counts items model A called i and B called j."""
    a = np.asarray(preds_a, dtype=np.int64)
    b = np.asarray(preds_b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("prediction lists must be 1-d and of equal length")
    if a.size == 0:
        raise ValueError("need at least one prediction")
    if a.min() < 0 or b.min() < 0 or a.max() >= num_classes or b.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (a, b), 1)
    return counts


def kappa_from_counts(counts: np.ndarray) -> float:
    """(P_obs - P_chance) / (1 - P_chance), evaluated on integer counts.

    Scaling numerator and denominator by n^2 keeps everything integral, so
    the only rounding is the final division.
    """
    c = [[int(v) for v in row] for row in np.asarray(counts)]
    n = sum(map(sum, c))
    if n <= 0:
        raise ValueError("counts must sum to a positive total")
    agree = sum(c[i][i] for i in range(len(c)))
    chance = sum(sum(c[i]) * sum(row[i] for row in c) for i in range(len(c)))
    if chance == n * n:
        # both predictors constant and identical: treat as full agreement
        return 1.0
    return (n * agree - chance) / (n * n - chance)


def kappa_pair(preds_a: Sequence[int], preds_b: Sequence[int], num_classes: int) -> float:
    """Cohen's kappa between two label sequences (lower = more diverse)."""
    return kappa_from_counts(agreement_counts(preds_a, preds_b, num_classes))


def kappa_matrix(prediction_table: Sequence[Sequence[int]], num_classes: int) -> np.ndarray:
    """Symmetric matrix of pairwise kappa with a unit diagonal."""
    table = [np.asarray(p, dtype=np.int64) for p in prediction_table]
    if len({p.shape for p in table}) > 1:
        raise ValueError("all prediction lists must have the same length")
    m = len(table)
    out = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            out[i, j] = out[j, i] = kappa_pair(table[i], table[j], num_classes)
    return out


def kappa_matrix_csv(matrix: np.ndarray, ids: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model"] + list(ids))
    for name, row in zip(ids, matrix):
        w.writerow([name] + [repr(float(v)) for v in row])
    return buf.getvalue()


def enumerate_teams(pool_size: int) -> list[tuple[int, ...]]:
    """All subsets of ``range(pool_size)`` with at least two members (2^M - M - 1)."""
    if pool_size < 2:
        raise ValueError("pool_size must be >= 2")
    return [combo for r in range(2, pool_size + 1)
            for combo in itertools.combinations(range(pool_size), r)]


@dataclass(frozen=True)
class EnsembleTeam:
    member_ids: tuple
    kappa_avg: float
    benign_acc: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "member_ids", tuple(sorted(self.member_ids)))
        if len(self.member_ids) < 3:
            raise ValueError("a defense team needs at least 3 members")
        if not -1.0 - 1e-12 <= self.kappa_avg <= 1.0 + 1e-12:
            raise ValueError("kappa_avg must lie in [-1, 1]")

    @property
    def size(self) -> int:
        return len(self.member_ids)


def team_kappa(members: Sequence[int], kmat: np.ndarray) -> float:
    """Mean pairwise kappa over the members (indices into ``kmat``)."""
    pairs = list(itertools.combinations(members, 2))
    return float(np.mean([kmat[i, j] for i, j in pairs]))


def candidate_teams(target_id: Hashable, verifier_ids: Sequence[Hashable], kmat: np.ndarray,
                    ids: Sequence[Hashable], benign_acc: Optional[dict] = None,
                    sizes: Optional[Sequence[int]] = None) -> list[EnsembleTeam]:
    """Target model joined with every verifier subset of size >= 2.

    ``kmat`` is indexed in the order of ``ids``. ``sizes`` optionally keeps
    only teams of the given total sizes.
    """
    pos = {mid: i for i, mid in enumerate(ids)}
    if target_id not in pos or any(v not in pos for v in verifier_ids):
        raise ValueError("team members must all appear in the kappa matrix ids")
    verifiers = [v for v in verifier_ids if v != target_id]
    teams = []
    for combo in enumerate_teams(len(verifiers)):
        members = (target_id,) + tuple(verifiers[i] for i in combo)
        if sizes is not None and len(members) not in sizes:
            continue
        kap = team_kappa([pos[m] for m in members], kmat)
        acc = None if benign_acc is None else benign_acc.get(tuple(sorted(members)))
        teams.append(EnsembleTeam(members, kap, acc))
    return teams


def _team_key(team: EnsembleTeam):
    return (team.kappa_avg, team.size, tuple(str(m) for m in team.member_ids))


def rank_teams(teams: Sequence[EnsembleTeam], threshold: float = 1.0) -> list[EnsembleTeam]:
    """Ascending kappa (most diverse first); teams above ``threshold`` pruned.

    Ties: smaller team first, then lexicographic member ids.
    """
    kept = sorted((t for t in teams if t.kappa_avg <= threshold), key=_team_key)
    if not kept:
        raise EmptyPoolError(f"no team has kappa_avg <= {threshold}")
    return kept


def select_team(pool: Sequence[EnsembleTeam], policy: str = "best", m: int = 3,
                rng: Optional[np.random.Generator] = None, seed: Optional[int] = None) -> EnsembleTeam:
    """``best`` takes the head of the ranked pool; ``random-top-m`` draws
    uniformly among the first ``m`` using ``rng`` (or a fresh one from ``seed``).
    """
    if not pool:
        raise EmptyPoolError("cannot select from an empty pool")
    if policy == "best":
        return pool[0]
    if policy == "random-top-m":
        if rng is None:
            rng = np.random.default_rng(seed)
        top = min(max(1, m), len(pool))
        return pool[int(rng.integers(0, top))]
    raise ValueError(f"unknown team policy {policy!r}")
