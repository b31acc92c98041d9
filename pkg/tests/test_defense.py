import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xensemble import defense as df
from xensemble import denoise as dn
from xensemble.diversity import EnsembleTeam

from conftest import constant_model, one_hot_model


def pool_of(labels: dict, target: str = "TM", teams=None):
    models = {mid: one_hot_model(lbl) for mid, lbl in labels.items()}
    teams = teams or [EnsembleTeam(tuple(labels), 0.1)]
    return df.TeamPool(models, target, teams), models[target]


def test_l1_and_detection_score_extremes():
    a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert df.l1_distance(a, b) == 2.0
    assert df.detection_score([a, a, a]) == 0.0
    assert df.detection_score([a, b]) == 1.0
    with pytest.raises(ValueError):
        df.l1_distance(a, np.ones(3) / 3)


def test_plurality_majority_and_ties():
    v = [np.eye(3)[i] for i in (0, 0, 1, 2)]
    assert df.consensus(v, "plurality").label == 0
    assert df.consensus(v, "plurality").share == 0.5
    assert df.consensus(v, "majority").label is None
    tie = [np.eye(3)[i] for i in (0, 0, 1, 1)]
    assert not df.consensus(tie, "plurality").reached


def test_average_rules():
    v = [np.array([0.6, 0.4]), np.array([0.6, 0.4]), np.array([0.0, 1.0])]
    assert df.consensus(v, "average").label == 1
    assert df.consensus(v, "weighted-average").label == 1
    assert df.consensus(v, "average").share == pytest.approx(1 / 3)


def test_unanimous_team_verifies():
    pool, tm = pool_of({"TM": 1, "A": 1, "B": 1})
    v = df.defend(np.zeros(4), tm, pool, df.DefenseConfig())
    assert v.outcome == df.VERIFIED and v.label == 1 and v.agreement == 1.0
    assert v.detection_score == 0.0


def test_verifiers_overrule_the_target():
    pool, tm = pool_of({"TM": 0, "A": 2, "B": 2})
    v = df.defend(np.zeros(4), tm, pool, df.DefenseConfig(include_target_vote=False))
    assert v.outcome == df.REPAIRED and v.label == 2 and v.target_label == 0


def test_split_team_is_flagged():
    pool, tm = pool_of({"TM": 0, "A": 1, "B": 2})
    v = df.defend(np.zeros(4), tm, pool, df.DefenseConfig())
    assert v.flagged and v.label is None


def test_confidence_level_gates_the_verdict():
    pool, tm = pool_of({"TM": 0, "A": 0, "B": 0, "C": 1})
    assert df.defend(np.zeros(4), tm, pool, df.DefenseConfig(confidence_level=0.75)).outcome == df.VERIFIED
    assert df.defend(np.zeros(4), tm, pool, df.DefenseConfig(confidence_level=0.8)).flagged


def test_denoisers_multiply_the_vectors():
    pool, tm = pool_of({"TM": 1, "A": 1, "B": 1})
    cfg = df.DefenseConfig(denoisers=tuple(dn.parse_denoiser_list("quan-4-bit,rotation_9")))
    v = df.defend(np.zeros((2, 2)), tm, pool, cfg)
    assert len(v.per_model_vectors) == 3 * 3
    assert {k[0] for k in v.per_model_vectors} == {df.ORIGINAL, "quan-4-bit", "rotation_9"}


def test_random_policy_is_reproducible():
    models = {m: one_hot_model(i % 3) for i, m in enumerate(["TM", "A", "B", "C", "D"])}
    teams = [EnsembleTeam(t, 0.1 * i) for i, t in enumerate([("TM", "A", "B"), ("TM", "C", "D"), ("TM", "A", "D")])]
    pool = df.TeamPool(models, "TM", teams)
    cfg = df.DefenseConfig(team_policy="random-top-m", top_m=3, seed=11)
    xs = [np.zeros(4)] * 30
    a = [v.team for v in df.defend_batch(xs, models["TM"], pool, cfg)]
    b = [v.team for v in df.defend_batch(xs, models["TM"], pool, cfg)]
    assert a == b and len(set(a)) > 1


def test_bypass_and_single_model_modes():
    tm = constant_model([0.2, 0.7, 0.1])
    vs = df.undefended_verdicts([np.zeros(4)] * 2, tm)
    assert all(v.outcome == df.VERIFIED and v.label == 1 for v in vs)
    assert df.undefended_verdicts([], tm) == []


def test_pool_validation():
    with pytest.raises(ValueError):
        df.TeamPool({"TM": one_hot_model(0)}, "TM", [EnsembleTeam(("TM", "X", "Y"), 0.0)])
    with pytest.raises(ValueError):
        df.DefenseConfig(consensus_rule="veto")


@given(st.lists(st.integers(0, 3), min_size=1, max_size=15))
def test_consensus_share_is_the_winner_vote_fraction(votes):
    vecs = [np.eye(4)[v] for v in votes]
    r = df.consensus(vecs, "plurality")
    top = max(votes.count(v) for v in set(votes))
    assert r.share == top / len(votes)
    if r.reached:
        assert votes.count(r.label) == top
        assert sum(votes.count(v) == top for v in set(votes)) == 1


@given(st.lists(st.integers(0, 3), min_size=2, max_size=10))
def test_detection_score_in_unit_interval(votes):
    s = df.detection_score([np.eye(4)[v] for v in votes])
    assert 0.0 <= s <= 1.0
