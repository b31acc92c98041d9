import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xensemble import diversity as dv


def test_hand_case_kappa_is_exactly_point_six():
    counts = np.array([[40, 10], [10, 40]])
    assert dv.kappa_from_counts(counts) == 0.6


def test_hand_case_from_label_lists():
    a = [0] * 50 + [1] * 50
    b = [0] * 40 + [1] * 10 + [0] * 10 + [1] * 40
    assert dv.kappa_pair(a, b, 2) == 0.6


def test_kappa_of_a_model_with_itself():
    a = [0, 1, 2, 2, 1, 0, 1]
    assert dv.kappa_pair(a, a, 3) == 1.0
    assert dv.kappa_pair([2] * 5, [2] * 5, 3) == 1.0


def test_independent_predictors_score_zero():
    a = [0, 0, 1, 1]
    b = [0, 1, 0, 1]
    assert dv.kappa_pair(a, b, 2) == 0.0


@pytest.mark.parametrize("pool,expected", [(3, 4), (5, 26), (10, 1013)])
def test_subset_counts(pool, expected):
    assert len(dv.enumerate_teams(pool)) == expected == 2 ** pool - pool - 1


@pytest.mark.parametrize("verifiers,expected", [(3, 4), (4, 11)])
def test_candidate_teams_pair_the_target_with_verifier_subsets(verifiers, expected):
    ids = ["TM"] + [f"VM{i}" for i in range(1, verifiers + 1)]
    teams = dv.candidate_teams("TM", ids[1:], np.eye(len(ids)), ids)
    assert len(teams) == expected
    assert all("TM" in t.member_ids and t.size >= 3 for t in teams)


def test_matrix_is_symmetric_with_unit_diagonal(rng):
    table = [rng.integers(0, 4, 60) for _ in range(5)]
    k = dv.kappa_matrix(table, 4)
    np.testing.assert_array_equal(k, k.T)
    np.testing.assert_array_equal(np.diag(k), 1.0)


def test_ranking_is_ascending_and_prunes():
    teams = [dv.EnsembleTeam(("A", "B", "C"), 0.5), dv.EnsembleTeam(("A", "B", "D"), 0.2),
             dv.EnsembleTeam(("A", "C", "D"), 0.9), dv.EnsembleTeam(("A", "B", "C", "D"), 0.2)]
    ranked = dv.rank_teams(teams, threshold=0.6)
    assert [t.member_ids for t in ranked] == [("A", "B", "D"), ("A", "B", "C", "D"), ("A", "B", "C")]
    with pytest.raises(dv.EmptyPoolError):
        dv.rank_teams(teams, threshold=0.1)


def test_select_team_policies():
    pool = [dv.EnsembleTeam(("A", "B", str(i)), 0.1 * i) for i in range(5)]
    assert dv.select_team(pool, "best") is pool[0]
    picks = {dv.select_team(pool, "random-top-m", m=3, seed=s).member_ids for s in range(40)}
    assert picks == {t.member_ids for t in pool[:3]}
    with pytest.raises(dv.EmptyPoolError):
        dv.select_team([], "best")


def test_team_kappa_averages_pairs():
    k = np.array([[1, 0.2, 0.4], [0.2, 1, 0.6], [0.4, 0.6, 1]])
    assert dv.team_kappa([0, 1, 2], k) == pytest.approx(0.4)


def test_csv_uses_exact_floats():
    text = dv.kappa_matrix_csv(np.array([[1.0, 1 / 3], [1 / 3, 1.0]]), ["a", "b"])
    assert text.splitlines()[1] == f"a,1.0,{1 / 3!r}"


labels = st.lists(st.integers(0, 3), min_size=2, max_size=40)


@given(st.data())
def test_kappa_is_symmetric_and_bounded(data):
    a = data.draw(labels)
    b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
    k_ab, k_ba = dv.kappa_pair(a, b, 4), dv.kappa_pair(b, a, 4)
    assert k_ab == k_ba
    assert -1.0 - 1e-12 <= k_ab <= 1.0 + 1e-12


@given(st.integers(2, 12))
def test_subset_count_formula(m):
    assert len(dv.enumerate_teams(m)) == 2 ** m - m - 1 == sum(math.comb(m, r) for r in range(2, m + 1))
