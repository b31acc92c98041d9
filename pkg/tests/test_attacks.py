import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from xensemble import attacks as atk
from xensemble import nncore as nn
from xensemble.attacks.report import patch_std

from conftest import constant_model


def linear_model(bias: float = 0.0) -> nn.MicroModel:
    w = np.array([[1.0, 1.0, 1.0, 1.0], [-1.0, -1.0, -1.0, -1.0]])
    return nn.MicroModel((nn.Layer(w, np.array([0.0, bias]), "identity"),), 2, 4)


def test_fgsm_untargeted_step_is_signed_gradient():
    x = np.full(4, 0.5)
    ex = atk.fgsm(linear_model(), x, 0, atk.AttackConfig("fgsm", epsilon=0.1))
    np.testing.assert_allclose(ex.perturbed, np.full(4, 0.4))
    assert ex.target_label is None and not ex.success


def test_fgsm_output_is_clipped():
    x = np.array([0.0, 0.02, 0.5, 1.0])
    ex = atk.fgsm(linear_model(), x, 0, atk.AttackConfig("fgsm", epsilon=0.3))
    assert ex.perturbed.min() >= 0.0 and ex.perturbed.max() <= 1.0
    assert ex.perturbed[0] == 0.0


def test_zero_budget_fgsm_changes_nothing():
    x = np.full(4, 0.3)
    ex = atk.fgsm(linear_model(), x, 0, atk.AttackConfig("fgsm", epsilon=0.0))
    np.testing.assert_array_equal(ex.perturbed, x)


def test_bim_and_pgd_stay_in_the_ball(tiny_problem):
    _, test, model = tiny_problem
    x, y = test.images[0], int(test.labels[0])
    for cfg in (atk.AttackConfig("bim", epsilon=0.05, step=0.01, max_iters=15),
                atk.AttackConfig("pgd", epsilon=0.05, step=0.01, max_iters=15, restarts=3, seed=4)):
        ex = atk.run_attack(model, x, y, cfg)
        assert np.abs(ex.perturbed - x).max() <= 0.05 + 1e-12
        assert ex.perturbed.min() >= 0 and ex.perturbed.max() <= 1


def test_pgd_is_seed_deterministic(tiny_problem):
    _, test, model = tiny_problem
    cfg = atk.AttackConfig("pgd", epsilon=0.05, step=0.01, max_iters=5, restarts=2, seed=9)
    a = atk.pgd(model, test.images[1], int(test.labels[1]), cfg)
    b = atk.pgd(model, test.images[1], int(test.labels[1]), cfg)
    np.testing.assert_array_equal(a.perturbed, b.perturbed)


def test_cw2_reaches_target_with_confidence(tiny_problem):
    _, test, model = tiny_problem
    x, y = test.images[2], int(test.labels[2])
    ex = atk.cw2(model, x, y, atk.AttackConfig("cw2", "most", max_iters=1000, confidence=1.0, c=5.0))
    assert ex.target_label == 1 - y
    assert ex.success
    z = nn.logits(model, ex.perturbed)
    assert z[ex.target_label] - z[y] >= 1.0
    assert ex.perturbed.min() >= 0 and ex.perturbed.max() <= 1


def test_targeted_kinds_refuse_untargeted_mode():
    with pytest.raises(ValueError):
        atk.AttackConfig("cw2")
    with pytest.raises(ValueError):
        atk.AttackConfig("jsma")
    with pytest.raises(ValueError):
        atk.AttackConfig("bim", epsilon=0.01, step=0.02)


def test_select_target_modes_and_ties():
    p = nn.PredictionVector(np.array([0.1, 0.5, 0.3, 0.1]))
    assert atk.select_target(p, "most", 1) == 2
    assert atk.select_target(p, "least-likely", 1) == 0
    assert atk.select_target(p, "least-likely", 0) == 3


def test_ensemble_success_needs_every_model():
    stubborn = constant_model([0.99, 0.01])
    cfg = atk.AttackConfig("fgsm", epsilon=1.0)
    x = np.full(4, 0.5)
    alone = atk.fgsm(linear_model(0.5), x, 0, cfg)
    both = atk.ensemble_attack([linear_model(0.5), stubborn], x, 0, cfg)
    assert nn.forward(linear_model(0.5), alone.perturbed).label == 1 and alone.success
    assert not both.success


def test_single_model_group_reduces_to_the_model(rng):
    m = nn.init_model([4, 5, 3], seed=1)
    x = rng.uniform(0, 1, 4)
    g = atk.ModelGroup([m])
    l, grad = g.loss_grad(x, 2)
    l2, grad2 = nn.loss_and_input_gradient(m, x, 2)
    assert l == l2
    np.testing.assert_array_equal(grad, grad2)
    np.testing.assert_array_equal(g.jacobian(x), nn.jacobian(m, x))


def test_pair_saliency_hand_case():
    alpha = np.array([1.0, 2.0, -5.0, 0.5])
    beta = np.array([-1.0, -3.0, 10.0, -0.1])
    everything = np.ones(4, dtype=bool)
    assert atk.pair_saliency(alpha, beta, everything) == (0, 1)
    assert atk.pair_saliency(alpha, beta, np.array([True, False, True, True])) == (0, 3)
    assert atk.single_saliency(alpha, beta, everything) == 1
    assert atk.pair_saliency(-np.abs(alpha), beta, everything) is None


def test_jsma_respects_distortion_budget(tiny_problem):
    _, test, model = tiny_problem
    x, y = test.images[0], int(test.labels[0])
    cfg = atk.AttackConfig("jsma", "most", max_distortion=0.25)
    ex = atk.jsma(model, x, 1 - y, cfg, true_label=y)
    changed = np.flatnonzero(ex.perturbed != x)
    assert changed.size <= 4
    assert np.all(ex.perturbed.reshape(-1)[changed] == 1.0)


def test_rmsd_hand_cases():
    x = np.zeros((4, 4))
    assert atk.rmsd(x, x + 0.1) == pytest.approx(0.1)
    y = x.copy()
    y[0, 0] = 0.4
    assert atk.rmsd(x, y) == pytest.approx(0.1)


def test_percept_on_flat_image_is_mean_abs_delta():
    x = np.full((4, 4), 0.5)
    y = x.copy()
    y[1, 2] += 1 / 255
    assert atk.percept_distance(x, y) == pytest.approx(1 / 16)


def test_percept_discounts_busy_regions():
    busy = np.indices((4, 4)).sum(axis=0) % 2 * 1.0
    flat = np.full((4, 4), 0.5)
    d = np.zeros((4, 4))
    d[1, 1] = 0.01
    assert atk.percept_distance(busy, busy * 0.99 + d) < atk.percept_distance(flat, flat + d)


def _patch_std_oracle(img):
    v = img * 255.0
    n = v.shape[0]
    out = np.zeros_like(v)
    for i in range(n):
        for j in range(n):
            nb = [v[a, b] for a in range(i - 1, i + 2) for b in range(j - 1, j + 2) if 0 <= a < n and 0 <= b < n]
            out[i, j] = np.std(nb)
    return out


def test_patch_std_matches_scalar_oracle(rng):
    img = rng.uniform(0, 1, (6, 6))
    np.testing.assert_allclose(patch_std(img), _patch_std_oracle(img), rtol=1e-12)


def test_evaluate_attack_untargeted_and_targeted(tiny_problem):
    _, test, model = tiny_problem
    xs = test.images[:6]
    ys = test.labels[:6]
    un = [atk.fgsm(model, x, int(y), atk.AttackConfig("fgsm", epsilon=0.3)) for x, y in zip(xs, ys)]
    rep = atk.evaluate_attack(un, model)
    assert rep.mr == rep.asr and rep.count == 6
    tg = [atk.fgsm(model, x, int(y), atk.AttackConfig("fgsm", "most", epsilon=0.3)) for x, y in zip(xs, ys)]
    rep_t = atk.evaluate_attack(tg, model)
    assert rep_t.mr >= rep_t.asr


def test_zero_success_batch_reports_zero_costs():
    x = np.full(4, 0.5)
    ex = atk.fgsm(constant_model([0.9, 0.1]), x, 0, atk.AttackConfig("fgsm", epsilon=0.1))
    rep = atk.evaluate_attack([ex], constant_model([0.9, 0.1]))
    assert rep.zero_success and rep.perturb == 0.0 and rep.adv_conf == 0.0


def test_batch_file_round_trip(tmp_path, tiny_problem):
    _, test, model = tiny_problem
    exs = [atk.fgsm(model, test.images[i], int(test.labels[i]), atk.AttackConfig("fgsm", epsilon=0.1))
           for i in range(3)]
    atk.save_adv_batch(tmp_path / "b.jsonl", exs, [f"test:{i}" for i in range(3)])
    back, recs = atk.load_adv_batch(tmp_path / "b.jsonl", test)
    assert [r["id"] for r in recs] == ["0", "1", "2"]
    for a, b in zip(exs, back):
        np.testing.assert_array_equal(a.perturbed, b.perturbed)
        np.testing.assert_array_equal(a.original, b.original)


def test_batch_file_with_foreign_reference(tmp_path, tiny_problem):
    _, test, model = tiny_problem
    ex = atk.fgsm(model, test.images[0], int(test.labels[0]), atk.AttackConfig("fgsm", epsilon=0.1))
    atk.save_adv_batch(tmp_path / "b.jsonl", [ex], ["train:0"])
    with pytest.raises(ValueError, match="b.jsonl:1"):
        atk.load_adv_batch(tmp_path / "b.jsonl", test)


@given(arrays(np.float64, 16, elements=st.floats(0, 1)), st.floats(0, 0.5))
def test_fgsm_linf_never_exceeds_budget(x, eps):
    m = nn.init_model([16, 6, 3], seed=2)
    ex = atk.fgsm(m, x, 0, atk.AttackConfig("fgsm", epsilon=eps))
    assert np.abs(ex.perturbed - x).max() <= eps + 1e-12
    assert ex.perturbed.min() >= 0 and ex.perturbed.max() <= 1


@given(arrays(np.float64, (4, 4), elements=st.floats(0, 1)), arrays(np.float64, (4, 4), elements=st.floats(0, 1)))
def test_distances_are_nonnegative_and_zero_on_identity(a, b):
    assert atk.rmsd(a, a) == 0.0 and atk.percept_distance(a, a) == 0.0
    assert atk.rmsd(a, b) >= 0 and atk.percept_distance(a, b) >= 0
