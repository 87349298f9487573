import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from toys import LinearAteToy, TwoTargetToy

from tda.exceptions import DomainError
from tda.nn import Batch, DenseNet, Layer, MSELoss, ParamPartition, per_sample_scores
from tda.targeting import (
    MAX_ITERS,
    TOLERANCE_MET,
    NoLossImprovement,
    TargetingConfig,
    TargetingReport,
    block_gradients,
    combine_directions,
    estimand_gradient,
    nested_submodels,
    plateau_select,
    project_influence,
    stopping_threshold,
    targeting_step,
    tda_direct,
    tda_run,
    tda_run_multi,
)

# projection ------------------------------------------------------------------


def test_projection_of_span_member_is_exact():
    rng = np.random.default_rng(0)
    S = rng.normal(size=(40, 4))
    D = S @ np.array([1.0, -2.0, 0.5, 0.0])
    alpha, proj, resid = project_influence(D, S, TargetingConfig(lam=0.0))
    assert np.allclose(proj, D, atol=1e-10)
    assert resid < 1e-10


def test_projection_on_zero_scores():
    D = np.array([1.0, 2.0, 2.0])
    alpha, proj, resid = project_influence(D, np.zeros((3, 2)), TargetingConfig(lam=0.01))
    assert np.all(alpha == 0) and np.all(proj == 0)
    assert resid == pytest.approx(np.linalg.norm(D) / np.sqrt(3))


def test_projection_hand_least_squares():
    S = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    _, proj, _ = project_influence(np.array([1.0, 2.0, 3.0]), S, TargetingConfig(lam=0.0))
    assert np.allclose(proj, [1.0, 2.0, 0.0])


def test_lasso_projection_matches_ridge_direction_for_tiny_penalty():
    rng = np.random.default_rng(1)
    S = rng.normal(size=(60, 3))
    D = S @ np.array([0.3, -0.2, 0.1]) + 0.01 * rng.normal(size=60)
    a_l1, _, _ = project_influence(D, S, TargetingConfig(lam=1e-9, penalty="l1"))
    a_l2, _, _ = project_influence(D, S, TargetingConfig(lam=1e-9, penalty="l2"))
    assert np.allclose(a_l1, a_l2, atol=1e-6)


# stopping threshold ----------------------------------------------------------


def test_stopping_threshold_examples():
    assert stopping_threshold(0.0, 100) == 0.0
    assert stopping_threshold(1.0, 100) == pytest.approx(1 / (10 * np.log(100)))
    assert stopping_threshold(1.0, 100) == pytest.approx(0.021715, abs=1e-6)
    assert stopping_threshold(2.0, 100) == 2 * stopping_threshold(1.0, 100)


def test_stopping_threshold_domain():
    with pytest.raises(DomainError):
        stopping_threshold(1.0, 1)
    with pytest.raises(DomainError):
        stopping_threshold(-1.0, 10)


# directions and steps --------------------------------------------------------


def test_combine_single_target_keeps_sign():
    a = np.array([1.0, 2.0])
    assert np.allclose(combine_directions(a, [3.0]), a)
    assert np.allclose(combine_directions(a, [-0.5]), -a)


def test_combine_three_four_five():
    A = np.eye(2)
    assert np.allclose(combine_directions(A, [3.0, 4.0]), [0.6, 0.8])


def test_combine_orthonormal_equal_weights():
    assert np.allclose(combine_directions(np.eye(2), [1.0, 1.0]), np.array([1.0, 1.0]) / np.sqrt(2))


def test_combine_zero_d_is_none():
    assert combine_directions(np.eye(2), [0.0, 0.0]) is None


def test_fixed_step_sign():
    cfg = TargetingConfig(step_rule="fixed", gamma=0.5)
    theta, alpha = np.array([1.0, 1.0]), np.array([2.0, -2.0])
    new, g = targeting_step(theta, alpha, 0.3, cfg)
    assert np.allclose(new, theta - 0.5 * alpha) and g == 0.5
    new, _ = targeting_step(theta, alpha, -0.3, cfg)
    assert np.allclose(new, theta + 0.5 * alpha)


@pytest.mark.parametrize("opt", [0.3, 3.0])
@pytest.mark.parametrize("anchor", [True, False])
def test_line_search_on_quadratic_matches_grid_oracle(opt, anchor):
    # loss(theta) = (theta - opt)^2 along alpha = 1; d moves with the gradient
    def evaluate(th):
        return float((th[0] - opt) ** 2), np.array([2 * (th[0] - opt)])

    cfg = TargetingConfig(newton_anchor=anchor)
    new, gamma = targeting_step(np.array([0.0]), np.array([1.0]), -1.0, cfg, evaluate)
    grid = cfg.grid(opt if anchor else 1.0)
    best = grid[np.argmin((grid - opt) ** 2)]
    assert gamma == pytest.approx(best, rel=1e-6)
    # the best candidate sits within one halving of the minimizer (or at the grid edge)
    assert best / 2 <= opt <= 2 * best or best == grid[0]


def test_line_search_rejects_every_uphill_step():
    def evaluate(th):
        return float(th[0] ** 2), np.array([2 * th[0]])

    with pytest.raises(NoLossImprovement):
        targeting_step(np.array([0.0]), np.array([1.0]), 1.0, TargetingConfig(newton_anchor=False), evaluate)


def test_config_validation():
    with pytest.raises(ValueError):
        TargetingConfig(penalty="l3")
    with pytest.raises(ValueError):
        TargetingConfig(penalty="l1", lam=0.0)
    with pytest.raises(ValueError):
        TargetingConfig(max_iters=0)


# the loop --------------------------------------------------------------------


def test_zero_influence_converges_immediately():
    toy = LinearAteToy(0, n=100)
    before = toy.model.flat_params().copy()
    report = tda_run(toy.model, toy.partition, toy.loss, toy.batch, lambda m: np.zeros(toy.n))
    assert report.converged and report.reason == TOLERANCE_MET
    assert report.n_updates == 0 and len(report.iterations) == 1
    assert np.array_equal(toy.model.flat_params(), before)


def test_linear_toy_solves_the_score_equation():
    toy = LinearAteToy(3)
    report = tda_run(toy.model, toy.partition, toy.loss, toy.batch, toy.influence)
    assert report.converged
    last = report.final
    assert abs(np.mean(toy.influence(toy.model))) <= last["eta"][0] + 1e-12
    losses = [it["train_loss"] for it in report.iterations]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_report_round_trip():
    toy = LinearAteToy(4, n=120)
    report = tda_run(toy.model, toy.partition, toy.loss, toy.batch, toy.influence,
                     estimand=None, cfg=TargetingConfig(max_iters=3))
    back = TargetingReport.from_dict(report.to_dict())
    assert back.to_dict() == report.to_dict()


def test_iteration_cap_reported():
    toy = LinearAteToy(5, n=200)
    report = tda_run(toy.model, toy.partition, toy.loss, toy.batch, toy.influence,
                     TargetingConfig(max_iters=1, step_rule="fixed", gamma=1e-9))
    assert report.reason == MAX_ITERS and not report.converged
    assert report.n_updates == 1


def test_multi_target_all_zero():
    toy = TwoTargetToy(0)
    report = tda_run_multi(toy.model, toy.partition, toy.loss, toy.batch, lambda m: np.zeros((toy.n, 2)))
    assert report.converged and report.n_updates == 0


def _sum_sq_mean_influence(toy, theta):
    saved = toy.partition.get(toy.model)
    toy.partition.set(toy.model, theta)
    d = toy.influence(toy.model).mean(axis=0)
    toy.partition.set(toy.model, saved)
    return float(d @ d)


@pytest.mark.parametrize("opposite", [True, False])
def test_combined_direction_descends_sum_of_squares(opposite):
    toy = TwoTargetToy(1, opposite=opposite)
    S = per_sample_scores(toy.model, toy.partition, toy.loss, toy.batch).values
    alpha, proj, _ = project_influence(toy.influence(toy.model), S, TargetingConfig(lam=1e-8))
    direction = combine_directions(alpha, proj.mean(axis=0))
    theta = toy.partition.get(toy.model)
    h = 1e-6
    slope = (_sum_sq_mean_influence(toy, theta - h * direction)
             - _sum_sq_mean_influence(toy, theta + h * direction)) / (2 * h)
    assert slope <= 1e-12


# submodel selection ----------------------------------------------------------


def test_block_gradients_linear_net_by_hand():
    X = np.array([[1.0, 0.0, -3.0], [3.0, 0.0, -1.0]])
    net = DenseNet([Layer(np.ones((1, 3)), np.zeros(1), "identity")])
    grad = estimand_gradient(net, X, lambda out: np.full_like(out, 1.0 / X.shape[0]))
    assert np.allclose(grad, [2.0, 0.0, -2.0, 1.0])
    ranking = block_gradients([[0], [1], [2], [3]], grad)
    assert [pos for pos, _ in ranking] == [0, 2, 3, 1]
    assert ranking[-1][1] == 0.0


def test_block_gradient_ties_break_by_index():
    ranking = block_gradients([[0, 1], [2, 3]], np.array([1.0, 1.0, 1.0, 1.0]))
    assert [pos for pos, _ in ranking] == [0, 1]


def test_nested_submodels_grow():
    nested = nested_submodels([[0, 1], [2], [3, 4]], [(2, 5.0), (0, 3.0), (1, 1.0)])
    assert [m.tolist() for m in nested] == [[3, 4], [0, 1, 3, 4], [0, 1, 2, 3, 4]]


def test_plateau_examples():
    assert plateau_select([(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (3.0, 0.0)]) == 2
    assert plateau_select([(1.0, 0.1), (1.0, 0.2), (1.0, 0.3)]) == 0
    assert plateau_select([(1.0, 0.1)] * 4) == 0
    assert plateau_select([(1.0, 0.1)]) == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(0, 5)), min_size=1, max_size=8))
def test_plateau_index_in_range(reports):
    assert 0 <= plateau_select(reports) < len(reports)


# direct targeting ------------------------------------------------------------


def _linear_direct_setup(seed, n=50, m=4):
    rng = np.random.default_rng(seed)
    Phi = rng.normal(size=(n, m))
    net = DenseNet([Layer(rng.normal(size=(1, m)), np.zeros(1), "identity")])
    part = ParamPartition.from_targets(np.arange(m), net.n_params)
    y = Phi @ rng.normal(size=m) + rng.normal(size=n)
    predict = lambda model: model.forward(Phi)[:, 0]  # noqa: E731
    return rng, Phi, net, part, y, predict


def test_direct_identity_features_recover_h():
    rng = np.random.default_rng(2)
    H = rng.normal(size=4)
    net = DenseNet([Layer(np.zeros((1, 4)), np.zeros(1), "identity")])
    part = ParamPartition.from_targets(np.arange(4), net.n_params)
    res = tda_direct(net, part, H, np.eye(4), rng.normal(size=4), lambda m: m.forward(np.eye(4))[:, 0])
    assert np.allclose(res.alpha, H)


def test_direct_span_member_moves_along_h():
    rng, Phi, net, part, y, predict = _linear_direct_setup(3)
    H = Phi @ np.array([1.0, 0.0, -1.0, 0.5])
    before = predict(net)
    res = tda_direct(net, part, H, Phi, y, predict)
    assert np.allclose(predict(net), before + res.epsilon * H, atol=1e-10)
    # the fitted epsilon solves the H-score equation
    assert abs(np.mean(H * (y - predict(net)))) < 1e-10


def test_direct_orthogonal_residual_leaves_net_unchanged():
    rng, Phi, net, part, _, predict = _linear_direct_setup(4)
    H = Phi[:, 0]
    y = predict(net) + np.linalg.svd(Phi, full_matrices=True)[0][:, -1]
    before = net.flat_params().copy()
    res = tda_direct(net, part, H, Phi, y, predict)
    assert res.epsilon == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(net.flat_params(), before)


def test_direct_rank_deficiency_warns():
    rng, Phi, net, part, y, predict = _linear_direct_setup(5)
    Phi[:, 3] = Phi[:, 2]
    res = tda_direct(net, part, rng.normal(size=50), Phi, y, predict)
    assert res.rank == 3 and res.warnings


def test_mse_toy_batch_shapes():
    toy = LinearAteToy(6, n=50)
    assert isinstance(toy.batch, Batch) and isinstance(toy.loss, MSELoss)
    assert toy.psi(toy.model) == pytest.approx(toy.model.layers[0].weight[0, 3]
                                               + toy.model.layers[0].weight[0, 4]
                                               * np.mean(1 / toy.g + 1 / (1 - toy.g)))
