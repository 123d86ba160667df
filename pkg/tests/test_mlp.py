import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnnborrow.errors import NonFiniteLoss, ShapeMismatch
from dnnborrow.mlp import (
    MlpModel,
    MlpSpec,
    TrainConfig,
    candidate_grid,
    cross_validate,
    dropout_masks,
    fit,
    forward,
    init_model,
    loss_and_gradient,
    train,
)


def numeric_gradient(model, x, y, step=1e-5):
    grads = []
    for group in (model.weights, model.biases):
        out = []
        for p in group:
            g = np.zeros_like(p)
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = p[idx]
                p[idx] = old + step
                up = np.mean((forward(model, x) - y) ** 2)
                p[idx] = old - step
                down = np.mean((forward(model, x) - y) ** 2)
                p[idx] = old
                g[idx] = (up - down) / (2 * step)
            out.append(g)
        grads.append(out)
    return grads


def test_parameter_count():
    spec = MlpSpec(4, 2, (60, 60))
    model = init_model(spec, 0)
    assert spec.n_params == 4082
    assert model.parameters().size == 4082


def test_init_determinism_and_seed_sensitivity():
    spec = MlpSpec(4, 2, (60, 60))
    np.testing.assert_array_equal(init_model(spec, 3).parameters(), init_model(spec, 3).parameters())
    for s in range(10):
        assert np.any(init_model(spec, s).parameters() != init_model(spec, s + 100).parameters())


def test_init_scheme():
    model = init_model(MlpSpec(50, 1, (20,)), 1)
    assert np.abs(model.weights[0]).max() <= 1 / np.sqrt(50)
    assert np.abs(model.weights[1]).max() <= 1 / np.sqrt(20)
    assert all(np.all(b == 0) for b in model.biases)


def test_zero_network_sigmoid_half():
    model = init_model(MlpSpec(3, 2, (5,)), 0)
    for p in model.weights + model.biases:
        p[...] = 0
    np.testing.assert_array_equal(forward(model, np.random.default_rng(0).random((7, 3))), 0.5)


def test_identity_linear_layer():
    model = init_model(MlpSpec(3, 3, (), output_activation="linear"), 0)
    model.weights[0][...] = np.eye(3)
    x = np.random.default_rng(1).normal(size=(4, 3))
    np.testing.assert_array_equal(forward(model, x), x)


def test_hand_computed_network():
    model = init_model(MlpSpec(2, 1, (2,), output_activation="linear"), 0)
    model.weights[0][...] = [[1, -2], [3, 1]]
    model.biases[0][...] = [0, 1]
    model.weights[1][...] = [[2], [-1]]
    model.biases[1][...] = [1]
    # x = (1, 2): hidden pre = (7, 1) -> relu (7, 1) -> 14 - 1 + 1 = 14
    # x = (2, -1): hidden pre = (-1, -4) -> relu (0, 0) -> 1
    out = forward(model, [[1, 2], [2, -1]])
    np.testing.assert_allclose(out, [[14.0], [1.0]], atol=1e-12)


def test_shape_mismatch():
    model = init_model(MlpSpec(4, 2, (3,)), 0)
    with pytest.raises(ShapeMismatch):
        forward(model, np.zeros((2, 3)))
    with pytest.raises(ShapeMismatch):
        loss_and_gradient(model, np.zeros((2, 4)), np.zeros((2, 3)))


def test_loss_zero_when_targets_equal_outputs():
    model = init_model(MlpSpec(3, 2, (4,)), 2)
    x = np.random.default_rng(2).random((5, 3))
    loss, gw, gb = loss_and_gradient(model, x, forward(model, x))
    assert loss == 0
    assert all(np.all(g == 0) for g in gw + gb)


def test_single_linear_unit():
    model = init_model(MlpSpec(1, 1, (), output_activation="linear"), 0)
    model.weights[0][...] = 0.7
    loss, gw, gb = loss_and_gradient(model, [[1.0]], [[0.0]])
    assert loss == pytest.approx(0.49)
    assert gw[0][0, 0] == pytest.approx(1.4)


def test_non_finite_target():
    model = init_model(MlpSpec(1, 1, (2,)), 0)
    with pytest.raises(NonFiniteLoss):
        loss_and_gradient(model, [[1.0]], [[np.nan]])


@pytest.mark.parametrize("instance", range(20))
def test_gradient_matches_finite_differences(instance):
    rng = np.random.default_rng(instance)
    depth = int(rng.integers(1, 4))
    widths = tuple(int(w) for w in rng.integers(2, 7, size=depth))
    act = ["sigmoid", "linear"][instance % 2]
    spec = MlpSpec(int(rng.integers(1, 5)), int(rng.integers(1, 3)), widths, output_activation=act)
    model = init_model(spec, instance)
    for b in model.biases:
        b[...] = rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=(6, spec.input_dim))
    y = rng.random((6, spec.output_dim))
    _, gw, gb = loss_and_gradient(model, x, y)
    nw, nb = numeric_gradient(model, x, y)
    for a, b in zip(gw + gb, nw + nb):
        rel = np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-4)
        assert rel.max() < 1e-4


def test_dropout_expectation_matches_inference():
    spec = MlpSpec(3, 1, (8, 8), dropout_rate=0.1)
    model = init_model(spec, 4)
    h1 = np.maximum(np.array([[0.3, 0.5, 0.9]]) @ model.weights[0] + model.biases[0], 0)
    infer_pre = h1 @ model.weights[1] + model.biases[1]
    rng = np.random.default_rng(0)
    masks = dropout_masks(model, 100_000, rng)[0]
    train_pre = ((h1 * masks) @ model.weights[1] + model.biases[1]).mean(axis=0)
    np.testing.assert_allclose(train_pre, infer_pre[0], rtol=0.02, atol=1e-3)


def test_linear_regression_recovers_slope():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(1000, 1))
    y = 2 * x
    slope = np.linalg.lstsq(x, y, rcond=None)[0][0, 0]
    cfg = TrainConfig(epochs=200, learning_rate=1e-2, seed=1, holdout_fraction=0.0)
    model = fit(MlpSpec(1, 1, (), output_activation="linear"), x, y, cfg)
    assert abs(model.weights[0][0, 0] - slope) < 0.05


def test_zero_learning_rate_leaves_parameters():
    model = init_model(MlpSpec(2, 1, (4,)), 0)
    x = np.random.default_rng(0).random((50, 2))
    trained = train(model, x, x[:, :1], TrainConfig(epochs=3, learning_rate=0.0))
    np.testing.assert_array_equal(trained.parameters(), model.parameters())
    assert trained.training_summary["n_holdout"] == 5


def test_training_is_deterministic():
    x = np.random.default_rng(0).random((300, 2))
    y = x.prod(axis=1, keepdims=True)
    cfg = TrainConfig(epochs=5, seed=9)
    spec = MlpSpec(2, 1, (10,), dropout_rate=0.1)
    np.testing.assert_array_equal(fit(spec, x, y, cfg).parameters(), fit(spec, x, y, cfg).parameters())


def test_divergence_reports_epoch():
    model = init_model(MlpSpec(1, 1, (), output_activation="linear"), 0)
    x = np.full((10, 1), 1e200)
    with pytest.raises(NonFiniteLoss) as info:
        train(model, x, x, TrainConfig(epochs=3, holdout_fraction=0.0))
    assert info.value.epoch == 0


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    x=st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3),
)
def test_sigmoid_outputs_in_unit_interval(seed, x):
    model = init_model(MlpSpec(3, 2, (5, 5)), seed)
    out = forward(model, np.array(x))
    assert np.all((out >= 0) & (out <= 1))


def test_model_json_round_trip_is_bit_exact():
    model = fit(MlpSpec(2, 2, (7,)), np.random.default_rng(0).random((40, 2)), np.full((40, 2), 0.3), TrainConfig(epochs=2))
    back = MlpModel.loads(model.dumps())
    np.testing.assert_array_equal(back.parameters(), model.parameters())
    assert back.spec == model.spec
    assert back.training_summary == model.training_summary
    assert back.dumps() == model.dumps()


class TestCrossValidate:
    def data(self):
        rng = np.random.default_rng(5)
        x = rng.random((400, 2))
        y = np.column_stack([0.5 + 0.3 * np.sin(4 * x[:, 0]) * x[:, 1], 0.2 + 0.5 * x[:, 0] * x[:, 1]])
        return x, y

    def test_single_candidate(self):
        x, y = self.data()
        spec = MlpSpec(2, 2, (5,))
        best, scores = cross_validate([spec], x, y, TrainConfig(epochs=2))
        assert best == spec and len(scores) == 1

    def test_identical_candidates_tie_to_first(self):
        x, y = self.data()
        a = MlpSpec(2, 2, (5,))
        b = MlpSpec(2, 2, (5,))
        best, scores = cross_validate([a, b], x, y, TrainConfig(epochs=2, seed=1))
        assert best is a

    def test_adequate_beats_underfit(self):
        x, y = self.data()
        under = MlpSpec(2, 2, (1,))
        adequate = MlpSpec(2, 2, (60, 60))
        best, scores = cross_validate([under, adequate], x, y, TrainConfig(epochs=60, seed=2, fold_count=3))
        assert best is adequate
        assert scores[1] < scores[0]

    def test_failed_candidate_scores_inf(self):
        x = np.full((20, 1), 1e200)
        spec = MlpSpec(1, 1, (), output_activation="linear")
        _, scores = cross_validate([spec], x, x, TrainConfig(epochs=1, fold_count=2))
        assert scores == [float("inf")]

    def test_grid_matches_design(self):
        grid = candidate_grid(4, 2)
        assert len(grid) == 18
        assert {g.hidden_widths for g in grid} >= {(60, 60), (50, 50, 50), (20,)}
