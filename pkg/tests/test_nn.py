import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from candfree import nn
from candfree.acquisition import validate_probs


def tiny_mlp(d=4, h=8, k=3):
    return nn.NetworkSpec((d,), (nn.Dense(d, h, "relu"), nn.Dense(h, k, "none"), nn.Softmax(k)))


def separable_2d(seed, n=100, margin=0.05):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(4 * n, 2))
    s = x[:, 0] + 0.5 * x[:, 1]
    x = x[np.abs(s) > margin][:n]
    return x, (x[:, 0] + 0.5 * x[:, 1] > 0).astype(int)


# --- spec ------------------------------------------------------------------


def test_dense_param_count():
    spec = nn.NetworkSpec((4,), (nn.Dense(4, 3, "none"), nn.Softmax(3)))
    assert spec.num_params == 15


@pytest.mark.parametrize(
    "layers",
    [
        (nn.Dense(4, 3, "none"),),  # no head
        (nn.Dense(4, 3, "none"), nn.Softmax(3), nn.Softmax(3)),
        (nn.Softmax(4), nn.Dense(4, 4, "none")),
        (nn.Dense(5, 3, "none"), nn.Softmax(3)),  # wrong in_dim
        (nn.Dense(4, 3, "tanh"), nn.Softmax(3)),
        (nn.Dense(4, 3, "none"), nn.Softmax(2)),
        (nn.Conv2d(1, 2, 3), nn.Softmax(2)),  # conv on flat input
    ],
)
def test_invalid_specs(layers):
    with pytest.raises(nn.InvalidSpecError):
        nn.NetworkSpec((4,), layers)


def test_presets_shapes():
    assert nn.mlp_small((32,), 10).shapes()[-1] == (10,)
    cnn = nn.cnn_small((3, 32, 32), 10)
    assert cnn.shapes()[1] == (32, 28, 28)
    assert nn.preset("mlp-small", (1, 28, 28), 10).layers[0] == nn.Flatten()
    with pytest.raises(nn.InvalidSpecError):
        nn.preset("resnet", (3,), 2)


def test_spec_dict_round_trip():
    spec = nn.cnn_small((1, 8, 8), 4)
    assert nn.NetworkSpec.from_dict(spec.to_dict()) == spec


# --- init ------------------------------------------------------------------


def test_init_deterministic_and_seed_sensitive():
    spec = nn.mlp_small((16,), 5)
    a, b, c = nn.init_random(spec, 3), nn.init_random(spec, 3), nn.init_random(spec, 4)
    assert a.params.tobytes() == b.params.tobytes()
    assert not np.array_equal(a.params, c.params)


def test_init_distribution_million_draws():
    fan = 1000
    spec = nn.NetworkSpec((fan,), (nn.Dense(fan, 1000, "none"), nn.Softmax(1000)))
    w = nn.init_random(spec, 0).params[: fan * 1000]
    bound = 1 / np.sqrt(fan)
    assert w.size == 10**6
    assert np.abs(w).max() <= bound
    sd = bound / np.sqrt(3)
    assert abs(w.mean()) < 4 * sd / np.sqrt(w.size)
    assert w.std() == pytest.approx(sd, rel=0.01)
    hist, _ = np.histogram(w, bins=20, range=(-bound, bound))
    # mirrored bins agree within 5 binomial sd
    expect = w.size / 20
    assert np.all(np.abs(hist - hist[::-1]) < 5 * np.sqrt(2 * expect))
    skew = np.mean(((w - w.mean()) / w.std()) ** 3)
    assert abs(skew) < 0.01


def test_model_rejects_bad_params():
    spec = tiny_mlp()
    with pytest.raises(nn.InvalidSpecError):
        nn.NetworkModel(spec, np.zeros(3), 0)
    p = np.zeros(spec.num_params)
    p[0] = np.nan
    with pytest.raises(ValueError):
        nn.NetworkModel(spec, p, 0)


# --- forward ---------------------------------------------------------------


def test_zero_weights_give_uniform():
    spec = nn.mlp_small((6,), 4)
    m = nn.NetworkModel(spec, np.zeros(spec.num_params), 0)
    p = nn.forward_probs(m, np.random.default_rng(0).normal(size=(5, 6)))
    assert np.array_equal(p, np.full((5, 4), 0.25))


def test_softmax_overflow_safe():
    p = nn.softmax(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(p))
    assert p[0, 0] == pytest.approx(1.0)
    assert p[0, 1] == pytest.approx(0.0)
    spec = nn.NetworkSpec((1,), (nn.Dense(1, 2, "none"), nn.Softmax(2)))
    m = nn.NetworkModel(spec, np.array([1000.0, 0.0, 0.0, 0.0]), 0)
    assert nn.forward_probs(m, [[1.0]])[0] == pytest.approx([1.0, 0.0])


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.floats(0.01, 100), st.sampled_from(["mlp", "cnn"]))
def test_forward_probs_are_distributions(seed, scale, kind):
    rng = np.random.default_rng(seed)
    if kind == "mlp":
        spec, x = nn.mlp_small((7,), 5), scale * rng.normal(size=(9, 7))
    else:
        spec, x = nn.cnn_small((2, 6, 6), 3), scale * rng.normal(size=(4, 2, 6, 6))
    p = nn.forward_probs(nn.init_random(spec, seed), x)
    validate_probs(p)


def test_forward_shape_mismatch():
    m = nn.init_random(tiny_mlp(), 0)
    with pytest.raises(nn.ShapeMismatchError):
        nn.forward_probs(m, np.zeros((3, 5)))


def test_forward_chunking_consistent(monkeypatch):
    m = nn.init_random(tiny_mlp(), 1)
    x = np.random.default_rng(2).normal(size=(50, 4))
    full = nn.forward_probs(m, x)
    monkeypatch.setattr(nn, "FORWARD_CHUNK", 7)
    assert np.allclose(nn.forward_probs(m, x), full, rtol=0, atol=1e-15)


# --- gradients -------------------------------------------------------------


def test_gradcheck_mlp_4_8_3():
    m = nn.init_random(tiny_mlp(), 0)
    x = np.random.default_rng(0).normal(size=4)
    assert nn.grad_check(m, (x, 1), 1e-5) < 1e-4


def test_gradcheck_conv_1x3x3_on_5x5():
    spec = nn.NetworkSpec(
        (1, 5, 5), (nn.Conv2d(1, 1, 3, 1, "none"), nn.Flatten(), nn.Dense(9, 3, "none"), nn.Softmax(3))
    )
    m = nn.init_random(spec, 1)
    x = np.random.default_rng(1).random((1, 5, 5))
    assert nn.grad_check(m, (x, 2), 1e-5) < 1e-4


def test_gradcheck_strided_relu_conv():
    spec = nn.NetworkSpec(
        (2, 7, 7), (nn.Conv2d(2, 3, 3, 2, "relu"), nn.Flatten(), nn.Dense(27, 4, "none"), nn.Softmax(4))
    )
    m = nn.init_random(spec, 5)
    x = np.random.default_rng(5).normal(size=(3, 2, 7, 7))
    assert nn.grad_check(m, (x, [0, 3, 1]), 1e-5) < 1e-4


def test_zero_weight_bias_gradient_closed_form():
    spec = tiny_mlp(k=4)
    zero = np.zeros(spec.num_params)
    x = np.random.default_rng(0).normal(size=(1, 4))
    _, g = nn.loss_and_grad(spec, zero, x, np.array([2]))
    _, gb = nn.NetworkModel(spec, g, 0).layer_params(1)
    assert np.allclose(gb, np.full(4, 0.25) - np.eye(4)[2])


def test_gradcheck_epsilon_range():
    m = nn.init_random(tiny_mlp(), 0)
    with pytest.raises(ValueError):
        nn.grad_check(m, (np.zeros(4), 0), 0.1)


# --- training --------------------------------------------------------------


def test_separable_2d_reaches_099():
    x, y = separable_2d(0)
    assert len(y) == 100
    spec = nn.NetworkSpec((2,), (nn.Dense(2, 16, "relu"), nn.Dense(16, 2, "none"), nn.Softmax(2)))
    cfg = nn.TrainConfig(epochs=50, batch_size=10, lr=0.1, weight_decay=0.0)
    m = nn.train(nn.init_random(spec, 0), x, y, cfg)
    assert nn.evaluate(m, x, y) >= 0.99


def test_zero_learning_rate_is_identity():
    m = nn.init_random(tiny_mlp(), 0)
    x = np.random.default_rng(0).normal(size=(20, 4))
    y = np.arange(20) % 3
    out = nn.train(m, x, y, nn.TrainConfig(epochs=3, lr=0.0))
    assert out.params.tobytes() == m.params.tobytes()


def test_training_deterministic():
    m = nn.init_random(tiny_mlp(), 0)
    x = np.random.default_rng(0).normal(size=(64, 4))
    y = np.arange(64) % 3
    cfg = nn.TrainConfig(epochs=3, shuffle_seed=11)
    a, b = nn.train(m, x, y, cfg), nn.train(m, x, y, cfg)
    assert a.params.tobytes() == b.params.tobytes()
    assert not np.array_equal(a.params, nn.train(m, x, y, nn.TrainConfig(epochs=3, shuffle_seed=12)).params)


def test_train_does_not_mutate_input():
    m = nn.init_random(tiny_mlp(), 0)
    before = m.params.copy()
    nn.train(m, np.ones((5, 4)), [0, 1, 2, 0, 1], nn.TrainConfig(epochs=2))
    assert np.array_equal(m.params, before)


def test_cold_start_ignores_prior_training():
    spec = tiny_mlp()
    x = np.random.default_rng(0).normal(size=(40, 4))
    y = np.arange(40) % 3
    fresh = nn.init_random(spec, 9)
    trained = nn.train(fresh, x, y, nn.TrainConfig(epochs=5, shuffle_seed=1))
    cold = nn.TrainConfig(epochs=2, warm_start=False, shuffle_seed=2)
    a = nn.train(trained, x, y, cold)
    b = nn.train(fresh, x, y, cold)
    c = nn.train(fresh, x, y, nn.TrainConfig(epochs=2, shuffle_seed=2))
    assert a.params.tobytes() == b.params.tobytes() == c.params.tobytes()


def test_training_lowers_loss_in_95_percent_of_trials():
    improved = 0
    trials = 40
    for t in range(trials):
        rng = np.random.default_rng(1000 + t)
        k = int(rng.integers(2, 5))
        d = int(rng.integers(2, 8))
        centers = 2 * rng.normal(size=(k, d))
        y = rng.integers(0, k, size=120)
        x = centers[y] + rng.normal(size=(120, d))
        m = nn.init_random(nn.mlp_small((d,), k), t)
        before = nn.mean_loss(m, x, y)
        after = nn.mean_loss(nn.train(m, x, y, nn.TrainConfig(epochs=3, shuffle_seed=t)), x, y)
        improved += after <= before
    assert improved >= 0.95 * trials


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_errors():
    m = nn.init_random(tiny_mlp(), 0)
    with pytest.raises(nn.EmptyTrainingSetError):
        nn.train(m, np.zeros((0, 4)), [], nn.TrainConfig())
    with pytest.raises(ValueError):
        nn.train(m, np.zeros((2, 4)), [0, 3], nn.TrainConfig())
    x = 1e6 * np.random.default_rng(0).normal(size=(32, 4))
    with pytest.raises(nn.NonFiniteLossError):
        nn.train(m, x, np.arange(32) % 3, nn.TrainConfig(epochs=20, lr=1e6, momentum=0.9))


@pytest.mark.parametrize("kw", [dict(epochs=0), dict(momentum=1.0), dict(lr=-1.0), dict(batch_size=0)])
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        nn.TrainConfig(**kw)


# --- evaluate --------------------------------------------------------------


def test_uniform_model_hits_chance_via_lowest_index():
    spec = nn.mlp_small((3,), 10)
    m = nn.NetworkModel(spec, np.zeros(spec.num_params), 0)
    y = np.repeat(np.arange(10), 20)
    x = np.random.default_rng(0).normal(size=(200, 3))
    assert nn.evaluate(m, x, y) == 0.1


def test_hand_built_threshold_model():
    spec = nn.NetworkSpec((2,), (nn.Dense(2, 2, "none"), nn.Softmax(2)))
    # logits = [-x0, x0]; weights stored (in, out) then bias
    params = np.array([-1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    m = nn.NetworkModel(spec, params, 0)
    x = np.array([[-1.0, 0.0], [-2.0, 1.0], [1.0, 0.0], [2.0, -1.0]])
    assert nn.evaluate(m, x, [0, 0, 1, 1]) == 1.0


def test_memorization_scores_one():
    x, y = separable_2d(3, n=40)
    spec = nn.NetworkSpec((2,), (nn.Dense(2, 32, "relu"), nn.Dense(32, 2, "none"), nn.Softmax(2)))
    m = nn.train(nn.init_random(spec, 0), x, y, nn.TrainConfig(epochs=200, batch_size=8, lr=0.1, weight_decay=0.0))
    assert nn.evaluate(m, x, y) == 1.0


def test_evaluate_empty():
    with pytest.raises(ValueError):
        nn.evaluate(nn.init_random(tiny_mlp(), 0), np.zeros((0, 4)), [])


# --- checkpoints -----------------------------------------------------------


@pytest.mark.parametrize("spec", [nn.mlp_small((5,), 3), nn.cnn_small((1, 6, 6), 2)])
def test_checkpoint_round_trip(tmp_path, spec):
    m = nn.init_random(spec, 123)
    m.params[0] = -0.0
    loaded = nn.load_checkpoint(nn.save_checkpoint(m, tmp_path / "m.npz"))
    assert loaded.spec == m.spec
    assert loaded.seed == m.seed
    assert loaded.params.tobytes() == m.params.tobytes()
