import numpy as np
import pytest

from efcnet.errors import EmptyDataset, ShapeMismatch, SingleClass
from efcnet.graph import build_graph, incidence_matrix, phi_project
from efcnet.model import (
    AdamW,
    CoEmbedNet,
    GcnNet,
    GraphBatch,
    LayerWeights,
    TrainConfig,
    batch_gradients,
    co_embed_node_layer,
    cross_entropy,
    edge_layer,
    forward,
    gcn_layer,
    gradients,
    identity,
    loss,
    predict,
    relu,
    train,
)
from efcnet.model.kernels import dropout_params, keep_mask
from efcnet.synth import SynthConfig, generate_dataset


def loop_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def random_weights(rng, f_in, f_out, agg_in=None):
    return LayerWeights(rng.standard_normal((f_in, f_out)), rng.standard_normal((agg_in or f_in, f_out)))


def graphs(rng, count, n=6, t=40):
    return [build_graph(rng.standard_normal((t, n)), k % 2) for k in range(count)]


# ---------------------------------------------------------------- layers


def test_gcn_layer_identity_configuration(rng):
    h = rng.standard_normal((4, 3))
    a = rng.standard_normal((4, 4))
    out = gcn_layer(h, a, LayerWeights(np.eye(3), np.zeros((3, 3))), identity)
    np.testing.assert_array_equal(out, h)


def test_gcn_layer_zero_adjacency(rng):
    h = rng.standard_normal((4, 3))
    w = random_weights(rng, 3, 2)
    np.testing.assert_array_equal(gcn_layer(h, np.zeros((4, 4)), w), relu(h @ w.w0))


def test_gcn_layer_loop_oracle(rng):
    h, a = rng.standard_normal((4, 3)), rng.standard_normal((4, 4))
    w = random_weights(rng, 3, 5)
    expected = relu(loop_matmul(h, w.w0) + loop_matmul(loop_matmul(a, h), w.w1))
    np.testing.assert_allclose(gcn_layer(h, a, w), expected, atol=1e-12)


def test_co_embed_layer_reductions(rng):
    h, a = rng.standard_normal((5, 3)), rng.standard_normal((5, 5))
    w = random_weights(rng, 3, 4)
    np.testing.assert_array_equal(co_embed_node_layer(h, np.zeros((5, 5)), w), relu(h @ w.w0))
    np.testing.assert_array_equal(co_embed_node_layer(h, a, w), gcn_layer(h, a, w))
    expected = relu(loop_matmul(h, w.w0) + loop_matmul(loop_matmul(a, h), w.w1))
    np.testing.assert_allclose(co_embed_node_layer(h, a, w), expected, atol=1e-12)


def test_edge_layer_examples(rng):
    n, f = 4, 3
    inc = incidence_matrix(n)
    he = rng.standard_normal((6, f))
    out = edge_layer(he, np.zeros((n, f)), inc, LayerWeights(np.eye(f), rng.standard_normal((f, f))), identity)
    np.testing.assert_array_equal(out, he)
    out = edge_layer(he, np.ones((n, f)), inc, LayerWeights(np.zeros((f, f)), np.eye(f)), identity)
    np.testing.assert_array_equal(out, 2 * np.ones((6, f)))
    hv = rng.standard_normal((n, f))
    w = random_weights(rng, f, 2)
    expected = relu(loop_matmul(he, w.w0) + loop_matmul(loop_matmul(inc.T, hv), w.w1))
    np.testing.assert_allclose(edge_layer(he, hv, inc, w), expected, atol=1e-12)


def test_layer_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        gcn_layer(rng.standard_normal((4, 3)), np.eye(5), random_weights(rng, 3, 2))
    with pytest.raises(ShapeMismatch):
        gcn_layer(rng.standard_normal((4, 3)), np.eye(4), random_weights(rng, 2, 2))
    with pytest.raises(ShapeMismatch):
        edge_layer(rng.standard_normal((6, 3)), rng.standard_normal((4, 3)), incidence_matrix(5), random_weights(rng, 3, 2))


# ---------------------------------------------------------------- reference forward passes


def coembed_reference(g, p, node_mask=None, edge_mask=None):
    """Unbatched composition of the reference layers."""
    n = g.n_regions
    inc = incidence_matrix(n)
    x = g.node_features
    hn = co_embed_node_layer(x, phi_project(g.edge_features, inc), p.node_layer)
    he = edge_layer(g.edge_features.mean(axis=1)[:, None], x, inc, p.edge_layer)
    if node_mask is not None:
        hn = hn * node_mask
        he = he * edge_mask
    return (hn.mean(axis=0) + he.mean(axis=0)) @ p.classifier + p.bias


def gcn_reference(g, p, mask=None):
    h1 = gcn_layer(g.node_features, g.adjacency, p.layer1)
    if mask is not None:
        h1 = h1 * mask
    return gcn_layer(h1, g.adjacency, p.layer2, identity).mean(axis=0) + p.bias


@pytest.fixture
def small_batch(rng):
    gs = graphs(rng, 5)
    return gs, GraphBatch.from_graphs(gs)


@pytest.mark.parametrize("model", [CoEmbedNet, GcnNet])
def test_batched_eval_matches_reference(rng, small_batch, model):
    gs, batch = small_batch
    p = model.init(6, 3, 7, rng)
    p.bias[:] = rng.standard_normal(3)
    logits, _ = model.forward(p, batch)
    ref = coembed_reference if model is CoEmbedNet else gcn_reference
    for s, g in enumerate(gs):
        np.testing.assert_allclose(logits[s], ref(g, p), atol=1e-12)
        np.testing.assert_allclose(forward(g, p), ref(g, p), atol=1e-12)


def test_coembed_dropout_matches_reference_masks(rng, small_batch):
    gs, batch = small_batch
    p = CoEmbedNet.init(6, 2, 9, rng)
    rate = 0.4
    logits, _ = CoEmbedNet.forward(p, batch, True, rate, np.random.default_rng(7))
    mask_rng = np.random.default_rng(7)
    node_key = dropout_params(rate, mask_rng)
    edge_key = dropout_params(rate, mask_rng)
    s_count, n, n_e, f = len(gs), 6, 15, 9
    node_mask = keep_mask(s_count * n, f, *node_key).reshape(s_count, n, f)
    edge_mask = keep_mask(s_count * n_e, f, *edge_key).reshape(s_count, n_e, f)
    for s, g in enumerate(gs):
        np.testing.assert_allclose(logits[s], coembed_reference(g, p, node_mask[s], edge_mask[s]), atol=1e-12)


def test_gcn_dropout_matches_reference_masks(rng, small_batch):
    gs, batch = small_batch
    p = GcnNet.init(6, 2, 9, rng)
    logits, _ = GcnNet.forward(p, batch, True, 0.3, np.random.default_rng(3))
    key = dropout_params(0.3, np.random.default_rng(3))
    mask = keep_mask(len(gs) * 6, 9, *key).reshape(len(gs), 6, 9)
    for s, g in enumerate(gs):
        np.testing.assert_allclose(logits[s], gcn_reference(g, p, mask[s]), atol=1e-12)


def test_keep_mask_rate_and_scale():
    key = dropout_params(0.5, np.random.default_rng(0))
    mask = keep_mask(1000, 200, *key)
    assert set(np.unique(mask)) == {0.0, 2.0}
    assert abs((mask > 0).mean() - 0.5) < 0.01
    assert np.all(keep_mask(10, 10, *dropout_params(0.0, None)) == 1.0)


def test_eval_mode_deterministic_and_rng_independent(rng, small_batch):
    gs, _ = small_batch
    p = CoEmbedNet.init(6, 2, 8, rng)
    a = forward(gs[0], p, "eval", np.random.default_rng(1), dropout=0.5)
    b = forward(gs[0], p, "eval", np.random.default_rng(2), dropout=0.5)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(forward(gs[0], p, "train", np.random.default_rng(3), dropout=0.0), a)


def test_zero_params_give_bias(rng, small_batch):
    gs, _ = small_batch
    p = CoEmbedNet.init(6, 3, 4, rng).map(np.zeros_like)
    p.bias[:] = [0.5, -1.0, 2.0]
    np.testing.assert_array_equal(forward(gs[0], p), p.bias)


def test_wrong_region_count(rng, small_batch):
    _, batch = small_batch
    with pytest.raises(ShapeMismatch):
        CoEmbedNet.forward(CoEmbedNet.init(5, 2, 4, rng), batch)


# ---------------------------------------------------------------- loss and gradients


def test_loss_examples(rng):
    assert loss([0.0, 0.0], 0) == pytest.approx(np.log(2), abs=1e-12)
    assert loss([0.0, 0.0], 1) == pytest.approx(0.693147, abs=1e-6)
    assert loss([30.0, -30.0], 0) < 1e-12
    for _ in range(20):
        z = rng.normal(0, 50, 4)
        m = z.max()
        assert loss(z, 2) == pytest.approx(m + np.log(np.exp(z - m).sum()) - z[2], abs=1e-12)
    assert loss([1e300, -1e300], 1) == pytest.approx(2e300)


def test_cross_entropy_reductions(rng):
    logits = rng.standard_normal((5, 3))
    labels = np.array([0, 1, 2, 1, 0])
    total, g_sum = cross_entropy(logits, labels, "sum")
    mean, g_mean = cross_entropy(logits, labels, "mean")
    assert total == pytest.approx(5 * mean, abs=1e-12)
    np.testing.assert_allclose(g_sum, 5 * g_mean, atol=1e-15)
    with pytest.raises(ValueError):
        cross_entropy(logits, labels, "max")


def finite_difference(p, batch, step=1e-5):
    out = {}
    for name, value in p.named().items():
        grad = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + step
            up = batch_gradients(p, batch)[0]
            value[idx] = orig - step
            down = batch_gradients(p, batch)[0]
            value[idx] = orig
            grad[idx] = (up - down) / (2 * step)
        out[name] = grad
    return out


def max_relative_error(analytic: dict, numeric: dict) -> float:
    worst = 0.0
    for name, g in analytic.items():
        fd = numeric[name]
        denom = max(np.linalg.norm(g) + np.linalg.norm(fd), 1e-12)
        worst = max(worst, np.linalg.norm(g - fd) / denom)
    return worst


@pytest.mark.parametrize("model", [CoEmbedNet, GcnNet])
def test_gradients_match_finite_differences(model):
    rng = np.random.default_rng(99)
    batch = GraphBatch.from_graphs(graphs(rng, 4))
    p = model.init(6, 2, 5, rng)
    _, g = batch_gradients(p, batch)
    assert max_relative_error(g.named(), finite_difference(p, batch)) < 1e-4


def test_zero_features_zero_classifier_gradient(rng):
    g = graphs(rng, 1)[0]
    p = CoEmbedNet.init(6, 2, 4, rng)
    p = type(p).from_named({**p.named(), "node_layer.w0": np.zeros((6, 4)), "node_layer.w1": np.zeros((6, 4)),
                            "edge_layer.w0": np.zeros((1, 4)), "edge_layer.w1": np.zeros((6, 4))})
    grads = gradients(g, 1, p)
    assert np.all(grads.classifier == 0)
    assert np.any(grads.bias != 0)


def test_duplicated_sample_doubles_gradient(rng):
    g = graphs(rng, 1)[0]
    p = CoEmbedNet.init(6, 2, 4, rng)
    single = gradients(g, 0, p).named()
    _, doubled = batch_gradients(p, GraphBatch.from_graphs([g, g]), reduction="sum")
    for name, value in doubled.named().items():
        np.testing.assert_allclose(value, 2 * single[name], atol=1e-12)


# ---------------------------------------------------------------- optimizer


def test_adamw_first_step_matches_formula():
    theta = {"w": np.array([1.0, -2.0, 0.5])}
    grad = {"w": np.array([0.1, -0.3, 0.0])}
    opt = AdamW(lr=0.01, weight_decay=0.1)
    opt.step(theta, grad)
    # first step: m_hat = g, v_hat = g^2
    expected = np.array([1.0, -2.0, 0.5]) * 0.9 - 0.01 * grad["w"] / (np.abs(grad["w"]) + 1e-8)
    np.testing.assert_allclose(theta["w"], expected, atol=1e-15)


def test_adamw_two_steps_oracle():
    rng = np.random.default_rng(4)
    theta0 = rng.standard_normal(5)
    grads = [rng.standard_normal(5), rng.standard_normal(5)]
    theta = {"w": theta0.copy()}
    opt = AdamW(lr=0.05, weight_decay=0.01)
    m = v = np.zeros(5)
    ref = theta0.copy()
    for t, g in enumerate(grads, start=1):
        opt.step(theta, {"w": g})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref * 0.99 - 0.05 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(theta["w"], ref, atol=1e-14)


def test_adamw_zero_lr():
    theta = {"w": np.array([1.0, 2.0])}
    AdamW(lr=0.0).step(theta, {"w": np.array([5.0, -5.0])})
    np.testing.assert_array_equal(theta["w"], [1.0, 2.0])
    AdamW(lr=0.0, weight_decay=0.5).step(theta, {"w": np.array([5.0, -5.0])})
    np.testing.assert_array_equal(theta["w"], [0.5, 1.0])


@pytest.mark.parametrize("kwargs", [{"lr": -1.0}, {"lr": 0.1, "weight_decay": -0.1}, {"lr": 0.1, "weight_decay": 1.0}])
def test_adamw_rejects_bad_settings(kwargs):
    with pytest.raises(ValueError):
        AdamW(**kwargs)


# ---------------------------------------------------------------- training


@pytest.fixture(scope="module")
def synthetic20():
    return generate_dataset(SynthConfig(seed=11), n_per_class=10)


@pytest.mark.parametrize("model", ["coembed", "gcn"])
def test_train_reduces_loss(synthetic20, model):
    cfg = TrainConfig(hidden_dim=64, model=model)
    params, hist = train(synthetic20, cfg)
    assert len(hist.loss) == 300
    assert hist.loss[-1] < hist.loss[0]
    assert predict(params, GraphBatch.from_graphs(synthetic20)).shape == (20,)


def test_train_deterministic(synthetic20):
    cfg = TrainConfig(epochs=20, hidden_dim=32)
    p1, h1 = train(synthetic20, cfg)
    p2, h2 = train(synthetic20, cfg)
    assert h1.loss == h2.loss and h1.accuracy == h2.accuracy
    for name, value in p1.named().items():
        np.testing.assert_array_equal(value, p2.named()[name])


def test_train_zero_lr_keeps_init(synthetic20):
    cfg = TrainConfig(epochs=3, hidden_dim=8, learning_rate=0.0, weight_decay=0.0)
    p_a, _ = train(synthetic20, cfg)
    p_b, _ = train(synthetic20, TrainConfig(epochs=1, hidden_dim=8, learning_rate=0.0, weight_decay=0.0))
    for name, value in p_a.named().items():
        np.testing.assert_array_equal(value, p_b.named()[name])


def test_train_errors(synthetic20):
    with pytest.raises(EmptyDataset):
        train([], TrainConfig(epochs=1))
    with pytest.raises(SingleClass):
        train([g for g in synthetic20 if g.label == 0], TrainConfig(epochs=1))


@pytest.mark.parametrize(
    "kwargs",
    [{"epochs": 0}, {"hidden_dim": 0}, {"dropout": 1.0}, {"dropout": -0.1}, {"learning_rate": -1.0}, {"model": "cnn"}],
)
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_default_hyperparameters():
    cfg = TrainConfig()
    assert (cfg.epochs, cfg.learning_rate, cfg.weight_decay, cfg.dropout, cfg.hidden_dim) == (300, 1e-4, 5e-4, 0.5, 1024)
    base = TrainConfig.gcn_baseline()
    assert (base.model, base.hidden_dim, base.dropout) == ("gcn", 512, 0.3)
