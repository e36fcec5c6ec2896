import numpy as np
import pytest

from fedluar.nn_core import LayerKeyedVector, Network, conv2d, dense, mlp_specs


def finite_difference_grad(net: Network, params: LayerKeyedVector, x, y, h=1e-5):
    """Central differences of the mean cross-entropy, one coordinate at a time."""
    grad = LayerKeyedVector.zeros_like(params)
    for l in params.layer_ids:
        buf = params[l]
        for i in range(buf.size):
            orig = buf[i]
            buf[i] = orig + h
            lp, _ = net.loss_and_grad(params, x, y)
            buf[i] = orig - h
            lm, _ = net.loss_and_grad(params, x, y)
            buf[i] = orig
            grad[l][i] = (lp - lm) / (2 * h)
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def random_instance(seed: int, with_conv: bool = False):
    rng = np.random.default_rng(seed)
    if with_conv:
        c, h, w = 2, 5, 4
        first = conv2d(0, (c, h, w), 3, (2, 3))
        specs = [first, dense(1, first.output_dim, 6), dense(2, 6, 3)]
        n_in = c * h * w
    else:
        n_in = int(rng.integers(3, 7))
        specs = mlp_specs([n_in, int(rng.integers(3, 8)), int(rng.integers(3, 8)), 4])
    net = Network(specs)
    params = net.init_params(rng)
    # non-zero biases so they are exercised too
    for s in net.specs:
        params[s.layer_id][s.n_weights:] = rng.normal(0, 0.1, s.param_count - s.n_weights)
    x = rng.normal(size=(8, n_in))
    y = rng.integers(0, net.n_classes, size=8)
    return net, params, x, y


@pytest.fixture
def tiny_config():
    from fedluar import ExperimentConfig
    return ExperimentConfig(n_samples=400, n_features=8, n_classes=3, class_separation=3.0,
                            hidden_sizes=[12, 10], n_clients=6, active_clients=3, rounds=12,
                            local_steps=3, batch_size=8, learning_rate=0.05, alpha=0.5,
                            eval_every=4)
