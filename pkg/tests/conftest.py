import numpy as np
import pytest

from jacreg.autodiff import Network


def central_diff(f, x, h=1e-5):
    """Gradient of scalar ``f`` at ``x`` by central differences."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def preactivations(net, y):
    h = np.asarray(y, dtype=np.float64)
    out = []
    for layer in net.layers:
        z = layer.weight.data @ h + layer.bias.data
        if layer.activation == "relu":
            out.append(z)
            h = np.maximum(z, 0)
        else:
            h = z
    return np.concatenate(out) if out else np.zeros(0)


def kink_free_point(net, rng, margin=1e-4, tries=1000):
    """A random input whose ReLU pre-activations all sit at least ``margin`` from 0."""
    for _ in range(tries):
        y = rng.standard_normal(net.input_dim)
        if np.all(np.abs(preactivations(net, y)) > margin):
            return y
    raise RuntimeError("no kink-free point found")


def random_net(sizes, seed, bias_scale=0.1):
    rng = np.random.default_rng(seed)
    net = Network.from_sizes(sizes, rng=rng)
    for layer in net.layers:
        layer.bias.data = bias_scale * rng.standard_normal(layer.bias.shape)
    return net


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
