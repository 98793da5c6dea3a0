import math

import numpy as np
import pytest
import torch

from gkdv_pinn.network import (
    Architecture,
    Jet,
    NetworkParams,
    activation_jet,
    forward,
    forward_grid,
    forward_jet,
    init,
)
from gkdv_pinn.spectral import SpectralGrid, TimeGrid

# recorded once from init(Architecture(2, 20), seed=0) at (t, x) = (0, 0)
GOLDEN_FORWARD = -0.5928281880120494


def small_params(seed=0, arch=Architecture(2, 6), scale=0.5):
    p = init(arch, seed)
    rng = np.random.default_rng(seed + 100)
    p.biases = [rng.uniform(-0.3, 0.3, size=b.shape) for b in p.biases]
    p.weights = [scale * w for w in p.weights]
    return p


def zero_network(arch, beta):
    p = init(arch, 0)
    p.weights = [np.zeros_like(w) for w in p.weights]
    p.biases = [np.zeros_like(b) for b in p.biases]
    p.biases[-1] = np.array([beta])
    return p


def test_param_count_and_layout():
    arch = Architecture(2, 20)
    assert arch.n_params == (20 * 2 + 20) + (20 * 20 + 20) + (20 + 1) + 6
    p = init(arch, 3)
    theta = p.flatten()
    assert theta.shape == (arch.n_params,)
    q = NetworkParams.unflatten(arch, theta)
    assert np.array_equal(q.flatten(), theta)
    x = np.linspace(-5, 5, 11)
    assert np.array_equal(forward(p, 0.3, x), forward(q, 0.3, x))


def test_unflatten_rejects_wrong_length():
    with pytest.raises(ValueError):
        NetworkParams.unflatten(Architecture(1, 2), np.zeros(5))


def test_init_deterministic_and_wavelets():
    a = init(Architecture(2, 20), 7)
    b = init(Architecture(2, 20), 7)
    assert np.array_equal(a.flatten(), b.flatten())
    assert a.wavelets.shape == (2, 3)
    np.testing.assert_array_equal(a.wavelets[:, 0], 1.0)
    np.testing.assert_allclose(a.wavelets[:, 2], 1 / math.sqrt(2))
    assert all(np.all(bias == 0) for bias in a.biases)
    for w, (o, i) in zip(a.weights, a.arch.layer_shapes):
        assert np.max(np.abs(w)) <= math.sqrt(6 / (o + i))


def test_b0_distribution_monte_carlo():
    arch = Architecture(1, 1)
    b0 = np.array([init(arch, seed).wavelets[0, 1] for seed in range(10_000)])
    assert b0.min() > -math.pi / 2 and b0.max() < math.pi / 2
    assert abs(b0.mean()) <= 0.05


def test_rejects_degenerate_arch():
    with pytest.raises(ValueError):
        Architecture(0, 5)
    with pytest.raises(ValueError):
        Architecture(2, 0)


def test_activation_at_origin():
    assert activation_jet(0.0, (1.0, 0.0, 0.3), 1) == [0.0, 1.0]
    assert activation_jet(0.0, (1.0, math.pi / 2, 0.3), 0)[0] == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        activation_jet(0.0, (1.0, 0.0, 1.0), 4)


def test_activation_first_derivative_formula():
    w, b, s = 1.4, -0.2, 0.6
    x = np.linspace(-2, 2, 9)
    expect = (w * np.cos(w * x + b) - 2 * s**2 * x * np.sin(w * x + b)) * np.exp(-(s * x) ** 2)
    np.testing.assert_allclose(activation_jet(x, (w, b, s), 1)[1], expect, rtol=1e-13, atol=1e-15)


def test_activation_derivatives_vs_finite_differences():
    rng = np.random.default_rng(0)
    x = rng.uniform(-3, 3, 100)
    triple = (1.3, 0.4, 0.8)
    h = 1e-4
    jet = activation_jet(x, triple, 3)
    for n in (1, 2, 3):
        prev = lambda y, n=n: activation_jet(y, triple, 3)[n - 1]
        fd = (prev(x + h) - prev(x - h)) / (2 * h)
        assert np.max(np.abs(jet[n] - fd)) / np.max(np.abs(fd)) <= 1e-6


def test_zero_network_is_constant():
    p = zero_network(Architecture(2, 5), 0.75)
    t, x = np.linspace(-1, 1, 7), np.linspace(-3, 3, 7)
    assert np.all(forward(p, t, x) == 0.75)
    jet = forward_jet(p, t, x)
    assert np.all(jet.u == 0.75)
    for comp in jet[1:]:
        assert np.all(comp == 0.0)


def test_forward_equals_jet_value_bitwise():
    p = init(Architecture(2, 20), 1)
    rng = np.random.default_rng(1)
    t, x = rng.uniform(-3, 3, 1000), rng.uniform(-20, 20, 1000)
    assert np.array_equal(forward(p, t, x), forward_jet(p, t, x).u)


def test_golden_forward_value():
    assert forward(init(Architecture(2, 20), 0), 0.0, 0.0) == pytest.approx(GOLDEN_FORWARD, rel=1e-14)


def test_jets_vs_finite_differences():
    p = small_params()
    rng = np.random.default_rng(2)
    t, x = rng.uniform(-1, 1, 100), rng.uniform(-2, 2, 100)
    jet = forward_jet(p, t, x)
    f = lambda tt, xx: forward(p, tt, xx)
    h = 1e-4
    fd = {
        "u_t": (f(t + h, x) - f(t - h, x)) / (2 * h),
        "u_x": (f(t, x + h) - f(t, x - h)) / (2 * h),
        "u_xx": (f(t, x + h) - 2 * f(t, x) + f(t, x - h)) / h**2,
    }
    # third derivative: 5-point stencil on the exact second derivative
    g = lambda xx: forward_jet(p, t, xx).u_xx
    fd["u_xxx"] = (-g(x + 2 * h) + 8 * g(x + h) - 8 * g(x - h) + g(x - 2 * h)) / (12 * h)
    for name, ref in fd.items():
        got = getattr(jet, name)
        assert np.max(np.abs(got - ref)) / np.max(np.abs(ref)) <= 1e-5, name


def test_linear_network_jet():
    # a single hidden neuron in its (numerically) linear regime is not linear, so
    # build u = a x + b t + c directly through the output layer with zero hidden weights
    arch = Architecture(1, 2)
    p = zero_network(arch, 0.0)
    p.wavelets = np.array([[1.0, 0.0, 0.0]])  # sigma(z) = sin z
    eps = 1e-6
    p.weights[0] = np.array([[eps * 2.0, eps * 3.0], [0.0, 0.0]])  # a_1 = eps (2t + 3x)
    p.weights[1] = np.array([[1.0 / eps, 0.0]])
    p.biases[1] = np.array([0.5])
    t, x = np.array([0.1, -0.4]), np.array([1.0, 2.0])
    jet = forward_jet(p, t, x)
    np.testing.assert_allclose(jet.u, 2 * t + 3 * x + 0.5, rtol=1e-9)
    np.testing.assert_allclose(jet.u_t, 2.0, rtol=1e-9)
    np.testing.assert_allclose(jet.u_x, 3.0, rtol=1e-9)
    np.testing.assert_allclose(jet.u_xx, 0.0, atol=1e-8)
    np.testing.assert_allclose(jet.u_xxx, 0.0, atol=1e-8)


def test_polynomial_exactness_via_cubic_activation_limit():
    # sigma(z) = sin z with tiny inputs: u = (1/eps) sin(eps x) = x - eps^2 x^3 / 6 + ...
    arch = Architecture(1, 1)
    p = zero_network(arch, 0.0)
    p.wavelets = np.array([[1.0, 0.0, 0.0]])
    eps = 1e-2
    p.weights[0] = np.array([[0.0, eps]])
    p.weights[1] = np.array([[1.0 / eps]])
    x = np.linspace(-3, 3, 13)
    jet = forward_jet(p, 0.0, x)
    np.testing.assert_allclose(jet.u_xxx, -eps**2 * np.cos(eps * x), rtol=1e-12)
    np.testing.assert_allclose(jet.u_xx, -eps * np.sin(eps * x), rtol=1e-12, atol=1e-18)


def test_translation_covariance():
    p = small_params(3)
    x, t, d = np.linspace(-2, 2, 9), 0.2, 1e-3
    j0 = forward_jet(p, t, x)
    j1 = forward_jet(p, t, x + d)
    taylor = j0.u + d * j0.u_x + d**2 / 2 * j0.u_xx + d**3 / 6 * j0.u_xxx
    assert np.max(np.abs(j1.u - taylor)) <= 1e-9
    taylor_x = j0.u_x + d * j0.u_xx + d**2 / 2 * j0.u_xxx
    assert np.max(np.abs(j1.u_x - taylor_x)) <= 1e-6


def test_forward_grid_tiles_like_forward_jet():
    p = init(Architecture(2, 8), 4)
    tg, sg = TimeGrid(1.0, 5), SpectralGrid(3.0, 8)
    grid = forward_grid(p, tg, sg)
    chunked = forward_grid(p, tg, sg, chunk=2)
    for i, tv in enumerate(tg.points):
        row = forward_jet(p, tv, sg.points)
        for name in Jet._fields:
            np.testing.assert_allclose(getattr(grid, name)[i], getattr(row, name), rtol=1e-14, atol=1e-15)
            assert np.array_equal(getattr(chunked, name), getattr(grid, name))


def test_torch_and_numpy_agree():
    p = init(Architecture(3, 8), 5)
    pt = NetworkParams.unflatten(p.arch, torch.tensor(p.flatten()))
    t, x = np.linspace(-1, 1, 6), np.linspace(-4, 4, 6)
    a = forward_jet(p, t, x)
    b = forward_jet(pt, torch.tensor(t), torch.tensor(x))
    for u, v in zip(a, b):
        np.testing.assert_allclose(v.numpy(), u, rtol=1e-12, atol=1e-14)


def test_input_scaling_hatch():
    arch = Architecture(2, 6, input_shift=(0.5, -1.0), input_scale=(2.0, 0.25))
    p = init(arch, 0)
    plain = NetworkParams(Architecture(2, 6), p.weights, p.biases, p.wavelets)
    t, x = np.array([0.3]), np.array([1.7])
    assert forward(p, t, x) == pytest.approx(forward(plain, (t - 0.5) * 2.0, (x + 1.0) * 0.25), rel=1e-14)
    j = forward_jet(p, t, x)
    jp = forward_jet(plain, (t - 0.5) * 2.0, (x + 1.0) * 0.25)
    assert j.u_t == pytest.approx(2.0 * jp.u_t, rel=1e-12)
    assert j.u_xxx == pytest.approx(0.25**3 * jp.u_xxx, rel=1e-12)
    assert Architecture.from_dict(arch.to_dict()) == arch
