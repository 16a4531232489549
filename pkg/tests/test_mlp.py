from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tidal_mppt.errors import DivergenceError, DomainError
from tidal_mppt.hydro import TurbineConfig, mech_power
from tidal_mppt.mlp import (
    TrainConfig,
    dumps,
    init_network,
    is_extrapolation,
    load_network,
    loads,
    loss_and_gradients,
    mlp_forward,
    mlp_train,
    predict,
    save_network,
)
from tidal_mppt.surrogate import AnnSettings, held_out_rmse, power_grid, train_surrogate

P_MPP_AT_1_5 = 695.94525
OMEGA_OPT_AT_1_5 = 2.18 * 1.5 / 0.455


def _central_difference(net, xn, yn, params, l, idx, eps=1e-6):
    orig = params[l][idx]
    params[l][idx] = orig + eps
    up, _, _ = loss_and_gradients(net, xn, yn)
    params[l][idx] = orig - eps
    down, _, _ = loss_and_gradients(net, xn, yn)
    params[l][idx] = orig
    return (up - down) / (2 * eps)


def test_backprop_matches_central_differences():
    rng = np.random.default_rng(3)
    net = init_network((2, 16, 16, 1), seed=3)
    for b in net.biases:
        b[:] = rng.normal(0, 0.3, b.shape)
    xn = rng.uniform(-1, 1, (32, 2))
    yn = rng.uniform(-1, 1, (32, 1))
    _, gw, gb = loss_and_gradients(net, xn, yn)
    analytic, numeric = [], []
    for params, grads in ((net.weights, gw), (net.biases, gb)):
        for l in range(len(params)):
            for idx in np.ndindex(params[l].shape):
                analytic.append(grads[l][idx])
                numeric.append(_central_difference(net, xn, yn, params, l, idx))
    analytic, numeric = np.array(analytic), np.array(numeric)
    rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic + numeric)
    assert rel < 1e-5


def test_network_shapes_validated():
    net = init_network()
    with pytest.raises(DomainError):
        type(net)((2, 3, 1), net.weights, net.biases, net.input_min, net.input_max, 0.0, 1.0)
    with pytest.raises(DomainError):
        init_network(input_min=(0.0, 1.0), input_max=(1.0, 1.0))


@given(st.floats(0.8, 2.5), st.floats(0.5, 14.0))
@settings(max_examples=30)
def test_vectorised_prediction_matches_scalar(u, w):
    net = init_network(seed=1)
    vec = predict(net, np.array([u, u]), np.array([w, w]))
    assert vec[0] == vec[1]
    assert vec[0] == pytest.approx(mlp_forward(net, u, w), rel=1e-12, abs=1e-12)


def test_forward_rejects_non_finite_input():
    with pytest.raises(DomainError):
        mlp_forward(init_network(), math.nan, 1.0)


def test_extrapolation_flag():
    net = init_network(input_min=(0.8, 0.5), input_max=(2.5, 14.0))
    assert not is_extrapolation(net, 1.5, 7.0)
    assert is_extrapolation(net, 3.0, 7.0)


def test_serialisation_round_trip_is_exact(tmp_path):
    net = init_network(seed=7, input_min=(0.8, 0.5), input_max=(2.5, 14.0), output_min=-5.0, output_max=900.0)
    back = loads(dumps(net))
    x = np.linspace(0.8, 2.5, 11)
    np.testing.assert_array_equal(predict(back, x, 7.0), predict(net, x, 7.0))
    save_network(net, tmp_path / "n.txt")
    assert dumps(load_network(tmp_path / "n.txt")) == dumps(net)


def test_loads_rejects_foreign_text():
    with pytest.raises(DomainError):
        loads("hello\n")


def test_training_reduces_loss_and_is_deterministic():
    x = np.linspace(-1, 1, 40)
    u, w = np.meshgrid(x, x)
    p = np.sin(u) * w
    cfg = TrainConfig(epochs=40, seed=2)
    a = mlp_train(init_network(seed=2), u, w, p, cfg)
    b = mlp_train(init_network(seed=2), u, w, p, cfg)
    assert a.loss_history[-1] < 0.2 * a.loss_history[0]
    assert dumps(a.network) == dumps(b.network)


def test_divergence_reports_epoch():
    x = np.linspace(-1, 1, 20)
    with pytest.raises(DivergenceError) as info:
        mlp_train(init_network(seed=0), x, x, x**2, TrainConfig(learning_rate=1e6, epochs=50))
    assert info.value.epoch >= 0


def test_zero_epochs_returns_untrained_network():
    settings_ = AnnSettings(train=TrainConfig(epochs=0), grid_points=5)
    result = train_surrogate(TurbineConfig(), settings_)
    assert result.loss_history == []
    fresh = init_network(seed=0)
    np.testing.assert_array_equal(result.network.weights[0], fresh.weights[0])


def test_held_out_grid_shares_no_node_with_training_grid():
    s = AnnSettings(grid_points=5)
    u, w, _ = power_grid(TurbineConfig(), s)
    hu, hw, _ = power_grid(TurbineConfig(), s, offset=0.5)
    train_nodes = set(zip(u.round(9), w.round(9)))
    assert not train_nodes & set(zip(hu.round(9), hw.round(9)))
    assert hu.size == 16


def test_default_surrogate_fidelity(default_network):
    rmse, p_max = held_out_rmse(default_network, TurbineConfig(), AnnSettings())
    assert rmse < 0.02 * p_max
    assert mlp_forward(default_network, 1.5, OMEGA_OPT_AT_1_5) == pytest.approx(P_MPP_AT_1_5, rel=0.02)
    assert mech_power(TurbineConfig(), 1.5, OMEGA_OPT_AT_1_5) == pytest.approx(P_MPP_AT_1_5, rel=1e-12)
