import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carl.funcapprox import (
    Adam,
    Mlp,
    checkpoint_bytes,
    gradient_check,
    load_checkpoint,
    load_into,
    polyak_update,
    save_checkpoint,
)


def test_parameter_count():
    net = Mlp((7, 5, 3, 2), rng=0)
    assert net.n_params == sum(a * b + b for a, b in [(7, 5), (5, 3), (3, 2)])


def test_identity_network():
    net = Mlp((4, 4), rng=0)
    net.params[0][...] = np.eye(4)
    net.params[1][...] = 0.0
    x = np.array([0.3, -1.0, 2.0, 5.0])
    assert np.array_equal(net(x), x)


def test_scaled_sigmoid_range():
    net = Mlp((3, 8, 4), output="sigmoid3", rng=1)
    y = net(np.random.default_rng(0).normal(scale=50, size=(200, 3)))
    assert np.all((y >= 0) & (y <= 3))
    y = net(np.random.default_rng(0).normal(size=(200, 3)))
    assert np.all((y > 0) & (y < 3))


def test_seeded_init_is_byte_identical():
    x = np.linspace(-1, 1, 6)
    a = Mlp((6, 10, 2), rng=42)(x)
    b = Mlp((6, 10, 2), rng=42)(x)
    assert a.tobytes() == b.tobytes()


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        Mlp((3, 2), rng=0)(np.zeros(4))


def test_backward_needs_forward():
    with pytest.raises(RuntimeError):
        Mlp((3, 2), rng=0).backward(np.ones(2))


def test_linear_gradient_is_input():
    net = Mlp((1, 1), rng=0)
    net.forward(np.array([2.5]))
    grads, _ = net.backward(np.array([1.0]))
    assert grads[0][0, 0] == 2.5 and grads[1][0] == 1.0


def test_constant_loss_has_zero_gradient():
    net = Mlp((3, 4, 2), rng=0)
    net.forward(np.ones((5, 3)))
    grads, gx = net.backward(np.zeros((5, 2)))
    assert all(np.all(g == 0) for g in grads) and np.all(gx == 0)


@pytest.mark.parametrize("output", ["identity", "sigmoid3"])
def test_gradient_matches_finite_differences(output):
    rng = np.random.default_rng(3)
    net = Mlp((6, 12, 9, 3), output=output, rng=rng)
    x = rng.normal(size=(10, 6))
    w = rng.normal(size=(10, 3))
    loss = lambda: float(np.sum(w * net.predict(x) ** 2))
    y = net.forward(x)
    grads, gx = net.backward(2 * w * y)
    assert gradient_check(loss, net.params, grads, n=100, rng=7) < 1e-4
    # input gradient
    eps = 1e-6
    x2 = x.copy()
    x2[4, 2] += eps
    x3 = x.copy()
    x3[4, 2] -= eps
    fd = (np.sum(w * net.predict(x2) ** 2) - np.sum(w * net.predict(x3) ** 2)) / (2 * eps)
    assert abs(fd - gx[4, 2]) < 1e-6 * max(1.0, abs(fd))


def test_polyak_examples():
    online = Mlp((2, 3), rng=0)
    target = Mlp((2, 3), rng=1)
    polyak_update(target, online, 1.0)
    assert all(np.array_equal(a, b) for a, b in zip(target.params, online.params))
    before = target.get_flat().copy()
    polyak_update(target, online, 0.005)
    assert np.array_equal(target.get_flat(), before)
    target.set_flat(np.zeros(target.n_params))
    online.set_flat(np.ones(online.n_params))
    polyak_update(target, online, 0.5)
    polyak_update(target, online, 0.5)
    assert np.allclose(target.get_flat(), 0.75)
    with pytest.raises(ValueError):
        polyak_update(Mlp((2, 4), rng=0), online, 0.5)


@settings(max_examples=50)
@given(st.floats(0.001, 1.0), st.integers(0, 10_000))
def test_polyak_contracts_toward_online(tau, seed):
    online = Mlp((3, 4, 2), rng=seed)
    target = Mlp((3, 4, 2), rng=seed + 1)
    d0 = np.linalg.norm(target.get_flat() - online.get_flat())
    polyak_update(target, online, tau)
    d1 = np.linalg.norm(target.get_flat() - online.get_flat())
    assert np.isclose(d1, (1 - tau) * d0, rtol=1e-9, atol=1e-12)


def test_adam_moments_match_parameters_and_clip_keeps_finite():
    net = Mlp((4, 8, 1), rng=0)
    opt = Adam(net, lr=1e-2, clip_norm=5.0)
    assert [m.shape for m in opt.m] == [p.shape for p in net.params]
    huge = [np.full(p.shape, 1e300) for p in net.params]
    before = net.get_flat().copy()
    for _ in range(5):
        assert opt.step(net, huge) > 1e300
    after = net.get_flat()
    assert np.all(np.isfinite(after)) and not np.array_equal(before, after)


def test_adam_minimises_a_quadratic():
    net = Mlp((1, 1), rng=0)
    opt = Adam(net, lr=0.05)
    for _ in range(500):
        y = net.forward(np.array([[1.0]]))
        grads, _ = net.backward(2 * (y - 3.0))
        opt.step(net, grads)
    assert abs(net(np.array([1.0]))[0] - 3.0) < 1e-3


def test_checkpoint_round_trip_and_validation(tmp_path):
    nets = {"actor": Mlp((4, 6, 2), output="sigmoid3", rng=0), "q": Mlp((6, 1), rng=1)}
    path = tmp_path / "ck.npz"
    save_checkpoint(path, nets)
    back = load_checkpoint(path)
    for k in nets:
        assert back[k].same_architecture(nets[k])
        assert back[k].get_flat().tobytes() == nets[k].get_flat().tobytes()
    fresh = Mlp((4, 6, 2), output="sigmoid3", rng=9)
    load_into(fresh, back["actor"])
    assert np.array_equal(fresh.get_flat(), nets["actor"].get_flat())
    with pytest.raises(ValueError):
        load_into(Mlp((4, 7, 2), rng=0), back["actor"])
    assert checkpoint_bytes(nets) == checkpoint_bytes(nets)
    buf = io.BytesIO(checkpoint_bytes(nets))
    assert set(load_checkpoint(buf)) == {"actor", "q"}
