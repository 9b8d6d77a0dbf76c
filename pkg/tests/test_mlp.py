import numpy as np
import pytest

from voxdiff.errors import ConfigError
from voxdiff.mlp import MlpConfig, MlpDenoiser, mlp_grad, sgd_update
from voxdiff.rng import stream
from voxdiff.schedule import Schedule

from .oracles import numeric_gradient

SCHED = Schedule("linear")


def tiny_model(seed=0, n_classes=2, time_conditioned=True, shape=(4,)):
    cfg = MlpConfig(
        shape=shape,
        K=2,
        hidden=(8, 8),
        n_freq=4,
        cond_dim=4,
        n_classes=n_classes,
        time_conditioned=time_conditioned,
    )
    return MlpDenoiser(cfg, seed=seed)


def test_zero_initialized_weights_give_uniform_rows():
    m = tiny_model()
    for name in m.params:
        m.params[name] = np.zeros_like(m.params[name])
    p = m.predict_batch(np.array([[0, 1, 1, 0]]), 0.5, 0)
    assert np.allclose(p, 0.5)


def test_rows_on_simplex_and_tau_bounded_confidence():
    m = tiny_model(seed=3)
    x = stream(0, "x").integers(0, 2, (5, 4))
    p = m.predict_batch(x, 0.25, 1)
    assert np.allclose(p.sum(-1), 1.0, atol=1e-12)
    # logit differences are bounded by 2 tau, so probabilities stay interior
    floor = 1.0 / (1.0 + np.exp(2 * m.config.tau))
    assert p.min() > floor * 0.99


def test_position_sensitivity_of_flattened_encoding():
    """The trunk sees the flattened grid: swapping two unequal tokens changes
    the input globally, so outputs need not permute along; swapping equal
    tokens is a no-op."""
    m = tiny_model(seed=5)
    a = np.array([[0, 1, 0, 0]])
    b = np.array([[1, 0, 0, 0]])  # tokens 0 and 1 swapped
    pa = m.predict_batch(a, 0.4, 0)
    pb = m.predict_batch(b, 0.4, 0)
    assert not np.allclose(pa[0, 2:], pb[0, 2:])
    c = np.array([[0, 1, 0, 1]])
    d = np.array([[0, 1, 0, 1]])
    assert np.allclose(m.predict_batch(c, 0.4, 0), m.predict_batch(d, 0.4, 0))


def test_time_conditioning_flag():
    m = tiny_model(seed=7, time_conditioned=False)
    x = np.array([[1, 0, 1, 1]])
    assert np.allclose(m.predict_batch(x, 0.1, 0), m.predict_batch(x, 0.9, 0))
    mt = tiny_model(seed=7, time_conditioned=True)
    assert not np.allclose(mt.predict_batch(x, 0.1, 0), mt.predict_batch(x, 0.9, 0))


def test_null_condition_accepted():
    m = tiny_model(seed=9)
    x = np.array([[1, 0, 1, 1]])
    p_null = m.predict_batch(x, 0.5, None)
    p_cond = m.predict_batch(x, 0.5, 1)
    assert np.isfinite(p_null).all()
    assert not np.allclose(p_null, p_cond)
    with pytest.raises(ConfigError):
        m.predict_batch(x, 0.5, 5)


def test_gradients_match_finite_differences():
    """Max relative error < 1e-4 against central differences, all params."""
    m = tiny_model(seed=11)
    gen = stream(1, "batch")
    x0 = gen.integers(0, 2, (3, 4))
    x_t = gen.integers(0, 2, (3, 4))
    t = gen.uniform(0.2, 0.8, 3)
    cond = np.array([0, 1, -1])

    loss, grads = mlp_grad(m, x0, x_t, t, cond, SCHED)

    def loss_fn():
        return mlp_grad(m, x0, x_t, t, cond, SCHED)[0]

    num = numeric_gradient(loss_fn, m.params, eps=1e-6)
    for name in grads:
        a, n = grads[name], num[name]
        denom = np.maximum(np.abs(n), 1e-8)
        rel = np.abs(a - n) / denom
        assert rel.max() < 1e-4, (name, rel.max())


def test_zero_gradient_at_symmetric_stationary_point():
    """All-zero weights with complementary targets: the softmax sits at the
    uniform point and the batch gradient of the symmetric pair cancels."""
    m = tiny_model(seed=0, n_classes=0)
    for name in m.params:
        m.params[name] = np.zeros_like(m.params[name])
    x0 = np.array([[0, 0, 0, 0], [1, 1, 1, 1]])
    x_t = np.array([[0, 1, 0, 1], [1, 0, 1, 0]])
    t = np.array([0.5, 0.5])
    _, grads = mlp_grad(m, x0, x_t, t, None, SCHED)
    for name in ("W3", "b3"):
        assert np.abs(grads[name]).max() < 1e-12, name


def test_single_sgd_step_decreases_batch_loss():
    m = tiny_model(seed=13)
    gen = stream(2, "sgd")
    x0 = gen.integers(0, 2, (6, 4))
    x_t = gen.integers(0, 2, (6, 4))
    t = gen.uniform(0.3, 0.7, 6)
    cond = gen.integers(0, 2, 6)
    loss0, grads = mlp_grad(m, x0, x_t, t, cond, SCHED)
    sgd_update(m.params, grads, {}, lr=1e-2, momentum=0.0, weight_decay=0.0)
    loss1, _ = mlp_grad(m, x0, x_t, t, cond, SCHED)
    assert loss1 < loss0


def test_checkpoint_roundtrip_preserves_predictions(tmp_path):
    from voxdiff.formats import read_checkpoint, write_checkpoint

    m = tiny_model(seed=17, time_conditioned=False)
    path = tmp_path / "model.dvdm"
    write_checkpoint(path, m)
    m2 = read_checkpoint(path)
    assert m2.config == m.config
    x = stream(3, "ck").integers(0, 2, (2, 4))
    assert np.array_equal(m.predict_batch(x, 0.3, 1), m2.predict_batch(x, 0.3, 1))
    write_checkpoint(tmp_path / "again.dvdm", m2)
    assert (tmp_path / "model.dvdm").read_bytes() == (tmp_path / "again.dvdm").read_bytes()
