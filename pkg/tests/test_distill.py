import numpy as np
import pytest
import torch

from mpqplan.distill import DistillConfig, checksum, distill_train, kd_loss, soft_term
from mpqplan.netlab import TrainSchedule, gaussian_blobs, mlp, split, train


def _np_softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _np_kd(s, t, y, T, alpha):
    ps = _np_softmax(s)
    ce = -np.mean(np.log(ps[np.arange(len(y)), y]))
    pt, pst = _np_softmax(t / T), _np_softmax(s / T)
    kl = np.mean(np.sum(pt * (np.log(pt) - np.log(pst)), axis=1))
    return alpha * ce + (1 - alpha) * T * T * kl


def test_equal_logits_reduce_to_hard_term(rng):
    s = rng.normal(size=(6, 4))
    y = rng.integers(0, 4, 6)
    cfg = DistillConfig(3.0, 0.7)
    assert float(kd_loss(s, s, y, cfg)) == pytest.approx(0.7 * _np_kd(s, s, y, 1.0, 1.0), rel=1e-12)
    assert abs(float(soft_term(s, s, 3.0))) < 1e-12


def test_alpha_one_ignores_teacher(rng):
    s, t = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    y = rng.integers(0, 3, 5)
    cfg = DistillConfig(2.0, 1.0)
    assert float(kd_loss(s, t, y, cfg)) == float(kd_loss(s, t + rng.normal(size=t.shape) * 5, y, cfg))


@pytest.mark.parametrize("seed", range(5))
def test_matches_recomputation(seed):
    rng = np.random.default_rng(seed)
    s, t = rng.normal(size=(7, 5)) * 2, rng.normal(size=(7, 5)) * 2
    y = rng.integers(0, 5, 7)
    got = float(kd_loss(s, t, y, DistillConfig(2.0, 0.5)))
    assert got == pytest.approx(_np_kd(s, t, y, 2.0, 0.5), rel=1e-12)


def test_gradient_finite_difference(rng):
    s, t = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    y = rng.integers(0, 3, 4)
    cfg = DistillConfig(2.5, 0.4)
    st = torch.tensor(s, requires_grad=True)
    (g,) = torch.autograd.grad(kd_loss(st, t, y, cfg), st)
    eps = 1e-6
    for idx in np.ndindex(*s.shape):
        plus, minus = s.copy(), s.copy()
        plus[idx] += eps
        minus[idx] -= eps
        fd = (_np_kd(plus, t, y, 2.5, 0.4) - _np_kd(minus, t, y, 2.5, 0.4)) / (2 * eps)
        assert abs(g[idx].item() - fd) <= 1e-4 * max(abs(fd), 1e-6)


def test_kl_non_negative(rng):
    for _ in range(50):
        s, t = rng.normal(size=(3, 4)) * 3, rng.normal(size=(3, 4)) * 3
        assert float(soft_term(s, t, float(rng.uniform(0.5, 5)))) >= 0
    # shifting all logits by a constant leaves the softmax unchanged
    assert abs(float(soft_term(s, s + 2.0, 2.0))) < 1e-10


def test_temperature_scaling_keeps_gradients_order_one(rng):
    s, t = rng.normal(size=(8, 5)), rng.normal(size=(8, 5))
    norms = []
    for T in (1.0, 2.0, 5.0):
        st = torch.tensor(s, requires_grad=True)
        (g,) = torch.autograd.grad(soft_term(st, t, T), st)
        norms.append(float(g.norm()))
    assert max(norms) / min(norms) < 3


def test_validation(rng):
    with pytest.raises(ValueError):
        DistillConfig(0.0)
    with pytest.raises(ValueError):
        DistillConfig(alpha=1.5)
    with pytest.raises(ValueError):
        kd_loss(rng.normal(size=(2, 3)), rng.normal(size=(2, 4)), [0, 1])


def _toy():
    ds = split(gaussian_blobs(80, 3, 4, seed=0), 3)
    return mlp([4, 8, 3]), ds


def test_alpha_one_same_trajectory_as_plain_training():
    net, ds = _toy()
    p0 = net.init_params(0)
    sched = TrainSchedule(0.05, 1e-4, 16, 4)
    plain = train(net, p0, ds, sched, seed=3)
    kd = distill_train(net, p0, net, p0.copy(), ds, sched, DistillConfig(4.0, 1.0), seed=3)
    assert plain[1] == kd[1]
    np.testing.assert_array_equal(plain[0].values, kd[0].values)


def test_zero_epochs_and_teacher_unchanged():
    net, ds = _toy()
    teacher = train(net, net.init_params(1), ds, TrainSchedule(0.05, 1e-4, 16, 3))[0]
    before = checksum(teacher)
    p0 = net.init_params(2)
    out, hist = distill_train(net, p0, net, teacher, ds, TrainSchedule(epochs=0))
    assert hist == [] and np.array_equal(out.values, p0.values)
    distill_train(net, p0, net, teacher, ds, TrainSchedule(0.05, 1e-4, 16, 2))
    assert checksum(teacher) == before
