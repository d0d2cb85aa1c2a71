import math

import numpy as np
import pytest

from mccws.distill import DistillConfig, combined_loss, distill_loss
from mccws.numerics import ShapeError, Tensor, grad_check, gradients


def loop_oracle(student, teacher):
    """Per-position loop over unpadded sentences, pure Python floats."""
    total, count = 0.0, 0
    for s_sent, t_sent in zip(student, teacher):
        for s, t in zip(s_sent, t_sent):
            ns = math.sqrt(sum(x * x for x in s))
            nt = math.sqrt(sum(x * x for x in t))
            us = [x / ns if ns > 0 else 0.0 for x in s]
            ut = [x / nt if nt > 0 else 0.0 for x in t]
            total += sum((a - b) ** 2 for a, b in zip(us, ut))
            count += 1
    return total / (2 * count)


def ragged(rng, lengths):
    return [rng.normal(size=(n, 4)) for n in lengths]


def padded(seqs):
    out = np.zeros((len(seqs), max(len(s) for s in seqs), 4))
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def test_identical_is_zero(rng):
    x = ragged(rng, [3, 5])
    assert distill_loss(x, x).item() == 0.0


def test_single_antipodal_position():
    u = np.array([[0.6, 0.0, 0.8, 0.0]])
    assert distill_loss([u], [-u]).item() == pytest.approx(2.0, abs=1e-15)


def test_antipodal_average_over_positions(rng):
    x = ragged(rng, [2, 4, 1])
    assert distill_loss(x, [-a for a in x]).item() == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    lengths = rng.integers(1, 9, size=4)
    s, t = ragged(rng, lengths), ragged(rng, lengths)
    assert abs(distill_loss(s, t).item() - loop_oracle(s, t)) <= 1e-10
    # padded form gives the same value; padding content must not matter
    sp, tp = padded(s), padded(t)
    sp[0, lengths[0]:] = 99.0
    assert abs(distill_loss(Tensor(sp), tp, lengths).item() - loop_oracle(s, t)) <= 1e-10


def test_zero_vectors_map_to_zero():
    s = [np.array([[0.0, 0, 0, 0], [1.0, 0, 0, 0]])]
    t = [np.array([[0.0, 3, 0, 0], [0.0, 0, 0, 0]])]
    assert distill_loss(s, t).item() == pytest.approx((1.0 + 1.0) / 4)


def test_rescale_invariance(rng):
    s, t = ragged(rng, [3, 6]), ragged(rng, [3, 6])
    c = [rng.uniform(0.1, 10, size=(len(a), 1)) for a in s]
    base = distill_loss(s, t).item()
    assert distill_loss([a * k for a, k in zip(s, c)], t).item() == pytest.approx(base, abs=1e-12)
    assert distill_loss(s, [a * k for a, k in zip(t, c)]).item() == pytest.approx(base, abs=1e-12)


def test_bounded(rng):
    for _ in range(20):
        s, t = ragged(rng, [4, 2]), ragged(rng, [4, 2])
        assert 0.0 <= distill_loss(s, t).item() <= 2.0


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        distill_loss([np.ones((3, 4))], [np.ones((2, 4))])
    with pytest.raises(ShapeError):
        distill_loss(Tensor(np.ones((1, 3, 4))), np.ones((1, 3, 5)))


def test_gradient_matches_finite_differences(rng):
    s = Tensor(rng.normal(size=(2, 5, 4)), requires_grad=True)
    t = rng.normal(size=(2, 5, 4))
    lengths = np.array([5, 3])
    report = grad_check(lambda: distill_loss(s, t, lengths), [s], tolerance=1e-6)
    assert report.ok, report


def test_teacher_gets_no_gradient(rng):
    s = Tensor(rng.normal(size=(1, 4, 4)), requires_grad=True)
    t = Tensor(rng.normal(size=(1, 4, 4)), requires_grad=True)
    gs, gt = gradients(distill_loss(s, t, np.array([4])), [s, t])
    assert np.any(gs != 0)
    assert np.all(gt == 0)


def test_combined_arithmetic():
    assert combined_loss(Tensor(1.0), Tensor(2.0), 0.15).item() == pytest.approx(1.3)
    assert combined_loss(Tensor(1.0), Tensor(2.0), 0.0).item() == 1.0


def test_combined_gradient_is_weighted_sum(rng):
    w = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    x = rng.normal(size=(1, 5, 3))
    t = rng.normal(size=(1, 5, 4))
    lengths = np.array([5])

    def seg():
        return ((Tensor(x) @ w) * (Tensor(x) @ w)).sum()

    def dis():
        return distill_loss(Tensor(x) @ w, t, lengths)

    (g_seg,) = gradients(seg(), [w])
    (g_dis,) = gradients(dis(), [w])
    (g_all,) = gradients(combined_loss(seg(), dis(), 0.15), [w])
    np.testing.assert_allclose(g_all, g_seg + 0.15 * g_dis, atol=1e-12)
    assert grad_check(lambda: combined_loss(seg(), dis(), 0.15), [w], tolerance=1e-6).ok


def test_negative_alpha_rejected():
    with pytest.raises(ValueError):
        DistillConfig(alpha=-0.1)
