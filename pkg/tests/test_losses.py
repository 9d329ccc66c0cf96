import math

import numpy as np
import pytest
import torch

from oracles import central_difference, relative_error
from splicegan import losses
from splicegan.errors import ConfigError, ShapeMismatch
from splicegan.losses import LossConfig

EPS32 = losses.EPS_FLOAT32
LN2 = math.log(2.0)


def t(values, dtype=torch.float64):
    return torch.tensor(values, dtype=dtype)


def test_d_loss_at_half():
    assert float(losses.adversarial_loss_D(t([0.5] * 6), t([0.5] * 6))) == pytest.approx(2 * LN2, abs=1e-12)


def test_d_loss_perfect_discriminator():
    eps = losses.EPS_FLOAT64
    value = float(losses.adversarial_loss_D(t([1 - eps] * 4), t([eps] * 4)))
    assert 0.0 <= value <= 2 * eps * 1.01


def test_d_loss_mixed_example():
    # direct evaluation of -(ln 0.9 + ln 0.8)/2 - ln(1 - 0.3)
    expected = -(math.log(0.9) + math.log(0.8)) / 2 - math.log(0.7)
    assert expected == pytest.approx(0.520927, abs=1e-6)
    assert float(losses.adversarial_loss_D(t([0.9, 0.8]), t([0.3]))) == pytest.approx(expected, abs=1e-12)


def test_g_loss_examples():
    assert float(losses.adversarial_loss_G(t([0.5] * 3))) == pytest.approx(LN2, abs=1e-12)
    assert float(losses.adversarial_loss_G(t([1 - 1e-12] * 3))) == pytest.approx(0.0, abs=1e-11)
    expected = -(math.log(0.25) + math.log(0.75)) / 2
    assert expected == pytest.approx(0.8370, abs=5e-5)
    assert float(losses.adversarial_loss_G(t([0.25, 0.75]))) == pytest.approx(expected, abs=1e-12)


def test_reconstruction_examples():
    target = t([1.0, 0.0, 1.0, 1.0])
    assert float(losses.reconstruction_loss(torch.full_like(target, 0.5), target, "bce")) == pytest.approx(LN2)
    assert float(losses.reconstruction_loss(target.clone(), target, "l1")) == 0.0
    expected = (-math.log(0.9) - math.log(0.8)) / 2
    assert expected == pytest.approx(0.1643, abs=5e-5)
    assert float(losses.reconstruction_loss(t([0.9, 0.2]), t([1.0, 0.0]), "bce")) == pytest.approx(expected, abs=1e-12)


def test_total_examples():
    fake = t([0.5] * 4)
    target = t([1.0, 0.0, 0.0, 1.0])
    cfg = LossConfig("bce", 100.0)
    assert float(losses.total_generator_loss(fake, target.clone(), target, cfg).total) == pytest.approx(LN2, abs=1e-9)
    total = losses.total_generator_loss(fake, torch.full_like(target, 0.5), target, cfg).total
    assert float(total) == pytest.approx(101 * LN2, abs=1e-9)
    assert float(total) == pytest.approx(70.01, abs=0.005)


def test_lambda_zero_is_adversarial_only():
    rng = np.random.default_rng(0)
    fake, est, tgt = t(rng.uniform(0.1, 0.9, 5)), t(rng.uniform(0.1, 0.9, 5)), t(rng.integers(0, 2, 5))
    out = losses.total_generator_loss(fake, est, tgt, LossConfig("bce", 0.0))
    assert float(out.total) == float(losses.adversarial_loss_G(fake))


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        losses.reconstruction_loss(torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 4, 5))


def test_bad_config():
    with pytest.raises(ConfigError):
        LossConfig("l2")
    with pytest.raises(ConfigError):
        LossConfig("bce", -1.0)


def test_float32_clamp_keeps_losses_finite():
    zeros, ones = torch.zeros(4), torch.ones(4)
    assert torch.isfinite(losses.adversarial_loss_D(zeros, ones))
    assert torch.isfinite(losses.adversarial_loss_G(zeros))
    value = losses.reconstruction_loss(zeros, ones, "bce")
    assert float(value) == pytest.approx(-math.log(EPS32), rel=1e-5)


def test_d_loss_swap_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(20):
        real, fake = t(rng.uniform(0.01, 0.99, 7)), t(rng.uniform(0.01, 0.99, 7))
        a = losses.adversarial_loss_D(real, fake)
        b = losses.adversarial_loss_D(1 - fake, 1 - real)
        assert float(a) == pytest.approx(float(b), abs=1e-12)


def test_bce_nonnegative_and_minimal_at_target():
    rng = np.random.default_rng(2)
    for _ in range(50):
        tgt = t(rng.integers(0, 2, 9).astype(float))
        est = t(rng.uniform(0, 1, 9))
        assert float(losses.reconstruction_loss(est, tgt, "bce")) >= 0.0
        assert float(losses.reconstruction_loss(tgt.clone(), tgt, "bce")) <= 2e-12


def test_total_monotone_in_lambda():
    rng = np.random.default_rng(3)
    fake, est, tgt = t(rng.uniform(0.1, 0.9, 6)), t(rng.uniform(0.1, 0.9, 6)), t(rng.integers(0, 2, 6))
    totals = [float(losses.total_generator_loss(fake, est, tgt, LossConfig("bce", lam)).total) for lam in (0, 1, 10, 100)]
    assert totals == sorted(totals)


# ---------------------------------------------------------- gradient checks


def _check_gradient(fn, *arrays, wrt=0):
    """Compare autograd with central differences for ``fn`` of float64 tensors."""
    tensors = [torch.tensor(a, dtype=torch.float64) for a in arrays]
    tensors[wrt].requires_grad_(True)
    fn(*tensors).backward()
    analytic = tensors[wrt].grad.numpy()

    def scalar(x):
        args = [torch.tensor(a, dtype=torch.float64) for a in arrays]
        args[wrt] = torch.tensor(x, dtype=torch.float64)
        return float(fn(*args))

    numeric = central_difference(scalar, arrays[wrt])
    return relative_error(analytic, numeric)


def _random_case(rng):
    n = int(rng.integers(1, 33))
    shape = (n,) if rng.random() < 0.5 else (1, 1, 1, n)
    probs = lambda: rng.uniform(0.05, 0.95, shape)  # noqa: E731
    return probs, rng.integers(0, 2, shape).astype(np.float64)


def gradient_trials(trials=100, seed=0):
    """Worst relative error per loss over ``trials`` random cases."""
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(["adversarial_D", "adversarial_G", "bce", "l1", "total_bce", "total_l1"], 0.0)
    for _ in range(trials):
        probs, target = _random_case(rng)
        real, fake, est = probs(), probs(), probs()
        # keep |est - target| away from the L1 kink at 0
        worst["adversarial_D"] = max(
            worst["adversarial_D"],
            _check_gradient(losses.adversarial_loss_D, real, fake, wrt=0),
            _check_gradient(losses.adversarial_loss_D, real, fake, wrt=1),
        )
        worst["adversarial_G"] = max(worst["adversarial_G"], _check_gradient(losses.adversarial_loss_G, fake))
        for mode in ("bce", "l1"):
            worst[mode] = max(
                worst[mode],
                _check_gradient(lambda e, y, m=mode: losses.reconstruction_loss(e, y, m), est, target),
            )
            cfg = LossConfig(mode, 100.0)
            worst[f"total_{mode}"] = max(
                worst[f"total_{mode}"],
                _check_gradient(lambda f, e, y, c=cfg: losses.total_generator_loss(f, e, y, c).total, fake, est, target, wrt=0),
                _check_gradient(lambda f, e, y, c=cfg: losses.total_generator_loss(f, e, y, c).total, fake, est, target, wrt=1),
            )
    return worst


def test_gradients_match_finite_differences():
    worst = gradient_trials(trials=100, seed=0)
    for name, err in worst.items():
        assert err < 1e-5, (name, err)
