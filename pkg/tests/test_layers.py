import math

import numpy as np
import pytest

from conftest import analytic_grad
from flow_inverse_solver.autodiff import Tensor, sub
from flow_inverse_solver.errors import DomainError, LayerStateError, ShapeError, SingularMatrixError
from flow_inverse_solver.layers import (
    COUPLING_SHIFT,
    ActNorm,
    CouplingLayer,
    FlowStep,
    InvConv1x1,
    SplitPrior,
    Squeeze,
    actnorm_init,
)


def randomize(layer, rng, scale=0.3):
    for param in layer.parameters():
        param.data[...] = rng.standard_normal(param.shape) * scale


def jacobian_logdet(layer, x0: np.ndarray, eps: float = 1e-6) -> float:
    """log|det| de la jacobiana por diferencias centrales de una sola muestra"""
    n = x0.size
    jacobian = np.zeros((n, n))
    for i in range(n):
        step = np.zeros(n)
        step[i] = eps
        plus, _ = layer.forward(Tensor((x0.ravel() + step).reshape(x0.shape)))
        minus, _ = layer.forward(Tensor((x0.ravel() - step).reshape(x0.shape)))
        jacobian[:, i] = (plus.data - minus.data).ravel() / (2 * eps)
    return float(np.linalg.slogdet(jacobian)[1])


class TestActNorm:
    def test_data_dependent_init(self, rng):
        batch = rng.standard_normal((6, 3, 4, 4)) * np.array([1.0, 5.0, 0.2])[None, :, None, None] + 2.0
        layer = actnorm_init(batch, ActNorm("an", 3, np.float64))
        out, _ = layer.forward(Tensor(batch))
        np.testing.assert_allclose(out.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.data.std(axis=(0, 2, 3)), 1.0, atol=1e-12)

    def test_logdet_counts_spatial_positions(self, rng):
        layer = ActNorm("an", 2, np.float64)
        layer.initialize(rng.standard_normal((4, 2, 3, 5)))
        _, logdet = layer.forward(Tensor(rng.standard_normal((1, 2, 3, 5))))
        expected = 15 * np.sum(np.log(np.abs(layer.scale.data)))
        assert logdet.item() == pytest.approx(expected)

    def test_constant_channel_rejected(self):
        batch = np.ones((4, 2, 2, 2))
        batch[:, 0] = np.arange(32).reshape(4, 2, 2)
        with pytest.raises(DomainError, match="canal 1"):
            ActNorm("an", 2).initialize(batch)

    def test_uninitialized_use_rejected(self):
        with pytest.raises(LayerStateError):
            ActNorm("an", 2).forward(Tensor(np.ones((1, 2, 2, 2))))

    def test_double_init_rejected(self, rng):
        layer = ActNorm("an", 2)
        layer.initialize(rng.standard_normal((4, 2, 2, 2)))
        with pytest.raises(LayerStateError):
            layer.initialize(rng.standard_normal((4, 2, 2, 2)))

    def test_inverse_round_trip(self, rng):
        layer = ActNorm("an", 2, np.float64)
        layer.initialize(rng.standard_normal((4, 2, 2, 2)))
        x = rng.standard_normal((3, 2, 2, 2))
        y, logdet = layer.forward(Tensor(x))
        x_back, logdet_inv = layer.inverse(y)
        np.testing.assert_allclose(x_back.data, x, atol=1e-12)
        assert logdet.item() == pytest.approx(-logdet_inv.item())


class TestCouplingLayer:
    def test_odd_channels_rejected(self, rng):
        with pytest.raises(ShapeError):
            CouplingLayer("c", 3, 4, 1, apply_swap=False, rng=rng)

    def test_zero_init_logdet(self, rng):
        layer = CouplingLayer("c", 4, 8, 3, apply_swap=False, rng=rng, dtype=np.float64)
        _, logdet = layer.forward(Tensor(rng.standard_normal((2, 4, 3, 3))))
        expected = 2 * 3 * 3 * math.log(1.0 / (1.0 + math.exp(-COUPLING_SHIFT)))
        np.testing.assert_allclose(logdet.data, [expected, expected])

    @pytest.mark.parametrize("apply_swap", [False, True])
    def test_conditioning_half_untouched(self, rng, apply_swap):
        layer = CouplingLayer("c", 4, 8, 3, apply_swap=apply_swap, rng=rng, dtype=np.float64)
        randomize(layer, rng)
        x = rng.standard_normal((2, 4, 3, 3))
        y, _ = layer.forward(Tensor(x))
        kept = slice(2, 4) if apply_swap else slice(0, 2)
        np.testing.assert_array_equal(y.data[:, kept], x[:, kept])

    @pytest.mark.parametrize("apply_swap", [False, True])
    def test_inverse_round_trip(self, rng, apply_swap):
        layer = CouplingLayer("c", 4, 8, 3, apply_swap=apply_swap, rng=rng, dtype=np.float64)
        randomize(layer, rng)
        x = rng.standard_normal((2, 4, 3, 3))
        y, logdet = layer.forward(Tensor(x))
        x_back, logdet_inv = layer.inverse(y)
        np.testing.assert_allclose(x_back.data, x, atol=1e-10)
        np.testing.assert_allclose(logdet.data, -logdet_inv.data)

    def test_logdet_matches_jacobian(self, rng):
        layer = CouplingLayer("c", 4, 8, 3, apply_swap=True, rng=rng, dtype=np.float64)
        randomize(layer, rng)
        x0 = rng.standard_normal((1, 4, 4, 4))
        _, logdet = layer.forward(Tensor(x0))
        expected = jacobian_logdet(layer, x0)
        assert abs(logdet.item() - expected) <= 1e-5 * max(1.0, abs(expected))

    @pytest.mark.parametrize("swaps, unchanged", [((True, False), 0), ((False, False), 2)])
    def test_swap_mixes_every_channel(self, rng, swaps, unchanged):
        first, second = (CouplingLayer(name, 4, 8, 3, apply_swap=swap, rng=rng, dtype=np.float64)
                         for name, swap in zip("ab", swaps))
        randomize(first, rng)
        randomize(second, rng)

        def through_both(x):
            h, _ = first.forward(x)
            return second.forward(h)[0]

        x0 = rng.standard_normal((1, 4, 3, 3))
        moved = np.abs(through_both(Tensor(x0)).data - x0).max(axis=(0, 2, 3))
        assert np.sum(moved == 0.0) == unchanged
        if not unchanged:
            grad = analytic_grad(lambda x: sub(through_both(x), x).sum(), x0)
            assert np.all(np.abs(grad).sum(axis=(0, 2, 3)) > 0)

    def test_parameter_names(self, rng):
        layer = CouplingLayer("scale0.step0.coupling", 2, 4, 1, apply_swap=False, rng=rng)
        names = {p.name for p in layer.parameters()}
        assert "scale0.step0.coupling.cnn.conv0.weight" in names
        assert len(names) == 6


class TestSqueeze:
    def test_block_order(self):
        x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 2, 2)
        y, logdet = Squeeze().forward(Tensor(x))
        assert y.shape == (1, 4, 1, 1)
        np.testing.assert_array_equal(y.data.ravel(), [1.0, 2.0, 3.0, 4.0])
        assert logdet.item() == 0.0

    def test_round_trip(self, rng):
        x = rng.standard_normal((2, 3, 4, 6))
        y, _ = Squeeze().forward(Tensor(x))
        assert y.shape == (2, 12, 2, 3)
        np.testing.assert_array_equal(Squeeze().inverse(y)[0].data, x)

    def test_odd_height_rejected(self):
        with pytest.raises(ShapeError, match="altura"):
            Squeeze().forward(Tensor(np.ones((1, 1, 3, 2))))


class TestSplitPrior:
    def test_split_and_merge(self, rng):
        x = rng.standard_normal((2, 4, 2, 2))
        keep, emitted = SplitPrior().split(Tensor(x))
        np.testing.assert_array_equal(emitted.data, x[:, 2:])
        np.testing.assert_array_equal(SplitPrior().merge(keep, emitted).data, x)

    def test_odd_channels_rejected(self):
        with pytest.raises(ShapeError):
            SplitPrior().split(Tensor(np.ones((1, 3, 2, 2))))


class TestInvConv1x1:
    def test_round_trip_and_logdet(self, rng):
        layer = InvConv1x1("inv", 4, rng, np.float64)
        layer.weight.data[...] += rng.standard_normal((4, 4)) * 0.2
        x = rng.standard_normal((2, 4, 3, 3))
        y, logdet = layer.forward(Tensor(x))
        expected = 9 * np.log(abs(np.linalg.det(layer.weight.data)))
        assert logdet.item() == pytest.approx(expected)
        x_back, logdet_inv = layer.inverse(y)
        np.testing.assert_allclose(x_back.data, x, atol=1e-10)
        assert logdet_inv.item() == pytest.approx(-expected)

    def test_logdet_matches_jacobian(self, rng):
        layer = InvConv1x1("inv", 2, rng, np.float64)
        layer.weight.data[...] += rng.standard_normal((2, 2)) * 0.3
        x0 = rng.standard_normal((1, 2, 2, 2))
        _, logdet = layer.forward(Tensor(x0))
        assert logdet.item() == pytest.approx(jacobian_logdet(layer, x0), abs=1e-6)

    def test_rotation_init_is_well_conditioned(self, rng):
        layer = InvConv1x1("inv", 6, rng, np.float64)
        assert abs(abs(np.linalg.det(layer.weight.data)) - 1.0) < 1e-10
        assert layer.check_conditioning()

    def test_singular_weight(self, rng):
        layer = InvConv1x1("inv", 3, rng, np.float64)
        layer.weight.data[...] = np.ones((3, 3))
        assert not layer.check_conditioning()
        with pytest.raises(SingularMatrixError):
            layer.inverse(Tensor(rng.standard_normal((1, 3, 2, 2))))


class TestFlowStep:
    def test_invconv_step_order(self, rng):
        step = FlowStep(
            "s",
            ActNorm("s.actnorm", 4, np.float64),
            CouplingLayer("s.coupling", 4, 8, 1, apply_swap=False, rng=rng, dtype=np.float64),
            InvConv1x1("s.invconv", 4, rng, np.float64),
        )
        assert [type(layer).__name__ for layer in step.layers] == ["ActNorm", "InvConv1x1", "CouplingLayer"]
        x = rng.standard_normal((3, 4, 2, 2))
        y, logdet = step.forward(Tensor(x), init_actnorm=True)
        x_back, logdet_inv = step.inverse(y)
        np.testing.assert_allclose(x_back.data, x, atol=1e-10)
        np.testing.assert_allclose(logdet.data, -logdet_inv.data)
