import numpy as np
import pytest

from conftest import analytic_grad, relative_error, tiny_config, train_toy_flow
from flow_inverse_solver.autodiff import Tensor, finite_diff_grad
from flow_inverse_solver.datasets import synthetic_shapes
from flow_inverse_solver.errors import NonFiniteError, OperatorError, ShapeError
from flow_inverse_solver.flow_model import LatentState
from flow_inverse_solver.metrics import psnr
from flow_inverse_solver.models import SolveConfig
from flow_inverse_solver.operators import Blur3x3, Colorize, Denoise, InpaintCenter, measure
from flow_inverse_solver.solver import (
    initial_latents,
    objective_csgm,
    objective_map,
    objective_ours,
    solve,
)

SHAPE = (2, 4, 4)


def flat_latent(model, x):
    z, _ = model.forward(x)
    return z.flatten().data


class TestObjectiveGradients:
    @pytest.mark.parametrize("op", [Denoise(SHAPE), Blur3x3(SHAPE), InpaintCenter(SHAPE), Colorize(SHAPE)],
                             ids=lambda op: op.name)
    def test_ours(self, tiny_model, rng, op):
        y = op.apply(rng.random((2,) + SHAPE)).data
        z0 = rng.standard_normal((2, 32)) * 0.5
        with tiny_model.frozen():
            f = lambda z: objective_ours(tiny_model, op, y, z, alpha=0.05).total
            assert relative_error(analytic_grad(f, z0), finite_diff_grad(f, z0)) < 1e-4

    def test_csgm(self, tiny_model, rng):
        op = Blur3x3(SHAPE)
        y = op.apply(rng.random((2,) + SHAPE)).data
        z0 = rng.standard_normal((2, 32))
        with tiny_model.frozen():
            f = lambda z: objective_csgm(tiny_model, op, y, z, gamma=0.1).total
            assert relative_error(analytic_grad(f, z0), finite_diff_grad(f, z0)) < 1e-4

    def test_map(self, tiny_model, rng):
        y = rng.random((2,) + SHAPE)
        z0 = rng.standard_normal((2, 32)) * 0.5
        with tiny_model.frozen():
            f = lambda z: objective_map(tiny_model, y, z, noise_sigma=0.1, beta=0.5).total
            assert relative_error(analytic_grad(f, z0), finite_diff_grad(f, z0)) < 1e-4


class TestObjectiveValues:
    def test_exact_latent_has_zero_data_term(self, tiny_model, rng):
        x = rng.random((1,) + SHAPE)
        z = Tensor(flat_latent(tiny_model, x))
        op = Denoise(SHAPE)
        assert objective_ours(tiny_model, op, x, z, alpha=0.0).data.item() <= 1e-4
        assert objective_csgm(tiny_model, op, x, z, gamma=0.0).data.item() <= 1e-4

    def test_ours_regularizer_is_negative_log_prob(self, tiny_model, rng):
        x = rng.random((3,) + SHAPE)
        value = objective_ours(tiny_model, Denoise(SHAPE), x, Tensor(flat_latent(tiny_model, x)), alpha=1.0)
        np.testing.assert_allclose(value.reg.data, -tiny_model.log_prob(x).data, atol=1e-6)
        assert value.total.item() == pytest.approx(value.data.data.sum() + value.reg.data.sum())

    def test_csgm_regularizer_is_squared_norm(self, tiny_model, rng):
        z = rng.standard_normal((2, 32))
        value = objective_csgm(tiny_model, Denoise(SHAPE), np.zeros((2,) + SHAPE), Tensor(z), gamma=2.0)
        np.testing.assert_allclose(value.reg.data, (z ** 2).sum(axis=1))

    def test_map_scales_by_noise(self, tiny_model, rng):
        z = rng.standard_normal((1, 32))
        x, _ = tiny_model.inverse(LatentState.unflatten(z, tiny_model.latent_layout))
        y = x.data + 0.1
        value = objective_map(tiny_model, y, Tensor(z), noise_sigma=0.1, beta=0.0)
        assert value.data.item() == pytest.approx(32 * 0.01 / 0.02)

    def test_single_measurement_scores_like_batch_of_one(self, tiny_model, rng):
        y = rng.random(SHAPE)
        z = rng.standard_normal(32) * 0.5
        op = Denoise(SHAPE)
        cases = [
            lambda y_, z_: objective_ours(tiny_model, op, y_, z_, alpha=0.05),
            lambda y_, z_: objective_csgm(tiny_model, op, y_, z_, gamma=0.1),
            lambda y_, z_: objective_map(tiny_model, y_, z_, noise_sigma=0.1, beta=0.5),
        ]
        for objective in cases:
            single = objective(y, Tensor(z))
            batched = objective(y[None], Tensor(z[None]))
            assert single.data.shape == (1,)
            assert single.total.item() == pytest.approx(batched.total.item(), rel=1e-12)

    def test_map_rejects_non_denoising_operator(self, tiny_model):
        with pytest.raises(OperatorError):
            objective_map(tiny_model, np.zeros((1,) + SHAPE), Tensor(np.zeros((1, 32))), 0.1, 0.5, op=Blur3x3(SHAPE))
        with pytest.raises(OperatorError):
            solve(tiny_model, Blur3x3(SHAPE), np.zeros((2, 2, 2)), SolveConfig(method="map", iters=1))


class TestSolve:
    def test_deterministic(self, tiny_model, rng):
        op = Denoise(SHAPE)
        y = measure(op, rng.random((2,) + SHAPE), seed=0)
        config = SolveConfig(method="ours", iters=5, seed=3)
        first, second = solve(tiny_model, op, y, config), solve(tiny_model, op, y, config)
        np.testing.assert_array_equal(first.x_hat, second.x_hat)
        np.testing.assert_array_equal(first.data_trace, second.data_trace)

    def test_per_image_seed_independent_of_batch(self, tiny_model):
        config = SolveConfig(method="csgm", seed=9)
        batch = initial_latents(tiny_model, config, [0, 1, 2])
        np.testing.assert_array_equal(batch[2], initial_latents(tiny_model, config, [2])[0])

    def test_glowip_starts_from_mode(self, tiny_model, rng):
        op = InpaintCenter(SHAPE)
        y = measure(op, rng.random(SHAPE), seed=0)
        result = solve(tiny_model, op, y, SolveConfig(method="glowip", iters=1))
        mode, _ = tiny_model.inverse(LatentState.unflatten(np.zeros((1, 32)), tiny_model.latent_layout))
        np.testing.assert_allclose(result.x_init, np.clip(mode.data, 0.0, 1.0))

    def test_result_shapes_and_range(self, tiny_model, rng):
        op = Colorize(SHAPE)
        y = op.apply(rng.random((3,) + SHAPE)).data
        result = solve(tiny_model, op, y, SolveConfig(method="csgm", iters=4))
        assert result.data_trace.shape == (4, 3)
        assert result.reg_trace.shape == (4, 3)
        assert result.z_hat.shape == (3, 32)
        assert result.log_prob.shape == (3,)
        assert result.x_hat.min() >= 0.0 and result.x_hat.max() <= 1.0
        assert result.wall_time >= 0.0

    def test_single_measurement(self, tiny_model, rng):
        op = Denoise(SHAPE)
        result = solve(tiny_model, op, rng.random(SHAPE), SolveConfig(iters=2))
        assert result.x_hat.shape == (1,) + SHAPE

    def test_model_parameters_untouched(self, tiny_model, rng):
        before = {name: p.data.copy() for name, p in tiny_model.named_parameters().items()}
        solve(tiny_model, Denoise(SHAPE), rng.random((2,) + SHAPE), SolveConfig(iters=3))
        for name, param in tiny_model.named_parameters().items():
            np.testing.assert_array_equal(param.data, before[name])
            assert param.requires_grad

    def test_data_term_decreases(self, tiny_model, rng):
        op = Denoise(SHAPE)
        y = rng.random((2,) + SHAPE)
        result = solve(tiny_model, op, y, SolveConfig(method="ours", alpha=0.0, lr=0.01, iters=50))
        assert np.all(result.data_trace[-1] < result.data_trace[0])

    def test_large_gamma_shrinks_latent(self, tiny_model, rng):
        op = Denoise(SHAPE)
        y = rng.random((2,) + SHAPE)
        result = solve(tiny_model, op, y, SolveConfig(method="csgm", gamma=1e6, lr=0.05, iters=40))
        assert np.all(result.reg_trace[-1] < 0.5 * result.reg_trace[0])

    def test_mismatched_measurement(self, tiny_model):
        with pytest.raises(ShapeError):
            solve(tiny_model, Blur3x3(SHAPE), np.zeros((1, 2, 4, 4)), SolveConfig(iters=1))
        with pytest.raises(ShapeError):
            solve(tiny_model, Denoise(SHAPE), np.zeros((2,) + SHAPE), SolveConfig(iters=1), indices=[0])

    def test_non_finite_measurement(self, tiny_model):
        with pytest.raises(NonFiniteError) as info:
            solve(tiny_model, Denoise(SHAPE), np.full(SHAPE, np.nan), SolveConfig(iters=3))
        assert info.value.step == 0

    @pytest.mark.slow
    def test_noiseless_denoising_converges(self, variant):
        model = train_toy_flow(tiny_config(variant), count=256)
        x_star = synthetic_shapes(1, size=4, channels=2, seed=7)[0] / 255.0
        op = Denoise(SHAPE, noise_std=0.0)
        exact = objective_ours(model, op, x_star, Tensor(flat_latent(model, x_star[None])[0]), alpha=0.0)
        assert exact.data.item() <= 1e-4

        result = solve(model, op, x_star, SolveConfig(method="ours", alpha=0.0, iters=1500))
        assert result.final_data_loss[0] <= 1e-2
        assert psnr(x_star, result.x_hat[0]) > 40.0

    @pytest.mark.slow
    def test_likelihood_regularizer_beats_norm_penalty(self, toy_gray_flow):
        shape = (1, 8, 8)
        targets = synthetic_shapes(20, size=8, channels=1, seed=11) / 255.0
        op = Denoise(shape, noise_std=0.1)
        y = measure(op, targets, seed=0)

        def restore(method, **weights):
            return solve(toy_gray_flow, op, y, SolveConfig(method=method, iters=1500, seed=0, **weights))

        def mean_psnr(result):
            return float(np.mean([psnr(t, x) for t, x in zip(targets, result.x_hat)]))

        ours = max((restore("ours", alpha=a) for a in (0.01, 0.05, 0.2)), key=mean_psnr)
        csgm = max((restore("csgm", gamma=g) for g in (0.01, 0.1, 1.0)), key=mean_psnr)
        glowip = restore("glowip", gamma=0.1)
        assert mean_psnr(ours) >= mean_psnr(csgm)
        assert ours.log_prob.mean() > glowip.log_prob.mean()
