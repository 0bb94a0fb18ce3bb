import numpy as np
from django.test import SimpleTestCase

from processing.exceptions import SamplerError
from processing.services.denoiser import as_denoiser_fn, init_params, oracle_denoiser
from processing.services.oracles import (TEST_ARCH, constant_oracle, gaussian_solution, reference_agreement,
                                         sampler_exactness, sampler_order)
from processing.services.sampler import SamplerConfig, heun_sample, initial_state, reference_integrate
from processing.services.schedule import build_schedule


class HeunSampleTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        self.x = rng.random((16, 16))
        self.r_star = rng.standard_normal((16, 16)) * 0.1
        self.schedule = build_schedule()

    def test_constant_oracle_with_terminal_step(self):
        passed, detail = sampler_exactness(seeds=100, size=64)
        self.assertTrue(passed, detail)

    def test_constant_oracle_affine_solution(self):
        cfg = SamplerConfig(self.schedule, seed=4)
        z_init = initial_state(self.x.shape, cfg)
        result = heun_sample(constant_oracle(self.r_star), self.x, cfg)
        expected = self.x + self.r_star + (0.002 / 80.0) * (z_init - self.r_star)
        np.testing.assert_allclose(result.enhanced, expected, rtol=0, atol=1e-9)

    def test_zero_denoiser_telescopes(self):
        cfg = SamplerConfig(self.schedule, seed=1)
        z_init = initial_state(self.x.shape, cfg)
        result = heun_sample(lambda z, x, sigma: np.zeros_like(z), self.x, cfg)
        np.testing.assert_allclose(result.enhanced, self.x + (0.002 / 80.0) * z_init, rtol=0, atol=1e-9)

    def test_zero_initialized_network(self):
        fn = as_denoiser_fn(init_params(TEST_ARCH, seed=0))
        result = heun_sample(fn, self.x, SamplerConfig(self.schedule, seed=2, terminal_step=True))
        np.testing.assert_array_equal(result.enhanced, self.x)

    def test_direct_output_is_not_fused(self):
        result = heun_sample(constant_oracle(self.r_star), self.x,
                             SamplerConfig(self.schedule, terminal_step=True), fuse=False)
        np.testing.assert_allclose(result.enhanced, self.r_star, atol=1e-9)

    def test_seeded(self):
        fn = oracle_denoiser(np.zeros((16, 16)), 1.0)
        a = heun_sample(fn, self.x, SamplerConfig(self.schedule, seed=9)).enhanced
        b = heun_sample(fn, self.x, SamplerConfig(self.schedule, seed=9)).enhanced
        np.testing.assert_array_equal(a, b)

    def test_trajectory(self):
        cfg = SamplerConfig(self.schedule, record_trajectory=True, terminal_step=True)
        result = heun_sample(constant_oracle(self.r_star), self.x, cfg)
        self.assertEqual(len(result.trajectory), len(self.schedule) + 1)
        self.assertEqual([step for step, _, _ in result.trajectory], list(range(len(self.schedule) + 1)))
        self.assertEqual(result.trajectory[0][1], 80.0)
        self.assertEqual(result.trajectory[-1][1], 0.0)

    def test_trajectory_without_terminal_step(self):
        cfg = SamplerConfig(self.schedule, record_trajectory=True)
        result = heun_sample(constant_oracle(self.r_star), self.x, cfg)
        self.assertEqual(len(result.trajectory), len(self.schedule))
        self.assertEqual([sigma for _, sigma, _ in result.trajectory], list(self.schedule.sigmas))
        np.testing.assert_array_equal(result.trajectory[-1][2], result.z0)

    def test_non_finite_state(self):
        def exploding(z, x, sigma):
            return np.full_like(z, np.inf)
        with self.assertRaises(SamplerError) as ctx:
            heun_sample(exploding, self.x, SamplerConfig(self.schedule))
        self.assertEqual(ctx.exception.step, 0)


class ConvergenceTests(SimpleTestCase):

    def test_second_order(self):
        passed, detail = sampler_order()
        self.assertTrue(passed, detail)

    def test_euler_reference(self):
        passed, detail = reference_agreement()
        self.assertTrue(passed, detail)

    def test_gaussian_solution_endpoints(self):
        z = np.array([3.0])
        np.testing.assert_allclose(gaussian_solution(z, 1.0, 1.0, 5.0, 5.0), z)

    def test_reference_on_affine_dynamics(self):
        rng = np.random.default_rng(5)
        r_star, z_init = rng.standard_normal(4), rng.standard_normal(4) * 80
        z = reference_integrate(constant_oracle(r_star), np.zeros(4), z_init, 7.0, 0.002, 80.0, 2000)
        np.testing.assert_allclose(z, r_star + (0.002 / 80.0) * (z_init - r_star), atol=1e-3)
