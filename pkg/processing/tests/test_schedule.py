import numpy as np
from django.test import SimpleTestCase

from processing.exceptions import ParameterError
from processing.services.schedule import build_schedule, draw_timestep, karras_weight


class BuildScheduleTests(SimpleTestCase):

    def test_endpoints_are_exact(self):
        for steps in (2, 18, 1000):
            schedule = build_schedule(7.0, 0.002, 80.0, steps)
            self.assertEqual(schedule[0], 80.0)
            self.assertEqual(schedule[steps - 1], 0.002)
            self.assertEqual(len(schedule), steps)

    def test_midpoint_matches_closed_form(self):
        schedule = build_schedule(7.0, 0.002, 80.0, 18)
        hi, lo = 80.0 ** (1 / 7), 0.002 ** (1 / 7)
        expected = (hi + 9 / 17 * (lo - hi)) ** 7
        self.assertAlmostEqual(schedule[9], expected, delta=1e-12 * expected)

    def test_strictly_decreasing_across_sweep(self):
        for rho in (0.5, 1.0, 3.0, 7.0, 20.0):
            for steps in (2, 3, 18, 256):
                sigmas = build_schedule(rho, 0.002, 80.0, steps).sigmas
                self.assertTrue(np.all(np.diff(sigmas) < 0), (rho, steps))

    def test_unit_rho_is_arithmetic(self):
        for steps in (2, 18, 1000):
            sigmas = build_schedule(1.0, 0.002, 80.0, steps).sigmas
            expected = 80.0 + np.arange(steps) / (steps - 1) * (0.002 - 80.0)
            np.testing.assert_allclose(sigmas, expected, rtol=0, atol=1e-12)
            np.testing.assert_allclose(np.diff(sigmas), (0.002 - 80.0) / (steps - 1), rtol=0, atol=1e-12)

    def test_sigmas_are_read_only(self):
        schedule = build_schedule()
        with self.assertRaises(ValueError):
            schedule.sigmas[3] = 1.0

    def test_invalid_parameters(self):
        with self.assertRaises(ParameterError):
            build_schedule(num_steps=1)
        with self.assertRaises(ParameterError):
            build_schedule(sigma_min=80.0, sigma_max=80.0)
        with self.assertRaises(ParameterError):
            build_schedule(sigma_min=0.0)
        with self.assertRaises(ParameterError):
            build_schedule(rho=0.0)


class KarrasWeightTests(SimpleTestCase):

    def test_values(self):
        self.assertEqual(karras_weight(1.0), 1.0)
        self.assertEqual(karras_weight(2.0), 0.25)
        self.assertAlmostEqual(karras_weight(0.002), 250000.0, delta=1e-6)

    def test_nonpositive_sigma(self):
        with self.assertRaises(ParameterError):
            karras_weight(0.0)

    def test_strictly_decreasing(self):
        weights = [karras_weight(s) for s in build_schedule(7.0, 0.002, 80.0, 256).sigmas[::-1]]
        self.assertTrue(np.all(np.diff(weights) < 0))


class DrawTimestepTests(SimpleTestCase):

    def test_reproducible_for_seed(self):
        schedule = build_schedule()
        a = [draw_timestep(np.random.default_rng(5), schedule) for _ in range(3)]
        b = [draw_timestep(np.random.default_rng(5), schedule) for _ in range(3)]
        self.assertEqual(a, b)

    def test_sigma_matches_index(self):
        schedule = build_schedule()
        rng = np.random.default_rng(0)
        for _ in range(50):
            t, sigma = draw_timestep(rng, schedule)
            self.assertEqual(sigma, schedule[t])

    def test_two_step_support(self):
        schedule = build_schedule(num_steps=2)
        rng = np.random.default_rng(1)
        self.assertEqual({draw_timestep(rng, schedule)[0] for _ in range(200)}, {0, 1})

    def test_uniform_frequencies(self):
        schedule = build_schedule(num_steps=18)
        rng = np.random.default_rng(2)
        draws = 100_000
        counts = np.bincount([draw_timestep(rng, schedule)[0] for _ in range(draws)], minlength=18)
        p = 1 / 18
        bound = 4 * np.sqrt(p * (1 - p) / draws)
        self.assertTrue(np.all(np.abs(counts / draws - p) <= bound))
