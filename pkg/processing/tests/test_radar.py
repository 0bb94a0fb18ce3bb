import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from processing.exceptions import FormatError, MissingFileError, ParameterError, UnsupportedVersionError
from processing.services.oracles import cfar_equivalence
from processing.services.radar import (LAYOUT_TX_CHIRP_SAMPLE_RX, Detection, GridSpec, RadarFrameConfig,
                                       angle_fft, blackman_window, cfar_alpha, detections_to_points,
                                       doppler_fft, load_raw, os_cfar, os_cfar_threshold, polar_to_cartesian,
                                       process_frame, range_fft, rasterize_bev, reshape_adc, save_raw,
                                       serialize_adc, simulate_frame, velocity_compensate)

SMALL = RadarFrameConfig(samples_per_chirp=32, chirps_per_frame=8, tx_count=2, rx_count=2,
                         range_lo=0, range_hi=32, angle_bins=16)


class AdcTests(SimpleTestCase):

    def test_zero_frame(self):
        samples = reshape_adc(np.zeros(SMALL.raw_length, dtype=np.int16), SMALL)
        self.assertEqual(samples.shape, (8, 4, 32))
        self.assertFalse(np.any(samples))

    def test_unit_in_phase(self):
        raw = np.zeros(SMALL.raw_length, dtype=np.int16)
        raw[0::2] = 1
        np.testing.assert_array_equal(reshape_adc(raw, SMALL), np.ones((8, 4, 32), dtype=complex))

    def test_round_trip_both_layouts(self):
        rng = np.random.default_rng(0)
        for cfg in (SMALL, RadarFrameConfig(32, 8, 2, 2, 0, 32, angle_bins=16, layout=LAYOUT_TX_CHIRP_SAMPLE_RX)):
            raw = rng.integers(-2000, 2000, size=cfg.raw_length).astype(np.int16)
            np.testing.assert_array_equal(serialize_adc(reshape_adc(raw, cfg), cfg), raw)
            tensor = rng.integers(-50, 50, size=(8, 4, 32)) + 1j * rng.integers(-50, 50, size=(8, 4, 32))
            np.testing.assert_array_equal(reshape_adc(serialize_adc(tensor, cfg), cfg), tensor)

    def test_layouts_differ(self):
        raw = np.arange(SMALL.raw_length, dtype=np.int16)
        other = RadarFrameConfig(32, 8, 2, 2, 0, 32, angle_bins=16, layout=LAYOUT_TX_CHIRP_SAMPLE_RX)
        self.assertFalse(np.array_equal(reshape_adc(raw, SMALL), reshape_adc(raw, other)))

    def test_length_mismatch(self):
        with self.assertRaises(FormatError):
            reshape_adc(np.zeros(10, dtype=np.int16), SMALL)

    def test_config_validation(self):
        with self.assertRaises(ParameterError):
            RadarFrameConfig(samples_per_chirp=16, range_lo=4, range_hi=32).validate()
        with self.assertRaises(ParameterError):
            RadarFrameConfig(tx_count=0).validate()


class WindowTests(SimpleTestCase):

    def test_endpoints_midpoint_symmetry(self):
        w = blackman_window(33)
        self.assertAlmostEqual(w[0], 0.0, delta=1e-12)
        self.assertAlmostEqual(w[-1], 0.0, delta=1e-12)
        self.assertAlmostEqual(w[16], 1.0, delta=1e-12)
        np.testing.assert_allclose(w, w[::-1], atol=1e-15)

    def test_classic_coefficients(self):
        n = 20
        k = np.arange(n)
        expected = 0.42 - 0.5 * np.cos(2 * np.pi * k / (n - 1)) + 0.08 * np.cos(4 * np.pi * k / (n - 1))
        np.testing.assert_allclose(blackman_window(n), expected, atol=1e-12)

    def test_too_short(self):
        with self.assertRaises(ParameterError):
            blackman_window(1)


class FftTests(SimpleTestCase):

    def test_range_tone_lands_in_its_bin(self):
        n = np.arange(32)
        samples = np.broadcast_to(np.exp(2j * np.pi * 5 * n / 32), (8, 4, 32))
        cube = range_fft(samples, SMALL, window=False)
        self.assertEqual(cube.shape, (32, 8, 4))
        energy = np.abs(cube[:, 0, 0]) ** 2
        self.assertEqual(int(np.argmax(energy)), 5)
        self.assertGreater(energy[5] / energy.sum(), 0.9)

    def test_range_crop(self):
        cfg = RadarFrameConfig(32, 8, 2, 2, 4, 20, angle_bins=16)
        n = np.arange(32)
        cube = range_fft(np.broadcast_to(np.exp(2j * np.pi * 9 * n / 32), (8, 4, 32)), cfg)
        self.assertEqual(cube.shape, (16, 8, 4))
        self.assertEqual(int(np.argmax(np.abs(cube[:, 0, 0]))), 9 - 4)

    def test_parseval(self):
        rng = np.random.default_rng(1)
        samples = rng.standard_normal((8, 4, 32)) + 1j * rng.standard_normal((8, 4, 32))
        cube = range_fft(samples, SMALL, window=False)
        self.assertAlmostEqual(np.sum(np.abs(cube) ** 2) / (32 * np.sum(np.abs(samples) ** 2)), 1.0, places=12)

    def test_zeros_stay_zero(self):
        cube = doppler_fft(range_fft(np.zeros((8, 4, 32)), SMALL), SMALL)
        self.assertFalse(np.any(angle_fft(velocity_compensate(cube, SMALL), SMALL)))

    def test_doppler_bin_is_signed(self):
        chirps = np.arange(8)
        cube = np.broadcast_to(np.exp(2j * np.pi * 3 * chirps / 8)[None, :, None], (2, 8, 4))
        spectrum = doppler_fft(cube, SMALL)
        self.assertEqual(int(np.argmax(np.abs(spectrum[0, :, 0]))), 8 // 2 + 3)

    def test_angle_peak(self):
        cfg = RadarFrameConfig(32, 8, 2, 4, 0, 32, angle_bins=64)
        elements = np.arange(8)
        cube = np.broadcast_to(np.exp(1j * np.pi * 0.25 * elements)[None, None, :], (2, 8, 8))
        spectrum = angle_fft(cube, cfg)
        self.assertEqual(spectrum.shape, (2, 8, 64))
        self.assertEqual(int(np.argmax(np.abs(spectrum[0, 0]))), 32 + 8)


class VelocityCompensationTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(2)
        self.cube = rng.standard_normal((5, 8, 4)) + 1j * rng.standard_normal((5, 8, 4))

    def test_single_transmitter_identity(self):
        cfg = RadarFrameConfig(32, 8, 1, 4, 0, 32, angle_bins=16)
        np.testing.assert_array_equal(velocity_compensate(self.cube, cfg), self.cube)

    def test_zero_doppler_identity(self):
        out = velocity_compensate(self.cube, SMALL)
        np.testing.assert_array_equal(out[:, 8 // 2], self.cube[:, 8 // 2])

    def test_first_transmitter_untouched(self):
        out = velocity_compensate(self.cube, SMALL)
        np.testing.assert_array_equal(out[:, :, :2], self.cube[:, :, :2])

    def test_magnitude_preserved(self):
        np.testing.assert_allclose(np.abs(velocity_compensate(self.cube, SMALL)), np.abs(self.cube), rtol=1e-14)

    def test_two_transmitter_rotation(self):
        out = velocity_compensate(self.cube, SMALL)
        b = 1  # bin 5 after the shift
        np.testing.assert_allclose(out[:, 5, 2:], self.cube[:, 5, 2:] * np.exp(-1j * np.pi * b / 8), rtol=1e-14)

    def test_three_transmitter_rotation(self):
        cfg = RadarFrameConfig(32, 8, 3, 2, 0, 32, angle_bins=16)
        cube = np.ones((2, 8, 6), dtype=complex)
        out = velocity_compensate(cube, cfg)
        b = -3  # bin 1 after the shift
        for m in range(3):
            expected = np.exp(-2j * np.pi * m * b / (8 * 3))
            np.testing.assert_allclose(out[:, 1, 2 * m:2 * m + 2], expected, rtol=0, atol=1e-14)


class CfarTests(SimpleTestCase):

    def test_alpha_meets_design_rate(self):
        for n, k, pfa in ((112, 84, 1e-4), (40, 30, 1e-3), (20, 1, 0.01)):
            alpha = cfar_alpha(pfa, n, k)
            achieved = np.prod([(n - i) / (n - i + alpha) for i in range(k)])
            self.assertAlmostEqual(achieved / pfa, 1.0, places=8)
        self.assertAlmostEqual(cfar_alpha(0.01, 20, 1), 20 * (1 / 0.01 - 1), places=6)

    def test_alpha_parameters(self):
        with self.assertRaises(ParameterError):
            cfar_alpha(1.5, 10, 5)
        with self.assertRaises(ParameterError):
            cfar_alpha(0.01, 10, 11)

    def test_single_spike(self):
        power = np.ones((40, 40))
        power[20, 20] = 100.0
        hits = os_cfar(power, guard=2, train=4, alpha=5.0)
        self.assertEqual(len(hits), 1)
        row, col, snr = hits[0]
        self.assertEqual((row, col), (20, 20))
        self.assertAlmostEqual(snr, 20.0, places=9)

    def test_constant_map(self):
        self.assertEqual(os_cfar(np.full((32, 32), 3.0), guard=2, train=4, alpha=1.5), [])

    def test_two_spikes(self):
        power = np.ones((48, 48))
        power[10, 10] = power[35, 30] = 100.0
        hits = os_cfar(power, guard=2, train=4, alpha=5.0)
        self.assertEqual(sorted((r, c) for r, c, _ in hits), [(10, 10), (35, 30)])

    def test_matches_per_cell_oracle(self):
        passed, detail = cfar_equivalence(size=64)
        self.assertTrue(passed, detail)

    def test_border_windows_are_truncated(self):
        power = np.random.default_rng(3).exponential(size=(12, 12))
        stat = os_cfar_threshold(power, 1, 2, 12)
        self.assertTrue(np.all(np.isfinite(stat)))

    def test_order_out_of_range(self):
        with self.assertRaises(ParameterError):
            os_cfar(np.ones((8, 8)), guard=1, train=1, k=100)

    @tag('slow')
    def test_false_alarm_rate_on_noise(self):
        rng = np.random.default_rng(4)
        power = rng.exponential(size=(1000, 1000))
        pfa = 1e-3
        hits = os_cfar(power, guard=1, train=4, pfa=pfa)
        self.assertLessEqual(len(hits), 2 * pfa * power.size)


class PointsAndImagesTests(SimpleTestCase):

    def test_straight_ahead(self):
        cfg = RadarFrameConfig()
        points = detections_to_points([Detection(36, 32, cfg.angle_bins // 2, 12.0)], cfg)
        np.testing.assert_array_equal(points, [[0.0, (36 + 4) * 0.125, 12.0]])

    def test_mirror_azimuths(self):
        cfg = RadarFrameConfig()
        left, right = detections_to_points([Detection(20, 0, 27, 1.0), Detection(20, 0, 37, 1.0)], cfg)
        self.assertEqual(left[0], -right[0])
        self.assertEqual(left[1], right[1])

    def test_polar_to_cartesian(self):
        x, y = polar_to_cartesian([2.0], [np.pi / 2])
        self.assertAlmostEqual(x[0], 2.0)
        self.assertAlmostEqual(y[0], 0.0, places=12)

    def test_empty_detections(self):
        self.assertEqual(detections_to_points([], RadarFrameConfig()).shape, (0, 3))

    def test_single_point_bev(self):
        raster = rasterize_bev(np.array([[0.1, 3.0, 12.0], [20.0, 3.0, 5.0]]), GridSpec())
        self.assertEqual(raster.image.shape, (64, 64))
        self.assertEqual(raster.dropped, 1)
        self.assertEqual(np.count_nonzero(raster.image), 1)
        self.assertEqual(raster.image[48, 32], 1.0)

    def test_max_snr_per_pixel(self):
        raster = rasterize_bev(np.array([[0.0, 6.0, 4.0], [0.01, 5.99, 8.0], [-3.0, 1.0, 2.0]]), GridSpec())
        self.assertEqual(raster.image.max(), 1.0)
        self.assertEqual(np.count_nonzero(raster.image), 2)
        self.assertAlmostEqual(sorted(raster.image[raster.image > 0])[0], 0.25)


class ChainTests(SimpleTestCase):

    def setUp(self):
        self.cfg = RadarFrameConfig()
        self.target = (5.0, 1.0, 0.3, 1.0)
        self.raw = simulate_frame([self.target], self.cfg, np.random.default_rng(0))

    def test_target_recovered(self):
        result = process_frame(self.raw, self.cfg)
        self.assertTrue(result.detections)
        best = max(range(len(result.detections)), key=lambda i: result.detections[i].snr)
        x, y, _ = result.points[best]
        expected_x, expected_y = polar_to_cartesian(5.0, 0.3)
        self.assertLess(np.hypot(x - expected_x, y - expected_y), 0.3)
        signed_doppler = result.detections[best].doppler_bin - self.cfg.chirps_per_frame // 2
        self.assertLessEqual(abs(signed_doppler - 64 * 1.0 / (2 * 2.5)), 1.0)

    def test_deterministic(self):
        a = process_frame(self.raw, self.cfg)
        b = process_frame(self.raw.copy(), self.cfg)
        np.testing.assert_array_equal(a.bev.image, b.bev.image)
        np.testing.assert_array_equal(a.polar, b.polar)


class RawFileTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'frame.r3da'
        self.raw = np.random.default_rng(5).integers(-100, 100, size=SMALL.raw_length).astype(np.int16)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        save_raw(self.path, self.raw, SMALL)
        raw, cfg = load_raw(self.path, RadarFrameConfig())
        np.testing.assert_array_equal(raw, self.raw)
        self.assertEqual((cfg.samples_per_chirp, cfg.chirps_per_frame, cfg.tx_count, cfg.rx_count),
                         (32, 8, 2, 2))

    def test_truncated(self):
        save_raw(self.path, self.raw, SMALL)
        self.path.write_bytes(self.path.read_bytes()[:-3])
        with self.assertRaises(FormatError):
            load_raw(self.path, SMALL)

    def test_version_and_magic(self):
        save_raw(self.path, self.raw, SMALL)
        blob = bytearray(self.path.read_bytes())
        blob[4] = 2
        self.path.write_bytes(bytes(blob))
        with self.assertRaises(UnsupportedVersionError):
            load_raw(self.path, SMALL)
        self.path.write_bytes(b'ABCD' + bytes(blob[4:]))
        with self.assertRaises(FormatError):
            load_raw(self.path, SMALL)

    def test_missing(self):
        with self.assertRaises(MissingFileError):
            load_raw(Path(self.tmp.name) / 'none.r3da', SMALL)
