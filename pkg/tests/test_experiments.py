import asyncio
import math
import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
from numpy.testing import assert_array_equal

from app.clients import pgm_client
from app.data import fixtures
from app.errors import ConfigurationError, DegenerateMaskError, StructuralError
from app.services import experiment_service, filterbank_service
from app.services.experiment_service import ExperimentSpec
from app.services.inpaint_service import Mask
from app.utils.calculations import psnr
from app.utils.helpers import format_psnr


class RandomMaskTests(unittest.TestCase):
    def test_missing_fraction_tracks_the_rate(self):
        mask = experiment_service.gen_random_mask(256, 256, 0.5, 42)
        self.assertEqual(mask.shape, (256, 256))
        self.assertGreaterEqual(mask.missing_ratio, 0.48)
        self.assertLessEqual(mask.missing_ratio, 0.52)

    def test_masks_are_reproducible(self):
        first = experiment_service.gen_random_mask(40, 30, 0.3, 7)
        second = experiment_service.gen_random_mask(40, 30, 0.3, 7)
        other = experiment_service.gen_random_mask(40, 30, 0.3, 8)
        self.assertEqual(first.shape, (30, 40))
        assert_array_equal(first.observed, second.observed)
        self.assertFalse(np.array_equal(first.observed, other.observed))

    def test_invalid_requests(self):
        for rate in (0.0, 1.0, -0.2):
            with self.assertRaises(ConfigurationError):
                experiment_service.gen_random_mask(8, 8, rate, 0)
        with self.assertRaises(ConfigurationError):
            experiment_service.gen_random_mask(8, 8, 0.5, -1)
        with self.assertRaises(ConfigurationError):
            experiment_service.gen_random_mask(8, 8, 0.5, 2**64)

    @patch("app.services.experiment_service.raw_stream")
    def test_all_missing_mask_is_rejected(self, mock_raw_stream):
        mock_raw_stream.return_value = np.zeros(16, dtype=np.uint64)
        with self.assertRaises(DegenerateMaskError) as raised:
            experiment_service.gen_random_mask(4, 4, 0.5, 3)
        self.assertEqual(raised.exception.seed, 3)


class NoiseTests(unittest.TestCase):
    def test_zero_sigma_returns_a_copy(self):
        image = fixtures.gradient(16)
        noisy = experiment_service.add_gaussian_noise(image, 0.0, 1)
        assert_array_equal(noisy, image)
        self.assertIsNot(noisy, image)

    def test_noise_statistics(self):
        image = np.full((512, 512), 100.0)
        noise = experiment_service.add_gaussian_noise(image, 20.0, 5) - image
        self.assertLess(abs(float(noise.mean())), 0.2)
        self.assertLess(abs(float(noise.std()) - 20.0), 0.2)

    def test_normals_share_a_prefix(self):
        long = experiment_service.standard_normals(9, 6)
        short = experiment_service.standard_normals(9, 5)
        self.assertEqual(short.size, 5)
        assert_array_equal(short, long[:5])

    def test_noise_and_mask_streams_differ(self):
        noise_raw = experiment_service.raw_stream(4, experiment_service.NOISE_STREAM, 8)
        mask_raw = experiment_service.raw_stream(4, experiment_service.MASK_STREAM, 8)
        self.assertFalse(np.array_equal(noise_raw, mask_raw))

    def test_negative_sigma(self):
        with self.assertRaises(ConfigurationError):
            experiment_service.add_gaussian_noise(np.zeros((2, 2)), -1.0, 0)


class PsnrTests(unittest.TestCase):
    def test_known_values(self):
        reference = np.full((8, 8), 100.0)
        self.assertAlmostEqual(psnr(reference, reference + 1.0), 48.1308, places=4)
        self.assertEqual(psnr(reference, reference), math.inf)
        self.assertAlmostEqual(psnr(np.zeros((4, 4)), np.full((4, 4), 255.0)), 0.0, places=12)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        a, b = rng.uniform(0, 255, (16, 16)), rng.uniform(0, 255, (16, 16))
        self.assertEqual(psnr(a, b), psnr(b, a))

    def test_shape_mismatch(self):
        with self.assertRaises(StructuralError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_formatting(self):
        self.assertEqual(format_psnr(48.13080360867910), "48.1308")
        self.assertEqual(format_psnr(math.inf), "inf")


class ExperimentSpecTests(unittest.TestCase):
    def test_needs_exactly_one_mask_source(self):
        with self.assertRaises(ConfigurationError):
            ExperimentSpec(image="fixture:gradient")
        with self.assertRaises(ConfigurationError):
            ExperimentSpec(image="fixture:gradient", mask="m.pgm", rate=0.5)

    def test_parameter_ranges(self):
        with self.assertRaises(ConfigurationError):
            ExperimentSpec(image="fixture:gradient", rate=1.5)
        with self.assertRaises(ConfigurationError):
            ExperimentSpec(image="fixture:gradient", rate=0.5, sigma=-2.0)
        with self.assertRaises(ConfigurationError):
            ExperimentSpec(image="fixture:gradient", rate=0.5, seed=-1)

    def test_mask_label(self):
        self.assertEqual(ExperimentSpec(image="a.pgm", rate=0.25).mask_label, "random:0.25")
        self.assertEqual(ExperimentSpec(image="a.pgm", mask="m.pgm").mask_label, "m.pgm")


@patch.dict(os.environ, {"FLASK_CONFIG": "test"})
class RunExperimentTests(unittest.TestCase):
    def _spec(self, **changes):
        values = {"image": "fixture:sinusoid", "rate": 0.5, "seed": 7, "fixture_size": 32}
        values.update(changes)
        return ExperimentSpec(**values)

    def test_every_algorithm_beats_the_masked_input(self):
        for algorithm in ("tpctf6", "spline", "dct"):
            report = experiment_service.run_experiment(self._spec(algorithm=algorithm))
            self.assertGreater(report.psnr, report.baseline_psnr + 5.0, msg=algorithm)
            self.assertEqual(report.output.shape, (32, 32))
            self.assertGreaterEqual(float(report.output.min()), 0.0)
            self.assertLessEqual(float(report.output.max()), 255.0)

    def test_report_line_is_deterministic_without_timing(self):
        first = experiment_service.format_report_line(
            experiment_service.run_experiment(self._spec(sigma=10.0)), include_timing=False
        )
        second = experiment_service.format_report_line(
            experiment_service.run_experiment(self._spec(sigma=10.0)), include_timing=False
        )
        self.assertEqual(first, second)
        fields = first.split("\t")
        self.assertEqual(fields[:5], ["fixture:sinusoid", "random:0.5", "10", "7", "tpctf6"])
        self.assertEqual(fields[-1], "-")
        self.assertEqual(len(fields), 8)

    def test_mask_file_and_outputs(self):
        observed = np.ones((32, 32), dtype=bool)
        observed[10:16, 12:18] = False
        with tempfile.TemporaryDirectory() as directory:
            mask_path = os.path.join(directory, "mask.pgm")
            out_path = os.path.join(directory, "out.pgm")
            pgm_client.save_mask(Mask(observed), mask_path)
            report = experiment_service.run_experiment(
                self._spec(rate=None, mask=mask_path, output=out_path, algorithm="dct")
            )
            self.assertEqual(report.mask, mask_path)
            saved = pgm_client.load_pgm(out_path)
            assert_array_equal(saved, pgm_client.quantize(report.output))

    def test_mask_shape_must_match(self):
        with tempfile.TemporaryDirectory() as directory:
            mask_path = os.path.join(directory, "mask.pgm")
            pgm_client.save_mask(Mask(np.ones((16, 16), dtype=bool)), mask_path)
            with self.assertRaises(StructuralError):
                experiment_service.run_experiment(self._spec(rate=None, mask=mask_path))

    def test_batch_appends_one_line_per_experiment(self):
        specs = [self._spec(seed=1), self._spec(seed=2, algorithm="dct")]
        with tempfile.TemporaryDirectory() as directory:
            report_path = os.path.join(directory, "report.tsv")
            reports = asyncio.run(experiment_service.run_batch(specs, report_path, include_timing=False))
            with open(report_path, encoding="utf-8") as handle:
                lines = handle.read().splitlines()
        self.assertEqual([report.seed for report in reports], [1, 2])
        self.assertEqual(len(lines), 2)
        expected = {experiment_service.format_report_line(report, include_timing=False) for report in reports}
        self.assertEqual(set(lines), expected)


class FixtureTests(unittest.TestCase):
    def test_fixtures_are_greymaps(self):
        for name in fixtures.FIXTURES:
            image = fixtures.load_fixture(f"fixture:{name}", 32)
            self.assertEqual(image.shape, (32, 32))
            self.assertGreaterEqual(float(image.min()), 0.0)
            self.assertLessEqual(float(image.max()), 255.0)

    def test_unknown_fixture(self):
        with self.assertRaises(ConfigurationError):
            fixtures.load_fixture("fixture:lena")


class RoundtripCheckTests(unittest.TestCase):
    def test_random_geometries_reconstruct(self):
        checks = experiment_service.verify_transforms(filterbank_service.resolve_bank("tpctf6"), 0, 100)
        self.assertEqual(len(checks), 100)
        for check in checks:
            self.assertEqual(check.size % 2**check.levels, 0)
            self.assertTrue(check.passed(1e-10), msg=f"N={check.size} levels={check.levels}")


if __name__ == "__main__":
    unittest.main()
