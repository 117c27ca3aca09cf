import unittest

import numpy as np
from numpy.testing import assert_allclose

from app.errors import ConfigurationError, StructuralError
from app.services import filterbank_service, transform_service
from app.services.transform_service import UNDECIMATED, TransformSpec


def _tpctf6():
    return filterbank_service.resolve_bank("tpctf6")


class DecimatedTransformTests(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_roundtrip_and_isometry_on_random_images(self):
        for size, levels in ((32, 1), (32, 2), (64, 3), (96, 2), (128, 4)):
            image = self.rng.uniform(0.0, 255.0, (size, size))
            spec = TransformSpec(_tpctf6(), levels)
            pyramid = transform_service.forward(image, spec)
            restored = transform_service.inverse(pyramid, spec)
            self.assertLessEqual(np.max(np.abs(restored - image)), 1e-10 * np.max(np.abs(image)))
            self.assertAlmostEqual(pyramid.energy() / float(np.sum(image**2)), 1.0, delta=1e-10)

    def test_forward_and_inverse_are_linear(self):
        spec = TransformSpec(_tpctf6(), 2)
        x = self.rng.standard_normal((64, 64))
        y = self.rng.standard_normal((64, 64))
        combined = transform_service.forward(2.5 * x - 0.75 * y, spec)
        px, py = transform_service.forward(x, spec), transform_service.forward(y, spec)
        for level in (1, 2):
            for name in ("ap-b1p", "b2n-b1n", "b1p-ap"):
                expected = 2.5 * px.band(level, name) - 0.75 * py.band(level, name)
                assert_allclose(combined.band(level, name), expected, atol=1e-10)
        assert_allclose(combined.lowpass, 2.5 * px.lowpass - 0.75 * py.lowpass, atol=1e-10)
        summed = px.map_bands(lambda level, name, coeffs: coeffs + py.band(level, name))
        summed.lowpass = px.lowpass + py.lowpass
        assert_allclose(transform_service.inverse(summed, spec), x + y, atol=1e-10)

    def test_band_shapes_halve_per_level(self):
        pyramid = transform_service.forward(np.zeros((64, 64)), TransformSpec(_tpctf6(), 3))
        for level in range(1, 4):
            side = 64 // 2**level
            self.assertEqual(pyramid.band(level, "b1p-b2n").shape, (side, side))
            self.assertEqual(len(pyramid.bands[level - 1]), 32)
        self.assertEqual(pyramid.lowpass.shape, (8, 8))

    def test_constant_image_lives_in_the_lowpass(self):
        pyramid = transform_service.forward(np.full((64, 64), 3.0), TransformSpec(_tpctf6(), 2))
        assert_allclose(pyramid.lowpass, 12.0, atol=1e-9)
        for level_bands in pyramid.bands:
            for coeffs in level_bands.values():
                self.assertLess(float(np.max(np.abs(coeffs))), 1e-9)

    def test_redundancy_count(self):
        image = self.rng.standard_normal((128, 128))
        previous = 0.0
        for levels in range(1, 5):
            pyramid = transform_service.forward(image, TransformSpec(_tpctf6(), levels))
            expected = 32 * sum((128 // 2**j) ** 2 for j in range(1, levels + 1)) + (128 // 2**levels) ** 2
            count = transform_service.real_degrees_of_freedom(pyramid)
            self.assertEqual(count, expected)
            ratio = count / 128**2
            self.assertLessEqual(ratio, 32 / 3)
            self.assertGreater(ratio, previous)
            previous = ratio
        self.assertGreater(previous, 10.6)

    def test_conjugate_partner_bands_are_conjugates(self):
        image = self.rng.standard_normal((32, 32))
        pyramid = transform_service.forward(image, TransformSpec(_tpctf6(), 1))
        assert_allclose(pyramid.band(1, "an-b2p"), np.conj(pyramid.band(1, "ap-b2n")), atol=1e-12)
        self.assertEqual(transform_service.conjugate_partner("ap-b1n"), "an-b1p")
        self.assertEqual(transform_service.conjugate_partner("a-a"), "a-a")

    def test_frame_matrix_is_tight(self):
        D = transform_service.frame_matrix(TransformSpec(_tpctf6(), 1), 16)
        self.assertEqual(D.shape, (256, 2 * 32 * 64 + 64))
        assert_allclose(D @ D.T, np.eye(256), atol=1e-9)

    def test_vector_layout_matches_frame_matrix(self):
        spec = TransformSpec(_tpctf6(), 1)
        image = self.rng.standard_normal((16, 16))
        D = transform_service.frame_matrix(spec, 16)
        vector = transform_service.pyramid_to_vector(transform_service.forward(image, spec))
        assert_allclose(D @ vector, image.ravel(), atol=1e-10)
        rebuilt = transform_service.vector_to_pyramid(vector, transform_service.forward(image, spec))
        assert_allclose(transform_service.inverse(rebuilt, spec), image, atol=1e-10)

    def test_invalid_geometry_is_rejected(self):
        spec = TransformSpec(_tpctf6(), 3)
        with self.assertRaises(ConfigurationError):
            transform_service.forward(np.zeros((40, 40)), spec)
        with self.assertRaises(ConfigurationError):
            transform_service.forward(np.zeros((32, 32)), spec)
        with self.assertRaises(ConfigurationError):
            transform_service.forward(np.zeros((64, 32)), spec)

    def test_mismatched_pyramid_is_rejected(self):
        pyramid = transform_service.forward(np.zeros((64, 64)), TransformSpec(_tpctf6(), 2))
        with self.assertRaises(StructuralError):
            transform_service.inverse(pyramid, TransformSpec(_tpctf6(), 3))
        with self.assertRaises(StructuralError):
            pyramid.band(1, "b9p-b9p")

    def test_default_levels(self):
        self.assertEqual(transform_service.default_levels(256), 4)
        self.assertEqual(transform_service.default_levels(128), 3)
        self.assertEqual(transform_service.default_levels(32), 2)
        self.assertEqual(transform_service.default_levels(16), 1)

    def test_dump_header(self):
        pyramid = transform_service.forward(np.zeros((16, 16)), TransformSpec(_tpctf6(), 1))
        text = transform_service.dump_pyramid(pyramid)
        self.assertTrue(text.startswith("pyramid N=16 levels=1 bank=tpctf:"))
        self.assertIn("band 1 a-a 8x8", text)


class FilterNormTests(unittest.TestCase):
    def test_tensor_norm_of_linear_spline_band(self):
        spec = TransformSpec(filterbank_service.resolve_bank("spline-linear"), 1, UNDECIMATED)
        self.assertAlmostEqual(transform_service.filter_l2_norm(spec, 1, "a-b2", 32), 0.375, places=12)

    def test_frame_elements_have_norm_at_most_one(self):
        spec = TransformSpec(_tpctf6(), 2)
        norms = transform_service.band_norms(spec, 64)
        self.assertIn((2, "a-a"), norms)
        for value in norms.values():
            self.assertGreater(value, 0.0)
            self.assertLessEqual(value, 1.0 + 1e-12)
        self.assertAlmostEqual(norms[(1, "ap-b1n")], norms[(1, "an-b1p")], places=12)

    def test_norm_matches_the_synthesized_atom(self):
        spec = TransformSpec(_tpctf6(), 1)
        pyramid = transform_service.forward(np.zeros((64, 64)), spec).zeros_like()
        pyramid.bands[0]["ap-b1p"][3, 5] = 1.0
        atom = transform_service.inverse(pyramid, spec, keep_complex=True)
        expected = transform_service.filter_l2_norm(spec, 1, "ap-b1p", 64)
        self.assertAlmostEqual(float(np.linalg.norm(atom)), expected, places=12)

    def test_decimated_band_norms_use_the_filter_norm(self):
        spec = TransformSpec(_tpctf6(), 2)
        norms = transform_service.band_norms(spec, 64)
        response = filterbank_service.sampled_responses(spec.bank, 64)[spec.bank.names.index("b1p-b2n")]
        self.assertAlmostEqual(norms[(1, "b1p-b2n")], float(np.sqrt(np.mean(np.abs(response) ** 2))), places=12)
        self.assertAlmostEqual(
            norms[(2, "b1p-b2n")], transform_service.filter_l2_norm(spec, 2, "b1p-b2n", 64) / 2.0, places=12
        )

    def test_first_level_mode_repeats_level_one(self):
        spec = TransformSpec(_tpctf6(), 2)
        norms = transform_service.band_norms(spec, 64, mode="first-level")
        self.assertEqual(norms[(2, "b1p-b1p")], norms[(1, "b1p-b1p")])

    def test_lowpass_only_at_the_coarsest_level(self):
        spec = TransformSpec(_tpctf6(), 2)
        with self.assertRaises(StructuralError):
            transform_service.filter_l2_norm(spec, 1, "a-a", 64)
        with self.assertRaises(StructuralError):
            transform_service.filter_l2_norm(spec, 3, "b1p-b1p", 64)
        with self.assertRaises(StructuralError):
            transform_service.filter_l2_norm(spec, 1, "nope", 64)


class UndecimatedTransformTests(unittest.TestCase):
    def test_spline_roundtrip_and_isometry(self):
        image = np.random.default_rng(3).uniform(0.0, 255.0, (32, 32))
        spec = TransformSpec(filterbank_service.resolve_bank("spline-cubic"), 2, UNDECIMATED)
        pyramid = transform_service.forward(image, spec)
        self.assertEqual(pyramid.band(2, "b1-b3").shape, (32, 32))
        self.assertFalse(np.iscomplexobj(pyramid.lowpass))
        assert_allclose(transform_service.inverse(pyramid, spec), image, atol=1e-9)
        self.assertAlmostEqual(pyramid.energy() / float(np.sum(image**2)), 1.0, delta=1e-10)

    def test_dct_roundtrip(self):
        image = np.random.default_rng(4).uniform(0.0, 255.0, (16, 16))
        spec = TransformSpec(filterbank_service.resolve_bank("dct7"), 1, UNDECIMATED)
        assert_allclose(transform_service.inverse(transform_service.forward(image, spec), spec), image, atol=1e-9)

    def test_direct_calls_ignore_the_spec_mode(self):
        image = np.random.default_rng(5).uniform(0.0, 255.0, (32, 32))
        spec = TransformSpec(filterbank_service.resolve_bank("spline-linear"), 2)
        pyramid = transform_service.forward_undecimated(image, spec)
        self.assertEqual(pyramid.lowpass.shape, (32, 32))
        assert_allclose(transform_service.inverse_undecimated(pyramid, spec), image, atol=1e-9)
        with self.assertRaises(ConfigurationError):
            transform_service.forward_undecimated(image, TransformSpec(_tpctf6(), 1))

    def test_undecimated_mode_needs_taps(self):
        with self.assertRaises(ConfigurationError):
            TransformSpec(_tpctf6(), 1, UNDECIMATED)

    def test_dilated_filters_must_fit(self):
        spec = TransformSpec(filterbank_service.resolve_bank("dct7"), 3, UNDECIMATED)
        with self.assertRaises(ConfigurationError):
            transform_service.forward(np.zeros((16, 16)), spec)


if __name__ == "__main__":
    unittest.main()
