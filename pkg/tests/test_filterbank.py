import math
import unittest

import numpy as np
from numpy.testing import assert_allclose

from app.data.filter_taps import TPCTF6_PARAMS, dct_taps
from app.errors import ConfigurationError
from app.services import filterbank_service
from app.services.filterbank_service import BumpSpec
from app.utils.calculations import eval_pm
from app.utils.helpers import frequency_grid
from cache import clear_all


def _tpctf6_1d():
    return filterbank_service.build_ctf_bank(**TPCTF6_PARAMS, m=4)


class PolynomialTests(unittest.TestCase):
    def test_known_values(self):
        self.assertEqual(eval_pm(4, 0.0), 1.0)
        self.assertAlmostEqual(eval_pm(4, 0.5), 0.5, places=15)
        self.assertAlmostEqual(eval_pm(2, 0.25), 0.84375, places=15)

    def test_reflection_identity(self):
        x = np.linspace(0.0, 1.0, 101)
        for m in range(1, 9):
            assert_allclose(eval_pm(m, x) + eval_pm(m, 1.0 - x), 1.0, atol=1e-14)


class BumpTests(unittest.TestCase):
    def setUp(self):
        self.spec = BumpSpec(cL=-1.0, cR=1.0, epsL=0.3, epsR=0.3, m=4)

    def test_edge_and_plateau_values(self):
        self.assertEqual(filterbank_service.eval_bump(self.spec, -1.3), 0.0)
        self.assertEqual(filterbank_service.eval_bump(self.spec, 0.0), 1.0)
        self.assertEqual(filterbank_service.eval_bump(self.spec, 0.7), 1.0)
        self.assertAlmostEqual(filterbank_service.eval_bump(self.spec, -1.0), math.sqrt(2) / 2, places=14)
        self.assertEqual(filterbank_service.eval_bump(self.spec, 2.5), 0.0)

    def test_adjacent_bumps_are_complementary(self):
        right = BumpSpec(cL=1.0, cR=2.0, epsL=0.3, epsR=0.3, m=4)
        xi = np.linspace(0.7, 1.3, 61)
        total = filterbank_service.eval_bump(self.spec, xi) ** 2 + filterbank_service.eval_bump(right, xi) ** 2
        assert_allclose(total, 1.0, atol=1e-14)

    def test_overlapping_edges_are_rejected(self):
        with self.assertRaises(ConfigurationError) as raised:
            BumpSpec(cL=0.0, cR=0.5, epsL=0.3, epsR=0.3)
        self.assertIn("epsL + epsR <= cR - cL", str(raised.exception))

    def test_nonpositive_width_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            BumpSpec(cL=0.0, cR=1.0, epsL=0.0, epsR=0.3)


class CtfBankTests(unittest.TestCase):
    def setUp(self):
        clear_all()
        self.bank = _tpctf6_1d()

    def test_one_dimensional_filter_set(self):
        names = [f.name for f in self.bank.filters]
        self.assertEqual(names, ["a", "ap", "an", "b1p", "b1n", "b2p", "b2n"])

    def test_band_edges(self):
        edges = self.bank.band_edges
        self.assertAlmostEqual(edges[1], 119 / 128 + (math.pi - 119 / 128) / 2, places=14)
        self.assertAlmostEqual(edges[1], 2.0356, places=4)

    def test_lowpass_is_one_at_origin_and_highpass_vanishes(self):
        self.assertEqual(self.bank.lowpass.response(0.0).real, 1.0)
        for f in self.bank.highpass:
            self.assertEqual(abs(f.response(0.0)), 0.0)

    def test_complex_lowpass_splits_lowpass_energy(self):
        xi = frequency_grid(256)
        ap, an = (f.response(xi) for f in self.bank.complex_lowpass)
        assert_allclose(np.abs(ap) ** 2 + np.abs(an) ** 2, np.abs(self.bank.lowpass.response(xi)) ** 2, atol=1e-12)

    def test_transition_widths_fill_the_last_band(self):
        band_width = (math.pi - 119 / 128) / 2
        self.assertAlmostEqual(self.bank.eps_high, band_width - 81 / 128, places=14)
        self.assertEqual(self.bank.eps_pi, 81 / 128)
        b2p = self.bank.highpass[2].pieces[0]
        self.assertLessEqual(b2p.epsL + b2p.epsR, b2p.cR - b2p.cL + 1e-12)

    def test_one_dimensional_tight_frame_identities(self):
        xi = frequency_grid(256)
        filters = (self.bank.lowpass, *self.bank.highpass)
        responses = [f.response(xi) for f in filters]
        total = sum(np.abs(r) ** 2 for r in responses)
        assert_allclose(total, 1.0, atol=1e-12)
        shifted = sum(r * np.conj(np.roll(r, -128)) for r in responses)
        assert_allclose(shifted, 0.0, atol=1e-12)

    def test_lowpass_support_separation(self):
        xi = frequency_grid(256)
        a = self.bank.lowpass.response(xi)
        self.assertEqual(float(np.max(np.abs(a * np.roll(a, -128)))), 0.0)

    def test_rejects_violated_inequalities(self):
        with self.assertRaises(ConfigurationError) as raised:
            filterbank_service.build_ctf_bank(2, 119 / 128, 0.3, 81 / 128)
        self.assertIn("eps0 < c1 - eps1", str(raised.exception))
        with self.assertRaises(ConfigurationError):
            filterbank_service.build_ctf_bank(2, 119 / 128, 35 / 128, 0.9)
        with self.assertRaises(ConfigurationError):
            filterbank_service.build_ctf_bank(0, 119 / 128, 35 / 128, 81 / 128)


class TensorBankTests(unittest.TestCase):
    def setUp(self):
        clear_all()
        self.bank = filterbank_service.build_tpctf2d(_tpctf6_1d())

    def test_highpass_count_and_lowpass(self):
        self.assertEqual(len(self.bank.highpass), 32)
        self.assertEqual(self.bank.lowpass.name, "a-a")
        self.assertIn("ap-b1p", self.bank.highpass_names)
        self.assertIn("b2n-an", self.bank.highpass_names)
        self.assertNotIn("ap-an", self.bank.highpass_names)

    def test_fourteen_directions(self):
        self.assertEqual(filterbank_service.orientation_count(self.bank), 14)

    def test_identities_on_several_grids(self):
        for size in (16, 64, 256):
            report = filterbank_service.verify_bank_identities(filterbank_service.sample_bank(self.bank, size))
            self.assertLessEqual(report.max_deviation, 1e-12, msg=f"N={size}")
            self.assertEqual(set(report.deviations), {"partition_of_unity", "shift(0, 1)", "shift(1, 0)", "shift(1, 1)"})

    def test_deleting_a_filter_breaks_the_partition(self):
        sampled = filterbank_service.sample_bank(self.bank, 64).without("b1p-b1p")
        report = filterbank_service.verify_bank_identities(sampled)
        self.assertGreater(report.partition_of_unity, 0.1)

    def test_lowpass_samples_are_real_and_even(self):
        lowpass = filterbank_service.sample_bank(self.bank, 64).lowpass
        assert_allclose(lowpass.imag, 0.0, atol=0.0)
        reflected = np.roll(lowpass[::-1, ::-1], 1, axis=(0, 1))
        assert_allclose(lowpass, reflected, atol=1e-13)

    def test_small_grid_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            filterbank_service.sample_bank(self.bank, 6)
        with self.assertRaises(ConfigurationError):
            filterbank_service.sample_bank(self.bank, 15)

    def test_sampled_responses_are_cached_and_read_only(self):
        first = filterbank_service.sampled_responses(self.bank, 32)
        second = filterbank_service.sampled_responses(self.bank, 32)
        self.assertIs(first, second)
        self.assertFalse(first.flags.writeable)

    def test_odd_bank_is_a_plain_tensor_product(self):
        odd = filterbank_service.build_tpctf2d_odd(_tpctf6_1d())
        self.assertEqual(len(odd.filters), 25)
        report = filterbank_service.verify_bank_identities(filterbank_service.sample_bank(odd, 64))
        self.assertLessEqual(report.partition_of_unity, 1e-12)

    def test_description_lists_every_filter(self):
        text = filterbank_service.describe_bank(self.bank)
        self.assertTrue(text.startswith("bank tpctf:s=2"))
        self.assertEqual(text.count("filter2d "), 32)
        self.assertIn("filter b1p bump", text)


class TapBankTests(unittest.TestCase):
    def test_cubic_spline(self):
        bank = filterbank_service.build_spline_bank("cubic")
        self.assertEqual(len(bank.filters), 25)
        self.assertAlmostEqual(sum(bank.factors[0].taps), 1.0, places=15)
        report = filterbank_service.verify_bank_identities(
            filterbank_service.sample_filters_1d(filterbank_service.spline_filters("cubic"), 64)
        )
        self.assertLessEqual(report.max_deviation, 1e-12)

    def test_linear_spline(self):
        filters = filterbank_service.spline_filters("linear")
        self.assertEqual(filters[2].taps, (-0.25, 0.5, -0.25))
        self.assertEqual(filters[1].start, -1)
        assert_allclose(filters[1].taps, np.sqrt(2.0) / 4.0 * np.array([-1.0, 0.0, 1.0]), atol=0.0)
        report = filterbank_service.verify_bank_identities(filterbank_service.sample_filters_1d(filters, 32))
        self.assertLessEqual(report.max_deviation, 1e-12)
        self.assertEqual(len(filterbank_service.build_spline_bank("linear").filters), 9)

    def test_unknown_spline_variant(self):
        with self.assertRaises(ConfigurationError):
            filterbank_service.build_spline_bank("quintic")

    def test_dct_bank(self):
        taps = np.array(dct_taps(7))
        assert_allclose(7.0 * taps @ taps.T, np.eye(7), atol=1e-12)
        assert_allclose(taps[0], np.full(7, 1 / 7), atol=1e-15)
        bank = filterbank_service.build_dct_bank(7)
        self.assertEqual(len(bank.filters), 49)
        sampled = filterbank_service.sample_filters_1d(filterbank_service.dct_filters(7), 64)
        assert_allclose(np.sum(np.abs(sampled.responses) ** 2, axis=0), 1.0, atol=1e-12)

    def test_resolve_bank_names(self):
        self.assertEqual(filterbank_service.resolve_bank("dct5").key, "dct5")
        self.assertEqual(filterbank_service.resolve_bank("spline-linear").key, "spline-linear")
        self.assertEqual(len(filterbank_service.resolve_bank("tpctf6").highpass), 32)
        with self.assertRaises(ConfigurationError):
            filterbank_service.resolve_bank("haar")


if __name__ == "__main__":
    unittest.main()
