"""
Unit tests for the estimate ledgers.

Tests cover:
- Data constants on trivial and swirling data
- Strict, tracked and skipped ledger entries
- The small-data fixed point iteration
- Full certificate reports on short runs (rest, swirl decay, small data)
- Detection of tampered diagnostics
- Ratio stability across resolutions
- Reproducible reports and reflection symmetry of the interaction integral
"""

import json
import math
import os
import sys
import unittest

import numpy as np

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from certificates import (ERROR, FAIL, LARGE_RATIO, PASS, SKIPPED, SMALL_RATIO, STRICT, TRACKED,
                          CertificateOptions, certificate_report, classify_cases, data_constants,
                          energy_budget, interaction_integral, max_principle_ledger, order_reduction_rhs,
                          ratio_stability, series_constants, skipped_entry, small_data_fixed_point,
                          smallness_threshold, strict_entry, tracked_entry, x_trajectory)
from dynamics import SimConfig, run
from errors import ContractError, DomainError
from fields import Forcing, build_state
from grid import make_grid
from norms import Snapshot, TimeSeries


def zero_state(grid):
    zeros = np.zeros(grid.shape)
    return build_state(0.0, zeros, zeros, zeros, grid)


class TestDataConstants(unittest.TestCase):
    """Tests for data_constants."""

    def setUp(self):
        self.grid = make_grid(1.0, 1.0, 8, 8)

    def test_zero_data(self):
        constants = data_constants(zero_state(self.grid), [Forcing.zero(self.grid)], [0.0], 1.0, self.grid)
        for name in ("D1", "D2", "D3", "D4", "D5", "D6", "D7", "G", "G1", "G2", "Dstar"):
            self.assertEqual(getattr(constants, name), 0.0, name)
        self.assertAlmostEqual(constants.D8**2, 27.0 / 4.0)
        self.assertAlmostEqual(constants.kappa, 27.0 / 4.0)

    def test_d8_branches(self):
        """D8^2 = max(nu/4, nu^2/8, 27/(4 nu^3), 1/4)."""
        for nu, expected in ((3.0, 9.0 / 8.0), (10.0, 12.5)):
            constants = data_constants(zero_state(self.grid), [Forcing.zero(self.grid)], [0.0], nu, self.grid)
            self.assertAlmostEqual(constants.D8**2, expected)

    def test_constant_c_scales_kappa(self):
        state, forcing = zero_state(self.grid), [Forcing.zero(self.grid)]
        base = data_constants(state, forcing, [0.0], 1.0, self.grid, constant_c=1.0)
        doubled = data_constants(state, forcing, [0.0], 1.0, self.grid, constant_c=2.0)
        self.assertAlmostEqual(doubled.kappa, 2.0 * base.kappa)

    def test_swirl_data(self):
        grid = self.grid
        u0 = grid.rr**2 * (1.0 - grid.rr) ** 2
        state = build_state(0.0, u0, np.zeros(grid.shape), np.zeros(grid.shape), grid)
        constants = data_constants(state, [Forcing.zero(grid)], [0.0], 1.0, grid)
        self.assertAlmostEqual(constants.D2, float(np.max(u0)))
        self.assertAlmostEqual(constants.Dstar, min(1.0, constants.D2))
        self.assertAlmostEqual(constants.D7, float(np.max(u0 / grid.rr)))
        self.assertAlmostEqual(constants.D1**2, 2.0 * constants.inputs["v0_l2"] ** 2)
        self.assertAlmostEqual(constants.D1_notation, 2.0 * constants.inputs["v0_l2"])
        self.assertAlmostEqual(constants.G2, constants.G**3 + constants.G1)

    def test_invalid_inputs(self):
        with self.assertRaises(DomainError):
            data_constants(zero_state(self.grid), [Forcing.zero(self.grid)], [0.0], 0.0, self.grid)
        with self.assertRaises(ContractError):
            data_constants(zero_state(self.grid), [Forcing.zero(self.grid)], [0.0, 1.0], 1.0, self.grid)


class TestEntries(unittest.TestCase):
    """Tests for ledger entry helpers."""

    def test_strict_relative(self):
        self.assertEqual(strict_entry("e", 1.0005, 1.0, 1e-3).status, PASS)
        entry = strict_entry("e", 1.01, 1.0, 1e-3)
        self.assertEqual(entry.status, FAIL)
        self.assertTrue(entry.failed)
        self.assertAlmostEqual(entry.ratio, 1.01)

    def test_strict_absolute_scales_with_max_one(self):
        self.assertEqual(strict_entry("e", 0.0 + 5e-4, 0.0, 1e-3, relative=False).status, PASS)
        self.assertEqual(strict_entry("e", 10.02, 10.0, 1e-3, relative=False).status, FAIL)

    def test_strict_zero_sides(self):
        entry = strict_entry("e", 0.0, 0.0, 1e-3)
        self.assertEqual(entry.status, PASS)
        self.assertIsNone(entry.ratio)

    def test_tracked_zero_over_zero_skipped(self):
        entry = tracked_entry("t", 0.0, 0.0, note="quiet")
        self.assertEqual(entry.status, SKIPPED)
        self.assertIn("0/0", entry.note)
        self.assertFalse(entry.failed)

    def test_tracked_ratio(self):
        entry = tracked_entry("t", 3.0, 2.0)
        self.assertEqual((entry.mode, entry.status), (TRACKED, TRACKED))
        self.assertEqual(entry.ratio, 1.5)
        self.assertEqual(tracked_entry("t", 1.0, 0.0).ratio, math.inf)

    def test_skipped_entry(self):
        entry = skipped_entry("s", STRICT, "not applicable")
        self.assertEqual(entry.status, SKIPPED)
        self.assertFalse(entry.failed)
        self.assertEqual(entry.to_dict()["note"], "not applicable")


class TestFixedPoint(unittest.TestCase):
    """Tests for M = kappa M^3 + G2."""

    def test_threshold_case(self):
        result = small_data_fixed_point(3.0, 1.0 / 8.0)
        self.assertTrue(result.converged)
        self.assertFalse(result.diverged)
        self.assertTrue(result.hypothesis_ok)
        self.assertGreater(result.M, 0.1318)
        self.assertLess(result.M, 0.1320)
        self.assertLess(result.residual, 1e-12)

    def test_linear_case(self):
        result = small_data_fixed_point(0.0, 0.3)
        self.assertEqual(result.M, 0.3)
        self.assertEqual(result.iterations, 1)
        self.assertTrue(result.converged)

    def test_zero_data(self):
        result = small_data_fixed_point(3.0, 0.0)
        self.assertEqual(result.M, 0.0)
        self.assertTrue(result.converged)

    def test_large_data_diverges(self):
        result = small_data_fixed_point(3.0, 1.25)
        self.assertTrue(result.diverged)
        self.assertFalse(result.converged)
        self.assertFalse(result.hypothesis_ok)

    def test_negative_inputs(self):
        with self.assertRaises(DomainError):
            small_data_fixed_point(-1.0, 0.1)
        with self.assertRaises(DomainError):
            small_data_fixed_point(1.0, -0.1)

    def test_smallness_threshold(self):
        self.assertAlmostEqual(smallness_threshold(3.0), 0.125)
        self.assertEqual(smallness_threshold(0.0), 1.0)


class TestOptions(unittest.TestCase):
    """Tests for CertificateOptions."""

    def test_defaults(self):
        options = CertificateOptions().validate()
        self.assertEqual(options.to_dict()["s_values"], [4.0, 6.0, 10.0])

    def test_invalid(self):
        for kwargs in ({"eps0": 1.0}, {"delta": 0.0}, {"s_values": ()}, {"s_values": (0.5,)},
                       {"c0": 0.0}, {"constant_c": -1.0}, {"interaction_d": 2.0}):
            with self.subTest(**{key: str(value) for key, value in kwargs.items()}):
                with self.assertRaises(DomainError):
                    CertificateOptions(**kwargs).validate()

    def test_order_reduction_rhs(self):
        self.assertEqual(order_reduction_rhs(1.0, 0.1, 1.0, 0.0, 5.0, 2.0), 2.0)
        with self.assertRaises(DomainError):
            order_reduction_rhs(1.0, 1.5, 1.0, 1.0, 1.0, 0.0)


class TestRestReport(unittest.TestCase):
    """A run at rest passes every strict entry and skips the undefined ones."""

    @classmethod
    def setUpClass(cls):
        cls.series = run(SimConfig(nu=1.0, Nr=8, Nz=8, dt=1e-3, T=0.005))
        cls.report = certificate_report(cls.series)

    def test_passes(self):
        self.assertTrue(self.report.passed)
        self.assertEqual(self.report.counts()[ERROR], 0)
        self.assertEqual(self.report.counts()[FAIL], 0)

    def test_strict_entries_pass(self):
        for name in ("energy", "max_principle", "vphi_sup", "small_data", "hardy_beta1", "hardy_beta0"):
            self.assertEqual(self.report.entry(name).status, PASS, name)

    def test_lambda_undefined(self):
        self.assertEqual(self.report.lambdas, {"4": None, "6": None, "10": None})
        self.assertEqual(self.report.entry("vphi_s4").status, SKIPPED)

    def test_elliptic_zero_over_zero(self):
        self.assertEqual(self.report.entry("h2").status, SKIPPED)

    def test_to_dict(self):
        data = self.report.to_dict()
        self.assertTrue(data["passed"])
        self.assertEqual(data["metadata"]["scenario"], "rest")
        self.assertEqual(len(data["x_trajectory"]), len(self.series))

    def test_unknown_entry(self):
        with self.assertRaises(KeyError):
            self.report.entry("no_such_ledger")


class TestSwirlReport(unittest.TestCase):
    """Certificate of a short unforced swirl decay run."""

    @classmethod
    def setUpClass(cls):
        cls.series = run(SimConfig(nu=1.0, Nr=16, Nz=16, dt=1e-3, T=0.02, case="swirl_decay"))
        cls.report = certificate_report(cls.series)

    def test_passes_without_errors(self):
        self.assertTrue(self.report.passed, [e.name for e in self.report.strict_failures()])
        self.assertEqual(self.report.counts()[ERROR], 0)

    def test_report_is_reproducible(self):
        again = certificate_report(run(SimConfig(nu=1.0, Nr=16, Nz=16, dt=1e-3, T=0.02, case="swirl_decay")))
        self.assertEqual(json.dumps(again.to_dict(), sort_keys=True),
                         json.dumps(self.report.to_dict(), sort_keys=True))

    def test_energy_entry(self):
        entry = self.report.entry("energy")
        self.assertEqual(entry.status, PASS)
        self.assertLess(entry.ratio, 1.0)

    def test_max_principle_is_monotone(self):
        entry = self.report.entry("max_principle")
        self.assertEqual(entry.status, PASS)
        self.assertTrue(entry.hypothesis["monotone"])

    def test_tracked_entries_have_ratios(self):
        for name in ("stream_energy", "h2", "swirl_gradient_z", "order_reduction", "vphi_s4", "interaction"):
            entry = self.report.entry(name)
            self.assertEqual(entry.status, TRACKED, name)
            self.assertTrue(entry.ratio is not None and entry.ratio > 0.0, name)

    def test_energy_budget_rows(self):
        rows = energy_budget(self.series, self.report.constants)
        self.assertEqual(len(rows), len(self.series))
        self.assertTrue(all(row["rhs"] == rows[0]["rhs"] for row in rows))
        self.assertAlmostEqual(rows[0]["dissipation"], 0.0)

    def test_x_trajectory_nondecreasing(self):
        values = [x for _, x in x_trajectory(self.series)]
        self.assertTrue(all(b >= a for a, b in zip(values, values[1:])))

    def test_cases_classified(self):
        for key, case in self.report.cases.items():
            self.assertIn(case["case"], (LARGE_RATIO, SMALL_RATIO), key)
            self.assertGreater(case["lambda"], 0.0)

    def test_tampered_swirl_fails(self):
        """A u_max above the data bound turns the strict entry into a failure."""
        for snap in self.series.snapshots:
            snap.diagnostics = dict(snap.diagnostics)
        self.series.snapshots[-1].diagnostics["u_max"] = 10.0 * self.report.constants.D2 + 1.0
        try:
            entry = max_principle_ledger(self.series, self.report.constants)
            self.assertEqual(entry.status, FAIL)
            self.assertFalse(certificate_report(self.series).passed)
        finally:
            self.series.snapshots[-1].diagnostics["u_max"] = float(
                np.max(np.abs(self.series.final.state.u.values)))

    def test_centered_advection_is_tracked(self):
        series = TimeSeries(self.series.grid, self.series.nu, list(self.series.snapshots),
                            {**self.series.metadata, "advection": "centered"})
        entry = max_principle_ledger(series, series_constants(series))
        self.assertEqual(entry.mode, TRACKED)


class TestSmallDataReport(unittest.TestCase):
    """The small-data scenario meets its hypothesis and its strict bound."""

    def test_small_data_entry_passes(self):
        series = run(SimConfig(nu=1.0, Nr=32, Nz=32, dt=1e-3, T=0.005, case="small_data"))
        report = certificate_report(series)
        entry = report.entry("small_data")
        self.assertTrue(entry.hypothesis["holds"])
        self.assertEqual(entry.status, PASS)
        self.assertTrue(report.fixed_point.converged)


class TestClassifyCases(unittest.TestCase):
    """Tests for classify_cases with a constant azimuthal velocity."""

    def test_threshold_sides(self):
        grid = make_grid(1.0, 1.0, 8, 8)
        series = TimeSeries(grid, 1.0)
        zeros = np.zeros(grid.shape)
        series.append(Snapshot(build_state(0.0, grid.rr.copy(), zeros, zeros, grid), Forcing.zero(grid)))
        lam = grid.volume ** 0.25
        self.assertEqual(classify_cases(series, [4.0], lam - 0.1)["4"]["case"], LARGE_RATIO)
        self.assertEqual(classify_cases(series, [4.0], lam + 0.1)["4"]["case"], SMALL_RATIO)
        self.assertAlmostEqual(classify_cases(series, [4.0], 1.0)["4"]["D0"], lam)


class TestInteractionIntegral(unittest.TestCase):
    """Tests for the space-time integral of (v_phi / r) Phi Gamma."""

    def setUp(self):
        self.grid = make_grid(1.0, 1.0, 10, 12)
        r, z = self.grid.rr, self.grid.zz
        self.u = r**2 * (1.0 - r**2) * (1.0 + 0.4 * z + 0.2 * z**2)
        self.Gamma = (1.0 - r**2) * (np.cos(0.5 * np.pi * z) + 0.5 * z)
        self.psi1 = 0.1 * (1.0 - r**2) * (1.0 + z)

    def series(self, u, Gamma, psi1):
        series = TimeSeries(self.grid, 1.0)
        for t, scale in ((0.0, 1.0), (0.5, 0.8), (1.0, 0.5)):
            state = build_state(t, scale * u, scale * Gamma, scale * psi1, self.grid)
            series.append(Snapshot(state, Forcing.zero(self.grid)))
        return series

    def test_invariant_under_reflection(self):
        """z -> -z keeps u and flips the signs of Gamma and psi1."""
        original = interaction_integral(self.series(self.u, self.Gamma, self.psi1))
        reflected = interaction_integral(self.series(self.u[:, ::-1], -self.Gamma[:, ::-1], -self.psi1[:, ::-1]))
        self.assertNotEqual(original, 0.0)
        self.assertAlmostEqual(reflected, original, delta=1e-10 * abs(original))

    def test_vanishes_without_swirl(self):
        zeros = np.zeros(self.grid.shape)
        self.assertEqual(interaction_integral(self.series(zeros, self.Gamma, self.psi1)), 0.0)


class TestRatioStability(unittest.TestCase):
    """Tests for ratio_stability."""

    @staticmethod
    def report(**ratios):
        return {"entries": [{"name": name, "mode": TRACKED, "ratio": ratio} for name, ratio in ratios.items()]
                + [{"name": "energy", "mode": STRICT, "ratio": 0.5}]}

    def test_verdicts(self):
        rows = ratio_stability([
            ("fine", 0.05, self.report(a=1.1, b=2.0, c=None)),
            ("coarse", 0.1, self.report(a=1.0, b=1.0, c=3.0)),
        ])
        by_name = {row["name"]: row for row in rows}
        self.assertEqual(set(by_name), {"a", "b", "c"})
        self.assertEqual(by_name["a"]["verdict"], "stable")
        self.assertEqual(by_name["b"]["verdict"], "unstable")
        self.assertAlmostEqual(by_name["b"]["spread"], 0.5)
        self.assertEqual(by_name["c"]["verdict"], "insufficient")
        self.assertEqual(list(by_name["a"]["ratios"]), ["coarse", "fine"])


if __name__ == "__main__":
    unittest.main()
