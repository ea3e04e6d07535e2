"""
Unit tests for the elliptic operators and stream-function solves.

Tests cover:
- Symmetry and definiteness of the weighted operators
- Agreement of the matrix-free stencil with the assembled matrix
- Conjugate gradient and direct solves
- Second-order convergence on a closed-form modified stream problem
- Estimate reports for psi1
- Positivity, self-adjointness, lid traces and reflection symmetry of the solve
"""

import os
import sys
import unittest

import numpy as np
import scipy.sparse.linalg as spla

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from elliptic import (MODIFIED, OPERATOR_KINDS, STREAM, SWIRL, apply_stencil, build_operator, cached_operator,
                      h2_report, h3_report, solve_modified_stream, solve_stream, weighted_report)
from errors import ContractError, DomainError, NumericalError
from fields import DIRICHLET, EVEN, NEUMANN, ODD, ODD2, ScalarField, d2_dz2
from grid import make_grid

# Boundary tags each operator is assembled with
OPERATOR_TAGS = {
    MODIFIED: (EVEN, DIRICHLET, DIRICHLET),
    STREAM: (ODD, DIRICHLET, DIRICHLET),
    SWIRL: (ODD2, DIRICHLET, NEUMANN),
}


def modified_problem(grid):
    """psi1 = (R^2 - r^2) cos(k z) and the Gamma it solves for, k = pi / 2a."""
    k = np.pi / (2.0 * grid.a)
    r, z = grid.rr, grid.zz
    psi1 = (grid.R**2 - r**2) * np.cos(k * z)
    Gamma = (8.0 + k**2 * (grid.R**2 - r**2)) * np.cos(k * z)
    return psi1, Gamma


class TestOperatorStructure(unittest.TestCase):
    """Tests for the assembled operators."""

    def setUp(self):
        self.grid = make_grid(1.0, 0.75, 6, 8)

    def test_weighted_matrix_symmetric(self):
        for kind in OPERATOR_KINDS:
            with self.subTest(kind=kind):
                system = build_operator(kind, self.grid).weighted_matrix()
                asymmetry = abs(system - system.T).max()
                self.assertLess(asymmetry, 1e-10 * abs(system).max())

    def test_weighted_matrix_positive_definite(self):
        for kind in OPERATOR_KINDS:
            with self.subTest(kind=kind):
                dense = build_operator(kind, self.grid).weighted_matrix().toarray()
                self.assertGreater(np.linalg.eigvalsh(dense).min(), 0.0)

    def test_stencil_matches_matrix(self):
        rng = np.random.default_rng(3)
        values = rng.standard_normal(self.grid.shape)
        for kind, (parity, bc_r, bc_z) in OPERATOR_TAGS.items():
            with self.subTest(kind=kind):
                op = build_operator(kind, self.grid)
                stencil = apply_stencil(kind, ScalarField(values, parity, bc_r, bc_z), self.grid)
                np.testing.assert_allclose(stencil, op.apply(values), rtol=1e-10, atol=1e-8)

    def test_unknown_kind(self):
        with self.assertRaises(DomainError):
            build_operator("biharmonic", self.grid)

    def test_implicit_factor_cached(self):
        op = build_operator(SWIRL, self.grid)
        self.assertIs(op.implicit_factor(0.01), op.implicit_factor(0.01))
        self.assertIsNot(op.implicit_factor(0.01), op.implicit_factor(0.02))

    def test_cached_operator_shared_by_equal_geometry(self):
        """Separately built grids of one geometry get the same operator."""
        twin = make_grid(1.0, 0.75, 6, 8)
        self.assertIsNot(twin, self.grid)
        self.assertIs(cached_operator(SWIRL, twin), cached_operator(SWIRL, self.grid))
        self.assertIsNot(cached_operator(SWIRL, make_grid(1.0, 0.75, 6, 10)), cached_operator(SWIRL, self.grid))
        self.assertIsNot(cached_operator(MODIFIED, twin), cached_operator(SWIRL, twin))


class TestSolve(unittest.TestCase):
    """Tests for EllipticOperator.solve."""

    def setUp(self):
        self.grid = make_grid(1.0, 1.0, 12, 12)
        self.rhs = np.random.default_rng(11).random(self.grid.shape)

    def test_cg_solves_system(self):
        op = build_operator(MODIFIED, self.grid, "cg")
        x, residual = op.solve(self.rhs)
        self.assertLess(residual, 1e-8)
        np.testing.assert_allclose(-op.apply(x), self.rhs, rtol=1e-6, atol=1e-8)

    def test_direct_agrees_with_cg(self):
        for kind in OPERATOR_KINDS:
            with self.subTest(kind=kind):
                x_cg, _ = build_operator(kind, self.grid, "cg").solve(self.rhs)
                x_direct, _ = build_operator(kind, self.grid, "direct").solve(self.rhs)
                np.testing.assert_allclose(x_cg, x_direct, rtol=1e-6, atol=1e-9)

    def test_warm_start(self):
        op = build_operator(STREAM, self.grid)
        x, _ = op.solve(self.rhs)
        again, residual = op.solve(self.rhs, x0=x)
        self.assertLess(residual, 1e-8)
        np.testing.assert_allclose(again, x, rtol=1e-6, atol=1e-9)

    def test_zero_rhs(self):
        x, residual = build_operator(MODIFIED, self.grid).solve(np.zeros(self.grid.shape))
        np.testing.assert_array_equal(x, 0.0)
        self.assertEqual(residual, 0.0)

    def test_non_finite_rhs(self):
        rhs = self.rhs.copy()
        rhs[2, 3] = np.nan
        with self.assertRaises(NumericalError):
            build_operator(MODIFIED, self.grid).solve(rhs)

    def test_unknown_method(self):
        op = build_operator(MODIFIED, self.grid, "multigrid")
        with self.assertRaises(DomainError):
            op.solve(self.rhs)

    def test_direct_falls_back_on_large_grids(self):
        grid = make_grid(1.0, 1.0, 80, 80)
        self.assertEqual(build_operator(MODIFIED, grid, "direct").method, "cg")

    def test_weighted_residual_definition(self):
        op = build_operator(MODIFIED, self.grid)
        self.assertEqual(op.residual(np.zeros(self.grid.shape), np.zeros(self.grid.shape)), 0.0)
        self.assertAlmostEqual(op.residual(np.zeros(self.grid.shape), self.rhs), 1.0)


class TestStreamFunctions(unittest.TestCase):
    """Tests for the modified stream function and psi solves."""

    def test_modified_problem_second_order(self):
        errors = []
        for n in (8, 16, 32):
            grid = make_grid(1.0, 1.0, n, n)
            exact, Gamma = modified_problem(grid)
            psi1 = solve_modified_stream(ScalarField(Gamma, EVEN), grid, method="direct")
            errors.append(np.max(np.abs(psi1.values - exact)))
        self.assertLess(errors[-1], 1e-2)
        self.assertGreater(errors[0] / errors[1], 3.0)
        self.assertGreater(errors[1] / errors[2], 3.0)

    def test_solution_tags(self):
        grid = make_grid(1.0, 1.0, 8, 8)
        _, Gamma = modified_problem(grid)
        psi1 = solve_modified_stream(ScalarField(Gamma, EVEN), grid)
        self.assertEqual((psi1.parity, psi1.bc_r, psi1.bc_z), (EVEN, DIRICHLET, DIRICHLET))

    def test_parity_contracts(self):
        grid = make_grid(1.0, 1.0, 8, 8)
        with self.assertRaises(ContractError):
            solve_modified_stream(ScalarField(np.ones(grid.shape), ODD), grid)
        with self.assertRaises(ContractError):
            solve_stream(ScalarField(np.ones(grid.shape), EVEN), grid)

    def test_stream_solve_residual(self):
        grid = make_grid(1.0, 1.0, 10, 10)
        omega = ScalarField(grid.rr * (1.0 - grid.rr) * np.cos(grid.zz), ODD)
        psi = solve_stream(omega, grid)
        op = build_operator(STREAM, grid)
        self.assertLess(op.residual(psi.values, omega.values), 1e-8)

    def test_cg_matches_scipy_spsolve(self):
        grid = make_grid(1.0, 1.0, 10, 10)
        _, Gamma = modified_problem(grid)
        op = build_operator(MODIFIED, grid)
        reference = spla.spsolve((-op.matrix).tocsc(), Gamma.ravel()).reshape(grid.shape)
        psi1 = solve_modified_stream(ScalarField(Gamma, EVEN), grid, method="cg")
        np.testing.assert_allclose(psi1.values, reference, rtol=1e-6, atol=1e-9)


class TestEstimateReports(unittest.TestCase):
    """Tests for the H2, H3 and weighted reports."""

    def setUp(self):
        self.grid = make_grid(1.0, 1.0, 16, 16)
        _, Gamma = modified_problem(self.grid)
        self.Gamma = ScalarField(Gamma, EVEN, DIRICHLET, DIRICHLET)
        self.psi1 = solve_modified_stream(self.Gamma, self.grid, method="direct")

    def test_h2_report(self):
        report = h2_report(self.psi1, self.Gamma, self.grid)
        self.assertEqual(set(report.terms), {"psi1_rr", "psi1_rz", "psi1_zz", "psi1_r_over_r",
                                             "axis_psi1_z", "wall_psi1_r"})
        self.assertAlmostEqual(report.lhs, sum(report.terms.values()))
        self.assertGreater(report.ratio, 0.0)
        self.assertLess(report.ratio, 10.0)

    def test_h3_and_weighted_reports(self):
        full = h3_report(self.psi1, self.Gamma, self.grid)
        weighted = weighted_report(self.psi1, self.Gamma, self.grid)
        self.assertGreater(full.rhs, 0.0)
        self.assertEqual(weighted.terms["psi1_rz_over_r"], full.terms["psi1_rz_over_r"])
        self.assertLessEqual(weighted.lhs, full.lhs)

    def test_report_requires_a_solution(self):
        with self.assertRaises(ContractError):
            h2_report(ScalarField.zeros(self.grid, EVEN), self.Gamma, self.grid)

    def test_ratio_none_without_rhs(self):
        zero = ScalarField.zeros(self.grid, EVEN, DIRICHLET, DIRICHLET)
        report = h2_report(zero, zero, self.grid)
        self.assertIsNone(report.ratio)
        self.assertEqual(report.to_dict()["ratio"], None)


class TestDiscreteProperties(unittest.TestCase):
    """Tests for properties the discrete modified problem shares with the continuous one."""

    def test_nonnegative_gamma_gives_nonnegative_psi1(self):
        grid = make_grid(1.0, 0.8, 12, 10)
        for seed in range(4):
            with self.subTest(seed=seed):
                Gamma = np.random.default_rng(seed).random(grid.shape)
                psi1 = solve_modified_stream(ScalarField(Gamma, EVEN), grid, method="direct")
                self.assertGreaterEqual(psi1.values.min(), -1e-12 * psi1.values.max())
                self.assertGreater(psi1.values.max(), 0.0)

    def test_solve_is_self_adjoint(self):
        """<G f, g> = <f, G g> in the operator's inner product."""
        grid = make_grid(1.0, 1.0, 10, 12)
        op = build_operator(MODIFIED, grid)
        rng = np.random.default_rng(11)
        for _ in range(3):
            f = rng.standard_normal(grid.shape)
            g = rng.standard_normal(grid.shape)
            Gf = solve_modified_stream(ScalarField(f, EVEN), grid, method="direct").values
            Gg = solve_modified_stream(ScalarField(g, EVEN), grid, method="direct").values
            left, right = op.inner(Gf, g), op.inner(f, Gg)
            scale = max(abs(left), abs(right), 1.0)
            self.assertLessEqual(abs(left - right), 1e-9 * scale)

    def test_lid_trace_of_psi1_zz_vanishes(self):
        """psi1_zz extrapolated to z = +-a decays at second order."""
        traces = []
        for n in (8, 16, 32):
            grid = make_grid(1.0, 1.0, n, n)
            _, Gamma = modified_problem(grid)
            psi1 = solve_modified_stream(ScalarField(Gamma, EVEN), grid, method="direct")
            bottom, top = grid.trace_lids(d2_dz2(psi1, grid).values)
            traces.append(max(np.max(np.abs(bottom)), np.max(np.abs(top))))
        self.assertLess(traces[1], traces[0])
        self.assertGreater(traces[1] / traces[2], 2.5)

    def test_h3_report_invariant_under_reflection(self):
        grid = make_grid(1.0, 1.0, 12, 12)
        _, Gamma = modified_problem(grid)
        Gamma = Gamma * (1.0 + 0.5 * grid.zz) + 0.3 * (1.0 - grid.rr**2) * np.sin(np.pi * grid.zz)
        Gamma_field = ScalarField(Gamma, EVEN, DIRICHLET, DIRICHLET)
        psi1 = solve_modified_stream(Gamma_field, grid, method="direct")
        original = h3_report(psi1, Gamma_field, grid)
        reflected = h3_report(ScalarField(-psi1.values[:, ::-1], EVEN, DIRICHLET, DIRICHLET),
                              ScalarField(-Gamma[:, ::-1], EVEN, DIRICHLET, DIRICHLET), grid)
        self.assertGreater(original.terms["psi1_zzz"], 0.0)
        for name, value in original.terms.items():
            with self.subTest(term=name):
                self.assertAlmostEqual(reflected.terms[name], value, delta=1e-9 * max(abs(value), 1.0))
        self.assertAlmostEqual(reflected.rhs, original.rhs, delta=1e-9 * original.rhs)


if __name__ == "__main__":
    unittest.main()
