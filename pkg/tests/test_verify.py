"""Error norms, convergence study, cross-method check, control sweep."""

import numpy as np
import pytest

from plaquectrl import direct, indirect, verify
from plaquectrl.nlp import NlpOptions
from plaquectrl.params import ModelParameters
from plaquectrl.spectral import build_setup

P = ModelParameters()


class TestErrorNorms:
    rho = np.linspace(-1.0, 1.0, 3)
    t = np.linspace(-1.0, 1.0, 4)

    def test_identical_evaluators(self):
        ev = lambda rho, t: np.outer(rho, t)
        assert verify.err_inf(ev, ev, self.rho, self.t) == 0.0
        assert verify.err_l2(ev, ev, self.rho, self.t) == 0.0

    def test_constant_gap(self):
        a = lambda rho, t: np.zeros((rho.size, t.size))
        b = lambda rho, t: np.full((rho.size, t.size), 0.25)
        assert verify.err_inf(a, b, self.rho, self.t) == pytest.approx(0.25)
        assert verify.err_l2(a, b, self.rho, self.t) == pytest.approx(
            0.25 * np.sqrt(12.0))

    def test_single_node_gap(self):
        a = lambda rho, t: np.zeros((rho.size, t.size))

        def b(rho, t):
            g = np.zeros((rho.size, t.size))
            g[1, 2] = 2.0
            return g

        assert verify.err_inf(a, b, self.rho, self.t) == pytest.approx(2.0)
        assert verify.err_l2(a, b, self.rho, self.t) == pytest.approx(2.0)


class TestConvergenceStudy:
    def test_decoupled_study_is_exact(self):
        rows = verify.convergence_study(P.decoupled(), [(2, 2), (4, 4)],
                                        reference_grid=(6, 6))
        assert len(rows) == 2
        for r in rows:
            assert not r.failed
            for which in "LHF":
                assert r.Einf[which] < 1e-12
                assert r.E2[which] < 1e-12
            assert r.EJ < 1e-12

    def test_reference_must_be_finer(self):
        with pytest.raises(ValueError):
            verify.convergence_study(P, [(8, 8)], reference_grid=(8, 8))

    def test_csv_and_table_shapes(self):
        rows = verify.convergence_study(P.decoupled(), [(2, 2)],
                                        reference_grid=(4, 4))
        csv_text = verify.study_csv(rows)
        lines = csv_text.strip().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("N,M,Einf_L")
        table = verify.study_table(rows, P.decoupled())
        assert "self-convergence" in table

    def test_failed_row_is_isolated(self):
        rows = verify.convergence_study(P, [(1, 1), (4, 4)],
                                        reference_grid=(8, 8),
                                        fp_max_iter=400)
        assert len(rows) == 2
        ok = [r for r in rows if not r.failed]
        assert any(not r.failed for r in rows if (r.N, r.M) == (4, 4))
        csv_text = verify.study_csv(rows)
        assert csv_text.count("\n") == 3


class TestCrossMethod:
    def test_decoupled_agreement(self):
        s = build_setup(4, 4)
        pd = P.decoupled()
        zero = direct.ControlVector(np.zeros(4), pd.Kbound)
        st = direct.fixed_point_solve(zero, s, pd)
        sol = indirect.solve_indirect(s, pd, n_steps=100)
        d = verify.cross_method_diff(st, sol, zero)
        for key in ("L", "H", "F", "R", "control"):
            assert d[key] < 1e-10
        assert d["control_match_fraction"] == 1.0

    def test_generic_agreement(self):
        s = build_setup(8, 8)
        zero = direct.ControlVector(np.zeros(8), P.Kbound)
        st = direct.fixed_point_solve(zero, s, P, tol=1e-10, max_iter=400)
        sol = indirect.solve_indirect(s, P, n_steps=400)
        d = verify.cross_method_diff(st, sol, zero)
        assert d["R"] < 1e-3
        assert d["control_match_fraction"] == 1.0


class TestSweep:
    def test_decoupled_pair_trajectories_constant(self):
        s = build_setup(4, 4)
        pd = P.decoupled()
        rows = verify.control_effect_sweep([(pd.L0, pd.H0)], pd, s,
                                           nlp_options=NlpOptions(max_iter=2))
        row = rows[0]
        assert not row["failed"]
        assert np.allclose(row["R_uncontrolled"], pd.eps, atol=1e-12)
        assert np.allclose(row["R_controlled"], pd.eps, atol=1e-12)
        assert row["t"][0] == 0.0
        assert row["t"][-1] == pytest.approx(pd.T)

    def test_controlled_never_worse_at_terminal_time(self):
        s = build_setup(4, 4)
        rows = verify.control_effect_sweep(
            [(P.L0, P.H0)], P, s, nlp_options=NlpOptions(max_iter=3))
        row = rows[0]
        assert not row["failed"]
        # the optimizer may at worst return the zero control
        assert row["R_controlled"][-1] <= row["R_uncontrolled"][-1] + 1e-10

    def test_sweep_csv_schema(self):
        s = build_setup(4, 4)
        pd = P.decoupled()
        rows = verify.control_effect_sweep([(pd.L0, pd.H0)], pd, s,
                                           nlp_options=NlpOptions(max_iter=1))
        text = verify.sweep_csv(rows)
        lines = text.strip().splitlines()
        assert lines[0] == "L0,H0,tau,R_uncontrolled,R_controlled,status"
        assert len(lines) == 1 + 101

    def test_failed_pair_is_isolated(self):
        s = build_setup(4, 4)
        rows = verify.control_effect_sweep(
            [(-1.0, 0.005), (P.L0, P.H0)], P, s,
            nlp_options=NlpOptions(max_iter=1))
        assert rows[0]["failed"]
        assert not rows[1]["failed"]
