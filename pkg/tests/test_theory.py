import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from factorflow import dynamics, theory


class TestConstants:
    def test_c_n_range(self):
        for n in range(2, 12):
            assert 0 < theory.c_n(n) < 0.5

    def test_c_root_golden_ratio(self):
        assert theory.c_root(2) == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-14)

    @pytest.mark.parametrize("n", range(2, 11))
    def test_c_root_residual(self, n):
        c = theory.c_root(n)
        assert 1 < c < 2
        assert abs((c - 1) * c ** (n - 1) - 1) <= 1e-12

    def test_q_n_values(self):
        assert theory.q_n(4) == pytest.approx(0.0, abs=1e-15)
        assert theory.q_n(3) == pytest.approx(2 * math.pi / math.sqrt(3), abs=1e-12)

    @pytest.mark.parametrize("n", [3, 4, 5, 6, 8])
    def test_big_c_n_matches_quadrature(self, n):
        # independent oracle: C_N = N * int_0^{c_N^(1/N)} w/(1-w^N) dw
        #                          - (N/(N-2)) c_N^(2/N-1)
        cn = theory.c_n(n)
        j0 = quad(lambda w: w / (1.0 - w ** n), 0.0, cn ** (1.0 / n), limit=200)[0]
        expected = n * j0 - (n / (n - 2)) * cn ** (2.0 / n - 1.0)
        assert theory.big_c_n(n) == pytest.approx(expected, rel=1e-10)


class TestFlowTimePrimitives:
    def test_u_plus_log_of_one(self):
        assert theory.u_plus(1.0, 2 ** -0.5, 2) == pytest.approx(0.0, abs=1e-15)

    def test_t_plus_explicit_n2(self):
        t = theory.t_plus(1.0, 2 ** -0.5, 0.1, 2)
        assert t == pytest.approx(0.5 * math.log(99.0), rel=1e-14)

    def test_u_minus_difference(self):
        assert theory.u_minus(0.01, 2) - theory.u_minus(0.1, 2) == pytest.approx(
            math.log(10.0), rel=1e-14)

    def test_u_plus_outside_branch(self):
        with pytest.raises(theory.TheoryError, match="convergent branch"):
            theory.u_plus(1.0, 1.5, 2)

    @pytest.mark.parametrize("n,lam,alpha,mu", [
        (3, 8.0, 0.1, 1.0),
        (4, 1.0, 0.05, 0.6),
        (5, 2.0, 0.01, 1.0),
        (6, 1.0, 0.2, 0.9),
    ])
    def test_t_plus_matches_quadrature(self, n, lam, alpha, mu):
        # oracle: direct time integral of the flow ODE
        val, err = quad(lambda z: 1.0 / (z ** (n - 1) * (lam - z ** n)),
                        alpha, mu, limit=200)
        assert theory.t_plus(lam, mu, alpha, n) == pytest.approx(val, rel=1e-9)

    def test_t_plus_decreasing_branch(self):
        n, lam, alpha, mu = 3, 0.5, 1.2, 0.5 ** (1 / 3) + 0.05
        val = quad(lambda z: 1.0 / (z ** (n - 1) * (z ** n - lam)), mu, alpha, limit=200)[0]
        assert theory.t_plus(lam, mu, alpha, n) == pytest.approx(val, rel=1e-9)

    def test_t_plus_rejects_straddle(self):
        with pytest.raises(theory.TheoryError, match="straddle"):
            theory.t_plus(1.0, 1.5, 0.5, 3)

    @pytest.mark.parametrize("n", [3, 4, 5, 6])
    @pytest.mark.parametrize("lam", [1.0, 8.0])
    def test_real_form_equals_complex_form(self, n, lam):
        root = lam ** (1.0 / n)
        for mu_frac, a_frac in [(0.9, 0.05), (0.5, 0.2), (0.99, 0.5), (0.3, 0.01)]:
            mu, alpha = mu_frac * root, a_frac * root
            lhs = theory.u_plus_real(lam, mu, alpha, n)
            rhs = theory.t_plus(lam, mu, alpha, n)
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))

    def test_real_form_singular_point(self):
        with pytest.raises(theory.TheoryError, match="singular"):
            theory.u_plus_real(8.0, 8.0 ** (1 / 3), 0.1, 3)


class TestTIdentical:
    def test_negative_eigenvalue_case(self):
        b = theory.t_identical(-1.0, 0.01, 0.1, 1e-3, 2)
        assert b.case_tag == "negative"
        assert b.t_id == pytest.approx(1000.0 * math.log(10.0), rel=1e-12)

    def test_two_phase_case_composition(self):
        lam, alpha, eps, eta, n = 10.0, 0.1, 1e-3, 1e-3, 2
        b = theory.t_identical(lam, eps, alpha, eta, n)
        assert b.case_tag == "two_phase"
        rate = abs(math.log(1 - eta * n * (lam / 3.0)))
        expected = (theory.t_plus(lam, (lam / 3.0) ** 0.5, alpha, 2) / eta
                    + theory.s_n(lam, alpha, 2)
                    + (math.log(lam ** 0.5 / eps) - theory.a_n(2)) / rate)
        assert b.t_id == pytest.approx(expected, rel=1e-12)
        assert b.s_n == theory.s_n(lam, alpha, 2)
        assert b.diagnostics["t_id_without_s_n"] == pytest.approx(b.t_id - b.s_n)

    def test_decreasing_case(self):
        lam, alpha, eps, eta = 0.5, 1.0, 0.01, 0.05
        b = theory.t_identical(lam, eps, alpha, eta, 2)
        assert b.case_tag == "decreasing"
        # oracle: invert the explicit N=2 flow for the decreasing branch
        mu = lam ** 0.5 + eps
        t = 0.5 / lam * math.log(abs(lam / alpha ** 2 - 1) / abs(lam / mu ** 2 - 1))
        assert b.t_id == pytest.approx(t / eta, rel=1e-12)

    def test_fixed_point_is_immediate(self):
        b = theory.t_identical(0.25, 1e-3, 0.5, 1e-2, 2)  # lam = alpha^N exactly
        assert b.t_id == 0.0

    def test_epsilon_out_of_range(self):
        with pytest.raises(theory.TheoryError, match="epsilon out of range"):
            theory.t_identical(1.0, 0.95, 0.1, 1e-3, 2)

    def test_eta_out_of_range(self):
        with pytest.raises(theory.TheoryError, match="step size"):
            theory.t_identical(1.0, 0.01, 0.1, 0.5, 2)

    def test_lower_bound_attached_and_ordered(self):
        b = theory.t_identical(5.0, 1e-3, 0.1, 1e-3, 3)
        assert b.t_id_lower is not None
        assert b.t_id_lower <= b.t_id

    def test_lower_bound_concave_start_formula(self):
        lam, alpha, eps, eta = 1.0, 0.7, 0.01, 1e-3
        val = theory.t_identical_lower(lam, eps, alpha, eta, 2)
        rate = abs(math.log(1 - eta * 2 * (lam / 3.0)))
        assert val == pytest.approx(math.log((lam ** 0.5 - alpha) / eps) / rate, rel=1e-12)

    def test_lower_bound_requires_growth_regime(self):
        with pytest.raises(theory.TheoryError, match="lower bound undefined"):
            theory.t_identical_lower(0.5, 0.01, 1.0, 1e-3, 2)

    @pytest.mark.parametrize("n", [2, 3])
    @pytest.mark.parametrize("lam", [1.0, 5.0, 10.0])
    @pytest.mark.parametrize("alpha", [0.1, 0.01])
    def test_simulation_bracket(self, n, lam, alpha):
        eps = 1e-3
        eta = 0.5 * theory.stepsize_bound("thm23", lam, alpha, n)
        b = theory.t_identical(lam, eps, alpha, eta, n)
        traj = dynamics.run_scalar(lam, alpha, eta, n, eps,
                                   cap=int(b.t_id) + 10, record_every=1 << 30)
        assert traj.hit_index is not None
        assert b.t_id_lower <= traj.hit_index <= b.t_id

    def test_case_guards_partition_domain(self):
        # the five def-style guards must select exactly one case per sample
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = int(rng.integers(2, 6))
            lam = float(rng.uniform(-10, 10))
            alpha = float(10 ** rng.uniform(-3, 0.3))
            root = max(lam, 0.0) ** (1.0 / n)
            eps = float(rng.uniform(0, abs(alpha - root))) if alpha != root else 0.5
            if eps <= 0:
                continue
            cn = theory.c_n(n)
            guards = [
                lam < 0,
                0 <= lam < alpha ** n,
                0 < cn * lam < alpha ** n <= lam,
                cn * lam >= alpha ** n and lam >= alpha ** n
                and eps < (1 - cn ** (1.0 / n)) * lam ** (1.0 / n),
                cn * lam >= alpha ** n and lam >= alpha ** n
                and eps >= (1 - cn ** (1.0 / n)) * lam ** (1.0 / n),
            ]
            assert sum(guards) == 1

    def test_boundary_continuity(self):
        # case 3 <-> 4 boundary (alpha^N = c_N lam): values differ by at most
        # the single discrete step s_N = 1 plus a small relative slack
        n, alpha, eps, eta = 2, 0.5, 1e-2, 1e-3
        lam0 = alpha ** n / theory.c_n(n)
        lo = theory.t_identical(lam0 * (1 - 1e-6), eps, alpha, eta, n)
        hi = theory.t_identical(lam0 * (1 + 1e-6), eps, alpha, eta, n)
        assert lo.case_tag == "concave_start" and hi.case_tag == "two_phase"
        assert abs(hi.t_id - lo.t_id) <= 1.0 + 1e-3 * max(lo.t_id, hi.t_id)
        # case 4 <-> 5 boundary (eps = (1-c_N^(1/N)) lam^(1/N)): exactly continuous
        lam = 10.0
        eps0 = (1 - theory.c_n(n) ** (1.0 / n)) * lam ** (1.0 / n)
        lo = theory.t_identical(lam, eps0 * (1 - 1e-6), 0.1, eta, n)
        hi = theory.t_identical(lam, eps0 * (1 + 1e-6), 0.1, eta, n)
        assert lo.case_tag == "two_phase" and hi.case_tag == "convex_phase"
        assert abs(hi.t_id - lo.t_id) <= 1e-3 * max(lo.t_id, hi.t_id)


class TestTPerturbed:
    def test_t0_term_value(self):
        n, lam, alpha, beta, eta = 2, -1.0, 0.1, 0.05, 1e-3
        b = theory.t_perturbed(lam, 0.01, alpha, beta, eta, n)
        c = theory.c_root(n)
        factor = (9 * n - 2 * (c - 1)) / (9 * n) * beta * abs(lam) ** (1 / n)
        t0 = alpha / (eta * factor ** (n - 1) * (abs(lam) ** (1 / n) - beta / (c - 1)))
        assert b.diagnostics["t0"] == pytest.approx(t0, rel=1e-14)
        assert t0 == pytest.approx(2336.5, abs=0.5)
        assert b.t_perturbed == pytest.approx(
            theory.t_identical(1.0, 0.01, beta, eta, n).t_id + t0, rel=1e-12)

    def test_static_bounds_inside_alpha_band(self):
        assert theory.t_perturbed(0.3, 0.01, 1.0, 0.2, 1e-3, 2).error_bound == 1.0
        b = theory.t_perturbed(-0.3, 0.01, 1.0, 0.2, 1e-3, 2)
        assert b.error_bound == 2.0
        assert b.t_perturbed is None

    def test_positive_branch_uses_reduced_initialization(self):
        lam, alpha, beta, eta, n = 5.0, 0.1, 0.05, 1e-4, 3
        b = theory.t_perturbed(lam, 0.01, alpha, beta, eta, n)
        inner = theory.t_identical(lam, 0.01, alpha - beta, eta, n)
        assert b.t_perturbed == pytest.approx(inner.t_id, rel=1e-14)

    def test_validity_violations_are_warnings(self):
        # figure-style parameters violate the beta and eta validity conditions
        b = theory.t_perturbed(-5.0, 0.01, 0.1, 0.05, 1e-3, 3)
        assert b.t_perturbed is not None
        assert any("beta" in w for w in b.warnings)
        assert any("step size" in w for w in b.warnings)
        with pytest.raises(theory.TheoryError):
            theory.t_perturbed(-5.0, 0.01, 0.1, 0.05, 1e-3, 3, strict=True)

    def test_invalid_beta(self):
        with pytest.raises(theory.TheoryError):
            theory.t_perturbed(1.0, 0.01, 0.1, 0.2, 1e-3, 2)


class TestStepsizeBounds:
    def test_thm11_example(self):
        # M = sqrt(10): 1/((3N-2) M^2) = 1/(4*10)
        assert theory.stepsize_bound("thm11", 10.0 ** 0.5, 0.01, 2) == pytest.approx(0.025)

    def test_lemma22_flat_decay(self):
        n, alpha = 3, 1.5
        assert theory.stepsize_bound("lemma22", -1.0, alpha, n) == pytest.approx(
            alpha ** (-2 * n + 2))

    def test_thm12_with_root(self):
        n, m = 3, 2.0
        c = theory.c_root(n)
        assert theory.stepsize_bound("thm12", m, 0.1, n) == pytest.approx(
            1.0 / (9 * n * (c * m) ** (2 * n - 2)), rel=1e-12)
        assert c == pytest.approx(1.4655712318767682, abs=1e-12)

    def test_unknown_context(self):
        with pytest.raises(theory.TheoryError):
            theory.stepsize_bound("bogus", 1.0, 0.1, 2)


class TestDivergenceThreshold:
    def test_depth_one(self):
        assert theory.divergence_threshold(1.0, 0.5, 1) == 2.0

    def test_positive_instability(self):
        assert theory.divergence_threshold(4.0, 0.1, 2) == pytest.approx(0.25)

    def test_negative_divergence(self):
        assert theory.divergence_threshold(-1.0, 1.0, 2) == pytest.approx(1 + math.sqrt(2))

    def test_zero_errors(self):
        with pytest.raises(theory.TheoryError):
            theory.divergence_threshold(0.0, 0.1, 2)


class TestErrorBound:
    def test_positive(self):
        assert theory.error_bound(8.0, 0.1, 0.1, 3) == pytest.approx(1.2)

    def test_negative(self):
        assert theory.error_bound(-2.0, 0.1, 0.1, 3) == pytest.approx(1e-3)

    def test_perturbed_band(self):
        assert theory.error_bound(0.3, 0.01, 1.0, 2, "perturbed") == 1.0


class TestFlowPlateau:
    def eigs(self):
        w = np.zeros(200)
        w[:3] = [10.0, 5.0, 1.0]
        return w

    def test_rank_one_has_full_i1(self):
        win = theory.flow_plateau(self.eigs(), 1, epsilon=0.022, big_c=17.0, alpha=1e-2)
        assert win.flow_intervals["I1"][0][1] == math.inf
        assert len(win.flow_intervals["I1"]) == 1

    def test_figure_bounds_below_tenth(self):
        for rank in (1, 2, 3):
            win = theory.flow_plateau(self.eigs(), rank, epsilon=0.022, big_c=17.0,
                                      alpha=1e-2)
            assert win.flow_bound < 0.1
            assert win.flow_window, f"window empty for L={rank}"

    def test_i3_is_single_tail_interval(self):
        win = theory.flow_plateau(self.eigs(), 2, epsilon=0.022, big_c=17.0, alpha=1e-2)
        i3 = win.flow_intervals["I3"]
        assert len(i3) == 1 and i3[0][1] == math.inf
        # g is strictly decreasing, so the left edge solves g = C
        g = theory.FlowProfile(10.0, 1e-2)
        assert g(i3[0][0]) == pytest.approx(17.0, rel=1e-6)

    def test_profile_initial_value(self):
        g = theory.FlowProfile(10.0, 0.01)
        assert g(0.0) == pytest.approx(10.0 / 1e-4)

    def test_precondition_errors(self):
        with pytest.raises(theory.TheoryError):
            theory.flow_plateau(self.eigs(), 3, epsilon=0.02, big_c=17.0, alpha=1.5)
        with pytest.raises(theory.TheoryError):
            theory.flow_plateau(self.eigs(), 1, epsilon=0.02, big_c=0.5, alpha=1e-2)
        with pytest.raises(theory.TheoryError):
            theory.flow_plateau([1.0, -1.0], 1, epsilon=0.02, big_c=5.0, alpha=1e-2)


class TestGdPlateau:
    def eigs(self):
        w = np.zeros(200)
        w[:3] = [100.0, 10.0, 1.0]
        return w

    def test_figure_window_and_bound(self):
        win = theory.gd_plateau(self.eigs(), 1, epsilon=3e-2, epsilon_prime=6.4e-2,
                                alpha=5e-2, eta=1e-4, depth=2)
        assert win.gd_window is not None
        k_lo, k_hi = win.gd_window
        assert k_lo < k_hi
        assert win.gd_bound < 0.1

    def test_no_gap_empty_window(self):
        w = np.zeros(50)
        w[:3] = [10.0, 10.0, 1.0]
        win = theory.gd_plateau(w, 1, epsilon=1e-2, epsilon_prime=0.05,
                                alpha=1e-2, eta=1e-4, depth=2)
        assert win.gd_window is None
        assert win.diagnostics["window_empty"]

    def test_recommended_params_bound_terms(self):
        w = np.zeros(200)
        w[:3] = [10.0, 5.0, 1.0]
        for rank, n in [(2, 2), (1, 3)]:
            eps = 0.03
            eps_p, alpha = theory.recommended_params(w, rank, eps, n)
            assert 0 < eps_p < theory.c_n(n)
            assert alpha ** n <= eps_p * w[rank] * (1 + 1e-12)
            r_hat = w[:rank].sum() / w[0]
            term2 = 2 * (200 - rank) / theory.c_n(n) * (w[rank] / w[0]) * eps_p
            term3 = (200 - rank) * 2 * alpha ** n / (eps_p * w[0])
            assert term2 <= eps * r_hat * (1 + 1e-9)
            assert term3 <= eps * r_hat * (1 + 1e-9)
            eta = 0.5 / ((3 * n - 2) * max(alpha ** (n - 2), w[0] ** (2 - 2 / n)))
            win = theory.gd_plateau(w, rank, epsilon=eps, epsilon_prime=eps_p,
                                    alpha=alpha, eta=eta, depth=n)
            assert win.gd_bound <= 3 * eps * r_hat * (1 + 1e-9)

    def test_recommended_params_scaling(self):
        w = np.zeros(40)
        w[:3] = [10.0, 5.0, 1.0]
        n = 2
        eps_p1, a1 = theory.recommended_params(w, 2, 0.03, n)
        eps_p2, a2 = theory.recommended_params(2 * w, 2, 0.03, n)
        assert eps_p2 == pytest.approx(eps_p1, rel=1e-12)
        assert a2 == pytest.approx(2 ** (1 / n) * a1, rel=1e-12)

    def test_degenerate_tail(self):
        eps_p, alpha = theory.recommended_params([4.0, 2.0, 1.0], 2, 0.1, 2)
        assert eps_p > 0 and alpha > 0

    def test_precondition_errors(self):
        w = self.eigs()
        with pytest.raises(theory.TheoryError, match="epsilon'"):
            theory.gd_plateau(w, 1, epsilon=0.03, epsilon_prime=0.5, alpha=5e-2,
                              eta=1e-4, depth=2)
        with pytest.raises(theory.TheoryError, match="alpha"):
            theory.gd_plateau(w, 1, epsilon=0.03, epsilon_prime=6.4e-2, alpha=0.9,
                              eta=1e-4, depth=2)
        with pytest.raises(theory.TheoryError, match="step size"):
            theory.gd_plateau(w, 1, epsilon=0.03, epsilon_prime=6.4e-2, alpha=5e-2,
                              eta=1.0, depth=2)


class TestApproxTPlus:
    @pytest.mark.parametrize("n", [3, 4, 5])
    @pytest.mark.parametrize("kappa", [0.05, 0.1, 0.3])
    @pytest.mark.parametrize("xi", [1e-1, 1e-2])
    def test_within_envelope(self, n, kappa, xi):
        lam = 1.0
        alpha = xi * lam ** (1.0 / n)
        eta = kappa / (n * lam ** (2 - 2.0 / n))
        exact = theory.t_plus(lam, (theory.c_n(n) * lam) ** (1.0 / n), alpha, n) / eta
        value, envelope = theory.approx_t_plus(lam, lam, alpha, kappa, n)
        assert abs(value - exact) <= envelope + 1e-8 * exact

    def test_depth_two_rejected(self):
        with pytest.raises(theory.TheoryError, match="N >= 3"):
            theory.approx_t_plus(1.0, 1.0, 0.01, 0.1, 2)


class TestFlowConsistency:
    @given(st.floats(min_value=0.5, max_value=8.0), st.floats(min_value=0.05, max_value=0.4))
    @settings(max_examples=20, deadline=None)
    def test_t_plus_inverts_flow(self, lam, frac):
        n = 3
        alpha = frac * lam ** (1.0 / n) * 0.5
        mu = 0.8 * lam ** (1.0 / n)
        t = theory.t_plus(lam, mu, alpha, n)
        y = dynamics.flow_value(lam, alpha, n, t)
        assert abs(y - mu) <= 1e-8 * max(1.0, mu)
