import numpy as np
import pytest

from nbreserve import (
    Family,
    adjusted_profile_loglik,
    bias_correct,
    fit,
    maximize_adjusted_profile,
    nb_loglik,
    nb_mle,
    overdispersion_test,
    profile_kappa,
    to_long,
)
from nbreserve.dispersion import CHI2_1_95, KAPPA_CAP
from nbreserve.glm import build_design
from conftest import random_triangle


class TestBiasCorrect:
    def test_ratio_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            kappa = float(rng.uniform(0.1, 100))
            assert bias_correct(kappa, 55, 19) / kappa == pytest.approx(36 / 55, rel=1e-15)

    def test_known_value(self):
        assert bias_correct(4.8, 28, 13) == pytest.approx(2.5714285714285716, rel=1e-12)

    def test_identity_when_no_params(self):
        assert bias_correct(7.0, 10, 0) == 7.0

    def test_invalid_dof(self):
        with pytest.raises(ValueError):
            bias_correct(5.0, 10, 10)
        with pytest.raises(ValueError):
            bias_correct(5.0, 10, -1)


@pytest.fixture(scope="module")
def est(australian):
    return profile_kappa(to_long(australian))


@pytest.fixture(scope="module")
def report(australian):
    return overdispersion_test(to_long(australian))


class TestProfile:
    def test_mle(self, est):
        assert est.kappa_mle == pytest.approx(4.799976865655617, rel=1e-6)
        assert not est.at_boundary

    def test_adj_matches_closed_form(self, est):
        assert est.kappa_adj == pytest.approx(bias_correct(est.kappa_mle, 28, 13), rel=1e-12)
        assert est.n_obs == 28 and est.n_params == 13

    def test_ci(self, est):
        lo, hi = est.ci95
        assert lo == pytest.approx(2.7431469, rel=1e-5)
        assert hi == pytest.approx(7.7711233, rel=1e-5)

    def test_ci_inverts_likelihood_ratio(self, est, australian):
        # both endpoints sit where the profile drops by the 95% chi-square cut
        recs = to_long(australian)

        def prof(k):
            m = fit(recs, Family.negbin(k))
            return nb_loglik(m.y, m.fitted_mu, k)

        for bound in est.ci95:
            assert 2 * (est.loglik - prof(bound)) == pytest.approx(CHI2_1_95, abs=1e-4)

    def test_curve_contains_markers(self, est):
        kappas = est.profile_curve[:, 0]
        for point in (est.kappa_mle, *est.ci95):
            assert np.any(np.isclose(kappas, point, rtol=1e-9))

    def test_curve_max_at_mle(self, est):
        curve = est.profile_curve
        assert curve[np.argmax(curve[:, 1]), 0] == est.kappa_mle
        assert np.all(np.diff(curve[:, 0]) > 0)

    def test_loglik_frozen(self, est):
        assert est.loglik == pytest.approx(-184.99058963515932, rel=1e-9)

    def test_record_order_invariant(self, australian):
        # row order shifts the IRLS path at roundoff level, and near the
        # optimum the flat profile amplifies that into the 7th decimal
        recs = to_long(australian)
        est1 = profile_kappa(recs)
        est2 = profile_kappa(recs[::-1])
        assert est2.kappa_mle == pytest.approx(est1.kappa_mle, rel=1e-5)
        assert est2.loglik == pytest.approx(est1.loglik, abs=1e-9)


class TestBoundary:
    def test_poisson_data_hits_cap(self):
        rng = np.random.default_rng(101)
        t = random_triangle(rng, 7)
        est = profile_kappa(to_long(t))
        assert est.at_boundary
        assert est.kappa_mle == KAPPA_CAP
        assert est.ci95[1] == KAPPA_CAP


class TestJointMle:
    def test_agrees_with_profile(self, australian):
        recs = to_long(australian)
        est = profile_kappa(recs)
        y = np.array([r.count for r in recs], dtype=float)
        design = build_design([r.ay for r in recs], [r.dy for r in recs])
        coef, mu, kappa, at_boundary = nb_mle(y, design)
        assert not at_boundary
        assert kappa == pytest.approx(est.kappa_mle, rel=1e-4)
        assert nb_loglik(y, mu, kappa) == pytest.approx(est.loglik, abs=1e-6)

    def test_poisson_data_boundary(self):
        rng = np.random.default_rng(103)
        t = random_triangle(rng, 6)
        recs = to_long(t)
        y = np.array([r.count for r in recs], dtype=float)
        design = build_design([r.ay for r in recs], [r.dy for r in recs])
        _, _, kappa, at_boundary = nb_mle(y, design)
        assert at_boundary
        assert kappa == KAPPA_CAP


class TestSelection:
    def test_statistic_frozen(self, report):
        assert report.statistic == pytest.approx(2550.0684, abs=0.01)
        assert report.p_value < 1e-300

    def test_statistic_is_twice_loglik_gap(self, report):
        gap = 2 * (report.loglik_nb - report.loglik_poisson)
        assert report.statistic == pytest.approx(gap, rel=1e-12)

    def test_information_criteria(self, report):
        # 13 mean parameters, plus kappa for the negative binomial
        n = 28
        assert report.aic_poisson == pytest.approx(2 * 13 - 2 * report.loglik_poisson, rel=1e-12)
        assert report.aic_nb == pytest.approx(2 * 14 - 2 * report.loglik_nb, rel=1e-12)
        assert report.bic_poisson == pytest.approx(13 * np.log(n) - 2 * report.loglik_poisson, rel=1e-12)
        assert report.bic_nb == pytest.approx(14 * np.log(n) - 2 * report.loglik_nb, rel=1e-12)
        assert report.aic_nb < report.aic_poisson

    def test_equidispersed_data_boundary_pvalue(self):
        # Poisson data: the statistic collapses and the boundary mixture
        # puts half its mass at zero
        rng = np.random.default_rng(107)
        t = random_triangle(rng, 7)
        rep = overdispersion_test(to_long(t))
        assert rep.statistic >= 0.0
        assert rep.p_value > 0.05


class TestAdjustedProfile:
    def test_penalty_lowers_loglik(self, australian):
        recs = to_long(australian)
        est = profile_kappa(recs)
        adj = adjusted_profile_loglik(recs, est.kappa_mle)
        assert adj < est.loglik

    def test_maximizer_between_adj_and_mle(self, australian):
        recs = to_long(australian)
        est = profile_kappa(recs)
        kappa_cr = maximize_adjusted_profile(recs)
        assert kappa_cr == pytest.approx(2.81287, abs=1e-3)
        assert est.kappa_adj < kappa_cr < est.kappa_mle


class TestTaylorAshe:
    def test_kappa(self, taylor):
        est = profile_kappa(to_long(taylor))
        assert est.kappa_mle == pytest.approx(13.8347, abs=0.001)
        assert est.kappa_adj == pytest.approx(bias_correct(est.kappa_mle, 55, 19), rel=1e-12)
        assert not est.at_boundary
