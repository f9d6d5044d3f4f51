"""End-to-end acceptance checks.

Each test prints one line naming the criterion it guards; running
``pytest -v tests/test_acceptance.py`` therefore yields one pass/fail
line per criterion. Expensive runs (the B=5000 bootstrap and the two
coverage studies) are module-scoped fixtures shared across checks.
"""

import dataclasses
import time

import numpy as np
import pytest
from scipy import stats

from nbreserve import (
    Family,
    bias_correct,
    bootstrap,
    chain_ladder,
    default_config,
    fit,
    nb_loglik,
    overdispersion_test,
    poisson_loglik,
    profile_kappa,
    run_study,
    sample_nb,
    summarize,
    to_long,
)
from nbreserve.glm import build_design, score
from nbreserve._rng import substream
from conftest import random_triangle


def report(num: int, ok: bool, detail: str) -> None:
    print(f"criterion {num:02d} [{'PASS' if ok else 'FAIL'}] {detail}")
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(scope="module")
def australian_bootstrap(australian):
    start = time.perf_counter()
    dist = bootstrap(australian, b=5000, seed=0, workers=1)
    return dist, time.perf_counter() - start


@pytest.fixture(scope="module")
def desk_study():
    return run_study(default_config(kappa_true=10.0, n_sim=50, b=200, seed=0))


@pytest.fixture(scope="module")
def poisson_study():
    return run_study(
        default_config(scenario="poisson", n_sim=50, b=200, seed=0),
        methods=("nb_corrected",),
    )


def binomial_band(n: int, p: float) -> tuple:
    lo, hi = stats.binom.interval(0.95, n, p)
    return lo / n, hi / n


def test_criterion_01_australian_dispersion_fit(australian):
    start = time.perf_counter()
    recs = to_long(australian)
    est = profile_kappa(recs)
    rep = overdispersion_test(recs)
    elapsed = time.perf_counter() - start

    ok = (
        4.7 <= est.kappa_mle <= 4.9
        and abs(est.ci95[0] - 2.8) <= 0.2
        and abs(est.ci95[1] - 7.7) <= 0.2
        and abs(rep.statistic - 2550.1) <= 0.01 * 2550.1
        and round(est.kappa_adj, 1) == 2.6
        and elapsed < 1.0
    )
    report(
        1,
        ok,
        f"dispersion fit: kappa {est.kappa_mle:.4f}, CI [{est.ci95[0]:.3f}, {est.ci95[1]:.3f}], "
        f"LRT {rep.statistic:.1f}, adj {est.kappa_adj:.3f}, {elapsed * 1e3:.0f} ms",
    )


def test_criterion_02_chain_ladder_table(australian):
    start = time.perf_counter()
    res = chain_ladder(australian)
    elapsed = time.perf_counter() - start

    per_ay = res.rounded_reserves.tolist()
    ok = (
        per_ay == [0, 53, 293, 657, 1205, 966, 17]
        and res.rounded_total == 3191
        and elapsed < 0.1
    )
    report(2, ok, f"per-AY reserves {per_ay[1:]}, total {res.rounded_total}, {elapsed * 1e3:.2f} ms")


def test_criterion_03_poisson_limit_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        t = random_triangle(rng, int(rng.integers(4, 9)))
        cl = chain_ladder(t).total_reserve
        model = fit(to_long(t), Family.poisson())
        future = sum(
            model.mu_at(i, j)
            for i in range(1, t.dimension + 1)
            for j in range(t.dimension - i + 1, t.dimension)
        )
        worst = max(worst, abs(future - cl) / cl)
    elapsed = time.perf_counter() - start

    ok = worst < 1e-8 and elapsed < 10.0
    report(3, ok, f"GLM vs chain-ladder on 100 triangles: worst rel diff {worst:.2e}, {elapsed:.1f} s")


def test_criterion_04_bootstrap_interval(australian_bootstrap):
    dist, elapsed = australian_bootstrap
    (s,) = summarize(dist, levels=(0.95,))

    ok = (
        abs(s.lower - 1563) <= 0.1 * 1563
        and abs(s.upper - 7785) <= 0.1 * 7785
        and abs(s.cv_percent - 42.5) <= 3.0
        and elapsed < 120.0
    )
    report(
        4,
        ok,
        f"B=5000 bootstrap: 95% interval [{s.lower:.0f}, {s.upper:.0f}], "
        f"CV {s.cv_percent:.1f}%, {dist.refit_failures} refit failures, {elapsed:.0f} s",
    )


def test_criterion_05_taylor_ashe_benchmark(taylor):
    est = profile_kappa(to_long(taylor))
    point = chain_ladder(taylor).total_reserve
    dist = bootstrap(taylor, b=2000, seed=0, workers=1)
    (s,) = summarize(dist, levels=(0.95,))

    ok = (
        abs(est.kappa_mle - 13.8) <= 0.5
        and abs(point - 18.68e6) <= 0.005 * 18.68e6
        and abs(s.lower - 13_288_238) <= 0.1 * 13_288_238
        and abs(s.upper - 24_447_436) <= 0.1 * 24_447_436
    )
    report(
        5,
        ok,
        f"Taylor-Ashe: kappa {est.kappa_mle:.2f}, point {point / 1e6:.3f}M, "
        f"interval [{s.lower:.0f}, {s.upper:.0f}]",
    )


def test_criterion_06_mixture_identity():
    start = time.perf_counter()
    n = 1_000_000
    worst_p = 1.0
    for mi, mu in enumerate((1.0, 5.0, 20.0)):
        for ki, kappa in enumerate((0.5, 2.0, 10.0)):
            rng = substream(2026, 6, mi, ki)
            x = sample_nb(mu, kappa, rng, size=n)
            hi = int(x.max())
            expected = n * stats.nbinom.pmf(np.arange(hi + 1), kappa, kappa / (kappa + mu))
            observed = np.bincount(x, minlength=hi + 1).astype(float)
            # merge the sparse tail so every expected bin count is >= 5
            cut = np.nonzero(expected >= 5)[0][-1] + 1
            obs_b = np.append(observed[:cut], observed[cut:].sum())
            exp_b = np.append(expected[:cut], n - expected[:cut].sum())
            chi2 = float(((obs_b - exp_b) ** 2 / exp_b).sum())
            worst_p = min(worst_p, float(stats.chi2.sf(chi2, len(obs_b) - 1)))
    elapsed = time.perf_counter() - start

    ok = worst_p > 0.01 and elapsed < 60.0
    report(6, ok, f"Gamma-Poisson sampler vs closed-form pmf on 9 grid points: min p {worst_p:.3f}, {elapsed:.1f} s")


def test_criterion_07_desk_scale_coverage_bands(desk_study):
    res = {m.method: m for m in desk_study.methods}
    lo, hi = binomial_band(50, 0.94)
    corrected = res["nb_corrected"]
    mle = res["nb_mle"]
    pois = res["poisson"]

    ok = (
        lo <= corrected.coverage[0.95] <= hi
        and pois.coverage[0.95] < 0.50
        and corrected.mean_width[0.95] > mle.mean_width[0.95]
    )
    report(
        7,
        ok,
        f"kappa=10 study: corrected cov95 {corrected.coverage[0.95]:.2f} in [{lo:.2f}, {hi:.2f}], "
        f"poisson cov95 {pois.coverage[0.95]:.2f}, "
        f"widths {corrected.mean_width[0.95]:.0f} > {mle.mean_width[0.95]:.0f}",
    )


def test_criterion_08_poisson_dgp_boundary(poisson_study):
    (m,) = poisson_study.methods
    lo, hi = binomial_band(50, 0.95)

    ok = (
        m.mean_kappa > 1e6
        and m.at_boundary_fraction >= 0.95
        and lo <= m.coverage[0.95] <= hi
    )
    report(
        8,
        ok,
        f"Poisson DGP: mean kappa {m.mean_kappa:.3g}, boundary fraction {m.at_boundary_fraction:.2f}, "
        f"cov95 {m.coverage[0.95]:.2f} in [{lo:.2f}, {hi:.2f}]",
    )


def test_criterion_09_bias_correction_arithmetic():
    rng = np.random.default_rng(9)
    kappas = rng.uniform(0.05, 500.0, size=50)
    ratio_ok = all(
        bias_correct(k, 55, 19) / k == pytest.approx(36 / 55, rel=1e-15) for k in kappas
    )
    value = bias_correct(4.8, 28, 13)

    ok = ratio_ok and value == pytest.approx(2.571, abs=5e-4)
    report(9, ok, f"(n-p)/n shrinkage: ratio exact, bias_correct(4.8, 28, 13) = {value:.4f}")


def test_criterion_10_property_suites(australian_bootstrap, australian):
    rng = np.random.default_rng(10)
    checks = {}

    # IRLS deviance monotonicity and simplex invariance on random data
    mono, simplex = True, True
    for _ in range(10):
        t = random_triangle(rng, int(rng.integers(3, 9)))
        model = fit(to_long(t), Family.poisson())
        path = np.asarray(model.deviance_path)
        mono &= bool(np.all(np.diff(path) <= 1e-9 * max(1.0, path[0])))
        mu = np.array([model.mu_at(i, j) for i, j in zip(model.ay, model.dy)])
        simplex &= bool(np.allclose(mu, model.fitted_mu, rtol=1e-12))
    checks["irls_monotone"] = mono
    checks["simplex_invariant"] = simplex

    # analytic score against central finite differences
    model = fit(to_long(australian), Family.negbin(3.0))
    X = build_design(model.ay, model.dy, model.n_ay, model.n_dy).X
    h, fd_ok = 1e-5, True
    for _ in range(5):
        theta = model.coefficients() + rng.normal(0, 0.1, size=model.n_params)
        probe = dataclasses.replace(model, fitted_mu=np.exp(X @ theta))
        analytic = score(probe)
        for k in rng.choice(model.n_params, size=4, replace=False):
            e = np.zeros(model.n_params)
            e[k] = h
            up = nb_loglik(model.y, np.exp(X @ (theta + e)), 3.0)
            dn = nb_loglik(model.y, np.exp(X @ (theta - e)), 3.0)
            fd = (up - dn) / (2 * h)
            fd_ok &= bool(abs(analytic[k] - fd) <= 1e-4 * max(1.0, abs(fd)))
    checks["score_fd"] = fd_ok

    # interval nesting on the shared B=5000 distribution
    dist, _ = australian_bootstrap
    rows = summarize(dist, levels=(0.5, 0.75, 0.9, 0.95))
    nested = all(
        outer.lower <= inner.lower <= inner.upper <= outer.upper
        for inner, outer in zip(rows, rows[1:])
    )
    checks["interval_nesting"] = nested

    # identical draws whatever the worker count
    base = bootstrap(australian, b=400, seed=11, workers=1)
    same = all(
        np.array_equal(bootstrap(australian, b=400, seed=11, workers=w).draws_total, base.draws_total)
        for w in (2, 3)
    )
    checks["worker_determinism"] = same

    ok = all(checks.values())
    report(10, ok, "property suites: " + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()))
