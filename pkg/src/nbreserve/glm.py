"""Two-way cross-classified count GLM with a log link.

The model is log mu[i, j] = alpha_i + beta_j over accident-year and
development-year factors, fitted by iteratively reweighted least
squares (IRLS) under Poisson, quasi-Poisson, or fixed-dispersion
negative binomial families. The negative binomial uses the
mean-dispersion parameterisation E[N] = mu, Var[N] = mu + mu^2 / kappa,
so kappa -> infinity recovers the Poisson.

Fits are computed under treatment contrasts (first accident year and
development year 0 as baselines) and re-expressed on the simplex scale,
where the development effects exponentiate to weights summing to one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import NotConvergedError, RankDeficientError, SeparationError

# Linear predictors are clipped here before exponentiation; exp(+-500)
# stays finite in float64 while leaving real fits untouched.
_ETA_BOUND = 500.0

_CONDITION_WARN = 1e3


class ConditioningWarning(UserWarning):
    """Weighted information matrix is poorly conditioned."""


@dataclass(frozen=True)
class Family:
    """Distributional family for the count GLM.

    ``tag`` is one of ``poisson``, ``quasipoisson``, ``negbin``;
    ``kappa`` is the fixed dispersion for the negative binomial.
    """

    tag: str
    kappa: Optional[float] = None

    @classmethod
    def poisson(cls) -> "Family":
        return cls("poisson")

    @classmethod
    def quasi_poisson(cls) -> "Family":
        return cls("quasipoisson")

    @classmethod
    def negbin(cls, kappa: float) -> "Family":
        if not kappa > 0:
            raise ValueError(f"kappa must be positive, got {kappa}")
        return cls("negbin", float(kappa))

    def variance(self, mu: np.ndarray) -> np.ndarray:
        if self.tag == "negbin":
            return mu + mu * mu / self.kappa
        return mu

    def working_weight(self, mu: np.ndarray) -> np.ndarray:
        # (dmu/deta)^2 / V(mu) for the log link
        if self.tag == "negbin":
            return mu * self.kappa / (self.kappa + mu)
        return mu

    def deviance(self, y: np.ndarray, mu: np.ndarray) -> float:
        if self.tag == "negbin":
            k = self.kappa
            return float(2.0 * np.sum(xlogy(y, y / mu) - (y + k) * np.log((y + k) / (mu + k))))
        return float(2.0 * np.sum(xlogy(y, y / mu) - (y - mu)))


def poisson_loglik(counts, mu) -> float:
    """Poisson log-likelihood of ``counts`` at cell means ``mu``."""
    y = _as_counts(counts)
    mu = np.asarray(mu, dtype=float)
    return float(np.sum(xlogy(y, mu) - mu - gammaln(y + 1.0)))


def nb_loglik(counts, mu, kappa: float) -> float:
    """Negative binomial log-likelihood in the mean-dispersion form.

    Uses log1p(mu / kappa) so the Poisson limit is reached cleanly as
    kappa grows toward the search cap.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    y = _as_counts(counts)
    mu = np.asarray(mu, dtype=float)
    ratio = np.log1p(mu / kappa)
    return float(
        np.sum(
            gammaln(y + kappa)
            - gammaln(kappa)
            - gammaln(y + 1.0)
            - (y + kappa) * ratio
            + xlogy(y, mu / kappa)
        )
    )


def _as_counts(counts) -> np.ndarray:
    """Accept an array of counts or a sequence of CellRecord-like triples."""
    if len(counts) and hasattr(counts[0], "count"):
        return np.array([r.count for r in counts], dtype=float)
    return np.asarray(counts, dtype=float)


@dataclass(frozen=True)
class Design:
    """Indicator design for the two-way layout, built from factor indices."""

    ay_idx: np.ndarray  # 0-based accident-year level per cell
    dy_idx: np.ndarray  # 0-based development-year level per cell
    n_ay: int
    n_dy: int
    X: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def build_design(ay: Sequence[int], dy: Sequence[int], n_ay: Optional[int] = None, n_dy: Optional[int] = None) -> Design:
    """Build the treatment-contrast design for given factor levels.

    Columns: intercept, accident years 2..I, development years 1..J-1,
    so p = 1 + (I - 1) + (J - 1).
    """
    ay_idx = np.asarray(ay, dtype=np.int64) - 1
    dy_idx = np.asarray(dy, dtype=np.int64)
    if ay_idx.min(initial=0) < 0 or dy_idx.min(initial=0) < 0:
        raise ValueError("accident years are 1-based, development years 0-based")
    n_ay = int(n_ay) if n_ay is not None else int(ay_idx.max()) + 1
    n_dy = int(n_dy) if n_dy is not None else int(dy_idx.max()) + 1
    n = len(ay_idx)
    p = 1 + (n_ay - 1) + (n_dy - 1)
    X = np.zeros((n, p))
    X[:, 0] = 1.0
    rows = np.arange(n)
    mask_a = ay_idx > 0
    X[rows[mask_a], ay_idx[mask_a]] = 1.0
    mask_b = dy_idx > 0
    X[rows[mask_b], n_ay - 1 + dy_idx[mask_b]] = 1.0
    return Design(ay_idx=ay_idx, dy_idx=dy_idx, n_ay=n_ay, n_dy=n_dy, X=X)


def _irls(
    y: np.ndarray,
    design: Design,
    family: Family,
    start: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> Tuple[np.ndarray, np.ndarray, float, List[float], bool, int]:
    """Fisher-scoring IRLS with step halving.

    Returns (coef, mu, deviance, deviance_path, converged, n_iter).
    Convergence requires two consecutive relative deviance changes below
    ``tol``; the extra polishing step leaves the score at essentially
    machine-level precision.
    """
    X = design.X
    if start is not None:
        coef = np.asarray(start, dtype=float).copy()
        eta = np.clip(X @ coef, -_ETA_BOUND, _ETA_BOUND)
    else:
        coef = None
        eta = np.log(y + 0.5)
    mu = np.exp(np.clip(eta, -_ETA_BOUND, _ETA_BOUND))
    dev = family.deviance(y, mu) if coef is not None else np.inf
    dev_path: List[float] = []
    converged = False
    small_steps = 0
    n_iter = 0

    for n_iter in range(1, max_iter + 1):
        w = family.working_weight(mu)
        z = eta + (y - mu) / mu
        A = (X * w[:, None]).T @ X
        b = X.T @ (w * z)
        try:
            proposal = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise RankDeficientError(f"weighted normal equations singular: {exc}") from None

        if coef is None:
            coef = proposal
        else:
            # step halving keeps the deviance non-increasing
            cand = proposal
            accepted = False
            for _ in range(30):
                eta_c = np.clip(X @ cand, -_ETA_BOUND, _ETA_BOUND)
                dev_c = family.deviance(y, np.exp(eta_c))
                if np.isfinite(dev_c) and dev_c <= dev * (1.0 + 1e-13) + 1e-13:
                    accepted = True
                    break
                cand = 0.5 * (cand + coef)
            if not accepted:
                # no descent direction left: already at the optimum
                converged = True
                break
            coef = cand

        eta = np.clip(X @ coef, -_ETA_BOUND, _ETA_BOUND)
        mu = np.exp(eta)
        dev_new = family.deviance(y, mu)
        dev_path.append(dev_new)
        if np.isfinite(dev):
            rel = abs(dev - dev_new) / (abs(dev_new) + 0.1)
            small_steps = small_steps + 1 if rel < tol else 0
            if small_steps >= 2:
                dev = dev_new
                converged = True
                break
        dev = dev_new

    return coef, mu, dev, dev_path, converged, n_iter


@dataclass(frozen=True)
class ModelFit:
    """Fitted two-way count GLM.

    Effects are stored in both parameterisations. ``intercept``,
    ``ay_effects`` (accident years 2..I) and ``dy_effects``
    (development years 1..J-1) are the treatment contrasts;
    ``simplex_alpha`` and ``simplex_beta`` satisfy
    sum_j exp(simplex_beta[j]) = 1 with exp(simplex_alpha[i]) the
    expected ultimate for accident year i.
    """

    family: Family
    n_ay: int
    n_dy: int
    ay: np.ndarray
    dy: np.ndarray
    y: np.ndarray
    intercept: float
    ay_effects: np.ndarray
    dy_effects: np.ndarray
    simplex_alpha: np.ndarray
    simplex_beta: np.ndarray
    dev_weights: np.ndarray
    fitted_mu: np.ndarray
    loglik: float
    deviance: float
    deviance_path: Tuple[float, ...]
    phi: Optional[float]
    n_obs: int
    n_params: int
    converged: bool
    n_iter: int
    condition_number: float

    def mu_at(self, ay: int, dy: int) -> float:
        """Fitted mean for any cell of the layout, observed or future."""
        if not (1 <= ay <= self.n_ay and 0 <= dy < self.n_dy):
            raise KeyError(f"cell ({ay}, {dy}) outside the fitted layout")
        return float(np.exp(self.simplex_alpha[ay - 1] + self.simplex_beta[dy]))

    def coefficients(self) -> np.ndarray:
        return np.concatenate(([self.intercept], self.ay_effects, self.dy_effects))


def _simplex_from_contrasts(
    intercept: float, ay_effects: np.ndarray, dy_effects: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    full_beta = np.concatenate(([0.0], dy_effects))
    log_s = float(np.log(np.sum(np.exp(full_beta))))
    alpha = intercept + np.concatenate(([0.0], ay_effects)) + log_s
    beta = full_beta - log_s
    return alpha, beta, np.exp(beta)


def to_simplex(fit: ModelFit) -> ModelFit:
    """Return a fit whose simplex fields are (re)derived from the contrasts.

    ``fit`` already carries the simplex parameterisation; this op exists
    so the conversion is available as an explicit, testable step.
    """
    alpha, beta, weights = _simplex_from_contrasts(fit.intercept, fit.ay_effects, fit.dy_effects)
    return ModelFit(
        **{
            **fit.__dict__,
            "simplex_alpha": alpha,
            "simplex_beta": beta,
            "dev_weights": weights,
        }
    )


def _check_levels(y: np.ndarray, design: Design) -> None:
    for name, idx, size in (
        ("accident year", design.ay_idx, design.n_ay),
        ("development year", design.dy_idx, design.n_dy),
    ):
        present = np.bincount(idx, minlength=size)
        if np.any(present == 0):
            lvl = int(np.argmin(present != 0))
            raise RankDeficientError(f"{name} level {lvl} has no observations")
        totals = np.bincount(idx, weights=y, minlength=size)
        if np.any(totals == 0):
            lvl = int(np.argmax(totals == 0))
            raise SeparationError(
                f"{name} level {lvl} has all-zero counts; its coefficient diverges"
            )


def fit(
    data: Sequence,
    family: Family,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> ModelFit:
    """Fit the two-way log-link count model by IRLS.

    Args:
        data: long-format records with ``ay`` (1-based), ``dy``
            (0-based) and ``count`` fields, for example
            ``triangle.to_long(t)``.
        family: Poisson, quasi-Poisson, or fixed-kappa negative binomial.

    Raises:
        SeparationError: a factor level has all-zero counts.
        RankDeficientError: a factor level is absent or the normal
            equations are singular.
        NotConvergedError: iteration budget exhausted.
    """
    ay = np.array([r.ay for r in data], dtype=np.int64)
    dy = np.array([r.dy for r in data], dtype=np.int64)
    y = np.array([r.count for r in data], dtype=float)
    if np.any(y < 0):
        raise ValueError("counts must be nonnegative")
    design = build_design(ay, dy)
    if design.n < design.p:
        raise RankDeficientError(
            f"{design.n} observations cannot identify {design.p} parameters"
        )
    _check_levels(y, design)

    irls_family = Family.poisson() if family.tag == "quasipoisson" else family
    coef, mu, dev, dev_path, converged, n_iter = _irls(
        y, design, irls_family, tol=tol, max_iter=max_iter
    )
    if not converged:
        raise NotConvergedError(f"IRLS did not converge in {max_iter} iterations")

    w = irls_family.working_weight(mu)
    info = (design.X * w[:, None]).T @ design.X
    condition = float(np.linalg.cond(info))
    if condition > _CONDITION_WARN:
        warnings.warn(
            f"weighted information condition number {condition:.3g} exceeds {_CONDITION_WARN:.0e}",
            ConditioningWarning,
            stacklevel=2,
        )

    intercept = float(coef[0])
    ay_effects = coef[1 : design.n_ay]
    dy_effects = coef[design.n_ay :]
    alpha, beta, weights = _simplex_from_contrasts(intercept, ay_effects, dy_effects)

    phi = None
    if family.tag == "negbin":
        ll = nb_loglik(y, mu, family.kappa)
    else:
        ll = poisson_loglik(y, mu)
    fitted = ModelFit(
        family=family,
        n_ay=design.n_ay,
        n_dy=design.n_dy,
        ay=ay,
        dy=dy,
        y=y,
        intercept=intercept,
        ay_effects=ay_effects,
        dy_effects=dy_effects,
        simplex_alpha=alpha,
        simplex_beta=beta,
        dev_weights=weights,
        fitted_mu=mu,
        loglik=ll,
        deviance=dev,
        deviance_path=tuple(dev_path),
        phi=phi,
        n_obs=design.n,
        n_params=design.p,
        converged=converged,
        n_iter=n_iter,
        condition_number=condition,
    )
    if family.tag == "quasipoisson":
        fitted = ModelFit(**{**fitted.__dict__, "phi": pearson_dispersion(fitted)})
    return fitted


def pearson_dispersion(fit: ModelFit) -> float:
    """Pearson dispersion phi = sum((y - mu)^2 / mu) / (n - p).

    Only defined for Poisson-family fits. A saturated fit with all-zero
    residuals reports phi = 0 even when n == p.
    """
    if fit.family.tag == "negbin":
        raise ValueError("Pearson dispersion applies to Poisson-family fits")
    ss = float(np.sum((fit.y - fit.fitted_mu) ** 2 / fit.fitted_mu))
    if ss == 0.0:
        return 0.0
    dof = fit.n_obs - fit.n_params
    if dof <= 0:
        raise ValueError("Pearson dispersion undefined: no residual degrees of freedom")
    return ss / dof


def score(fit: ModelFit) -> np.ndarray:
    """Analytic score vector of the log-likelihood at the fitted coefficients."""
    design = build_design(fit.ay, fit.dy, fit.n_ay, fit.n_dy)
    mu = fit.fitted_mu
    if fit.family.tag == "negbin":
        k = fit.family.kappa
        resid = k * (fit.y - mu) / (k + mu)
    else:
        resid = fit.y - mu
    return design.X.T @ resid
