"""Predictive reserve distributions via parametric bootstrap.

The bootstrap propagates both estimation and process error: each
replicate resimulates the observed triangle from the fitted negative
binomial law, refits the model (re-estimating and re-correcting the
dispersion), and then simulates the future cells from the refitted
parameters. Reserve draws are sums over future cells; zero draws are
legitimate outcomes for thin accident years and are retained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _bootstrap
from .chainladder import chain_ladder
from .dispersion import KAPPA_CAP, bias_correct, nb_mle, _prepare
from .errors import BaseFitFailedError, ExcessiveFailuresError, ReservingError, TooFewDrawsError
from .glm import ModelFit
from .triangle import RunOffTriangle, to_long

# share of failed refits tolerated before the run is abandoned
_MAX_FAILURE_FRACTION = 0.2

_MIN_DRAWS = 100


def sample_nb(mu, kappa, rng: np.random.Generator, size=None) -> np.ndarray:
    """Sample negative binomial counts through the gamma-Poisson mixture.

    Draws lambda ~ Gamma(shape=kappa, rate=kappa / mu) and then
    Poisson(lambda), which has mean mu and variance mu + mu^2 / kappa.
    ``mu`` and ``kappa`` broadcast; a scalar kappa at or above the
    search cap short-circuits to a plain Poisson draw.
    """
    mu = np.asarray(mu, dtype=float)
    if np.isscalar(kappa) or np.ndim(kappa) == 0:
        kappa = float(kappa)
        if not kappa > 0:
            raise ValueError(f"kappa must be positive, got {kappa}")
        if math.isinf(kappa) or kappa >= KAPPA_CAP:
            return rng.poisson(mu, size=size)
        lam = rng.gamma(kappa, mu / kappa, size=size)
        return rng.poisson(lam)
    kappa = np.asarray(kappa, dtype=float)
    if not np.all(kappa > 0) or not np.all(np.isfinite(kappa)):
        raise ValueError("kappa entries must be positive and finite")
    shape = np.broadcast_shapes(mu.shape, kappa.shape) if size is None else size
    lam = rng.gamma(np.broadcast_to(kappa, shape), np.broadcast_to(mu / kappa, shape))
    return rng.poisson(lam)


@dataclass(frozen=True)
class CellPrediction:
    """Plug-in predictive law for one future cell."""

    ay: int
    dy: int
    mean: float
    variance: float
    kappa: float

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return sample_nb(self.mean, self.kappa, rng, size=size)


def plugin_predict(fit: ModelFit, kappa: float) -> List[CellPrediction]:
    """Predictive handles for every future cell of a fitted triangle.

    ``kappa`` at or above the search cap is treated as the Poisson
    limit, where each cell variance equals its mean.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    I = fit.n_ay
    out = []
    for i in range(1, I + 1):
        for j in range(fit.n_dy):
            if i + j <= I:
                continue
            mu = fit.mu_at(i, j)
            var = mu if (math.isinf(kappa) or kappa >= KAPPA_CAP) else mu + mu * mu / kappa
            out.append(CellPrediction(ay=i, dy=j, mean=mu, variance=var, kappa=kappa))
    return out


@dataclass(frozen=True)
class ReserveDistribution:
    """Bootstrap reserve draws plus the deterministic point estimates."""

    draws_total: np.ndarray
    draws_by_ay: Dict[int, np.ndarray]
    b_requested: int
    b_effective: int
    refit_failures: int
    kappa_mle: float
    kappa_adj: float
    kappa_used: float
    corrected: bool
    point_total: float
    point_by_ay: np.ndarray
    origin_label: Optional[object] = None


@dataclass(frozen=True)
class IntervalSummary:
    """Equal-tailed predictive interval at one level."""

    level: float
    lower: float
    upper: float
    point: float
    cv_percent: float


def bootstrap(
    t: RunOffTriangle,
    b: int = 5000,
    correct: bool = True,
    seed: int = 0,
    workers: int = 1,
) -> ReserveDistribution:
    """Parametric bootstrap of the reserve distribution.

    Fits the negative binomial chain-ladder model, corrects the
    dispersion (unless ``correct=False``), and runs ``b`` replicates of
    simulate-observed / refit / simulate-future. Replicates whose refit
    genuinely fails are dropped and counted.

    Raises:
        BaseFitFailedError: the fit on the real triangle failed.
        ExcessiveFailuresError: more than 20% of replicates failed.
    """
    if b < 1:
        raise ValueError("b must be at least 1")
    records = to_long(t)
    try:
        y, design = _prepare(records)
        coef, mu, kappa_mle, _ = nb_mle(y, design)
    except ReservingError as exc:
        raise BaseFitFailedError(f"base negative binomial fit failed: {exc}") from exc

    kappa_adj = bias_correct(kappa_mle, design.n, design.p)
    kappa_used = kappa_adj if correct else kappa_mle

    I = t.dimension
    fut_ay, fut_dy = _future_cells(I, I)
    spec = _bootstrap.EngineSpec(
        seed=seed,
        prefix=(),
        b=b,
        n_ay=I,
        n_dy=I,
        ay_idx=design.ay_idx,
        dy_idx=design.dy_idx,
        X=design.X,
        base_coef=coef,
        mu_obs=mu,
        obs_tag="nb",
        obs_param=kappa_used,
        refit_tag="nb",
        correct=correct,
        n0=design.n,
        p0=design.p,
        fut_ay=fut_ay,
        fut_dy=fut_dy,
    )
    totals, by_ay, failures = _bootstrap.run(spec, workers=workers)
    if failures > _MAX_FAILURE_FRACTION * b:
        raise ExcessiveFailuresError(
            f"{failures} of {b} bootstrap refits failed (more than {_MAX_FAILURE_FRACTION:.0%})"
        )

    cl = chain_ladder(t)
    return ReserveDistribution(
        draws_total=totals,
        draws_by_ay={i: by_ay[:, i - 1] for i in range(2, I + 1)},
        b_requested=b,
        b_effective=int(totals.size),
        refit_failures=failures,
        kappa_mle=kappa_mle,
        kappa_adj=kappa_adj,
        kappa_used=kappa_used,
        corrected=correct,
        point_total=cl.total_reserve,
        point_by_ay=cl.reserves,
        origin_label=t.origin_label,
    )


def _future_cells(n_ay: int, n_dy: int) -> Tuple[np.ndarray, np.ndarray]:
    ay, dy = [], []
    for i in range(1, n_ay + 1):
        for j in range(n_dy):
            if i + j > n_ay:
                ay.append(i - 1)
                dy.append(j)
    return np.array(ay, dtype=np.int64), np.array(dy, dtype=np.int64)


def _interval(draws: np.ndarray, level: float) -> Tuple[float, float]:
    # linear interpolation of order statistics (numpy's default rule)
    lo, hi = np.quantile(draws, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    return float(lo), float(hi)


def _cv_percent(draws: np.ndarray) -> float:
    mean = float(draws.mean())
    if mean == 0.0:
        return 0.0
    return 100.0 * float(draws.std(ddof=1)) / mean


def summarize(d: ReserveDistribution, levels: Sequence[float] = (0.95,)) -> List[IntervalSummary]:
    """Equal-tailed intervals of the total reserve at each level.

    Intervals at nested levels nest because the quantile rule is
    monotone in the level.
    """
    if d.b_effective < _MIN_DRAWS:
        raise TooFewDrawsError(
            f"{d.b_effective} effective draws; at least {_MIN_DRAWS} needed for stable quantiles"
        )
    out = []
    for level in sorted(levels):
        if not 0.0 < level < 1.0:
            raise ValueError(f"level must be inside (0, 1), got {level}")
        lo, hi = _interval(d.draws_total, level)
        out.append(
            IntervalSummary(
                level=level,
                lower=lo,
                upper=hi,
                point=d.point_total,
                cv_percent=_cv_percent(d.draws_total),
            )
        )
    return out


def ay_summary(d: ReserveDistribution, level: float = 0.95) -> List[IntervalSummary]:
    """Per-accident-year intervals, one row per year with future cells."""
    if d.b_effective < _MIN_DRAWS:
        raise TooFewDrawsError(
            f"{d.b_effective} effective draws; at least {_MIN_DRAWS} needed for stable quantiles"
        )
    rows = []
    for i, draws in sorted(d.draws_by_ay.items()):
        lo, hi = _interval(draws, level)
        rows.append(
            IntervalSummary(
                level=level,
                lower=lo,
                upper=hi,
                point=float(d.point_by_ay[i - 1]),
                cv_percent=_cv_percent(draws),
            )
        )
    return rows


def summary_json(d: ReserveDistribution, levels: Sequence[float] = (0.95,)) -> dict:
    """JSON-ready summary with the schema used by the command line tools."""
    intervals = summarize(d, levels)
    return {
        "point": d.point_total,
        "levels": [{"level": s.level, "lower": s.lower, "upper": s.upper} for s in intervals],
        "cv_percent": intervals[0].cv_percent if intervals else None,
        "b_effective": d.b_effective,
        "refit_failures": d.refit_failures,
        "kappa_mle": d.kappa_mle,
        "kappa_adj": d.kappa_adj,
    }


def draws_csv(d: ReserveDistribution) -> str:
    """Single-column CSV of the total reserve draws."""
    lines = ["total"]
    lines.extend(str(int(v)) for v in d.draws_total)
    return "\n".join(lines) + "\n"
