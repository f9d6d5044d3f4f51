"""Shared parametric bootstrap engine.

One replicate simulates the observed cells from the base fit, refits
the model on the synthetic triangle, then simulates the future cells
from the refitted means. The engine is family-generic so the same loop
serves Poisson, overdispersed Poisson, and negative binomial methods.

Replicate refits on synthetic data can meet factor levels whose counts
are all zero. The maximum-likelihood limit sends those level means to
zero, so the refit drops the level and pins its fitted means at zero
rather than failing; only genuine non-convergence counts as a failure.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import dispersion
from ._rng import substream
from .errors import ReservingError
from .glm import Family, _irls, build_design


@dataclass(frozen=True)
class EngineSpec:
    """Everything one bootstrap replicate needs, in picklable form."""

    seed: int
    prefix: Tuple[int, ...]
    b: int
    n_ay: int
    n_dy: int
    ay_idx: np.ndarray  # 0-based, observed cells
    dy_idx: np.ndarray
    X: np.ndarray  # full treatment design for the observed cells
    base_coef: Optional[np.ndarray]
    mu_obs: np.ndarray
    obs_tag: str  # family used to simulate observed cells
    obs_param: Optional[float]  # kappa or phi
    refit_tag: str  # poisson | odp | nb
    correct: bool  # apply (n - p) / n to the refitted kappa
    n0: int  # base-design dimensions for the correction factor
    p0: int
    fut_ay: np.ndarray  # 0-based, future cells
    fut_dy: np.ndarray


def draw_counts(tag: str, param: Optional[float], mu: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one synthetic count per cell mean under the given family."""
    if tag == "poisson":
        return rng.poisson(mu)
    if tag == "nb":
        from .predictive import sample_nb

        return sample_nb(mu, param, rng)
    if tag == "odp":
        # integer-valued approximation with Var = phi * mu
        phi = max(param, 1e-8)
        return np.floor(phi * rng.poisson(mu / phi) + 0.5).astype(np.int64)
    raise ValueError(f"unknown sampling family {tag!r}")


def _effects_from_coef(coef: np.ndarray, n_ay: int) -> Tuple[np.ndarray, np.ndarray]:
    row = coef[0] + np.concatenate(([0.0], coef[1:n_ay]))
    col = np.concatenate(([0.0], coef[n_ay:]))
    return row, col


def _refit(y_star: np.ndarray, spec: EngineSpec) -> Optional[Tuple[np.ndarray, np.ndarray, Optional[float]]]:
    """Refit the replicate model; returns (row_eff, col_eff, dispersion).

    Row and column effects are on the log scale with dropped levels at
    -inf, so exp(row + col) gives zero means there. The dispersion slot
    holds kappa for nb refits and phi for odp refits.
    """
    ay_tot = np.bincount(spec.ay_idx, weights=y_star, minlength=spec.n_ay)
    dy_tot = np.bincount(spec.dy_idx, weights=y_star, minlength=spec.n_dy)
    full = bool(np.all(ay_tot > 0) and np.all(dy_tot > 0))

    if full:
        y_fit = y_star.astype(float)
        design = build_design(spec.ay_idx + 1, spec.dy_idx, spec.n_ay, spec.n_dy)
        keep_ay = np.arange(spec.n_ay)
        keep_dy = np.arange(spec.n_dy)
        start = spec.base_coef
    else:
        keep_ay = np.nonzero(ay_tot > 0)[0]
        keep_dy = np.nonzero(dy_tot > 0)[0]
        mask = (ay_tot[spec.ay_idx] > 0) & (dy_tot[spec.dy_idx] > 0)
        if not mask.any():
            return None
        y_fit = y_star[mask].astype(float)
        ay_new = np.searchsorted(keep_ay, spec.ay_idx[mask])
        dy_new = np.searchsorted(keep_dy, spec.dy_idx[mask])
        design = build_design(ay_new + 1, dy_new, len(keep_ay), len(keep_dy))
        start = None
    if design.n < design.p:
        return None

    try:
        if spec.refit_tag == "nb":
            coef, _, kappa, _ = dispersion.nb_mle(y_fit, design, start=start)
            disp = dispersion.bias_correct(kappa, spec.n0, spec.p0) if spec.correct else kappa
        else:
            coef, mu, _, _, converged, _ = _irls(y_fit, design, Family.poisson(), start=start)
            if not converged:
                return None
            disp = None
            if spec.refit_tag == "odp":
                dof = design.n - design.p
                if dof <= 0:
                    return None
                disp = float(np.sum((y_fit - mu) ** 2 / mu)) / dof
    except (ReservingError, np.linalg.LinAlgError):
        return None

    row_red, col_red = _effects_from_coef(coef, len(keep_ay))
    row_eff = np.full(spec.n_ay, -np.inf)
    col_eff = np.full(spec.n_dy, -np.inf)
    row_eff[keep_ay] = row_red
    col_eff[keep_dy] = col_red
    return row_eff, col_eff, disp


def _run_chunk(spec: EngineSpec, lo: int, hi: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run replicates lo..hi-1; returns (ok, totals, by_ay)."""
    count = hi - lo
    ok = np.zeros(count, dtype=bool)
    totals = np.zeros(count, dtype=np.int64)
    by_ay = np.zeros((count, spec.n_ay), dtype=np.int64)
    for offset in range(count):
        b = lo + offset
        rng = substream(spec.seed, *spec.prefix, b)
        y_star = draw_counts(spec.obs_tag, spec.obs_param, spec.mu_obs, rng)
        refit = _refit(y_star, spec)
        if refit is None:
            continue
        row_eff, col_eff, disp = refit
        mu_fut = np.exp(row_eff[spec.fut_ay] + col_eff[spec.fut_dy])
        fut_tag = "poisson" if spec.refit_tag == "poisson" else ("nb" if spec.refit_tag == "nb" else "odp")
        draws = draw_counts(fut_tag, disp, mu_fut, rng)
        ok[offset] = True
        totals[offset] = draws.sum()
        np.add.at(by_ay[offset], spec.fut_ay, draws)
    return ok, totals, by_ay


def run(spec: EngineSpec, workers: int = 1) -> Tuple[np.ndarray, np.ndarray, int]:
    """Execute all replicates; returns (totals, by_ay, failures).

    Results are identical for any worker count because each replicate
    draws from its own counter-based substream.
    """
    if workers <= 1 or spec.b < 4:
        ok, totals, by_ay = _run_chunk(spec, 0, spec.b)
    else:
        bounds = np.linspace(0, spec.b, workers + 1, dtype=int)
        parts: List[Tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_chunk, spec, int(lo), int(hi))
                for lo, hi in zip(bounds[:-1], bounds[1:])
                if hi > lo
            ]
            parts = [f.result() for f in futures]
        ok = np.concatenate([p[0] for p in parts])
        totals = np.concatenate([p[1] for p in parts])
        by_ay = np.concatenate([p[2] for p in parts])
    failures = int(spec.b - ok.sum())
    return totals[ok], by_ay[ok], failures
