"""Projecting SRH distributions forward: ALR transform, per-dimension
Gaussian-process regression on census years, and Monte Carlo scenarios.

Each cohort's five proportions are mapped to four unbounded log-ratios
(denominator: the Very Bad share), one exact GP is fitted per log-ratio
dimension, and futures are sampled independently per dimension from the
posterior normals at the target year. Best/worst cases are the samples
whose Very Good share sits at the 95th/5th nearest-rank percentile.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DegenerateKernel, TooFewSamples
from .population import N_SRH

logger = logging.getLogger(__name__)

ALR_FLOOR = 1e-6
N_ALR = N_SRH - 1

DEFAULT_LENGTHSCALE = 10.0  # years
SIGNAL_SD_FLOOR = 0.05
NOISE_SD_RATIO = 0.05
NOISE_VAR_FLOOR = 1e-8
DEFAULT_SAMPLES = 1000


# -- compositional transforms ---------------------------------------------------

def closure(values: np.ndarray) -> np.ndarray:
    """Scale a non-negative vector (or rows of a matrix) to sum to 1."""
    v = np.asarray(values, dtype=float)
    if np.any(v < 0):
        raise ValueError("closure requires non-negative components")
    total = v.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("closure requires a positive total")
    return v / total


def _floor_zeros(x: np.ndarray) -> np.ndarray:
    if np.any(x == 0):
        logger.info("flooring zero proportions at %g before log-ratio", ALR_FLOOR)
        x = closure(np.maximum(x, ALR_FLOOR))
    return x


def alr(x) -> np.ndarray:
    """Additive log-ratio transform; last component is the denominator."""
    arr = np.asarray(x, dtype=float)
    squeeze = arr.ndim == 1
    arr = closure(np.atleast_2d(arr))
    arr = _floor_zeros(arr)
    y = np.log(arr[:, :-1] / arr[:, -1:])
    return y[0] if squeeze else y


def alr_inv(y) -> np.ndarray:
    """Inverse ALR: closure of exp([y, 0]), guarded against overflow."""
    arr = np.asarray(y, dtype=float)
    squeeze = arr.ndim == 1
    arr = np.atleast_2d(arr)
    z = np.concatenate([arr, np.zeros((len(arr), 1))], axis=1)
    z -= z.max(axis=1, keepdims=True)
    out = closure(np.exp(z))
    return out[0] if squeeze else out


# -- Gaussian process ------------------------------------------------------------

def _sq_exp(t1: np.ndarray, t2: np.ndarray, signal_var: float, lengthscale: float) -> np.ndarray:
    d = t1[:, None] - t2[None, :]
    return signal_var * np.exp(-0.5 * np.square(d / lengthscale))


@dataclass(frozen=True, eq=False)
class GpModel:
    """Exact GP posterior over one ALR dimension of one cohort."""

    years: np.ndarray
    values: np.ndarray
    lengthscale: float
    signal_var: float
    noise_var: float
    prior_mean: float
    _chol: np.ndarray
    _alpha: np.ndarray

    def predict(self, years) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and predictive variance (latent + noise) at `years`."""
        t = np.atleast_1d(np.asarray(years, dtype=float))
        k_star = _sq_exp(t, self.years, self.signal_var, self.lengthscale)
        mean = self.prior_mean + k_star @ self._alpha
        v = np.linalg.solve(self._chol, k_star.T)
        latent = self.signal_var - np.sum(np.square(v), axis=0)
        var = np.maximum(latent, 0.0) + self.noise_var
        return mean, var

    def log_marginal_likelihood(self) -> float:
        resid = self.values - self.prior_mean
        n = len(self.years)
        return float(
            -0.5 * resid @ self._alpha
            - np.sum(np.log(np.diag(self._chol)))
            - 0.5 * n * math.log(2.0 * math.pi)
        )


def fit_gp(
    years,
    values,
    lengthscale: float = DEFAULT_LENGTHSCALE,
    signal_sd: float | None = None,
    noise_sd: float | None = None,
    grid_search: bool = False,
) -> GpModel:
    """Exact GP with a squared-exponential kernel over observation years.

    Defaults: lengthscale 10 years, signal sd = series sd floored at 0.05,
    noise sd = 5% of signal sd. `grid_search=True` picks (lengthscale,
    signal sd) from a 5x5 grid by marginal likelihood; with only a few
    training years the fixed defaults are usually the sane choice.
    """
    t = np.asarray(years, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.shape != v.shape:
        raise ValueError("years and values must be equal-length vectors")
    if len(t) < 2:
        raise ValueError("need at least 2 training points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("years must be strictly increasing")

    base_sd = max(float(np.std(v)), SIGNAL_SD_FLOOR) if signal_sd is None else float(signal_sd)
    if not grid_search:
        return _fit_gp_fixed(t, v, lengthscale, base_sd, noise_sd)
    best, best_lml = None, -np.inf
    for ell in (5.0, 10.0, 15.0, 20.0, 30.0):
        for mult in (0.5, 0.75, 1.0, 1.5, 2.0):
            model = _fit_gp_fixed(t, v, ell, base_sd * mult, noise_sd)
            lml = model.log_marginal_likelihood()
            if lml > best_lml:
                best, best_lml = model, lml
    return best


def _fit_gp_fixed(t, v, lengthscale, signal_sd, noise_sd) -> GpModel:
    signal_var = float(signal_sd) ** 2
    if noise_sd is None:
        noise_var = max((NOISE_SD_RATIO * signal_sd) ** 2, NOISE_VAR_FLOOR)
    else:
        noise_var = max(float(noise_sd) ** 2, NOISE_VAR_FLOOR)
    prior_mean = float(np.mean(v))
    K = _sq_exp(t, t, signal_var, lengthscale) + noise_var * np.eye(len(t))
    chol = None
    for jitter in (0.0, 1e-12, 1e-10, 1e-8, 1e-6):
        try:
            chol = np.linalg.cholesky(K + jitter * signal_var * np.eye(len(t)))
            break
        except np.linalg.LinAlgError:
            continue
    if chol is None:
        raise DegenerateKernel(f"kernel not positive definite for years {t}")
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, v - prior_mean))
    return GpModel(
        years=t,
        values=v,
        lengthscale=float(lengthscale),
        signal_var=signal_var,
        noise_var=noise_var,
        prior_mean=prior_mean,
        _chol=chol,
        _alpha=alpha,
    )


# -- Monte Carlo scenarios ---------------------------------------------------------

def sample_futures(
    models,
    target_year: int,
    n: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Draw n future distributions for one cohort (4 independent GP dims)."""
    if len(models) != N_ALR:
        raise ValueError(f"need {N_ALR} GP models, one per ALR dimension")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng or np.random.default_rng()
    draws = np.empty((n, N_ALR))
    for d, model in enumerate(models):
        mean, var = model.predict([target_year])
        draws[:, d] = rng.normal(mean[0], math.sqrt(var[0]), size=n)
    return alr_inv(draws)


def posterior_mean_distribution(models, target_year: int) -> np.ndarray:
    """Inverse-transformed posterior ALR mean (the deterministic forecast)."""
    means = np.array([m.predict([target_year])[0][0] for m in models])
    return alr_inv(means)


def nearest_rank_index(n: int, percentile: float) -> int:
    """0-based index of the nearest-rank percentile in a sorted sample of n."""
    rank = math.ceil(percentile / 100.0 * n)
    return min(max(rank, 1), n) - 1


def extract_scenarios(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mean, best, worst) from Monte Carlo samples.

    Mean is the re-closed componentwise average; best/worst are the actual
    samples whose Very Good share is at the 95th/5th nearest-rank percentile.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = len(samples)
    if n < 20:
        raise TooFewSamples(f"{n} samples; need at least 20")
    mean = closure(samples.mean(axis=0))
    order = np.argsort(samples[:, 0], kind="stable")
    best = samples[order[nearest_rank_index(n, 95.0)]]
    worst = samples[order[nearest_rank_index(n, 5.0)]]
    return mean, best, worst


def percentile_band(samples: np.ndarray, lo: float = 5.0, hi: float = 95.0):
    """Componentwise nearest-rank percentile band over samples."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = len(samples)
    srt = np.sort(samples, axis=0)
    return srt[nearest_rank_index(n, lo)], srt[nearest_rank_index(n, hi)]


@dataclass(frozen=True, eq=False)
class ScenarioBundle:
    """Forecast scenarios for one (cohort, target year)."""

    year: int
    mean: np.ndarray
    best: np.ndarray
    worst: np.ndarray
    band_low: np.ndarray
    band_high: np.ndarray
    alr_mean: np.ndarray  # deterministic inverse-transformed posterior mean
    n_samples: int


def forecast_series(
    years,
    distributions,
    target_years,
    n_samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
    grid_search: bool = False,
) -> dict[int, ScenarioBundle]:
    """Full chain for one series: alr -> 4 GPs -> Monte Carlo -> scenarios."""
    years = np.asarray(years, dtype=float)
    dists = np.atleast_2d(np.asarray(distributions, dtype=float))
    if len(years) != len(dists):
        raise ValueError("one distribution per historical year required")
    Y = alr(dists)
    models = [fit_gp(years, Y[:, d], grid_search=grid_search) for d in range(N_ALR)]
    rng = rng or np.random.default_rng()
    out = {}
    for year in target_years:
        samples = sample_futures(models, year, n=n_samples, rng=rng)
        mean, best, worst = extract_scenarios(samples)
        lo, hi = percentile_band(samples)
        out[int(year)] = ScenarioBundle(
            year=int(year),
            mean=mean,
            best=best,
            worst=worst,
            band_low=lo,
            band_high=hi,
            alr_mean=posterior_mean_distribution(models, year),
            n_samples=len(samples),
        )
    return out


def forecast_national(
    census_history: dict[int, np.ndarray],
    target_years,
    n_samples: int = DEFAULT_SAMPLES,
    rng: np.random.Generator | None = None,
) -> dict[int, ScenarioBundle]:
    """Apply the cohort methodology to one national series."""
    if len(census_history) < 2:
        raise ValueError("need at least 2 historical years")
    years = sorted(census_history)
    dists = [census_history[y] for y in years]
    return forecast_series(years, dists, target_years, n_samples=n_samples, rng=rng)


# -- history CSV -----------------------------------------------------------------

HISTORY_KEY_COLUMNS = ("age_group", "sex", "economic_status")
PROPORTION_COLUMNS = tuple(f"p{k}" for k in range(N_SRH))
SCENARIO_TAGS = ("mean", "best", "worst", "p05", "p95", "alr_mean")


def read_history_csv(path) -> dict[tuple[str, str, str], tuple[np.ndarray, np.ndarray]]:
    """Census history rows -> {cohort key tuple: (years, (m, 5) dists)}.

    A key of ("ALL","ALL","ALL") denotes the national series.
    """
    df = pd.read_csv(path)
    needed = {"year", *HISTORY_KEY_COLUMNS, *PROPORTION_COLUMNS}
    missing = needed - set(df.columns)
    if missing:
        raise ValueError(f"history CSV missing columns {sorted(missing)}")
    series = {}
    for key, sub in df.groupby(list(HISTORY_KEY_COLUMNS), sort=True):
        sub = sub.sort_values("year", kind="stable")
        years = sub["year"].to_numpy(int)
        dists = sub[list(PROPORTION_COLUMNS)].to_numpy(float)
        series[tuple(str(k) for k in key)] = (years, dists)
    return series


def forecast_history(
    series: dict,
    target_years,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    workers: int = 1,
) -> pd.DataFrame:
    """Forecast every series in a history file; deterministic per cohort.

    Each cohort draws from its own seeded substream, so results do not
    depend on the worker count or completion order.
    """
    from .microsim.rng import substream

    keys = sorted(series)

    def one(key):
        years, dists = series[key]
        rng = substream(seed, "forecast", *key)
        return key, forecast_series(years, dists, target_years, n_samples=n_samples, rng=rng)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(one, keys))
    else:
        results = dict(one(k) for k in keys)

    rows = []
    for key in keys:
        bundles = results[key]
        for year in sorted(bundles):
            b = bundles[year]
            for tag, dist in (
                ("mean", b.mean),
                ("best", b.best),
                ("worst", b.worst),
                ("p05", b.band_low),
                ("p95", b.band_high),
                ("alr_mean", b.alr_mean),
            ):
                rows.append([year, *key, tag, *dist])
    return pd.DataFrame(
        rows, columns=["year", *HISTORY_KEY_COLUMNS, "scenario", *PROPORTION_COLUMNS]
    )
