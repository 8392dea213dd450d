"""Short-horizon spread prediction and the MSE evaluation harness.

Three predictors:

* Monte-Carlo conditional expectation under the fitted state-dependent
  Hawkes model: the trailing window's events seed the usual exponential
  memory, which then acts as a decaying baseline while fresh excitation
  accumulates only from post-window simulated events.
* An autoregressive conditional Double-Poisson benchmark on the spread
  subsampled at the horizon stride: lambda_k = c + alpha*S'_{k-1} +
  beta*lambda_{k-1} with S'_k = S_k - 1 ~ DoublePoisson(lambda_k, gamma),
  fitted by the (unnormalized) Double-Poisson log-likelihood with the
  geometric recursion truncated at N terms.
* The martingale baseline: predict the last observed spread.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, logsumexp

from .errors import ConfigurationError, InitializationError
from .model import state_at
from .simulate import simulate_from_state, stream_generator

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Model-based Monte-Carlo forecast
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForecastRequest:
    """Conditioning time t0, trailing window, horizon and Monte-Carlo budget."""

    t0: float
    horizon: float
    window: float = 60.0
    n_paths: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.window <= 0 or self.horizon <= 0 or self.n_paths < 1:
            raise ConfigurationError("window > 0, horizon > 0, n_paths >= 1 required")


@dataclass
class ForecastResult:
    expected_spread: float
    samples: np.ndarray
    spread_t0: int
    n_window_events: int


def monte_carlo_forecast(spec, history, req):
    """Conditional mean of the spread at t0 + horizon given the trailing window.

    Events in (t0-window, t0] seed the decayed memory at t0; each of the
    n_paths conditional simulations runs on stream (seed, path index), so
    the result is reproducible path-by-path.  An event-free window falls
    back to the cold baseline (with a warning): the memory is simply zero.
    """
    t0 = float(req.t0)
    if t0 > history.horizon + 1e-9:
        raise ValueError(f"t0={t0} beyond the history horizon {history.horizon}")
    state = state_at(spec, history, t0, window=req.window)
    if history.n_events == 0:
        logger.warning("monte_carlo_forecast: empty history, using cold baseline")
    samples = np.empty(req.n_paths)
    for p in range(req.n_paths):
        path = simulate_from_state(spec, state, req.horizon, req.seed, stream=p)
        samples[p] = state.spread + int(path.sizes.sum())
    return ForecastResult(float(samples.mean()), samples, state.spread,
                          int(np.count_nonzero(
                              (history.times <= t0)
                              & (history.times > t0 - req.window))))


def last_predict(history, t0=None):
    """Martingale baseline: the current spread is the forecast."""
    if hasattr(history, "spread_at"):
        return int(history.spread_at(history.horizon if t0 is None else t0))
    series = np.asarray(history)
    return int(series[-1])


# ---------------------------------------------------------------------------
# Autoregressive conditional Double-Poisson benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AcdpParams:
    """c, alpha, beta, gamma > 0 with beta < 1; trunc is the recursion cutoff."""

    c: float
    alpha: float
    beta: float
    gamma: float
    trunc: int = 60

    def __post_init__(self):
        if min(self.c, self.alpha, self.gamma) <= 0:
            raise ConfigurationError("c, alpha, gamma must be positive")
        if not 0 < self.beta < 1:
            raise ConfigurationError("beta must lie in (0, 1)")
        if self.trunc < 1:
            raise ConfigurationError("trunc must be >= 1")


def _acdp_lambdas(c, alpha, beta, sprime, trunc):
    """lambda_k = sum_{i=0}^N beta^i (c + alpha*S'_{k-1-i}) for k = N+1..len-1.

    Returns (k_indices, lambdas); only indices with a full truncated window
    are produced.
    """
    n = sprime.size
    N = trunc
    if n <= N + 1:
        raise ValueError(f"series length {n} must exceed trunc + 1 = {N + 1}")
    w = beta ** np.arange(N + 1)
    conv = np.convolve(sprime, w)          # conv[m] = sum_i w[i]*S'_{m-i}
    ks = np.arange(N + 1, n)
    lam = c * w.sum() + alpha * conv[ks - 1]
    return ks, lam


def acdp_loglik(params, series):
    """Double-Poisson log-likelihood of an integer spread series (S_k >= 1).

    Uses the printed unnormalized form with the conventions 0*log 0 = 0 and
    S'*log(lambda/S') = 0 when S' = 0.
    """
    sprime = _to_sprime(series)
    ks, lam = _acdp_lambdas(params.c, params.alpha, params.beta, sprime, params.trunc)
    s = sprime[ks].astype(float)
    g = params.gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        slog = np.where(s > 0, s * (np.log(np.where(s > 0, s, 1.0)) - 1.0), 0.0)
        cross = np.where(s > 0, g * s * (1.0 + np.log(lam / np.where(s > 0, s, 1.0))), 0.0)
    terms = 0.5 * math.log(g) - g * lam + slog - gammaln(s + 1.0) + cross
    return float(terms.sum())


def _to_sprime(series):
    arr = np.asarray(series)
    if np.any(arr < 1):
        raise ValueError("spread series values must be >= 1")
    return (arr - 1).astype(np.int64)


def acdp_fit(series, init=None, trunc=60):
    """Maximize the Double-Poisson likelihood over (c, alpha, gamma) > 0 and
    0 < beta < 1, on log / logit coordinates with L-BFGS-B.

    A non-finite start is retried with jittered parameters before failing.
    """
    sprime = _to_sprime(series)
    if sprime.size <= trunc + 1:
        raise ValueError(f"series length {sprime.size} must exceed trunc + 1 = {trunc + 1}")
    if init is None:
        m = max(float(sprime.mean()), 0.05)
        init = AcdpParams(c=0.5 * m, alpha=0.25, beta=0.25, gamma=1.0, trunc=trunc)

    def to_x(p):
        return np.array([math.log(p.c), math.log(p.alpha),
                         math.log(p.beta / (1 - p.beta)), math.log(p.gamma)])

    def from_x(x):
        beta = 1.0 / (1.0 + math.exp(-float(x[2])))
        beta = min(max(beta, 1e-9), 1 - 1e-9)
        return AcdpParams(c=math.exp(float(x[0])), alpha=math.exp(float(x[1])),
                          beta=beta, gamma=math.exp(float(x[3])), trunc=trunc)

    def nll(x):
        try:
            return -acdp_loglik(from_x(x), series)
        except (OverflowError, FloatingPointError):
            return np.inf

    x0 = to_x(init)
    if not np.isfinite(nll(x0)):
        rng = np.random.default_rng(0)
        for _ in range(5):
            x0 = to_x(init) + rng.normal(scale=0.5, size=4)
            if np.isfinite(nll(x0)):
                break
        else:
            raise InitializationError("ACDP likelihood not finite at any tried start")
    res = minimize(nll, x0, method="L-BFGS-B",
                   options={"maxiter": 300, "ftol": 1e-12, "gtol": 1e-8})
    return from_x(res.x)


def acdp_predict(params, series):
    """One-step-ahead expectation 1 + lambda_next from the trailing window.

    The truncated recursion uses up to trunc+1 trailing values; a shorter
    history truncates the sum further (beta^i weights beyond it are dropped).
    """
    sprime = _to_sprime(series)
    if sprime.size < 1:
        raise ValueError("history must contain at least one value")
    n_terms = min(params.trunc + 1, sprime.size)
    w = params.beta ** np.arange(n_terms)
    tail = sprime[-n_terms:][::-1].astype(float)  # S'_{k-1}, S'_{k-2}, ...
    lam = params.c * w.sum() + params.alpha * float(np.dot(w, tail))
    return 1.0 + lam


def double_poisson_logpmf(n_values, lam, gamma, normalized=True):
    """log pmf of the Double-Poisson count law on the given support.

    The closed form omits its normalizing constant; with normalized=True the
    weights are normalized numerically over the support (extend the support
    until its tail mass is negligible for sampling use).
    """
    n = np.asarray(n_values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        nlogn = np.where(n > 0, n * np.log(np.where(n > 0, n, 1.0)), 0.0)
        cross = np.where(n > 0, gamma * n * (1.0 + np.log(lam / np.where(n > 0, n, 1.0))),
                         0.0)
    logw = 0.5 * math.log(gamma) - gamma * lam + nlogn - n - gammaln(n + 1.0) + cross
    if normalized:
        logw = logw - logsumexp(logw)
    return logw


def _dp_support(lam, gamma):
    # extend until the tail is far below the peak; tail mass < 1e-12
    n_max = 32
    while True:
        logw = double_poisson_logpmf(np.arange(n_max + 1), lam, gamma, normalized=False)
        if logw[-1] < logw.max() - 60.0 or n_max > 100000:
            return np.arange(n_max + 1), logw
        n_max *= 2


def acdp_simulate(params, n, seed=0, lam0=None):
    """Simulate a spread series of length n from the ACDP recursion.

    Uses the exact (untruncated) recursion lambda_k = c + alpha*S'_{k-1} +
    beta*lambda_{k-1}; counts are drawn from the numerically normalized
    Double-Poisson pmf.  Returns integer spreads (S = S' + 1).
    """
    gen = stream_generator(seed, stream=0)
    lam = params.c / (1.0 - params.beta) if lam0 is None else float(lam0)
    sprime_prev = max(int(round(lam)), 0)
    out = np.empty(n, dtype=np.int64)
    for k in range(n):
        lam = params.c + params.alpha * sprime_prev + params.beta * lam
        support, logw = _dp_support(lam, params.gamma)
        w = np.exp(logw - logsumexp(logw))
        sprime_prev = int(gen.choice(support, p=w / w.sum()))
        out[k] = 1 + sprime_prev
    return out


# ---------------------------------------------------------------------------
# Evaluation harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvaluationConfig:
    """Protocol knobs for the rolling out-of-sample comparison.

    Forecasts are made on a stride-delta grid inside [eval_start,
    day_horizon - delta] of each test day (the first eval_start seconds
    warm up the benchmark's rolling window).  The benchmark refits on the
    trailing acdp_window seconds every acdp_refit_every seconds.  Large
    grids can be subsampled evenly to at most max_points_per_delta points
    per horizon.
    """

    eval_start: float = 3600.0
    window: float = 60.0
    n_paths: int = 100
    seed: int = 0
    acdp_window: float = 3600.0
    acdp_refit_every: float = 600.0
    acdp_trunc: int = 60
    max_points_per_delta: int = None


@dataclass
class EvaluationResult:
    deltas: list
    mse: dict            # predictor -> {delta: mse}
    n_points: dict       # predictor -> {delta: count}
    n_skipped: dict      # predictor -> {delta: skipped samples}

    PREDICTORS = ("last", "acdp", "hawkes")

    def to_csv(self, path=None):
        header = "predictor," + ",".join(f"{d:g}s" for d in self.deltas)
        lines = [header]
        for name in self.PREDICTORS:
            cells = ["nan" if math.isnan(self.mse[name][d]) else f"{self.mse[name][d]:.6f}"
                     for d in self.deltas]
            lines.append(name + "," + ",".join(cells))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_dict(self):
        return {"deltas": list(self.deltas), "mse": self.mse,
                "n_points": self.n_points, "n_skipped": self.n_skipped}


def _eval_grid(day_horizon, delta, cfg):
    t0s = np.arange(cfg.eval_start, day_horizon - delta + 1e-9, delta)
    cap = cfg.max_points_per_delta
    if cap is not None and t0s.size > cap:
        idx = np.linspace(0, t0s.size - 1, cap).round().astype(int)
        t0s = t0s[np.unique(idx)]
    return t0s


def evaluate_predictors(spec, test_data, deltas, cfg=None, train_day_ids=None):
    """MSE of the three predictors on a stride-delta grid of test times.

    The model spec is fixed throughout (no re-estimation); the benchmark is
    refit on its rolling window every acdp_refit_every seconds.  Predictor
    failures skip the sample and are counted per predictor.  When
    train_day_ids is given, overlapping test day ids raise an error.
    """
    cfg = cfg or EvaluationConfig()
    if train_day_ids is not None:
        overlap = set(train_day_ids) & set(test_data.day_ids)
        if overlap:
            raise ConfigurationError(f"test days overlap training days: {sorted(overlap)}")
    deltas = list(deltas)
    sq_err = {p: {d: 0.0 for d in deltas} for p in EvaluationResult.PREDICTORS}
    counts = {p: {d: 0 for d in deltas} for p in EvaluationResult.PREDICTORS}
    skipped = {p: {d: 0 for d in deltas} for p in EvaluationResult.PREDICTORS}

    for day_i, day in enumerate(test_data.days):
        for delta in deltas:
            t0s = _eval_grid(day.horizon, delta, cfg)
            if t0s.size == 0:
                continue
            # benchmark series subsampled at the horizon stride
            n_steps = int(day.horizon / delta) + 1
            series = day.spread_at(delta * np.arange(n_steps))
            params = None
            last_refit = -np.inf
            w_steps = int(round(cfg.acdp_window / delta))
            for j, t0 in enumerate(t0s):
                realized = float(day.spread_at(t0 + delta))
                k = int(round(t0 / delta))

                pred = float(day.spread_at(t0))
                sq_err["last"][delta] += (pred - realized) ** 2
                counts["last"][delta] += 1

                try:
                    req = ForecastRequest(t0=t0, horizon=delta, window=cfg.window,
                                          n_paths=cfg.n_paths,
                                          seed=_forecast_seed(cfg.seed, day_i, delta, j))
                    fc = monte_carlo_forecast(spec, day, req)
                    sq_err["hawkes"][delta] += (fc.expected_spread - realized) ** 2
                    counts["hawkes"][delta] += 1
                except Exception as exc:
                    logger.warning("model forecast failed at day %d t0=%.1f: %r",
                                   day_i, t0, exc)
                    skipped["hawkes"][delta] += 1

                try:
                    if t0 - last_refit >= cfg.acdp_refit_every:
                        lo = max(0, k - w_steps)
                        params = acdp_fit(series[lo:k + 1], trunc=cfg.acdp_trunc)
                        last_refit = t0
                    pred = acdp_predict(params, series[max(0, k - cfg.acdp_trunc - 1):k + 1])
                    sq_err["acdp"][delta] += (pred - realized) ** 2
                    counts["acdp"][delta] += 1
                except Exception:
                    logger.debug("benchmark failed at day %d t0=%.1f", day_i, t0)
                    skipped["acdp"][delta] += 1

    mse = {p: {d: (sq_err[p][d] / counts[p][d] if counts[p][d] else float("nan"))
               for d in deltas} for p in EvaluationResult.PREDICTORS}
    return EvaluationResult(deltas, mse, counts, skipped)


def _forecast_seed(base, day_i, delta, j):
    return (int(base) * 1_000_003 + day_i * 10_007 + int(delta * 1000) * 101 + j) & ((1 << 63) - 1)
