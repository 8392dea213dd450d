"""Goodness-of-fit statistics for spread paths.

Spread distributions (calendar-time occupancy and pre-event), jump-size
distribution, unconditional/conditional inter-event times, qq pairs,
slotted spread autocorrelation, the normalized autocovariance of spread
increments ACV(delta, tau), per-source excitation influence maps and
kernel curves.

All per-day quantities are averaged uniformly across days (each day is an
independent realization); the spread is piecewise constant, so grid values
are evaluated exactly by binary search, never interpolated.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .model import NS, SpreadPath, event_index, event_size

logger = logging.getLogger(__name__)

DEFAULT_GRID = 0.1  # seconds; sampling step for autocorrelation estimates


def _as_days(data):
    if isinstance(data, SpreadPath):
        return [data]
    if hasattr(data, "days"):
        return list(data.days)
    return list(data)


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Histogram:
    """Discrete pmf: support values and probabilities summing to 1."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values))
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))

    def prob(self, value):
        hits = np.nonzero(self.values == value)[0]
        return float(self.probs[hits[0]]) if hits.size else 0.0

    def as_dict(self):
        return {int(v): float(p) for v, p in zip(self.values, self.probs)}


def _average_pmfs(pmfs):
    support = sorted({int(v) for pmf in pmfs for v in pmf})
    probs = np.zeros(len(support))
    for pmf in pmfs:
        for i, v in enumerate(support):
            probs[i] += pmf.get(v, 0.0)
    probs /= len(pmfs)
    return Histogram(np.asarray(support), probs)


def calendar_distribution(data):
    """Time-occupancy pmf of the spread per day, averaged across days.

    P(spread = S) = (1/T) * time spent at S; occupancies are summed in
    integer nanoseconds, so per-day masses are exact.
    """
    pmfs = []
    for day in _as_days(data):
        if day.horizon_ns <= 0:
            logger.warning("calendar_distribution: skipping zero-length day")
            continue
        edges = np.concatenate((np.array([0], dtype=np.int64), day.times_ns,
                                np.array([day.horizon_ns], dtype=np.int64)))
        durations = np.diff(edges)
        levels = np.concatenate(([day.s0], day.spreads_after()))
        pmf = {}
        for lev, dur in zip(levels, durations):
            if dur > 0:
                pmf[int(lev)] = pmf.get(int(lev), 0) + int(dur)
        pmfs.append({k: v / day.horizon_ns for k, v in pmf.items()})
    if not pmfs:
        raise ValueError("no usable days")
    return _average_pmfs(pmfs)


def event_distribution(data):
    """Pre-event spread pmf per day, averaged across days."""
    pmfs = []
    for day in _as_days(data):
        if day.n_events == 0:
            logger.warning("event_distribution: skipping day with no events")
            continue
        pre = day.spreads_before()
        vals, counts = np.unique(pre, return_counts=True)
        pmfs.append({int(v): c / day.n_events for v, c in zip(vals, counts)})
    if not pmfs:
        raise ValueError("no usable days")
    return _average_pmfs(pmfs)


def jump_size_distribution(data):
    """Pmf of signed jump sizes per day, averaged across days."""
    pmfs = []
    for day in _as_days(data):
        if day.n_events == 0:
            continue
        vals, counts = np.unique(day.sizes, return_counts=True)
        pmfs.append({int(v): c / day.n_events for v, c in zip(vals, counts)})
    if not pmfs:
        raise ValueError("no usable days")
    return _average_pmfs(pmfs)


def recommend_k(data, threshold=0.01):
    """Smallest K whose excluded tail mass P(|jump| > K) is below threshold."""
    pmf = jump_size_distribution(data)
    sizes = np.abs(pmf.values)
    for k in range(1, int(sizes.max()) + 1):
        if float(pmf.probs[sizes > k].sum()) < threshold:
            return k
    return int(sizes.max())


# ---------------------------------------------------------------------------
# Inter-event times
# ---------------------------------------------------------------------------

def inter_event_times(data, condition=None):
    """Gaps between consecutive events, optionally conditioned on the
    post-jump spreads: condition=(S1, S2) keeps gaps t_{i+1} - t_i with
    S(t_i+) = S1 and S(t_{i+1}+) = S2 (time spent at S1 before moving to S2).

    Gaps never span day boundaries.  Returns a float array in seconds.
    """
    out = []
    for day in _as_days(data):
        if day.n_events < 2:
            continue
        gaps = np.diff(day.times_ns) / NS
        if condition is None:
            out.append(gaps)
        else:
            s1, s2 = int(condition[0]), int(condition[1])
            if s1 < 1 or s2 < 1:
                raise ValueError("condition spreads must be >= 1")
            post = day.spreads_after()
            keep = (post[:-1] == s1) & (post[1:] == s2)
            out.append(gaps[keep])
    return np.concatenate(out) if out else np.zeros(0)


def attained_transitions(data):
    """All (S1, S2) post-jump transition pairs present in the data."""
    pairs = set()
    for day in _as_days(data):
        post = day.spreads_after()
        for a, b in zip(post[:-1], post[1:]):
            pairs.add((int(a), int(b)))
    return sorted(pairs)


def qq_points(samples_a, samples_b, n_quantiles=100):
    """Matched empirical quantile pairs at probabilities (j-1/2)/n (type-7)."""
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both sample sets must be non-empty")
    probs = (np.arange(1, n_quantiles + 1) - 0.5) / n_quantiles
    return np.quantile(a, probs), np.quantile(b, probs)


# ---------------------------------------------------------------------------
# Autocorrelation and increment autocovariance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AcfCurve:
    lags: np.ndarray
    values: np.ndarray
    n_slots: int
    n_degenerate: int


def spread_autocorrelation(data, max_lag, slot_length, grid=DEFAULT_GRID):
    """Autocorrelation of the spread sampled on a regular grid within slots.

    Each day is cut into consecutive slots of ``slot_length`` seconds (to
    keep slowly varying non-stationarities out of the estimate); per slot
    the standard sample ACF is computed on the exact grid values and the
    curves are averaged over all slots of all days.  Slots with zero
    variance are reported as degenerate and excluded (NaN curve if all are).
    """
    if grid <= 0 or max_lag < grid:
        raise ValueError("need 0 < grid <= max_lag")
    n_lags = int(round(max_lag / grid))
    lag_steps = np.arange(0, n_lags + 1)
    acc = np.zeros(n_lags + 1)
    n_used = 0
    n_degenerate = 0
    for day in _as_days(data):
        if slot_length > day.horizon + 1e-9:
            raise ValueError("slot_length exceeds the day horizon")
        n_slots = int(day.horizon / slot_length)
        for j in range(n_slots):
            start = j * slot_length
            tgrid = start + grid * np.arange(int(slot_length / grid) + 1)
            tgrid = tgrid[tgrid <= day.horizon + 1e-12]
            x = day.spread_at(tgrid).astype(float)
            x = x - x.mean()
            denom = float(np.dot(x, x))
            if denom == 0.0:
                n_degenerate += 1
                continue
            for m in lag_steps:
                if m >= x.size:
                    break
                acc[m] += float(np.dot(x[:x.size - m], x[m:])) / denom
            n_used += 1
    if n_used == 0:
        logger.warning("spread_autocorrelation: all slots degenerate (constant spread)")
        values = np.full(n_lags + 1, np.nan)
    else:
        values = acc / n_used
    return AcfCurve(lag_steps * grid, values, n_used, n_degenerate)


@dataclass(frozen=True)
class AcvCurve:
    """Normalized spread-increment autocovariance estimates.

    values[j] estimates Cov(S_{t+d}-S_t, S_{t+d+tau_j}-S_{t+tau_j}) / d^2
    over a stride-d grid; counts[j] is the number of increment pairs used.
    """

    delta: float
    taus: np.ndarray
    values: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))
        if np.any(np.diff(taus) <= 0):
            raise ValueError("taus must be strictly increasing")


def acv(data, delta, taus, min_tau_ratio=2.0):
    """ACV(delta, tau) per tau, averaged over days.

    Increments are exact (no grid aliasing): the left windows start on the
    stride-delta grid and the lagged windows on the same grid shifted by
    tau.  Lags must satisfy tau >= min_tau_ratio * delta; the estimator is
    unstable (and the delta-independence argument vacuous) for tau ~ delta.
    """
    taus = np.sort(np.asarray(taus, dtype=float))
    delta = float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if np.any(taus < min_tau_ratio * delta):
        raise ValueError(
            f"all taus must be >= {min_tau_ratio} * delta = {min_tau_ratio * delta}")
    per_day_vals = []
    counts = np.zeros(taus.size, dtype=np.int64)
    for day in _as_days(data):
        T = day.horizon
        n_starts = int((T - taus.max() - delta) / delta) + 1
        if n_starts < 2:
            continue
        starts = delta * np.arange(n_starts)
        x = day.spread_at(np.concatenate((starts, [starts[-1] + delta]))).astype(float)
        a = np.diff(x)  # S(t+delta) - S(t) on the stride grid
        vals = np.full(taus.size, np.nan)
        for j, tau in enumerate(taus):
            y = day.spread_at(np.concatenate((starts + tau, [starts[-1] + tau + delta])))
            b = np.diff(y.astype(float))
            if a.size >= 2:
                vals[j] = float(np.mean(a * b) - np.mean(a) * np.mean(b)) / delta ** 2
                counts[j] += a.size
        per_day_vals.append(vals)
    if not per_day_vals:
        raise ValueError("no day is long enough for the requested taus")
    values = np.nanmean(np.vstack(per_day_vals), axis=0)
    return AcvCurve(delta, taus, values, counts)


# ---------------------------------------------------------------------------
# Kernel diagnostics
# ---------------------------------------------------------------------------

def kernel_curve(spec, target_size, source_size, tgrid):
    """Kernel phi^{target,source} sampled on a time grid (log-spaced for plots)."""
    e = event_index(int(target_size), spec.K)
    ep = event_index(int(source_size), spec.K)
    return spec.kernels.phi(e, ep, np.asarray(tgrid, dtype=float))


def log_time_grid(t_min=1e-4, t_max=10.0, n=200):
    return np.logspace(np.log10(t_min), np.log10(t_max), n)


def kernel_influence(spec, data):
    """Relative per-source excitation at events, bucketed by (pre-spread, type).

    For each event of type e at pre-spread s, the contribution of source e'
    is sum_l alpha[e,e',l] * z^{e',l}(t-); bucket means are normalized by
    their max over e', so each non-empty bucket row peaks at exactly 1.

    Returns {(s, e_size): {e'_size: value}}; empty buckets are reported with
    an empty dict rather than dropped.
    """
    from .likelihood import _day_stats  # shares the exact z recursion

    K, L = spec.K, spec.L
    n_types = 2 * K
    sums = {}
    ncount = {}
    for day in _as_days(data):
        st = _day_stats(day, K, spec.betas, spec.sbar)
        z = st.z_ev.reshape(st.n, n_types, L)
        pre = day.spreads_before()
        for i in range(st.n):
            e = int(st.type_idx[i])
            s = int(pre[i])
            key = (s, e)
            per_source = np.sum(spec.kernels.alphas[e] * z[i], axis=1)  # (2K,)
            if key in sums:
                sums[key] += per_source
                ncount[key] += 1
            else:
                sums[key] = per_source.copy()
                ncount[key] = 1
    out = {}
    spreads = sorted({s for s, _ in sums})
    for s in range(1, (max(spreads) if spreads else 0) + 1):
        for e in range(n_types):
            key = (s, e)
            okey = (s, event_size(e, K))
            if key not in sums:
                out[okey] = {}
                continue
            mean = sums[key] / ncount[key]
            top = mean.max()
            rel = mean / top if top > 0 else mean
            out[okey] = {event_size(ep, K): float(rel[ep]) for ep in range(n_types)}
    return out
