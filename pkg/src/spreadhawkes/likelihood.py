"""Exact log-likelihood, analytic gradient and maximum-likelihood fitting.

For exponential kernel banks the log-likelihood of a day is

    sum_events [ log(mu^e + sum alpha[e] z(t_i-)) + log f^e(S_{t_i-}) ]
    - sum_e integral_0^T f^e(S_t) (mu^e + sum alpha[e] z(t)) dt

and the compensator integral has a closed form piecewise between events:
on an interval of length D with constant spread, each memory coordinate
contributes z_start * (1 - exp(-beta_l D)) / beta_l.

Everything the optimizer needs is therefore a set of per-day sufficient
statistics that do not depend on (mu, alpha, f): the pre-event memory
table z(t_i-) per event, and durations / integrated-memory tables
aggregated by (clipped) spread level.  They are computed once; each
likelihood/gradient evaluation is then a handful of matrix products.

Days are independent realizations: the memory resets to zero at each day
start and the total likelihood is the sum over days.
"""

import logging
import math
import time
from dataclasses import dataclass, asdict

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError, InitializationError
from .model import (KernelParams, ModelSpec, StateFunctions, event_index,
                    event_size, spec_to_dict)

logger = logging.getLogger(__name__)

_SIGNED_BRACKET_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Configuration and report types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitConfig:
    """Hyper-parameters fixed before estimation.

    K: max jump size; betas: decay grid (1/s, strictly increasing);
    sbar: spread level beyond which the f^e are constant.
    """

    K: int
    betas: tuple
    sbar: int
    max_iter: int = 500
    ftol: float = 1e-9
    gtol: float = 1e-6
    signed_alpha: bool = False
    mu_floor: float = 1e-10
    f_floor: float = 1e-10
    alpha_init: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.K < 1:
            raise ConfigurationError("K must be >= 1")
        if self.sbar <= self.K:
            raise ConfigurationError("sbar must exceed K")
        arr = np.asarray(self.betas)
        if arr.size == 0 or np.any(arr <= 0) or np.any(np.diff(arr) <= 0):
            raise ConfigurationError("betas must be strictly positive and increasing")

    @property
    def L(self):
        return len(self.betas)


@dataclass
class FitReport:
    """Estimation outcome: the spec, the trace and convergence diagnostics."""

    spec: ModelSpec
    loglik: float
    trace: list
    converged: bool
    n_iterations: int
    clamp_count: int
    n_free_params: int
    wall_time_s: float
    config: FitConfig
    message: str = ""

    def to_dict(self):
        d = {
            "spec": spec_to_dict(self.spec),
            "loglik": self.loglik,
            "trace": list(self.trace),
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "clamp_count": self.clamp_count,
            "n_free_params": self.n_free_params,
            "wall_time_s": self.wall_time_s,
            "config": asdict(self.config),
            "message": self.message,
        }
        d["config"]["betas"] = list(self.config.betas)
        return d


def free_param_count(K, L, sbar):
    """Number of free parameters: baselines + kernel weights + free f values.

    2K baselines, 4LK^2 kernel weights, and 2K*sbar f values minus the
    (K^2+K)/2 structural zeros and the 2K entries pinned to 1.
    """
    return 2 * K + 4 * L * K * K + (2 * K * sbar - (K * K + K) // 2 - 2 * K)


# ---------------------------------------------------------------------------
# Per-day sufficient statistics
# ---------------------------------------------------------------------------

class _DayStats:
    """Parameter-independent statistics of one day for a given (K, betas, sbar)."""

    __slots__ = ("n", "T", "z_ev", "type_idx", "pre_col", "dur", "dmat", "counts")

    def __init__(self, path, K, betas, sbar):
        n_types = 2 * K
        L = len(betas)
        nz = n_types * L
        betas = [float(b) for b in betas]
        times = path.times
        sizes = path.sizes
        if path.max_jump() > K:
            raise ConfigurationError(
                f"path contains jumps of size {path.max_jump()} > K={K}")
        n = path.n_events
        self.n = n
        self.T = path.horizon
        self.z_ev = np.zeros((n, nz))
        self.type_idx = np.zeros(n, dtype=np.int64)
        self.pre_col = np.zeros(n, dtype=np.int64)
        self.dur = np.zeros(sbar)
        self.dmat = np.zeros((sbar, nz))
        self.counts = np.zeros((n_types, sbar))

        z = [0.0] * nz
        s = int(path.s0)
        t_prev = 0.0
        exp = math.exp
        expm1 = math.expm1
        dur = self.dur
        dmat = self.dmat
        for i in range(n + 1):
            t_next = times[i] if i < n else self.T
            delta = t_next - t_prev
            col = (s if s < sbar else sbar) - 1
            if delta > 0.0:
                dur[col] += delta
                row = dmat[col]
                for l in range(L):
                    e_l = exp(-betas[l] * delta)
                    g_l = -expm1(-betas[l] * delta) / betas[l]
                    for k in range(l, nz, L):
                        row[k] += z[k] * g_l
                        z[k] *= e_l
            if i == n:
                break
            e_idx = event_index(int(sizes[i]), K)
            self.z_ev[i] = z
            self.type_idx[i] = e_idx
            self.pre_col[i] = col
            self.counts[e_idx, col] += 1
            base = e_idx * L
            for l in range(L):
                z[base + l] += betas[l]
            s += int(sizes[i])
            t_prev = t_next


class _PooledStats:
    """Day statistics concatenated/summed; the likelihood is additive over days."""

    def __init__(self, day_stats, n_types, sbar, nz):
        self.T = sum(d.T for d in day_stats)
        self.dur = sum((d.dur for d in day_stats), start=np.zeros(sbar))
        self.dmat = sum((d.dmat for d in day_stats), start=np.zeros((sbar, nz)))
        self.counts = sum((d.counts for d in day_stats),
                          start=np.zeros((n_types, sbar)))
        self.z_by_type = []
        self.n_by_type = []
        for e in range(n_types):
            blocks = [d.z_ev[d.type_idx == e] for d in day_stats]
            z = np.concatenate(blocks) if blocks else np.zeros((0, nz))
            self.z_by_type.append(z)
            self.n_by_type.append(z.shape[0])


def _day_stats(path, K, betas, sbar):
    return _DayStats(path, K, betas, sbar)


def _pooled_stats(data, K, betas, sbar):
    days = [_DayStats(day, K, betas, sbar) for day in data.days]
    return _PooledStats(days, 2 * K, sbar, 2 * K * len(betas))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _eval(pooled, mus, aflat, ftab, signed, want_grad):
    """Log-likelihood (and gradient pieces) from pooled statistics.

    aflat: (2K, 2K*L) kernel weights per target; ftab: (2K, sbar).
    Returns (ll, clamps, grads or None); grads = (dmu, dalpha, df) arrays.
    """
    n_types, sbar = ftab.shape
    ll = 0.0
    clamps = 0
    dmu = np.zeros(n_types) if want_grad else None
    dalpha = np.zeros_like(aflat) if want_grad else None
    df = np.zeros_like(ftab) if want_grad else None

    bad_f = (pooled.counts > 0) & (ftab <= 0.0)
    if np.any(bad_f):
        pairs = [(int(e), int(s) + 1) for e, s in zip(*np.nonzero(bad_f))]
        logger.warning("events observed where f^e = 0 (type, spread): %s -> -inf", pairs)
        return -np.inf, 0, None

    with np.errstate(divide="ignore"):
        logf = np.where(ftab > 0.0, np.log(np.where(ftab > 0.0, ftab, 1.0)), 0.0)
    ll += float(np.sum(pooled.counts * logf))

    for e in range(n_types):
        z = pooled.z_by_type[e]
        b = mus[e] + z @ aflat[e] if z.size else np.zeros(0)
        if signed:
            raw = b
            b = np.maximum(b, _SIGNED_BRACKET_FLOOR)
            clamps += int(np.sum(raw < _SIGNED_BRACKET_FLOOR))
        with np.errstate(divide="ignore"):
            ll += float(np.sum(np.log(b)))
        dint = pooled.dmat @ aflat[e]  # (sbar,) integrated excitation per level
        comp_levels = mus[e] * pooled.dur + dint
        ll -= float(np.dot(ftab[e], comp_levels))
        if want_grad:
            inv = 1.0 / b
            dmu[e] = float(np.sum(inv)) - float(np.dot(ftab[e], pooled.dur))
            dalpha[e] = (z.T @ inv if z.size else 0.0) - ftab[e] @ pooled.dmat
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(ftab[e] > 0.0, pooled.counts[e] / np.where(
                    ftab[e] > 0.0, ftab[e], 1.0), 0.0)
            df[e] = ratio - comp_levels
    grads = (dmu, dalpha, df) if want_grad else None
    return ll, clamps, grads


def _spec_tables(spec):
    aflat = spec.kernels.alphas.reshape(spec.n_types, -1)
    return spec.mus, aflat, spec.statefns.table


def _check_spec_vs_data(spec, data):
    mx = data.max_jump() if hasattr(data, "max_jump") else 0
    if mx > spec.K:
        raise ConfigurationError(f"data contains jumps of size {mx} > spec K={spec.K}")


def log_likelihood(spec, data):
    """Exact log-likelihood of a Dataset (sum over its days) under spec.

    Events occurring where f^e(S_{t-}) = 0 yield -inf, reported as a
    data/spec inconsistency diagnostic in the log.
    """
    _check_spec_vs_data(spec, data)
    pooled = _pooled_stats(data, spec.K, spec.betas, spec.sbar)
    mus, aflat, ftab = _spec_tables(spec)
    ll, _, _ = _eval(pooled, mus, aflat, ftab, spec.kernels.signed, False)
    return ll


@dataclass
class SpecGradient:
    """Partial derivatives of the log-likelihood, same shapes as the spec tables.

    f entries that are structurally zero or pinned to 1 by the normalization
    are not free parameters; ``f_free_mask`` flags the free ones (their
    partials are still reported in ``f``).
    """

    mus: np.ndarray
    alphas: np.ndarray
    f: np.ndarray
    f_free_mask: np.ndarray


def _first_free_col(e_idx, K):
    """Column of the first non-structural f entry (the normalization pin)."""
    size = event_size(e_idx, K)
    return 0 if size > 0 else -size  # s = 1 for +k, s = k+1 for -k


def _free_f_mask(K, sbar):
    mask = np.ones((2 * K, sbar), dtype=bool)
    for k in range(1, K + 1):
        e = event_index(-k, K)
        mask[e, :k] = False          # structural zeros
    for e in range(2 * K):
        mask[e, _first_free_col(e, K)] = False  # normalization pin
    return mask


def gradient(spec, data):
    """Analytic partials of the log-likelihood with respect to (mu, alpha, f)."""
    _check_spec_vs_data(spec, data)
    pooled = _pooled_stats(data, spec.K, spec.betas, spec.sbar)
    mus, aflat, ftab = _spec_tables(spec)
    ll, _, grads = _eval(pooled, mus, aflat, ftab, spec.kernels.signed, True)
    if grads is None:
        raise ValueError("gradient undefined: likelihood is -inf for this spec/data")
    dmu, dalpha, df = grads
    return SpecGradient(dmu, dalpha.reshape(spec.kernels.alphas.shape), df,
                        _free_f_mask(spec.K, spec.sbar))


def compensator_at_events(spec, path):
    """Per-type integrated intensities Lambda^e evaluated at the event times.

    Returns (lam_events, lam_end): lam_events[i, e] = Lambda^e(t_i) and
    lam_end[e] = Lambda^e(T).  Non-decreasing in t by construction; the
    time-rescaled per-type increments are Exp(1) under the true model.
    """
    _check_spec_vs_data(spec, _SinglePath(path))
    K, L = spec.K, spec.L
    n_types = 2 * K
    nz = n_types * L
    betas = [float(b) for b in spec.kernels.betas]
    mus = [float(m) for m in spec.mus]
    aflat = [[float(a) for a in spec.kernels.alphas[e].ravel()] for e in range(n_types)]
    ftab = spec.statefns.table
    sbar = spec.sbar
    times = path.times
    sizes = path.sizes
    n = path.n_events

    lam_events = np.zeros((n, n_types))
    cum = [0.0] * n_types
    z = [0.0] * nz
    s = int(path.s0)
    t_prev = 0.0
    exp = math.exp
    expm1 = math.expm1
    for i in range(n + 1):
        t_next = times[i] if i < n else path.horizon
        delta = t_next - t_prev
        col = (s if s < sbar else sbar) - 1
        if delta > 0.0:
            dint = [0.0] * nz
            for l in range(L):
                e_l = exp(-betas[l] * delta)
                g_l = -expm1(-betas[l] * delta) / betas[l]
                for k in range(l, nz, L):
                    dint[k] = z[k] * g_l
                    z[k] *= e_l
            for e in range(n_types):
                fe = ftab[e, col]
                if fe != 0.0:
                    acc = mus[e] * delta
                    ae = aflat[e]
                    for k in range(nz):
                        acc += ae[k] * dint[k]
                    cum[e] += fe * acc
        if i == n:
            break
        lam_events[i] = cum
        e_idx = event_index(int(sizes[i]), K)
        base = e_idx * L
        for l in range(L):
            z[base + l] += betas[l]
        s += int(sizes[i])
        t_prev = t_next
    return lam_events, np.asarray(cum)


class _SinglePath:
    def __init__(self, path):
        self.days = [path]
        self._path = path

    def max_jump(self):
        return self._path.max_jump()


def rescaled_increments(spec, path):
    """Per-type compensated inter-arrival increments, Exp(1) under the model.

    Returns a dict {size: increments array} over the types present.
    """
    lam_events, _ = compensator_at_events(spec, path)
    out = {}
    for size in spec.sizes():
        e = event_index(size, spec.K)
        at_own = lam_events[path.sizes == size, e]
        if at_own.size:
            out[size] = np.diff(np.concatenate(([0.0], at_own)))
    return out


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

class _Packing:
    """Flat parameter vector layout: mus, alphas, then free f entries."""

    def __init__(self, config):
        self.K = config.K
        self.L = config.L
        self.sbar = config.sbar
        self.n_types = 2 * config.K
        self.nz = self.n_types * config.L
        self.mask = _free_f_mask(config.K, config.sbar)
        self.f_idx = np.argwhere(self.mask)
        self.n_mu = self.n_types
        self.n_alpha = self.n_types * self.nz
        self.n_f = self.f_idx.shape[0]
        self.n_params = self.n_mu + self.n_alpha + self.n_f
        self.pins = {e: _first_free_col(e, config.K) for e in range(self.n_types)}

    def pack(self, mus, alphas, ftab):
        return np.concatenate([
            np.asarray(mus, dtype=float),
            np.asarray(alphas, dtype=float).ravel(),
            np.asarray(ftab, dtype=float)[self.mask],
        ])

    def unpack(self, x):
        mus = x[:self.n_mu]
        aflat = x[self.n_mu:self.n_mu + self.n_alpha].reshape(self.n_types, self.nz)
        ftab = np.zeros((self.n_types, self.sbar))
        for e, pin in self.pins.items():
            ftab[e, pin] = 1.0
        ftab[self.mask] = x[self.n_mu + self.n_alpha:]
        return mus, aflat, ftab

    def pack_grad(self, dmu, dalpha, df):
        return np.concatenate([dmu, dalpha.ravel(), df[self.mask]])

    def bounds(self, config):
        b = [(config.mu_floor, None)] * self.n_mu
        if config.signed_alpha:
            b += [(None, None)] * self.n_alpha
        else:
            b += [(0.0, None)] * self.n_alpha
        b += [(config.f_floor, None)] * self.n_f
        return b

    def to_spec(self, x, config):
        mus, aflat, ftab = self.unpack(x)
        kern = KernelParams(np.asarray(config.betas),
                            aflat.reshape(self.n_types, self.n_types, self.L),
                            signed=config.signed_alpha)
        return ModelSpec(config.K, mus, kern, StateFunctions(ftab))


def default_init(data, config):
    """Well-scaled feasible start: empirical per-type rates, small uniform
    kernel weights, f from relative per-state event rates."""
    pooled = _pooled_stats(data, config.K, config.betas, config.sbar)
    return _default_init_from_pooled(pooled, config)


def _default_init_from_pooled(pooled, config):
    n_types = 2 * config.K
    T = max(pooled.T, 1e-12)
    mus = np.maximum(pooled.counts.sum(axis=1) / T, 1e-6)
    alphas = np.full((n_types, n_types, config.L), config.alpha_init)
    mask = _free_f_mask(config.K, config.sbar)
    layout = _Packing(config)
    ftab = np.zeros((n_types, config.sbar))
    dur_safe = np.maximum(pooled.dur, 1e-12)
    for e in range(n_types):
        rates = pooled.counts[e] / dur_safe
        pin = layout.pins[e]
        scale = rates[pin] if rates[pin] > 0 else (rates.max() if rates.max() > 0 else 1.0)
        row = rates / scale
        row[pin] = 1.0
        free = mask[e]
        row[free] = np.maximum(row[free], 1e-3)
        row[~mask[e]] = 0.0
        row[pin] = 1.0
        ftab[e] = row
    return layout.to_spec(layout.pack(mus, alphas, ftab), config)


def fit(data, config, init=None):
    """Maximize the log-likelihood over (mu, alpha, f) under the constraints
    mu >= mu_floor, alpha >= 0 (default mode) and f >= f_floor, with the
    structural zeros and the first-non-zero-equals-1 normalization built
    into the parameterization.

    Returns a FitReport; converged=False when the iteration cap is reached.
    """
    if not data.days:
        raise ConfigurationError("dataset is empty")
    _check_spec_vs_data_config(config, data)
    t0 = time.monotonic()
    pooled = _pooled_stats(data, config.K, config.betas, config.sbar)
    layout = _Packing(config)
    if init is None:
        init = _default_init_from_pooled(pooled, config)
    x0 = layout.pack(init.mus, init.kernels.alphas, init.statefns.table)
    x0 = np.clip(x0, [lo if lo is not None else -np.inf for lo, _ in layout.bounds(config)],
                 np.inf)

    signed = config.signed_alpha

    def objective(x):
        mus, aflat, ftab = layout.unpack(x)
        ll, _, grads = _eval(pooled, mus, aflat, ftab, signed, True)
        if not np.isfinite(ll) or grads is None:
            return np.inf, np.zeros_like(x)
        dmu, dalpha, df = grads
        return -ll, -layout.pack_grad(dmu, dalpha, df)

    ll0 = -objective(x0)[0]
    if not np.isfinite(ll0):
        raise InitializationError("log-likelihood is not finite at the initial point")

    trace = [ll0]

    def callback(xk):
        mus, aflat, ftab = layout.unpack(xk)
        ll, _, _ = _eval(pooled, mus, aflat, ftab, signed, False)
        trace.append(ll)

    res = minimize(objective, x0, jac=True, method="L-BFGS-B",
                   bounds=layout.bounds(config), callback=callback,
                   options={"maxiter": config.max_iter, "ftol": config.ftol,
                            "gtol": config.gtol})

    spec = layout.to_spec(res.x, config)
    mus, aflat, ftab = layout.unpack(res.x)
    ll, clamps, _ = _eval(pooled, mus, aflat, ftab, signed, False)
    return FitReport(
        spec=spec,
        loglik=float(ll),
        trace=trace,
        converged=bool(res.success),
        n_iterations=int(res.nit),
        clamp_count=int(clamps),
        n_free_params=free_param_count(config.K, config.L, config.sbar),
        wall_time_s=time.monotonic() - t0,
        config=config,
        message=str(res.message),
    )


def _check_spec_vs_data_config(config, data):
    mx = data.max_jump()
    if mx > config.K:
        raise ConfigurationError(f"data contains jumps of size {mx} > config K={config.K}")
