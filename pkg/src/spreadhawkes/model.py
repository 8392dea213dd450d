"""Domain types for the state-dependent spread Hawkes model.

The spread S_t of a limit order book, in ticks, is a right-continuous
integer process >= 1.  Jumps of signed size e in {-K..-1, +1..+K} are
counted by per-type processes whose intensities follow

    lambda^e(t) = f^e(S_{t-}) * (mu^e + sum_{e',l} alpha[e,e',l] * z^{e',l}(t))

where z^{e',l}(t) = beta_l * integral of exp(-beta_l (t-s)) dS^{e'}_s is the
decayed event memory.  Because the decay grid beta_l is shared across all
kernel entries, the 2K*L table z is a Markov state: it decays exponentially
between events and jumps by beta_l when a source event occurs.

Timestamps are stored as int64 nanoseconds to keep event ordering exact;
all arithmetic is done in float seconds.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, SpreadInvariantError

logger = logging.getLogger(__name__)

NS = 1_000_000_000  # nanoseconds per second


# ---------------------------------------------------------------------------
# Event types
# ---------------------------------------------------------------------------

def event_sizes(K):
    """Ordered jump sizes [+1..+K, -1..-K] for a model with max size K."""
    return list(range(1, K + 1)) + list(range(-1, -K - 1, -1))


def event_index(size, K):
    """Index of a signed jump size in the event ordering [+1..+K, -1..-K]."""
    if not isinstance(size, (int, np.integer)) or size == 0 or abs(size) > K:
        raise ValueError(f"invalid event size {size!r} for K={K}")
    return size - 1 if size > 0 else K - size - 1


def event_size(index, K):
    """Inverse of event_index."""
    if not 0 <= index < 2 * K:
        raise ValueError(f"event index {index} out of range for K={K}")
    return index + 1 if index < K else K - index - 1


class JumpEvent(NamedTuple):
    """One spread change: time in seconds, signed size in ticks."""
    time: float
    size: int


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpreadPath:
    """One realization: initial spread plus timestamped signed jumps.

    Times are int64 nanoseconds in [0, horizon_ns], strictly increasing.
    The running spread s0 + cumsum(sizes) must stay >= 1 at every event.
    Use :meth:`from_events` to build from float seconds (it also resolves
    duplicate timestamps).
    """

    s0: int
    horizon_ns: int
    times_ns: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times_ns, dtype=np.int64)
        sizes = np.asarray(self.sizes, dtype=np.int64)
        object.__setattr__(self, "times_ns", times)
        object.__setattr__(self, "sizes", sizes)
        if times.ndim != 1 or sizes.shape != times.shape:
            raise ValueError("times_ns and sizes must be 1-d arrays of equal length")
        if int(self.s0) < 1:
            raise SpreadInvariantError(f"initial spread {self.s0} < 1")
        if self.horizon_ns < 0:
            raise ValueError("horizon must be non-negative")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("event times must be strictly increasing (ties forbidden)")
            if times[0] < 0 or times[-1] > self.horizon_ns:
                raise ValueError("event times must lie in [0, horizon]")
            if np.any(sizes == 0):
                raise ValueError("jump sizes must be non-zero")
            running = self.s0 + np.cumsum(sizes)
            if running.min() < 1:
                i = int(np.argmax(running < 1))
                raise SpreadInvariantError(
                    f"event {i} (t={times[i] / NS:.9f}s, jump {sizes[i]:+d}) drives spread to "
                    f"{running[i]} < 1")

    @classmethod
    def from_events(cls, s0, horizon, times, sizes, fix_ties=True):
        """Build a path from float-second times; optionally resolve ties.

        Exact duplicate timestamps are perturbed by +1 ns in arrival order
        and logged as a warning.
        """
        times_ns = np.asarray(np.round(np.asarray(times, dtype=float) * NS), dtype=np.int64)
        sizes = np.asarray(sizes, dtype=np.int64)
        order = np.argsort(times_ns, kind="stable")
        times_ns = times_ns[order]
        sizes = sizes[order]
        if fix_ties and times_ns.size:
            bumped = 0
            for i in range(1, times_ns.size):
                if times_ns[i] <= times_ns[i - 1]:
                    times_ns[i] = times_ns[i - 1] + 1
                    bumped += 1
            if bumped:
                logger.warning("perturbed %d duplicate timestamp(s) by +1 ns", bumped)
        horizon_ns = int(round(float(horizon) * NS))
        if times_ns.size and times_ns[-1] > horizon_ns:
            horizon_ns = int(times_ns[-1])
        return cls(int(s0), horizon_ns, times_ns, sizes)

    @property
    def horizon(self):
        return self.horizon_ns / NS

    @property
    def times(self):
        return self.times_ns / NS

    @property
    def n_events(self):
        return int(self.times_ns.size)

    def spreads_after(self):
        """Spread immediately after each event, S(t_i+)."""
        return self.s0 + np.cumsum(self.sizes)

    def spreads_before(self):
        """Spread immediately before each event, S(t_i-)."""
        after = self.spreads_after()
        return np.concatenate(([self.s0], after[:-1]))

    def spread_at(self, t):
        """Right-continuous spread value(s) at time(s) t (seconds)."""
        t_ns = np.asarray(np.round(np.asarray(t, dtype=float) * NS), dtype=np.int64)
        cum = np.concatenate(([0], np.cumsum(self.sizes)))
        idx = np.searchsorted(self.times_ns, t_ns, side="right")
        out = self.s0 + cum[idx]
        return int(out) if np.isscalar(t) else out

    def events(self):
        """Iterate events as JumpEvent(time_seconds, size)."""
        for t, j in zip(self.times_ns, self.sizes):
            yield JumpEvent(t / NS, int(j))

    def max_jump(self):
        return int(np.abs(self.sizes).max()) if self.n_events else 0


# ---------------------------------------------------------------------------
# Model parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelParams:
    """Sum-of-exponentials kernel bank phi[e,e'](t) = sum_l alpha[e,e',l] beta_l exp(-beta_l t).

    The decay grid betas is shared by every (e, e') entry; alphas has shape
    (2K, 2K, L) indexed [target, source, decay].  alphas must be >= 0 unless
    ``signed`` is set (estimation experiments only).
    """

    betas: np.ndarray
    alphas: np.ndarray
    signed: bool = False

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        alphas = np.asarray(self.alphas, dtype=float)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        if betas.ndim != 1 or betas.size == 0:
            raise ConfigurationError("betas must be a non-empty 1-d array")
        if np.any(betas <= 0) or np.any(np.diff(betas) <= 0):
            raise ConfigurationError("betas must be strictly positive and strictly increasing")
        if alphas.ndim != 3 or alphas.shape[0] != alphas.shape[1] or alphas.shape[2] != betas.size:
            raise ConfigurationError(
                f"alphas must have shape (2K, 2K, L); got {alphas.shape} with L={betas.size}")
        if alphas.shape[0] % 2 != 0:
            raise ConfigurationError("alphas first axis must have even length 2K")
        if not self.signed and np.any(alphas < 0):
            raise ConfigurationError("alphas must be non-negative (set signed=True to allow)")
        if not np.all(np.isfinite(alphas)) or not np.all(np.isfinite(betas)):
            raise ConfigurationError("kernel parameters must be finite")

    @property
    def L(self):
        return int(self.betas.size)

    @property
    def n_types(self):
        return int(self.alphas.shape[0])

    def phi(self, target_idx, source_idx, t):
        """Kernel value(s) phi^{target,source}(t)."""
        t = np.asarray(t, dtype=float)
        a = self.alphas[target_idx, source_idx]
        return np.einsum("l,l,...l->...", a, self.betas,
                         np.exp(-np.multiply.outer(t, self.betas)))

    def l1_norms(self):
        """Matrix of kernel L1 norms, ||phi^{e,e'}||_1 = sum_l alpha[e,e',l]."""
        return self.alphas.sum(axis=2)


@dataclass(frozen=True)
class StateFunctions:
    """Spread-state multipliers f^e(s), stored densely for s = 1..sbar.

    table has shape (2K, sbar); f^e(s) = table[e, min(s, sbar) - 1] (constant
    tail beyond sbar).  Structural zeros f^{-k}(s) = 0 for s <= k are
    enforced.  The identifiability convention "first non-zero value equals 1"
    is reported by :meth:`is_normalized` and applied by :meth:`normalized`;
    it is not forced at construction so that rescaled instances remain
    representable.
    """

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        object.__setattr__(self, "table", table)
        if table.ndim != 2 or table.shape[0] % 2 != 0:
            raise ConfigurationError("state-function table must have shape (2K, sbar)")
        K = table.shape[0] // 2
        if table.shape[1] < K + 1:
            raise ConfigurationError(f"sbar must be at least K+1 = {K + 1}")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ConfigurationError("state-function values must be finite and non-negative")
        for k in range(1, K + 1):
            e = event_index(-k, K)
            if np.any(table[e, :k] != 0.0):
                raise ConfigurationError(
                    f"f^(-{k})(s) must be 0 for s <= {k} (spread cannot drop below 1)")

    @property
    def K(self):
        return self.table.shape[0] // 2

    @property
    def sbar(self):
        return int(self.table.shape[1])

    def value(self, e_idx, spread):
        """f^e(spread) with the constant tail beyond sbar."""
        s = min(int(spread), self.sbar)
        if s < 1:
            raise ValueError(f"spread {spread} < 1")
        return float(self.table[e_idx, s - 1])

    def first_free_index(self, e_idx):
        """Column of the first non-structural entry (the normalization pin)."""
        K = self.K
        size = event_size(e_idx, K)
        return 0 if size > 0 else -size  # s = 1 for +k, s = k+1 for -k

    def is_normalized(self, tol=0.0):
        """True when the first non-zero value of every row equals 1."""
        for e in range(self.table.shape[0]):
            row = self.table[e]
            nz = np.nonzero(row)[0]
            if nz.size and abs(row[nz[0]] - 1.0) > tol:
                return False
        return True

    def normalized(self):
        """Rescale each row so its first non-zero value is 1.

        Returns (new StateFunctions, scale factors per row).  Row e scaled by
        1/c must be compensated by scaling mu^e and alpha[e,:,:] by c to keep
        intensities unchanged.
        """
        table = self.table.copy()
        scales = np.ones(table.shape[0])
        for e in range(table.shape[0]):
            nz = np.nonzero(table[e])[0]
            if nz.size:
                scales[e] = table[e, nz[0]]
                table[e] /= scales[e]
        return StateFunctions(table), scales


@dataclass(frozen=True)
class ModelSpec:
    """Full parameterization: max jump size K, baselines, kernels, state functions."""

    K: int
    mus: np.ndarray
    kernels: KernelParams
    statefns: StateFunctions

    def __post_init__(self):
        mus = np.asarray(self.mus, dtype=float)
        object.__setattr__(self, "mus", mus)
        if self.K < 1:
            raise ConfigurationError("K must be >= 1")
        n = 2 * self.K
        if mus.shape != (n,):
            raise ConfigurationError(f"mus must have shape ({n},); got {mus.shape}")
        if np.any(mus < 0) or not np.all(np.isfinite(mus)):
            raise ConfigurationError("baseline intensities must be finite and non-negative")
        if self.kernels.n_types != n:
            raise ConfigurationError("kernel table size inconsistent with K")
        if self.statefns.K != self.K:
            raise ConfigurationError("state-function table size inconsistent with K")

    @property
    def L(self):
        return self.kernels.L

    @property
    def betas(self):
        return self.kernels.betas

    @property
    def sbar(self):
        return self.statefns.sbar

    @property
    def n_types(self):
        return 2 * self.K

    def sizes(self):
        return event_sizes(self.K)

    def rescaled(self, factors):
        """Multiply f^e by factors[e] and divide (mu^e, alpha[e,:,:]) by it.

        Leaves every intensity (hence the likelihood) unchanged.
        """
        factors = np.asarray(factors, dtype=float)
        if factors.shape != (self.n_types,) or np.any(factors <= 0):
            raise ValueError("factors must be positive, one per event type")
        table = self.statefns.table * factors[:, None]
        mus = self.mus / factors
        alphas = self.kernels.alphas / factors[:, None, None]
        return ModelSpec(self.K, mus,
                         KernelParams(self.kernels.betas, alphas, self.kernels.signed),
                         StateFunctions(table))


# --- serialization ---------------------------------------------------------

def spec_to_dict(spec):
    return {
        "K": spec.K,
        "betas": spec.kernels.betas.tolist(),
        "mus": spec.mus.tolist(),
        "alphas": spec.kernels.alphas.tolist(),
        "f": spec.statefns.table.tolist(),
        "sbar": spec.sbar,
        "signed": bool(spec.kernels.signed),
    }


def spec_from_dict(d):
    try:
        return ModelSpec(
            K=int(d["K"]),
            mus=np.asarray(d["mus"], dtype=float),
            kernels=KernelParams(np.asarray(d["betas"], dtype=float),
                                 np.asarray(d["alphas"], dtype=float),
                                 bool(d.get("signed", False))),
            statefns=StateFunctions(np.asarray(d["f"], dtype=float)),
        )
    except KeyError as exc:
        raise ConfigurationError(f"model spec document missing field {exc}") from exc


def spec_to_json(spec, path=None):
    """Serialize to JSON (lossless: floats use shortest round-trip repr)."""
    text = json.dumps(spec_to_dict(spec), indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def spec_from_json(source):
    """Load a spec from a JSON string or file path."""
    text = source
    if "{" not in str(source):
        with open(source) as fh:
            text = fh.read()
    return spec_from_dict(json.loads(text))


def spec_hash(spec):
    """sha256 of the canonical JSON serialization."""
    canon = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Markov excitation state and its exact flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExcitationState:
    """Current spread plus the decayed event-memory table z[source, decay].

    z is target-independent because the decay grid is shared: the excitation
    felt by target e is sum_{e',l} alpha[e,e',l] * z[e',l].
    """

    spread: int
    z: np.ndarray
    last_time: float = 0.0

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        object.__setattr__(self, "z", z)
        if z.ndim != 2:
            raise ValueError("z must be a (2K, L) array")
        if self.spread < 1:
            raise SpreadInvariantError(f"spread {self.spread} < 1")
        if np.any(z < 0):
            raise ValueError("z accumulators must be non-negative")


def cold_state(spec, s0=1):
    """State with no event memory at spread s0."""
    return ExcitationState(int(s0), np.zeros((spec.n_types, spec.L)), 0.0)


def advance(spec, state, dt):
    """Flow the state forward dt seconds with no events: z decays, spread holds."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    decay = np.exp(-spec.kernels.betas * float(dt))
    return ExcitationState(state.spread, state.z * decay, state.last_time + float(dt))


def apply_jump(spec, state, size):
    """Apply an event of the given signed size at the current instant.

    The spread moves by ``size`` and the source accumulators jump by beta_l.
    """
    idx = event_index(int(size), spec.K)
    new_spread = state.spread + int(size)
    if new_spread < 1:
        raise SpreadInvariantError(
            f"jump {size:+d} from spread {state.spread} would give {new_spread} < 1")
    z = state.z.copy()
    z[idx] += spec.kernels.betas
    return ExcitationState(new_spread, z, state.last_time)


def intensity(spec, state, size):
    """lambda^e at the current state for the event type with the given size."""
    idx = event_index(int(size), spec.K)
    if state.z.shape != (spec.n_types, spec.L):
        raise ValueError(f"state z shape {state.z.shape} does not match spec "
                         f"({spec.n_types}, {spec.L})")
    bracket = spec.mus[idx] + float(np.sum(spec.kernels.alphas[idx] * state.z))
    if bracket < 0.0:  # only reachable in signed-alpha mode
        bracket = 0.0
    return spec.statefns.value(idx, state.spread) * bracket


def total_intensity(spec, state):
    """Sum of lambda^e over all 2K event types (thinning upper bound).

    Non-increasing between events: f is constant while z only decays.
    """
    return sum(intensity(spec, state, s) for s in spec.sizes())


def state_at(spec, path, t, window=None):
    """Excitation state of a path at time t (post any event exactly at t).

    With ``window``, only events in (t - window, t] contribute memory; the
    spread still reflects the full history.
    """
    t = float(t)
    if t < 0 or t > path.horizon + 1e-12:
        raise ValueError(f"t={t} outside [0, {path.horizon}]")
    times = path.times
    mask = times <= t
    if window is not None:
        mask &= times > t - float(window)
    z = np.zeros((spec.n_types, spec.L))
    ts = times[mask]
    js = path.sizes[np.nonzero(mask)[0]]
    for e_idx in range(spec.n_types):
        sel = js == event_size(e_idx, spec.K)
        if np.any(sel):
            z[e_idx] = np.sum(spec.kernels.betas[None, :]
                              * np.exp(-np.outer(t - ts[sel], spec.kernels.betas)), axis=0)
    return ExcitationState(int(path.spread_at(t)), z, t)
