"""Exact simulation of spread paths by thinning.

Between events every per-type intensity is non-increasing (the state
multiplier f is frozen while the memory z and any decaying baseline only
decay), so the current total intensity is a valid dominating rate for the
next candidate.  The bound is refreshed after every candidate, accepted or
not, which makes the scheme exact with no tuning.

Randomness comes from numpy's Philox counter-based generator keyed by
(seed, stream); batches (Monte-Carlo paths, synthetic days) use the batch
index as the stream, so parallel or re-ordered execution reproduces the
same paths.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ExplosionError
from .model import (ExcitationState, KernelParams, ModelSpec, SpreadPath,
                    StateFunctions, cold_state)

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1

DEFAULT_CANDIDATE_CAP = 10 ** 8


def stream_generator(seed, stream=0):
    """Philox generator for (seed, stream); distinct streams are independent."""
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class _UniformBuffer:
    """Serves uniforms from block draws; ~10x faster than scalar Generator calls."""

    def __init__(self, gen, block=8192):
        self._gen = gen
        self._block = block
        self._buf = gen.random(block)
        self._i = 0

    def next(self):
        i = self._i
        if i == self._block:
            self._buf = self._gen.random(self._block)
            i = 0
        self._i = i + 1
        return self._buf[i]


@dataclass(frozen=True)
class DecayingBaseline:
    """Time-varying baseline mu~^e(t) = mus[e] + sum_{e',l} alpha[e,e',l] w[e',l] e^{-beta_l t}.

    ``weights`` plays the role of extra event memory present at t=0 that
    receives no further jumps; since it obeys the same decay as z it is
    folded into the initial state, which keeps the thinning bound exact.
    """

    mus: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mus", np.asarray(self.mus, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if np.any(self.mus < 0) or np.any(self.weights < 0):
            raise ConfigurationError("baseline terms must be non-negative")


def _validate_statefns(spec):
    if not spec.statefns.is_normalized(tol=1e-12):
        raise ConfigurationError(
            "state functions are not normalized (first non-zero value of each f^e must be 1); "
            "use StateFunctions.normalized() / ModelSpec.rescaled()")


def _thinning(spec, s0, z0, mus, horizon, gen, cap):
    """Core loop. Returns (times, sizes) as Python lists of floats/ints."""
    n_types = spec.n_types
    L = spec.L
    betas = [float(b) for b in spec.kernels.betas]
    mus = [float(m) for m in mus]
    # flat layouts: z[e'*L + l]; alpha rows per target over the same layout
    alpha = [[float(a) for a in spec.kernels.alphas[e].ravel()] for e in range(n_types)]
    ftab = spec.statefns.table
    sbar = spec.statefns.sbar
    f = [[float(v) for v in ftab[e]] for e in range(n_types)]
    sizes_of = spec.sizes()

    z = [float(v) for v in np.asarray(z0, dtype=float).ravel()]
    s = int(s0)
    horizon = float(horizon)
    buf = _UniformBuffer(gen)
    exp = math.exp
    log = math.log
    nz = n_types * L

    def intensities():
        col = s - 1 if s < sbar else sbar - 1
        lam = []
        tot = 0.0
        for e in range(n_types):
            fe = f[e][col]
            if fe == 0.0:
                lam.append(0.0)
                continue
            b = mus[e]
            ae = alpha[e]
            for k in range(nz):
                b += ae[k] * z[k]
            le = fe * b
            lam.append(le)
            tot += le
        return lam, tot

    lam, bound = intensities()
    t = 0.0
    times = []
    out_sizes = []
    n_cand = 0
    while bound > 0.0:
        n_cand += 1
        if n_cand > cap:
            raise ExplosionError(
                f"thinning exceeded {cap} candidates at t={t:.3f}s with bound {bound:.3g}/s "
                f"({len(times)} events so far); the configuration looks explosive")
        dt = -log(1.0 - buf.next()) / bound
        tc = t + dt
        if tc > horizon:
            break
        # decay the memory to the candidate time
        for l in range(L):
            d = exp(-betas[l] * dt)
            for k in range(l, nz, L):
                z[k] *= d
        t = tc
        lam, tot = intensities()
        if buf.next() * bound <= tot:
            # accept; pick the type proportionally to lam
            pick = buf.next() * tot
            cum = 0.0
            chosen = -1
            for e in range(n_types):
                le = lam[e]
                if le <= 0.0:
                    continue
                cum += le
                chosen = e
                if pick < cum:
                    break
            size = sizes_of[chosen]
            s += size
            base = chosen * L
            for l in range(L):
                z[base + l] += betas[l]
            times.append(t)
            out_sizes.append(size)
            lam, bound = intensities()
        else:
            bound = tot
    return times, out_sizes


def simulate_from_state(spec, state, horizon, seed, stream=0, baseline=None,
                        max_candidates=DEFAULT_CANDIDATE_CAP):
    """Simulate forward from a warm excitation state.

    The returned path uses a local clock (t=0 is the state's instant) and
    s0 = state.spread.  ``baseline``, when given, replaces the constant
    mus by the decaying form of :class:`DecayingBaseline`; with a cold state
    and no baseline this is seed-for-seed identical to :func:`simulate`.
    """
    _validate_statefns(spec)
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if state.z.shape != (spec.n_types, spec.L):
        raise ValueError("state dimensions do not match the spec")
    mus = spec.mus
    z0 = state.z
    if baseline is not None:
        if baseline.mus.shape != (spec.n_types,) or baseline.weights.shape != z0.shape:
            raise ConfigurationError("baseline dimensions do not match the spec")
        mus = baseline.mus
        z0 = z0 + baseline.weights
    gen = stream_generator(seed, stream)
    times, sizes = _thinning(spec, state.spread, z0, mus, horizon, gen, max_candidates)
    return SpreadPath.from_events(state.spread, horizon, times, sizes)


def simulate(spec, horizon, s0=1, seed=0, stream=0, max_candidates=DEFAULT_CANDIDATE_CAP):
    """Simulate a path from a cold start at spread s0 on [0, horizon] seconds.

    Deterministic given (spec, horizon, s0, seed, stream); event types with
    f^e = 0 at the current spread are never generated, so the running spread
    stays >= 1 by construction.
    """
    if s0 < 1:
        raise ValueError("s0 must be >= 1")
    return simulate_from_state(spec, cold_state(spec, s0), horizon, seed,
                               stream=stream, max_candidates=max_candidates)


# ---------------------------------------------------------------------------
# Presets: the two single-exponential predecessors as K=1 configurations
# ---------------------------------------------------------------------------

def _indicator_statefns():
    # f^+ == 1 everywhere; f^-(1) = 0, f^-(s >= 2) = 1
    return StateFunctions(np.array([[1.0, 1.0], [0.0, 1.0]]))


def preset_zheng(mu_plus, mu_minus, alphas, beta):
    """K=1, L=1 model with indicator state functions and a full 2x2 kernel.

    ``alphas`` is the 2x2 matrix [[a++, a+-], [a-+, a--]] of kernel L1 norms.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (2, 2):
        raise ConfigurationError("zheng preset needs a 2x2 alpha matrix")
    return ModelSpec(1, np.array([mu_plus, mu_minus], dtype=float),
                     KernelParams(np.array([float(beta)]), alphas[:, :, None]),
                     _indicator_statefns())


def preset_fosset(mu_plus, mu_minus, alpha, beta):
    """Simplified K=1 model: self-excitation on upward jumps only."""
    alphas = np.zeros((2, 2, 1))
    alphas[0, 0, 0] = float(alpha)
    return ModelSpec(1, np.array([mu_plus, mu_minus], dtype=float),
                     KernelParams(np.array([float(beta)]), alphas),
                     _indicator_statefns())


def fosset_alpha_critical(mu_plus, mu_minus):
    """Critical self-excitation alpha_c = 1 - mu+/mu- separating the regimes."""
    return 1.0 - mu_plus / mu_minus


def preset(name, **params):
    """Named preset dispatch: 'zheng' or 'fosset'."""
    try:
        if name == "zheng":
            return preset_zheng(params["mu_plus"], params["mu_minus"],
                                params["alphas"], params["beta"])
        if name == "fosset":
            return preset_fosset(params["mu_plus"], params["mu_minus"],
                                 params["alpha"], params["beta"])
    except KeyError as exc:
        raise ConfigurationError(f"preset {name!r} missing parameter {exc}") from exc
    raise ConfigurationError(f"unknown preset {name!r} (expected 'zheng' or 'fosset')")
