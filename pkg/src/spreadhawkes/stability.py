"""Ergodicity condition checkers for the spread model.

For K = 1, L = 1 the process (spread, memory) is V-uniformly ergodic when

  (A1) f^-(1) = 0,
  (A2) f^-(S) >= gamma*S for some gamma > 0 whenever S >= 2,
  (A3) sup_S f^+(S) * (alpha^{+,+} + alpha^{+,-}) < 1.

The drift proof behind (A3) needs positive weights eta_{e,e'}, eta with

  (H1) eta12*a12 + eta22*a22 < eta
  (H2) eta11*a11 + eta21*a21 + eta < eta11
  (H3) eta11*a11 + eta21*a21 + eta < eta12

(indices 1 = up, 2 = down) and an explicit choice exists whenever
a11 + a12 < 1: with delta = ((1-a11)/a12 - 1)/2,

  eta11 = 1, eta12 = (1-a11)/a12 - delta,
  eta21 = delta*a12/(4*a21), eta22 = delta*a12/(4*a22),
  eta = 1 - a11 - delta*a12/2.

For K = 2 the analogous conditions replace (A2) by growth of
max(f^-1, f^-2) and (H) by four linear inequality families; no explicit
weight formula is available, so feasibility is decided by a small linear
program maximizing the minimum slack.

A constant-tail f^- (the estimation convention) can never satisfy the
growth condition as S -> infinity; checkers evaluate it on the modelled
range 1..sbar and raise a separate "tail violated" flag instead of
conflating the two.
"""

from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigurationError
from .model import event_index

_ETA_LO = 1e-6
_ETA_HI = 1e6
_FEASIBLE_SLACK = 1e-9


@dataclass
class ConditionResult:
    passed: bool
    witnesses: dict = field(default_factory=dict)
    note: str = ""


@dataclass
class StabilityReport:
    """Outcome per condition plus the overall verdict.

    ``overall`` is the conjunction of the condition results on the modelled
    range; ``tail_violated`` records that the constant tail of f^- cannot
    dominate gamma*S for arbitrarily large spreads (always true for the
    dense-table representation) and is reported separately.
    """

    conditions: dict
    overall: bool
    tail_violated: bool
    eta: dict = None
    heuristic: bool = False
    note: str = ""

    def to_dict(self):
        return {
            "conditions": {k: asdict(v) for k, v in self.conditions.items()},
            "overall": self.overall,
            "tail_violated": self.tail_violated,
            "eta": self.eta,
            "heuristic": self.heuristic,
            "note": self.note,
        }


# ---------------------------------------------------------------------------
# Explicit weight construction (K = 1)
# ---------------------------------------------------------------------------

@dataclass
class EtaResult:
    feasible: bool
    eta11: float = float("nan")
    eta12: float = float("nan")
    eta21: float = float("nan")
    eta22: float = float("nan")
    eta: float = float("nan")
    h1: bool = False
    h2: bool = False
    h3: bool = False
    reason: str = ""

    def as_vector(self):
        return np.array([self.eta11, self.eta12, self.eta21, self.eta22, self.eta])


def construct_eta(alpha):
    """Explicit positive weights for the K=1 drift conditions.

    alpha is the 2x2 matrix [[a11, a12], [a21, a22]] with 1 = up, 2 = down
    (a12 couples down-source to up-target).  Requires a11 + a12 < 1 and
    strictly positive a12, a21, a22; returns the weight vector and the
    truth of (H1)-(H3) at it, or an infeasibility result naming the
    violated precondition.
    """
    a = np.asarray(alpha, dtype=float)
    if a.shape != (2, 2):
        raise ValueError("alpha must be a 2x2 matrix")
    a11, a12, a21, a22 = a[0, 0], a[0, 1], a[1, 0], a[1, 1]
    if a11 + a12 >= 1:
        return EtaResult(False, reason=f"a11 + a12 = {a11 + a12:.6g} >= 1")
    for name, val in (("a12", a12), ("a21", a21), ("a22", a22)):
        if val <= 0:
            return EtaResult(False, reason=f"{name} = {val:.6g} <= 0")
    delta = 0.5 * ((1.0 - a11) / a12 - 1.0)
    eta11 = 1.0
    eta12 = (1.0 - a11) / a12 - delta
    eta21 = delta * a12 / (4.0 * a21)
    eta22 = delta * a12 / (4.0 * a22)
    eta = 1.0 - a11 - 0.5 * delta * a12
    lhs_up = eta11 * a11 + eta21 * a21 + eta
    h1 = eta12 * a12 + eta22 * a22 < eta
    h2 = lhs_up < eta11
    h3 = lhs_up < eta12
    return EtaResult(h1 and h2 and h3, eta11, eta12, eta21, eta22, eta, h1, h2, h3)


# ---------------------------------------------------------------------------
# K = 1 checker
# ---------------------------------------------------------------------------

def _f_rows(spec):
    return spec.statefns.table


def check_k1(spec):
    """Check (A1)-(A3) for a K=1, L=1 spec; witnesses are attached per condition."""
    if spec.K != 1 or spec.L != 1:
        raise ConfigurationError("check_k1 handles K=1, L=1 only; use check_general")
    f = _f_rows(spec)
    f_up, f_down = f[0], f[1]
    sbar = spec.sbar

    a1 = ConditionResult(bool(f_down[0] == 0.0), {"f_down_1": float(f_down[0])})

    ratios = f_down[1:] / np.arange(2, sbar + 1)
    gamma = float(ratios.min()) if ratios.size else 0.0
    a2 = ConditionResult(gamma > 0.0, {"gamma": gamma},
                         note="evaluated on 2..sbar; constant tail violates the "
                              "unbounded growth requirement (see tail_violated)")

    sup_f_up = float(f_up.max())
    asum = float(spec.kernels.alphas[0, 0, 0] + spec.kernels.alphas[0, 1, 0])
    prod = sup_f_up * asum
    a3 = ConditionResult(prod < 1.0, {"sup_f_up": sup_f_up,
                                      "alpha_up_row_sum": asum,
                                      "product": prod})

    eta = construct_eta(spec.kernels.alphas[:, :, 0]) if a3.passed else None
    conditions = {"A1": a1, "A2": a2, "A3": a3}
    overall = a1.passed and a2.passed and a3.passed
    return StabilityReport(
        conditions=conditions,
        overall=overall,
        tail_violated=_tail_violated(spec),
        eta=(None if eta is None or not eta.feasible else {
            "eta11": eta.eta11, "eta12": eta.eta12, "eta21": eta.eta21,
            "eta22": eta.eta22, "eta": eta.eta}),
        note="" if overall else "conditions failed on the modelled range",
    )


def _tail_violated(spec):
    # the dense-table representation always has a constant tail, which can
    # never dominate gamma*S as S -> infinity; flagged on every report
    return True


# ---------------------------------------------------------------------------
# General checker (K <= 2; L > 1 collapsed to kernel L1 norms, heuristic)
# ---------------------------------------------------------------------------

def _hk_feasible(atil, K):
    """Linear feasibility of the drift-weight inequality families.

    Variables: eta_{e,e'} (2K x 2K, flattened) and eta, all in
    [_ETA_LO, _ETA_HI], plus the margin m maximized subject to
    lhs - rhs <= -m for every inequality.  Families (k = 1..K):

      sum_e eta[e, -k] * atil[e, -k]          < k * eta
      sum_e eta[e, +k] * atil[e, +k] + k*eta  < eta[+k, e']   for every e'

    Returns (feasible, eta_table or None, eta or None, margin).
    """
    n = 2 * K
    n_eta = n * n
    n_var = n_eta + 2  # eta table, eta, margin

    def vid(e, ep):
        return e * n + ep

    rows = []
    rhs = []

    for k in range(1, K + 1):
        down = event_index(-k, K)
        row = np.zeros(n_var)
        for e in range(n):
            row[vid(e, down)] += atil[e, down]
        row[n_eta] -= float(k)      # - k*eta
        row[n_eta + 1] = 1.0        # + margin
        rows.append(row)
        rhs.append(0.0)

    for k in range(1, K + 1):
        up = event_index(k, K)
        base = np.zeros(n_var)
        for e in range(n):
            base[vid(e, up)] += atil[e, up]
        base[n_eta] += float(k)
        for ep in range(n):
            row = base.copy()
            row[vid(up, ep)] -= 1.0
            row[n_eta + 1] = 1.0
            rows.append(row)
            rhs.append(0.0)

    c = np.zeros(n_var)
    c[n_eta + 1] = -1.0  # maximize margin
    bounds = [(_ETA_LO, _ETA_HI)] * (n_eta + 1) + [(0.0, _ETA_HI)]
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds,
                  method="highs")
    if not res.success:
        return False, None, None, 0.0
    margin = float(res.x[n_eta + 1])
    if margin <= _FEASIBLE_SLACK:
        return False, None, None, margin
    eta_tab = res.x[:n_eta].reshape(n, n)
    return True, eta_tab, float(res.x[n_eta]), margin


def check_general(spec):
    """Ergodicity conditions for K <= 2 via structural checks plus LP feasibility.

    The upward rows of the kernel-norm matrix are rescaled by sup f^{+k}
    (the exact identifiability rescaling that brings f^{+k} below 1), so the
    LP encodes the state-function bound as well; for L > 1 the per-decay
    weights are collapsed to the kernel L1 norms and the result is flagged
    heuristic.
    """
    K = spec.K
    if K > 2:
        raise ConfigurationError("check_general supports K <= 2 only")
    f = _f_rows(spec)
    sbar = spec.sbar
    heuristic = spec.L > 1
    anorm = spec.kernels.l1_norms()

    # structural zeros of the downward state functions
    zeros_ok = True
    zero_witness = {}
    for k in range(1, K + 1):
        e = event_index(-k, K)
        vals = f[e, :k]
        zero_witness[f"f_down{k}_head"] = [float(v) for v in vals]
        zeros_ok &= bool(np.all(vals == 0.0))
    a_struct = ConditionResult(zeros_ok, zero_witness)

    # growth of the strongest downward response on the modelled range
    down_rows = [event_index(-k, K) for k in range(1, K + 1)]
    lo = K + 1
    svals = np.arange(lo, sbar + 1)
    if svals.size:
        best = np.max(f[down_rows, lo - 1:], axis=0)
        gamma = float(np.min(best / svals))
    else:
        gamma = 0.0
    a_growth = ConditionResult(gamma > 0.0, {"gamma": gamma},
                               note=f"evaluated on {lo}..{sbar}")

    # rescale upward target rows so sup f^{+k} <= 1, then test feasibility
    atil = anorm.copy()
    scales = {}
    for k in range(1, K + 1):
        e = event_index(k, K)
        c = float(f[e].max())
        scales[f"sup_f_up{k}"] = c
        atil[e] *= c
    feasible, eta_tab, eta, margin = _hk_feasible(atil, K)
    h_cond = ConditionResult(feasible, {"margin": margin, **scales})

    conditions = {"A1-structural-zeros": a_struct,
                  "A2-downward-growth": a_growth,
                  "H-weights-feasible": h_cond}
    overall = a_struct.passed and a_growth.passed and h_cond.passed
    return StabilityReport(
        conditions=conditions,
        overall=overall,
        tail_violated=_tail_violated(spec),
        eta=(None if eta_tab is None else
             {"eta_table": eta_tab.tolist(), "eta": eta, "margin": margin}),
        heuristic=heuristic,
        note="L > 1 collapsed to kernel L1 norms (heuristic)" if heuristic else "",
    )


def format_report(report):
    """Human-readable condition table for CLI output."""
    lines = []
    for name, cond in report.conditions.items():
        status = "PASS" if cond.passed else "FAIL"
        wit = ", ".join(f"{k}={v}" for k, v in cond.witnesses.items())
        lines.append(f"  {name:<24} {status:<5} {wit}")
        if cond.note:
            lines.append(f"  {'':<24} note: {cond.note}")
    lines.append(f"  {'overall':<24} {'PASS' if report.overall else 'FAIL'}")
    if report.tail_violated:
        lines.append("  tail: constant-tail f cannot satisfy the unbounded growth "
                     "condition as S -> infinity (tail-violated, constant-tail model)")
    if report.heuristic:
        lines.append(f"  note: {report.note}")
    return "\n".join(lines)
