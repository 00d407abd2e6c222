"""Closed-form constants, convergence-time bounds, step-size and divergence
thresholds, error bounds, and effective-rank plateau windows for deep matrix
factorization trained by gradient descent.

Everything here is a pure function of its arguments.  Conventions:

* N is the factorization depth, lam a single eigenvalue of the symmetric
  ground truth, alpha the identical-initialization scale, eta the step size.
* t_plus(lam, mu, alpha, N) is the gradient-flow time to move from alpha to mu
  (exact for the ODE y' = -y^(N-1)(y^N - lam)); it is finite on either side of
  the fixed point lam^(1/N) and diverges at it.
* Complex logarithms always use the principal branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class TheoryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# constants


def c_n(depth: int) -> float:
    """(N-1)/(2N-1); the inflection point of the scalar flow is (c_N*lam)^(1/N)."""
    return (depth - 1) / (2 * depth - 1)


def a_n(depth: int) -> float:
    return abs(math.log(1.0 - c_n(depth) ** (1.0 / depth)))


def b_n(depth: int) -> float:
    return abs(math.log(1.0 / (2.0 * c_n(depth)) - c_n(depth) ** (1.0 / depth)))


def s_n(lam: float, alpha: float, depth: int) -> int:
    """Discrete/continuous comparison offset: ceil(c_N^(1-1/N) (lam^(1/N)/alpha)^(N-1))."""
    return int(math.ceil(c_n(depth) ** (1.0 - 1.0 / depth)
                         * (lam ** (1.0 / depth) / alpha) ** (depth - 1)))


def c_root(depth: int) -> float:
    """Maximal real solution in (1,2) of 1 = (c-1) c^(N-1), bisected to ~1e-14."""
    lo, hi = 1.0, 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (mid - 1.0) * mid ** (depth - 1) < 1.0:
            lo = mid
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    if abs((c - 1.0) * c ** (depth - 1) - 1.0) > 1e-12:
        raise TheoryError(f"c_root bisection failed for N={depth}")
    return c


def q_n(depth: int) -> float:
    """pi*cot(2pi/N) for even N, pi/sin(2pi/N) for odd N."""
    if depth % 2 == 0:
        return math.pi / math.tan(2.0 * math.pi / depth)
    return math.pi / math.sin(2.0 * math.pi / depth)


def _log_sum(z: float, depth: int) -> float:
    """sum_l Re(e^(4 pi i l/N) Log(e^(2 pi i l/N) - z)), principal branch."""
    l = np.arange(1, depth + 1)
    return float(np.sum((np.exp(4j * np.pi * l / depth)
                         * np.log(np.exp(2j * np.pi * l / depth) - z + 0j)).real))


def big_c_n(depth: int) -> float:
    """Constant term of the simplified convergence-time expansion.

    Equals N*int_0^{c_N^(1/N)} w/(1-w^N) dw - (N/(N-2)) c_N^(2/N-1), evaluated
    here through the closed complex-log form.
    """
    if depth < 3:
        raise TheoryError("C_N requires N >= 3")
    cn = c_n(depth)
    return (q_n(depth) - _log_sum(cn ** (1.0 / depth), depth)
            - (depth / (depth - 2.0)) * cn ** (2.0 / depth - 1.0))


@dataclass(frozen=True)
class TheoryConstants:
    depth: int
    c_n: float
    a_n: float
    b_n: float
    c_root: float
    big_c_n: float | None
    q_n: float


def constants(depth: int) -> TheoryConstants:
    return TheoryConstants(
        depth=depth,
        c_n=c_n(depth),
        a_n=a_n(depth),
        b_n=b_n(depth),
        c_root=c_root(depth),
        big_c_n=big_c_n(depth) if depth >= 3 else None,
        q_n=q_n(depth),
    )


# ---------------------------------------------------------------------------
# flow-time primitives


def u_minus(mu: float, depth: int) -> float:
    """Antiderivative for the pure-decay comparison flow y' = lam*y^(N-1), lam<0."""
    if mu <= 0:
        raise TheoryError("u_minus requires mu > 0")
    if depth == 2:
        return -math.log(mu)
    return mu ** (2 - depth) / (depth - 2)


def t_minus(mu: float, alpha: float, depth: int) -> float:
    return u_minus(mu, depth) - u_minus(alpha, depth)


def u_plus(lam: float, mu: float, depth: int) -> float:
    """Flow-time antiderivative for y' = -y^(N-1)(y^N - lam), lam > 0.

    N=2 is the explicit log form (only valid on the convergent branch
    mu^2 < lam); N>=3 sums principal-branch complex logarithms over the N-th
    roots of lam and is valid on both sides of lam^(1/N).
    """
    if lam <= 0 or mu <= 0:
        raise TheoryError("u_plus requires lam > 0 and mu > 0")
    if depth == 2:
        arg = lam / mu ** 2 - 1.0
        if arg <= 0:
            raise TheoryError("outside convergent branch: mu^2 >= lam for N=2")
        return -0.5 / lam * math.log(arg)
    z = mu * lam ** (-1.0 / depth)
    return (-(lam ** (2.0 / depth - 2.0) / depth) * _log_sum(z, depth)
            - 1.0 / (lam * (depth - 2) * mu ** (depth - 2)))


def t_plus(lam: float, mu: float, alpha: float, depth: int) -> float:
    """Exact flow time from y(0)=alpha to y=mu for y' = -y^(N-1)(y^N - lam).

    Defined for lam >= 0 whenever mu and alpha lie on the same side of the
    fixed point lam^(1/N) (lam=0 uses the explicit power-law solution).
    """
    if alpha <= 0 or mu <= 0:
        raise TheoryError("t_plus requires positive mu and alpha")
    if lam < 0:
        raise TheoryError("t_plus is for lam >= 0; use t_minus for the decay bound")
    if lam == 0.0:
        if depth == 1:
            return math.log(alpha / mu)
        e = 2 - 2 * depth
        return (mu ** e - alpha ** e) / (2 * depth - 2)
    root = lam ** (1.0 / depth)
    if (mu - root) * (alpha - root) < 0:
        raise TheoryError("mu and alpha straddle the fixed point lam^(1/N)")
    if depth == 1:
        return math.log(abs(lam - alpha) / abs(lam - mu))
    if depth == 2:
        # |.| form covers the decreasing branch mu, alpha > sqrt(lam)
        return 0.5 / lam * math.log(abs(lam / alpha ** 2 - 1.0) / abs(lam / mu ** 2 - 1.0))
    return u_plus(lam, mu, depth) - u_plus(lam, alpha, depth)


def u_plus_real(lam: float, mu: float, alpha: float, depth: int) -> float:
    """Flow time from alpha to mu via the real-form expression (no complex logs).

    Splits the complex-log sum of u_plus into a real log for the real root(s)
    of lam, plus log/arctan pairs for each conjugate root pair; equal to
    t_plus to ~1e-12 relative.
    """
    if depth < 3:
        raise TheoryError("real form requires N >= 3")
    if lam <= 0:
        raise TheoryError("u_plus_real requires lam > 0")
    root = lam ** (1.0 / depth)
    if mu == root or alpha == root:
        raise TheoryError("singular at the fixed point lam^(1/N)")
    if depth % 2 == 0:
        h = math.log(abs((lam ** (2.0 / depth) - alpha ** 2)
                         / (lam ** (2.0 / depth) - mu ** 2)))
    else:
        h = math.log(abs((root - alpha) / (root - mu)))
    pairs = depth // 2 - 1 if depth % 2 == 0 else (depth - 1) // 2
    acc = h
    for l in range(1, pairs + 1):
        th = 2.0 * math.pi * l / depth
        cr = root * math.cos(th)
        si = root * math.sin(th)
        log_ratio = ((alpha - cr) ** 2 + si ** 2) / ((mu - cr) ** 2 + si ** 2)
        acc += math.cos(2.0 * th) * math.log(log_ratio)
        acc += 2.0 * math.sin(2.0 * th) * (math.atan((mu - cr) / si)
                                           - math.atan((alpha - cr) / si))
    power = (1.0 / (lam * (depth - 2))) * (1.0 / alpha ** (depth - 2)
                                           - 1.0 / mu ** (depth - 2))
    return (lam ** (2.0 / depth - 2.0) / depth) * acc + power


# ---------------------------------------------------------------------------
# step-size and divergence thresholds


def stepsize_bound(context: str, value: float, alpha: float, depth: int) -> float:
    """Admissibility threshold on eta for the named convergence statement.

    context: "lemma22" / "thm23" take value = lam; "thm11" / "thm12" /
    "lemma_c2" take value = M = max(alpha, ||W||^(1/N)); "lemma_c3" ignores
    value and uses alpha alone.
    """
    n = depth
    if context == "lemma22":
        lam = value
        if lam > 0:
            return 1.0 / (n * max(alpha, lam ** (1.0 / n)) ** (2 * n - 2))
        if alpha >= abs(lam) ** (1.0 / n):
            return alpha ** (-2 * n + 2)
        return 1.0 / ((3 * n - 2) * abs(lam) ** (2.0 - 2.0 / n))
    if context == "thm23":
        lam = value
        m = max(alpha, abs(lam) ** (1.0 / n))
        if lam >= 0:
            return 1.0 / (2 * n * m ** (2 * n - 2))
        return 1.0 / ((3 * n - 2) * m ** (2 * n - 2))
    if context == "thm11":
        return 1.0 / ((3 * n - 2) * value ** (2 * n - 2))
    if context == "thm12":
        return 1.0 / (9 * n * (c_root(n) * value) ** (2 * n - 2))
    if context == "lemma_c2":
        return 1.0 / (8 * n * (c_root(n) * value) ** (2 * n - 2))
    if context == "lemma_c3":
        return 1.0 / (9 * n * alpha ** (2 * n - 2))
    raise TheoryError(f"unknown step-size context {context!r}")


def divergence_threshold(lam: float, alpha: float, depth: int) -> float:
    """eta beyond which the iteration destabilizes: 2 for N=1; the instability
    threshold of the fixed point for lam>0; the divergence threshold for lam<0."""
    if depth == 1:
        return 2.0
    if lam > 0:
        return 2.0 / (depth * lam ** (2.0 - 2.0 / depth))
    if lam < 0:
        m = abs(lam) ** (1.0 / depth)
        return (1.0 + 2.0 ** (1.0 / depth)) * max(alpha, m) / min(alpha, m) ** (2 * depth - 1)
    raise TheoryError("no threshold stated for lam = 0, N >= 2")


def error_bound(lam: float, epsilon: float, alpha: float, depth: int,
                regime: str = "identical") -> float:
    """|E_ii| bound once the d-space accuracy epsilon is reached."""
    n = depth
    if regime == "identical":
        if lam > 0:
            return epsilon * n * lam ** (1.0 - 1.0 / n)
        return epsilon ** n
    if regime == "perturbed":
        if abs(lam) >= alpha ** n:
            return epsilon * n * abs(lam) ** (1.0 - 1.0 / n)
        if lam >= 0:
            return alpha ** n
        return 2.0 * alpha ** n
    raise TheoryError(f"unknown regime {regime!r}")


# ---------------------------------------------------------------------------
# convergence-time predictions

CASE_NEGATIVE = "negative"
CASE_DECREASING = "decreasing"
CASE_CONCAVE_START = "concave_start"
CASE_TWO_PHASE = "two_phase"
CASE_CONVEX_PHASE = "convex_phase"


@dataclass
class PredictionBundle:
    lam: float
    epsilon: float
    alpha: float
    eta: float
    depth: int
    beta: float | None = None
    m_scale: float = 0.0
    t_id: float | None = None
    t_id_lower: float | None = None
    t_perturbed: float | None = None
    s_n: int | None = None
    error_bound: float = 0.0
    case_tag: str = ""
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "beta": self.beta,
            "eta": self.eta,
            "depth": self.depth,
            "m_scale": self.m_scale,
            "t_id": self.t_id,
            "t_id_lower": self.t_id_lower,
            "t_perturbed": self.t_perturbed,
            "s_n": self.s_n,
            "error_bound": self.error_bound,
            "case_tag": self.case_tag,
            "diagnostics": self.diagnostics,
            "warnings": self.warnings,
        }


def _rate_log(eta: float, scale: float) -> float:
    arg = 1.0 - eta * scale
    if arg <= 0:
        raise TheoryError("step size too large: contraction factor non-positive")
    return abs(math.log(arg))


def t_identical(lam: float, epsilon: float, alpha: float, eta: float,
                depth: int, validate_epsilon: bool = True) -> PredictionBundle:
    """Iteration bound for identical initialization (five-case formula).

    Validates epsilon in (0, |alpha - lam_+^(1/N)|) and eta below the relevant
    step-size condition; lam = alpha^N exactly is the fixed point and returns
    t_id = 0 for any epsilon > 0.  validate_epsilon=False allows oversized
    accuracy arguments (the convex-phase target is clamped to alpha then).
    """
    n = depth
    if n < 2:
        raise TheoryError("t_identical requires N >= 2")
    if alpha <= 0:
        raise TheoryError("alpha must be positive")
    m = max(alpha, abs(lam) ** (1.0 / n))
    bound = stepsize_bound("thm23", lam, alpha, n)
    if not 0 < eta < bound:
        raise TheoryError(f"step size condition violated: eta={eta:g} not in (0, {bound:g})")
    target = max(lam, 0.0) ** (1.0 / n)
    fixed_point = (lam >= 0 and alpha == target)
    if epsilon <= 0:
        raise TheoryError("epsilon must be positive")
    if validate_epsilon and not fixed_point and epsilon >= abs(alpha - target):
        raise TheoryError(
            f"epsilon out of range: need epsilon < |alpha - lam_+^(1/N)| = {abs(alpha - target):g}")

    bundle = PredictionBundle(lam=lam, epsilon=epsilon, alpha=alpha, eta=eta,
                              depth=n, m_scale=m)
    bundle.error_bound = error_bound(lam, epsilon, alpha, n, "identical")
    cn = c_n(n)

    if fixed_point:
        bundle.t_id = 0.0
        bundle.case_tag = CASE_CONCAVE_START
        return bundle

    if lam < 0:
        bundle.t_id = t_minus(epsilon, alpha, n) / (eta * abs(lam))
        bundle.case_tag = CASE_NEGATIVE
    elif lam < alpha ** n:
        bundle.t_id = t_plus(lam, lam ** (1.0 / n) + epsilon, alpha, n) / eta
        bundle.case_tag = CASE_DECREASING
    else:
        zeta = (cn * lam) ** (1.0 / n)
        bundle.diagnostics["zeta"] = zeta
        rate = _rate_log(eta, n * (cn * lam) ** (2.0 - 2.0 / n))
        if cn * lam < alpha ** n:
            bundle.t_id = max(0.0, math.log((lam ** (1.0 / n) - alpha) / epsilon) / rate)
            bundle.case_tag = CASE_CONCAVE_START
        else:
            sn = s_n(lam, alpha, n)
            bundle.s_n = sn
            if epsilon < (1.0 - cn ** (1.0 / n)) * lam ** (1.0 / n):
                t1 = t_plus(lam, zeta, alpha, n) / eta
                t2 = (math.log(lam ** (1.0 / n) / epsilon) - a_n(n)) / rate
                bundle.t_id = t1 + sn + t2
                bundle.case_tag = CASE_TWO_PHASE
            else:
                # accuracy reached inside the convex phase; clamp the target
                # into (alpha, lam^(1/N)) so out-of-range epsilon degrades to
                # "already past it"
                mu = max(lam ** (1.0 / n) - epsilon, alpha)
                t1 = t_plus(lam, mu, alpha, n) / eta if mu > alpha else 0.0
                bundle.t_id = t1 + sn
                bundle.case_tag = CASE_CONVEX_PHASE
            bundle.diagnostics["t_id_without_s_n"] = bundle.t_id - sn
        if lam > alpha ** n:
            bundle.t_id_lower = t_identical_lower(lam, epsilon, alpha, eta, n)
    return bundle


def t_identical_lower(lam: float, epsilon: float, alpha: float, eta: float,
                      depth: int) -> float:
    """Matching lower bound on the hitting time; defined only for lam > alpha^N."""
    n = depth
    if lam <= alpha ** n:
        raise TheoryError("lower bound undefined: requires lam > alpha^N")
    cn = c_n(n)
    if alpha ** n < cn * lam:
        rate = _rate_log(eta, n * lam ** (2.0 - 2.0 / n))
        return (t_plus(lam, (cn * lam) ** (1.0 / n), alpha, n) / eta
                + (math.log(lam ** (1.0 / n) / epsilon) - b_n(n)) / rate)
    rate = _rate_log(eta, n * (cn * lam) ** (2.0 - 2.0 / n))
    return max(0.0, math.log((lam ** (1.0 / n) - alpha) / epsilon) / rate)


def t_perturbed(lam: float, epsilon: float, alpha: float, beta: float, eta: float,
                depth: int, strict: bool = False) -> PredictionBundle:
    """Iteration bound under perturbed initialization (d1(0)=alpha-beta, rest alpha).

    lam >= alpha^N reuses the identical bound started from alpha-beta (the
    trajectory is sandwiched by that auxiliary sequence); lam <= -alpha^N adds
    the sign-flip time T0; |lam| < alpha^N carries only the static error bound.
    Validity conditions on beta and eta are recorded as warnings unless
    strict=True, in which case they raise.
    """
    n = depth
    if n < 2:
        raise TheoryError("t_perturbed requires N >= 2")
    if not 0 < beta < alpha:
        raise TheoryError("need 0 < beta < alpha")
    c = c_root(n)
    m = max(alpha, abs(lam) ** (1.0 / n))
    warnings: list[str] = []
    if not beta / (c - 1.0) < alpha:
        warnings.append(
            f"beta condition violated: beta/(c-1) = {beta / (c - 1.0):g} >= alpha = {alpha:g}")
    eta_bound = stepsize_bound("thm12", m, alpha, n)
    if not 0 < eta < eta_bound:
        warnings.append(f"step size condition violated: eta={eta:g} not below {eta_bound:g}")
    if strict and warnings:
        raise TheoryError("; ".join(warnings))

    if lam >= alpha ** n:
        inner = t_identical(lam, epsilon, alpha - beta, eta, n)
        bundle = inner
        bundle.beta = beta
        bundle.t_perturbed = inner.t_id
        bundle.diagnostics["t0"] = 0.0
    elif lam <= -(alpha ** n):
        inner = t_identical(abs(lam), epsilon, beta, eta, n)
        root = abs(lam) ** (1.0 / n)
        denom = (eta * (((9 * n - 2 * (c - 1.0)) / (9 * n)) * beta * root) ** (n - 1)
                 * (root - beta / (c - 1.0)))
        if denom <= 0:
            raise TheoryError("T0 undefined: beta too large relative to |lam|^(1/N)")
        t0 = alpha / denom
        bundle = PredictionBundle(lam=lam, epsilon=epsilon, alpha=alpha, eta=eta,
                                  depth=n, beta=beta, m_scale=m)
        bundle.t_perturbed = inner.t_id + t0
        bundle.case_tag = inner.case_tag
        bundle.s_n = inner.s_n
        bundle.diagnostics["t0"] = t0
        bundle.diagnostics["t_id_restarted"] = inner.t_id
    else:
        bundle = PredictionBundle(lam=lam, epsilon=epsilon, alpha=alpha, eta=eta,
                                  depth=n, beta=beta, m_scale=m)
        bundle.case_tag = "static"
        bundle.diagnostics["note"] = "no finite-time claim for |lam| < alpha^N"
    bundle.error_bound = error_bound(lam, epsilon, alpha, n, "perturbed")
    bundle.warnings = warnings
    return bundle


# ---------------------------------------------------------------------------
# effective-rank plateau windows


@dataclass(frozen=True)
class FlowProfile:
    """g_{lam,alpha}(t) = 1 + (lam/alpha^2 - 1) exp(-2 lam t); the squared N=2
    flow eigenvalue is lam / g(t)."""

    lam: float
    alpha: float

    def __call__(self, t):
        return 1.0 + (self.lam / self.alpha ** 2 - 1.0) * np.exp(-2.0 * self.lam * np.asarray(t))


@dataclass
class PlateauWindow:
    rank: int
    l_prime: int
    l_dprime: int | None = None
    epsilon: float = 0.0
    epsilon_prime: float | None = None
    big_c: float | None = None
    flow_intervals: dict | None = None       # {"I1": [...], "I2": [...], "I3": [...]}
    flow_window: list | None = None          # intersection, list of [lo, hi]
    flow_bound: float | None = None
    flow_bound_generic: float | None = None
    gd_window: tuple | None = None           # (k_lo, k_hi) floats, or None if empty
    gd_bound: float | None = None
    gd_bound_loose: float | None = None
    t_max: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "l_prime": self.l_prime,
            "l_dprime": self.l_dprime,
            "epsilon": self.epsilon,
            "epsilon_prime": self.epsilon_prime,
            "big_c": self.big_c,
            "flow_intervals": self.flow_intervals,
            "flow_window": self.flow_window,
            "flow_bound": self.flow_bound,
            "flow_bound_generic": self.flow_bound_generic,
            "gd_window": list(self.gd_window) if self.gd_window else None,
            "gd_bound": self.gd_bound,
            "gd_bound_loose": self.gd_bound_loose,
            "t_max": self.t_max,
            "diagnostics": self.diagnostics,
        }


def _condition_intervals(fn, t_lo: float, t_hi: float, tail_ok: bool,
                         n_grid: int = 10_000) -> list[list[float]]:
    """Sub-level sets {t : fn(t) < 0} as closed intervals, by geometric-grid
    sampling plus bisection of each sign change to 1e-10 relative; tail_ok is
    the condition's truth value as t -> infinity."""
    ts = np.geomspace(t_lo, t_hi, n_grid)
    vals = np.array([fn(t) for t in ts])
    inside = vals < 0.0

    def refine(a: float, b: float) -> float:
        fa = fn(a)
        for _ in range(200):
            mid = 0.5 * (a + b)
            if (b - a) <= 1e-10 * max(1.0, abs(mid)):
                break
            if (fn(mid) < 0.0) == (fa < 0.0):
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)

    intervals: list[list[float]] = []
    start: float | None = None
    for i in range(len(ts)):
        if inside[i] and start is None:
            start = ts[0] if i == 0 else refine(ts[i - 1], ts[i])
        elif not inside[i] and start is not None:
            intervals.append([start, refine(ts[i - 1], ts[i])])
            start = None
    if start is not None:
        intervals.append([start, math.inf if tail_ok else t_hi])
    return intervals


def intersect_intervals(a: list[list[float]], b: list[list[float]]) -> list[list[float]]:
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if lo <= hi:
                out.append([lo, hi])
    return out


def flow_plateau(eigenvalues, rank: int, epsilon: float, big_c: float,
                 alpha: float) -> PlateauWindow:
    """Gradient-flow (N=2) plateau prediction for the rank-L approximation.

    Returns the intervals I1, I2, I3, their intersection, and the bound on
    |r(W_L) - r(W(t))| over it.  The bound drops the leading-eigenvalue term
    when L = 1 and the tail-gap term when L = L' (both vanish identically
    there); the unconditioned two-term form is kept in flow_bound_generic.
    """
    w = np.asarray(eigenvalues, dtype=float)
    n = len(w)
    if np.any(w < 0):
        raise TheoryError("flow plateau requires a PSD spectrum")
    if not 1 <= rank <= n:
        raise TheoryError("rank out of range")
    if w[rank - 1] <= alpha ** 2:
        raise TheoryError("need lam_L > alpha^2")
    if big_c <= 1.0:
        raise TheoryError("need C > 1")
    l_prime = int(np.sum(w > alpha ** 2))
    lam1 = w[0]
    g = {lam: FlowProfile(lam, alpha) for lam in np.unique(w[: max(l_prime + 1, rank + 1)])}

    r_hat = float(np.sum(w[:rank]) / lam1)
    t_lo = 1e-4 / lam1
    lam_lp = w[l_prime - 1]
    t_hi = 100.0 * math.log((lam_lp / alpha ** 2 - 1.0) / 1e-6) / (2.0 * lam_lp)

    full = [[t_lo, math.inf]]
    if rank == 1:
        i1 = full
    else:
        lead = [g[w[l]] for l in range(rank)]
        g1 = g[lam1]
        i1 = _condition_intervals(
            lambda t: max(abs(g1(t) / gl(t) - 1.0) for gl in lead) - epsilon,
            t_lo, t_hi, tail_ok=True)
    if rank == l_prime:
        i2 = full
    else:
        lam_next = w[rank]
        thr = r_hat / (l_prime - rank) * epsilon
        g1, gn = g[lam1], g[lam_next]
        tail_ok = lam_next / lam1 < thr
        i2 = _condition_intervals(
            lambda t: (g1(t) / gn(t)) * (lam_next / lam1) - thr,
            t_lo, t_hi, tail_ok=tail_ok)
    g1 = g[lam1]
    i3 = _condition_intervals(lambda t: g1(t) - big_c, t_lo, t_hi, tail_ok=True)

    window = intersect_intervals(intersect_intervals(i1, i2), i3)
    tail = big_c * (n - l_prime) * alpha ** 2 / lam1
    coef = (0 if rank == 1 else 1) + (0 if rank == l_prime else 1)
    return PlateauWindow(
        rank=rank, l_prime=l_prime, epsilon=epsilon, big_c=big_c,
        flow_intervals={"I1": i1, "I2": i2, "I3": i3},
        flow_window=window,
        flow_bound=coef * epsilon * r_hat + tail,
        flow_bound_generic=2.0 * epsilon * r_hat + tail,
        diagnostics={"r_hat": r_hat, "alpha": alpha},
    )


def _t_id_value(lam: float, epsilon: float, alpha: float, eta: float, depth: int) -> float:
    """T_N^Id as a bare number, with the convex-phase target clamped so the
    oversized epsilon = lam/2 argument of the window lower edge is evaluable."""
    return t_identical(lam, epsilon, alpha, eta, depth, validate_epsilon=False).t_id


def gd_plateau(eigenvalues, rank: int, epsilon: float, epsilon_prime: float,
               alpha: float, eta: float, depth: int) -> PlateauWindow:
    """Discrete-iteration plateau window and effective-rank bound (N >= 2)."""
    w = np.asarray(eigenvalues, dtype=float)
    n = len(w)
    nn = depth
    if not 1 <= rank < n:
        raise TheoryError("rank out of range (need lam_{L+1} to exist)")
    if not 0 < epsilon < 1:
        raise TheoryError("need epsilon in (0,1)")
    if not 0 < epsilon_prime < c_n(nn):
        raise TheoryError(f"need epsilon' in (0, c_N) = (0, {c_n(nn):g})")
    if w[rank] <= 0:
        raise TheoryError("need lam_{L+1} > 0")
    if alpha ** nn > epsilon_prime * w[rank]:
        raise TheoryError("need alpha^N <= epsilon' * lam_{L+1}")
    eta_bound = 1.0 / ((3 * nn - 2) * max(alpha ** (nn - 2), w[0] ** (2.0 - 2.0 / nn)))
    if not 0 < eta < eta_bound:
        raise TheoryError(f"step size condition violated: eta={eta:g} not below {eta_bound:g}")

    l_prime = int(np.sum(epsilon_prime * w > alpha ** nn))
    l_dprime = int(np.sum(w > alpha ** nn))
    lam1 = w[0]
    r_hat = float(np.sum(w[:rank]) / lam1)

    t_half = _t_id_value(lam1, lam1 / 2.0, alpha, eta, nn)
    t_max = max(_t_id_value(w[l], w[l] ** (1.0 / nn) * epsilon / (4.0 * nn), alpha, eta, nn)
                for l in range(rank))
    k_lo = max(t_half, t_max)
    k_hi = t_plus(w[rank], (epsilon_prime * w[rank]) ** (1.0 / nn), alpha, nn) / eta

    term1 = 0.0 if rank == 1 else epsilon * r_hat
    term2 = 0.0 if l_prime == rank else (2.0 * (l_prime - rank) / c_n(nn)) \
        * (w[rank] / lam1) * epsilon_prime
    tail_tight = (2.0 / lam1) * (float(np.sum(w[l_prime:l_dprime]))
                                 + (n - l_dprime) * alpha ** nn)
    tail_loose = (n - l_prime) * 2.0 * alpha ** nn / (epsilon_prime * lam1)

    # d-space reading of the lam1/2 accuracy argument, kept for diagnostics
    eps_d = lam1 ** (1.0 / nn) - (lam1 / 2.0) ** (1.0 / nn)
    t_half_dspace = _t_id_value(lam1, eps_d, alpha, eta, nn)

    return PlateauWindow(
        rank=rank, l_prime=l_prime, l_dprime=l_dprime,
        epsilon=epsilon, epsilon_prime=epsilon_prime,
        gd_window=(k_lo, k_hi) if k_lo <= k_hi else None,
        gd_bound=term1 + term2 + min(tail_tight, tail_loose),
        gd_bound_loose=epsilon * r_hat + term2 + tail_loose,
        t_max=t_max,
        diagnostics={
            "r_hat": r_hat,
            "k_lo": k_lo,
            "k_hi": k_hi,
            "t_half_literal": t_half,
            "t_half_dspace": t_half_dspace,
            "window_empty": k_lo > k_hi,
        },
    )


def recommended_params(eigenvalues, rank: int, epsilon: float, depth: int) -> tuple[float, float]:
    """(epsilon', alpha) making every term of the discrete bound <= eps*r(W_L)."""
    w = np.asarray(eigenvalues, dtype=float)
    n = len(w)
    if rank >= n or w[rank] <= 0:
        raise TheoryError("need lam_{L+1} > 0")
    if not 0 < epsilon < 1:
        raise TheoryError("need epsilon in (0,1)")
    r_hat = float(np.sum(w[:rank]) / w[0])
    eps_p = c_n(depth) * min(w[0] / w[rank] * epsilon * r_hat / (2.0 * (n - rank)), 1.0)
    alpha = min((eps_p * w[0]) ** (1.0 / depth)
                * (epsilon * r_hat / (2.0 * (n - rank))) ** (1.0 / depth),
                (eps_p * w[rank]) ** (1.0 / depth))
    return eps_p, alpha


def approx_t_plus(lam_k: float, lam_1: float, alpha: float, kappa: float,
                  depth: int) -> tuple[float, float]:
    """Simplified approximation of (1/eta) T_N^+(lam_k, (c_N lam_k)^(1/N), alpha)
    at eta = kappa/(N lam_1^(2-2/N)), with its validity envelope.

    |approx - exact| <= envelope, where envelope covers the Taylor remainder
    of the root-of-unity log sum at xi = alpha/lam_k^(1/N).
    """
    n = depth
    if n < 3:
        raise TheoryError("simplified expression requires N >= 3")
    if not 0 < lam_k <= lam_1:
        raise TheoryError("need 0 < lam_k <= lam_1")
    if alpha ** n >= lam_k:
        raise TheoryError("need alpha^N < lam_k")
    if not 0 < kappa < 1.0 / 3.0:
        raise TheoryError("need kappa in (0, 1/3)")
    xi = alpha / lam_k ** (1.0 / n)
    pref = (lam_1 / lam_k) ** (2.0 - 2.0 / n) / kappa
    value = pref * ((n / (n - 2.0)) * (lam_k / alpha ** n) ** (1.0 - 2.0 / n)
                    + big_c_n(n) - (n / 2.0) * (alpha ** n / lam_k) ** (2.0 / n))
    envelope = pref * n * xi ** 3 / (3.0 * (1.0 - xi) ** 3)
    return value, envelope
