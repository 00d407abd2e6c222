"""Time evolution of the factorized problem: the decoupled scalar recursion,
the coupled perturbed recursion, full-matrix N-factor gradient descent, and
the continuous flow (closed forms cross-checked by Runge-Kutta).

All discrete updates are simultaneous: every right-hand side is evaluated at
step k before any state is written.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import theory
from .prng import SplitMix64

DIVERGENCE_GUARD = 1e9
DEFAULT_SCALAR_CAP = 10_000_000
DEFAULT_MATRIX_CAP = 100_000


class DynamicsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# initializations


@dataclass(frozen=True)
class Identical:
    alpha: float


@dataclass(frozen=True)
class Perturbed:
    alpha: float
    beta: float


@dataclass(frozen=True)
class RandomScaledIdentity:
    alpha: float
    seed: int


@dataclass(frozen=True)
class GaussianDense:
    sigma: float
    seed: int


Initialization = Identical | Perturbed | RandomScaledIdentity | GaussianDense


# ---------------------------------------------------------------------------
# scalar dynamics (identical initialization)


def scalar_step(d: float, lam: float, eta: float, depth: int) -> float:
    """One update d <- d - eta d^(N-1) (d^N - lam); also works on arrays."""
    return d - eta * d ** (depth - 1) * (d ** depth - lam)


@dataclass
class ScalarTrajectory:
    lam: float
    alpha: float
    eta: float
    depth: int
    values: np.ndarray
    record_every: int = 1
    hit_index: int | None = None
    diverged: bool = False

    @property
    def target(self) -> float:
        return max(self.lam, 0.0) ** (1.0 / self.depth)


def run_scalar(lam: float, alpha: float, eta: float, depth: int, epsilon: float,
               cap: int = DEFAULT_SCALAR_CAP, record_every: int = 1,
               guard: float = DIVERGENCE_GUARD) -> ScalarTrajectory:
    """Iterate the scalar recursion until |d - lam_+^(1/N)| <= epsilon, the cap,
    or the divergence guard.  values[j] = d(j*record_every); the final state is
    always recorded."""
    if alpha <= 0 or epsilon <= 0 or cap < 1:
        raise DynamicsError("need alpha > 0, epsilon > 0, cap >= 1")
    target = max(lam, 0.0) ** (1.0 / depth)
    d = float(alpha)
    values = [d]
    hit = 0 if abs(d - target) <= epsilon else None
    diverged = False
    k = 0
    if hit is None:
        nm1 = depth - 1
        while k < cap:
            d = d - eta * d ** nm1 * (d ** depth - lam)
            k += 1
            if k % record_every == 0:
                values.append(d)
            if abs(d) > guard:
                diverged = True
                break
            if abs(d - target) <= epsilon:
                hit = k
                break
        if k % record_every != 0:
            values.append(d)
    return ScalarTrajectory(lam=lam, alpha=alpha, eta=eta, depth=depth,
                            values=np.array(values), record_every=record_every,
                            hit_index=hit, diverged=diverged)


def detect_divergence(traj: ScalarTrajectory) -> bool:
    """True iff the guard was exceeded, or |d| grew by >= 1+1e-9 per recorded
    step over the final 100 records while |d| > 10 max(alpha, |lam|^(1/N))."""
    if traj.diverged:
        return True
    v = np.abs(traj.values)
    if v.max(initial=0.0) > DIVERGENCE_GUARD:
        return True
    if len(v) < 101:
        return False
    window = v[-101:]
    floor = 10.0 * max(traj.alpha, abs(traj.lam) ** (1.0 / traj.depth))
    growing = np.all(window[1:] >= (1.0 + 1e-9) * window[:-1])
    return bool(growing and np.all(window > floor))


# ---------------------------------------------------------------------------
# coupled dynamics (perturbed initialization)


@dataclass(frozen=True)
class PerturbedPair:
    """State (d1, d2) of the coupled recursion, with its derived quantities."""

    d1: float
    d2: float
    lam: float
    depth: int

    @property
    def delta1(self) -> float:
        return self.d2 - self.d1

    @property
    def delta2(self) -> float:
        return self.d2 ** 2 - self.d1 ** 2

    @property
    def product(self) -> float:
        return self.d1 * self.d2 ** (self.depth - 1)

    @property
    def kappa(self) -> float:
        return self.d2 ** (self.depth - 2) * (self.product - self.lam)


def perturbed_step(pair: PerturbedPair, eta: float) -> PerturbedPair:
    """Simultaneous update of both components (right-hand sides at step k)."""
    if pair.depth < 2:
        raise DynamicsError("coupled recursion requires N >= 2")
    n = pair.depth
    d1, d2, lam = pair.d1, pair.d2, pair.lam
    p = d1 * d2 ** (n - 1)
    return PerturbedPair(d1=d1 - eta * d2 ** (n - 1) * (p - lam),
                         d2=d2 - eta * d1 * d2 ** (n - 2) * (p - lam),
                         lam=lam, depth=n)


@dataclass
class AuxSequences:
    """Identical-initialization envelopes a (from alpha-beta) and b (from alpha)
    co-evolved with the coupled pair, plus their N-th powers."""

    a: np.ndarray
    b: np.ndarray

    @property
    def p_a(self) -> np.ndarray:
        return self.a ** self._depth

    @property
    def p_b(self) -> np.ndarray:
        return self.b ** self._depth

    _depth: int = 2


@dataclass
class PerturbedTrajectory:
    lam: float
    alpha: float
    beta: float
    eta: float
    depth: int
    d1: np.ndarray
    d2: np.ndarray
    aux: AuxSequences
    k0: int | None = None
    hit_index: int | None = None
    hit_tol: float = 0.0

    def pair(self, j: int) -> PerturbedPair:
        return PerturbedPair(d1=float(self.d1[j]), d2=float(self.d2[j]),
                             lam=self.lam, depth=self.depth)

    @property
    def product(self) -> np.ndarray:
        return self.d1 * self.d2 ** (self.depth - 1)


def run_perturbed(lam: float, alpha: float, beta: float, eta: float, depth: int,
                  epsilon: float, cap: int = DEFAULT_SCALAR_CAP,
                  hit_tol: float | None = None,
                  stop_on_hit: bool = True) -> PerturbedTrajectory:
    """Run the coupled recursion from (alpha-beta, alpha), co-evolving the
    auxiliary envelopes; records k0 (first d1 < 0) and the first index where
    |d1 d2^(N-1) - lam| falls within the perturbed error bound for epsilon."""
    if not 0 < beta < alpha:
        raise DynamicsError("need 0 < beta < alpha")
    if depth < 2:
        raise DynamicsError("coupled recursion requires N >= 2")
    if hit_tol is None:
        hit_tol = theory.error_bound(lam, epsilon, alpha, depth, "perturbed")
    n = depth
    d1, d2 = alpha - beta, alpha
    a, b = alpha - beta, alpha
    d1s, d2s, as_, bs = [d1], [d2], [a], [b]
    k0 = None
    hit = 0 if abs(d1 * d2 ** (n - 1) - lam) <= hit_tol else None
    if hit is None or not stop_on_hit:
        for k in range(1, cap + 1):
            p = d1 * d2 ** (n - 1)
            d1, d2 = (d1 - eta * d2 ** (n - 1) * (p - lam),
                      d2 - eta * d1 * d2 ** (n - 2) * (p - lam))
            a = a - eta * a ** (n - 1) * (a ** n - lam)
            b = b - eta * b ** (n - 1) * (b ** n - lam)
            d1s.append(d1)
            d2s.append(d2)
            as_.append(a)
            bs.append(b)
            if k0 is None and d1 < 0:
                k0 = k
            if hit is None and abs(d1 * d2 ** (n - 1) - lam) <= hit_tol:
                hit = k
                if stop_on_hit:
                    break
            if abs(d1) > DIVERGENCE_GUARD or abs(d2) > DIVERGENCE_GUARD:
                break
    aux = AuxSequences(a=np.array(as_), b=np.array(bs), _depth=n)
    return PerturbedTrajectory(lam=lam, alpha=alpha, beta=beta, eta=eta, depth=n,
                               d1=np.array(d1s), d2=np.array(d2s), aux=aux,
                               k0=k0, hit_index=hit, hit_tol=hit_tol)


def delta_recursion_residuals(traj: PerturbedTrajectory) -> tuple[float, float]:
    """Max relative residuals of Delta1(k+1) = (1+eta kappa) Delta1(k) and
    Delta2(k+1) = (1-eta^2 kappa^2) Delta2(k) along the trajectory."""
    d1, d2 = traj.d1, traj.d2
    n, eta, lam = traj.depth, traj.eta, traj.lam
    p = d1 * d2 ** (n - 1)
    kappa = d2 ** (n - 2) * (p - lam)
    delta1 = d2 - d1
    delta2 = d2 ** 2 - d1 ** 2
    pred1 = (1.0 + eta * kappa[:-1]) * delta1[:-1]
    pred2 = (1.0 - (eta * kappa[:-1]) ** 2) * delta2[:-1]
    scale1 = np.maximum(np.abs(delta1[1:]), np.abs(pred1))
    scale2 = np.maximum(np.abs(delta2[1:]), np.abs(pred2))
    r1 = np.max(np.abs(delta1[1:] - pred1) / np.where(scale1 > 0, scale1, 1.0))
    r2 = np.max(np.abs(delta2[1:] - pred2) / np.where(scale2 > 0, scale2, 1.0))
    return float(r1), float(r2)


def product_step_identity_residual(traj: PerturbedTrajectory) -> float:
    """Max relative residual of p(k+1) = p(k) (1 + c1 d2^(2N-2)) (1 + c2 d2^-2)^(N-1)
    with c1 = -eta (p-lam)/p and c2 = -eta p (p-lam)."""
    d2 = traj.d2[:-1]
    p = traj.product
    pk, pk1 = p[:-1], p[1:]
    eta, lam, n = traj.eta, traj.lam, traj.depth
    mask = pk != 0.0
    c1 = -eta * (pk[mask] - lam) / pk[mask]
    c2 = -eta * pk[mask] * (pk[mask] - lam)
    pred = pk[mask] * (1.0 + c1 * d2[mask] ** (2 * n - 2)) \
        * (1.0 + c2 * d2[mask] ** -2.0) ** (n - 1)
    scale = np.maximum(np.abs(pk1[mask]), np.abs(pred))
    res = np.abs(pk1[mask] - pred) / np.where(scale > 0, scale, 1.0)
    return float(res.max(initial=0.0))


# ---------------------------------------------------------------------------
# per-eigenvalue multi-factor recursion (scaled-identity initializations)


def run_factor_scalars(lam: float, init: np.ndarray, eta: float, cap: int,
                       record_every: int = 1) -> np.ndarray:
    """N coupled scalars d_j (one per factor) for a single eigenvalue, from
    W_j(0) = init[j] * I.  Returns an array of shape (records, N)."""
    d = np.array(init, dtype=float)
    n = len(d)
    out = [d.copy()]
    for k in range(1, cap + 1):
        full = np.prod(d)
        others = np.array([np.prod(np.delete(d, j)) for j in range(n)])
        d = d - eta * others * (full - lam)
        if k % record_every == 0 or k == cap:
            out.append(d.copy())
        if np.abs(d).max() > DIVERGENCE_GUARD:
            break
    return np.array(out)


# ---------------------------------------------------------------------------
# full-matrix gradient descent


@dataclass
class FactorState:
    depth: int
    factors: list[np.ndarray]
    eta: float
    iteration: int = 0
    init_kind: Initialization | None = None

    def product(self) -> np.ndarray:
        p = np.eye(self.factors[0].shape[0])
        for w in self.factors:      # factors[0] = W_1; product is W_N ... W_1
            p = w @ p
        return p


def init_factor_state(init: Initialization, dim: int, depth: int, eta: float) -> FactorState:
    if isinstance(init, Identical):
        factors = [init.alpha * np.eye(dim) for _ in range(depth)]
    elif isinstance(init, Perturbed):
        factors = [(init.alpha - init.beta) * np.eye(dim)]
        factors += [init.alpha * np.eye(dim) for _ in range(depth - 1)]
    elif isinstance(init, RandomScaledIdentity):
        draws = SplitMix64(init.seed).gaussians(depth, sigma=init.alpha)
        factors = [draws[j] * np.eye(dim) for j in range(depth)]
    elif isinstance(init, GaussianDense):
        rng = SplitMix64(init.seed)
        factors = [rng.gaussians((dim, dim), sigma=init.sigma) for _ in range(depth)]
    else:
        raise DynamicsError(f"unknown initialization {init!r}")
    return FactorState(depth=depth, factors=factors, eta=eta, init_kind=init)


def matrix_gd_step(state: FactorState, target: np.ndarray) -> FactorState:
    """One simultaneous gradient step on all factors of 1/2 ||W_N...W_1 - target||_F^2."""
    dim = target.shape[0]
    if any(w.shape != (dim, dim) for w in state.factors):
        raise DynamicsError("factor/target dimension mismatch")
    n = state.depth
    ws = state.factors
    grad_w = state.product() - target
    # prefix[j] = W_{j-1}...W_1, suffix[j] = W_N...W_{j+1}
    prefix = [np.eye(dim)]
    for j in range(n - 1):
        prefix.append(ws[j] @ prefix[-1])
    suffix = [np.eye(dim)]
    for j in range(n - 1, 0, -1):
        suffix.append(suffix[-1] @ ws[j])
    suffix.reverse()
    new = [ws[j] - state.eta * (suffix[j].T @ grad_w @ prefix[j].T) for j in range(n)]
    return FactorState(depth=n, factors=new, eta=state.eta,
                       iteration=state.iteration + 1, init_kind=state.init_kind)


def run_matrix_gd(state: FactorState, target: np.ndarray, steps: int,
                  cap: int = DEFAULT_MATRIX_CAP) -> FactorState:
    if steps > cap:
        raise DynamicsError(f"steps {steps} exceeds matrix cap {cap}")
    for _ in range(steps):
        state = matrix_gd_step(state, target)
    return state


def factor_diagonal_checks(state: FactorState, v: np.ndarray) -> dict[str, float]:
    """Deviation diagnostics for decoupling: off-diagonal mass of V^T W_j V,
    max pairwise factor difference, and equality of factors 2..N."""
    ds = [v.T @ w @ v for w in state.factors]
    off = max(np.abs(d - np.diag(np.diag(d))).max() for d in ds)
    pair = 0.0
    for i in range(len(ds)):
        for j in range(i + 1, len(ds)):
            pair = max(pair, np.abs(state.factors[i] - state.factors[j]).max())
    tail = 0.0
    for j in range(2, len(ds)):
        tail = max(tail, np.abs(state.factors[j] - state.factors[1]).max())
    return {"off_diagonal": float(off), "max_pairwise": pair, "tail_equal": tail}


# ---------------------------------------------------------------------------
# continuous flow


def _flow_rhs(y: float, lam: float, depth: int) -> float:
    return -(y ** (depth - 1)) * (y ** depth - lam)


def rk4_flow(lam: float, alpha: float, depth: int, t: float, h: float) -> float:
    """Classical RK4 for y' = -y^(N-1)(y^N - lam), y(0)=alpha; the last partial
    step is shortened to land exactly on t."""
    if h <= 0 or t < 0:
        raise DynamicsError("need h > 0 and t >= 0")
    y = float(alpha)
    remaining = float(t)
    while remaining > 0.0:
        step = min(h, remaining)
        k1 = _flow_rhs(y, lam, depth)
        k2 = _flow_rhs(y + 0.5 * step * k1, lam, depth)
        k3 = _flow_rhs(y + 0.5 * step * k2, lam, depth)
        k4 = _flow_rhs(y + step * k3, lam, depth)
        y += step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        remaining -= step
    return y


def y_minus(lam: float, alpha: float, depth: int, t: float) -> float:
    """Explicit solution of the decay comparison flow y' = lam y^(N-1) (lam < 0)."""
    if lam >= 0:
        raise DynamicsError("comparison flow requires lam < 0")
    if depth == 2:
        return alpha * math.exp(lam * t)
    return ((2 - depth) * lam * t + alpha ** (-(depth - 2))) ** (-1.0 / (depth - 2))


def flow_value(lam: float, alpha: float, depth: int, t: float) -> float:
    """Gradient-flow solution y(t) of y' = -y^(N-1)(y^N - lam), y(0) = alpha.

    Closed forms where they exist (N=1; lam=0; N=2 with lam>0), monotone
    bisection of the implicit flow-time relation for N>=3 with lam>0, and the
    fixed-step RK4 reference for lam<0 with N>=2.
    """
    if alpha <= 0 or t < 0:
        raise DynamicsError("need alpha > 0 and t >= 0")
    if t == 0.0:
        return float(alpha)
    if depth == 1:
        return lam - (lam - alpha) * math.exp(-t)
    if lam == 0.0:
        # y' = -y^(2N-1) integrates to y^(2-2N)(t) = (2N-2) t + alpha^(2-2N)
        return ((2 * depth - 2) * t + alpha ** (2 - 2 * depth)) ** (-1.0 / (2 * depth - 2))
    if lam < 0.0:
        h = min(1e-4, 1e-2 / (abs(lam) * max(alpha, abs(lam) ** (1.0 / depth)) ** (2 * depth - 2)))
        return rk4_flow(lam, alpha, depth, t, h)
    root = lam ** (1.0 / depth)
    if alpha == root:
        return float(alpha)
    if depth == 2:
        return math.sqrt(lam / (1.0 + (lam / alpha ** 2 - 1.0) * math.exp(-2.0 * lam * t)))
    # N >= 3, lam > 0: invert t = t_plus(lam, y, alpha) over the monotone bracket
    lo, hi = (alpha, root) if alpha < root else (root, alpha)
    increasing = alpha < root
    tol = 1e-12 * max(1.0, root)
    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid <= lo or mid >= hi:
            break
        tm = theory.t_plus(lam, mid, alpha, depth)
        if (tm < t) == increasing:
            a = mid
        else:
            b = mid
        if b - a <= tol:
            break
    else:
        raise DynamicsError("flow inversion did not converge")
    return 0.5 * (a + b)
