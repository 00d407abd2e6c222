"""Reproducible experiment orchestration: scenario configs, theory-vs-simulation
sweeps, plateau reproduction, synthetic denoising, divergence probes, and
CSV/JSON emission.

Every run is a pure function of (config, seeds); identical configs produce
byte-identical output files.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, spectral, theory
from .dynamics import GaussianDense, Identical, Perturbed, RandomScaledIdentity
from .prng import SplitMix64

THREADS_ENV = "FACTORFLOW_THREADS"


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid config: " + "; ".join(self.violations))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class NoiseConfig:
    kind: str            # "uniform" | "gaussian"
    scale: float         # spectral norm of the symmetrized noise, relative to ||W_LR||
    seed: int


@dataclass
class ScenarioConfig:
    spectrum: object                 # list of eigenvalues, or dict(values, n, eigenvector_seed)
    depth: int
    init: dynamics.Initialization
    eta: object                      # float, or "auto:<fraction>*<context>"
    epsilons: list = field(default_factory=lambda: [1e-2])
    max_iters: int = 10_000
    record_every: int = 10
    noise: NoiseConfig | None = None

    def spectrum_values(self) -> np.ndarray:
        if isinstance(self.spectrum, dict):
            vals = np.asarray(self.spectrum["values"], dtype=float)
            n = int(self.spectrum.get("n", len(vals)))
            w = np.zeros(n)
            w[: len(vals)] = vals
            return w[np.argsort(-w, kind="stable")]
        return np.sort(np.asarray(self.spectrum, dtype=float))[::-1]

    def eigenvector_seed(self):
        if isinstance(self.spectrum, dict):
            return self.spectrum.get("eigenvector_seed")
        return None

    def resolve_eta(self, eigenvalues: np.ndarray) -> float:
        if isinstance(self.eta, (int, float)):
            return float(self.eta)
        frac_str, context = str(self.eta)[len("auto:"):].split("*", 1)
        fraction = float(frac_str)
        lam_top = float(eigenvalues[np.argmax(np.abs(eigenvalues))])
        alpha = getattr(self.init, "alpha", getattr(self.init, "sigma", 0.0))
        spectral_norm = float(np.abs(eigenvalues).max())
        m = max(alpha, spectral_norm ** (1.0 / self.depth))
        if context in ("thm11", "thm12", "lemma_c2"):
            value = m
        else:
            value = lam_top
        return fraction * theory.stepsize_bound(context, value, alpha, self.depth)


_INIT_KINDS = {
    "identical": (Identical, ("alpha",)),
    "perturbed": (Perturbed, ("alpha", "beta")),
    "random_scaled_identity": (RandomScaledIdentity, ("alpha", "seed")),
    "gaussian_dense": (GaussianDense, ("sigma", "seed")),
}


def config_from_dict(raw: dict) -> ScenarioConfig:
    """Validate a JSON-shaped dict; collects all violations before raising."""
    violations = []
    spectrum = raw.get("spectrum")
    if spectrum is None:
        violations.append("spectrum: missing")
    elif isinstance(spectrum, dict):
        if "values" not in spectrum:
            violations.append("spectrum.values: missing")
        elif "n" in spectrum and int(spectrum["n"]) < len(spectrum["values"]):
            violations.append("spectrum.n: smaller than len(values)")
    elif not isinstance(spectrum, (list, tuple)):
        violations.append("spectrum: expected list or {values, n, eigenvector_seed}")

    depth = raw.get("depth")
    if not isinstance(depth, int) or depth < 1:
        violations.append("depth: expected integer >= 1")

    init_raw = raw.get("init")
    init = None
    if not isinstance(init_raw, dict) or "kind" not in init_raw:
        violations.append("init: expected {kind, ...}")
    elif init_raw["kind"] not in _INIT_KINDS:
        violations.append(f"init.kind: unknown {init_raw['kind']!r}")
    else:
        cls, fields = _INIT_KINDS[init_raw["kind"]]
        missing = [f for f in fields if f not in init_raw]
        if missing:
            violations.append(f"init: missing {', '.join(missing)}")
        else:
            init = cls(**{f: init_raw[f] for f in fields})
            alpha = getattr(init, "alpha", getattr(init, "sigma", 1.0))
            if not alpha > 0 and not isinstance(init, RandomScaledIdentity):
                violations.append("init: scale must be positive")
            if isinstance(init, Perturbed) and not 0 < init.beta < init.alpha:
                violations.append("init: need 0 < beta < alpha")

    eta = raw.get("eta")
    if isinstance(eta, str):
        if not eta.startswith("auto:") or "*" not in eta:
            violations.append('eta: string form is "auto:<fraction>*<context>"')
        else:
            try:
                frac = float(eta[len("auto:"):].split("*", 1)[0])
                if not 0 < frac < 1:
                    violations.append("eta: auto fraction must be in (0,1)")
            except ValueError:
                violations.append("eta: unparseable auto fraction")
    elif not isinstance(eta, (int, float)) or (isinstance(eta, (int, float)) and eta <= 0):
        violations.append("eta: expected positive number or auto string")

    epsilons = raw.get("epsilons", [1e-2])
    if not isinstance(epsilons, list) or not all(
            isinstance(e, (int, float)) and e > 0 for e in epsilons):
        violations.append("epsilons: expected list of positive numbers")

    max_iters = raw.get("max_iters", 10_000)
    if not isinstance(max_iters, int) or max_iters < 1:
        violations.append("max_iters: expected integer >= 1")
    record_every = raw.get("record_every", 10)
    if not isinstance(record_every, int) or record_every < 1:
        violations.append("record_every: expected integer >= 1")

    noise = None
    if raw.get("noise") is not None:
        nz = raw["noise"]
        if not isinstance(nz, dict) or nz.get("kind") not in ("uniform", "gaussian"):
            violations.append('noise.kind: expected "uniform" or "gaussian"')
        elif not isinstance(nz.get("scale"), (int, float)) or nz["scale"] < 0:
            violations.append("noise.scale: expected non-negative number")
        elif not isinstance(nz.get("seed"), int):
            violations.append("noise.seed: expected integer")
        else:
            noise = NoiseConfig(kind=nz["kind"], scale=float(nz["scale"]), seed=nz["seed"])

    if violations:
        raise ConfigError(violations)
    return ScenarioConfig(spectrum=spectrum, depth=depth, init=init, eta=eta,
                          epsilons=[float(e) for e in epsilons], max_iters=max_iters,
                          record_every=record_every, noise=noise)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    init = {"kind": next(k for k, (c, _) in _INIT_KINDS.items() if isinstance(cfg.init, c))}
    for f in _INIT_KINDS[init["kind"]][1]:
        init[f] = getattr(cfg.init, f)
    out = {
        "spectrum": cfg.spectrum,
        "depth": cfg.depth,
        "init": init,
        "eta": cfg.eta,
        "epsilons": cfg.epsilons,
        "max_iters": cfg.max_iters,
        "record_every": cfg.record_every,
    }
    out["noise"] = (None if cfg.noise is None else
                    {"kind": cfg.noise.kind, "scale": cfg.noise.scale, "seed": cfg.noise.seed})
    return out


# ---------------------------------------------------------------------------
# report


@dataclass
class Report:
    config: dict
    columns: list
    records: list                    # list of rows, aligned with columns
    predictions: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def all_pass(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "columns": self.columns,
            "records": self.records,
            "predictions": self.predictions,
            "windows": self.windows,
            "flags": self.flags,
            "extras": self.extras,
        }


def report_from_dict(d: dict) -> Report:
    return Report(config=d["config"], columns=d["columns"], records=d["records"],
                  predictions=d["predictions"], windows=d["windows"],
                  flags=d["flags"], extras=d["extras"])


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def emit(report: Report, fmt: str, path: str) -> None:
    """Write the report; CSV carries the per-step table (17-significant-digit
    floats), JSON mirrors the full Report structure."""
    try:
        if fmt == "csv":
            lines = [",".join(report.columns)]
            for row in report.records:
                lines.append(",".join(_fmt(v) for v in row))
            data = "\n".join(lines) + "\n"
        elif fmt == "json":
            data = json.dumps(report.to_dict(), indent=1) + "\n"
        else:
            raise ValueError(f"unknown format {fmt!r}")
        with open(path, "w") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"emit failed for {path}: {exc}") from exc


def report_from_json(path: str) -> Report:
    with open(path) as fh:
        return report_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# scenario runner


def _noise_matrix(noise: NoiseConfig, n: int, base_norm: float) -> np.ndarray:
    """Symmetrized noise scaled so its spectral norm is scale * base_norm."""
    rng = SplitMix64(noise.seed)
    if noise.kind == "uniform":
        xi = rng.uniform_symmetric(1.0, (n, n))
    else:
        xi = rng.gaussians((n, n))
    xi = spectral.symmetrize(xi)
    spec_norm = np.abs(spectral.eigh(xi).eigenvalues).max()
    if spec_norm > 0:
        xi *= noise.scale * base_norm / spec_norm
    return xi


def _effective_rank_row(products: np.ndarray) -> float:
    a = np.abs(products)
    m = a.max()
    return float(a.sum() / m) if m > 0 else 1.0


def run_scenario(cfg: ScenarioConfig) -> Report:
    """Build the ground truth, run the dynamics matching the configured
    initialization, evaluate predictions, and attach invariant check flags.

    Identical / perturbed / scaled-identity initializations evolve the exact
    per-eigenvalue decoupled dynamics; dense Gaussian initialization runs
    full-matrix gradient descent.
    """
    w = cfg.spectrum_values()
    ev_seed = cfg.eigenvector_seed()
    n = len(w)
    noise_info = {}
    if cfg.noise is not None:
        base_spec = spectral.spectrum_from_eigenvalues(w, eigenvector_seed=ev_seed)
        base = base_spec.matrix()
        xi = _noise_matrix(cfg.noise, n, float(np.abs(w).max()))
        noisy = spectral.symmetrize(base + xi)
        spec = spectral.eigh(noisy)
        w = spec.eigenvalues
        noise_info = {"noise_applied": True}
    eta = cfg.resolve_eta(w)
    flags: dict[str, bool] = {}
    preds = []
    records = []
    k_grid = sorted(set(list(range(0, cfg.max_iters + 1, cfg.record_every))
                        + [cfg.max_iters]))

    if isinstance(cfg.init, Identical):
        alpha = cfg.init.alpha
        d = np.full(n, float(alpha))
        traj = {0: d.copy()}
        for k in range(1, cfg.max_iters + 1):
            d = dynamics.scalar_step(d, w, eta, cfg.depth)
            if k in (cfg.max_iters,) or k % cfg.record_every == 0:
                traj[k] = d.copy()
        mono_ok = True
        admissible = all(eta < theory.stepsize_bound("lemma22", lam, alpha, cfg.depth)
                         for lam in w)
        prev_err = None
        for k in k_grid:
            dk = traj[k]
            p = dk ** cfg.depth
            err = np.abs(p - np.maximum(w, 0.0))
            if admissible and prev_err is not None and np.any(err > prev_err + 1e-12):
                mono_ok = False
            prev_err = err
            loss = 0.5 * float(np.sum((p - w) ** 2))
            records.append([k] + [float(x) for x in p] + [loss, _effective_rank_row(p)])
        if admissible:
            flags["monotone_error"] = mono_ok
        for lam in np.unique(w):
            for eps in cfg.epsilons:
                try:
                    preds.append(theory.t_identical(lam, eps, alpha, eta, cfg.depth).to_dict())
                except theory.TheoryError as exc:
                    preds.append({"lambda": float(lam), "epsilon": eps,
                                  "skipped": str(exc)})
        columns = ["k"] + [f"eig_{i+1}" for i in range(n)] + ["loss", "effective_rank"]

    elif isinstance(cfg.init, Perturbed):
        alpha, beta = cfg.init.alpha, cfg.init.beta
        trajs = [dynamics.run_perturbed(lam, alpha, beta, eta, cfg.depth,
                                        epsilon=min(cfg.epsilons), cap=cfg.max_iters,
                                        stop_on_hit=False)
                 for lam in w]
        res1 = res2 = 0.0
        for t in trajs:
            r1, r2 = dynamics.delta_recursion_residuals(t)
            res1, res2 = max(res1, r1), max(res2, r2)
        flags["delta1_recursion"] = res1 <= 1e-12
        flags["delta2_recursion"] = res2 <= 1e-12
        flags["sign_preserved_after_k0"] = all(
            t.k0 is None or np.all(t.d1[t.k0:] < 0) for t in trajs)
        last = min(len(t.d1) - 1 for t in trajs)
        for k in [kk for kk in k_grid if kk <= last]:
            p = np.array([t.d1[k] * t.d2[k] ** (cfg.depth - 1) for t in trajs])
            loss = 0.5 * float(np.sum((p - w) ** 2))
            records.append([k] + [float(x) for x in p] + [loss, _effective_rank_row(p)])
        for lam in np.unique(w):
            for eps in cfg.epsilons:
                try:
                    preds.append(theory.t_perturbed(lam, eps, alpha, beta, eta,
                                                    cfg.depth).to_dict())
                except theory.TheoryError as exc:
                    preds.append({"lambda": float(lam), "epsilon": eps,
                                  "skipped": str(exc)})
        columns = ["k"] + [f"eig_{i+1}" for i in range(n)] + ["loss", "effective_rank"]
        noise_info["k0"] = {str(float(t.lam)): t.k0 for t in trajs}

    elif isinstance(cfg.init, RandomScaledIdentity):
        draws = SplitMix64(cfg.init.seed).gaussians(cfg.depth, sigma=cfg.init.alpha)
        per_eig = [dynamics.run_factor_scalars(lam, draws, eta, cfg.max_iters,
                                               record_every=cfg.record_every)
                   for lam in w]
        rows = min(p.shape[0] for p in per_eig)
        for j in range(rows):
            k = min(j * cfg.record_every, cfg.max_iters)
            p = np.array([float(np.prod(pe[j])) for pe in per_eig])
            loss = 0.5 * float(np.sum((p - w) ** 2))
            records.append([k] + [float(x) for x in p] + [loss, _effective_rank_row(p)])
        columns = ["k"] + [f"eig_{i+1}" for i in range(n)] + ["loss", "effective_rank"]
        noise_info["factor_draws"] = [float(x) for x in draws]

    elif isinstance(cfg.init, GaussianDense):
        spec = spectral.spectrum_from_eigenvalues(w, eigenvector_seed=ev_seed)
        target = spec.matrix()
        state = dynamics.init_factor_state(cfg.init, n, cfg.depth, eta)
        v = spec.eigenvectors
        for k in range(cfg.max_iters + 1):
            if k % cfg.record_every == 0 or k == cfg.max_iters:
                prod = state.product()
                diag = np.diag(v.T @ prod @ v)
                loss = 0.5 * float(np.linalg.norm(prod - target) ** 2)
                sing = np.abs(np.linalg.svd(prod, compute_uv=False))
                eff = float(sing.sum() / sing.max()) if sing.max() > 0 else 1.0
                records.append([k] + [float(x) for x in diag] + [loss, eff])
            if k < cfg.max_iters:
                state = dynamics.matrix_gd_step(state, target)
        columns = ["k"] + [f"eig_{i+1}" for i in range(n)] + ["loss", "effective_rank"]
    else:
        raise ConfigError([f"unsupported init {cfg.init!r}"])

    report = Report(config=config_to_dict(cfg), columns=columns, records=records,
                    predictions=preds, flags=flags, extras=noise_info)
    return report


# ---------------------------------------------------------------------------
# sweep: empirical hit times vs the two-sided prediction


_DEFAULT_GRID = {
    "depth": [2, 3, 4],
    "lambda": [0.5, 1.0, 5.0, 10.0],
    "alpha": [1e-1, 1e-2],
    "epsilon": [1e-2, 1e-3],
    "eta_fraction": 0.5,
}


def _sweep_row(args):
    depth, lam, alpha, eps, fraction = args
    if eps >= abs(alpha - max(lam, 0.0) ** (1.0 / depth)):
        return {"depth": depth, "lambda": lam, "alpha": alpha, "epsilon": eps,
                "skipped": "epsilon out of range"}
    eta = fraction * theory.stepsize_bound("thm23", lam, alpha, depth)
    bundle = theory.t_identical(lam, eps, alpha, eta, depth)
    traj = dynamics.run_scalar(lam, alpha, eta, depth, eps,
                               cap=int(math.ceil(bundle.t_id)) + 10, record_every=1 << 30)
    t_emp = traj.hit_index
    ok = t_emp is not None and t_emp <= bundle.t_id
    if bundle.t_id_lower is not None:
        ok = ok and t_emp >= bundle.t_id_lower
    return {"depth": depth, "lambda": lam, "alpha": alpha, "epsilon": eps,
            "eta": eta, "t_emp": t_emp, "t_lower": bundle.t_id_lower,
            "t_id": bundle.t_id, "bracket_ok": bool(ok)}


def sweep_bracket(grid: dict | None = None) -> list[dict]:
    """One row per admissible grid point with (T_emp, T_lower, T_Id, bracket_ok);
    inadmissible combinations are kept with a skip reason."""
    g = dict(_DEFAULT_GRID)
    if grid:
        g.update(grid)
    jobs = [(d, lam, a, e, g["eta_fraction"])
            for d in g["depth"] for lam in g["lambda"]
            for a in g["alpha"] for e in g["epsilon"]]
    workers = os.environ.get(THREADS_ENV)
    workers = int(workers) if workers else (os.cpu_count() or 1)
    if workers > 1 and len(jobs) > 1:
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_sweep_row, jobs))
        except OSError:
            pass
    return [_sweep_row(j) for j in jobs]


def sweep_report(grid: dict | None = None) -> Report:
    rows = sweep_bracket(grid)
    columns = ["depth", "lambda", "alpha", "epsilon", "eta", "t_emp", "t_lower",
               "t_id", "bracket_ok"]
    records = [[r.get(c, "") if r.get(c) is not None else "" for c in columns]
               for r in rows if "skipped" not in r]
    skipped = [r for r in rows if "skipped" in r]
    flags = {"bracket_all_ok": all(r["bracket_ok"] for r in rows if "skipped" not in r)}
    return Report(config={"grid": grid or _DEFAULT_GRID}, columns=columns,
                  records=records, flags=flags, extras={"skipped": skipped})


# ---------------------------------------------------------------------------
# synthetic low-rank denoising


def denoise_experiment(cfg: ScenarioConfig) -> Report:
    """Gradient descent on a noisy low-rank target, tracking the relative error
    to the clean matrix; reports the minimizing iteration, the best-rank-L
    benchmark on the noisy matrix, and the plateau window containing the dip."""
    if cfg.noise is None:
        raise ConfigError(["denoise requires a noise config"])
    w_clean = cfg.spectrum_values()
    n = len(w_clean)
    rank = spectral.numerical_rank(w_clean)
    clean_spec = spectral.spectrum_from_eigenvalues(w_clean,
                                                    eigenvector_seed=cfg.eigenvector_seed())
    w_lr = clean_spec.matrix()
    lr_norm = np.linalg.norm(w_lr)
    if cfg.noise.scale > 0:
        xi = _noise_matrix(cfg.noise, n, float(np.abs(w_clean).max()))
        noisy = spectral.symmetrize(w_lr + xi)
    else:
        noisy = w_lr
    spec = spectral.eigh(noisy)
    w = spec.eigenvalues
    eta = cfg.resolve_eta(w)
    alpha = cfg.init.alpha
    if not isinstance(cfg.init, Identical):
        raise ConfigError(["denoise currently runs identical initialization"])

    # W(k) = V diag(d^N) V^T shares the noisy eigenbasis, so the distance to
    # the clean matrix reduces to O(n) per recorded step.
    b = spec.eigenvectors.T @ w_lr @ spec.eigenvectors
    b_diag = np.diag(b).copy()
    b_fro2 = float(np.linalg.norm(b) ** 2)

    d = np.full(n, float(alpha))
    columns = ["k"] + [f"eig_{i+1}" for i in range(n)] + ["loss", "approx_error",
                                                          "effective_rank"]
    records = []
    best = (math.inf, 0)
    for k in range(cfg.max_iters + 1):
        if k % cfg.record_every == 0 or k == cfg.max_iters:
            p = d ** cfg.depth
            loss = 0.5 * float(np.sum((p - w) ** 2))
            err2 = float(np.sum(p ** 2) - 2.0 * np.sum(p * b_diag) + b_fro2)
            rel = math.sqrt(max(err2, 0.0)) / lr_norm
            if rel < best[0]:
                best = (rel, k)
            records.append([k] + [float(x) for x in p]
                           + [loss, rel, _effective_rank_row(p)])
        if k < cfg.max_iters:
            d = dynamics.scalar_step(d, w, eta, cfg.depth)

    extras = {"best_k": best[1], "best_rel_error": best[0], "rank": rank}
    # benchmark: hard truncation of the noisy matrix at the clean rank
    trunc = spectral.best_rank_approx(spec, rank)
    extras["benchmark_rel_error"] = float(np.linalg.norm(trunc - w_lr) / lr_norm)
    end_rel = records[-1][-2]
    extras["endpoint_rel_error"] = end_rel
    flags = {}
    windows = []
    if cfg.depth == 2 and cfg.noise.scale > 0:
        try:
            win = theory.flow_plateau(w, rank, epsilon=cfg.epsilons[0],
                                      big_c=17.0, alpha=alpha)
            windows.append(win.to_dict())
            inside = any(lo <= eta * best[1] <= hi for lo, hi in win.flow_window)
            extras["dip_inside_window"] = inside
        except theory.TheoryError as exc:
            extras["window_skipped"] = str(exc)
    if cfg.noise.scale > 0 and cfg.depth >= 2:
        flags["dip_below_endpoint"] = best[0] < end_rel
    if cfg.noise.scale == 0:
        errs = [r[-2] for r in records]
        flags["monotone_decrease"] = all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    return Report(config=config_to_dict(cfg), columns=columns, records=records,
                  windows=windows, flags=flags, extras=extras)


# ---------------------------------------------------------------------------
# random scaled-identity initialization


def random_init_experiment(cfg: ScenarioConfig, seeds: list[int] | None = None,
                           arrival_rtol: float = 0.05) -> Report:
    """Per-seed eigenvalue arrival order under W_j(0) = a_j I with a_j drawn
    Gaussian of scale alpha; arrival = first k with |prod_j d_j - lam| within
    arrival_rtol * |lam|."""
    if not isinstance(cfg.init, RandomScaledIdentity):
        raise ConfigError(["random_init_experiment requires random_scaled_identity init"])
    w = cfg.spectrum_values()
    w = w[np.abs(w) > 0]
    eta = cfg.resolve_eta(w)
    seeds = list(range(10)) if seeds is None else seeds
    rows = []
    base = SplitMix64(cfg.init.seed)
    for s in seeds:
        draws = base.split(s).gaussians(cfg.depth, sigma=cfg.init.alpha)
        arrivals = []
        for lam in w:
            tol = arrival_rtol * abs(lam)
            d = np.array(draws, dtype=float)
            arrive = None
            for k in range(1, cfg.max_iters + 1):
                full = np.prod(d)
                others = np.array([np.prod(np.delete(d, j)) for j in range(len(d))])
                d = d - eta * others * (full - lam)
                if abs(np.prod(d) - lam) <= tol:
                    arrive = k
                    break
            arrivals.append(arrive)
        order = [int(i) for i in np.argsort([a if a is not None else math.inf
                                             for a in arrivals], kind="stable")]
        magnitude_order = [int(i) for i in np.argsort(-np.abs(w), kind="stable")]
        rows.append({"seed": s, "draws": [float(x) for x in draws],
                     "arrivals": arrivals, "order": order,
                     "follows_magnitude": order == magnitude_order,
                     "all_arrived": all(a is not None for a in arrivals)})
    columns = ["seed", "follows_magnitude", "all_arrived"]
    records = [[r["seed"], r["follows_magnitude"], r["all_arrived"]] for r in rows]
    flags = {"all_converged": all(r["all_arrived"] for r in rows)}
    return Report(config=config_to_dict(cfg), columns=columns, records=records,
                  flags=flags, extras={"per_seed": rows,
                                       "n_inversions": sum(not r["follows_magnitude"]
                                                           for r in rows)})


# ---------------------------------------------------------------------------
# divergence probe


_PROBE_GRID = [
    # (depth, lam, alpha) -- negative-lam divergence rows
    (2, -1.0, 1.0), (2, -4.0, 0.3), (3, -2.0, 0.5), (4, -1.0, 1.2),
    # N=1 rows
    (1, 1.0, 0.3), (1, -2.0, 0.5),
    # positive-lam instability rows
    (2, 4.0, 0.1), (2, 1.0, 0.5), (3, 8.0, 0.1), (3, 1.0, 0.2),
    (4, 2.0, 0.1), (4, 16.0, 0.05),
]


def divergence_probe(grid=None, margin: float = 1.1, safe_margin: float = 0.9) -> Report:
    """For each probe row: at margin * divergence_threshold the iteration must
    destabilize (divergence for N=1 / lam<0; escape from the fixed point after
    a 1e-6 relative perturbation for lam>0), and at safe_margin * Lemma-2.2
    bound it must converge."""
    rows = []
    for depth, lam, alpha in (grid or _PROBE_GRID):
        thr = theory.divergence_threshold(lam, alpha, depth)
        eta_hot = margin * thr
        if depth >= 2 and lam > 0:
            root = lam ** (1.0 / depth)
            d = root * (1.0 + 1e-6)
            escaped = False
            for _ in range(10_000):
                d = dynamics.scalar_step(d, lam, eta_hot, depth)
                if abs(d - root) >= 1e-4 * root or not math.isfinite(d):
                    escaped = True
                    break
            unstable = escaped
        else:
            traj = dynamics.run_scalar(lam, alpha, eta_hot, depth, epsilon=1e-12,
                                       cap=5_000, record_every=1)
            unstable = dynamics.detect_divergence(traj)
        eta_safe = safe_margin * theory.stepsize_bound("lemma22", lam, alpha, depth) \
            if depth >= 2 else safe_margin * 1.0
        traj = dynamics.run_scalar(lam, alpha, eta_safe, depth, epsilon=1e-6,
                                   cap=2_000_000, record_every=1 << 30)
        converged = traj.hit_index is not None and not traj.diverged
        rows.append({"depth": depth, "lambda": lam, "alpha": alpha,
                     "threshold": thr, "unstable_at_margin": bool(unstable),
                     "converged_at_safe": bool(converged),
                     "ok": bool(unstable and converged)})
    columns = ["depth", "lambda", "alpha", "threshold", "unstable_at_margin",
               "converged_at_safe", "ok"]
    records = [[r[c] for c in columns] for r in rows]
    return Report(config={"margin": margin, "safe_margin": safe_margin},
                  columns=columns, records=records,
                  flags={"all_rows_ok": all(r["ok"] for r in rows)})
