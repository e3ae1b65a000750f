"""Experiment runners behind the command line.

Each runner takes a parameter dict, a master seed and a worker count and
returns an :class:`ExperimentResult`.  Sample i of every ensemble draws from
its own stream (master seed, experiment stream, sub-index, i), and results are
collected in index order, so the output does not depend on the worker count.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np

from . import duplication, fields, gaf, inequalities
from .errors import ValidationMismatch
from .rng import SeededStream, as_generator
from .testfunctions import Bump

# stream indices, one per experiment family
S_GAF, S_CHAIN, S_INEQ, S_SPLIT1, S_SPLIT2, S_BOOT = 1, 2, 3, 4, 5, 6
CHUNK = 50


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    kind: str
    tables: dict
    summary: dict
    unreliable: list = field(default_factory=list)


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


# ------------------------------------------------------------------ GAF --


def make_functions(specs) -> list[Bump]:
    out = []
    for s in specs:
        c = s.get("center", 0.0)
        c = complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c)
        out.append(Bump(int(s.get("p", 3)), c, float(s.get("scale", 1.0))))
    return out


def _gaf_chunk(task):
    master, sub, start, stop, Rw, r, funcs, count_radius = task
    hs = make_functions(funcs)
    out = []
    for i in range(start, stop):
        g = gaf.sample_gaf(Rw, SeededStream(master, S_GAF, (sub, i)))
        try:
            zs = gaf.find_zeros(g)
        except ValidationMismatch:
            out.append((i, None))
            continue
        count = int(np.count_nonzero(np.abs(zs.zeros) <= count_radius))
        vals = [gaf.linear_statistic(zs, h, r) for h in hs]
        out.append((i, (count, vals)))
    return out


def gaf_ensemble(r: float, M: int, funcs, master_seed: int, workers: int, sub: int = 0,
                 count_radius: float | None = None):
    """Per-sample zero counts and (raw, centred) statistics for each function at scale r."""
    hs = make_functions(funcs)
    support = max([1.0] + [h.support_radius for h in hs])
    Rw = r * support + gaf.HEADROOM
    cr = r if count_radius is None else count_radius
    tasks = [(master_seed, sub, s, min(M, s + CHUNK), Rw, r, funcs, cr) for s in range(0, M, CHUNK)]
    res = [item for chunk in _map(_gaf_chunk, tasks, workers) for item in chunk]
    counts = np.array([v[0] for _, v in res if v is not None], dtype=float)
    stats = np.array([[c for _, c in v[1]] for _, v in res if v is not None]).reshape(-1, len(hs))
    raws = np.array([[z for z, _ in v[1]] for _, v in res if v is not None]).reshape(-1, len(hs))
    excluded = sum(v is None for _, v in res)
    return res, counts, raws, stats, excluded, Rw


def _gaf_rows(table: Table, res, master_seed, r):
    for i, v in res:
        if v is None:
            continue
        count, vals = v
        for j, (raw, cen) in enumerate(vals):
            table.rows.append((i, master_seed, r, j, count, raw, cen))


GAF_COLUMNS = ["sample", "seed", "r", "h", "zero_count", "Z", "centered_Z"]


def moments(x) -> dict:
    x = np.asarray(x, float)
    m = x.mean()
    d = x - m
    v = float(np.mean(d * d))
    m3, m4 = float(np.mean(d ** 3)), float(np.mean(d ** 4))
    n = x.size
    return {
        "n": int(n), "mean": float(m), "mean_se": math.sqrt(v / n),
        "var": v * n / (n - 1), "var_se": math.sqrt(max(m4 - v * v, 0.0) / n),
        "skewness": m3 / v ** 1.5 if v > 0 else 0.0,
        "excess_kurtosis": m4 / v ** 2 - 3.0 if v > 0 else 0.0,
    }


def bootstrap_ci(x, stat, stream, B: int = 200, level: float = 0.95):
    rng = as_generator(stream)
    x = np.asarray(x)
    vals = np.array([stat(x[rng.integers(0, x.shape[0], x.shape[0])]) for _ in range(B)])
    a = (1 - level) / 2
    return [float(np.quantile(vals, a)), float(np.quantile(vals, 1 - a))]


def _skew(x):
    return moments(x)["skewness"]


def _kurt(x):
    return moments(x)["excess_kurtosis"]


def run_gaf_mean(p: dict, master_seed: int, workers: int) -> ExperimentResult:
    r, M = float(p["r"]), int(p["M"])
    funcs = p["functions"]
    res, counts, raws, stats, excl, Rw = gaf_ensemble(r, M, funcs, master_seed, workers)
    t = Table(GAF_COLUMNS)
    _gaf_rows(t, res, master_seed, r)
    mc = moments(counts)
    hs = make_functions(funcs)
    per_h = []
    for j, h in enumerate(hs):
        mo = moments(stats[:, j])
        per_h.append({"h": j, "expected_Z": r * r / math.pi * h.integral, "mean_centered": mo["mean"],
                      "se": mo["mean_se"], "z_score": mo["mean"] / mo["mean_se"] if mo["mean_se"] else 0.0})
    summary = {
        "r": r, "M": M, "window_radius": Rw, "excluded": excl, "exclusion_rate": excl / M,
        "mean_count": mc["mean"], "count_se": mc["mean_se"], "expected_count": r * r,
        "count_z_score": (mc["mean"] - r * r) / mc["mean_se"] if mc["mean_se"] else 0.0,
        "functions": per_h,
    }
    return ExperimentResult("gaf-mean", {"samples": t}, summary)


def fit_slope(x, y, se) -> tuple[float, float]:
    """Weighted least-squares slope of y on x and its standard error."""
    x, y, se = map(lambda a: np.asarray(a, float), (x, y, se))
    w = 1 / se ** 2
    X = np.stack([np.ones_like(x), x], axis=1)
    A = X.T @ (w[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (w * y))
    return float(coef[1]), float(math.sqrt(np.linalg.inv(A)[1, 1]))


def variance_table(per_r: dict, hs, boot_stream=None) -> dict:
    """Slopes of log Var against log r per function and kappa ratios between functions 0 and 1."""
    out = {"per_r": [], "slopes": [], "kappa_ratio": []}
    rs = sorted(per_r)
    for r in rs:
        S = per_r[r]
        for j, h in enumerate(hs):
            mo = moments(S[:, j])
            out["per_r"].append({"r": r, "h": j, "var": mo["var"], "var_se": mo["var_se"],
                                 "r2_var_over_norm": r * r * mo["var"] / h.l2_laplacian,
                                 "skewness": mo["skewness"], "excess_kurtosis": mo["excess_kurtosis"]})
    for j in range(len(hs)):
        rows = [e for e in out["per_r"] if e["h"] == j]
        if len(rows) >= 2:
            slope, se = fit_slope(np.log([e["r"] for e in rows]), np.log([e["var"] for e in rows]),
                                  [e["var_se"] / e["var"] for e in rows])
            out["slopes"].append({"h": j, "slope": slope, "slope_se": se})
    if len(hs) >= 2:
        n0, n1 = hs[0].l2_laplacian, hs[1].l2_laplacian

        def ratio(S):
            return (np.var(S[:, 0], ddof=1) / n0) / (np.var(S[:, 1], ddof=1) / n1)

        for k, r in enumerate(rs):
            S = per_r[r]
            entry = {"r": r, "ratio": float(ratio(S))}
            if boot_stream is not None:
                entry["ci95"] = bootstrap_ci(S, ratio, boot_stream.child(k))
            out["kappa_ratio"].append(entry)
    return out


def run_gaf_variance(p: dict, master_seed: int, workers: int) -> ExperimentResult:
    M = int(p["M"])
    funcs = p["functions"]
    hs = make_functions(funcs)
    t = Table(GAF_COLUMNS)
    per_r, excluded = {}, {}
    for k, r in enumerate(p["r_list"]):
        r = float(r)
        res, _, _, stats, excl, _ = gaf_ensemble(r, M, funcs, master_seed, workers, sub=k)
        _gaf_rows(t, res, master_seed, r)
        per_r[r] = stats
        excluded[str(r)] = excl
    summary = variance_table(per_r, hs, SeededStream(master_seed, S_BOOT))
    summary.update({"M": M, "excluded": excluded})
    return ExperimentResult("gaf-variance", {"samples": t}, summary)


def run_gaf_clt(p: dict, master_seed: int, workers: int) -> ExperimentResult:
    r, M = float(p["r"]), int(p["M"])
    funcs = p["functions"]
    res, _, _, stats, excl, Rw = gaf_ensemble(r, M, funcs, master_seed, workers)
    t = Table(GAF_COLUMNS)
    _gaf_rows(t, res, master_seed, r)
    boot = SeededStream(master_seed, S_BOOT)
    per_h = []
    for j in range(stats.shape[1]):
        x = r * stats[:, j]
        mo = moments(x)
        z = (x - mo["mean"]) / math.sqrt(mo["var"])
        per_h.append({
            "h": j, **mo,
            "skewness_ci95": bootstrap_ci(z, _skew, boot.child(j, 0), B=int(p.get("bootstrap", 200))),
            "excess_kurtosis_ci95": bootstrap_ci(z, _kurt, boot.child(j, 1), B=int(p.get("bootstrap", 200))),
        })
    summary = {"r": r, "M": M, "window_radius": Rw, "excluded": excl, "functions": per_h}
    return ExperimentResult("gaf-clt", {"samples": t}, summary)


def run_gaf_cgf(p: dict, master_seed: int, workers: int) -> ExperimentResult:
    M = int(p["M"])
    funcs = p["functions"][:1]
    lam = np.asarray(p["lambdas"], float)
    t = Table(["r", "lambda", "estimate", "se", "normalized", "normalized_se", "ess", "reliable"])
    summary = {"M": M, "per_r": []}
    unreliable = []
    for k, r in enumerate(p["r_list"]):
        r = float(r)
        _, _, _, stats, excl, _ = gaf_ensemble(r, M, funcs, master_seed, workers, sub=k)
        Y = r * r * stats[:, 0]
        cgf = duplication.empirical_cgf(Y, lam)
        norm = r * r * lam * lam
        for i in range(lam.size):
            t.rows.append((r, float(lam[i]), float(cgf.estimates[i]), float(cgf.standard_errors[i]),
                           float(cgf.estimates[i] / norm[i]), float(cgf.standard_errors[i] / norm[i]),
                           float(cgf.ess[i]), bool(cgf.reliable[i])))
        if not cgf.reliable.all():
            unreliable.append(f"gaf-cgf r={r}")
        summary["per_r"].append({"r": r, "excluded": excl, "half_var_normalized": 0.5 * float(np.var(Y, ddof=1)) / (r * r)})
    return ExperimentResult("gaf-cgf", {"cgf": t}, summary, unreliable)


# ---------------------------------------------------------------- chains --


def make_chain_spec(p: dict, noise_factor=None, strict=None) -> duplication.DuplicationChainSpec:
    b = p["budget"]
    if b["kind"] == "constant":
        budget = duplication.constant_budget(float(b["C"]))
    elif b["kind"] == "geometric":
        budget = duplication.geometric_budget(float(b["M"]), float(b["theta"]))
    else:
        raise ValueError(f"unknown budget kind {b['kind']!r}")
    return duplication.DuplicationChainSpec(
        duplication.make_law(p["base"]), budget, int(p["depth"]), int(p["samples"]),
        float(p.get("noise_factor", 1.0) if noise_factor is None else noise_factor),
        bool(p.get("strict_budget", True) if strict is None else strict),
    )


def _lambda_grid(p: dict) -> np.ndarray:
    lam = np.linspace(float(p["lambda_max"]) / int(p["n_lambda"]), float(p["lambda_max"]), int(p["n_lambda"]))
    return np.concatenate([-lam[::-1], lam])


def run_md_chain(p: dict, master_seed: int, workers: int) -> ExperimentResult:
    spec = make_chain_spec(p)
    stream = SeededStream(master_seed, S_CHAIN)
    levels = duplication.simulate_chain(spec, stream.child(0))
    lam = _lambda_grid(p)
    t = Table(["level", "lambda", "estimate", "se", "ess", "reliable", "analytic"])
    unreliable = []
    for n, S in enumerate(levels, start=1):
        cgf = duplication.empirical_cgf(S, lam)
        exact = spec.analytic_cgf(n, lam)
        for i in range(lam.size):
            t.rows.append((n, float(lam[i]), float(cgf.estimates[i]), float(cgf.standard_errors[i]),
                           float(cgf.ess[i]), bool(cgf.reliable[i]), float(exact[i])))
        if not cgf.reliable.all():
            unreliable.append(f"md-chain level {n}")
    n_list = [int(n) for n in p["limit_levels"]]
    est = duplication.theoremA_limit_estimate(spec, n_list, stream.child(1), float(p["delta"]))
    ana = duplication.theoremA_limit_analytic(spec, n_list, float(p["delta"]))
    summary = {"levels": len(levels), "limit_estimate": est.limit, "limit_se": est.limit_se,
               "limit_reliable": est.reliable, "limit_analytic": ana.limit}
    if not est.reliable:
        unreliable.append("md-chain limit")
    return ExperimentResult("md-chain", {"cgf": t}, summary, unreliable)


def sandwich_run(p: dict, master_seed: int, noise_factor=None, strict=None, sub: int = 0):
    spec = make_chain_spec(p, noise_factor, strict)
    n = int(p["depth"])
    stream = SeededStream(master_seed, S_CHAIN, (2, sub))
    lam = np.linspace(float(p["lambda_max"]) / int(p["n_lambda"]), float(p["lambda_max"]), int(p["n_lambda"]))
    f1 = duplication.empirical_cgf(duplication.simulate_level(spec, 1, stream), lam)
    fn = duplication.empirical_cgf(duplication.simulate_level(spec, n, stream), lam)
    theta = float(p["budget"].get("theta", 0.5))
    return duplication.sandwich_check(f1, spec.chain_budget(n, theta), fn, n)


def run_sandwich(p: dict, master_seed: int, workers: int) -> ExperimentResult:
    rep = sandwich_run(p, master_seed)
    t = Table(["lambda", "lower", "empirical", "upper", "se", "pass", "counted"])
    for i, row in enumerate(rep.rows()):
        t.rows.append((row["lambda"], row["lower"], row["empirical"], row["upper"], row["se"], row["pass"],
                       bool(rep.counted[i])))
    summary = {"fraction": rep.fraction, "ok": rep.ok, "counted": int(rep.counted.sum())}
    if "control_noise_factor" in p:
        ctl = sandwich_run(p, master_seed, float(p["control_noise_factor"]), False, sub=1)
        summary["control"] = {"noise_factor": float(p["control_noise_factor"]), "fraction": ctl.fraction,
                              "ok": ctl.ok}
    return ExperimentResult("sandwich", {"sandwich": t}, summary)


# ---------------------------------------------------------- inequalities --


def exact_suites(n: int, seed: int) -> dict:
    rng = as_generator(SeededStream(seed, S_INEQ, (0,)))
    holder = cosh = subg = 0
    A = inequalities.subgaussian_constant().value
    for _ in range(n):
        X = inequalities.random_distribution(rng)
        Y = inequalities.random_distribution(rng)
        for p in (1.1, 2.0, 10.0):
            holder += not inequalities.holder_split_check(X, Y, p).passed
        C = inequalities.MP.acosh(X.expect(inequalities.MP.cosh))
        for lam in (-1.0, -0.5, 0.25, 1.0):
            cosh += not inequalities.cosh_contraction_check(X, C, lam).passed
        Zc = inequalities.random_distribution(rng, centered=True, scale=float(rng.choice([0.1, 1.0, 3.0])))
        subg += not inequalities.subgaussian_bound_check(Zc, A=A, lam_grid=np.linspace(-1, 1, 21)).passed
    return {"instances": n, "holder_violations": holder, "cosh_violations": cosh, "subgaussian_violations": subg}


def run_inequalities(p: dict, master_seed: int, workers: int) -> ExperimentResult:
    summary = {"exact": exact_suites(int(p["instances"]), master_seed),
               "subgaussian_constant": inequalities.subgaussian_constant().as_dict()}
    M = int(p["M"])
    st = SeededStream(master_seed, S_INEQ, (1,))
    zero = inequalities.CloseMeasureInstance(np.eye(3), np.zeros((3, 1)))
    Y, Z, _ = fields.b4_lattice_instance()
    lat = inequalities.CloseMeasureInstance(Y, Z)
    k1 = inequalities.CloseMeasureInstance([[math.sqrt(2)]], [[0.1]])
    summary["b4"] = {name: inequalities.b4_check(inst, M, st.child(i), strict=False).as_dict()
                     for i, (name, inst) in enumerate([("zero_z", zero), ("k1", k1), ("lattice", lat)])}
    fs = [inequalities.GaussianBump(0, 1.0), inequalities.DiskIndicator(0, 1.0)]
    summary["b5"] = inequalities.b5_check(np.eye(2), fs, M, st.child(10)).as_dict()
    th = inequalities.th31_estimate(int(p["th31_M"]), st.child(20), T=float(p["th31_T"]))
    summary["th31"] = th.as_dict()
    unreliable = [k for k, v in summary["b4"].items() if not v["reliable"]]
    if not th.extra["reliable"]:
        unreliable.append("th31")
    return ExperimentResult("inequalities", {}, summary, unreliable)


# ------------------------------------------------------------ splittable --


def run_splittable_1d(p: dict, master_seed: int, workers: int) -> ExperimentResult:
    rep = fields.def_c_estimate(float(p["T"]), float(p["h"]), int(p["M"]), SeededStream(master_seed, S_SPLIT1))
    un = [] if rep.reliable else ["splittable-1d"]
    return ExperimentResult("splittable-1d", {}, {"def_c": rep.as_dict()}, un)


def run_splittable_2d(p: dict, master_seed: int, workers: int) -> ExperimentResult:
    alpha = p.get("alpha")
    choice = fields.alpha_select() if alpha is None else None
    alpha = choice.alpha if alpha is None else float(alpha)
    out = fields.defE3_c3_estimate(float(p["T"]), float(p["h"]), int(p["M"]), SeededStream(master_seed, S_SPLIT2),
                                   alpha, alphas_extra=tuple(float(a) for a in p.get("alphas_extra", [])))
    rep = out["report"]
    summary = {"alpha": alpha, "c3": rep.as_dict(), "by_alpha": {repr(k): v for k, v in out["by_alpha"].items()}}
    if choice is not None:
        summary["alpha_select"] = choice.as_dict()
    return ExperimentResult("splittable-2d", {}, summary, [] if rep.reliable else ["splittable-2d"])


def run_certificates(p: dict, master_seed: int, workers: int) -> ExperimentResult:
    fb = fields.fourier_lower_bound(float(p["step"]), int(p["K_lattice"]))
    al = fields.alpha_select(float(p["alpha_tolerance"]))
    sg = inequalities.subgaussian_constant()
    th = fields.th31_instance()
    summary = {"fourier_lower_bound": fb.as_dict(), "alpha_select": al.as_dict(),
               "subgaussian_constant": sg.as_dict(), "th31_instance": th.as_dict()}
    return ExperimentResult("certificates", {}, summary)


RUNNERS = {
    "md-chain": run_md_chain,
    "sandwich": run_sandwich,
    "inequalities": run_inequalities,
    "splittable-1d": run_splittable_1d,
    "splittable-2d": run_splittable_2d,
    "gaf-mean": run_gaf_mean,
    "gaf-variance": run_gaf_variance,
    "gaf-clt": run_gaf_clt,
    "gaf-cgf": run_gaf_cgf,
    "certificates": run_certificates,
}


def run_experiment(kind: str, params: dict, master_seed: int, workers: int = 1) -> ExperimentResult:
    return RUNNERS[kind](params, master_seed, workers)
