"""Seeded experiment runners with CSV/JSON artifacts and embedded checks.

Every experiment resolves its configuration against defaults, derives one
64-bit seed per replicate from the base seed, writes byte-stable CSV output
(17 significant digits, LF endings) together with a manifest recording the
config hash, seed list, library version, and kernel backend, and returns a
verdict dict whose "checks" entries gate the CLI exit code.
"""
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, backend
from .baselines import (
    constrained_erm_ball,
    constrained_erm_quadratic,
    lasso_path,
    population_ball_minimizer,
    population_ellipsoid_minimizer,
    ridge_path,
)
from .engine import (
    DivergenceError,
    STOP_THRESHOLD,
    first_crossing,
    l1_hyperparameters,
    run_continuous,
    run_discrete,
    run_kernel_discrete,
)
from .maps import EuclideanMap, HypentropyMap, QuadraticMap
from .offset import (
    L2Ball,
    offset_complexity_mc,
    offset_condition_residual,
    offset_condition_worst_residual,
)
from .problems import (
    GaussianLinearLaw,
    KernelProblem,
    empirical_risk,
    population_risk,
    rbf_gram,
    sample_problem,
    sparse_sign_law,
)

FIG2_TRUE_PARAM = (1.5, 0.5)
FIG2_COVARIANCE = ((1.0, 1.0), (1.0, 2.0))
FIG2_NOISE_SD = 0.5


@dataclass
class ExperimentConfig:
    experiment: str
    output_dir: str
    base_seed: int = 0
    replicates: int | None = None
    jobs: int = 1
    params: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path, **overrides):
        with open(path) as fh:
            payload = json.load(fh)
        payload.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**payload)


@dataclass
class AggregateSeries:
    """Mean and 10th/90th percentile bands over replicates on a shared grid."""

    x: np.ndarray
    mean: np.ndarray
    p10: np.ndarray
    p90: np.ndarray

    @classmethod
    def from_rows(cls, x, rows):
        rows = np.asarray(rows, dtype=float)
        p10, p90 = np.percentile(rows, [10, 90], axis=0, method="linear")
        return cls(np.asarray(x, float), rows.mean(axis=0), p10, p90)

    def to_csv(self, path, x_name="x", offset=0.0):
        """Write x,mean,p10,p90 plus the same bands shifted by -offset."""
        with open(path, "w", newline="\n") as fh:
            fh.write(f"{x_name},mean,p10,p90,excess_mean,excess_p10,excess_p90\n")
            for i in range(len(self.x)):
                fh.write(
                    f"{self.x[i]:.17g},{self.mean[i]:.17g},{self.p10[i]:.17g},"
                    f"{self.p90[i]:.17g},{self.mean[i] - offset:.17g},"
                    f"{self.p10[i] - offset:.17g},{self.p90[i] - offset:.17g}\n"
                )


def derive_seeds(base_seed, replicates):
    """Per-replicate 64-bit seeds expanded deterministically from base_seed."""
    state = np.random.SeedSequence(base_seed).generate_state(replicates, np.uint64)
    return [int(s) for s in state]


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return f"{float(value):.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _config_hash(resolved):
    blob = json.dumps(resolved, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _write_manifest(out_dir, experiment, resolved, seeds):
    manifest = {
        "experiment": experiment,
        "config": resolved,
        "config_sha256": _config_hash(resolved),
        "seeds": seeds,
        "version": __version__,
        "backend": backend.active_backend(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _map_replicates(worker, args, jobs):
    if jobs <= 1:
        return [worker(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, args))


def _resolve(cfg, defaults):
    resolved = dict(defaults)
    resolved.update(cfg.params)
    if cfg.replicates is not None:
        resolved["replicates"] = int(cfg.replicates)
    if resolved["replicates"] < 1:
        raise ValueError("replicates must be at least 1")
    resolved["base_seed"] = int(cfg.base_seed)
    return resolved


def _check(name, passed, detail=""):
    return {"name": name, "passed": bool(passed), "detail": detail}


# ---------------------------------------------------------------------------
# fig-implicit: risk along penalty paths vs risk along descent paths
# ---------------------------------------------------------------------------

FIG_IMPLICIT_DEFAULTS = {
    "n": 200,
    "dim": 100,
    "sparsity": 10,
    "noise_sd": 5.0,
    "replicates": 100,
    "lambda_min": 1e-4,
    "lambda_max": 1e2,
    "lambda_points": 60,
    "descent_steps": 3000,
    "record_every": 5,
    "lasso_tol": 1e-8,
}


def _fig_implicit_replicate(args):
    seed, p = args
    law = sparse_sign_law(p["dim"], p["sparsity"], p["noise_sd"])
    problem = sample_problem(law, p["n"], seed)
    lambdas = np.logspace(
        math.log10(p["lambda_min"]), math.log10(p["lambda_max"]), p["lambda_points"]
    )
    l2_risks = ridge_path(problem, lambdas, law).risks
    l1_risks = lasso_path(problem, lambdas, law, tol=p["lasso_tol"]).risks

    steps = p["descent_steps"]
    gram_top = float(
        np.linalg.eigvalsh(problem.design.T @ problem.design / problem.n).max()
    )
    runs = {}
    for name in ("euclidean", "hypentropy"):
        if name == "euclidean":
            mirror_map = EuclideanMap()
            step_size = 1.0 / (2.0 * gram_top)
        else:
            kappa = float(
                np.linalg.norm(problem.design / math.sqrt(problem.n), axis=0).max()
            )
            sched = l1_hyperparameters(
                kappa,
                float(np.abs(law.true_param).sum()),
                p["noise_sd"],
                p["dim"],
                p["n"],
            )
            mirror_map = HypentropyMap(sched.gamma)
            step_size = sched.step_size
        traj, _ = run_discrete(
            mirror_map,
            problem,
            np.zeros(p["dim"]),
            step_size,
            reference=law.true_param,
            stop_rule="none",
            max_iters=steps,
            store_alphas=True,
        )
        risks = np.array([population_risk(law, a) for a in traj.alphas])
        runs[name] = risks
    return l1_risks, l2_risks, runs["hypentropy"], runs["euclidean"]


def run_fig_implicit(cfg):
    p = _resolve(cfg, FIG_IMPLICIT_DEFAULTS)
    seeds = cfg.params.get("seeds") or derive_seeds(p["base_seed"], p["replicates"])
    out = _map_replicates(
        _fig_implicit_replicate, [(s, p) for s in seeds], cfg.jobs
    )
    l1_rows = [o[0] for o in out]
    l2_rows = [o[1] for o in out]
    hyp_rows = [o[2] for o in out]
    euc_rows = [o[3] for o in out]

    lambdas = np.logspace(
        math.log10(p["lambda_min"]), math.log10(p["lambda_max"]), p["lambda_points"]
    )
    every = p["record_every"]
    t_grid = np.arange(0, p["descent_steps"] + 1, every)
    noise_var = p["noise_sd"] ** 2

    os.makedirs(cfg.output_dir, exist_ok=True)
    AggregateSeries.from_rows(lambdas, l1_rows).to_csv(
        os.path.join(cfg.output_dir, "risk_vs_lambda_l1.csv"), "lambda", noise_var
    )
    AggregateSeries.from_rows(lambdas, l2_rows).to_csv(
        os.path.join(cfg.output_dir, "risk_vs_lambda_l2.csv"), "lambda", noise_var
    )
    AggregateSeries.from_rows(t_grid, [r[t_grid] for r in hyp_rows]).to_csv(
        os.path.join(cfg.output_dir, "risk_vs_t_hypentropy.csv"), "t", noise_var
    )
    AggregateSeries.from_rows(t_grid, [r[t_grid] for r in euc_rows]).to_csv(
        os.path.join(cfg.output_dir, "risk_vs_t_euclidean.csv"), "t", noise_var
    )

    hyp_min = np.array([r.min() for r in hyp_rows])
    euc_min = np.array([r.min() for r in euc_rows])
    write_csv(
        os.path.join(cfg.output_dir, "minima.csv"),
        ["seed", "min_path_risk_hypentropy", "min_path_risk_euclidean"],
        list(zip(seeds, hyp_min, euc_min)),
    )
    _write_manifest(cfg.output_dir, "fig-implicit", p, seeds)

    med_hyp = float(np.median(hyp_min)) - noise_var
    med_euc = float(np.median(euc_min)) - noise_var
    ratio = med_hyp / med_euc if med_euc > 0 else math.inf
    checks = [
        _check(
            "hypentropy median min-path risk below euclidean",
            np.median(hyp_min) < np.median(euc_min),
            f"{np.median(hyp_min):.4g} vs {np.median(euc_min):.4g}",
        ),
        _check(
            "median excess ratio at most 0.5",
            ratio <= 0.5,
            f"ratio {ratio:.4g}",
        ),
    ]
    return {
        "experiment": "fig-implicit",
        "median_min_excess": {"hypentropy": med_hyp, "euclidean": med_euc},
        "checks": checks,
    }


# ---------------------------------------------------------------------------
# fig-bernstein: empirical-rule stopping can leave the comparison ball
# ---------------------------------------------------------------------------

FIG_BERNSTEIN_DEFAULTS = {
    "n": 100,
    "true_param": list(FIG2_TRUE_PARAM),
    "covariance": [list(r) for r in FIG2_COVARIANCE],
    "noise_sd": FIG2_NOISE_SD,
    "step_size": 1e-3,
    "radius": 1.0,
    "max_iters": 10**6,
    "replicates": 100,
}


def _fig_bernstein_replicate(args):
    seed, p = args
    law = GaussianLinearLaw(p["covariance"], p["true_param"], p["noise_sd"])
    problem = sample_problem(law, p["n"], seed)
    reference = population_ball_minimizer(law, p["radius"])
    threshold = empirical_risk(problem, reference)
    mirror_map = QuadraticMap(np.asarray(p["covariance"], float), 0.5)
    traj, report = run_discrete(
        mirror_map,
        problem,
        np.zeros(law.m),
        p["step_size"],
        reference=law.true_param,
        stop_rule="risk",
        risk_threshold=threshold,
        max_iters=p["max_iters"],
    )
    stopped = traj.final_alpha()
    censored = report.stopped_by != STOP_THRESHOLD
    pop_stop = population_risk(law, stopped)
    pop_ref = population_risk(law, reference)
    return {
        "seed": seed,
        "t_star": report.t_star,
        "censored": censored,
        "emp_risk_stop": traj.risk[-1],
        "emp_risk_ref": threshold,
        "pop_risk_stop": pop_stop,
        "pop_risk_ref": pop_ref,
        "violation": (not censored) and pop_stop < pop_ref,
        "coef": stopped,
        "reference": reference,
    }


def run_fig_bernstein(cfg):
    p = _resolve(cfg, FIG_BERNSTEIN_DEFAULTS)
    seeds = cfg.params.get("seeds") or derive_seeds(p["base_seed"], p["replicates"])
    rows = _map_replicates(
        _fig_bernstein_replicate, [(s, p) for s in seeds], cfg.jobs
    )

    os.makedirs(cfg.output_dir, exist_ok=True)
    write_csv(
        os.path.join(cfg.output_dir, "replicates.csv"),
        [
            "seed", "t_star", "censored", "emp_risk_stop", "emp_risk_ref",
            "pop_risk_stop", "pop_risk_ref", "violation", "coef_0", "coef_1",
        ],
        [
            (
                r["seed"], r["t_star"], r["censored"], r["emp_risk_stop"],
                r["emp_risk_ref"], r["pop_risk_stop"], r["pop_risk_ref"],
                r["violation"], r["coef"][0], r["coef"][1],
            )
            for r in rows
        ],
    )
    _write_manifest(cfg.output_dir, "fig-bernstein", p, seeds)

    law = GaussianLinearLaw(p["covariance"], p["true_param"], p["noise_sd"])
    reference = rows[0]["reference"]
    grad = law.covariance @ (reference - law.true_param)
    mult = -float(grad @ reference) / float(reference @ reference)
    kkt_residual = float(np.linalg.norm(grad + mult * reference))
    on_sphere = abs(np.linalg.norm(reference) - p["radius"]) <= 1e-8

    violations = sum(r["violation"] for r in rows)
    rule_ok = all(
        r["censored"] or r["emp_risk_stop"] <= r["emp_risk_ref"] for r in rows
    )
    checks = [
        _check(
            "at least one population-risk violation",
            violations >= 1,
            f"{violations} of {len(rows)} replicates",
        ),
        _check(
            "empirical rule satisfied on non-censored replicates", rule_ok
        ),
        _check(
            "ball reference sits on the sphere with small KKT residual",
            on_sphere and kkt_residual <= 1e-8 and mult >= 0,
            f"kkt residual {kkt_residual:.3g}",
        ),
    ]
    return {
        "experiment": "fig-bernstein",
        "violations": violations,
        "censored": sum(r["censored"] for r in rows),
        "checks": checks,
    }


# ---------------------------------------------------------------------------
# fig-offset-analysis: the gap delta+r drives the potential down
# ---------------------------------------------------------------------------

FIG_OFFSET_DEFAULTS = {
    "n": 200,
    "dim": 100,
    "sparsity": 10,
    "noise_sd": 5.0,
    "replicates": 100,
    "maps": ["euclidean", "hypentropy"],
    "grid_step": 1e-2,
    "epsilon": 1.0,
    "horizons": {"euclidean": 40.0, "hypentropy": 4.0},
}


def _fig_offset_replicate(args):
    seed, p = args
    law = sparse_sign_law(p["dim"], p["sparsity"], p["noise_sd"])
    problem = sample_problem(law, p["n"], seed)
    out = {}
    for name in p["maps"]:
        if name == "euclidean":
            mirror_map = EuclideanMap()
        else:
            kappa = float(
                np.linalg.norm(problem.design / math.sqrt(problem.n), axis=0).max()
            )
            sched = l1_hyperparameters(
                kappa,
                float(np.abs(law.true_param).sum()),
                p["noise_sd"],
                p["dim"],
                p["n"],
            )
            mirror_map = HypentropyMap(sched.gamma)
        traj, _ = run_continuous(
            mirror_map,
            problem,
            np.zeros(p["dim"]),
            p["epsilon"],
            law.true_param,
            horizon=p["horizons"][name],
            grid_step=p["grid_step"],
            stop_rule="none",
        )
        gap = traj.gap()
        potential = traj.potential
        active = gap[:-1] > 0
        drops = np.diff(potential)
        tol = 1e-10 * (1.0 + potential[:-1])
        monotone = bool(np.all(drops[active] <= tol[active]))
        cross = first_crossing(traj, p["epsilon"])
        flat = np.nonzero(-drops < 1e-3 * max(potential[0] - potential[-1], 1e-30))[0]
        flatten_idx = int(flat[0]) if flat.size else len(potential) - 1
        out[name] = {
            "gap": gap,
            "potential": potential,
            "monotone": monotone,
            "cross": cross,
            "gap_at_cross": float(gap[cross]) if cross is not None else math.nan,
            "min_before_flatten": (
                int(np.argmin(gap)) <= flatten_idx
            ),
        }
    return out


def run_fig_offset_analysis(cfg):
    p = _resolve(cfg, FIG_OFFSET_DEFAULTS)
    seeds = cfg.params.get("seeds") or derive_seeds(p["base_seed"], p["replicates"])
    out = _map_replicates(_fig_offset_replicate, [(s, p) for s in seeds], cfg.jobs)

    os.makedirs(cfg.output_dir, exist_ok=True)
    checks = []
    summary = {}
    for name in p["maps"]:
        h = p["grid_step"]
        length = min(len(o[name]["gap"]) for o in out)
        t_grid = np.arange(length) * h
        gaps = [o[name]["gap"][:length] for o in out]
        pots = [o[name]["potential"][:length] for o in out]
        AggregateSeries.from_rows(t_grid, gaps).to_csv(
            os.path.join(cfg.output_dir, f"gap_{name}.csv"), "t"
        )
        AggregateSeries.from_rows(t_grid, pots).to_csv(
            os.path.join(cfg.output_dir, f"potential_{name}.csv"), "t"
        )
        monotone_frac = np.mean([o[name]["monotone"] for o in out])
        crossed = [o[name]["cross"] is not None for o in out]
        gap_ok = all(
            o[name]["gap_at_cross"] <= p["epsilon"]
            for o in out
            if o[name]["cross"] is not None
        )
        min_frac = np.mean([o[name]["min_before_flatten"] for o in out])
        summary[name] = {
            "monotone_fraction": float(monotone_frac),
            "crossing_fraction": float(np.mean(crossed)),
            "gap_min_before_flattening_fraction": float(min_frac),
        }
        checks.append(
            _check(
                f"{name}: potential non-increasing while the gap is positive "
                "on at least 99% of replicates",
                monotone_frac >= 0.99,
                f"fraction {monotone_frac:.3f}",
            )
        )
        checks.append(
            _check(
                f"{name}: gap at the stopping grid point is at most epsilon",
                all(crossed) and gap_ok,
                f"crossing fraction {np.mean(crossed):.3f}",
            )
        )
    _write_manifest(cfg.output_dir, "fig-offset-analysis", p, seeds)
    return {"experiment": "fig-offset-analysis", "summary": summary, "checks": checks}


# ---------------------------------------------------------------------------
# exp-l1-rate: in-sample error of hypentropy descent across sample sizes
# ---------------------------------------------------------------------------

EXP_L1_RATE_DEFAULTS = {
    "n_grid": [100, 200, 400, 800, 1600],
    "dim": 100,
    "sparsity": 10,
    "noise_sd": 1.0,
    "replicates": 50,
    # 1.0 is the threshold the stopping analysis prescribes; smaller values
    # are a diagnostic knob only (see README on the slope check)
    "epsilon_scale": 1.0,
}


def _exp_l1_rate_replicate(args):
    seed, n, p = args
    law = sparse_sign_law(p["dim"], p["sparsity"], p["noise_sd"])
    problem = sample_problem(law, n, seed)
    kappa = float(np.linalg.norm(problem.design / math.sqrt(n), axis=0).max())
    l1_norm = float(np.abs(law.true_param).sum())
    sched = l1_hyperparameters(kappa, l1_norm, p["noise_sd"], p["dim"], n)
    epsilon = sched.epsilon * p["epsilon_scale"]
    row = {
        "n": n,
        "seed": seed,
        "kappa": kappa,
        "epsilon": epsilon,
        "budget": sched.budget,
        "bound": sched.error_bound,
        "flagged": False,
        "error": math.nan,
        "t_star": math.nan,
    }
    try:
        traj, report = run_discrete(
            HypentropyMap(sched.gamma),
            problem,
            np.zeros(p["dim"]),
            sched.step_size,
            epsilon=epsilon,
            reference=law.true_param,
            max_iters=int(math.ceil(2 * sched.budget)) + 1,
        )
    except DivergenceError:
        row["flagged"] = True
        return row
    row["error"] = float(traj.r[-1])
    row["t_star"] = report.t_star
    row["stopped"] = report.stopped_by == STOP_THRESHOLD
    return row


def run_exp_l1_rate(cfg):
    p = _resolve(cfg, EXP_L1_RATE_DEFAULTS)
    seeds = cfg.params.get("seeds") or derive_seeds(p["base_seed"], p["replicates"])
    args = [(s, n, p) for n in p["n_grid"] for s in seeds]
    rows = _map_replicates(_exp_l1_rate_replicate, args, cfg.jobs)

    os.makedirs(cfg.output_dir, exist_ok=True)
    write_csv(
        os.path.join(cfg.output_dir, "replicates.csv"),
        ["n", "seed", "error", "bound", "within_bound", "t_star", "budget",
         "epsilon", "kappa", "flagged"],
        [
            (
                r["n"], r["seed"], r["error"], r["bound"],
                (not r["flagged"]) and r["error"] <= r["bound"],
                r["t_star"], r["budget"], r["epsilon"], r["kappa"], r["flagged"],
            )
            for r in rows
        ],
    )

    clean = [r for r in rows if not r["flagged"]]
    within = [r["error"] <= r["bound"] for r in clean]
    budget_ok = [r["t_star"] <= r["budget"] for r in clean]
    medians = []
    for n in p["n_grid"]:
        errs = [r["error"] for r in clean if r["n"] == n]
        medians.append((n, float(np.median(errs))))
    write_csv(
        os.path.join(cfg.output_dir, "summary.csv"),
        ["n", "median_error", "bound", "ratio"],
        [
            (n, med, b, med / b)
            for (n, med), b in zip(
                medians,
                [next(r["bound"] for r in clean if r["n"] == n) for n in p["n_grid"]],
            )
        ],
    )
    log_n = np.log([n for n, _ in medians])
    log_err = np.log([m for _, m in medians])
    slope = float(np.polyfit(log_n, log_err, 1)[0])
    _write_manifest(cfg.output_dir, "exp-l1-rate", p, seeds)

    frac_within = float(np.mean(within)) if within else 0.0
    checks = [
        _check(
            "at least 90% of replicates within the error bound",
            frac_within >= 0.9,
            f"fraction {frac_within:.3f}",
        ),
        _check(
            "every stopping time within the theoretical budget",
            all(budget_ok),
            f"{sum(budget_ok)}/{len(budget_ok)}",
        ),
        _check(
            "log-log slope of the median error in [-0.75, -0.25]",
            -0.75 <= slope <= -0.25,
            f"slope {slope:.3f}",
        ),
    ]
    return {
        "experiment": "exp-l1-rate",
        "slope": slope,
        "flagged": sum(r["flagged"] for r in rows),
        "checks": checks,
    }


# ---------------------------------------------------------------------------
# exp-kernel: early-stopped Gram updates vs constrained kernel ERM
# ---------------------------------------------------------------------------

EXP_KERNEL_DEFAULTS = {
    "n": 100,
    "bandwidth": 0.2,
    "radius": 2.0,
    "label_bound": 1.5,
    "kernel_bound": 1.0,
    "epsilon": 0.25,
    "replicates": 20,
}


def _exp_kernel_replicate(args):
    seed, p = args
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = rng.uniform(0.0, 1.0, p["n"])
    labels = np.clip(np.sin(2 * np.pi * x), -1.0, 1.0) + rng.uniform(
        -0.5, 0.5, p["n"]
    )
    gram = rbf_gram(x, p["bandwidth"])
    kp = KernelProblem(gram, labels, p["kernel_bound"])
    step_size = min(1.0, 1.0 / kp.max_scaled_eigval())
    reference = constrained_erm_ball(kp, p["radius"], geometry="rkhs")

    traj, report = run_kernel_discrete(
        kp, np.zeros(p["n"]), step_size, epsilon=p["epsilon"], reference=reference
    )
    stopped = traj.final_alpha()

    worst = offset_condition_worst_residual(kp, stopped, p["radius"], 0.5)
    start_potential = traj.potential[0]
    stop_potential = traj.potential[-1]
    lr_m = p["kernel_bound"] * p["radius"] + p["label_bound"]
    confinement = stop_potential <= start_potential + lr_m**2 + 1e-8
    rkhs_norm_sq = 2.0 * stop_potential + 8.0 * p["radius"] ** 2
    rkhs_cap = 10.0 * p["radius"] ** 2 + 2.0 * lr_m**2
    return {
        "seed": seed,
        "step_size": step_size,
        "t_star": report.t_star,
        "budget": report.budget,
        "worst_residual": worst,
        "stopped": report.stopped_by == STOP_THRESHOLD,
        "potential_start": start_potential,
        "potential_stop": stop_potential,
        "confinement": confinement,
        "rkhs_norm_sq_bound": rkhs_norm_sq,
        "rkhs_cap": rkhs_cap,
    }


def run_exp_kernel(cfg):
    p = _resolve(cfg, EXP_KERNEL_DEFAULTS)
    seeds = cfg.params.get("seeds") or derive_seeds(p["base_seed"], p["replicates"])
    rows = _map_replicates(_exp_kernel_replicate, [(s, p) for s in seeds], cfg.jobs)

    os.makedirs(cfg.output_dir, exist_ok=True)
    write_csv(
        os.path.join(cfg.output_dir, "replicates.csv"),
        ["seed", "step_size", "t_star", "budget", "worst_residual", "stopped",
         "potential_start", "potential_stop", "confinement",
         "rkhs_norm_sq_bound", "rkhs_cap"],
        [
            (
                r["seed"], r["step_size"], r["t_star"], r["budget"],
                r["worst_residual"], r["stopped"], r["potential_start"],
                r["potential_stop"], r["confinement"], r["rkhs_norm_sq_bound"],
                r["rkhs_cap"],
            )
            for r in rows
        ],
    )
    _write_manifest(cfg.output_dir, "exp-kernel", p, seeds)

    residual_ok = all(r["worst_residual"] <= p["epsilon"] + 1e-12 for r in rows)
    confinement_ok = all(r["confinement"] for r in rows)
    norm_ok = all(r["rkhs_norm_sq_bound"] <= r["rkhs_cap"] + 1e-8 for r in rows)
    stopped_ok = all(r["stopped"] for r in rows)
    checks = [
        _check(
            "worst-case offset residual (c=1/2) at most epsilon on all replicates",
            residual_ok,
        ),
        _check(
            "Bregman confinement within the squared boundedness margin",
            confinement_ok,
        ),
        _check("derived RKHS-norm bound within its cap", norm_ok),
        _check("threshold reached on every replicate", stopped_ok),
    ]
    return {"experiment": "exp-kernel", "checks": checks}


# ---------------------------------------------------------------------------
# exp-path-vs-erm: early-stopped descent vs explicitly constrained ERM
# ---------------------------------------------------------------------------

EXP_PATH_DEFAULTS = {
    "n": 100,
    "true_param": list(FIG2_TRUE_PARAM),
    "covariance": [list(r) for r in FIG2_COVARIANCE],
    "noise_sd": FIG2_NOISE_SD,
    "maps": ["euclidean", "quadratic"],
    "radius_grid": [0.25, 0.5, 1.0, 2.0],
    "epsilon": 0.05,
    "replicates": 50,
    "complexity_draws": 400,
}


def _exp_path_replicate(args):
    seed, p = args
    law = GaussianLinearLaw(p["covariance"], p["true_param"], p["noise_sd"])
    problem = sample_problem(law, p["n"], seed)
    cov = np.asarray(p["covariance"], dtype=float)
    gram = problem.design.T @ problem.design / problem.n
    results = {}
    for name in p["maps"]:
        if name == "euclidean":
            mirror_map = EuclideanMap()
            step_size = 1.0 / (2.0 * float(np.linalg.eigvalsh(gram).max()))
        else:
            mirror_map = QuadraticMap(cov, 0.5)
            eigvals, eigvecs = np.linalg.eigh(cov)
            inv_root = eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T
            smooth = 2.0 * float(
                np.linalg.eigvalsh(inv_root @ gram @ inv_root).max()
            )
            step_size = 1.0 / smooth  # strong convexity constant is 2*scale = 1
        for radius in p["radius_grid"]:
            if name == "euclidean":
                erm = constrained_erm_ball(problem, math.sqrt(2.0 * radius))
                pop_min = population_ball_minimizer(law, math.sqrt(2.0 * radius))
            else:
                erm = constrained_erm_quadratic(problem, cov / 2.0, radius)
                pop_min = population_ellipsoid_minimizer(law, cov / 2.0, radius)
            traj, report = run_discrete(
                mirror_map,
                problem,
                np.zeros(law.m),
                step_size,
                epsilon=p["epsilon"],
                reference=erm,
            )
            stopped = traj.final_alpha()
            md_residual = offset_condition_residual(
                problem, stopped, erm, 1.0
            ).residual
            erm_residual = offset_condition_residual(
                problem, erm, pop_min, 1.0
            ).residual
            pop_floor = population_risk(law, pop_min)
            results[(name, radius)] = {
                "md_residual": md_residual,
                "erm_residual": erm_residual,
                "t_star": report.t_star,
                "stopped": report.stopped_by == STOP_THRESHOLD,
                "excess_md": population_risk(law, stopped) - pop_floor,
                "excess_erm": population_risk(law, erm) - pop_floor,
            }
    return results


def run_exp_path_vs_erm(cfg):
    p = _resolve(cfg, EXP_PATH_DEFAULTS)
    seeds = cfg.params.get("seeds") or derive_seeds(p["base_seed"], p["replicates"])
    out = _map_replicates(_exp_path_replicate, [(s, p) for s in seeds], cfg.jobs)

    law = GaussianLinearLaw(p["covariance"], p["true_param"], p["noise_sd"])
    cov = np.asarray(p["covariance"], dtype=float)
    probe = sample_problem(law, p["n"], seeds[0])
    eigvals, eigvecs = np.linalg.eigh(cov)
    inv_root_half = eigvecs @ np.diag(1.0 / np.sqrt(eigvals / 2.0)) @ eigvecs.T

    rows = []
    checks_detail = []
    for name in p["maps"]:
        for radius in p["radius_grid"]:
            cells = [o[(name, radius)] for o in out]
            excess_md = np.array([c["excess_md"] for c in cells])
            excess_erm = np.array([c["excess_erm"] for c in cells])
            diff = excess_md - excess_erm
            se = float(np.std(diff, ddof=1) / math.sqrt(len(diff)))
            if name == "euclidean":
                ball = L2Ball(
                    math.sqrt(2.0 * radius),
                    center=population_ball_minimizer(law, math.sqrt(2.0 * radius)),
                )
                complexity = offset_complexity_mc(
                    probe.design, ball, 1.0, p["complexity_draws"],
                    derive_seeds(p["base_seed"] + 1, 1)[0],
                )
            else:
                pop_min = population_ellipsoid_minimizer(law, cov / 2.0, radius)
                root_half = np.linalg.inv(inv_root_half)
                ball = L2Ball(math.sqrt(radius), center=root_half @ pop_min)
                complexity = offset_complexity_mc(
                    probe.design @ inv_root_half, ball, 1.0,
                    p["complexity_draws"], derive_seeds(p["base_seed"] + 1, 1)[0],
                )
            rows.append(
                (
                    name, radius, float(excess_md.mean()), float(excess_erm.mean()),
                    float(diff.mean()), se,
                    max(c["md_residual"] for c in cells),
                    max(c["erm_residual"] for c in cells),
                    2.0 * radius / p["epsilon"],
                    max(c["t_star"] for c in cells),
                    complexity.mean, complexity.std_error,
                )
            )
            checks_detail.append(
                {
                    "map": name,
                    "radius": radius,
                    "md_residual_ok": all(
                        c["md_residual"] <= p["epsilon"] + 1e-12 for c in cells
                    ),
                    "erm_residual_ok": all(
                        c["erm_residual"] <= 1e-8 for c in cells
                    ),
                    "stopped_ok": all(c["stopped"] for c in cells),
                    "excess_close": abs(float(diff.mean()))
                    <= p["epsilon"] + 3.0 * se,
                }
            )

    os.makedirs(cfg.output_dir, exist_ok=True)
    write_csv(
        os.path.join(cfg.output_dir, "results.csv"),
        ["map", "radius", "mean_excess_md", "mean_excess_erm", "mean_diff",
         "se_diff", "max_md_residual", "max_erm_residual",
         "continuous_budget", "max_t_star", "complexity_mean", "complexity_se"],
        rows,
    )
    _write_manifest(cfg.output_dir, "exp-path-vs-erm", p, seeds)

    checks = [
        _check(
            "descent residual (c=1) at most epsilon for every map and radius",
            all(d["md_residual_ok"] for d in checks_detail),
        ),
        _check(
            "ball-ERM residual (c=1) at most 1e-8 for every map and radius",
            all(d["erm_residual_ok"] for d in checks_detail),
        ),
        _check(
            "mean excess risks within epsilon plus 3 standard errors",
            all(d["excess_close"] for d in checks_detail),
        ),
        _check(
            "threshold reached on every run",
            all(d["stopped_ok"] for d in checks_detail),
        ),
    ]
    return {"experiment": "exp-path-vs-erm", "checks": checks}


EXPERIMENTS = {
    "fig-implicit": run_fig_implicit,
    "fig-bernstein": run_fig_bernstein,
    "fig-offset-analysis": run_fig_offset_analysis,
    "exp-l1-rate": run_exp_l1_rate,
    "exp-kernel": run_exp_kernel,
    "exp-path-vs-erm": run_exp_path_vs_erm,
}


def run_experiment(cfg):
    if cfg.experiment not in EXPERIMENTS:
        raise ValueError(
            f"unknown experiment {cfg.experiment!r}; "
            f"choose from {sorted(EXPERIMENTS)}"
        )
    verdict = EXPERIMENTS[cfg.experiment](cfg)
    verdict["passed"] = all(c["passed"] for c in verdict["checks"])
    return verdict
