"""Zero-effect diagnostic, parametric bootstrap, LRT, fit metrics, simulations.

The diagnostic T is a quadratic form in the difference between the
zero-free-fit parameters and the final zero-adjusted parameters, scaled by
the sum of the two covariance matrices. Its null distribution is calibrated
by parametric bootstrap: replicates are regenerated from the fitted model
with the observed zero pattern preserved row-for-row, then refit end to end.

Replicates are independent work units; each owns a private generator spawned
from the master seed and results are merged by replicate index, so output is
independent of execution order. `ZADR_THREADS` caps worker parallelism.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .compositions import (
    CompositionDataset,
    CovariateMatrix,
    load_dataset,
    zero_pattern,
)
from .errors import (
    KindMismatch,
    NegativeStat,
    ShapeMismatch,
    TooFewSuccessfulReplicates,
    ZadrError,
)
from .model import (
    FitOptions,
    ModelKind,
    ZadrModel,
    alpha_matrix,
    fit,
    phi_rows,
)

_MIN_REPLICATES = 19


@dataclass(frozen=True)
class DiagnosticResult:
    T: float
    delta: np.ndarray
    sigma2: np.ndarray
    pvalue: float | None
    B_reps: int
    seed: int | None
    failures: int = 0


@dataclass(frozen=True)
class BootstrapResult:
    replicate_stats: np.ndarray
    bias: np.ndarray | None
    pvalue: float | None
    B: int
    master_seed: int
    failures: int


@dataclass(frozen=True)
class FitMetrics:
    kl: float
    l2: float


@dataclass(frozen=True)
class SimulationReport:
    sizes: list[int]
    parameter_names: list[str]
    mse: dict[int, np.ndarray]
    successes: dict[int, int]
    reps: int
    seed: int

    def rows(self):
        for n in self.sizes:
            for name, value in zip(self.parameter_names, self.mse[n]):
                yield n, name, value, self.successes[n]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "parameter", "MSE", "successes"])
            for n, name, value, succ in self.rows():
                writer.writerow([n, name, repr(float(value)), succ])


def diagnostic_T(initial: ZadrModel, final: ZadrModel) -> DiagnosticResult:
    """Quadratic-form diagnostic comparing the two coefficient sets."""
    if initial.kind is not final.kind or initial.link != final.link:
        raise KindMismatch("initial and final models must share kind and link")
    if initial.covariance is None or final.covariance is None:
        raise ValueError("both models need covariance matrices; fit with compute_covariance")
    delta = initial.parameter_vector() - final.parameter_vector()
    sigma2 = initial.covariance + final.covariance
    cond = np.linalg.cond(sigma2)
    if not np.isfinite(cond) or cond > 1e12:
        warnings.warn(
            f"combined covariance condition number {cond:.3e}; using pseudo-inverse",
            RuntimeWarning,
        )
        T = float(delta @ np.linalg.pinv(sigma2) @ delta)
    else:
        T = float(delta @ np.linalg.solve(sigma2, delta))
    return DiagnosticResult(T=T, delta=delta, sigma2=sigma2, pvalue=None, B_reps=0, seed=None)


def simulate_response(
    model: ZadrModel,
    X: CovariateMatrix,
    U: np.ndarray,
    rng: np.random.Generator,
) -> CompositionDataset:
    """Draw one response matrix from the model, preserving the pattern U.

    Rows marked zero-free come from the full Dirichlet at their covariates;
    rows with zeros come from the renormalized sub-Dirichlet on their
    positive set, which is the Dirichlet marginality-consistent mechanism.
    """
    A = alpha_matrix(X.design, model.B, model.link.ref_index)
    if model.kind is ModelKind.SIMPLE:
        phis = np.full(X.n, float(model.precision))
    else:
        phis = phi_rows(X.design, model.precision)
    alpha = phis[:, None] * A
    g = rng.standard_gamma(alpha)
    g = np.maximum(g, np.finfo(float).tiny)
    g = np.where(U.astype(bool), g, 0.0)
    values = g / g.sum(axis=1, keepdims=True)
    return load_dataset(values, names=model.component_names, tolerance=1e-6)


def _replicate_seeds(master_seed: int, count: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(master_seed).spawn(count)


def _worker_count() -> int:
    env = os.environ.get("ZADR_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_indexed(func, args_list):
    """Order-preserving map, optionally across processes."""
    workers = _worker_count()
    if workers <= 1 or len(args_list) <= 1:
        return [func(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, args_list))


def _bootstrap_one(args):
    model, X, U, seed_seq, fit_opts, want_params = args
    rng = np.random.default_rng(seed_seq)
    try:
        ds_rep = simulate_response(model, X, U, rng)
        initial, final = fit(ds_rep, X, model.link, fit_opts)
        if not (initial.converged and final.converged):
            return None
        if want_params:
            return final.parameter_vector()
        return diagnostic_T(initial, final).T
    except ZadrError:
        return None
    except np.linalg.LinAlgError:
        return None


def _run_bootstrap(final, ds, X, B, seed, fit_opts, want_params):
    if B < _MIN_REPLICATES:
        raise ValueError(f"B must be >= {_MIN_REPLICATES}")
    if fit_opts is None:
        fit_opts = FitOptions(zero_mode=final.zero_mode, random_seed=final.seed_provenance,
                              compute_covariance=not want_params)
    U = zero_pattern(ds).u
    seeds = _replicate_seeds(seed, B)
    args = [(final, X, U, s, fit_opts, want_params) for s in seeds]
    results = _map_indexed(_bootstrap_one, args)
    successes = [r for r in results if r is not None]
    failures = B - len(successes)
    if len(successes) < _MIN_REPLICATES:
        raise TooFewSuccessfulReplicates(
            f"only {len(successes)} converged replicates out of {B}"
        )
    return successes, failures, fit_opts


def bootstrap_pvalue(
    final: ZadrModel,
    ds: CompositionDataset,
    X: CovariateMatrix,
    B: int,
    seed: int,
    t_observed: float | None = None,
    fit_opts: FitOptions | None = None,
) -> BootstrapResult:
    """Parametric-bootstrap p-value for the zero-effect diagnostic.

    Non-converged replicates are dropped from both the exceedance count and
    the effective replicate total. If t_observed is not given it is
    recomputed by refitting the observed data.
    """
    if t_observed is None:
        refit_opts = fit_opts or FitOptions(zero_mode=final.zero_mode,
                                            random_seed=final.seed_provenance)
        initial_obs, final_obs = fit(ds, X, final.link, refit_opts)
        t_observed = diagnostic_T(initial_obs, final_obs).T
    stats, failures, _ = _run_bootstrap(final, ds, X, B, seed, fit_opts, want_params=False)
    stats = np.asarray(stats, dtype=float)
    pvalue = pvalue_from_replicates(stats, t_observed)
    return BootstrapResult(
        replicate_stats=stats,
        bias=None,
        pvalue=pvalue,
        B=len(stats),
        master_seed=seed,
        failures=failures,
    )


def pvalue_from_replicates(stats: np.ndarray, t_observed: float) -> float:
    """The +1/(B+1) exceedance formula."""
    stats = np.asarray(stats, dtype=float)
    return (float(np.sum(stats >= t_observed)) + 1.0) / (stats.size + 1.0)


def bootstrap_bias(
    final: ZadrModel,
    ds: CompositionDataset,
    X: CovariateMatrix,
    B: int,
    seed: int,
    fit_opts: FitOptions | None = None,
) -> BootstrapResult:
    """Bootstrap bias estimates: mean(replicate estimates) - final estimates."""
    params, failures, _ = _run_bootstrap(final, ds, X, B, seed, fit_opts, want_params=True)
    params = np.asarray(params, dtype=float)
    bias = params.mean(axis=0) - final.parameter_vector()
    return BootstrapResult(
        replicate_stats=params,
        bias=bias,
        pvalue=None,
        B=params.shape[0],
        master_seed=seed,
        failures=failures,
    )


def chi2_sf(stat: float, df: int) -> float:
    """Upper-tail chi-square probability via the regularized incomplete gamma."""
    if df < 1:
        return 1.0
    return float(special.gammaincc(df / 2.0, stat / 2.0))


def lrt(simple: ZadrModel, mixed: ZadrModel) -> tuple[float, int, float]:
    """Likelihood-ratio test of constant against covariate-linked precision."""
    if simple.kind is not ModelKind.SIMPLE or mixed.kind is not ModelKind.MIXED:
        raise KindMismatch("lrt expects (simple, mixed) models in that order")
    if simple.link.ref_index != mixed.link.ref_index:
        raise KindMismatch("models must share the reference component")
    stat = 2.0 * (mixed.loglik - simple.loglik)
    if stat < -1e-6:
        raise NegativeStat(f"LRT statistic {stat} is negative; fits are not nested or not converged")
    stat = max(stat, 0.0)
    df = len(mixed.covariate_names) - 1
    return stat, df, chi2_sf(stat, df)


def fit_metrics(observed: CompositionDataset, fitted: CompositionDataset) -> FitMetrics:
    """Aggregate KL divergence and squared L2 distance, with 0*log(0) = 0."""
    Y = observed.values
    F = fitted.values
    if Y.shape != F.shape:
        raise ShapeMismatch(f"observed {Y.shape} vs fitted {F.shape}")
    mask = Y > 0
    ratio = np.divide(Y, F, out=np.ones_like(Y), where=mask)
    kl = float(np.sum(np.where(mask, Y * np.log(ratio), 0.0)))
    l2 = float(np.sum((Y - F) ** 2))
    return FitMetrics(kl=kl, l2=l2)


def _simulation_one(args):
    model, base_design, cov_names, n, zero_fraction, seed_seq, fit_opts = args
    rng = np.random.default_rng(seed_seq)
    design = base_design[rng.integers(0, base_design.shape[0], size=n)]
    X = CovariateMatrix(design=design, covariate_names=cov_names)
    D = model.D
    U = np.ones((n, D), dtype=np.int8)
    n_zero = int(round(zero_fraction * n))
    if n_zero > 0 and D >= 3:
        zero_rows = rng.choice(n, size=n_zero, replace=False)
        U[zero_rows, rng.integers(0, D, size=n_zero)] = 0
    try:
        ds = simulate_response(model, X, U, rng)
        _, final = fit(ds, X, model.link, fit_opts)
        if not final.converged:
            return None
        err = final.parameter_vector() - model.parameter_vector()
        return err**2
    except ZadrError:
        return None
    except np.linalg.LinAlgError:
        return None


def run_simulation_study(
    true_model: ZadrModel,
    design: CovariateMatrix,
    sizes: list[int],
    reps: int,
    zero_fraction: float,
    seed: int,
) -> SimulationReport:
    """Per-parameter MSE of the fitted coefficients across sample sizes.

    Covariates for each replicate are resampled with replacement from the
    rows of `design`; a `zero_fraction` share of rows gets one randomly
    placed zero component, drawn by zeroing a full-Dirichlet draw and
    renormalizing (the marginality-consistent mechanism).
    """
    if reps < 1 or not sizes:
        raise ValueError("reps must be >= 1 and sizes nonempty")
    if not 0.0 <= zero_fraction < 1.0:
        raise ValueError("zero_fraction must be in [0, 1)")
    fit_opts = FitOptions(zero_mode=true_model.zero_mode, random_seed=true_model.seed_provenance,
                          compute_covariance=False)
    seeds = _replicate_seeds(seed, len(sizes) * reps)
    mse: dict[int, np.ndarray] = {}
    successes: dict[int, int] = {}
    for k, n in enumerate(sizes):
        args = [
            (true_model, design.design, design.covariate_names, n, zero_fraction,
             seeds[k * reps + r], fit_opts)
            for r in range(reps)
        ]
        results = [r for r in _map_indexed(_simulation_one, args) if r is not None]
        successes[n] = len(results)
        if results:
            mse[n] = np.mean(np.asarray(results), axis=0)
        else:
            mse[n] = np.full(true_model.parameter_vector().size, np.nan)
    return SimulationReport(
        sizes=list(sizes),
        parameter_names=true_model.parameter_names(),
        mse=mse,
        successes=successes,
        reps=reps,
        seed=seed,
    )


def diagnostic_to_dict(result: DiagnosticResult) -> dict:
    return {
        "T": result.T,
        "delta": result.delta.tolist(),
        "sigma2": result.sigma2.ravel().tolist(),
        "pvalue": result.pvalue,
        "B_reps": result.B_reps,
        "seed": result.seed,
        "failures": result.failures,
    }


def save_diagnostic(result: DiagnosticResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(diagnostic_to_dict(result), fh, indent=2)
        fh.write("\n")
