"""Monte Carlo and exhaustive-enumeration verification harness.

Checks the conditional limit theorems for the permutation and pooled
bootstrap empirical processes against the closed-form covariance
kernels, measures delta-method linearization residuals along sample
size ladders, evaluates difference-quotient convergence for the
functionals, and reproduces the inverse-map counterexample where
uniform differentiability fails.

Everything is deterministic given (config, seed): datasets and draws
use counter-based child seeds, and reductions are order-independent, so
reports are byte-identical regardless of thread count.
"""

from __future__ import annotations

import concurrent.futures
import enum
import importlib.resources
import math
from dataclasses import dataclass
from fractions import Fraction

import jsonschema
import numpy as np

from .empirical import (
    LambdaVector,
    MultiSampleData,
    PooledData,
    at_risk_process,
    ecdf,
    pooled_ecdf,
    uncensored_subdist,
)
from .errors import ContractError, DataError, SingularityError
from .functionals import (
    HazardBundle,
    kaplan_meier,
    km_derivative,
    na_derivative,
    nelson_aalen,
    product_integral,
    prodint_derivative,
    rmst,
    wilcoxon_curve,
    wilcoxon_derivative,
)
from .jsonio import canonical_json
from .limits import (
    KernelKind,
    boot_coeff,
    exponential_survival_population,
    perm_coeff,
)
from .resampling import (
    ResampleKind,
    SeedSpec,
    all_permutations,
    bootstrap_matrix,
    permutation_matrix,
    resampled_group_fns,
)
from .stepfn import StepFn, affine_combine

__all__ = [
    "Law",
    "ToleranceSpec",
    "ExperimentConfig",
    "VerifyReport",
    "conditional_cov_experiment",
    "LinearizationConfig",
    "linearization_residual_experiment",
    "hadamard_ratio_check",
    "wilcoxon_ratio_sequences",
    "prodint_ratio_sequences",
    "PiecewiseLinear",
    "inverse_counterexample",
    "increment_condition_probe",
    "simulate_grid_gaussian",
    "load_config_schema",
]

_MAX_DATASET_RETRIES = 100


# -- sampling laws -----------------------------------------------------

@dataclass(frozen=True)
class Law:
    """A univariate sampling law used to simulate group data."""

    kind: str
    params: tuple

    @classmethod
    def exponential(cls, rate):
        if rate <= 0:
            raise ContractError("rate must be positive")
        return cls("exponential", (float(rate),))

    @classmethod
    def uniform(cls, lo, hi):
        if not lo < hi:
            raise ContractError("need lo < hi")
        return cls("uniform", (float(lo), float(hi)))

    @classmethod
    def point_masses(cls, points):
        xs = tuple(float(x) for x, _p in points)
        ps = tuple(float(p) for _x, p in points)
        if abs(sum(ps) - 1) > 1e-12 or any(p < 0 for p in ps):
            raise ContractError("point masses must be a probability vector")
        return cls("point-masses", (xs, ps))

    @classmethod
    def none(cls):
        """No censoring: censoring times at infinity."""
        return cls("none", ())

    @classmethod
    def from_dict(cls, d):
        kind = d["kind"]
        if kind == "exponential":
            return cls.exponential(d["rate"])
        if kind == "uniform":
            return cls.uniform(d["lo"], d["hi"])
        if kind == "point-masses":
            return cls.point_masses(d["points"])
        if kind == "none":
            return cls.none()
        raise DataError(f"unknown law kind {kind!r}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.params[0], size=n)
        if self.kind == "uniform":
            lo, hi = self.params
            return rng.uniform(lo, hi, size=n)
        if self.kind == "point-masses":
            xs, ps = self.params
            return rng.choice(np.asarray(xs), size=n, p=np.asarray(ps))
        if self.kind == "none":
            return np.full(n, np.inf)
        raise ContractError(f"unknown law kind {self.kind!r}")

    def cdf(self, t):
        if self.kind == "exponential":
            return 0.0 if t < 0 else 1.0 - math.exp(-self.params[0] * t)
        if self.kind == "uniform":
            lo, hi = self.params
            return min(1.0, max(0.0, (t - lo) / (hi - lo)))
        if self.kind == "point-masses":
            xs, ps = self.params
            return sum(p for x, p in zip(xs, ps) if x <= t)
        if self.kind == "none":
            return 0.0
        raise ContractError(f"unknown law kind {self.kind!r}")


# -- configuration -----------------------------------------------------

@dataclass(frozen=True)
class ToleranceSpec:
    """Cell passes when |dev| <= max(abs_tol, se_multiplier * SE)."""

    abs_tol: float = 0.02
    se_multiplier: float = 4.0

    def __post_init__(self):
        if self.abs_tol <= 0:
            raise ContractError("abs_tol must be positive")
        if self.se_multiplier < 2:
            raise ContractError("se_multiplier must be at least 2")


class Scenario(enum.Enum):
    PLAIN_INDICATOR = "plain-indicator"
    SURVIVAL_NA = "survival-na"
    SURVIVAL_KM = "survival-km"


def load_config_schema() -> dict:
    import json

    text = (
        importlib.resources.files("permboot")
        .joinpath("schemas/verify_config.schema.json")
        .read_text()
    )
    return json.loads(text)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    group_laws: tuple
    sizes: tuple
    draws: int
    outer_reps: int
    resample_kind: ResampleKind
    seed: SeedSpec
    censoring_laws: tuple | None = None
    grid: object = "pooled-deciles"
    tolerance: ToleranceSpec = ToleranceSpec()
    tau: float | None = None
    tau_quantile: float = 0.8
    target: str = "plugin"
    exhaustive: bool = False
    raw: dict | None = None

    def __post_init__(self):
        if len(self.sizes) != len(self.group_laws):
            raise ContractError("need one law per group")
        if len(self.sizes) < 2 or any(n < 2 for n in self.sizes):
            raise ContractError("need m >= 2 groups of size >= 2")
        if not self.exhaustive and self.draws < 100:
            raise ContractError("draws must be >= 100 unless exhaustive")
        if self.exhaustive and sum(self.sizes) > 8:
            raise ContractError("exhaustive mode limited to N <= 8")
        if self.scenario is not Scenario.PLAIN_INDICATOR and self.censoring_laws is None:
            object.__setattr__(
                self, "censoring_laws", tuple(Law.none() for _ in self.sizes)
            )
        if self.target not in ("plugin", "analytic"):
            raise ContractError("target must be 'plugin' or 'analytic'")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(d, load_config_schema())
        except jsonschema.ValidationError as exc:
            raise DataError(f"invalid config: {exc.message}") from exc
        seed = SeedSpec(d["seed"]["master_seed"], d["seed"].get("stream_id", 0))
        tol = ToleranceSpec(**d.get("tolerance", {}))
        cens = d.get("censoring_laws")
        grid = d.get("grid", "pooled-deciles")
        if isinstance(grid, list):
            grid = tuple(sorted(float(g) for g in grid))
        elif isinstance(grid, dict):
            grid = {"pooled_quantiles": tuple(grid["pooled_quantiles"])}
        return cls(
            scenario=Scenario(d["scenario"]),
            group_laws=tuple(Law.from_dict(law) for law in d["group_laws"]),
            sizes=tuple(d["sizes"]),
            draws=d["draws"],
            outer_reps=d["outer_reps"],
            resample_kind=ResampleKind(d["resample_kind"]),
            seed=seed,
            censoring_laws=tuple(Law.from_dict(law) for law in cens) if cens else None,
            grid=grid,
            tolerance=tol,
            tau=d.get("tau"),
            tau_quantile=d.get("tau_quantile", 0.8),
            target=d.get("target", "plugin"),
            exhaustive=d.get("exhaustive", False),
            raw=dict(d),
        )

    def kernel_kind(self) -> KernelKind:
        perm = self.resample_kind is ResampleKind.PERMUTATION
        if self.scenario is Scenario.PLAIN_INDICATOR:
            return KernelKind.PERM_INDICATOR if perm else KernelKind.BOOT_INDICATOR
        if self.scenario is Scenario.SURVIVAL_NA:
            return KernelKind.PERM_SURVIVAL_NA if perm else KernelKind.BOOT_SURVIVAL_NA
        return KernelKind.PERM_KM if perm else KernelKind.BOOT_KM


# -- report ------------------------------------------------------------

@dataclass
class VerifyReport:
    config: dict
    kernel_kind: str
    kernel_mean: np.ndarray
    mc_mean: np.ndarray
    dev: np.ndarray
    se: np.ndarray
    cell_pass: np.ndarray
    aggregates: dict
    passed: bool
    runtime_seconds: float | None = None

    def to_json(self, include_runtime: bool = False) -> str:
        doc = {
            "config": self.config,
            "kernel_kind": self.kernel_kind,
            "kernel_mean": self.kernel_mean,
            "mc_mean": self.mc_mean,
            "dev": self.dev,
            "se": self.se,
            "cell_pass": self.cell_pass,
            "aggregates": self.aggregates,
            "passed": bool(self.passed),
        }
        if include_runtime and self.runtime_seconds is not None:
            doc["runtime_seconds"] = self.runtime_seconds
        return canonical_json(doc) + "\n"


# -- conditional covariance experiment ---------------------------------

def _group_count_matrix(draws: np.ndarray, sl: slice, N: int) -> np.ndarray:
    """Per-draw multiplicity of each pooled index within one group's
    assignment positions; shape (B, N)."""
    B = draws.shape[0]
    idx = draws[:, sl]
    flat = idx + (np.arange(B, dtype=np.intp)[:, None] * N)
    counts = np.bincount(flat.ravel(), minlength=B * N)
    return counts.reshape(B, N).astype(float)


def _draw_matrix(config: ExperimentConfig, N: int, seed: SeedSpec) -> np.ndarray:
    if config.exhaustive:
        if config.resample_kind is not ResampleKind.PERMUTATION:
            raise ContractError("exhaustive mode applies to permutations only")
        return all_permutations(N)
    rng = seed.rng()
    if config.resample_kind is ResampleKind.PERMUTATION:
        return permutation_matrix(N, config.draws, rng)
    return bootstrap_matrix(N, config.draws, rng)


def _resolve_plain_grid(config: ExperimentConfig, pooled: np.ndarray) -> np.ndarray:
    if isinstance(config.grid, tuple):
        return np.asarray(config.grid, dtype=float)
    if config.grid == "pooled-deciles":
        probs = np.linspace(0.1, 0.9, 9)
    else:
        probs = np.asarray(config.grid["pooled_quantiles"], dtype=float)
    return np.quantile(pooled, probs)


def _coeff_matrix(kind: KernelKind, lambdas: LambdaVector) -> np.ndarray:
    m = len(lambdas)
    perm = kind in (
        KernelKind.PERM_INDICATOR,
        KernelKind.PERM_SURVIVAL_NA,
        KernelKind.PERM_KM,
    )
    fn = perm_coeff if perm else boot_coeff
    return np.array([[fn(lambdas, i, j) for j in range(m)] for i in range(m)])


def _expand_cell_kernel(coeffs: np.ndarray, cell: np.ndarray) -> np.ndarray:
    """Kronecker-expand a per-group coefficient matrix with a per-grid
    cell matrix into the (m*G, m*G) kernel matrix."""
    return np.kron(coeffs, cell)


def _plain_dataset(config: ExperimentConfig, r: int):
    seed_r = config.seed.child(r)
    rng = seed_r.child(0).rng()
    pooled = np.concatenate(
        [law.sample(rng, n) for law, n in zip(config.group_laws, config.sizes)]
    )
    N = pooled.size
    sizes = config.sizes
    grid = _resolve_plain_grid(config, pooled)
    ind = (pooled[:, None] <= grid[None, :]).astype(float)
    pooled_vals = ind.mean(axis=0)

    draws = _draw_matrix(config, N, seed_r.child(1))
    B = draws.shape[0]
    cum = np.concatenate([[0], np.cumsum(sizes)])
    rows = []
    for j in range(len(sizes)):
        counts = _group_count_matrix(draws, slice(cum[j], cum[j + 1]), N)
        rows.append((counts @ ind) / sizes[j] - pooled_vals[None, :])
    X = math.sqrt(N) * np.concatenate(rows, axis=1)
    cond_mean = X.mean(axis=0)
    Xc = X - cond_mean[None, :]
    cov = (Xc.T @ Xc) / B

    lambdas = LambdaVector.from_sizes(sizes)
    coeffs = _coeff_matrix(config.kernel_kind(), lambdas)
    if config.target == "plugin":
        hvals = pooled_vals
    else:
        mix = [
            (n / N, law) for law, n in zip(config.group_laws, sizes)
        ]
        hvals = np.array([sum(w * law.cdf(t) for w, law in mix) for t in grid])
    hmin = np.minimum(hvals[:, None], hvals[None, :])
    cell = hmin - hvals[:, None] * hvals[None, :]
    kernel = _expand_cell_kernel(coeffs, cell)
    return cov, kernel, cond_mean, 0


def _simulate_survival_groups(config: ExperimentConfig, rng):
    zs, ds = [], []
    for law, cens, n in zip(config.group_laws, config.censoring_laws, config.sizes):
        x = law.sample(rng, n)
        c = cens.sample(rng, n)
        zs.append(np.minimum(x, c))
        ds.append((x <= c).astype(np.intp))
    return np.concatenate(zs), np.concatenate(ds)


def _survival_dataset(config: ExperimentConfig, r: int):
    seed_r = config.seed.child(r)
    sizes = config.sizes
    N = sum(sizes)
    cum = np.concatenate([[0], np.cumsum(sizes)])
    retries = 0
    while True:
        rng = seed_r.child(0, retries).rng()
        z, delta = _simulate_survival_groups(config, rng)
        tau = config.tau if config.tau is not None else float(
            np.quantile(z, config.tau_quantile)
        )
        # realized at-risk condition: every group still at risk at tau
        ok = all(z[cum[j]:cum[j + 1]].max() >= tau for j in range(len(sizes)))
        if ok:
            break
        retries += 1
        if retries > _MAX_DATASET_RETRIES:
            raise DataError("could not simulate a dataset with all groups at risk at tau")

    if isinstance(config.grid, tuple):
        grid = np.asarray(config.grid, dtype=float)
        if grid.max() > tau:
            raise ContractError(f"grid point {grid.max()} beyond tau={tau}")
    else:
        if config.grid == "pooled-deciles":
            probs = np.linspace(0.1, 0.7, 5)
        else:
            probs = np.asarray(config.grid["pooled_quantiles"], dtype=float)
        grid = np.quantile(z, probs)

    gmax = grid.max()
    events = np.unique(z[(delta == 1) & (z <= gmax)])
    K = events.size
    death = ((z[:, None] == events[None, :]) & (delta[:, None] == 1)).astype(float)
    at_risk = (z[:, None] >= events[None, :]).astype(float)
    d0 = death.sum(axis=0)
    r0 = at_risk.sum(axis=0)
    pos = np.searchsorted(events, grid, side="right")

    draws = _draw_matrix(config, N, seed_r.child(1))
    B = draws.shape[0]
    km_mode = config.scenario is Scenario.SURVIVAL_KM

    h0 = d0 / r0
    if km_mode:
        pooled_stat = np.concatenate([[1.0], np.cumprod(1.0 - h0)])[pos]
    else:
        pooled_stat = np.concatenate([[0.0], np.cumsum(h0)])[pos]

    rows = []
    cond_mean_parts = []
    for j in range(len(sizes)):
        counts = _group_count_matrix(draws, slice(cum[j], cum[j + 1]), N)
        dj = counts @ death
        rj = counts @ at_risk
        if np.any((rj == 0) & (dj > 0)):
            raise SingularityError(
                f"empty risk set in resampled group {j + 1} (dataset {r})"
            )
        hj = np.divide(dj, rj, out=np.zeros_like(dj), where=rj > 0)
        if km_mode:
            stat = np.concatenate(
                [np.ones((B, 1)), np.cumprod(1.0 - hj, axis=1)], axis=1
            )[:, pos]
        else:
            stat = np.concatenate(
                [np.zeros((B, 1)), np.cumsum(hj, axis=1)], axis=1
            )[:, pos]
        rows.append(stat - pooled_stat[None, :])
    X = math.sqrt(N) * np.concatenate(rows, axis=1)
    cond_mean = X.mean(axis=0)
    Xc = X - cond_mean[None, :]
    cov = (Xc.T @ Xc) / B

    lambdas = LambdaVector.from_sizes(sizes)
    coeffs = _coeff_matrix(config.kernel_kind(), lambdas)
    if config.target == "plugin":
        dl = h0
        hbar = r0 / N
        c_grid = np.concatenate([[0.0], np.cumsum((1.0 - dl) * dl / hbar)])[pos]
        if km_mode:
            if np.any(dl[: pos.max()] >= 1.0 - 1e-12):
                raise SingularityError("hazard jump of 1 inside the kernel range")
            km_int = np.concatenate(
                [[0.0], np.cumsum(dl / ((1.0 - dl) * hbar))]
            )[pos]
            s_grid = np.concatenate([[1.0], np.cumprod(1.0 - dl)])[pos]
            cell = (
                s_grid[:, None]
                * s_grid[None, :]
                * np.minimum(km_int[:, None], km_int[None, :])
            )
        else:
            cell = np.minimum(c_grid[:, None], c_grid[None, :])
    else:
        pop = _analytic_survival_population(config, lambdas, tau)
        c_vals = np.array(
            [pop.km_integral(t) if km_mode else pop.C(t) for t in grid]
        )
        cmin = np.minimum(c_vals[:, None], c_vals[None, :])
        if km_mode:
            s_vals = np.array([pop.S(t) for t in grid])
            cell = s_vals[:, None] * s_vals[None, :] * cmin
        else:
            cell = cmin
    kernel = _expand_cell_kernel(coeffs, cell)
    return cov, kernel, cond_mean, retries


def _analytic_survival_population(config: ExperimentConfig, lambdas, tau):
    if any(law.kind != "exponential" for law in config.group_laws) or any(
        law.kind not in ("exponential", "none") for law in config.censoring_laws
    ):
        raise ContractError(
            "analytic survival targets are available for exponential "
            "failure/censoring laws only; use target='plugin'"
        )
    fail = [law.params[0] for law in config.group_laws]
    cens = [
        law.params[0] if law.kind == "exponential" else 0.0
        for law in config.censoring_laws
    ]
    return exponential_survival_population(fail, cens, lambdas, tau)


def conditional_cov_experiment(config: ExperimentConfig, threads: int = 1) -> VerifyReport:
    """Estimate the conditional resampling covariance on a grid and
    compare it cellwise against the matching limit kernel."""
    import time

    t0 = time.perf_counter()
    worker = (
        _plain_dataset
        if config.scenario is Scenario.PLAIN_INDICATOR
        else _survival_dataset
    )
    R = config.outer_reps
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: worker(config, r), range(R)))
    else:
        results = [worker(config, r) for r in range(R)]

    covs = np.stack([res[0] for res in results])
    kernels = np.stack([res[1] for res in results])
    cond_means = np.stack([res[2] for res in results])
    retries = sum(res[3] for res in results)

    devs = covs - kernels
    dev_mean = devs.mean(axis=0)
    if R > 1:
        se = devs.std(axis=0, ddof=1) / math.sqrt(R)
    else:
        se = np.zeros_like(dev_mean)
    tol = config.tolerance
    threshold = np.maximum(tol.abs_tol, tol.se_multiplier * se)
    cell_pass = np.abs(dev_mean) <= threshold

    m = len(config.sizes)
    dim = dev_mean.shape[0]
    G = dim // m
    group_of = np.repeat(np.arange(m), G)
    offdiag = group_of[:, None] != group_of[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        se_ratio = np.where(se > 0, np.abs(dev_mean) / np.maximum(se, 1e-300), np.inf)
    aggregates = {
        "n_cells": int(dev_mean.size),
        "frac_pass": float(cell_pass.mean()),
        "max_abs_dev": float(np.abs(dev_mean).max()),
        "max_se_ratio": float(se_ratio.max()) if R > 1 else None,
        "offdiag_max_abs_dev": float(np.abs(dev_mean[offdiag]).max()),
        "offdiag_max_se_ratio": (
            float(se_ratio[offdiag].max()) if R > 1 else None
        ),
        "cond_mean_max_abs": float(np.abs(cond_means).max()),
        "dataset_retries": int(retries),
        "outer_reps": int(R),
        "draws": int(config.draws),
    }
    report = VerifyReport(
        config=config.raw if config.raw is not None else _config_echo(config),
        kernel_kind=config.kernel_kind().value,
        kernel_mean=kernels.mean(axis=0),
        mc_mean=covs.mean(axis=0),
        dev=dev_mean,
        se=se,
        cell_pass=cell_pass,
        aggregates=aggregates,
        passed=bool(cell_pass.all()),
        runtime_seconds=time.perf_counter() - t0,
    )
    return report


def _config_echo(config: ExperimentConfig) -> dict:
    return {
        "scenario": config.scenario.value,
        "sizes": list(config.sizes),
        "draws": config.draws,
        "outer_reps": config.outer_reps,
        "resample_kind": config.resample_kind.value,
        "seed": {
            "master_seed": config.seed.master_seed,
            "stream_id": config.seed.stream_id,
        },
        "target": config.target,
        "exhaustive": config.exhaustive,
    }


# -- linearization residuals -------------------------------------------

@dataclass(frozen=True)
class LinearizationConfig:
    scenario: str  # "wilcoxon" | "survival-na" | "survival-km" | "rmst"
    group_laws: tuple
    ladder: tuple  # sequence of per-group size tuples
    draws: int
    resample_kind: ResampleKind
    seed: SeedSpec
    censoring_laws: tuple | None = None
    grid_points: int = 9
    tau_quantile: float = 0.8

    def __post_init__(self):
        if self.scenario not in ("wilcoxon", "survival-na", "survival-km", "rmst"):
            raise ContractError(f"unknown linearization scenario {self.scenario!r}")
        if self.scenario != "wilcoxon" and self.censoring_laws is None:
            object.__setattr__(
                self, "censoring_laws", tuple(Law.none() for _ in self.group_laws)
            )


def _sqrtn_diff(f: StepFn, g: StepFn, root: float) -> StepFn:
    return affine_combine([root, -root], [f, g])


def _wilcoxon_residuals(config: LinearizationConfig, sizes, seed: SeedSpec):
    if len(sizes) != 2:
        raise ContractError("the Wilcoxon scenario needs exactly two groups")
    rng = seed.child(0).rng()
    groups = [
        tuple(law.sample(rng, n)) for law, n in zip(config.group_laws, sizes)
    ]
    data = MultiSampleData(tuple(groups)).pooled()
    N = data.N
    root = math.sqrt(N)
    hn = pooled_ecdf(data)
    base = wilcoxon_curve(hn, hn)
    grid = np.quantile(np.asarray(data.pooled), np.linspace(0.1, 0.9, config.grid_points))
    draws = _linearization_draws(config, data, seed)
    out = []
    for draw in draws:
        fpi, gpi = resampled_group_fns(data, draw)
        alpha = _sqrtn_diff(fpi, hn, root)
        beta = _sqrtn_diff(gpi, hn, root)
        lhs = wilcoxon_curve(fpi, gpi)
        deriv = wilcoxon_derivative(hn, hn, alpha, beta)
        res = max(
            abs(root * (lhs(t) - base(t)) - deriv(t)) for t in grid
        )
        out.append(res)
    return out


def _linearization_draws(config: LinearizationConfig, data: PooledData, seed: SeedSpec):
    from .resampling import ResampleDraw

    rng = seed.child(1).rng()
    if config.resample_kind is ResampleKind.PERMUTATION:
        mat = permutation_matrix(data.N, config.draws, rng)
        kind = ResampleKind.PERMUTATION
    else:
        mat = bootstrap_matrix(data.N, config.draws, rng)
        kind = ResampleKind.POOLED_BOOTSTRAP
    return [ResampleDraw(kind, tuple(row)) for row in mat]


def _survival_residuals(config: LinearizationConfig, sizes, seed: SeedSpec):
    retries = 0
    while True:
        rng = seed.child(0, retries).rng()
        groups = []
        for law, cens, n in zip(config.group_laws, config.censoring_laws, sizes):
            x = law.sample(rng, n)
            c = cens.sample(rng, n)
            z = np.minimum(x, c)
            d = (x <= c).astype(int)
            groups.append(tuple(zip(z.tolist(), d.tolist())))
        data = MultiSampleData(tuple(groups)).pooled()
        zs = np.array([z for z, _d in data.pooled])
        tau = float(np.quantile(zs, config.tau_quantile))
        cum = data.cumulative
        if all(
            max(z for z, _d in data.pooled[cum[j]:cum[j + 1]]) >= tau
            for j in range(data.m)
        ):
            break
        retries += 1
        if retries > _MAX_DATASET_RETRIES:
            raise DataError("could not simulate a dataset at risk at tau")

    N = data.N
    root = math.sqrt(N)
    pooled_obs = list(data.pooled)
    pooled_bundle = HazardBundle(
        at_risk_process(pooled_obs), uncensored_subdist(pooled_obs), tau
    )
    grid = np.quantile(zs, np.linspace(0.1, config.tau_quantile - 0.1, config.grid_points))
    lam_n = nelson_aalen(pooled_bundle)
    km_n = kaplan_meier(pooled_bundle)
    draws = _linearization_draws(config, data, seed)
    out = []
    for draw in draws:
        pairs = resampled_group_fns(data, draw)
        worst = 0.0
        for at_risk_pi, uc_pi in pairs:
            bundle_pi = HazardBundle(at_risk_pi, uc_pi, tau)
            alpha = _sqrtn_diff(at_risk_pi, pooled_bundle.at_risk, root)
            beta = _sqrtn_diff(uc_pi, pooled_bundle.uncensored, root)
            if config.scenario == "survival-na":
                lhs = nelson_aalen(bundle_pi)
                deriv = na_derivative(pooled_bundle, alpha, beta)
                res = max(
                    abs(root * (lhs(t) - lam_n(t)) - deriv(t)) for t in grid
                )
            else:
                lhs = kaplan_meier(bundle_pi)
                deriv = km_derivative(pooled_bundle, alpha, beta)
                if config.scenario == "survival-km":
                    res = max(
                        abs(root * (lhs(t) - km_n(t)) - deriv(t)) for t in grid
                    )
                else:  # rmst
                    res = abs(
                        root * (rmst(lhs, tau) - rmst(km_n, tau))
                        - rmst(deriv, tau)
                    )
            worst = max(worst, res)
        out.append(worst)
    return out


def linearization_residual_experiment(config: LinearizationConfig) -> dict:
    """Residual quantiles of the delta-method linearization along a
    sample-size ladder."""
    probs = (0.1, 0.25, 0.5, 0.75, 0.9)
    per_n = []
    for step, sizes in enumerate(config.ladder):
        seed = config.seed.child(step)
        if config.scenario == "wilcoxon":
            residuals = _wilcoxon_residuals(config, tuple(sizes), seed)
        else:
            residuals = _survival_residuals(config, tuple(sizes), seed)
        qs = np.quantile(np.asarray(residuals), probs)
        per_n.append(
            {
                "N": int(sum(sizes)),
                "sizes": [int(n) for n in sizes],
                "quantiles": {str(p): float(q) for p, q in zip(probs, qs)},
                "median": float(qs[2]),
                "draws": len(residuals),
            }
        )
    return {
        "scenario": config.scenario,
        "resample_kind": config.resample_kind.value,
        "seed": {
            "master_seed": config.seed.master_seed,
            "stream_id": config.seed.stream_id,
        },
        "ladder": per_n,
    }


# -- Hadamard difference-quotient checks -------------------------------

def _perturb(theta, t, h):
    if isinstance(theta, tuple):
        return tuple(a + t * b for a, b in zip(theta, h))
    return theta + t * h


_RATIO_FUNCTIONALS = {
    "wilcoxon": lambda th: wilcoxon_curve(*th),
    "product-integral": lambda th: product_integral(th),
}


def hadamard_ratio_check(functional_id, theta_seq, h_seq, t_seq, derivative_ref):
    """Deviations || t_n^-1 (phi(theta_n + t_n h_n) - phi(theta_n)) - ref ||.

    No pass/fail judgement here: convergence (or its failure, for the
    counterexample sequences) is asserted by the caller.
    """
    fn = functional_id if callable(functional_id) else _RATIO_FUNCTIONALS[functional_id]
    devs = []
    for idx, (theta_n, h_n, t_n) in enumerate(zip(theta_seq, h_seq, t_seq)):
        try:
            lhs = fn(_perturb(theta_n, t_n, h_n))
            base = fn(theta_n)
        except (ContractError, SingularityError) as exc:
            raise ContractError(f"sequence element {idx}: {exc}") from exc
        if isinstance(lhs, StepFn):
            diff = affine_combine(
                [1 / t_n, -1 / t_n, -1], [lhs, base, derivative_ref]
            )
            devs.append(diff.sup_norm())
        else:
            devs.append(abs((lhs - base) / t_n - derivative_ref))
    return devs


def _default_t_seq(n_values):
    return [1 / math.sqrt(n) for n in n_values]


def wilcoxon_ratio_sequences(n_values=(4, 16, 64, 256, 1024)):
    """Built-in moving-base sequences for the Wilcoxon ratio check."""
    A = ecdf([0.2, 0.5, 0.9])
    B = ecdf([0.3, 0.6, 0.8])
    dA = StepFn(0, (0.25, 0.7), (0.4, -0.3))
    dB = StepFn(0, (0.45, 0.85), (-0.2, 0.5))
    hA = StepFn(0, (0.35, 0.65), (0.6, -0.4))
    hB = StepFn(0, (0.15, 0.75), (0.3, 0.2))
    eA = StepFn(0, (0.55,), (0.25,))
    eB = StepFn(0, (0.4,), (-0.35,))
    t_seq = _default_t_seq(n_values)
    theta_seq = [(A + t * dA, B + t * dB) for t in t_seq]
    h_seq = [(hA + t * eA, hB + t * eB) for t in t_seq]
    ref = wilcoxon_derivative(A, B, hA, hB)
    return theta_seq, h_seq, t_seq, ref


def prodint_ratio_sequences(n_values=(4, 16, 64, 256, 1024)):
    """Built-in moving-base sequences for the product-integral ratio check."""
    A = StepFn(0, (1.0, 2.0, 3.0), (0.3, -0.2, 0.4), lo=0.0, hi=5.0)
    dA = StepFn(0, (1.5, 2.0), (0.1, -0.05), lo=0.0, hi=5.0)
    h = StepFn(0, (1.0, 2.5), (0.5, -0.3), lo=0.0, hi=5.0)
    eh = StepFn(0, (3.5,), (0.2,), lo=0.0, hi=5.0)
    t_seq = _default_t_seq(n_values)
    theta_seq = [A + t * dA for t in t_seq]
    h_seq = [h + t * eh for t in t_seq]
    ref = prodint_derivative(A, h)
    return theta_seq, h_seq, t_seq, ref


# -- the inverse-map counterexample ------------------------------------

@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function on [xs[0], xs[-1]].

    Arithmetic is generic over the number type, so Fraction-valued knots
    give exact results.
    """

    xs: tuple
    ys: tuple

    def __post_init__(self):
        object.__setattr__(self, "xs", tuple(self.xs))
        object.__setattr__(self, "ys", tuple(self.ys))
        if len(self.xs) != len(self.ys) or len(self.xs) < 2:
            raise ContractError("need matching knot/value lists of length >= 2")
        for a, b in zip(self.xs, self.xs[1:]):
            if not a < b:
                raise ContractError("knots must be strictly increasing")

    def __call__(self, x):
        if not self.xs[0] <= x <= self.xs[-1]:
            raise ContractError(f"{x} outside [{self.xs[0]}, {self.xs[-1]}]")
        for (x0, y0), (x1, y1) in zip(
            zip(self.xs, self.ys), zip(self.xs[1:], self.ys[1:])
        ):
            if x <= x1:
                # knots return their stored value; only strict interiors
                # interpolate (keeps int/Fraction inputs exact)
                if x == x0:
                    return y0
                if x == x1:
                    return y1
                return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        raise AssertionError("unreachable")

    def __add__(self, other):
        if isinstance(other, PiecewiseLinear):
            knots = sorted(set(self.xs) | set(other.xs))
            return PiecewiseLinear(
                tuple(knots), tuple(self(x) + other(x) for x in knots)
            )
        return PiecewiseLinear(self.xs, tuple(y + other for y in self.ys))

    __radd__ = __add__

    def __mul__(self, c):
        return PiecewiseLinear(self.xs, tuple(c * y for y in self.ys))

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (other * -1 if isinstance(other, PiecewiseLinear) else -other)

    def solve_level(self, p):
        """Smallest x with f(x) = p, for nondecreasing f."""
        if p < self.ys[0] or p > max(self.ys):
            raise ContractError(f"level {p} not attained")
        for (x0, y0), (x1, y1) in zip(
            zip(self.xs, self.ys), zip(self.xs[1:], self.ys[1:])
        ):
            if y0 <= p <= y1:
                if y1 == y0:
                    return x0
                return x0 + (x1 - x0) * (p - y0) / (y1 - y0)
        raise ContractError(f"level {p} not attained")


def _exact_inv_sqrt(n: int):
    """1/sqrt(n) as a Fraction for perfect squares, else a float."""
    r = math.isqrt(n)
    if r * r == n:
        return Fraction(1, r)
    return 1.0 / math.sqrt(n)


def counterexample_family(n: int) -> PiecewiseLinear:
    """The kinked approximating sequence around the quantile solution:
    slope 2 on (1 - 1/sqrt(n), 1 + 1/sqrt(n)), shifted outside."""
    s = _exact_inv_sqrt(n)
    if n == 1:
        # the middle segment spans the whole domain
        return PiecewiseLinear((0, 2), (-1, 3))
    return PiecewiseLinear(
        (0, 1 - s, 1 + s, 2), (-s, 1 - 2 * s, 1 + 2 * s, 2 + s)
    )


def counterexample_limit() -> PiecewiseLinear:
    return PiecewiseLinear((0, 2), (0, 2))


def inverse_counterexample(n_values) -> list:
    """Difference quotients of the quantile map along the counterexample
    sequence, against the pointwise Hadamard derivative -1."""
    p = 1
    rows = []
    for n in n_values:
        t_n = _exact_inv_sqrt(n)
        a_n = counterexample_family(n)
        shifted = a_n + t_n  # alpha == 1, so the direction adds a constant
        ratio = (shifted.solve_level(p) - a_n.solve_level(p)) / t_n
        # derivative of the inverse at the limit: -alpha(xi_p) / A'(xi_p)
        derivative = -1.0 / 1.0
        rows.append(
            {
                "n": int(n),
                "t_n": float(t_n),
                "ratio": float(ratio),
                "derivative": float(derivative),
                "gap": float(abs(ratio - derivative)),
            }
        )
    return rows


_PROBE_FAMILIES = {
    "counterexample": counterexample_family,
    "identity": lambda n: counterexample_limit(),
}


def increment_condition_probe(family_id: str, n: int, K) -> float:
    """sqrt(n) * sup over |x| <= K/sqrt(n) of the increment mismatch
    |A_n(xi+x) - A_n(xi) - A(xi+x) + A(xi)|, evaluated exactly at the
    piecewise-linear segment endpoints."""
    if family_id not in _PROBE_FAMILIES:
        raise ContractError(f"unknown probe family {family_id!r}")
    if n < 1 or K <= 0:
        raise ContractError("need n >= 1 and K > 0")
    a_n = _PROBE_FAMILIES[family_id](n)
    a = counterexample_limit()
    diff = a_n - a
    xi = 1
    s = _exact_inv_sqrt(n)
    w = K * s
    lo = max(diff.xs[0], xi - w)
    hi = min(diff.xs[-1], xi + w)
    candidates = {lo, hi, xi}
    candidates.update(x for x in diff.xs if lo < x < hi)
    center = diff(xi)
    sup = max(abs(diff(x) - center) for x in candidates)
    root_n = math.isqrt(n) if math.isqrt(n) ** 2 == n else math.sqrt(n)
    return float(root_n * sup)


# -- Gaussian grid simulation ------------------------------------------

def simulate_grid_gaussian(kernel_matrix, seed: SeedSpec, size: int | None = None):
    """Zero-mean Gaussian vectors with the given covariance, via the
    symmetric square root; eigenvalues in [-1e-10, 0) are clipped to 0,
    anything lower is rejected."""
    mat = np.asarray(kernel_matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ContractError("kernel matrix must be square")
    sym = 0.5 * (mat + mat.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals.min() < -1e-10:
        raise ContractError(
            f"matrix substantially non-PSD (min eigenvalue {eigvals.min():.3e})"
        )
    root = eigvecs @ np.diag(np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T
    rng = seed.rng()
    if size is None:
        return root @ rng.standard_normal(mat.shape[0])
    return rng.standard_normal((size, mat.shape[0])) @ root.T
