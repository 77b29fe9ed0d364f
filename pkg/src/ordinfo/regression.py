"""Bayesian mixed-effects logistic regression of consistency on PMI.

Model, on standardized predictors:

    logit P(y=1) = intercept + beta_pmi * x_pmi + beta_len * x_len
                   + r[task] + s[task] * x_pmi

with per-task random intercepts r ~ N(0, sigma_intercept^2) and random
slopes s ~ N(0, sigma_slope^2) on independent half-Normal(1) scales
(a correlated-intercept/slope structure is not implemented). Fixed effects
get Normal(0, 2.5^2) priors on the standardized scale. The binary response
uses a Bernoulli-logit likelihood, so there is no separate error-variance
parameter. Sampling is HMC on a non-centered parameterization; reported
posteriors are gated on split R-hat < 1.05 and ESS >= 200 per parameter.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .consistency import ConsistencyRecord
from .errors import ConvergenceError, DataError
from .mcmc import ess as _ess
from .mcmc import hmc_chain, split_rhat

DEFAULT_ROPE = (-0.18, 0.18)
_LAM_CAP = 40.0  # |log scale| beyond this is a divergent trajectory
ROPE_DECISION_MASS = 0.95
RHAT_GATE = 1.05
ESS_GATE = 200.0


@dataclass(frozen=True)
class MixedModelSpec:
    include_length: bool = True
    prior_scale_fixed: float = 2.5
    prior_scale_sigma: float = 1.0

    def __post_init__(self):
        if self.prior_scale_fixed <= 0 or self.prior_scale_sigma <= 0:
            raise DataError("prior scales must be positive")


@dataclass(frozen=True)
class DesignMatrix:
    x_pmi: np.ndarray          # standardized, (n,)
    x_len: np.ndarray          # standardized, (n,)
    task_idx: np.ndarray       # int codes into task_names, (n,)
    y: np.ndarray              # 0/1, (n,)
    task_names: tuple[str, ...]
    pmi_mean: float
    pmi_sd: float
    len_mean: float
    len_sd: float

    @property
    def n_rows(self) -> int:
        return int(self.y.size)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.x_pmi, self.x_len, self.task_idx, self.y):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update("|".join(self.task_names).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class ParamSummary:
    parameter: str
    mean: float
    se: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class RopeReport:
    parameter: str
    rope_low: float
    rope_high: float
    fraction_outside: float
    effective: bool


@dataclass(frozen=True)
class ModelComparison:
    log_bf_with_over_without: float
    bic_with: float
    bic_without: float
    heldout_lpd_with: float
    heldout_lpd_without: float
    favored: str


@dataclass(frozen=True)
class CurvePoint:
    task: str
    pmi: float
    mean: float
    lo: float
    hi: float


@dataclass
class PosteriorDraws:
    names: list[str]
    draws: np.ndarray            # (chains, n_draws, n_params), natural scale
    loglik: np.ndarray           # (chains, n_draws)
    rhat: dict[str, float]
    ess: dict[str, float]
    converged: bool
    task_names: tuple[str, ...]
    spec: MixedModelSpec
    design_fingerprint: str
    n_rows: int
    seed: int
    accept_rates: tuple[float, ...]

    def flat(self, parameter: str) -> np.ndarray:
        try:
            j = self.names.index(parameter)
        except ValueError:
            raise DataError(f"unknown parameter {parameter!r}") from None
        return self.draws[:, :, j].reshape(-1)

    def diagnostics_failures(self) -> list[str]:
        bad = []
        for name in self.names:
            if not (self.rhat[name] < RHAT_GATE):
                bad.append(f"{name}: R-hat={self.rhat[name]:.3f}")
            if not (self.ess[name] >= ESS_GATE):
                bad.append(f"{name}: ESS={self.ess[name]:.0f}")
        return bad


def standardize(records: Sequence[ConsistencyRecord]) -> DesignMatrix:
    """Z-score PMI and length (sample SD, n-1 denominator), keep constants."""
    if len(records) < 2:
        raise DataError("need at least 2 records to standardize")
    pmi = np.asarray([r.avg_pmi_bits for r in records], dtype=float)
    length = np.asarray([r.length for r in records], dtype=float)
    y = np.asarray([r.y for r in records], dtype=int)
    if not set(np.unique(y)) <= {0, 1}:
        raise DataError("y values must be 0/1")
    task_names = tuple(sorted({r.task for r in records}))
    code = {t: i for i, t in enumerate(task_names)}
    task_idx = np.asarray([code[r.task] for r in records], dtype=int)
    cols = {}
    for name, col in (("pmi", pmi), ("length", length)):
        sd = float(col.std(ddof=1))
        if sd == 0.0:
            raise DataError(f"{name} column has zero variance")
        cols[name] = ((col - col.mean()) / sd, float(col.mean()), sd)
    return DesignMatrix(
        cols["pmi"][0], cols["length"][0], task_idx, y, task_names,
        cols["pmi"][1], cols["pmi"][2], cols["length"][1], cols["length"][2],
    )


# ---------------------------------------------------------------------------
# posterior


def _unpack(theta, n_tasks, include_length):
    o = 3 if include_length else 2
    a = theta[0]
    bp = theta[1]
    bl = theta[2] if include_length else 0.0
    z = theta[o : o + n_tasks]
    u = theta[o + n_tasks : o + 2 * n_tasks]
    lam_r, lam_s = theta[-2], theta[-1]
    return a, bp, bl, z, u, lam_r, lam_s


def _make_logp_grad(design: DesignMatrix, spec: MixedModelSpec):
    xp, xl, y = design.x_pmi, design.x_len, design.y.astype(float)
    k_idx = design.task_idx
    n_tasks = len(design.task_names)
    sf2 = spec.prior_scale_fixed**2
    ss2 = spec.prior_scale_sigma**2
    include_length = spec.include_length
    o = 3 if include_length else 2

    def logp_grad(theta):
        a, bp, bl, z, u, lam_r, lam_s = _unpack(theta, n_tasks, include_length)
        if abs(lam_r) > _LAM_CAP or abs(lam_s) > _LAM_CAP:
            # a leapfrog excursion this far is a divergence, not a state
            return -np.inf, np.zeros_like(theta)
        sr, ss = math.exp(lam_r), math.exp(lam_s)
        eta = a + bp * xp + sr * z[k_idx] + ss * u[k_idx] * xp
        if include_length:
            eta = eta + bl * xl
        ll = float(y @ eta - np.logaddexp(0.0, eta).sum())
        logp = (
            ll
            - (a * a + bp * bp + bl * bl) / (2.0 * sf2)
            - 0.5 * float(z @ z + u @ u)
            - sr * sr / (2.0 * ss2) + lam_r
            - ss * ss / (2.0 * ss2) + lam_s
        )
        g = y - expit(eta)
        grad = np.empty_like(theta)
        grad[0] = g.sum() - a / sf2
        grad[1] = g @ xp - bp / sf2
        if include_length:
            grad[2] = g @ xl - bl / sf2
        grad[o : o + n_tasks] = sr * np.bincount(k_idx, g, n_tasks) - z
        grad[o + n_tasks : o + 2 * n_tasks] = (
            ss * np.bincount(k_idx, g * xp, n_tasks) - u
        )
        grad[-2] = sr * float(g @ z[k_idx]) - sr * sr / ss2 + 1.0
        grad[-1] = ss * float(g @ (u[k_idx] * xp)) - ss * ss / ss2 + 1.0
        return logp, grad

    return logp_grad


def _loglik_only(design: DesignMatrix, spec: MixedModelSpec):
    xp, xl, y = design.x_pmi, design.x_len, design.y.astype(float)
    k_idx = design.task_idx
    n_tasks = len(design.task_names)

    def loglik(theta):
        a, bp, bl, z, u, lam_r, lam_s = _unpack(theta, n_tasks, spec.include_length)
        lam_r = min(max(lam_r, -_LAM_CAP), _LAM_CAP)
        lam_s = min(max(lam_s, -_LAM_CAP), _LAM_CAP)
        sr, ss = math.exp(lam_r), math.exp(lam_s)
        eta = a + bp * xp + sr * z[k_idx] + ss * u[k_idx] * xp
        if spec.include_length:
            eta = eta + bl * xl
        return float(y @ eta - np.logaddexp(0.0, eta).sum())

    return loglik


def _natural_names(design: DesignMatrix, spec: MixedModelSpec) -> list[str]:
    names = ["intercept", "beta_pmi"]
    if spec.include_length:
        names.append("beta_len")
    names += ["sigma_intercept", "sigma_slope"]
    names += [f"r[{t}]" for t in design.task_names]
    names += [f"s[{t}]" for t in design.task_names]
    return names


def _to_natural(raw: np.ndarray, n_tasks: int, include_length: bool) -> np.ndarray:
    """Map unconstrained chain draws to the reported natural-scale parameters."""
    o = 3 if include_length else 2
    a = raw[:, 0:1]
    bp = raw[:, 1:2]
    cols = [a, bp]
    if include_length:
        cols.append(raw[:, 2:3])
    sr = np.exp(raw[:, -2:-1])
    ss = np.exp(raw[:, -1:])
    cols += [sr, ss]
    cols.append(sr * raw[:, o : o + n_tasks])
    cols.append(ss * raw[:, o + n_tasks : o + 2 * n_tasks])
    return np.concatenate(cols, axis=1)


def fit(
    design: DesignMatrix,
    spec: MixedModelSpec = MixedModelSpec(),
    chains: int = 4,
    iterations: int = 1000,
    warmup: int = 1000,
    seed: int = 0,
) -> PosteriorDraws:
    """HMC posterior sampling; deterministic for a given seed."""
    if design.n_rows == 0:
        raise DataError("empty design")
    counts = np.bincount(design.task_idx, minlength=len(design.task_names))
    if (counts == 0).any():
        empty = [t for t, c in zip(design.task_names, counts) if c == 0]
        raise DataError(f"tasks with no rows: {empty}")
    if chains < 2:
        raise DataError("need >= 2 chains for split R-hat")

    n_tasks = len(design.task_names)
    dim = (3 if spec.include_length else 2) + 2 * n_tasks + 2
    logp_grad = _make_logp_grad(design, spec)
    loglik = _loglik_only(design, spec)

    natural = []
    logliks = []
    accepts = []
    for c in range(chains):
        rng = np.random.default_rng(np.random.SeedSequence([seed, c]))
        init = 0.1 * rng.standard_normal(dim)
        init[-2:] = -0.5  # start scales below 1 to avoid early divergence
        result = hmc_chain(
            logp_grad,
            init,
            n_warmup=warmup,
            n_draws=iterations,
            seed=np.random.SeedSequence([seed, c, 1]),
        )
        natural.append(_to_natural(result.draws, n_tasks, spec.include_length))
        logliks.append(np.asarray([loglik(d) for d in result.draws]))
        accepts.append(result.accept_rate)

    draws = np.stack(natural)           # (chains, iterations, P)
    loglik_arr = np.stack(logliks)
    names = _natural_names(design, spec)
    rhat = {n: split_rhat(draws[:, :, j]) for j, n in enumerate(names)}
    ess_vals = {n: _ess(draws[:, :, j]) for j, n in enumerate(names)}
    converged = all(r < RHAT_GATE for r in rhat.values()) and all(
        e >= ESS_GATE for e in ess_vals.values()
    )
    return PosteriorDraws(
        names=names,
        draws=draws,
        loglik=loglik_arr,
        rhat=rhat,
        ess=ess_vals,
        converged=converged,
        task_names=design.task_names,
        spec=spec,
        design_fingerprint=design.fingerprint(),
        n_rows=design.n_rows,
        seed=seed,
        accept_rates=tuple(accepts),
    )


def summarize(draws: PosteriorDraws, parameter: str) -> ParamSummary:
    """Posterior mean, SD-as-SE, and equal-tailed 95% interval."""
    if not draws.converged:
        raise ConvergenceError(
            "posterior not converged: " + "; ".join(draws.diagnostics_failures()[:8])
        )
    sample = draws.flat(parameter)
    lo, hi = np.percentile(sample, [2.5, 97.5])
    return ParamSummary(
        parameter, float(sample.mean()), float(sample.std(ddof=1)), float(lo), float(hi)
    )


def rope(
    draws: PosteriorDraws,
    parameter: str,
    bounds: tuple[float, float] = DEFAULT_ROPE,
) -> RopeReport:
    """Posterior mass outside the practical-equivalence region.

    The effect is called practically meaningful when at least 95% of the
    posterior lies outside [low, high] on the standardized scale.
    """
    low, high = bounds
    if not low < high:
        raise DataError(f"ROPE bounds must be ordered, got {bounds}")
    sample = draws.flat(parameter)
    outside = float(np.mean((sample < low) | (sample > high)))
    return RopeReport(parameter, low, high, outside, outside >= ROPE_DECISION_MASS)


def _map_loglik(design: DesignMatrix, spec: MixedModelSpec) -> float:
    """Maximized log likelihood for the Schwarz approximation.

    Optimizes the joint penalized objective and returns the likelihood part;
    a posterior-draw maximum serves as fallback guard in compare().
    """
    logp_grad = _make_logp_grad(design, spec)
    loglik = _loglik_only(design, spec)
    n_tasks = len(design.task_names)
    dim = (3 if spec.include_length else 2) + 2 * n_tasks + 2

    def neg(theta):
        lp, g = logp_grad(theta)
        return -lp, -g

    x0 = np.zeros(dim)
    x0[-2:] = -0.5
    res = minimize(neg, x0, jac=True, method="L-BFGS-B")
    return loglik(res.x)


def compare(
    fit_with: PosteriorDraws,
    fit_without: PosteriorDraws,
    design_with: DesignMatrix,
    design_without: DesignMatrix,
    heldout_fraction: float = 0.25,
    seed: int = 7,
) -> ModelComparison:
    """Schwarz (BIC) log Bayes factor plus a held-out predictive check.

    Both fits must come from the same rows; the with/without designs differ
    only in whether the length column enters the linear predictor.
    """
    if fit_with.design_fingerprint != design_with.fingerprint():
        raise DataError("fit_with does not match design_with rows")
    if fit_without.design_fingerprint != design_without.fingerprint():
        raise DataError("fit_without does not match design_without rows")
    same_rows = (
        design_with.n_rows == design_without.n_rows
        and np.array_equal(design_with.y, design_without.y)
        and np.array_equal(design_with.task_idx, design_without.task_idx)
        and np.array_equal(design_with.x_pmi, design_without.x_pmi)
    )
    if not same_rows:
        raise DataError("model comparison requires identical rows in both designs")

    n = design_with.n_rows
    # fixed effects + variance components (random effects enter via scales)
    k_with = (3 if fit_with.spec.include_length else 2) + 2
    k_without = (3 if fit_without.spec.include_length else 2) + 2
    ll_with = max(_map_loglik(design_with, fit_with.spec), float(fit_with.loglik.max()))
    ll_without = max(
        _map_loglik(design_without, fit_without.spec), float(fit_without.loglik.max())
    )
    bic_with = -2.0 * ll_with + k_with * math.log(n)
    bic_without = -2.0 * ll_without + k_without * math.log(n)
    log_bf = 0.5 * (bic_without - bic_with)

    lpd_with, lpd_without = _heldout_lpd(
        design_with, fit_with.spec, fit_without.spec, heldout_fraction, seed
    )
    favored = "with_length" if log_bf > 0 else "without_length"
    return ModelComparison(log_bf, bic_with, bic_without, lpd_with, lpd_without, favored)


def _subset_design(design: DesignMatrix, idx: np.ndarray) -> DesignMatrix:
    return DesignMatrix(
        design.x_pmi[idx], design.x_len[idx], design.task_idx[idx], design.y[idx],
        design.task_names, design.pmi_mean, design.pmi_sd,
        design.len_mean, design.len_sd,
    )


def _heldout_lpd(design, spec_with, spec_without, heldout_fraction, seed):
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for k in range(len(design.task_names)):
        rows = np.flatnonzero(design.task_idx == k)
        rows = rows[rng.permutation(rows.size)]
        if rows.size < 4:
            train_idx.extend(rows.tolist())
            continue
        n_test = max(1, int(round(rows.size * heldout_fraction)))
        test_idx.extend(rows[:n_test].tolist())
        train_idx.extend(rows[n_test:].tolist())
    train = _subset_design(design, np.asarray(sorted(train_idx), dtype=int))
    test = _subset_design(design, np.asarray(sorted(test_idx), dtype=int))

    out = []
    for spec in (spec_with, spec_without):
        refit = fit(train, spec, chains=2, iterations=500, warmup=500, seed=seed)
        probs = _predictive_probs(refit, test)       # (draws, n_test)
        point = np.where(test.y == 1, probs, 1.0 - probs)
        lpd = float(np.log(point.mean(axis=0)).sum())
        out.append(lpd)
    return out[0], out[1]


def _predictive_probs(draws: PosteriorDraws, design: DesignMatrix) -> np.ndarray:
    """P(y=1) per draw and row, using each row's task effects."""
    flat = draws.draws.reshape(-1, draws.draws.shape[-1])
    names = draws.names
    idx = {n: j for j, n in enumerate(names)}
    a = flat[:, idx["intercept"]][:, None]
    bp = flat[:, idx["beta_pmi"]][:, None]
    bl = (
        flat[:, idx["beta_len"]][:, None]
        if "beta_len" in idx
        else np.zeros((flat.shape[0], 1))
    )
    r = np.stack([flat[:, idx[f"r[{t}]"]] for t in draws.task_names], axis=1)
    s = np.stack([flat[:, idx[f"s[{t}]"]] for t in draws.task_names], axis=1)
    eta = (
        a
        + bp * design.x_pmi[None, :]
        + bl * design.x_len[None, :]
        + r[:, design.task_idx]
        + s[:, design.task_idx] * design.x_pmi[None, :]
    )
    return expit(eta)


def predictive_means(draws: PosteriorDraws, design: DesignMatrix) -> np.ndarray:
    """Posterior-mean P(y=1) per design row."""
    return _predictive_probs(draws, design).mean(axis=0)


def simulate_curves(
    draws: PosteriorDraws,
    design: DesignMatrix,
    grid_points: int = 50,
    credible: float = 0.95,
) -> list[CurvePoint]:
    """Fitted consistency curves per task over that task's observed PMI range,
    with length held at the task's mean, plus credible bands."""
    flat = draws.draws.reshape(-1, draws.draws.shape[-1])
    idx = {n: j for j, n in enumerate(draws.names)}
    alpha_tail = 100.0 * (1.0 - credible) / 2.0
    points: list[CurvePoint] = []
    for k, task in enumerate(draws.task_names):
        rows = np.flatnonzero(design.task_idx == k)
        if rows.size == 0:
            continue
        z_lo = design.x_pmi[rows].min()
        z_hi = design.x_pmi[rows].max()
        grid = np.linspace(z_lo, z_hi, grid_points) if grid_points > 1 else np.array([z_lo])
        z_len = float(design.x_len[rows].mean())
        a = flat[:, idx["intercept"]][:, None]
        bp = flat[:, idx["beta_pmi"]][:, None]
        bl = (
            flat[:, idx["beta_len"]][:, None]
            if "beta_len" in idx
            else np.zeros((flat.shape[0], 1))
        )
        r = flat[:, idx[f"r[{task}]"]][:, None]
        s = flat[:, idx[f"s[{task}]"]][:, None]
        eta = a + (bp + s) * grid[None, :] + bl * z_len + r
        probs = expit(eta)
        mean = probs.mean(axis=0)
        lo = np.percentile(probs, alpha_tail, axis=0)
        hi = np.percentile(probs, 100.0 - alpha_tail, axis=0)
        for j, z in enumerate(grid):
            raw_pmi = z * design.pmi_sd + design.pmi_mean
            points.append(
                CurvePoint(task, float(raw_pmi), float(mean[j]), float(lo[j]), float(hi[j]))
            )
    return points


# ---------------------------------------------------------------------------
# synthetic data + report files


def simulate_consistency(
    n_rows: int,
    task_names: Sequence[str],
    beta_pmi: float,
    beta_len: float,
    intercept: float = 0.3,
    sigma_intercept: float = 0.5,
    sigma_slope: float = 0.3,
    seed: int = 0,
    task_intercepts: Sequence[float] | None = None,
) -> list[ConsistencyRecord]:
    """Draw consistency records from the generative model itself.

    Raw PMI is 2 + 1.5*z and length 11 + 4*z rounded, so the coefficients
    apply to the (population) standardized predictors that the pipeline's
    sample standardization recovers.
    """
    rng = np.random.default_rng(seed)
    n_tasks = len(task_names)
    if task_intercepts is None:
        r = rng.normal(0.0, sigma_intercept, n_tasks)
    else:
        r = np.asarray(task_intercepts, dtype=float)
    s = rng.normal(0.0, sigma_slope, n_tasks)
    records = []
    for i in range(n_rows):
        k = int(rng.integers(0, n_tasks))
        zp = float(rng.standard_normal())
        raw_len = max(3, int(round(11 + 4 * rng.standard_normal())))
        zl = (raw_len - 11.0) / 4.0
        eta = intercept + beta_pmi * zp + beta_len * zl + r[k] + s[k] * zp
        y = int(rng.random() < 1.0 / (1.0 + math.exp(-eta)))
        records.append(
            ConsistencyRecord(task_names[k], f"sim{i:06d}", y, 2.0 + 1.5 * zp, raw_len)
        )
    return records


def write_fit_summary(draws: PosteriorDraws, path: str) -> None:
    lines = ["parameter,mean,se,ci_low,ci_high,rhat,ess"]
    for name in draws.names:
        sample = draws.flat(name)
        lo, hi = np.percentile(sample, [2.5, 97.5])
        lines.append(
            f"{name},{sample.mean()!r},{sample.std(ddof=1)!r},{lo!r},{hi!r},"
            f"{draws.rhat[name]!r},{draws.ess[name]!r}"
        )
    _write_text(path, "\n".join(lines) + "\n")


def write_rope_report(
    draws: PosteriorDraws, path: str, bounds: tuple[float, float] = DEFAULT_ROPE
) -> None:
    lines = ["parameter,rope_low,rope_high,fraction_outside,effective"]
    for name in draws.names:
        rep = rope(draws, name, bounds)
        lines.append(
            f"{name},{rep.rope_low!r},{rep.rope_high!r},"
            f"{rep.fraction_outside!r},{int(rep.effective)}"
        )
    _write_text(path, "\n".join(lines) + "\n")


def write_curves(points: Iterable[CurvePoint], path: str) -> None:
    lines = ["task,pmi,mean,lo,hi"]
    for p in points:
        lines.append(f"{p.task},{p.pmi!r},{p.mean!r},{p.lo!r},{p.hi!r}")
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)
