"""Minimal Hamiltonian Monte Carlo with convergence diagnostics.

Gradient-based sampling with dual-averaging step-size adaptation and a
diagonal mass matrix estimated mid-warmup. The model supplies an analytic
log density + gradient callable, so there is no autodiff dependency and
runs are bit-deterministic for a given seed.

Diagnostics follow the split-chain formulation: potential scale reduction
(R-hat) over split half-chains, and effective sample size from combined
autocorrelations with Geyer's initial positive/monotone truncation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

LogpGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class ChainResult:
    draws: np.ndarray          # (n_draws, dim)
    accept_rate: float
    step_size: float


def hmc_chain(
    logp_grad: LogpGrad,
    init: np.ndarray,
    n_warmup: int,
    n_draws: int,
    seed,
    target_accept: float = 0.8,
    init_step: float = 0.1,
    leapfrog_range: tuple[int, int] = (16, 32),
) -> ChainResult:
    rng = np.random.default_rng(seed)
    dim = init.size
    theta = init.astype(float).copy()
    logp, grad = logp_grad(theta)
    inv_mass = np.ones(dim)

    # dual-averaging state (target_accept, standard constants)
    mu = np.log(10.0 * init_step)
    log_eps = np.log(init_step)
    log_eps_bar = 0.0
    h_bar = 0.0
    gamma, t0, kappa = 0.05, 10.0, 0.75
    adapt_iter = 0

    mass_window: list[np.ndarray] = []
    half = n_warmup // 2
    draws = np.empty((n_draws, dim))
    n_accept = 0

    total = n_warmup + n_draws
    for it in range(total):
        warming = it < n_warmup
        eps = np.exp(log_eps) if warming else np.exp(log_eps_bar)
        n_leap = int(rng.integers(leapfrog_range[0], leapfrog_range[1] + 1))

        p0 = rng.standard_normal(dim) / np.sqrt(inv_mass)
        h0 = -logp + 0.5 * np.sum(p0 * p0 * inv_mass)

        q, p, g = theta.copy(), p0.copy(), grad.copy()
        lp = logp
        diverged = False
        for _ in range(n_leap):
            p = p + 0.5 * eps * g
            q = q + eps * p * inv_mass
            lp, g = logp_grad(q)
            if not np.isfinite(lp):
                diverged = True
                break
            p = p + 0.5 * eps * g
        if diverged:
            alpha = 0.0
        else:
            h1 = -lp + 0.5 * np.sum(p * p * inv_mass)
            alpha = min(1.0, float(np.exp(min(0.0, h0 - h1))))
            if rng.random() < alpha:
                theta, logp, grad = q, lp, g
                if not warming:
                    n_accept += 1

        if warming:
            adapt_iter += 1
            frac = 1.0 / (adapt_iter + t0)
            h_bar = (1.0 - frac) * h_bar + frac * (target_accept - alpha)
            log_eps = mu - np.sqrt(adapt_iter) / gamma * h_bar
            eta = adapt_iter ** (-kappa)
            log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar
            if it >= half // 2 and it < half:
                mass_window.append(theta.copy())
            if it == half - 1 and len(mass_window) >= 10:
                var = np.var(np.asarray(mass_window), axis=0, ddof=1)
                n_w = len(mass_window)
                inv_mass = var * n_w / (n_w + 5.0) + 1e-3 * 5.0 / (n_w + 5.0)
                # re-anchor step-size adaptation around the current estimate
                mu = np.log(10.0) + log_eps
                h_bar, adapt_iter = 0.0, 0
        else:
            draws[it - n_warmup] = theta

    return ChainResult(draws, n_accept / max(1, n_draws), float(np.exp(log_eps_bar)))


def split_rhat(chains: np.ndarray) -> float:
    """Potential scale reduction over split half-chains; chains is (m, n)."""
    m, n = chains.shape
    half = n // 2
    if half < 2:
        return np.inf
    seqs = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    w = seqs.var(axis=1, ddof=1).mean()
    if w == 0.0:
        return 1.0
    means = seqs.mean(axis=1)
    b_over_n = means.var(ddof=1)
    var_plus = (half - 1) / half * w + b_over_n
    return float(np.sqrt(var_plus / w))


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance via FFT, normalized by n."""
    n = x.size
    x = x - x.mean()
    size = 1
    while size < 2 * n:
        size *= 2
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real
    return acov / n


def ess(chains: np.ndarray) -> float:
    """Effective sample size from combined-chain autocorrelations."""
    m, n = chains.shape
    if n < 4:
        return float(m * n)
    acovs = np.asarray([_autocov(chains[c]) for c in range(m)])
    chain_var = acovs[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    if w == 0.0:
        return float(m * n)
    mean_acov = acovs.mean(axis=0)
    if m > 1:
        var_plus = (n - 1.0) / n * w + chains.mean(axis=1).var(ddof=1)
    else:
        var_plus = (n - 1.0) / n * w + mean_acov[0] / n
    rho = 1.0 - (w - mean_acov) / var_plus
    rho[0] = 1.0

    # Geyer initial positive + monotone truncation over paired sums
    pairs: list[float] = []
    prev = np.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0.0:
            break
        pair = min(pair, prev)
        pairs.append(pair)
        prev = pair
        t += 2
    if not pairs:
        return float(m * n)
    tau = max(-1.0 + 2.0 * sum(pairs), 1e-3)
    return float(min(m * n, m * n / tau))
