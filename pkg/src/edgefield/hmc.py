"""Adaptive Hamiltonian Monte Carlo over the unconstrained posterior.

Fixed-length leapfrog trajectories (step count jittered uniformly by +/-20%,
capped at ``max_leapfrog``) with the step size tuned by dual averaging to a
target acceptance statistic. A diagonal metric is estimated during the
second half of warmup: positions collected over warmup iterations
[w/2, 3w/4) set the metric at 3w/4, after which dual averaging restarts so
the step size re-calibrates to the new geometry before sampling begins.

Chains are independent; chain c of a run with seed s draws from the RNG
substream (s, c), so runs are bit-reproducible and chains have independent
streams.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import ModelCache

__all__ = [
    "SamplerConfig",
    "PosteriorDraws",
    "Diagnostics",
    "run_chains",
    "sample_target",
    "split_rhat",
    "ess_bulk",
]

_DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 1000
    samples: int = 1000
    seed: int = 0
    target_accept: float = 0.8
    max_leapfrog: int = 512
    leapfrog_steps: int = 32  # base trajectory length before jitter

    def __post_init__(self):
        if self.chains < 1 or self.warmup < 1 or self.samples < 1:
            raise ValueError("chains, warmup, samples must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class PosteriorDraws:
    """MCMC output: unconstrained draws plus named constrained view."""

    draws: np.ndarray                 # (chains, samples, D) unconstrained
    constrained: np.ndarray           # (chains, samples, D_c)
    param_names: list[str]
    log_post: np.ndarray              # (chains, samples)
    pointwise: np.ndarray | None      # (chains*samples, n) log-likelihoods
    psi: np.ndarray | None            # (chains*samples, n) linear predictors

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_samples(self) -> int:
        return self.draws.shape[1]

    def flat_constrained(self) -> np.ndarray:
        c, s, d = self.constrained.shape
        return self.constrained.reshape(c * s, d)

    def column(self, name: str) -> np.ndarray:
        """Constrained draws of one named parameter, shape (chains, samples)."""
        j = self.param_names.index(name)
        return self.constrained[:, :, j]


@dataclass
class Diagnostics:
    rhat: dict = field(default_factory=dict)
    ess_bulk: dict = field(default_factory=dict)
    divergence_count: int = 0
    mean_accept: float = float("nan")
    degenerate: list = field(default_factory=list)

    def max_rhat(self) -> float:
        return max(self.rhat.values()) if self.rhat else float("nan")

    def report(self) -> str:
        lines = [
            "sampler diagnostics",
            f"  divergences: {self.divergence_count}",
            f"  mean acceptance: {self.mean_accept:.3f}",
            "  parameter        rhat      ess_bulk",
        ]
        for name in self.rhat:
            lines.append(f"  {name:<15s} {self.rhat[name]:>8.4f} {self.ess_bulk[name]:>12.1f}")
        if self.degenerate:
            lines.append(f"  degenerate (zero-variance): {', '.join(self.degenerate)}")
        return "\n".join(lines) + "\n"


class _DualAveraging:
    """Nesterov dual averaging of log step size (Hoffman-Gelman constants)."""

    def __init__(self, eps0: float, target: float):
        self.mu = np.log(10.0 * eps0)
        self.target = target
        self.log_eps = np.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.count = 0
        self.gamma = 0.05
        self.t0 = 10.0
        self.kappa = 0.75

    def update(self, accept_prob: float) -> float:
        self.count += 1
        m = self.count
        self.h_bar += ((self.target - accept_prob) - self.h_bar) / (m + self.t0)
        self.log_eps = self.mu - np.sqrt(m) / self.gamma * self.h_bar
        w = m ** (-self.kappa)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar
        return float(np.exp(self.log_eps))

    def adapted(self) -> float:
        return float(np.exp(self.log_eps_bar))


def _find_initial_step(lp_grad, q0: np.ndarray, inv_mass: np.ndarray,
                       rng: np.random.Generator) -> float:
    """Double/halve the step until one leapfrog step crosses 0.5 acceptance."""
    eps = 1.0
    lp0, g0 = lp_grad(q0)
    p0 = rng.standard_normal(q0.size) / np.sqrt(inv_mass)
    h0 = lp0 - 0.5 * float(p0 @ (inv_mass * p0))

    def one_step(e):
        p = p0 + 0.5 * e * g0
        q = q0 + e * inv_mass * p
        lp, g = lp_grad(q)
        p = p + 0.5 * e * g
        if not np.isfinite(lp):
            return -np.inf
        return lp - 0.5 * float(p @ (inv_mass * p))

    h1 = one_step(eps)
    direction = 1.0 if (h1 - h0) > np.log(0.5) else -1.0
    for _ in range(50):
        eps *= 2.0 ** direction
        h1 = one_step(eps)
        if direction * (h1 - h0) <= direction * np.log(0.5):
            break
    return eps


def _leapfrog(lp_grad, q, p, grad, eps, n_steps, inv_mass):
    for _ in range(n_steps):
        p = p + 0.5 * eps * grad
        q = q + eps * inv_mass * p
        lp, grad = lp_grad(q)
        if not np.all(np.isfinite(grad)) or not np.isfinite(lp):
            return q, p, -np.inf, grad
        p = p + 0.5 * eps * grad
    return q, p, lp, grad


def _run_single_chain(lp_grad, dim, init, config: SamplerConfig, chain_id: int):
    # non-finite values from overflow are handled explicitly as divergences
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _run_single_chain_inner(lp_grad, dim, init, config, chain_id)


def _run_single_chain_inner(lp_grad, dim, init, config: SamplerConfig, chain_id: int):
    rng = np.random.default_rng([config.seed, chain_id])
    warmup, samples = config.warmup, config.samples
    inv_mass = np.ones(dim)

    q = init(rng)
    lp, grad = lp_grad(q)

    eps = _find_initial_step(lp_grad, q, inv_mass, rng)
    da = _DualAveraging(eps, config.target_accept)

    w_half = warmup // 2
    w_three_q = warmup - max(1, warmup // 4)
    metric_window: list[np.ndarray] = []

    out = np.empty((samples, dim))
    out_lp = np.empty(samples)
    n_accept_stat = 0.0
    n_kept = 0
    divergences = 0

    total = warmup + samples
    for it in range(total):
        adapting = it < warmup
        base = min(config.leapfrog_steps, config.max_leapfrog)
        jitter = rng.uniform(0.8, 1.2)
        n_steps = max(1, min(config.max_leapfrog, int(round(base * jitter))))

        p0 = rng.standard_normal(dim) / np.sqrt(inv_mass)
        h0 = lp - 0.5 * float(p0 @ (inv_mass * p0))
        q1, p1, lp1, grad1 = _leapfrog(lp_grad, q.copy(), p0.copy(), grad, eps,
                                       n_steps, inv_mass)
        if np.isfinite(lp1):
            h1 = lp1 - 0.5 * float(p1 @ (inv_mass * p1))
            delta = h1 - h0
        else:
            delta = -np.inf
        divergent = (not np.isfinite(delta)) or (-delta > _DIVERGENCE_THRESHOLD)
        accept_prob = 0.0 if not np.isfinite(delta) else float(min(1.0, np.exp(delta)))

        if (not divergent) and rng.uniform() < accept_prob:
            q, lp, grad = q1, lp1, grad1

        if adapting:
            eps = da.update(accept_prob)
            if w_half <= it < w_three_q:
                metric_window.append(q.copy())
            if it == w_three_q - 1 and len(metric_window) >= 8:
                m = np.asarray(metric_window)
                var = np.var(m, axis=0, ddof=1)
                w = m.shape[0]
                # regularized toward unit scale, as a guard for short windows
                inv_mass = (w / (w + 5.0)) * var + (5.0 / (w + 5.0)) * 1e-3
                inv_mass = np.where(inv_mass > 0, inv_mass, 1e-3)
                cur = float(np.exp(da.log_eps))
                da = _DualAveraging(cur, config.target_accept)
                eps = cur
            if it == warmup - 1:
                eps = da.adapted()
        else:
            if divergent:
                divergences += 1
            n_accept_stat += accept_prob
            out[n_kept] = q
            out_lp[n_kept] = lp
            n_kept += 1

    return out, out_lp, divergences, n_accept_stat / samples


def _n_workers() -> int:
    env = os.environ.get("EDGEFIELD_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sample_target(lp_grad, dim: int, config: SamplerConfig,
                  init=None) -> tuple[np.ndarray, np.ndarray, int, float]:
    """Sample an arbitrary differentiable log density.

    ``lp_grad(q) -> (logp, grad)``. Returns (draws with shape
    (chains, samples, dim), log density per draw, divergence count,
    mean post-warmup acceptance). Used directly in tests and as the
    engine under :func:`run_chains`.
    """
    if init is None:
        def init(rng):
            return rng.uniform(-0.5, 0.5, size=dim)

    results = []
    workers = min(_n_workers(), config.chains)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_single_chain, lp_grad, dim, init, config, c)
                    for c in range(config.chains)]
            results = [f.result() for f in futs]
    else:
        results = [_run_single_chain(lp_grad, dim, init, config, c)
                   for c in range(config.chains)]
    draws = np.stack([r[0] for r in results])
    log_post = np.stack([r[1] for r in results])
    divergences = sum(r[2] for r in results)
    mean_accept = float(np.mean([r[3] for r in results]))
    return draws, log_post, divergences, mean_accept


def run_chains(data, g, lg, spec, config: SamplerConfig,
               cache: ModelCache | None = None) -> tuple[PosteriorDraws, Diagnostics]:
    """Fit the spatial model and return draws plus convergence diagnostics."""
    if cache is None:
        cache = ModelCache(data, g, lg, spec)

    def lp_grad(x):
        return cache.log_posterior(x), cache.grad_log_posterior(x)

    # data-informed start for the latent block: without it, datasets whose
    # field spans many log-units leave the chains stuck far from the
    # posterior for the whole adaptation window
    target = np.log((cache.yf + 0.5) / cache.data.expected)
    if not np.all(np.isfinite(target)):
        alpha0 = 0.0
        latent0 = np.zeros(cache.latent_dim)
    else:
        alpha0 = float(target.mean())
        resid = target - alpha0
        if spec.variant == "car":
            latent0 = resid
        else:
            latent0 = np.linalg.lstsq(cache.C, resid, rcond=None)[0]

    # the full-rank skewed variant's posterior has one mode where eta
    # carries the asymmetric part of the field and one where eps absorbs
    # everything; starting with the residual in the skewness block lets
    # warmup shrink eta away when the data carry no skew, whereas chains
    # anchored in the eps-only mode essentially never cross over.  A
    # low-rank basis cannot represent the residual, so there the latent
    # keeps the whole residual and the weights start at 0.
    skew0 = None
    lu0 = 0.0
    if spec.variant == "renege_sk":
        if cache.basis is None:
            lu0 = float(np.log1p(np.sqrt(2.0 / np.pi)))  # u0 - b = 1
            skew0 = latent0
            latent0 = np.zeros(cache.latent_dim)
        else:
            skew0 = np.zeros(cache.skew_dim)

    def init(rng):
        for _ in range(100):
            x = np.zeros(cache.dim)
            x[cache.sl_latent] = latent0
            x[cache.i_alpha] = alpha0 + rng.uniform(-0.5, 0.5)
            x[cache.sl_beta] = rng.uniform(-0.5, 0.5, size=cache.k)
            x[cache.i_dep] = rng.uniform(-0.5, 0.5)
            x[cache.i_lsig] = rng.uniform(-0.5, 0.5)
            if spec.variant == "renege_sk":
                x[cache.sl_skew] = skew0
                x[cache.i_lseta] = rng.uniform(-0.5, 0.5)
                x[cache.i_lu] = lu0 + rng.uniform(-0.5, 0.5)
            if np.isfinite(cache.log_posterior(x)):
                return x
        raise RuntimeError("no finite posterior at initialization after 100 jittered retries")

    draws, log_post, divergences, mean_accept = sample_target(
        lp_grad, cache.dim, config, init=init)

    chains, samples, _ = draws.shape
    constrained = np.empty((chains, samples, len(cache.param_names)))
    pointwise = np.empty((chains * samples, cache.n))
    psi = np.empty((chains * samples, cache.n))
    idx = 0
    for c in range(chains):
        for s in range(samples):
            x = draws[c, s]
            constrained[c, s] = cache.constrained_row(x)
            ps = cache.psi(x)
            psi[idx] = ps
            pointwise[idx] = cache.yf * ps - np.exp(ps) - cache.lgamma_y1
            idx += 1

    post = PosteriorDraws(draws=draws, constrained=constrained,
                          param_names=list(cache.param_names),
                          log_post=log_post, pointwise=pointwise, psi=psi)

    diag = Diagnostics(divergence_count=divergences, mean_accept=mean_accept)
    for j, name in enumerate(cache.param_names):
        col = constrained[:, :, j]
        r, flag_r = split_rhat(col)
        e, flag_e = ess_bulk(col)
        diag.rhat[name] = r
        diag.ess_bulk[name] = e
        if flag_r or flag_e:
            diag.degenerate.append(name)
    return post, diag


# --- diagnostics ------------------------------------------------------------

def split_rhat(chain_draws: np.ndarray) -> tuple[float, bool]:
    """Split-R-hat over (chains, samples) draws.

    Each chain is halved; R-hat compares between- and within-half variance.
    Returns (rhat, degenerate_flag); zero-variance input reports 1 with the
    flag set.
    """
    x = np.asarray(chain_draws, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    m, n = x.shape
    if m * (n // 2) < 2 or n < 4:
        raise ValueError("split_rhat needs at least 2 chains (or one chain of length >= 4)")
    half = n // 2
    splits = np.concatenate([x[:, :half], x[:, half:2 * half]], axis=0)
    w = float(np.mean(splits.var(axis=1, ddof=1)))
    b = half * float(np.var(splits.mean(axis=1), ddof=1))
    if w == 0.0:
        return 1.0, True
    var_plus = (half - 1) / half * w + b / half
    return float(np.sqrt(var_plus / w)), False


def _chain_autocov(x: np.ndarray) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    f = np.fft.rfft(xc, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n].real / n
    return acov


def ess_bulk(chain_draws: np.ndarray) -> tuple[float, bool]:
    """Effective sample size via autocovariance with Geyer initial-monotone
    truncation, combining chains through the split-chain variance estimate.
    """
    x = np.asarray(chain_draws, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    m, n = x.shape
    if n < 8:
        raise ValueError("ess_bulk needs chains of length >= 8")
    total = m * n
    acovs = np.stack([_chain_autocov(x[c]) for c in range(m)])
    mean_var = float(np.mean(acovs[:, 0])) * n / (n - 1.0)
    if mean_var == 0.0:
        return float(total), True
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += float(np.var(x.mean(axis=1), ddof=1))
    rho = 1.0 - (mean_var - acovs.mean(axis=0)) / var_plus

    # Geyer: sum paired autocorrelations while positive, enforce monotone decay
    tau = -1.0
    prev_pair = np.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        pair = min(pair, prev_pair)
        tau += 2.0 * pair
        prev_pair = pair
        t += 2
    tau = max(tau, 1.0 / np.log10(total + 10.0))
    return float(min(total / tau, total * np.log10(total))), False
