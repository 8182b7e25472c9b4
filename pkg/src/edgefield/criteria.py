"""Model comparison: deviance statistics, WAIC, PSIS-LOO, and RMSE.

All measures are computed from the pointwise log-likelihood matrix (draws x
areas) and, where needed, the per-draw linear predictors stored alongside
the posterior draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

__all__ = [
    "CriteriaTable",
    "deviance_stats",
    "waic",
    "looic",
    "rmse",
    "criteria_for_fit",
    "compare",
]

PSIS_TAIL_FRACTION = 0.2
PARETO_K_WARN = 0.7

_COLUMNS = ("Dbar", "pD", "DIC", "WAIC", "LOOIC", "RMSE")


@dataclass
class CriteriaTable:
    """One comparison row per the Table-1/2 layout."""

    model: str
    Dbar: float
    pD: float
    DIC: float
    WAIC: float
    LOOIC: float
    RMSE: float
    pareto_k_warnings: int = 0

    def values(self) -> tuple:
        return (self.Dbar, self.pD, self.DIC, self.WAIC, self.LOOIC, self.RMSE)


def deviance_stats(draws, data) -> tuple[float, float, float]:
    """(Dbar, pD, DIC) with the plug-in deviance at the posterior-mean
    linear predictors.
    """
    pointwise = draws.pointwise
    if pointwise is None or pointwise.shape[0] == 0:
        raise ValueError("no pointwise log-likelihoods in draws")
    dev = -2.0 * pointwise.sum(axis=1)
    dbar = float(dev.mean())
    psi_bar = draws.psi.mean(axis=0)
    y = np.asarray(data.y, dtype=np.float64)
    ll_plug = float(np.sum(y * psi_bar - np.exp(psi_bar) - gammaln(y + 1.0)))
    pd_eff = dbar - (-2.0 * ll_plug)
    return dbar, pd_eff, dbar + pd_eff


def waic(pointwise: np.ndarray) -> tuple[float, float, float]:
    """(lppd, p_waic, WAIC) from a draws x areas log-likelihood matrix."""
    ll = np.asarray(pointwise, dtype=np.float64)
    if ll.ndim != 2 or ll.shape[0] < 2:
        raise ValueError("waic needs at least 2 draws")
    s = ll.shape[0]
    lppd = float(np.sum(logsumexp(ll, axis=0) - np.log(s)))
    p_waic = float(np.sum(np.var(ll, axis=0, ddof=1)))
    return lppd, p_waic, -2.0 * (lppd - p_waic)


def _gpd_fit(excess: np.ndarray) -> tuple[float, float]:
    """Generalized-Pareto fit (shape k, scale sigma) of tail excesses.

    Zhang-Stephens posterior-mean profile fit; unlike moment estimators it
    remains consistent for heavy tails (k > 0.5), which the k > 0.7
    reliability warning has to be able to reach.
    """
    x = np.sort(np.asarray(excess, dtype=np.float64))
    n = x.size
    m_grid = 30 + int(np.floor(np.sqrt(n)))
    jj = np.arange(1, m_grid + 1)
    xstar = x[int(np.floor(n / 4.0 + 0.5)) - 1]
    if xstar <= 0:
        xstar = float(x.mean())
    theta = 1.0 / x[-1] + (1.0 - np.sqrt(m_grid / (jj - 0.5))) / (3.0 * xstar)
    k_j = np.array([np.mean(np.log1p(-t * x)) for t in theta])
    log_lik = n * (np.log(-theta / k_j) - k_j - 1.0)
    w = np.exp(log_lik - logsumexp(log_lik))
    theta_hat = float(theta @ w)
    k = float(np.mean(np.log1p(-theta_hat * x)))
    sigma = -k / theta_hat
    # weak regularization toward 0.5 stabilizes very small tails
    k = (n * k + 5.0) / (n + 10.0)
    return k, sigma


def _gpd_quantile(q: np.ndarray, k: float, sigma: float) -> np.ndarray:
    if abs(k) < 1e-12:
        return -sigma * np.log1p(-q)
    return sigma / k * (np.power(1.0 - q, -k) - 1.0)


def _psis_weights(log_w: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Smooth one column of raw log importance weights.

    The largest 20% of weights are replaced by quantiles of a
    generalized-Pareto distribution fitted to their excesses over the
    remaining maximum. Returns (weights, k-hat, fallback)
    where fallback means degenerate input handled by plain importance
    sampling.
    """
    s = log_w.size
    lw = log_w - log_w.max()
    w = np.exp(lw)
    n_tail = int(np.ceil(PSIS_TAIL_FRACTION * s))
    if n_tail < 2 or s - n_tail < 1:
        return w, 0.0, True
    order = np.argsort(w)
    tail_idx = order[-n_tail:]
    cutoff = w[order[-n_tail - 1]]
    excess = w[tail_idx] - cutoff
    if np.all(excess <= 0) or float(excess.var(ddof=1)) == 0.0:
        return w, 0.0, True
    excess = np.maximum(excess, 1e-30 * excess.max())
    k, sigma = _gpd_fit(excess)
    q = (np.arange(1, n_tail + 1) - 0.5) / n_tail
    smoothed = cutoff + _gpd_quantile(q, k, sigma)
    # keep the tail no larger than the raw maximum, preserving sort order
    smoothed = np.minimum(smoothed, w[order[-1]])
    w = w.copy()
    w[tail_idx[np.argsort(w[tail_idx])]] = smoothed
    return w, k, False


def looic(pointwise: np.ndarray) -> tuple[float, np.ndarray]:
    """Pareto-smoothed importance-sampling leave-one-out.

    Returns (LOOIC, per-area tail shape k). k > 0.7 marks an unreliable
    importance distribution for that area.
    """
    ll = np.asarray(pointwise, dtype=np.float64)
    if ll.ndim != 2 or ll.shape[0] < 2:
        raise ValueError("looic needs at least 2 draws")
    n = ll.shape[1]
    elpd = np.empty(n)
    ks = np.empty(n)
    for i in range(n):
        w, k, _ = _psis_weights(-ll[:, i])
        ks[i] = k
        elpd[i] = np.log(float(w @ np.exp(ll[:, i] - ll[:, i].max()))
                         / float(w.sum())) + ll[:, i].max()
    return float(-2.0 * elpd.sum()), ks


def rmse(draws, data, truth: np.ndarray | None = None) -> float:
    """Root mean squared error of the fitted Poisson means.

    The fitted mean is the posterior mean of exp(psi_i). The target is the
    observed counts by default, or a known truth vector when supplied.
    """
    mu_hat = np.exp(draws.psi).mean(axis=0)
    target = np.asarray(data.y, dtype=np.float64) if truth is None else np.asarray(truth)
    return float(np.sqrt(np.mean((target - mu_hat) ** 2)))


def criteria_for_fit(model: str, draws, data, truth=None) -> CriteriaTable:
    """All criteria for one fitted model, as a comparison-table row."""
    dbar, pd_eff, dic = deviance_stats(draws, data)
    _, _, w = waic(draws.pointwise)
    loo, ks = looic(draws.pointwise)
    return CriteriaTable(
        model=model, Dbar=dbar, pD=pd_eff, DIC=dic, WAIC=w, LOOIC=loo,
        RMSE=rmse(draws, data, truth=truth),
        pareto_k_warnings=int(np.sum(ks > PARETO_K_WARN)),
    )


def compare(tables: list[CriteriaTable]) -> str:
    """Aligned text comparison; the lowest value per column is starred."""
    if not tables:
        raise ValueError("compare needs at least one table")
    mark = len(tables) > 1
    mins = {c: min(getattr(t, c) for t in tables) for c in _COLUMNS}
    name_w = max(len("Model"), max(len(t.model) for t in tables))
    header = f"{'Model':<{name_w}}  " + "  ".join(f"{c:>10}" for c in _COLUMNS)
    lines = [header, "-" * len(header)]
    for t in tables:
        cells = []
        for c in _COLUMNS:
            v = getattr(t, c)
            cell = f"{v:.2f}"
            if mark and v == mins[c]:
                cell += "*"
            cells.append(f"{cell:>10}")
        lines.append(f"{t.model:<{name_w}}  " + "  ".join(cells))
    if mark:
        lines.append("* lowest value in column")
    return "\n".join(lines) + "\n"
