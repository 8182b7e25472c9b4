"""Poisson log-linear hierarchy over the three spatial prior variants.

The posterior is expressed on a fully unconstrained parameter vector so a
gradient-based sampler can run without boundary handling. Block layout
(fixed, in this order):

    alpha                 scalar intercept
    beta                  k regression coefficients
    dep_u                 logit of the dependence parameter (gamma or
                          varsigma) over validity-interval /\ (0, 1)
    log_sigma             log of sigma_theta (edge variants) or tau (CAR)
    log_sigma_eta         renege_sk only
    log_u                 renege_sk only (u = log U, U half-normal)
    eps / theta           p edge innovations (edge variants) or the n node
                          field directly (CAR)
    eta_raw / w           renege_sk only: p raw skewness coefficients, or
                          k_low weights in low-rank mode

The linear predictor is psi_i = alpha + X_i' beta + log E_i + theta_i, with
theta = C(-b*eta + eta*U + eps) for renege_sk and theta = C eps for renege.
Log-determinants of the precision kernels use the cached eigenvalues of the
normalized adjacency, so no per-iteration factorization is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln

from .graph import ArealGraph, LineGraphStructure, build_incidence, spectral_decompose
from .priors import B_CONST, build_lowrank_basis

__all__ = [
    "Dataset",
    "ModelSpec",
    "ModelCache",
    "load_dataset",
    "log_posterior",
    "grad_log_posterior",
    "pointwise_loglik",
]

VARIANTS = ("car", "renege", "renege_sk")

LOG_2PI = float(np.log(2.0 * np.pi))
# log density constant of a half-normal(0,1): log 2 - 0.5 log(2 pi)
_HN_CONST = float(np.log(2.0) - 0.5 * LOG_2PI)


@dataclass(frozen=True)
class Dataset:
    """Observed counts y, positive offsets E, and an n x k covariate matrix."""

    y: np.ndarray
    expected: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int64)
        e = np.asarray(self.expected, dtype=np.float64)
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(len(y), -1) if X.size else X.reshape(len(y), 0)
        if y.ndim != 1 or e.shape != y.shape or X.shape[0] != y.size:
            raise ValueError("y, expected, X dimensions disagree")
        if np.any(y < 0):
            raise ValueError("counts must be nonnegative")
        if np.any(e <= 0):
            raise ValueError("expected counts must be positive")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "expected", e)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def k(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ModelSpec:
    variant: str = "renege"
    a_tau: float = 1.0
    b_tau: float = 1.0
    alpha_var: float = 10.0
    beta_sd: float = 5.0
    skew_rank: int | None = None  # None = full-rank eta_raw

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if min(self.a_tau, self.b_tau, self.alpha_var, self.beta_sd) <= 0:
            raise ValueError("hyperparameters must be positive")


class ModelCache:
    """Precomputed structures shared by all posterior evaluations.

    Read-only after construction; safe to share across concurrent chains.
    """

    def __init__(self, data: Dataset, g: ArealGraph, lg: LineGraphStructure | None,
                 spec: ModelSpec):
        if data.n != g.n:
            raise ValueError(f"dataset has {data.n} rows but graph has {g.n} regions")
        self.data = data
        self.g = g
        self.lg = lg
        self.spec = spec
        self.n = g.n
        self.k = data.k
        self.log_e = np.log(data.expected)
        self.lgamma_y1 = gammaln(data.y + 1.0)
        self.yf = data.y.astype(np.float64)

        if spec.variant == "car":
            cache = spectral_decompose(g.M, g.A)
            self.lambdas = cache.lambdas
            self.logdet_D = float(np.sum(np.log(np.diag(g.M))))
            self.W = g.A
            self.d_diag = np.diag(g.M).copy()
            self.latent_dim = g.n
        else:
            if lg is None:
                raise ValueError("edge variants need a line graph")
            if lg.p != g.p:
                raise ValueError("line graph inconsistent with graph")
            cache = lg.spectral
            self.lambdas = cache.lambdas
            self.logdet_D = float(np.sum(np.log(np.diag(lg.M_e))))
            self.W = lg.A_e
            self.d_diag = np.diag(lg.M_e).copy()
            self.latent_dim = g.p
        lo = max(cache.bounds[0], 0.0)
        hi = min(cache.bounds[1], 1.0)
        if not lo < hi:
            raise ValueError(f"empty dependence interval {cache.bounds} /\\ (0,1)")
        self.dep_lo, self.dep_hi = lo, hi

        self.C = build_incidence(g).dense if spec.variant != "car" else None
        self.basis = None
        self.skew_dim = 0
        if spec.variant == "renege_sk":
            if spec.skew_rank is None:
                self.skew_dim = g.p
            else:
                self.basis = build_lowrank_basis(lg, spec.skew_rank)
                self.skew_dim = spec.skew_rank

        # block layout
        names: list[str] = ["alpha"]
        names += [f"beta.{j + 1}" for j in range(self.k)]
        names += ["gamma", "sigma_theta"]
        if spec.variant == "renege_sk":
            names += ["sigma_eta", "u"]
        if spec.variant == "car":
            names += [f"theta.{j + 1}" for j in range(g.n)]
        else:
            names += [f"eps.{j + 1}" for j in range(g.p)]
        if spec.variant == "renege_sk":
            tag = "eta_raw" if self.basis is None else "w"
            names += [f"{tag}.{j + 1}" for j in range(self.skew_dim)]
        self.param_names = names

        i = 0
        self.i_alpha = i; i += 1
        self.sl_beta = slice(i, i + self.k); i += self.k
        self.i_dep = i; i += 1
        self.i_lsig = i; i += 1
        if spec.variant == "renege_sk":
            self.i_lseta = i; i += 1
            self.i_lu = i; i += 1
        self.sl_latent = slice(i, i + self.latent_dim); i += self.latent_dim
        if spec.variant == "renege_sk":
            self.sl_skew = slice(i, i + self.skew_dim); i += self.skew_dim
        self.dim = i

    # --- transforms -------------------------------------------------------

    def constrain(self, x: np.ndarray) -> dict:
        """Map an unconstrained vector to named natural-scale blocks."""
        x = np.asarray(x, dtype=np.float64)
        s = expit(x[self.i_dep])
        out = {
            "alpha": float(x[self.i_alpha]),
            "beta": x[self.sl_beta].copy(),
            "gamma": float(self.dep_lo + (self.dep_hi - self.dep_lo) * s),
            "sigma_theta": float(np.exp(x[self.i_lsig])),
        }
        if self.spec.variant == "renege_sk":
            out["sigma_eta"] = float(np.exp(x[self.i_lseta]))
            out["u"] = float(np.exp(x[self.i_lu]))
        key = "theta" if self.spec.variant == "car" else "eps"
        out[key] = x[self.sl_latent].copy()
        if self.spec.variant == "renege_sk":
            out["eta_raw" if self.basis is None else "w"] = x[self.sl_skew].copy()
        return out

    def unconstrain(self, params: dict) -> np.ndarray:
        x = np.zeros(self.dim)
        x[self.i_alpha] = params["alpha"]
        x[self.sl_beta] = params.get("beta", np.zeros(self.k))
        frac = (params["gamma"] - self.dep_lo) / (self.dep_hi - self.dep_lo)
        if not 0.0 < frac < 1.0:
            raise ValueError(f"gamma={params['gamma']} outside ({self.dep_lo}, {self.dep_hi})")
        x[self.i_dep] = np.log(frac) - np.log1p(-frac)
        x[self.i_lsig] = np.log(params["sigma_theta"])
        if self.spec.variant == "renege_sk":
            x[self.i_lseta] = np.log(params["sigma_eta"])
            x[self.i_lu] = np.log(params["u"])
        key = "theta" if self.spec.variant == "car" else "eps"
        x[self.sl_latent] = params[key]
        if self.spec.variant == "renege_sk":
            x[self.sl_skew] = params["eta_raw" if self.basis is None else "w"]
        return x

    def constrained_row(self, x: np.ndarray) -> np.ndarray:
        """Natural-scale values aligned with ``param_names``."""
        c = self.constrain(x)
        row = [c["alpha"], *c["beta"], c["gamma"], c["sigma_theta"]]
        if self.spec.variant == "renege_sk":
            row += [c["sigma_eta"], c["u"]]
        row += list(c["theta"] if self.spec.variant == "car" else c["eps"])
        if self.spec.variant == "renege_sk":
            row += list(c["eta_raw" if self.basis is None else "w"])
        return np.asarray(row)

    # --- internals --------------------------------------------------------

    def _eta(self, x: np.ndarray) -> np.ndarray:
        seta = np.exp(x[self.i_lseta])
        raw = x[self.sl_skew]
        return seta * raw if self.basis is None else seta * (self.basis @ raw)

    def _theta(self, x: np.ndarray) -> np.ndarray:
        if self.spec.variant == "car":
            return x[self.sl_latent]
        eps = x[self.sl_latent]
        if self.spec.variant == "renege":
            return self.C @ eps
        u = np.exp(x[self.i_lu])
        return self.C @ (self._eta(x) * (u - B_CONST) + eps)

    def psi(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        p = x[self.i_alpha] + self.log_e + self._theta(x)
        if self.k:
            p = p + self.data.X @ x[self.sl_beta]
        return p

    def _dep(self, x: np.ndarray) -> float:
        return float(self.dep_lo + (self.dep_hi - self.dep_lo) * expit(x[self.i_dep]))

    # --- posterior --------------------------------------------------------

    def pointwise_loglik(self, x: np.ndarray) -> np.ndarray:
        psi = self.psi(x)
        return self.yf * psi - np.exp(psi) - self.lgamma_y1

    def log_posterior(self, x: np.ndarray) -> float:
        try:
            return self._log_posterior(x)
        except OverflowError:
            # squaring an astronomically large scalar from a divergent
            # trajectory: treat the point as having zero posterior mass
            return -np.inf

    def _log_posterior(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        spec = self.spec
        psi = self.psi(x)
        lp = float(np.sum(self.yf * psi - np.exp(psi) - self.lgamma_y1))

        # latent Gaussian field: 0.5 logdet(D - g W) - q log sigma - quad/(2 sigma^2)
        dep = self._dep(x)
        lsig = float(x[self.i_lsig])
        sig2 = np.exp(2.0 * lsig)
        z = x[self.sl_latent]
        quad = float(z @ (self.d_diag * z) - dep * (z @ (self.W @ z)))
        logdet = self.logdet_D + float(np.sum(np.log1p(-dep * self.lambdas)))
        q = self.latent_dim
        lp += 0.5 * logdet - q * lsig - 0.5 * quad / sig2 - 0.5 * q * LOG_2PI

        # dependence parameter: uniform prior + logit jacobian (the interval
        # widths cancel, leaving log sig(gu) + log(1 - sig(gu)))
        gu = float(x[self.i_dep])
        lp += -np.logaddexp(0.0, -gu) - np.logaddexp(0.0, gu)

        # precision sigma^{-2} ~ Gamma(a, b) (shape/rate), plus log-scale jacobian
        a, b = spec.a_tau, spec.b_tau
        lp += (a * np.log(b) - gammaln(a) - 2.0 * (a - 1.0) * lsig
               - b * np.exp(-2.0 * lsig) + np.log(2.0) - 2.0 * lsig)

        alpha = float(x[self.i_alpha])
        lp += -0.5 * alpha ** 2 / spec.alpha_var - 0.5 * (LOG_2PI + np.log(spec.alpha_var))
        if self.k:
            beta = x[self.sl_beta]
            lp += (-0.5 * float(beta @ beta) / spec.beta_sd ** 2
                   - self.k * (0.5 * LOG_2PI + np.log(spec.beta_sd)))

        if spec.variant == "renege_sk":
            lu = float(x[self.i_lu])
            u = np.exp(lu)
            lp += _HN_CONST - 0.5 * u * u + lu  # half-normal U + jacobian
            lseta = float(x[self.i_lseta])
            seta = np.exp(lseta)
            lp += _HN_CONST - 0.5 * seta * seta + lseta  # half-normal sigma_eta
            raw = x[self.sl_skew]
            lp += -0.5 * float(raw @ raw) - 0.5 * self.skew_dim * LOG_2PI
        return lp

    def grad_log_posterior(self, x: np.ndarray) -> np.ndarray:
        try:
            return self._grad_log_posterior(x)
        except OverflowError:
            return np.full(self.dim, np.nan)

    def _grad_log_posterior(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        spec = self.spec
        grad = np.zeros(self.dim)
        psi = self.psi(x)
        r = self.yf - np.exp(psi)

        grad[self.i_alpha] = float(np.sum(r)) - x[self.i_alpha] / spec.alpha_var
        if self.k:
            grad[self.sl_beta] = self.data.X.T @ r - x[self.sl_beta] / spec.beta_sd ** 2

        dep = self._dep(x)
        gu = float(x[self.i_dep])
        sgu = expit(gu)
        ddep_dgu = (self.dep_hi - self.dep_lo) * sgu * (1.0 - sgu)
        lsig = float(x[self.i_lsig])
        sig2 = np.exp(2.0 * lsig)
        z = x[self.sl_latent]
        Wz = self.W @ z
        Kz = self.d_diag * z - dep * Wz
        quad = float(z @ Kz)
        q = self.latent_dim

        # latent block: likelihood pullback + Gaussian prior
        if spec.variant == "car":
            t = r
        else:
            t = self.C.T @ r
        grad[self.sl_latent] = t - Kz / sig2

        # dependence: -0.5 sum lam/(1-dep lam) + z'Wz/(2 sig2), then chain + jacobian
        dlogdet = -float(np.sum(self.lambdas / (1.0 - dep * self.lambdas)))
        ddep = 0.5 * dlogdet + 0.5 * float(z @ Wz) / sig2
        grad[self.i_dep] = ddep * ddep_dgu + (1.0 - 2.0 * sgu)

        a, b = spec.a_tau, spec.b_tau
        grad[self.i_lsig] = (-q + quad / sig2
                             - 2.0 * (a - 1.0) + 2.0 * b * np.exp(-2.0 * lsig) - 2.0)

        if spec.variant == "renege_sk":
            lu = float(x[self.i_lu])
            u = np.exp(lu)
            eta = self._eta(x)
            seta = np.exp(x[self.i_lseta])
            raw = x[self.sl_skew]
            g_eta = (u - B_CONST) * t  # dlik/deta
            grad[self.i_lu] = u * float(eta @ t) - u * u + 1.0
            grad[self.i_lseta] = float(eta @ g_eta) - seta * seta + 1.0
            if self.basis is None:
                grad[self.sl_skew] = seta * g_eta - raw
            else:
                grad[self.sl_skew] = seta * (self.basis.T @ g_eta) - raw
        return grad


def load_dataset(path, n: int | None = None) -> Dataset:
    """Read a data CSV with header ``id,y,expected[,x1,...,xk]``."""
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["id", "y", "expected"]:
            raise ValueError(f"{path}: expected header 'id,y,expected[,x1,...]'")
        k = len(header) - 3
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3 + k:
                raise ValueError(f"{path}:{lineno}: expected {3 + k} columns")
            rows[int(row[0])] = (int(row[1]), float(row[2]),
                                 [float(v) for v in row[3:]])
    n_eff = n if n is not None else 1 + max(rows)
    if sorted(rows) != list(range(n_eff)):
        raise ValueError(f"{path}: ids must be exactly 0..{n_eff - 1}")
    y = np.array([rows[i][0] for i in range(n_eff)])
    e = np.array([rows[i][1] for i in range(n_eff)])
    X = np.array([rows[i][2] for i in range(n_eff)]).reshape(n_eff, k)
    return Dataset(y=y, expected=e, X=X)


# Thin functional wrappers matching the operation contracts. They rebuild the
# cache on each call; long-running code should hold a ModelCache directly.

def log_posterior(theta_u, data, g, lg, spec) -> float:
    return ModelCache(data, g, lg, spec).log_posterior(theta_u)


def grad_log_posterior(theta_u, data, g, lg, spec) -> np.ndarray:
    return ModelCache(data, g, lg, spec).grad_log_posterior(theta_u)


def pointwise_loglik(theta_u, data, g, lg, spec) -> np.ndarray:
    return ModelCache(data, g, lg, spec).pointwise_loglik(theta_u)
