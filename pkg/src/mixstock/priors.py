"""Priors on the mixture proportions and the remaining model parameters.

Three choices for ``m``:

``dirichlet-dirichlet``
    ``m ~ Dir(((1 - rho) / rho) phi)``, ``phi ~ Dir(eta)``,
    ``log eta = alpha_0 + alpha . G_i``, ``rho ~ U(0, 1)``.
``dirichlet-lognormal``
    ``m ~ Dir(psi)``, ``log psi_i ~ N(alpha_0 + alpha . G_i, 1 / tau)``,
    ``tau ~ Gamma(shape, rate)``.
``uniform``
    ``m ~ Dir(1, ..., 1)``.

Every regression coefficient, intercept included, gets a ``N(0, alpha_var)``
prior. ``omega`` is uniform on (0, 1) and each allele-frequency row is
``Dir(1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, softmax

from .errors import ConfigError, DataError

PRIOR_KINDS = ("dirichlet-dirichlet", "dirichlet-lognormal", "uniform")
LINEAR_PREDICTOR_CAP = 700.0
_LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class PriorSpec:
    kind: str = "dirichlet-dirichlet"
    alpha_var: float = 10.0
    tau_shape: float = 1.0
    tau_rate: float = 1.0

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ConfigError(f"unknown prior {self.kind!r}; choose from {', '.join(PRIOR_KINDS)}")
        for name in ("alpha_var", "tau_shape", "tau_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def uses_covariates(self):
        return self.kind != "uniform"


@dataclass(frozen=True)
class CovariateMatrix:
    """Per-source covariates, ``raw`` of shape ``(p, I)``.

    ``standardized`` z-scores each covariate across sources (sample SD). Input
    that already has mean ~0 and SD ~1 (within ``tol``) is taken as-is, so
    published normalized tables are not re-scaled.
    """

    raw: np.ndarray
    names: tuple = ()
    tol: float = 1e-3

    def __post_init__(self):
        raw = np.atleast_2d(np.asarray(self.raw, dtype=float))
        if raw.size and not np.all(np.isfinite(raw)):
            raise DataError("covariates must be finite")
        names = tuple(self.names) or tuple(f"x{r + 1}" for r in range(raw.shape[0]))
        if len(names) != raw.shape[0]:
            raise DataError(f"{len(names)} covariate names for {raw.shape[0]} rows")
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "standardized", self._standardize(raw))

    def _standardize(self, raw):
        if raw.shape[0] == 0 or raw.shape[1] < 2:
            return raw.copy()
        mean = raw.mean(axis=1, keepdims=True)
        sd = raw.std(axis=1, ddof=1, keepdims=True)
        if np.any(sd == 0):
            raise DataError("a covariate is constant across sources")
        if np.all(np.abs(mean) < self.tol) and np.all(np.abs(sd - 1) < self.tol):
            return raw.copy()
        return (raw - mean) / sd

    @property
    def n_covariates(self):
        return self.raw.shape[0]

    @property
    def n_sources(self):
        return self.raw.shape[1]

    @classmethod
    def empty(cls, n_sources):
        return cls(np.zeros((0, n_sources)))


def dirichlet_logpdf(x, conc):
    """Dirichlet log-density with normalizing constant; ``-inf`` off the open simplex."""
    x = np.asarray(x, dtype=float)
    conc = np.asarray(conc, dtype=float)
    if np.any(conc <= 0) or not np.all(np.isfinite(conc)):
        raise ValueError("Dirichlet parameters must be positive and finite")
    if np.any(x <= 0) or abs(x.sum() - 1.0) > 1e-9:
        return -np.inf
    return float(gammaln(conc.sum()) - gammaln(conc).sum() + np.sum((conc - 1) * np.log(x)))


def dirdir_concentration(rho, phi):
    return (1.0 - rho) / rho * np.asarray(phi, dtype=float)


def log_prior_m_dirdir(m, rho, phi):
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    return dirichlet_logpdf(m, dirdir_concentration(rho, phi))


def linear_predictor(alpha, G):
    """``alpha_0 + sum_r alpha_r G_ri`` on the standardized covariates.

    ``alpha`` carries the intercept first, so it has ``p + 1`` entries.
    """
    alpha = np.asarray(alpha, dtype=float)
    S = G.standardized if isinstance(G, CovariateMatrix) else np.atleast_2d(G)
    if alpha.shape != (S.shape[0] + 1,):
        raise ValueError(f"alpha needs {S.shape[0] + 1} entries (intercept first), got {alpha.shape}")
    return alpha[0] + alpha[1:] @ S


def eta_from_covariates(alpha, G):
    lin = linear_predictor(alpha, G)
    if np.any(np.abs(lin) > LINEAR_PREDICTOR_CAP):
        raise OverflowError("linear predictor exceeds the exp() safe range")
    return np.exp(lin)


def log_prior_phi(phi, eta):
    return dirichlet_logpdf(phi, eta)


def log_prior_m_dirlognormal(m, psi):
    return dirichlet_logpdf(m, psi)


def log_prior_psi(psi, alpha, tau, G):
    """Lognormal log-density of ``psi`` (Jacobian ``-log psi`` included)."""
    psi = np.asarray(psi, dtype=float)
    if np.any(psi <= 0) or not tau > 0:
        return -np.inf
    mu = linear_predictor(alpha, G)
    u = np.log(psi)
    return float(np.sum(0.5 * np.log(tau) - 0.5 * _LOG_2PI - 0.5 * tau * (u - mu) ** 2 - u))


def expected_m_given_alpha(alpha, G):
    """Prior mean of ``m`` given the coefficients: a softmax of the linear predictor.

    ``alpha`` may omit the intercept (``p`` entries); it cancels anyway.
    """
    alpha = np.asarray(alpha, dtype=float)
    S = G.standardized if isinstance(G, CovariateMatrix) else np.atleast_2d(G)
    if alpha.shape == (S.shape[0],):
        alpha = np.concatenate([[0.0], alpha])
    return softmax(linear_predictor(alpha, S))


def log_prior_alpha(alpha, var=10.0):
    alpha = np.asarray(alpha, dtype=float)
    return float(np.sum(-0.5 * np.log(2 * np.pi * var) - alpha**2 / (2 * var)))


def log_prior_tau(tau, shape=1.0, rate=1.0):
    if not tau > 0:
        return -np.inf
    return float(shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(tau) - rate * tau)


def log_prior_scalars(omega, rho=None, tau=None, alpha=None, prior=PriorSpec()):
    """Prior log-density of the scalar and coefficient parameters.

    ``omega`` and ``rho`` are uniform on (0, 1) and contribute 0 inside it.
    """
    if not 0 < omega < 1:
        return -np.inf
    total = 0.0
    if rho is not None and not 0 < rho < 1:
        return -np.inf
    if tau is not None:
        total += log_prior_tau(tau, prior.tau_shape, prior.tau_rate)
    if alpha is not None:
        total += log_prior_alpha(alpha, prior.alpha_var)
    return total


def log_prior_frequencies(P, n_alleles):
    """Symmetric Dirichlet(1) on every (locus, source) frequency row."""
    P = np.asarray(P)
    real = np.arange(P.shape[2])[None, None, :] < np.asarray(n_alleles)[:, None, None]
    if np.any(P[np.broadcast_to(real, P.shape)] <= 0):
        return -np.inf
    return float(P.shape[1] * np.sum(gammaln(np.asarray(n_alleles, dtype=float))))


def log_prior(state, prior, covariates=None):
    """Total prior log-density of a :class:`~mixstock.state.ModelState`."""
    total = log_prior_frequencies(state.P, state.n_alleles)
    I = state.m.shape[0]
    if prior.kind == "uniform":
        total += dirichlet_logpdf(state.m, np.ones(I))
        total += log_prior_scalars(state.omega, prior=prior)
        return total
    if covariates is None:
        raise DataError(f"prior {prior.kind!r} needs covariates")
    if prior.kind == "dirichlet-dirichlet":
        if not 0 < state.rho < 1:
            return -np.inf
        total += log_prior_m_dirdir(state.m, state.rho, state.phi)
        total += log_prior_phi(state.phi, eta_from_covariates(state.alpha, covariates))
        total += log_prior_scalars(state.omega, rho=state.rho, alpha=state.alpha, prior=prior)
    else:
        if np.any(state.psi <= 0):
            return -np.inf
        total += log_prior_m_dirlognormal(state.m, state.psi)
        total += log_prior_psi(state.psi, state.alpha, state.tau, covariates)
        total += log_prior_scalars(state.omega, tau=state.tau, alpha=state.alpha, prior=prior)
    return float(total)


def sample_m_dirdir(rho, phi, size, rng):
    """Draws of ``m`` from ``Dir(((1 - rho) / rho) phi)``."""
    return rng.dirichlet(dirdir_concentration(rho, phi), size=size)
