"""Metropolis-within-Gibbs sampler for the mixed-stock posterior.

Each iteration sweeps, in order: every (locus, source) allele-frequency
row, ``m``, ``omega``, then the prior block (``phi``, ``rho``, ``alpha`` for
Dirichlet-Dirichlet; ``psi``, ``tau``, ``alpha`` for Dirichlet-lognormal).
Simplex-valued blocks move in logit space with the transform's Jacobian in
the target; ``omega`` and ``rho`` use a one-dimensional logit walk; positive
blocks (``psi``, ``tau``) walk on the log scale.

Step sizes adapt during burn-in only and are frozen afterwards.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import multivariate_normal, norm

from . import _kernels
from .errors import ConfigError, DataError, InitializationError
from .genetics import ColonyCache, combined_log_weights, source_loglik
from .priors import (
    CovariateMatrix,
    PriorSpec,
    dirdir_concentration,
    dirichlet_logpdf,
    eta_from_covariates,
    log_prior,
    log_prior_alpha,
    log_prior_psi,
    log_prior_tau,
)
from .state import ModelState
from .transforms import (
    inv_logit,
    log_jacobian_det,
    log_unit_jacobian,
    logit,
    logit_to_simplex,
    simplex_to_logit,
)

log = logging.getLogger(__name__)

BLOCKS = ("P", "m", "omega", "phi", "rho", "alpha", "psi", "tau")
SIMPLEX_BLOCKS = ("P", "m", "phi")
PROPOSAL_STYLES = ("random-walk", "independence")
DEFAULT_STEPS = {
    "P": 0.8, "m": 0.3, "omega": 1.0, "phi": 0.3, "rho": 0.5,
    "alpha": 0.5, "psi": 0.3, "tau": 0.5,
}
TARGET_ACCEPT = 0.3
_MIN_LOG_STEP, _MAX_LOG_STEP = np.log(1e-4), np.log(50.0)


@dataclass
class ChainConfig:
    """Run length, thinning, seed and proposal tuning for one chain.

    ``iterations`` counts all sweeps including the ``burnin`` ones. The
    retained draws are iterations ``burnin + thin``, ``burnin + 2 thin``, ...
    """

    iterations: int = 30000
    burnin: int = 5000
    thin: int = 5
    seed: int = 0
    step_sizes: dict = field(default_factory=dict)
    proposal: dict = field(default_factory=dict)
    adapt: bool = True
    adapt_window: int = 50

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if not 0 <= self.burnin < self.iterations:
            raise ConfigError("burn-in must be non-negative and smaller than iterations")
        if self.thin < 1:
            raise ConfigError("thinning interval must be at least 1")
        if self.adapt_window < 1:
            raise ConfigError("adapt_window must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for name, step in self.step_sizes.items():
            if name not in BLOCKS:
                raise ConfigError(f"unknown block {name!r} in step_sizes")
            if not (np.isfinite(step) and step > 0):
                raise ConfigError(f"step size for {name} must be positive")
        for name, style in self.proposal.items():
            if name not in SIMPLEX_BLOCKS:
                raise ConfigError(f"proposal style can only be set for {SIMPLEX_BLOCKS}, not {name!r}")
            if style not in PROPOSAL_STYLES:
                raise ConfigError(f"unknown proposal style {style!r}")

    @property
    def n_draws(self):
        return (self.iterations - self.burnin) // self.thin

    def step(self, block):
        return float(self.step_sizes.get(block, DEFAULT_STEPS[block]))

    def style(self, block):
        return self.proposal.get(block, "random-walk")

    def to_dict(self):
        return asdict(self)


@dataclass
class ChainOutput:
    """Retained draws of one chain.

    ``draws`` has one row per retained iteration and one column per entry of
    ``names``; ``loglik`` is the colony plus source log-likelihood of each
    draw.
    """

    names: list
    draws: np.ndarray
    iterations: np.ndarray
    loglik: np.ndarray
    acceptance: dict
    prior: PriorSpec
    config: ChainConfig
    n_alleles: tuple
    n_sources: int
    n_covariates: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.draws.shape[0]

    def column(self, name):
        return self.draws[:, self.names.index(name)]

    def has(self, block):
        return any(n == block or n.startswith(block + "[") for n in self.names)

    def block(self, name):
        """Draws of one parameter block.

        ``P`` comes back zero-padded with shape ``(n, L, I, Amax)``; vector
        blocks as ``(n, size)``; scalars as ``(n,)``.
        """
        n = len(self)
        if name == "P":
            L, I, amax = len(self.n_alleles), self.n_sources, max(self.n_alleles)
            out = np.zeros((n, L, I, amax))
            pos = next(j for j, c in enumerate(self.names) if c.startswith("P["))
            for l, A in enumerate(self.n_alleles):
                for i in range(I):
                    out[:, l, i, :A] = self.draws[:, pos:pos + A]
                    pos += A
            return out
        if name in ("omega", "rho", "tau"):
            return self.column(name)
        cols = [j for j, c in enumerate(self.names) if c.startswith(name + "[")]
        if not cols:
            raise KeyError(name)
        return self.draws[:, cols]

    def state(self, index):
        kw = {"P": self.block("P")[index], "m": self.block("m")[index],
              "omega": self.column("omega")[index], "n_alleles": self.n_alleles}
        if self.has("phi"):
            kw.update(rho=self.column("rho")[index], phi=self.block("phi")[index])
        if self.has("psi"):
            kw.update(psi=self.block("psi")[index], tau=self.column("tau")[index])
        if self.has("alpha"):
            kw.update(alpha=self.block("alpha")[index])
        return ModelState(**kw)


def parameter_names(prior, n_sources, n_alleles, n_covariates):
    I = n_sources
    names = [f"m[{i + 1}]" for i in range(I)] + ["omega"]
    if prior.kind == "dirichlet-dirichlet":
        names += ["rho"] + [f"phi[{i + 1}]" for i in range(I)]
    if prior.kind == "dirichlet-lognormal":
        names += ["tau"] + [f"psi[{i + 1}]" for i in range(I)]
    if prior.uses_covariates:
        names += [f"alpha[{r}]" for r in range(n_covariates + 1)]
    for l, A in enumerate(n_alleles):
        for i in range(I):
            names += [f"P[{l + 1},{i + 1},{a + 1}]" for a in range(A)]
    return names


def flatten_state(state, prior, n_alleles):
    parts = [state.m, [state.omega]]
    if prior.kind == "dirichlet-dirichlet":
        parts += [[state.rho], state.phi]
    if prior.kind == "dirichlet-lognormal":
        parts += [[state.tau], state.psi]
    if prior.uses_covariates:
        parts += [state.alpha]
    for l, A in enumerate(n_alleles):
        parts.append(state.P[l, :, :A].ravel())
    return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])


# ---------------------------------------------------------------------------
# Generic Metropolis-Hastings moves
# ---------------------------------------------------------------------------

def _accept(log_ratio, u):
    if not np.isfinite(log_ratio) and log_ratio != np.inf:
        return False
    return log_ratio >= 0 or np.log(u) < log_ratio


def _mode_in_logit_space(log_target, p):
    """Maximizer of the transformed block target, started from the origin."""
    def neg(xi):
        v = log_target(logit_to_simplex(xi)) + log_jacobian_det(xi)
        return 1e300 if not np.isfinite(v) else -v

    res = optimize.minimize(neg, np.zeros(p), method="BFGS")
    return res.x


def row_proposal_shape(counts):
    """Per-row proposal shape from the source-count posterior ``Dir(1 + N)``.

    In logit coordinates that posterior has approximate covariance
    ``diag(1 / a_k) + 11' / a_last`` with ``a = 1 + N``; entries ``[:A-1]``
    hold ``1 / sqrt(a_k)`` and entry ``A - 1`` holds ``1 / sqrt(a_last)``.
    """
    N = counts.counts.astype(float)
    out = np.zeros(N.shape)
    for l, A in enumerate(counts.n_alleles):
        out[l, :, :A] = 1.0 / np.sqrt(1.0 + N[l, :, :A])
    return out


def _shaped(z, shape):
    # z has p + 1 standard normals; the last one is shared by every coordinate
    if shape is None:
        return z[:-1]
    return shape[:-1] * z[:-1] + shape[-1] * z[-1]


def _shaped_logpdf(x, mean, step, shape):
    p = x.size
    if shape is None:
        return norm.logpdf(x, mean, step).sum()
    cov = step**2 * (np.diag(shape[:-1] ** 2) + shape[-1] ** 2 * np.ones((p, p)))
    return multivariate_normal.logpdf(x, mean, cov)


def mh_update_simplex_block(theta, log_target, step, rng, style="random-walk",
                            current_logp=None, shape=None):
    """One Metropolis-Hastings move of a simplex-valued block.

    The move is made on ``xi = simplex_to_logit(theta)`` against the target
    ``log_target(theta) + log_jacobian_det(xi)``. ``style="random-walk"``
    proposes ``xi + step * e``; ``"independence"`` proposes ``xi_hat + step * e``
    centred at the maximizer of the transformed target and includes the
    proposal density ratio. ``e`` is standard Normal, or when ``shape`` (length
    p + 1) is given, Normal with covariance
    ``diag(shape[:-1]**2) + shape[-1]**2 11'``.

    Returns ``(theta_new, accepted, logp_new)`` with ``logp_new`` the
    untransformed target value at the returned point.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.size - 1
    if p == 0:
        return theta, True, log_target(theta) if current_logp is None else current_logp
    if current_logp is None:
        current_logp = log_target(theta)
    if not np.isfinite(current_logp):
        raise ValueError("log target is not finite at the current point")
    xi = simplex_to_logit(theta)
    z = rng.standard_normal(p + 1)
    u = rng.random()
    if style == "random-walk":
        xi_new = xi + step * _shaped(z, shape)
        log_q_ratio = 0.0
    elif style == "independence":
        xi_hat = _mode_in_logit_space(log_target, p)
        xi_new = xi_hat + step * _shaped(z, shape)
        log_q_ratio = (_shaped_logpdf(xi, xi_hat, step, shape)
                       - _shaped_logpdf(xi_new, xi_hat, step, shape))
    else:
        raise ValueError(f"unknown proposal style {style!r}")
    if not np.all(np.isfinite(xi_new)):
        return theta, False, current_logp
    theta_new = logit_to_simplex(xi_new)
    if np.any(theta_new <= 0):
        return theta, False, current_logp
    new_logp = log_target(theta_new)
    log_ratio = (new_logp + log_jacobian_det(xi_new) - current_logp - log_jacobian_det(xi)
                 + log_q_ratio)
    if _accept(log_ratio, u):
        return theta_new, True, new_logp
    return theta, False, current_logp


def mh_update_unit_scalar(x, log_target, step, rng, current_logp=None):
    """Random-walk move of a parameter on (0, 1) through its logit."""
    if current_logp is None:
        current_logp = log_target(x)
    y = logit(x)
    z = rng.standard_normal()
    u = rng.random()
    y_new = y + step * z
    x_new = float(inv_logit(y_new))
    if not 0 < x_new < 1:
        return x, False, current_logp
    new_logp = log_target(x_new)
    log_ratio = new_logp + log_unit_jacobian(y_new) - current_logp - log_unit_jacobian(y)
    if _accept(log_ratio, u):
        return x_new, True, new_logp
    return x, False, current_logp


def mh_update_real_block(x, log_target, step, rng, positive=False, current_logp=None):
    """Normal random-walk move of a real vector (or scalar).

    With ``positive=True`` the walk is on ``log x`` and the log-scale
    Jacobian ``sum(log x)`` enters the acceptance ratio.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if current_logp is None:
        current_logp = log_target(x[0] if scalar else x)
    z = rng.standard_normal(x.size)
    u = rng.random()
    if positive:
        y = np.log(x)
        y_new = y + step * z
        x_new = np.exp(y_new)
        log_jac = y_new.sum() - y.sum()
    else:
        x_new = x + step * z
        log_jac = 0.0
    if not np.all(np.isfinite(x_new)) or (positive and np.any(x_new <= 0)):
        return (x[0] if scalar else x), False, current_logp
    new_logp = log_target(x_new[0] if scalar else x_new)
    log_ratio = new_logp - current_logp + log_jac
    if _accept(log_ratio, u):
        return (float(x_new[0]) if scalar else x_new), True, new_logp
    return (float(x[0]) if scalar else x), False, current_logp


# ---------------------------------------------------------------------------
# Chain driver
# ---------------------------------------------------------------------------

def initial_state(counts, prior, n_sources, n_covariates):
    N = counts.counts.astype(float)
    n_alleles = counts.n_alleles
    real = np.arange(N.shape[2])[None, None, :] < np.asarray(n_alleles)[:, None, None]
    smoothed = np.where(real, N + 1.0, 0.0)
    P = smoothed / smoothed.sum(axis=2, keepdims=True)
    I = n_sources
    kw = {"P": P, "m": np.full(I, 1.0 / I), "omega": 0.5, "n_alleles": n_alleles}
    if prior.kind == "dirichlet-dirichlet":
        kw.update(rho=0.5, phi=np.full(I, 1.0 / I))
    if prior.kind == "dirichlet-lognormal":
        kw.update(psi=np.ones(I), tau=1.0)
    if prior.uses_covariates:
        kw.update(alpha=np.zeros(n_covariates + 1))
    return ModelState(**kw)


def data_fingerprint(genotypes, counts, covariates=None):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(genotypes.alleles).tobytes())
    h.update(json.dumps(list(genotypes.n_alleles)).encode())
    h.update(np.ascontiguousarray(counts.counts).tobytes())
    if covariates is not None and covariates.n_covariates:
        h.update(np.ascontiguousarray(covariates.standardized).tobytes())
    return h.hexdigest()


def _tuned(log_step, accept_rate, n_window):
    """Windowed Robbins-Monro step on the log step size."""
    gain = 2.0 / np.sqrt(n_window)
    return np.clip(log_step + gain * (accept_rate - TARGET_ACCEPT), _MIN_LOG_STEP, _MAX_LOG_STEP)


def _check_inputs(genotypes, counts, covariates, prior):
    if genotypes.n_loci != counts.n_loci:
        raise DataError(f"colony has {genotypes.n_loci} loci, sources have {counts.n_loci}")
    if tuple(genotypes.n_alleles) != tuple(counts.n_alleles):
        raise DataError("colony and source allele counts per locus differ")
    if prior.uses_covariates:
        if covariates is None:
            raise DataError(f"prior {prior.kind!r} needs a covariate matrix")
        if covariates.n_sources != counts.n_sources:
            raise DataError(f"covariates cover {covariates.n_sources} sources, data have {counts.n_sources}")


def run_chain(genotypes, counts, covariates, prior, config, init=None):
    """Run one chain and return its thinned post-burn-in draws.

    ``covariates`` may be ``None`` for the uniform prior.
    """
    if isinstance(prior, str):
        prior = PriorSpec(prior)
    config.validate()
    _check_inputs(genotypes, counts, covariates, prior)
    I = counts.n_sources
    n_alleles = counts.n_alleles
    p = covariates.n_covariates if (covariates is not None and prior.uses_covariates) else 0
    G = covariates if prior.uses_covariates else None
    state = (init.copy() if init is not None else initial_state(counts, prior, I, p))

    rng = np.random.Generator(np.random.PCG64(int(config.seed)))
    cache = ColonyCache(genotypes, state.P, state.omega, state.m)
    N = counts.counts
    N_f = np.ascontiguousarray(N, dtype=np.float64)
    P = np.ascontiguousarray(state.P)
    L, amax = P.shape[0], P.shape[2]
    n_alleles_arr = np.asarray(n_alleles, dtype=np.int64)

    src0 = source_loglik(counts, P)
    lp0 = log_prior(state, prior, G)
    if not np.isfinite(cache.total + src0 + lp0):
        raise InitializationError(
            f"posterior is not finite at the initial state "
            f"(colony {cache.total}, source {src0}, prior {lp0})"
        )

    blocks = ["m", "omega"]
    if prior.kind == "dirichlet-dirichlet":
        blocks += ["phi", "rho", "alpha"]
    elif prior.kind == "dirichlet-lognormal":
        blocks += ["psi", "tau", "alpha"]
    log_steps = {b: np.log(config.step(b)) for b in blocks}
    P_log_steps = np.full((L, I), np.log(config.step("P")))
    window_acc = dict.fromkeys(blocks, 0.0)
    P_window_acc = np.zeros((L, I))
    kept_acc = dict.fromkeys(blocks, 0)
    P_kept_acc = np.zeros((L, I))
    n_window = 0

    names = parameter_names(prior, I, n_alleles, p)
    n_draws = config.n_draws
    draws = np.empty((n_draws, len(names)))
    iters = np.empty(n_draws, dtype=np.int64)
    loglik = np.empty(n_draws)
    accepted = np.zeros((L, I), dtype=np.bool_)
    row_style = config.style("P")
    shape = row_proposal_shape(counts)

    def m_target(theta):
        colony = cache.propose_weights(state.omega, theta)
        if prior.kind == "dirichlet-dirichlet":
            return colony + dirichlet_logpdf(theta, dirdir_concentration(state.rho, state.phi))
        if prior.kind == "dirichlet-lognormal":
            return colony + dirichlet_logpdf(theta, state.psi)
        return colony

    def omega_target(w):
        return cache.propose_weights(w, state.m)

    def phi_target(phi):
        if np.any(phi <= 0):
            return -np.inf
        return (dirichlet_logpdf(state.m, dirdir_concentration(state.rho, phi))
                + dirichlet_logpdf(phi, eta_from_covariates(state.alpha, G)))

    def rho_target(rho):
        return dirichlet_logpdf(state.m, dirdir_concentration(rho, state.phi))

    def alpha_target(alpha):
        try:
            if prior.kind == "dirichlet-dirichlet":
                lik = dirichlet_logpdf(state.phi, eta_from_covariates(alpha, G))
            else:
                lik = log_prior_psi(state.psi, alpha, state.tau, G)
        except OverflowError:
            return -np.inf
        return lik + log_prior_alpha(alpha, prior.alpha_var)

    def psi_target(psi):
        if not np.all(np.isfinite(psi)) or np.any(psi <= 0):
            return -np.inf
        return dirichlet_logpdf(state.m, psi) + log_prior_psi(psi, state.alpha, state.tau, G)

    def tau_target(tau):
        return (log_prior_psi(state.psi, state.alpha, tau, G)
                + log_prior_tau(tau, prior.tau_shape, prior.tau_rate))

    def update_rows():
        if row_style == "random-walk":
            z = rng.standard_normal((L, I, amax))
            u = rng.random((L, I))
            _kernels.sweep_frequency_rows(
                cache.g1, cache.g2, P, n_alleles_arr, N_f, cache.terms, cache.lp,
                cache.W, cache.E, cache.c, cache.S, cache.ll, np.exp(P_log_steps), shape,
                z, u, accepted)
            cache.total = float(cache.ll.sum())
            return accepted
        for l in range(L):
            A = n_alleles[l]
            for s in range(I):
                def row_target(q, l=l, s=s, A=A):
                    padded = np.zeros(amax)
                    padded[:A] = q
                    return (cache.propose_row(P, l, s, padded)
                            + float(np.dot(N[l, s, :A], np.log(q))))
                q, ok, _ = mh_update_simplex_block(
                    P[l, s, :A], row_target, np.exp(P_log_steps[l, s]), rng, style=row_style,
                    shape=shape[l, s, :A])
                if ok:
                    row_target(q)
                    cache.commit()
                    P[l, s, :A] = q
                accepted[l, s] = ok
        return accepted

    def commit_weights(omega, m):
        cache.propose_weights(omega, m)
        cache.commit()

    def _sweep_m():
        if I < 2:
            return True
        theta, ok, _ = mh_update_simplex_block(
            state.m, m_target, np.exp(log_steps["m"]), rng, style=config.style("m"))
        if ok:
            state.m = theta
            commit_weights(state.omega, state.m)
        return ok

    def _sweep_omega():
        w, ok, _ = mh_update_unit_scalar(state.omega, omega_target, np.exp(log_steps["omega"]), rng)
        if ok:
            state.omega = w
            commit_weights(state.omega, state.m)
        return ok

    def _sweep_phi():
        if I < 2:
            return True
        theta, ok, _ = mh_update_simplex_block(
            state.phi, phi_target, np.exp(log_steps["phi"]), rng, style=config.style("phi"))
        if ok:
            state.phi = theta
        return ok

    def _sweep_rho():
        r, ok, _ = mh_update_unit_scalar(state.rho, rho_target, np.exp(log_steps["rho"]), rng)
        state.rho = r
        return ok

    def _sweep_alpha():
        a, ok, _ = mh_update_real_block(state.alpha, alpha_target, np.exp(log_steps["alpha"]), rng)
        state.alpha = a
        return ok

    def _sweep_psi():
        v, ok, _ = mh_update_real_block(state.psi, psi_target, np.exp(log_steps["psi"]), rng,
                                        positive=True)
        state.psi = v
        return ok

    def _sweep_tau():
        t, ok, _ = mh_update_real_block(state.tau, tau_target, np.exp(log_steps["tau"]), rng,
                                        positive=True)
        state.tau = t
        return ok

    sweeps = {"m": _sweep_m, "omega": _sweep_omega, "phi": _sweep_phi, "rho": _sweep_rho,
              "alpha": _sweep_alpha, "psi": _sweep_psi, "tau": _sweep_tau}

    out = 0
    for t in range(1, config.iterations + 1):
        acc_rows = update_rows()
        P_window_acc += acc_rows
        for b in blocks:
            ok = sweeps[b]()
            window_acc[b] += ok
            if t > config.burnin:
                kept_acc[b] += ok
        if t > config.burnin:
            P_kept_acc += acc_rows
        if t % 100 == 0:
            cache.refresh()
        else:
            cache.rescale()
        if config.adapt and t <= config.burnin and t % config.adapt_window == 0:
            n_window += 1
            P_log_steps = _tuned(P_log_steps, P_window_acc / config.adapt_window, n_window)
            for b in blocks:
                log_steps[b] = float(_tuned(log_steps[b], window_acc[b] / config.adapt_window,
                                            n_window))
            P_window_acc[:] = 0
            window_acc = dict.fromkeys(blocks, 0.0)
        if t > config.burnin and (t - config.burnin) % config.thin == 0 and out < n_draws:
            state.P = P
            draws[out] = flatten_state(state, prior, n_alleles)
            iters[out] = t
            loglik[out] = cache.total + source_loglik(counts, P)
            out += 1

    kept = max(config.iterations - config.burnin, 1)
    acceptance = {"P": float(P_kept_acc.mean() / kept)}
    acceptance.update({b: kept_acc[b] / kept for b in blocks})
    state.P = P
    meta = {
        "seed": int(config.seed),
        "data_hash": data_fingerprint(genotypes, counts),
        "final_steps": {"P": float(np.exp(P_log_steps).mean()),
                        **{b: float(np.exp(v)) for b, v in log_steps.items()}},
        "P_acceptance_min": float(P_kept_acc.min() / kept) if P_kept_acc.size else None,
    }
    log.info("chain finished: %d draws, acceptance %s", n_draws, acceptance)
    return ChainOutput(
        names=names, draws=draws, iterations=iters, loglik=loglik, acceptance=acceptance,
        prior=prior, config=config, n_alleles=tuple(n_alleles), n_sources=I,
        n_covariates=p, meta=meta,
    )
