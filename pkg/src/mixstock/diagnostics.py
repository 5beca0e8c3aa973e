"""Posterior summaries and model comparison for fitted chains."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .genetics import colony_pointwise_loglik, data_loglik


def hpd_interval(samples, level=0.95):
    """Shortest interval over the sorted draws holding ``ceil(level * n)`` of them.

    >>> hpd_interval(np.arange(1, 101), 0.95)
    (1.0, 95.0)
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 2:
        raise ValueError("need at least two draws")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    n_in = max(1, math.ceil(level * n - 1e-9))
    widths = x[n_in - 1:] - x[: n - n_in + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + n_in - 1])


def mcse(x, n_batches=None):
    """Monte Carlo standard error of the mean by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    n = x.size
    b = n_batches or max(2, int(np.sqrt(n)))
    size = n // b
    if size < 1:
        return float(np.std(x, ddof=1) / np.sqrt(n))
    means = x[: b * size].reshape(b, size).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(b))


def split_rhat(x):
    """Split-chain potential scale reduction for one chain."""
    x = np.asarray(x, dtype=float)
    half = x.size // 2
    if half < 2:
        return float("nan")
    chains = np.stack([x[:half], x[half: 2 * half]])
    n = half
    w = chains.var(axis=1, ddof=1).mean()
    b = n * chains.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else float("inf")
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


@dataclass
class ParameterSummary:
    name: str
    mean: float
    sd: float
    hpd_lower: float
    hpd_upper: float
    rhat: float = float("nan")
    truth: float | None = None
    rmse: float | None = None

    @property
    def hpd_length(self):
        return self.hpd_upper - self.hpd_lower


@dataclass
class PosteriorSummary:
    rows: list
    level: float = 0.95
    prior: str = ""
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def __contains__(self, name):
        return any(r.name == name for r in self.rows)

    @property
    def names(self):
        return [r.name for r in self.rows]


def default_parameters(names):
    """Parameters reported by default: m, omega, rho, tau and the slopes."""
    keep = []
    for n in names:
        if n.startswith("m[") or n in ("omega", "rho", "tau"):
            keep.append(n)
        elif n.startswith("alpha[") and n != "alpha[0]":
            keep.append(n)
    return keep


def summarize(chain, truth=None, level=0.95, parameters=None):
    """Posterior mean, SD, HPD interval and split-R-hat for each parameter.

    ``truth`` maps parameter names to true values; when given, the RMSE
    ``sqrt(mean((draw - truth)**2))`` is added for the parameters it covers.
    SDs use the population (ddof=0) convention so that
    ``rmse**2 == sd**2 + (mean - truth)**2``.
    """
    if len(chain) == 0:
        raise ValueError("chain has no draws")
    if parameters is None:
        parameters = default_parameters(chain.names)
    elif parameters == "all":
        parameters = list(chain.names)
    truth = dict(truth or {})
    rows = []
    for name in parameters:
        x = chain.column(name)
        lo, hi = hpd_interval(x, level) if x.size > 1 else (float(x[0]), float(x[0]))
        if np.ptp(x) == 0:
            mean, sd = float(x[0]), 0.0
        else:
            mean, sd = float(x.mean()), float(x.std())
        row = ParameterSummary(name=name, mean=mean, sd=sd, hpd_lower=lo, hpd_upper=hi,
                               rhat=split_rhat(x))
        if name in truth:
            row.truth = float(truth[name])
            row.rmse = float(np.sqrt(np.mean((x - row.truth) ** 2)))
        rows.append(row)
    return PosteriorSummary(rows=rows, level=level, prior=chain.prior.kind)


@dataclass
class AggregateRow:
    name: str
    truth: float | None
    mean: float
    sd: float
    rmse: float | None
    hpd_length: float
    n: int


def aggregate_summaries(summaries):
    """Average per-replicate summaries: posterior mean, SD, RMSE and HPD length."""
    if not summaries:
        return []
    out = []
    for name in summaries[0].names:
        rows = [s[name] for s in summaries if name in s]
        rmses = [r.rmse for r in rows if r.rmse is not None]
        truths = {r.truth for r in rows if r.truth is not None}
        out.append(AggregateRow(
            name=name,
            truth=truths.pop() if len(truths) == 1 else None,
            mean=float(np.mean([r.mean for r in rows])),
            sd=float(np.mean([r.sd for r in rows])),
            rmse=float(np.mean(rmses)) if rmses else None,
            hpd_length=float(np.mean([r.hpd_length for r in rows])),
            n=len(rows),
        ))
    return out


# ---------------------------------------------------------------------------
# Model comparison
# ---------------------------------------------------------------------------

@dataclass
class ModelScore:
    model: str
    dbar: float
    pd: float
    dic: float
    lpml: float = float("nan")


def _renormalized(x, axis=-1):
    s = x.sum(axis=axis, keepdims=True)
    if np.any(np.abs(s - 1) > 1e-12) or np.any(x[x != 0] <= 0):
        warnings.warn("posterior mean off the simplex; renormalizing", RuntimeWarning,
                      stacklevel=3)
    return x / s


def posterior_mean_state(chain):
    """Posterior means of ``P``, ``m`` and ``omega`` on the simplex."""
    P = _renormalized(chain.block("P").mean(axis=0))
    m = _renormalized(chain.block("m").mean(axis=0))
    return P, m, float(chain.column("omega").mean())


def dic(chain, genotypes, counts):
    """Returns ``(Dbar, pD, DIC)`` with deviance ``-2 * (colony + source log-lik)``.

    The plug-in deviance is evaluated at the posterior means.
    """
    deviance = -2.0 * np.asarray(chain.loglik)
    dbar = float(deviance.mean())
    P, m, omega = posterior_mean_state(chain)
    d_hat = -2.0 * data_loglik(genotypes, counts, omega, P, m)
    pd = dbar - d_hat
    return dbar, pd, dbar + pd


def pointwise_loglik(chain, genotypes):
    """``(draws, K)`` colony log-likelihood of every individual at every draw."""
    P = chain.block("P")
    m = chain.block("m")
    omega = chain.column("omega")
    out = np.empty((len(chain), genotypes.n_individuals))
    for s in range(len(chain)):
        out[s] = colony_pointwise_loglik(genotypes, omega[s], P[s], m[s] / m[s].sum())
    return out


def log_cpo(pointwise):
    """Log conditional predictive ordinates from a ``(draws, K)`` log-lik matrix.

    ``CPO_k`` is the harmonic mean of the individual likelihood over draws,
    evaluated as ``log S - logsumexp(-ll[:, k])``.
    """
    ll = np.atleast_2d(np.asarray(pointwise, dtype=float))
    bad = ~np.isfinite(ll).all(axis=0)
    if bad.any():
        warnings.warn(f"{bad.sum()} individuals have non-finite likelihood draws",
                      RuntimeWarning, stacklevel=2)
    return np.log(ll.shape[0]) - logsumexp(-ll, axis=0)


def lpml(chain_or_pointwise, genotypes=None):
    """Log pseudo-marginal likelihood: the sum of log CPOs over colony individuals."""
    if genotypes is None:
        pointwise = chain_or_pointwise
    else:
        pointwise = pointwise_loglik(chain_or_pointwise, genotypes)
    return float(log_cpo(pointwise).sum())


def model_score(chain, genotypes, counts, model=None):
    dbar, pd, dic_value = dic(chain, genotypes, counts)
    return ModelScore(model=model or chain.prior.kind, dbar=dbar, pd=pd, dic=dic_value,
                      lpml=lpml(chain, genotypes))
