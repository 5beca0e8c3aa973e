"""Genetic data model and likelihoods for colony and source samples.

Allele frequencies are stored as a zero-padded array ``P`` of shape
``(L, I, Amax)``: locus, source, allele. Loci may carry different numbers
of alleles (``n_alleles``); entries past ``n_alleles[l]`` are zero and never
read. Allele counts use the same layout. All indices are 0-based and a
missing locus in a genotype is coded ``-1``.

Every likelihood is evaluated in log space. The multinomial coefficient of
the source-count likelihood is dropped: it does not depend on ``P``, so
deviances built on top of :func:`source_loglik` are only comparable between
fits of the same data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import DataError

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class GenotypeTable:
    """Diploid colony genotypes, one allele pair per locus.

    ``alleles`` has shape ``(K, L, 2)``. Pairs are stored canonically
    (smaller index first); a locus with either allele missing is stored as
    ``(-1, -1)``.
    """

    alleles: np.ndarray
    n_alleles: tuple

    def __post_init__(self):
        a = np.array(self.alleles, dtype=np.int64, copy=True)
        if a.ndim == 2 and a.shape[-1] == 2:
            a = a[None]
        if a.ndim != 3 or a.shape[2] != 2:
            raise DataError(f"genotype array must have shape (K, L, 2), got {a.shape}")
        n_alleles = tuple(int(x) for x in self.n_alleles)
        if a.shape[1] != len(n_alleles):
            raise DataError(
                f"genotypes have {a.shape[1]} loci but {len(n_alleles)} allele counts given"
            )
        missing = (a < 0).any(axis=2)
        a[missing] = -1
        limit = np.array(n_alleles)[None, :, None]
        if ((a >= limit) & ~missing[:, :, None]).any():
            k, l, _ = np.argwhere((a >= limit) & ~missing[:, :, None])[0]
            raise DataError(f"individual {k} locus {l}: allele index out of range")
        a.sort(axis=2)
        a.flags.writeable = False
        object.__setattr__(self, "alleles", a)
        object.__setattr__(self, "n_alleles", n_alleles)

    @property
    def n_individuals(self):
        return self.alleles.shape[0]

    @property
    def n_loci(self):
        return self.alleles.shape[1]

    def __len__(self):
        return self.n_individuals

    def __getitem__(self, k):
        return self.alleles[k]

    def subset(self, index):
        return GenotypeTable(self.alleles[np.atleast_1d(index)], self.n_alleles)


@dataclass(frozen=True)
class AlleleCountTable:
    """Allele counts in the source samples, shape ``(L, I, Amax)``."""

    counts: np.ndarray
    n_alleles: tuple

    def __post_init__(self):
        c = np.array(self.counts, copy=True)
        if c.ndim != 3:
            raise DataError(f"allele counts must have shape (L, I, Amax), got {c.shape}")
        n_alleles = tuple(int(x) for x in self.n_alleles)
        if c.shape[0] != len(n_alleles):
            raise DataError(
                f"counts have {c.shape[0]} loci but {len(n_alleles)} allele counts given"
            )
        if c.shape[2] < max(n_alleles, default=0):
            raise DataError("allele axis shorter than the largest allele count")
        if np.any(c < 0) or np.any(c != np.round(c)):
            raise DataError("allele counts must be non-negative integers")
        c = c.astype(np.int64)
        for l, A in enumerate(n_alleles):
            if np.any(c[l, :, A:] != 0):
                raise DataError(f"locus {l}: counts beyond allele {A}")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "n_alleles", n_alleles)

    @property
    def n_loci(self):
        return self.counts.shape[0]

    @property
    def n_sources(self):
        return self.counts.shape[1]

    @classmethod
    def empty(cls, n_sources, n_alleles):
        n_alleles = tuple(n_alleles)
        return cls(np.zeros((len(n_alleles), n_sources, max(n_alleles)), dtype=np.int64), n_alleles)


def allele_mask(n_alleles, amax=None):
    """Boolean ``(L, Amax)`` mask of real (non-padding) allele slots."""
    amax = max(n_alleles) if amax is None else amax
    return np.arange(amax)[None, :] < np.asarray(n_alleles)[:, None]


def check_frequencies(P, n_alleles):
    """Validate a padded allele-frequency array; returns it as float64."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 3 or P.shape[0] != len(n_alleles) or P.shape[2] < max(n_alleles):
        raise DataError(f"frequency array shape {P.shape} does not match loci {tuple(n_alleles)}")
    mask = allele_mask(n_alleles, P.shape[2])[:, None, :]
    if np.any(P[np.broadcast_to(~mask, P.shape)] != 0):
        raise DataError("non-zero frequency in a padding slot")
    if np.any(P < 0):
        raise DataError("negative allele frequency")
    sums = P.sum(axis=2)
    if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL * 100):
        raise DataError("allele frequencies do not sum to one")
    return P


def check_proportions(m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 1 or np.any(m < 0) or abs(m.sum() - 1.0) > 1e-9:
        raise DataError("mixture proportions must be a probability vector")
    return m


def _check_genotype(y, P):
    y = np.asarray(y, dtype=np.int64)
    if y.ndim != 2 or y.shape[1] != 2:
        raise DataError(f"genotype must have shape (L, 2), got {y.shape}")
    if y.shape[0] != P.shape[0]:
        raise DataError(f"genotype has {y.shape[0]} loci, frequencies have {P.shape[0]}")
    if np.any(y >= P.shape[2]):
        raise DataError("allele index out of range")
    return y


def _locus_pair_terms(x, y, P_l):
    """log of ``p_x,i p_y,j + gamma p_y,i p_x,j`` for all source pairs."""
    v = np.outer(P_l[:, x], P_l[:, y])
    if x != y:
        v = v + np.outer(P_l[:, y], P_l[:, x])
    with np.errstate(divide="ignore"):
        return np.log(v)


def pair_logprob_matrix(y, P):
    """``(I, I)`` matrix of ``log P(y | i, j)`` over all parent-source pairs.

    The diagonal holds the same-source Hardy-Weinberg probabilities and the
    off-diagonal the cross-source ones. Missing loci contribute zero.
    """
    P = np.asarray(P, dtype=float)
    y = _check_genotype(y, P)
    out = np.zeros((P.shape[1], P.shape[1]))
    for l, (x, z) in enumerate(y):
        if x < 0 or z < 0:
            continue
        x, z = min(x, z), max(x, z)
        out += _locus_pair_terms(x, z, P[l])
    return out


def genotype_logprob_same_source(y, i, P):
    """Log-probability of genotype ``y`` when both parents come from source ``i``.

    Each locus contributes ``delta * p_a1 * p_a2`` with ``delta`` equal to 2 for
    a heterozygote and 1 for a homozygote.
    """
    P = np.asarray(P, dtype=float)
    y = _check_genotype(y, P)
    if not 0 <= i < P.shape[1]:
        raise DataError(f"source index {i} out of range")
    total = 0.0
    with np.errstate(divide="ignore"):
        for l, (x, z) in enumerate(y):
            if x < 0 or z < 0:
                continue
            delta = 1.0 if x == z else 2.0
            total += np.log(delta * P[l, i, x] * P[l, i, z])
    return float(total)


def genotype_logprob_cross_source(y, i, j, P):
    """Log-probability of genotype ``y`` for parents from distinct sources ``i`` and ``j``."""
    if i == j:
        raise ValueError(
            "cross-source probability requires i != j; use genotype_logprob_same_source"
        )
    P = np.asarray(P, dtype=float)
    y = _check_genotype(y, P)
    I = P.shape[1]
    if not (0 <= i < I and 0 <= j < I):
        raise DataError(f"source index out of range: ({i}, {j})")
    total = 0.0
    with np.errstate(divide="ignore"):
        for l, (x, z) in enumerate(y):
            if x < 0 or z < 0:
                continue
            v = P[l, i, x] * P[l, j, z]
            if x != z:
                v += P[l, i, z] * P[l, j, x]
            total += np.log(v)
    return float(total)


def mixture_log_weights(omega, m):
    """Log weights of the ``I**2 + I`` mixture components, as two arrays.

    Returns ``(log_assortative, log_random)`` of shapes ``(I,)`` and ``(I, I)``.
    """
    m = np.asarray(m, dtype=float)
    with np.errstate(divide="ignore"):
        log_assort = np.log(omega) + np.log(m)
        log_random = np.log1p(-omega) + np.log(m)[:, None] + np.log(m)[None, :]
    return log_assort, log_random


def combined_log_weights(omega, m):
    """Per-pair log weights ``log((1 - omega) m_i m_j + omega m_i [i == j])``."""
    log_assort, log_random = mixture_log_weights(omega, m)
    out = log_random.copy()
    idx = np.diag_indices_from(out)
    out[idx] = np.logaddexp(log_random[idx], log_assort)
    return out


def colony_individual_loglik(y, omega, P, m):
    """Log-likelihood of one colony genotype under assortative mating.

    A fraction ``omega`` of offspring have both parents from one source
    (picked with probability ``m_i``); the rest come from random mating among
    all migrants.
    """
    if not 0.0 <= omega <= 1.0:
        raise DataError(f"omega must lie in [0, 1], got {omega}")
    m = check_proportions(m)
    lp = pair_logprob_matrix(y, P)
    if lp.shape[0] != m.shape[0]:
        raise DataError(f"{m.shape[0]} proportions for {lp.shape[0]} sources")
    log_assort, log_random = mixture_log_weights(omega, m)
    terms = np.concatenate([log_assort + np.diag(lp), (log_random + lp).ravel()])
    return float(logsumexp(terms))


def pair_logprob_tensor(genotypes, P):
    """``(K, I, I)`` array of ``log P(y_k | i, j)`` for a whole table."""
    P = np.ascontiguousarray(P, dtype=float)
    g = genotypes.alleles
    if g.shape[1] != P.shape[0]:
        raise DataError(f"genotypes have {g.shape[1]} loci, frequencies have {P.shape[0]}")
    K, I = g.shape[0], P.shape[1]
    out = np.zeros((K, I, I))
    buf = np.empty((K, I, I))
    for l in range(P.shape[0]):
        _kernels.fill_locus_terms(g[:, l, 0].copy(), g[:, l, 1].copy(), P[l], buf)
        out += buf
    return out


def colony_pointwise_loglik(genotypes, omega, P, m):
    """Per-individual colony log-likelihoods, shape ``(K,)``."""
    m = check_proportions(m)
    lp = pair_logprob_tensor(genotypes, P)
    if lp.shape[1] != m.shape[0]:
        raise DataError(f"{m.shape[0]} proportions for {lp.shape[1]} sources")
    out = np.empty(lp.shape[0])
    _kernels.mixture_loglik(lp, combined_log_weights(omega, m), out)
    return out


def colony_loglik(genotypes, omega, P, m):
    """Summed colony log-likelihood; individuals are independent."""
    if genotypes.n_individuals == 0:
        raise DataError("empty genotype table")
    return float(colony_pointwise_loglik(genotypes, omega, P, m).sum())


def source_loglik(counts, P):
    """Product-multinomial log-likelihood of the source allele counts.

    Returns ``sum N log p`` (multinomial coefficients omitted). A positive
    count on a zero frequency gives ``-inf`` and a ``RuntimeWarning``.
    """
    N = counts.counts if isinstance(counts, AlleleCountTable) else np.asarray(counts)
    P = np.asarray(P, dtype=float)
    if N.shape[:2] != P.shape[:2] or N.shape[2] > P.shape[2]:
        raise DataError(f"count shape {N.shape} does not match frequencies {P.shape}")
    P = P[:, :, : N.shape[2]]
    pos = N > 0
    if np.any(P[pos] <= 0):
        warnings.warn("observed allele with zero frequency; source likelihood is -inf",
                      RuntimeWarning, stacklevel=2)
        return -np.inf
    return float(np.sum(N[pos] * np.log(P[pos])))


def data_loglik(genotypes, counts, omega, P, m):
    return colony_loglik(genotypes, omega, P, m) + source_loglik(counts, P)


def joint_log_posterior(state, genotypes, counts, prior, covariates=None):
    """Unnormalized log posterior of a full model state.

    Sum of the colony and source log-likelihoods and the prior terms from
    :func:`mixstock.priors.log_prior`.
    """
    from .priors import log_prior

    lp = log_prior(state, prior, covariates)
    if lp == -np.inf:
        return -np.inf
    return data_loglik(genotypes, counts, state.omega, state.P, state.m) + lp


class ColonyCache:
    """Incrementally updated colony likelihood for one chain.

    Holds the per-locus pair terms and a linear-space copy of their sums so
    that a move on a single frequency row, on ``m`` or on ``omega`` only
    recomputes what it touches. Not shared between chains.
    """

    def __init__(self, genotypes, P, omega, m):
        g = genotypes.alleles
        self.g1 = np.ascontiguousarray(g[:, :, 0])
        self.g2 = np.ascontiguousarray(g[:, :, 1])
        self._g1_cols = [self.g1[:, l].copy() for l in range(g.shape[1])]
        self._g2_cols = [self.g2[:, l].copy() for l in range(g.shape[1])]
        P = np.ascontiguousarray(P, dtype=float)
        K, L, I = g.shape[0], P.shape[0], P.shape[1]
        self.terms = np.empty((L, K, I, I))
        for l in range(L):
            _kernels.fill_locus_terms(self._g1_cols[l], self._g2_cols[l], P[l], self.terms[l])
        self.lp = self.terms.sum(axis=0)
        self.W = np.exp(combined_log_weights(omega, m))
        self.E = np.empty((K, I, I))
        self.c = np.empty(K)
        self.S = np.empty(K)
        self.ll = np.empty(K)
        self._new_row = np.empty((K, I))
        self._ratio = np.empty((K, I))
        self._out_S = np.empty(K)
        self._out_ll = np.empty(K)
        self._pending = None
        self.rescale()

    def rescale(self):
        self.total = _kernels.rescale(self.lp, self.W, self.E, self.c, self.S, self.ll)
        return self.total

    def refresh(self):
        """Re-sum the locus terms to shed accumulated rounding."""
        np.sum(self.terms, axis=0, out=self.lp)
        return self.rescale()

    def propose_row(self, P, locus, source, q):
        """Colony log-likelihood if ``P[locus, source]`` became ``q``."""
        q = np.ascontiguousarray(q, dtype=float)
        delta = _kernels.row_proposal(
            self._g1_cols[locus], self._g2_cols[locus], np.ascontiguousarray(P[locus]),
            source, q, self.terms[locus], self.lp, self.W, self.E, self.c, self.S, self.ll,
            self._new_row, self._ratio, self._out_S, self._out_ll,
        )
        self._pending = ("row", locus, source)
        return self.total + delta

    def propose_weights(self, omega, m):
        """Colony log-likelihood under new ``omega`` and ``m``."""
        W = np.exp(combined_log_weights(omega, m))
        total = _kernels.weights_loglik(self.E, self.c, W, self._out_S, self._out_ll)
        self._pending = ("weights", W)
        return total

    def commit(self):
        kind = self._pending[0]
        if kind == "row":
            _, locus, source = self._pending
            _kernels.commit_row(self._g1_cols[locus], source, self.terms[locus], self.lp,
                                self.W, self.E, self.c, self.S, self.ll, self._new_row,
                                self._ratio, self._out_S, self._out_ll)
        else:
            self.W = self._pending[1]
            self.S[:] = self._out_S
            self.ll[:] = self._out_ll
        self.total = float(self.ll.sum())
        self._pending = None
