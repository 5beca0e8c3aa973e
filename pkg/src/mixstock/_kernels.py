"""Compiled inner loops for the colony likelihood.

Array conventions shared by every kernel:

* ``a1``, ``a2``: allele indices of one locus for all K individuals
  (0-based, ``-1`` marks a missing locus), canonical order ``a1 <= a2``.
* ``pl``: allele frequencies at that locus, shape ``(I, Amax)``.
* ``terms``: per-locus log pair probabilities, shape ``(K, I, I)``; entry
  ``[k, i, j]`` is ``log(p_a1,i p_a2,j + gamma p_a2,i p_a1,j)`` which on the
  diagonal reduces to the same-source Hardy-Weinberg probability.
* ``lp``: ``terms`` summed over loci.
* ``W``: mixture weights ``(1 - omega) m_i m_j + omega m_i [i == j]``
  (``logw`` when passed in log form).
* ``E``, ``c``, ``S``: linear-space cache, ``E[k] = exp(lp[k] - c[k])`` and
  ``S[k] = sum(W * E[k])``, so the individual log-likelihood is
  ``c[k] + log(S[k])``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def fill_locus_terms(a1, a2, pl, out):
    K = a1.shape[0]
    I = pl.shape[0]
    for k in range(K):
        x = a1[k]
        y = a2[k]
        if x < 0:
            for i in range(I):
                for j in range(I):
                    out[k, i, j] = 0.0
            continue
        for i in range(I):
            for j in range(I):
                v = pl[i, x] * pl[j, y]
                if x != y:
                    v += pl[i, y] * pl[j, x]
                out[k, i, j] = np.log(v)


@njit(cache=True)
def mixture_loglik(lp, logw, out):
    K = lp.shape[0]
    I = lp.shape[1]
    total = 0.0
    for k in range(K):
        mx = -np.inf
        for i in range(I):
            for j in range(I):
                v = logw[i, j] + lp[k, i, j]
                if v > mx:
                    mx = v
        if mx == -np.inf:
            out[k] = -np.inf
            total = -np.inf
            continue
        s = 0.0
        for i in range(I):
            for j in range(I):
                s += np.exp(logw[i, j] + lp[k, i, j] - mx)
        out[k] = mx + np.log(s)
        total += out[k]
    return total


@njit(cache=True)
def rescale(lp, W, E, c, S, ll):
    """Rebuild the linear-space cache ``E = exp(lp - c)`` and ``S = sum W E``.

    ``c[k]`` is the largest pair term of individual k, so ``E <= 1``.
    """
    K = lp.shape[0]
    I = lp.shape[1]
    total = 0.0
    for k in range(K):
        mx = -np.inf
        for i in range(I):
            for j in range(I):
                if lp[k, i, j] > mx:
                    mx = lp[k, i, j]
        c[k] = mx
        s = 0.0
        for i in range(I):
            for j in range(I):
                E[k, i, j] = np.exp(lp[k, i, j] - mx)
                s += W[i, j] * E[k, i, j]
        S[k] = s
        ll[k] = mx + np.log(s)
        total += ll[k]
    return total


@njit(cache=True)
def weights_loglik(E, c, W, out_S, out_ll):
    K = E.shape[0]
    I = E.shape[1]
    total = 0.0
    for k in range(K):
        s = 0.0
        for i in range(I):
            for j in range(I):
                s += W[i, j] * E[k, i, j]
        out_S[k] = s
        out_ll[k] = c[k] + np.log(s)
        total += out_ll[k]
    return total


@njit(cache=True)
def _exact_row_loglik(k, src, new_row, terms, lp, W):
    I = lp.shape[1]
    mx = -np.inf
    for i in range(I):
        for j in range(I):
            v = lp[k, i, j]
            if i == src:
                v += new_row[k, j] - terms[k, i, j]
            elif j == src:
                v += new_row[k, i] - terms[k, i, j]
            if W[i, j] > 0 and v > mx:
                mx = v
    if mx == -np.inf or np.isnan(mx):
        return -np.inf
    s = 0.0
    for i in range(I):
        for j in range(I):
            v = lp[k, i, j]
            if i == src:
                v += new_row[k, j] - terms[k, i, j]
            elif j == src:
                v += new_row[k, i] - terms[k, i, j]
            s += W[i, j] * np.exp(v - mx)
    return mx + np.log(s)


@njit(cache=True)
def row_proposal(a1, a2, pl, src, q, terms, lp, W, E, c, S, ll,
                 new_row, ratio, out_S, out_ll):
    """Colony log-likelihood change if source ``src`` took frequencies ``q``.

    Only the pair terms involving ``src`` change, so the linear-space sum of
    each individual is patched rather than rebuilt. When the patch cancels
    most of the old sum the individual is recomputed exactly in log space
    (``out_S[k]`` is then set to -1 to force a rescale on commit).
    """
    K = a1.shape[0]
    I = pl.shape[0]
    delta = 0.0
    for k in range(K):
        x = a1[k]
        y = a2[k]
        if x < 0:
            out_S[k] = S[k]
            out_ll[k] = ll[k]
            continue
        d = 0.0
        for j in range(I):
            if j == src:
                v = q[x] * q[y]
                if x != y:
                    v *= 2.0
            else:
                v = q[x] * pl[j, y]
                if x != y:
                    v += q[y] * pl[j, x]
            lv = np.log(v)
            new_row[k, j] = lv
            r = np.exp(lv - terms[k, src, j])
            ratio[k, j] = r
            if j == src:
                d += W[src, src] * E[k, src, src] * (r - 1.0)
            else:
                d += (W[src, j] + W[j, src]) * E[k, src, j] * (r - 1.0)
        s_new = S[k] + d
        if s_new > 1e-6 * S[k] and np.isfinite(s_new):
            out_S[k] = s_new
            out_ll[k] = c[k] + np.log(s_new)
        else:
            out_S[k] = -1.0
            out_ll[k] = _exact_row_loglik(k, src, new_row, terms, lp, W)
        delta += out_ll[k] - ll[k]
    return delta


@njit(cache=True)
def commit_row(a1, src, terms, lp, W, E, c, S, ll, new_row, ratio, out_S, out_ll):
    K = a1.shape[0]
    I = terms.shape[1]
    for k in range(K):
        if a1[k] < 0:
            continue
        for j in range(I):
            d = new_row[k, j] - terms[k, src, j]
            lp[k, src, j] += d
            terms[k, src, j] = new_row[k, j]
            E[k, src, j] *= ratio[k, j]
            if j != src:
                lp[k, j, src] += d
                terms[k, j, src] = new_row[k, j]
                E[k, j, src] *= ratio[k, j]
        if out_S[k] < 0:
            mx = -np.inf
            for i in range(I):
                for j in range(I):
                    if lp[k, i, j] > mx:
                        mx = lp[k, i, j]
            c[k] = mx
            s = 0.0
            for i in range(I):
                for j in range(I):
                    E[k, i, j] = np.exp(lp[k, i, j] - mx)
                    s += W[i, j] * E[k, i, j]
            S[k] = s
            ll[k] = mx + np.log(s)
        else:
            S[k] = out_S[k]
            ll[k] = out_ll[k]


@njit(cache=True)
def _logit(theta, n, out):
    last = np.log(theta[n - 1])
    for a in range(n - 1):
        out[a] = np.log(theta[a]) - last


@njit(cache=True)
def _inv_logit(xi, n, out):
    mx = 0.0
    for a in range(n - 1):
        if xi[a] > mx:
            mx = xi[a]
    s = np.exp(-mx)
    for a in range(n - 1):
        s += np.exp(xi[a] - mx)
    for a in range(n - 1):
        out[a] = np.exp(xi[a] - mx) / s
    out[n - 1] = np.exp(-mx) / s


@njit(cache=True)
def _log_jacobian(xi, n):
    # sum(xi) - n * log(1 + sum exp(xi)), n = p + 1
    mx = 0.0
    tot = 0.0
    for a in range(n - 1):
        tot += xi[a]
        if xi[a] > mx:
            mx = xi[a]
    s = np.exp(-mx)
    for a in range(n - 1):
        s += np.exp(xi[a] - mx)
    return tot - n * (mx + np.log(s))


@njit(cache=True)
def sweep_frequency_rows(g1, g2, P, n_alleles, counts, terms, lp, W, E, c, S, ll,
                         steps, shape, z, u, accepted):
    """One random-walk MH move per (locus, source) frequency row.

    ``z`` holds standard normal variates ``(L, I, Amax)`` and ``u`` uniform
    variates ``(L, I)``; both are drawn by the caller so the generator stream
    stays on the numpy side. The increment for a row with A alleles is
    ``step * (shape[:A-1] * z[:A-1] + shape[A-1] * z[A-1])``, a Normal with
    covariance ``step**2 (diag(shape[:A-1]**2) + shape[A-1]**2 11')``.
    """
    L = P.shape[0]
    I = P.shape[1]
    K = g1.shape[0]
    amax = P.shape[2]
    xi = np.empty(amax)
    xi_new = np.empty(amax)
    q = np.zeros(amax)
    new_row = np.empty((K, I))
    ratio = np.empty((K, I))
    out_S = np.empty(K)
    out_ll = np.empty(K)
    for l in range(L):
        A = n_alleles[l]
        a1 = g1[:, l]
        a2 = g2[:, l]
        pl = P[l]
        tl = terms[l]
        for s in range(I):
            accepted[l, s] = False
            if A < 2:
                continue
            _logit(pl[s], A, xi)
            shared = shape[l, s, A - 1] * z[l, s, A - 1]
            for a in range(A - 1):
                xi_new[a] = xi[a] + steps[l, s] * (shape[l, s, a] * z[l, s, a] + shared)
            _inv_logit(xi_new, A, q)
            log_ratio = _log_jacobian(xi_new, A) - _log_jacobian(xi, A)
            for a in range(A):
                cnt = counts[l, s, a]
                if cnt > 0:
                    log_ratio += cnt * (np.log(q[a]) - np.log(pl[s, a]))
            if not np.isfinite(log_ratio):
                continue
            log_ratio += row_proposal(a1, a2, pl, s, q, tl, lp, W, E, c, S, ll,
                                      new_row, ratio, out_S, out_ll)
            if np.isnan(log_ratio) or log_ratio == -np.inf:
                continue
            if log_ratio >= 0.0 or np.log(u[l, s]) < log_ratio:
                commit_row(a1, s, tl, lp, W, E, c, S, ll, new_row, ratio, out_S, out_ll)
                for a in range(A):
                    pl[s, a] = q[a]
                accepted[l, s] = True
