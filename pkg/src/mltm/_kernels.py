"""Compiled Gibbs sweeps.

All randomness enters through pre-drawn uniforms in [0, 1); a categorical
draw picks the first index whose running weight total exceeds ``u * total``.
"""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True, nogil=True)
def draw(cum, n, r):
    k = 0
    while k < n - 1 and cum[k] <= r:
        k += 1
    return k


@njit(cache=True, nogil=True)
def sweep_label_word(words, wptr, labels, lptr, z, nwc, nc, ncd, alpha_local, beta_w, u):
    """One pass over all word tokens of a training corpus.

    z[i] indexes into the document's own label slice labels[lptr[d]:lptr[d+1]];
    ncd and alpha_local are aligned with that slice (sparse per-document counts).
    """
    W = nwc.shape[0]
    wbeta = W * beta_w
    max_l = 0
    for d in range(len(lptr) - 1):
        max_l = max(max_l, lptr[d + 1] - lptr[d])
    cum = np.empty(max(max_l, 1))
    for d in range(len(wptr) - 1):
        l0 = lptr[d]
        n_l = lptr[d + 1] - l0
        for i in range(wptr[d], wptr[d + 1]):
            w = words[i]
            k = z[i]
            c = labels[l0 + k]
            nwc[w, c] -= 1
            nc[c] -= 1
            ncd[l0 + k] -= 1
            total = 0.0
            for j in range(n_l):
                cc = labels[l0 + j]
                total += (nwc[w, cc] + beta_w) / (nc[cc] + wbeta) * (ncd[l0 + j] + alpha_local[l0 + j])
                cum[j] = total
            k = draw(cum, n_l, u[i] * total)
            c = labels[l0 + k]
            z[i] = k
            nwc[w, c] += 1
            nc[c] += 1
            ncd[l0 + k] += 1


@njit(cache=True, nogil=True)
def sweep_topic_label(labels, lptr, zp, nct, nt, ndt, beta_c, gamma, u):
    """One pass over all label tokens (standard collapsed LDA on labels)."""
    C, T = nct.shape
    cbeta = C * beta_c
    cum = np.empty(T)
    for d in range(len(lptr) - 1):
        for i in range(lptr[d], lptr[d + 1]):
            c = labels[i]
            t = zp[i]
            nct[c, t] -= 1
            nt[t] -= 1
            ndt[d, t] -= 1
            total = 0.0
            for s in range(T):
                total += (nct[c, s] + beta_c) / (nt[s] + cbeta) * (ndt[d, s] + gamma)
                cum[s] = total
            t = draw(cum, T, u[i] * total)
            zp[i] = t
            nct[c, t] += 1
            nt[t] += 1
            ndt[d, t] += 1


@njit(cache=True, nogil=True)
def _update_words(phi_tok, z, ncd, alpha_prior, u, pos, cum):
    N, C = phi_tok.shape
    for i in range(N):
        ncd[z[i]] -= 1
        total = 0.0
        for c in range(C):
            total += phi_tok[i, c] * (ncd[c] + alpha_prior[c])
            cum[c] = total
        k = draw(cum, C, u[pos] * total)
        pos += 1
        z[i] = k
        ncd[k] += 1
    return pos


@njit(cache=True, nogil=True)
def _update_topics(tok_labels, zp, ndt, phi_prime, gamma, u, pos, cum):
    T = phi_prime.shape[0]
    for i in range(len(tok_labels)):
        c = tok_labels[i]
        ndt[zp[i]] -= 1
        total = 0.0
        for t in range(T):
            total += phi_prime[t, c] * (ndt[t] + gamma)
            cum[t] = total
        t = draw(cum, T, u[pos] * total)
        pos += 1
        zp[i] = t
        ndt[t] += 1
    return pos


@njit(cache=True, nogil=True)
def _dependency_prior(ndt, phi_prime, eta, alpha, gamma, theta_prime, out):
    T, C = phi_prime.shape
    denom = 0.0
    for t in range(T):
        denom += ndt[t] + gamma
    for t in range(T):
        theta_prime[t] = (ndt[t] + gamma) / denom
    for c in range(C):
        s = 0.0
        for t in range(T):
            s += theta_prime[t] * phi_prime[t, c]
        out[c] = eta * s + alpha


@njit(cache=True, nogil=True)
def n_cycles(burn_in, n_samples, lag):
    return burn_in + 1 + (n_samples - 1) * (lag + 1)


@njit(cache=True, nogil=True)
def fast_chain(phi_tok, phi_prime, alpha_const, dependency, eta, alpha, gamma,
               burn_in, n_samples, lag, u):
    """Fast test-time inference for one document and one chain.

    With `dependency` false the prior is the constant `alpha_const` and only
    the word assignments are resampled. Otherwise each cycle resamples the word
    assignments, copies them into label tokens, resamples the topics of those
    tokens and recomputes the prior from the topic proportions.

    Returns per-chain sums over retained samples of theta, the prior,
    the label counts and theta'.
    """
    N, C = phi_tok.shape
    T = phi_prime.shape[0]
    z = np.empty(N, dtype=np.int64)
    zp = np.zeros(N, dtype=np.int64)
    ncd = np.zeros(C)
    ndt = np.zeros(T)
    ap = alpha_const.copy()
    tp = np.ones(T) / T
    cum = np.empty(max(C, T))
    pos = 0

    if dependency:
        for c in range(C):
            s = 0.0
            for t in range(T):
                s += phi_prime[t, c]
            ap[c] = eta * s / T + alpha
    for i in range(N):
        total = 0.0
        for c in range(C):
            total += phi_tok[i, c] * ap[c]
            cum[c] = total
        z[i] = draw(cum, C, u[pos] * total)
        pos += 1
        ncd[z[i]] += 1
    if dependency:
        for i in range(N):
            total = 0.0
            for t in range(T):
                total += phi_prime[t, z[i]]
                cum[t] = total
            zp[i] = draw(cum, T, u[pos] * total)
            pos += 1
            ndt[zp[i]] += 1
        _dependency_prior(ndt, phi_prime, eta, alpha, gamma, tp, ap)

    theta_sum = np.zeros(C)
    prior_sum = np.zeros(C)
    count_sum = np.zeros(C)
    tp_sum = np.zeros(T)
    total_cycles = n_cycles(burn_in, n_samples, lag)
    for cycle in range(1, total_cycles + 1):
        pos = _update_words(phi_tok, z, ncd, ap, u, pos, cum)
        if dependency:
            pos = _update_topics(z, zp, ndt, phi_prime, gamma, u, pos, cum)
            _dependency_prior(ndt, phi_prime, eta, alpha, gamma, tp, ap)
        if cycle > burn_in and (cycle - burn_in - 1) % (lag + 1) == 0:
            norm = 0.0
            for c in range(C):
                norm += ncd[c] + ap[c]
            for c in range(C):
                theta_sum[c] += (ncd[c] + ap[c]) / norm
                prior_sum[c] += ap[c]
                count_sum[c] += ncd[c]
            for t in range(T):
                tp_sum[t] += tp[t]
    return theta_sum, prior_sum, count_sum, tp_sum


def fast_chain_uniforms(N, dependency, burn_in, n_samples, lag):
    per = 2 * N if dependency else N
    return per * (1 + n_cycles(burn_in, n_samples, lag))


@njit(cache=True, nogil=True)
def _f(a, n):
    # log Gamma(a + n) - log Gamma(a); -inf when a == 0 < n
    if n == 0:
        return 0.0
    if a <= 0.0:
        return NEG_INF
    return math.lgamma(a + n) - math.lgamma(a)


@njit(cache=True, nogil=True)
def _sample_label_tokens(lab, zp, nlab, ncd, phi_prime, eta, alpha, M, u, pos, logw, cum):
    """Resample every label token from the Gamma-ratio likelihood of the
    current word assignments times phi'. Returns (pos, status)."""
    C = ncd.shape[0]
    delta = eta / M
    for j in range(len(lab)):
        nlab[lab[j]] -= 1
        # cached per-label terms for the prior without token j
        s_fin = 0.0
        n_bad = 0
        bad = -1
        for k in range(C):
            a = eta * nlab[k] / M + alpha
            fk = _f(a, ncd[k])
            if fk == NEG_INF:
                n_bad += 1
                bad = k
            else:
                s_fin += fk
        t = zp[j]
        best = NEG_INF
        for c in range(C):
            if n_bad > 1 or (n_bad == 1 and c != bad) or phi_prime[t, c] <= 0.0:
                logw[c] = NEG_INF
                continue
            a = eta * nlab[c] / M + alpha
            fc = _f(a, ncd[c])
            rest = s_fin if n_bad == 1 else s_fin - fc
            logw[c] = math.log(phi_prime[t, c]) + rest + _f(a + delta, ncd[c])
            if logw[c] > best:
                best = logw[c]
        if best == NEG_INF:
            return pos, 1
        total = 0.0
        for c in range(C):
            if logw[c] != NEG_INF:
                total += math.exp(logw[c] - best)
            cum[c] = total
        c = draw(cum, C, u[pos] * total)
        pos += 1
        lab[j] = c
        nlab[c] += 1
    return pos, 0


@njit(cache=True, nogil=True)
def exact_chain(phi_tok, phi_prime, eta, alpha, gamma, M, burn_in, n_samples, lag, u):
    """Exact test-time inference with explicitly sampled label tokens.

    Each cycle: word assignments, label tokens, topics of label tokens,
    label tokens again. The prior is eta * N_i / M + alpha from the current
    label-token counts. Returns the same sums as `fast_chain` plus a status
    code (non-zero: every candidate for some label token had zero weight).
    """
    N, C = phi_tok.shape
    T = phi_prime.shape[0]
    z = np.empty(N, dtype=np.int64)
    lab = np.empty(M, dtype=np.int64)
    zp = np.empty(M, dtype=np.int64)
    ncd = np.zeros(C)
    nlab = np.zeros(C)
    ndt = np.zeros(T)
    ap = np.empty(C)
    logw = np.empty(C)
    cum = np.empty(max(C, T))
    pos = 0

    for j in range(M):
        for t in range(T):
            cum[t] = t + 1.0
        zp[j] = draw(cum, T, u[pos] * T)
        pos += 1
        total = 0.0
        for c in range(C):
            total += phi_prime[zp[j], c]
            cum[c] = total
        lab[j] = draw(cum, C, u[pos] * total)
        pos += 1
        nlab[lab[j]] += 1
        ndt[zp[j]] += 1
    for c in range(C):
        ap[c] = eta * nlab[c] / M + alpha
    for i in range(N):
        total = 0.0
        for c in range(C):
            total += phi_tok[i, c] * ap[c]
            cum[c] = total
        z[i] = draw(cum, C, u[pos] * total)
        pos += 1
        ncd[z[i]] += 1

    theta_sum = np.zeros(C)
    prior_sum = np.zeros(C)
    count_sum = np.zeros(C)
    tp_sum = np.zeros(T)
    total_cycles = n_cycles(burn_in, n_samples, lag)
    for cycle in range(1, total_cycles + 1):
        for c in range(C):
            ap[c] = eta * nlab[c] / M + alpha
        pos = _update_words(phi_tok, z, ncd, ap, u, pos, cum)
        pos, status = _sample_label_tokens(lab, zp, nlab, ncd, phi_prime, eta, alpha, M, u, pos, logw, cum)
        if status:
            return theta_sum, prior_sum, count_sum, tp_sum, status
        pos = _update_topics(lab, zp, ndt, phi_prime, gamma, u, pos, cum)
        pos, status = _sample_label_tokens(lab, zp, nlab, ncd, phi_prime, eta, alpha, M, u, pos, logw, cum)
        if status:
            return theta_sum, prior_sum, count_sum, tp_sum, status
        if cycle > burn_in and (cycle - burn_in - 1) % (lag + 1) == 0:
            norm = 0.0
            for c in range(C):
                ap[c] = eta * nlab[c] / M + alpha
                norm += ncd[c] + ap[c]
            for c in range(C):
                theta_sum[c] += (ncd[c] + ap[c]) / norm
                prior_sum[c] += ap[c]
                count_sum[c] += ncd[c]
            for t in range(T):
                tp_sum[t] += (ndt[t] + gamma) / (M + T * gamma)
    return theta_sum, prior_sum, count_sum, tp_sum, 0


def exact_chain_uniforms(N, M, burn_in, n_samples, lag):
    return 2 * M + N + n_cycles(burn_in, n_samples, lag) * (N + 3 * M)
