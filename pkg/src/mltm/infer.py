"""Test-time inference: label scores for unlabeled documents.

Two samplers are provided. The fast sampler (default) feeds the word
assignments straight to the topic level and recomputes the document prior from
the topic proportions every cycle. The exact sampler draws M_d explicit label
tokens from their Gamma-ratio conditional.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _kernels as K
from . import rng as rngmod
from .corpus import Corpus, Document
from .errors import DataError, NumericError
from .model import DocumentPosterior, Hyperparams, TrainedModel
from .train import SamplingSchedule, _draw

log = logging.getLogger(__name__)

INFER_SCHEDULE = SamplingSchedule(chains=60, burn_in=50, samples_per_chain=15, lag=5)
DESK_SCHEDULE = SamplingSchedule(chains=6, burn_in=25, samples_per_chain=5, lag=2)
EXACT_LABEL_TOKENS = 100


def word_weights_test(phi_w: np.ndarray, ncd: np.ndarray, alpha_prior: np.ndarray) -> np.ndarray:
    """Label weights for a word token with Phi fixed: phi[c, w] * (N_cd + alpha'_c)."""
    return np.asarray(phi_w) * (np.asarray(ncd) + np.asarray(alpha_prior))


def topic_weights_test(phi_prime_c: np.ndarray, ndt: np.ndarray, gamma: float) -> np.ndarray:
    """Topic weights for a label token with Phi' fixed: phi'[t, c] * (N_dt + gamma)."""
    return np.asarray(phi_prime_c) * (np.asarray(ndt) + gamma)


def label_token_log_weights(
    label_counts: np.ndarray, ncd: np.ndarray, phi_prime_t: np.ndarray, eta: float, alpha: float, M: int
) -> np.ndarray:
    """Log weights for one label token given the other tokens' counts.

    For each candidate c the prior is rebuilt as eta * N_i / M + alpha with the
    token set to c, and weighted by prod_j Gamma(alpha'_j + N_jd) / Gamma(alpha'_j)
    times phi'[t, c]. `label_counts` must exclude the token being resampled.
    """
    label_counts = np.asarray(label_counts, dtype=float)
    ncd = np.asarray(ncd, dtype=float)
    C = len(ncd)
    out = np.empty(C)
    with np.errstate(divide="ignore"):
        log_phi = np.log(np.asarray(phi_prime_t, dtype=float))
    for c in range(C):
        counts = label_counts.copy()
        counts[c] += 1
        a = eta * counts / M + alpha
        out[c] = log_phi[c] + _log_gamma_ratio(a, ncd)
    return out


def _log_gamma_ratio(a: np.ndarray, n: np.ndarray) -> float:
    if np.any((a <= 0) & (n > 0)):
        return -np.inf
    keep = n > 0
    return float(np.sum(gammaln(a[keep] + n[keep]) - gammaln(a[keep])))


def gibbs_step_word_test(i: int, z: np.ndarray, ncd: np.ndarray, phi_tok: np.ndarray, alpha_prior, u: float) -> int:
    """Resample word assignment `i` in place (reference path)."""
    ncd[z[i]] -= 1
    k = _draw(word_weights_test(phi_tok[i], ncd, alpha_prior), u)
    z[i] = k
    ncd[k] += 1
    return k


def sample_label_token(j: int, lab: np.ndarray, zp: np.ndarray, nlab: np.ndarray, ncd: np.ndarray,
                       phi_prime: np.ndarray, eta: float, alpha: float, u: float) -> int:
    """Resample label token `j` in place (reference path)."""
    M = len(lab)
    nlab[lab[j]] -= 1
    logw = label_token_log_weights(nlab, ncd, phi_prime[zp[j]], eta, alpha, M)
    if not np.any(np.isfinite(logw)):
        nlab[lab[j]] += 1
        raise NumericError("degenerate token: every candidate label has zero weight")
    w = np.exp(logw - np.max(logw))
    c = _draw(w, u)
    lab[j] = c
    nlab[c] += 1
    return c


def gibbs_step_topic_test(j: int, tok_labels: np.ndarray, zp: np.ndarray, ndt: np.ndarray,
                          phi_prime: np.ndarray, gamma: float, u: float) -> int:
    """Resample the topic of label token `j` in place (reference path)."""
    ndt[zp[j]] -= 1
    t = _draw(topic_weights_test(phi_prime[:, tok_labels[j]], ndt, gamma), u)
    zp[j] = t
    ndt[t] += 1
    return t


@dataclass(frozen=True)
class _Setup:
    constant_prior: np.ndarray
    dependency: bool
    eta: float
    alpha: float
    gamma: float


def _setup(model: TrainedModel, hyper: Hyperparams) -> _Setup:
    C = model.C
    alpha = hyper.alpha_sum / C
    if model.variant == "flat":
        # Same total prior weight as the other variants, spread evenly.
        prior = np.full(C, (hyper.eta + hyper.alpha_sum) / C)
        return _Setup(prior, False, hyper.eta, alpha, 1.0)
    gamma = hyper.gamma_sum / model.T
    if model.variant == "prior":
        return _Setup(hyper.eta * model.phi_prime_sets[0][0] + alpha, False, hyper.eta, alpha, gamma)
    return _Setup(np.zeros(C), True, hyper.eta, alpha, gamma)


def _chain_rng(seed: int, doc: Document, chain: int) -> np.random.Generator:
    return rngmod.stream(seed, rngmod.INFER, rngmod.string_key(doc.id), chain)


def _finish(sums, n_tokens: int, n_samples: int, dependency: bool) -> DocumentPosterior:
    theta_sum, prior_sum, count_sum, tp_sum = sums
    theta = theta_sum / n_samples
    theta = theta / theta.sum()
    prior = prior_sum / n_samples
    counts = count_sum / n_samples
    # Rescale the averaged prior so its weight equals the document length.
    scores = counts + prior * (n_tokens / prior.sum())
    scores = scores / scores.sum()
    tp = tp_sum / n_samples if dependency else None
    return DocumentPosterior(theta=theta, alpha_prior=prior, scores=scores, theta_prime=tp)


def _doc_tokens(doc: Document, model: TrainedModel) -> np.ndarray:
    tokens = doc.tokens()
    tokens = tokens[tokens < model.W]
    if len(tokens) == 0:
        raise DataError(f"document {doc.id!r} has no in-vocabulary words")
    return tokens


def infer_document_fast(
    doc: Document,
    model: TrainedModel,
    hyper: Hyperparams,
    schedule: SamplingSchedule = INFER_SCHEDULE,
    seed: int = 0,
) -> DocumentPosterior:
    """Score all labels for `doc` with the fast sampler.

    Chains are spread evenly over the stored Phi' sets (chain k uses set
    k mod K); samples from all chains are pooled.
    """
    tokens = _doc_tokens(doc, model)
    st = _setup(model, hyper)
    phi_tok = np.ascontiguousarray(model.phi[:, tokens].T)
    dummy = np.ones((1, model.C)) / model.C
    sums = None
    for k in range(schedule.chains):
        phi_prime = model.phi_prime_sets[k % model.K] if st.dependency else dummy
        n_u = K.fast_chain_uniforms(len(tokens), st.dependency, schedule.burn_in,
                                    schedule.samples_per_chain, schedule.lag)
        u = _chain_rng(seed, doc, k).random(n_u)
        out = K.fast_chain(phi_tok, np.ascontiguousarray(phi_prime), st.constant_prior, st.dependency,
                           st.eta, st.alpha, st.gamma, schedule.burn_in,
                           schedule.samples_per_chain, schedule.lag, u)
        sums = out if sums is None else tuple(a + b for a, b in zip(sums, out))
    n = schedule.chains * schedule.samples_per_chain
    return _finish(sums, len(tokens), n, st.dependency)


def infer_document_exact(
    doc: Document,
    model: TrainedModel,
    hyper: Hyperparams,
    M_d: int = EXACT_LABEL_TOKENS,
    schedule: SamplingSchedule = INFER_SCHEDULE,
    seed: int = 0,
) -> DocumentPosterior:
    """Score all labels for `doc` with the sampler that draws explicit label tokens.

    Flat models have no label-token level; they fall back to the fast sampler,
    which is exact for them.
    """
    if M_d < 1:
        raise ValueError("M_d must be >= 1")
    if model.variant == "flat":
        return infer_document_fast(doc, model, hyper, schedule, seed)
    tokens = _doc_tokens(doc, model)
    C = model.C
    alpha = hyper.alpha_sum / C
    gamma = hyper.gamma_sum / model.T
    phi_tok = np.ascontiguousarray(model.phi[:, tokens].T)
    sums = None
    for k in range(schedule.chains):
        phi_prime = np.ascontiguousarray(model.phi_prime_sets[k % model.K])
        n_u = K.exact_chain_uniforms(len(tokens), M_d, schedule.burn_in, schedule.samples_per_chain, schedule.lag)
        u = _chain_rng(seed, doc, k).random(n_u)
        *out, status = K.exact_chain(phi_tok, phi_prime, hyper.eta, alpha, gamma, M_d,
                                     schedule.burn_in, schedule.samples_per_chain, schedule.lag, u)
        if status:
            raise NumericError(f"degenerate token while sampling labels of {doc.id!r}")
        sums = tuple(out) if sums is None else tuple(a + b for a, b in zip(sums, out))
    n = schedule.chains * schedule.samples_per_chain
    return _finish(sums, len(tokens), n, True)


def infer_corpus(
    corpus: Corpus,
    model: TrainedModel,
    hyper: Hyperparams,
    schedule: SamplingSchedule = INFER_SCHEDULE,
    mode: str = "fast",
    seed: int = 0,
    threads: int = 1,
    M_d: int = EXACT_LABEL_TOKENS,
) -> tuple[list[tuple[str, DocumentPosterior]], list[str]]:
    """Infer every document; documents without in-vocabulary words are skipped.

    Returns (doc_id, posterior) pairs in corpus order and the skipped ids.
    """
    if mode not in ("fast", "exact"):
        raise ValueError(f"unknown inference mode {mode!r}")
    todo, skipped = [], []
    for doc in corpus.docs:
        if any(w < model.W for w in doc.word_counts):
            todo.append(doc)
        else:
            skipped.append(doc.id)
    if skipped:
        log.warning("skipping %d document(s) with no in-vocabulary words", len(skipped))

    def one(doc):
        if mode == "exact":
            return infer_document_exact(doc, model, hyper, M_d, schedule, seed)
        return infer_document_fast(doc, model, hyper, schedule, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            posts = list(ex.map(one, todo))
    else:
        posts = [one(d) for d in todo]
    return [(d.id, p) for d, p in zip(todo, posts)], skipped
