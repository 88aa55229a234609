"""Collapsed Gibbs training of label-word (Phi) and topic-label (Phi') distributions."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _kernels as K
from . import rng as rngmod
from .corpus import Corpus
from .errors import DataError
from .model import Hyperparams, TrainedModel, estimate_phi, estimate_phi_prime

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplingSchedule:
    chains: int = 1
    burn_in: int = 100
    samples_per_chain: int = 1
    lag: int = 0

    def __post_init__(self):
        if self.chains < 1 or self.burn_in < 1 or self.samples_per_chain < 1 or self.lag < 0:
            raise ValueError("chains, burn_in, samples_per_chain must be >= 1 and lag >= 0")

    def sample_sweeps(self) -> list[int]:
        """1-based sweep numbers at which samples are taken."""
        return [self.burn_in + k * (self.lag + 1) for k in range(self.samples_per_chain)]


PHI_SCHEDULE = SamplingSchedule(chains=8, burn_in=100)
PHI_PRIME_SCHEDULE = SamplingSchedule(chains=10, burn_in=500)


def _draw(weights: np.ndarray, u: float) -> int:
    cum = np.cumsum(weights)
    return int(min(np.searchsorted(cum, u * cum[-1], side="right"), len(cum) - 1))


def word_label_weights(nwc_w, nc, W, ncd, alpha_prior, beta_w):
    """Unnormalised label weights for one word token, counts excluding the token.

    nwc_w: counts of this word per label; nc: total tokens per label;
    ncd: the document's per-label counts.
    """
    return (np.asarray(nwc_w) + beta_w) / (np.asarray(nc) + W * beta_w) * (
        np.asarray(ncd) + np.asarray(alpha_prior)
    )


def topic_label_weights(nct_c, nt, C, ndt, beta_c, gamma):
    """Unnormalised topic weights for one label token, counts excluding the token."""
    return (np.asarray(nct_c) + beta_c) / (np.asarray(nt) + C * beta_c) * (np.asarray(ndt) + gamma)


class LabelWordSampler:
    """State of one Phi-training chain.

    Word assignments are restricted to each document's observed labels (the
    training prior is eta / M_d on observed labels and zero elsewhere), so
    per-document label counts are stored sparsely, aligned with the label list.
    """

    def __init__(self, corpus: Corpus, hyper: Hyperparams, seed: int = 0, chain: int = 0):
        for doc in corpus.docs:
            if not doc.labels or not doc.word_counts:
                raise DataError(f"training document {doc.id!r} needs at least one label and one word")
        self.hyper = hyper
        self.chain = chain
        self.W, self.C = corpus.W, corpus.C
        self.words, self.wptr = corpus.token_arrays()
        self.labels, self.lptr = corpus.label_arrays()
        self.doc_of_token = np.repeat(np.arange(corpus.D), np.diff(self.wptr))
        sizes = np.diff(self.lptr)
        self.alpha_local = np.repeat(hyper.eta / sizes, sizes).astype(float)
        self.rng = rngmod.stream(seed, rngmod.TRAIN_PHI, chain)

        local_n = sizes[self.doc_of_token]
        self.z = np.floor(self.rng.random(len(self.words)) * local_n).astype(np.int64)
        self.nwc = np.zeros((self.W, self.C), dtype=np.int64)
        self.nc = np.zeros(self.C, dtype=np.int64)
        self.ncd = np.zeros(len(self.labels), dtype=np.int64)
        slot = self.lptr[self.doc_of_token] + self.z
        np.add.at(self.nwc, (self.words, self.labels[slot]), 1)
        np.add.at(self.nc, self.labels[slot], 1)
        np.add.at(self.ncd, slot, 1)
        self.sweeps = 0

    def sweep(self) -> None:
        u = self.rng.random(len(self.words))
        K.sweep_label_word(
            self.words, self.wptr, self.labels, self.lptr, self.z,
            self.nwc, self.nc, self.ncd, self.alpha_local, self.hyper.beta_w, u,
        )
        self.sweeps += 1

    def token_labels(self) -> np.ndarray:
        """Global label id assigned to each word token."""
        return self.labels[self.lptr[self.doc_of_token] + self.z]

    def phi(self) -> np.ndarray:
        return estimate_phi(self.nwc, self.hyper.beta_w)

    def step(self, i: int, alpha_prior: np.ndarray, u: float) -> int:
        """Resample token `i` with a dense length-C prior (reference path)."""
        return gibbs_step_word(self, i, alpha_prior, self.hyper.beta_w, u)

    def log_likelihood(self) -> float:
        b = self.hyper.beta_w
        ll = np.sum(gammaln(self.nwc + b)) - self.W * self.C * gammaln(b)
        ll += self.C * gammaln(self.W * b) - np.sum(gammaln(self.nc + self.W * b))
        ll += np.sum(gammaln(self.ncd + self.alpha_local) - gammaln(self.alpha_local))
        n_d = np.diff(self.wptr)
        ll += np.sum(gammaln(np.full(len(n_d), self.hyper.eta)) - gammaln(n_d + self.hyper.eta))
        return float(ll)

    def invariant_violations(self) -> list[str]:
        out = []
        if (self.nwc < 0).any() or (self.ncd < 0).any():
            out.append("negative count")
        if not np.array_equal(self.nwc.sum(axis=0), self.nc):
            out.append("label totals disagree with word-label counts")
        if self.nc.sum() != len(self.words):
            out.append("word-label counts do not sum to the token count")
        per_doc = np.add.reduceat(self.ncd, self.lptr[:-1]) if len(self.ncd) else self.ncd
        if not np.array_equal(per_doc, np.diff(self.wptr)):
            out.append("document label counts do not sum to document lengths")
        sizes = np.diff(self.lptr)[self.doc_of_token]
        if np.any(self.z < 0) or np.any(self.z >= sizes):
            out.append("assignment outside the document's observed labels")
        expect = np.zeros_like(self.nwc)
        np.add.at(expect, (self.words, self.token_labels()), 1)
        if not np.array_equal(expect, self.nwc):
            out.append("word-label counts inconsistent with assignments")
        return out


def gibbs_step_word(state: LabelWordSampler, i: int, alpha_prior, beta_w: float, u: float) -> int:
    """Resample the label of word token `i` given all other assignments.

    Counts are decremented for the token, the label is drawn with weight
    (N_wc + beta_W) / (N_c + W beta_W) * (N_cd + alpha'_c), and counts are
    re-incremented. Candidates are restricted to the document's labels, whose
    prior is the only positive one during training.
    """
    d = state.doc_of_token[i]
    l0, l1 = state.lptr[d], state.lptr[d + 1]
    labels = state.labels[l0:l1]
    w = state.words[i]
    k = state.z[i]
    state.nwc[w, labels[k]] -= 1
    state.nc[labels[k]] -= 1
    state.ncd[l0 + k] -= 1
    alpha_prior = np.asarray(alpha_prior, dtype=float)
    weights = word_label_weights(
        state.nwc[w, labels], state.nc[labels], state.W, state.ncd[l0:l1], alpha_prior[labels], beta_w
    )
    if not np.any(weights > 0):
        raise DataError("all candidate label weights are zero")
    k = _draw(weights, u)
    state.z[i] = k
    state.nwc[w, labels[k]] += 1
    state.nc[labels[k]] += 1
    state.ncd[l0 + k] += 1
    return int(labels[k])


class TopicLabelSampler:
    """State of one Phi'-training chain: unsupervised LDA over label tokens."""

    def __init__(self, corpus: Corpus, hyper: Hyperparams, seed: int = 0, chain: int = 0):
        self.hyper = hyper
        self.chain = chain
        self.T, self.C = hyper.T, corpus.C
        self.labels, self.lptr = corpus.label_arrays()
        self.doc_of_token = np.repeat(np.arange(corpus.D), np.diff(self.lptr))
        self.rng = rngmod.stream(seed, rngmod.TRAIN_PHI_PRIME, chain)
        self.zp = np.floor(self.rng.random(len(self.labels)) * self.T).astype(np.int64)
        self.nct = np.zeros((self.C, self.T), dtype=np.int64)
        self.nt = np.zeros(self.T, dtype=np.int64)
        self.ndt = np.zeros((corpus.D, self.T), dtype=np.int64)
        np.add.at(self.nct, (self.labels, self.zp), 1)
        np.add.at(self.nt, self.zp, 1)
        np.add.at(self.ndt, (self.doc_of_token, self.zp), 1)
        self.sweeps = 0

    def sweep(self) -> None:
        u = self.rng.random(len(self.labels))
        K.sweep_topic_label(
            self.labels, self.lptr, self.zp, self.nct, self.nt, self.ndt,
            self.hyper.beta_c, self.hyper.gamma, u,
        )
        self.sweeps += 1

    def phi_prime(self) -> np.ndarray:
        return estimate_phi_prime(self.nct, self.hyper.beta_c)

    def log_likelihood(self) -> float:
        b, g = self.hyper.beta_c, self.hyper.gamma
        ll = np.sum(gammaln(self.nct + b)) - self.C * self.T * gammaln(b)
        ll += self.T * gammaln(self.C * b) - np.sum(gammaln(self.nt + self.C * b))
        ll += np.sum(gammaln(self.ndt + g)) - self.ndt.size * gammaln(g)
        m_d = self.ndt.sum(axis=1)
        ll += len(m_d) * gammaln(self.T * g) - np.sum(gammaln(m_d + self.T * g))
        return float(ll)

    def invariant_violations(self) -> list[str]:
        out = []
        if (self.nct < 0).any() or (self.ndt < 0).any():
            out.append("negative count")
        if not np.array_equal(self.ndt.sum(axis=1), np.diff(self.lptr)):
            out.append("document topic counts do not sum to label counts")
        if not np.array_equal(self.nct.sum(axis=0), self.nt):
            out.append("topic totals disagree with label-topic counts")
        expect = np.zeros_like(self.nct)
        np.add.at(expect, (self.labels, self.zp), 1)
        if not np.array_equal(expect, self.nct):
            out.append("label-topic counts inconsistent with assignments")
        return out


def gibbs_step_labeltoken(state: TopicLabelSampler, i: int, gamma: float, beta_c: float, u: float) -> int:
    """Resample the topic of label token `i` (reference path for the compiled sweep)."""
    c = state.labels[i]
    d = state.doc_of_token[i]
    t = state.zp[i]
    state.nct[c, t] -= 1
    state.nt[t] -= 1
    state.ndt[d, t] -= 1
    weights = topic_label_weights(state.nct[c], state.nt, state.C, state.ndt[d], beta_c, gamma)
    t = _draw(weights, u)
    state.zp[i] = t
    state.nct[c, t] += 1
    state.nt[t] += 1
    state.ndt[d, t] += 1
    return t


def _run_chain(sampler, schedule: SamplingSchedule, estimate, log_every: int, on_sweep=None):
    targets = set(schedule.sample_sweeps())
    last = max(targets)
    acc = None
    for n in range(1, last + 1):
        sampler.sweep()
        if on_sweep is not None:
            on_sweep(sampler)
        if log_every and (n % log_every == 0 or n == last):
            log.info("chain=%d sweep=%d ll=%.6f", sampler.chain, n, sampler.log_likelihood())
        if n in targets:
            est = estimate(sampler)
            acc = est if acc is None else acc + est
    return acc / len(targets)


def _map_chains(fn, n_chains: int, threads: int):
    if threads <= 1 or n_chains == 1:
        return [fn(k) for k in range(n_chains)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(n_chains)))


def train_label_word(
    corpus: Corpus,
    hyper: Hyperparams,
    schedule: SamplingSchedule = PHI_SCHEDULE,
    seed: int = 0,
    threads: int = 1,
    log_every: int = 0,
    chain_ids=None,
) -> np.ndarray:
    """Estimate Phi (C x W) averaged over independent chains.

    Each chain starts from assignments drawn uniformly over the document's
    labels and takes samples at the schedule's sweeps; per-sample estimates
    are averaged element-wise and rows re-normalised.
    """
    if hyper.alpha_sum != 0:
        raise ValueError("training requires alpha_sum == 0")
    ids = list(range(schedule.chains)) if chain_ids is None else list(chain_ids)

    def one(k):
        s = LabelWordSampler(corpus, hyper, seed, ids[k])
        return _run_chain(s, schedule, LabelWordSampler.phi, log_every)

    estimates = _map_chains(one, len(ids), threads)
    phi = np.mean(estimates, axis=0)
    return phi / phi.sum(axis=1, keepdims=True)


def train_topic_label(
    corpus: Corpus,
    hyper: Hyperparams,
    schedule: SamplingSchedule = PHI_PRIME_SCHEDULE,
    seed: int = 0,
    threads: int = 1,
    log_every: int = 0,
) -> list[np.ndarray]:
    """One Phi' (T x C) per chain. Chains are not averaged: topic identities
    are arbitrary across chains."""

    def one(k):
        s = TopicLabelSampler(corpus, hyper, seed, k)
        return _run_chain(s, schedule, TopicLabelSampler.phi_prime, log_every)

    sets = _map_chains(one, schedule.chains, threads)
    return [pp / pp.sum(axis=1, keepdims=True) for pp in sets]


def train_model(
    corpus: Corpus,
    variant: str,
    hyper: Hyperparams,
    phi_schedule: SamplingSchedule = PHI_SCHEDULE,
    phi_prime_schedule: SamplingSchedule = PHI_PRIME_SCHEDULE,
    seed: int = 0,
    threads: int = 1,
    log_every: int = 0,
) -> TrainedModel:
    if variant == "prior" and hyper.T != 1:
        raise ValueError("prior models use a single topic")
    phi = train_label_word(corpus, hyper, phi_schedule, seed, threads, log_every)
    sets = []
    if variant != "flat":
        sets = train_topic_label(corpus, hyper, phi_prime_schedule, seed, threads, log_every)
    model = TrainedModel(phi, sets, variant, hyper, corpus.vocab, corpus.label_dict)
    model.validate()
    return model
