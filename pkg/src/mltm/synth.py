"""Forward simulation of the Flat-, Prior- and Dependency-LDA generative processes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import rng as rngmod
from .corpus import Corpus, Dictionary, Document
from .model import VARIANTS

# A length is either fixed or ("poisson", mean); Poisson lengths are 1 + Poisson(mean - 1).
Length = Union[int, tuple]


@dataclass(frozen=True)
class GenParams:
    D: int = 100
    C: int = 10
    W: int = 100
    T: int = 3
    variant: str = "dependency"
    words_per_doc: Length = 50
    labels_per_doc: Length = 3
    beta_w: float = 0.1
    beta_c: float = 0.1
    gamma: float = 0.1
    eta: float = 50.0
    alpha: float = 0.0
    # Power-law label popularity (0 disables) and block structure: label c
    # mostly belongs to topic c % T, other topics get `topic_leak` of its mass.
    zipf_exponent: float = 0.0
    topic_leak: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.D, self.C, self.W, self.T) < 1:
            raise ValueError("D, C, W and T must all be >= 1")
        if min(self.beta_w, self.beta_c, self.gamma) <= 0:
            raise ValueError("Dirichlet concentrations must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "prior" and self.T != 1:
            raise ValueError("the prior process has a single topic (T=1)")
        if self.topic_leak <= 0:
            raise ValueError("topic_leak must be positive")


@dataclass
class SyntheticCorpus:
    corpus: Corpus
    phi: np.ndarray
    phi_prime: np.ndarray | None
    theta_prime: np.ndarray | None
    label_sets: list[tuple[int, ...]]
    label_token_counts: np.ndarray  # D x C, how often each label was drawn per document
    params: GenParams


def _length(spec: Length, rng: np.random.Generator) -> int:
    if isinstance(spec, (int, np.integer)):
        return int(spec)
    kind, mean = spec
    if kind != "poisson":
        raise ValueError(f"unknown length distribution {kind!r}")
    return 1 + int(rng.poisson(max(mean - 1.0, 0.0)))


def dirichlet(rng: np.random.Generator, conc: np.ndarray) -> np.ndarray:
    """Dirichlet draw by normalising independent Gamma variates.

    Zero concentrations give exact zeros. If every positive coordinate
    underflows, the mass goes to the largest concentration.
    """
    conc = np.asarray(conc, dtype=float)
    g = np.zeros_like(conc)
    pos = conc > 0
    g[pos] = rng.standard_gamma(conc[pos])
    total = g.sum()
    if total <= 0:
        g = np.zeros_like(conc)
        g[np.argmax(conc)] = 1.0
        return g
    return g / total


def phi_prime_concentration(p: GenParams) -> np.ndarray:
    """T x C Dirichlet concentrations for the topic-label distributions."""
    ranks = np.arange(1, p.C + 1, dtype=float)
    base = ranks ** (-p.zipf_exponent)
    base = base / base.sum() * p.C
    member = (np.arange(p.C)[None, :] % p.T) == np.arange(p.T)[:, None]
    weight = np.where(member, 1.0, p.topic_leak)
    return p.beta_c * base[None, :] * weight


def generate_corpus(p: GenParams) -> SyntheticCorpus:
    rng = rngmod.stream(p.seed, rngmod.SYNTH)
    phi_prime = None
    if p.variant != "flat":
        conc = phi_prime_concentration(p)
        phi_prime = np.vstack([dirichlet(rng, conc[t]) for t in range(p.T)])
    phi = np.vstack([dirichlet(rng, np.full(p.W, p.beta_w)) for _ in range(p.C)])

    theta_primes = np.zeros((p.D, p.T)) if p.variant == "dependency" else None
    docs, label_sets = [], []
    token_counts = np.zeros((p.D, p.C), dtype=np.int64)
    for d in range(p.D):
        M = max(_length(p.labels_per_doc, rng), 1)
        counts = np.zeros(p.C, dtype=np.int64)
        if p.variant == "flat":
            chosen = rng.choice(p.C, size=min(M, p.C), replace=False)
            counts[chosen] = 1
            M = len(chosen)
        else:
            if p.variant == "dependency":
                tp = dirichlet(rng, np.full(p.T, p.gamma))
                theta_primes[d] = tp
                topic_counts = rng.multinomial(M, tp)
            else:
                topic_counts = np.array([M])
            for t, n in enumerate(topic_counts):
                if n:
                    counts += rng.multinomial(n, phi_prime[t])
        token_counts[d] = counts
        alpha_prior = p.eta * counts / M + p.alpha
        theta = dirichlet(rng, alpha_prior)
        n_words = max(_length(p.words_per_doc, rng), 1)
        per_label = rng.multinomial(n_words, theta)
        word_counts = np.zeros(p.W, dtype=np.int64)
        for c in np.flatnonzero(per_label):
            word_counts += rng.multinomial(per_label[c], phi[c])
        labels = tuple(int(c) for c in np.flatnonzero(counts))
        label_sets.append(labels)
        wc = {int(w): int(word_counts[w]) for w in np.flatnonzero(word_counts)}
        docs.append(Document(f"d{d}", wc, labels))

    corpus = Corpus(
        tuple(docs),
        Dictionary(f"w{j}" for j in range(p.W)),
        Dictionary(f"c{i}" for i in range(p.C)),
    )
    return SyntheticCorpus(corpus, phi, phi_prime, theta_primes, label_sets, token_counts, p)
