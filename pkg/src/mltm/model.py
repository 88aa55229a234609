"""Model parameters, Dirichlet-multinomial point estimates and document priors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Dictionary
from .errors import NumericError

VARIANTS = ("flat", "prior", "dependency")

ROW_TOL = 1e-9


@dataclass(frozen=True)
class Hyperparams:
    """Dirichlet hyperparameters.

    `alpha_sum` and `gamma_sum` are totals; the per-element pseudocounts are
    ``alpha_sum / C`` and ``gamma_sum / T``.
    """

    eta: float = 50.0
    alpha_sum: float = 0.0
    beta_w: float = 0.01
    beta_c: float = 0.01
    gamma_sum: float = 1.0
    T: int = 1

    def __post_init__(self):
        if self.eta < 0 or self.alpha_sum < 0 or self.gamma_sum < 0:
            raise ValueError("eta, alpha_sum and gamma_sum must be non-negative")
        if self.beta_w <= 0 or self.beta_c <= 0:
            raise ValueError("beta_w and beta_c must be positive")
        if self.T < 1:
            raise ValueError("T must be >= 1")

    def alpha(self, C: int) -> float:
        return self.alpha_sum / C

    @property
    def gamma(self) -> float:
        return self.gamma_sum / self.T


def default_topics(C: int) -> int:
    return 200 if C > 500 else max(C, 1)


def training_hyperparams(n_label_tokens: int, C: int, T: int) -> Hyperparams:
    """Training defaults: eta=50, alpha=0, beta_W=0.01.

    beta_C is set so that the pseudocounts over all topics total about a
    tenth of the observed label tokens; gamma is 0.1 per topic.
    """
    beta_c = max(n_label_tokens, 1) / (10.0 * T * C)
    return Hyperparams(eta=50.0, alpha_sum=0.0, beta_w=0.01, beta_c=beta_c, gamma_sum=0.1 * T, T=T)


def inference_hyperparams(T: int = 1, eta: float = 150.0, alpha_sum: float = 30.0, gamma_sum: float = 150.0) -> Hyperparams:
    """Test-time defaults: total prior weight on theta of 180 (eta + alpha_sum)."""
    return Hyperparams(eta=eta, alpha_sum=alpha_sum, gamma_sum=gamma_sum, T=T)


@dataclass
class TrainedModel:
    phi: np.ndarray  # C x W, row c is the word distribution of label c
    phi_prime_sets: list[np.ndarray]  # K arrays, each T x C
    variant: str
    hyper: Hyperparams
    vocab: Dictionary = field(default_factory=Dictionary)
    label_dict: Dictionary = field(default_factory=Dictionary)

    @property
    def C(self) -> int:
        return self.phi.shape[0]

    @property
    def W(self) -> int:
        return self.phi.shape[1]

    @property
    def T(self) -> int:
        return self.phi_prime_sets[0].shape[0] if self.phi_prime_sets else 0

    @property
    def K(self) -> int:
        return len(self.phi_prime_sets)

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        check_stochastic(self.phi, "phi")
        for k, pp in enumerate(self.phi_prime_sets):
            if pp.shape[1] != self.C:
                raise NumericError(f"phi_prime set {k} has {pp.shape[1]} labels, expected {self.C}")
            check_stochastic(pp, f"phi_prime[{k}]")
        if self.variant == "flat" and self.phi_prime_sets:
            raise ValueError("flat models carry no phi_prime sets")
        if self.variant != "flat" and not self.phi_prime_sets:
            raise ValueError(f"{self.variant} models need at least one phi_prime set")
        if self.variant == "prior" and self.T != 1:
            raise ValueError("prior models have exactly one topic")


@dataclass
class DocumentPosterior:
    theta: np.ndarray
    alpha_prior: np.ndarray
    scores: np.ndarray
    theta_prime: np.ndarray | None = None


def check_stochastic(m: np.ndarray, name: str = "matrix") -> None:
    m = np.atleast_2d(m)
    sums = m.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
    if bad.size:
        r = int(bad[0])
        raise NumericError(f"{name}: row {r} sums to {sums[r]!r}, not 1")
    if np.any(m <= 0) or not np.all(np.isfinite(m)):
        raise NumericError(f"{name}: entries must be finite and strictly positive")


def estimate_phi(nwc: np.ndarray, beta_w: float) -> np.ndarray:
    """Label-word distributions from a W x C count matrix; returns C x W."""
    smoothed = np.asarray(nwc, dtype=float).T + beta_w
    return smoothed / smoothed.sum(axis=1, keepdims=True)


def estimate_theta(ncd: np.ndarray, alpha_prior: np.ndarray) -> np.ndarray:
    v = np.asarray(ncd, dtype=float) + np.asarray(alpha_prior, dtype=float)
    total = v.sum()
    if total <= 0:
        raise NumericError("theta undefined: zero counts and zero prior")
    return v / total


def estimate_phi_prime(nct: np.ndarray, beta_c: float) -> np.ndarray:
    """Topic-label distributions from a C x T count matrix; returns T x C."""
    return estimate_phi(nct, beta_c)


def estimate_theta_prime(ndt: np.ndarray, gamma: float) -> np.ndarray:
    """Topic proportions of one document; `gamma` is the per-topic pseudocount."""
    v = np.asarray(ndt, dtype=float) + gamma
    return v / v.sum()


def alpha_prior_from_counts(label_counts: np.ndarray, M_d: int, eta: float, alpha: float) -> np.ndarray:
    """Document prior from label-token counts: eta * N_i / M_d + alpha."""
    if M_d <= 0:
        raise ValueError("M_d must be positive")
    counts = np.asarray(label_counts, dtype=float)
    return eta * counts / M_d + alpha


def alpha_prior_dependency(
    theta_prime: np.ndarray, phi_prime: np.ndarray, eta: float, alpha: float
) -> np.ndarray:
    """Document prior from topic proportions: eta * (theta' . Phi') + alpha."""
    theta_prime = np.asarray(theta_prime, dtype=float)
    phi_prime = np.asarray(phi_prime, dtype=float)
    if phi_prime.ndim != 2 or theta_prime.shape != (phi_prime.shape[0],):
        raise ValueError(
            f"dimension mismatch: theta' {theta_prime.shape} vs phi' {phi_prime.shape}"
        )
    return eta * (theta_prime @ phi_prime) + alpha
