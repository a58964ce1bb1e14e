"""Hierarchical ensemble: J domain classifiers tied to a center by Gaussian priors.

The objective minimised during training is

    sum_j CE(theta_j; D_j) + lam1 * sum_j ||theta_j - center||^2 + lam2 * ||center||^2

where the prior on each member is N(center, (2 lam1)^-1 I) and the prior on
the center is N(0, (2 lam2)^-1 I). With ``group_lambdas`` set, encoder and
decoder index ranges carry their own (lam1, lam2) pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend, netcore
from .netcore import NetSpec

INFINITY = math.inf
"""``lambda1`` value selecting the single shared-weights model."""


class NotApplicableError(RuntimeError):
    """Operation undefined for the shared-weights (lambda1 = inf) ensemble."""


@dataclass
class HierEnsemble:
    spec: NetSpec
    thetas: list[np.ndarray]
    center: np.ndarray
    lambda1: float = 1e-3
    lambda2: float = 0.0
    # ((lam1_enc, lam2_enc), (lam1_dec, lam2_dec))
    group_lambdas: tuple[tuple[float, float], tuple[float, float]] | None = None
    domain_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = self.spec.num_params
        self.center = np.ascontiguousarray(self.center, dtype=np.float64)
        if self.center.shape != (n,):
            raise netcore.DimensionError(f"center has shape {self.center.shape}, expected ({n},)")
        if not self.thetas:
            raise ValueError("ensemble needs at least one domain")
        if self.lambda1 < 0 or self.lambda2 < 0 or math.isnan(self.lambda1):
            raise ValueError("lambdas must be nonnegative")
        if math.isinf(self.lambda2):
            raise ValueError("lambda2 must be finite")
        if self.group_lambdas is not None:
            (a, b), (c, d) = self.group_lambdas
            vals = (a, b, c, d)
            if any(v < 0 or not math.isfinite(v) for v in vals):
                raise ValueError("group lambdas must be finite and nonnegative")
            if self.is_shared:
                raise ValueError("group lambdas cannot be combined with lambda1 = inf")
            self.group_lambdas = ((float(a), float(b)), (float(c), float(d)))
        if self.is_shared:
            # members alias the center, so they coincide by construction
            self.thetas = [self.center] * len(self.thetas)
        else:
            self.thetas = [np.ascontiguousarray(t, dtype=np.float64) for t in self.thetas]
            for t in self.thetas:
                if t.shape != (n,):
                    raise netcore.DimensionError(f"member has shape {t.shape}, expected ({n},)")
        if not self.domain_names:
            self.domain_names = [f"source{j}" for j in range(len(self.thetas))]
        if len(self.domain_names) != len(self.thetas):
            raise ValueError("one domain name per member required")

    @classmethod
    def create(cls, spec: NetSpec, num_domains: int, seed: int, lambda1=1e-3,
               lambda2=0.0, group_lambdas=None, domain_names=None) -> "HierEnsemble":
        """All members and the center start from the same initialisation."""
        start = netcore.init_params(spec, seed)
        return cls(spec, [start.copy() for _ in range(num_domains)], start.copy(),
                   lambda1, lambda2, group_lambdas, list(domain_names or []))

    @property
    def num_domains(self) -> int:
        return len(self.thetas)

    @property
    def is_shared(self) -> bool:
        return math.isinf(self.lambda1)

    @property
    def mode(self) -> str:
        if self.is_shared:
            return "shared"
        if self.lambda1 == 0 and self.group_lambdas is None:
            return "independent"
        if self.group_lambdas is not None and self.group_lambdas[0][0] == 0 == self.group_lambdas[1][0]:
            return "independent"
        return "hierarchical"

    def copy(self) -> "HierEnsemble":
        return HierEnsemble(self.spec, [t.copy() for t in self.thetas], self.center.copy(),
                            self.lambda1, self.lambda2, self.group_lambdas,
                            list(self.domain_names))

    def lambda_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate (lam1, lam2) weights."""
        n = self.spec.num_params
        if self.group_lambdas is None:
            lam1 = 0.0 if self.is_shared else self.lambda1
            return np.full(n, float(lam1)), np.full(n, float(self.lambda2))
        (l1e, l2e), (l1c, l2c) = self.group_lambdas
        ne = self.spec.num_encoder_params
        lam1 = np.empty(n)
        lam2 = np.empty(n)
        lam1[:ne], lam1[ne:] = l1e, l1c
        lam2[:ne], lam2[ne:] = l2e, l2c
        return lam1, lam2


def _check_sources(ens: HierEnsemble, sources) -> list:
    sources = list(sources)
    if len(sources) != ens.num_domains:
        raise ValueError(f"ensemble has {ens.num_domains} members but got {len(sources)} domains")
    return sources


def prior_penalty(ens: HierEnsemble) -> float:
    """Coupling plus center-decay penalty.

    The coupling part is zero for the shared ensemble since every member is the
    center; its ``lambda2`` term is kept.
    """
    lam1, lam2 = ens.lambda_vectors()
    c = ens.center
    decay = float(np.dot(lam2, c * c))
    if ens.is_shared:
        return decay
    spread = np.zeros_like(c)
    for t in ens.thetas:
        d = t - c
        spread += d * d
    return float(np.dot(lam1, spread)) + decay


def prior_grads(ens: HierEnsemble) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients of ``prior_penalty`` wrt each member and the center."""
    if ens.is_shared:
        raise NotApplicableError("coupling gradients are undefined for lambda1 = inf")
    lam1, lam2 = ens.lambda_vectors()
    c = ens.center
    member_grads = []
    diff_sum = np.zeros_like(c)
    for t in ens.thetas:
        d = t - c
        member_grads.append(2.0 * lam1 * d)
        diff_sum += d
    center_grad = -2.0 * lam1 * diff_sum + 2.0 * lam2 * c
    return member_grads, center_grad


def total_loss(ens: HierEnsemble, sources) -> float:
    sources = _check_sources(ens, sources)
    data = 0.0
    for theta, ds in zip(ens.thetas, sources):
        data += netcore.data_loss(ens.spec, theta, ds)
    return data + prior_penalty(ens)


def _mvn_iso_logpdf(x: np.ndarray, mean: np.ndarray, precision: np.ndarray) -> float:
    d = x - mean
    return float(0.5 * np.sum(np.log(precision / (2.0 * math.pi))) - 0.5 * np.dot(precision, d * d))


def log_posterior(ens: HierEnsemble, sources) -> float:
    """Unnormalised log posterior: categorical likelihoods plus normalised
    Gaussian log-densities of every member around the center and of the
    center around zero."""
    sources = _check_sources(ens, sources)
    if ens.is_shared:
        raise NotApplicableError("the lambda1 = inf prior is degenerate")
    lam1, lam2 = ens.lambda_vectors()
    if np.any(lam1 <= 0) or np.any(lam2 <= 0):
        raise ValueError("log_posterior needs strictly positive lambdas")
    total = 0.0
    for theta, ds in zip(ens.thetas, sources):
        X, y = netcore.as_arrays(ds, ens.spec)
        probs = netcore.forward_batch(ens.spec, theta, X)
        picked = probs[np.arange(len(y)), y]
        total += float(np.sum(np.log(np.maximum(picked, _backend.PROB_FLOOR))))
    for theta in ens.thetas:
        total += _mvn_iso_logpdf(theta, ens.center, 2.0 * lam1)
    total += _mvn_iso_logpdf(ens.center, np.zeros_like(ens.center), 2.0 * lam2)
    return total


def quadratic_map_oracle(anchors, lambda1: float, lambda2: float = 0.0):
    """Closed-form minimiser when each domain's data loss is replaced by
    ``0.5 * ||theta_j - a_j||^2``.

    Zeroing the member gradients gives theta_j = (a_j + 2 lam1 c) / (1 + 2 lam1);
    substituting into the zeroed center gradient gives
    c = lam1 * sum_j a_j / (J lam1 + lam2 + 2 lam1 lam2).
    """
    if lambda1 <= 0:
        raise ValueError("lambda1 must be positive")
    A = np.array([np.asarray(a, dtype=np.float64) for a in anchors])
    J = A.shape[0]
    center = lambda1 * A.sum(axis=0) / (J * lambda1 + lambda2 + 2.0 * lambda1 * lambda2)
    members = [(a + 2.0 * lambda1 * center) / (1.0 + 2.0 * lambda1) for a in A]
    return members, center
