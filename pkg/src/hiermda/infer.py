"""Target-domain prediction from a trained ensemble.

Confidence-based prediction runs every member on the input and keeps the
distribution with the lowest entropy (ties go to the lowest domain index);
labels are argmax with ties to the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend, netcore
from .hier import HierEnsemble, NotApplicableError


@dataclass(frozen=True)
class InferenceMethod:
    kind: str
    domain: int | None = None

    def __post_init__(self):
        if self.kind not in ("center", "confidence", "per_source"):
            raise ValueError(f"unknown inference method {self.kind!r}")
        if (self.kind == "per_source") != (self.domain is not None):
            raise ValueError("per_source needs a domain index, other methods take none")

    @classmethod
    def per_source(cls, j: int) -> "InferenceMethod":
        return cls("per_source", j)

    def __str__(self):
        return f"per_source({self.domain})" if self.kind == "per_source" else self.kind


CENTER = InferenceMethod("center")
CONFIDENCE = InferenceMethod("confidence")


def entropy(p) -> float | np.ndarray:
    """Shannon entropy in nats along the last axis, probabilities floored at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    # + 0.0 turns the -0.0 of a one-hot input into 0.0
    return -np.sum(p * np.log(np.maximum(p, _backend.PROB_FLOOR)), axis=-1) + 0.0


def _member_probs(ens: HierEnsemble, X) -> np.ndarray:
    # (J, n, K)
    return np.stack([netcore.forward_batch(ens.spec, t, X) for t in ens.thetas])


def _confidence_batch(ens: HierEnsemble, X):
    probs = _member_probs(ens, X)
    ent = entropy(probs)                    # (J, n)
    chosen = np.argmin(ent, axis=0)         # first minimum wins
    picked = probs[chosen, np.arange(probs.shape[1])]
    return np.argmax(picked, axis=1), chosen, picked


def predict_confidence(ens: HierEnsemble, x):
    """Returns (label, chosen domain index, chosen distribution)."""
    labels, chosen, picked = _confidence_batch(ens, np.asarray(x, dtype=np.float64)[None, :])
    return int(labels[0]), int(chosen[0]), picked[0]


def predict_center(ens: HierEnsemble, x):
    if ens.is_shared:
        raise NotApplicableError("center prediction is N/A for the shared-weights model")
    p = netcore.forward(ens.spec, ens.center, x)
    return int(np.argmax(p)), p


def predict_labels(ens: HierEnsemble, X, method: InferenceMethod = CONFIDENCE) -> np.ndarray:
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    if method.kind == "confidence":
        return _confidence_batch(ens, X)[0]
    if method.kind == "center":
        if ens.is_shared:
            raise NotApplicableError("center prediction is N/A for the shared-weights model")
        return np.argmax(netcore.forward_batch(ens.spec, ens.center, X), axis=1)
    if not 0 <= method.domain < ens.num_domains:
        raise IndexError(f"no member {method.domain} in a {ens.num_domains}-member ensemble")
    return np.argmax(netcore.forward_batch(ens.spec, ens.thetas[method.domain], X), axis=1)


def evaluate(ens: HierEnsemble, data, method: InferenceMethod = CONFIDENCE) -> float:
    """Accuracy of ``method`` on a labelled dataset."""
    X, y = netcore.as_arrays(data, ens.spec)
    return float(np.mean(predict_labels(ens, X, method) == y))
