"""MAP training of a hierarchical ensemble.

Each step visits the domains in order, giving every domain that still has a
minibatch left one adaptive-moment step on its own cross-entropy gradient.
Once all domains have moved, a single plain gradient step with ``lr_couple``
is applied to the coupling/decay penalty, on every member and on the center.

Shuffling uses one generator per (seed, epoch, domain index), so a domain's
minibatch schedule doesn't depend on how many other domains are trained
alongside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend, hier, netcore
from .hier import HierEnsemble


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 70
    batch_size: int = 16
    lr_data: float = 1e-3
    lr_couple: float = 1e-2
    lambda1: float = 1e-3
    lambda2: float = 0.0
    seed: int = 0
    group_lambdas: tuple | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr_data <= 0 or self.lr_couple <= 0:
            raise ValueError("learning rates must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambdas must be nonnegative")

    @property
    def mode(self) -> str:
        if math.isinf(self.lambda1):
            return "shared"
        if self.group_lambdas is not None:
            coupled = any(g[0] > 0 for g in self.group_lambdas)
        else:
            coupled = self.lambda1 > 0
        return "hierarchical" if coupled else "independent"


@dataclass
class OptimState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, size: int) -> "OptimState":
        return cls(np.zeros(size), np.zeros(size))


def adaptive_step(state: OptimState, theta: np.ndarray, grad, lr: float):
    """Bias-corrected adaptive-moment update, no weight decay. Updates
    ``state`` and ``theta`` in place and returns both."""
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    if not (theta.shape == grad.shape == state.m.shape):
        raise netcore.DimensionError("parameter, gradient and state lengths differ")
    state.step += 1
    _backend.kernels.adam_update(theta, state.m, state.v, grad, lr,
                                 state.beta1, state.beta2, state.eps, state.step)
    return state, theta


def sgd_step(theta, grad, lr: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape:
        raise netcore.DimensionError("parameter and gradient lengths differ")
    return theta - lr * grad


def shuffle_rng(seed: int, epoch: int, domain: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, domain])


@dataclass
class _Domain:
    X: np.ndarray
    y: np.ndarray
    num_batches: int = field(init=False)
    batch_size: int = 16

    def __post_init__(self):
        self.num_batches = -(-len(self.y) // self.batch_size)

    def batches(self, seed, epoch, index):
        perm = shuffle_rng(seed, epoch, index).permutation(len(self.y))
        bs = self.batch_size
        return [perm[s * bs:(s + 1) * bs] for s in range(self.num_batches)]


def _prepare(spec, sources, batch_size):
    return [_Domain(*netcore.as_arrays(ds, spec), batch_size=batch_size) for ds in sources]


def _data_step(spec, theta, state, dom, idx, lr):
    _, g = _backend.kernels.loss_and_grad(spec.layer_widths, spec.act_code, theta,
                                          dom.X[idx], dom.y[idx])
    state.step += 1
    _backend.kernels.adam_update(theta, state.m, state.v, g, lr,
                                 state.beta1, state.beta2, state.eps, state.step)


def _check_coupling_stable(cfg: TrainConfig, num_domains: int) -> None:
    # the penalty Hessian's largest eigenvalue is 2 lam1 (J + 1) + 2 lam2
    if cfg.mode == "shared":
        lam1, lam2 = 0.0, cfg.lambda2
    elif cfg.group_lambdas is not None:
        lam1 = max(g[0] for g in cfg.group_lambdas)
        lam2 = max(g[1] for g in cfg.group_lambdas)
    else:
        lam1, lam2 = cfg.lambda1, cfg.lambda2
    curvature = 2.0 * lam1 * (num_domains + 1) + 2.0 * lam2
    if cfg.lr_couple * curvature >= 2.0:
        raise ValueError(
            f"lr_couple={cfg.lr_couple:g} diverges for this penalty (needs < {2.0 / curvature:.3g})")


def train(ens: HierEnsemble, sources, cfg: TrainConfig, on_epoch=None):
    """Train a copy of ``ens`` on ``sources``; returns (ensemble, per-epoch loss).

    The coupling strengths come from ``cfg``; ``ens`` supplies the network and
    starting parameters. In shared mode training starts from ``ens.center``.
    ``on_epoch(epoch, ensemble, loss)`` is called after every epoch and must
    not modify the ensemble.
    """
    sources = list(sources)
    if len(sources) != ens.num_domains:
        raise ValueError(f"ensemble has {ens.num_domains} members but got {len(sources)} domains")
    spec = ens.spec
    domains = _prepare(spec, sources, cfg.batch_size)
    _check_coupling_stable(cfg, len(domains))

    out = HierEnsemble(spec, [t.copy() for t in ens.thetas], ens.center.copy(),
                       cfg.lambda1, cfg.lambda2, cfg.group_lambdas, list(ens.domain_names))
    mode = cfg.mode
    n = spec.num_params
    if mode == "shared":
        states = [OptimState.fresh(n)]
    else:
        states = [OptimState.fresh(n) for _ in domains]
    lr_c = cfg.lr_couple
    history = []

    for epoch in range(cfg.epochs):
        schedules = [d.batches(cfg.seed, epoch, j) for j, d in enumerate(domains)]
        steps = max(d.num_batches for d in domains)
        for s in range(steps):
            for j, dom in enumerate(domains):
                if s >= dom.num_batches:
                    continue
                if mode == "shared":
                    _data_step(spec, out.center, states[0], dom, schedules[j][s], cfg.lr_data)
                else:
                    _data_step(spec, out.thetas[j], states[j], dom, schedules[j][s], cfg.lr_data)
            if mode == "hierarchical":
                member_grads, center_grad = hier.prior_grads(out)
                for theta, g in zip(out.thetas, member_grads):
                    theta -= lr_c * g
                out.center -= lr_c * center_grad
            elif cfg.lambda2 > 0 or cfg.group_lambdas is not None:
                # no coupling: only the center's own decay applies
                _, lam2 = out.lambda_vectors()
                out.center -= lr_c * (2.0 * lam2 * out.center)
        history.append(hier.total_loss(out, sources))
        if on_epoch is not None:
            on_epoch(epoch, out, history[-1])
    return out, history


def train_single(spec, theta, dataset, cfg: TrainConfig, domain_index: int = 0):
    """Train one classifier on one domain with the data optimizer only.

    Uses the same shuffling stream as domain ``domain_index`` of ``train``.
    """
    dom = _prepare(spec, [dataset], cfg.batch_size)[0]
    theta = np.array(theta, dtype=np.float64)
    if theta.shape != (spec.num_params,):
        raise netcore.DimensionError("parameter vector does not match spec")
    state = OptimState.fresh(spec.num_params)
    for epoch in range(cfg.epochs):
        for idx in dom.batches(cfg.seed, epoch, domain_index):
            _data_step(spec, theta, state, dom, idx, cfg.lr_data)
    return theta
