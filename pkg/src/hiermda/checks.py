"""Self-contained numerical checks run by ``hiermda check``.

Each check returns ``(name, passed, detail)``. They use small random
instances and finish in a few seconds.
"""

from __future__ import annotations

import numpy as np

from . import hier, netcore
from .data import Dataset
from .hier import HierEnsemble
from .netcore import NetSpec
from .train import TrainConfig, train, train_single


def _rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    small = np.abs(a) < floor
    worst = 0.0
    if np.any(small):
        if np.max(np.abs(a - b)[small]) > floor:
            return np.inf
    big = ~small
    if np.any(big):
        worst = float(np.max(np.abs(a - b)[big] / np.abs(a[big])))
    return worst


def _random_batch(rng, spec, n):
    X = rng.normal(size=(n, spec.num_inputs))
    y = rng.integers(0, spec.num_classes, size=n)
    return Dataset("rand", X, y)


def _random_ensemble(rng, spec, J, lam1, lam2, groups=None):
    center = rng.normal(size=spec.num_params)
    thetas = [center + 0.3 * rng.normal(size=spec.num_params) for _ in range(J)]
    return HierEnsemble(spec, thetas, center, lam1, lam2, groups)


def check_data_grad(seed=0, trials=10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        spec = NetSpec((3, 5, 4), "tanh" if t % 2 else "relu")
        theta = rng.normal(size=spec.num_params)
        batch = _random_batch(rng, spec, 4)
        analytic = netcore.data_grad(spec, theta, batch)
        numeric = netcore.fd_grad(lambda th: netcore.data_loss(spec, th, batch), theta, 1e-5)
        worst = max(worst, _rel_err(analytic, numeric))
    return "data_grad vs finite differences", worst <= 1e-5, f"max rel err {worst:.2e}"


def check_prior_grads(seed=1, trials=10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    spec = NetSpec((2, 3, 3))
    for t in range(trials):
        groups = ((0.3, 0.05), (1.5, 0.2)) if t % 2 else None
        ens = _random_ensemble(rng, spec, 3, 0.7, 0.1, groups)
        member_grads, center_grad = hier.prior_grads(ens)

        def member_loss(th, j):
            e = ens.copy()
            e.thetas[j] = th
            return hier.prior_penalty(e)

        def center_loss(c):
            e = ens.copy()
            e.center = c
            return hier.prior_penalty(e)

        for j in range(ens.num_domains):
            fd = netcore.fd_grad(lambda th: member_loss(th, j), ens.thetas[j], 1e-5)
            worst = max(worst, _rel_err(member_grads[j], fd))
        worst = max(worst, _rel_err(center_grad, netcore.fd_grad(center_loss, ens.center, 1e-5)))
    return "prior_grads vs finite differences", worst <= 1e-6, f"max rel err {worst:.2e}"


def check_posterior_gap(seed=2):
    rng = np.random.default_rng(seed)
    spec = NetSpec((2, 4, 3))
    worst = 0.0
    for _ in range(3):
        sources = [_random_batch(rng, spec, 5) for _ in range(2)]
        for lam1 in (1e-3, 1e-1):
            for lam2 in (1e-3, 1e-1):
                gaps = []
                for _ in range(5):
                    ens = _random_ensemble(rng, spec, 2, lam1, lam2)
                    gaps.append(hier.log_posterior(ens, sources) + hier.total_loss(ens, sources))
                const = gaps[0]
                worst = max(worst, (max(gaps) - min(gaps)) / (1 + abs(const)))
    return "log_posterior + total_loss is constant", worst <= 1e-8, f"spread {worst:.2e}"


def surrogate_descent(anchors, lambda1, lambda2, lr=0.2, steps=4000):
    """Gradient descent on sum_j 0.5 ||theta_j - a_j||^2 plus the prior penalty,
    with the penalty gradients taken from ``hier.prior_grads``."""
    anchors = [np.asarray(a, dtype=np.float64) for a in anchors]
    n = anchors[0].size
    # any spec with n parameters will do; the network itself is never evaluated
    spec = NetSpec((1, n // 2)) if n % 2 == 0 and n >= 4 else None
    if spec is None or spec.num_params != n:
        raise ValueError("anchor length must be an even number >= 4")
    ens = HierEnsemble(spec, [a.copy() for a in anchors], np.mean(anchors, axis=0),
                       lambda1, lambda2)
    for _ in range(steps):
        member_grads, center_grad = hier.prior_grads(ens)
        ens.thetas = [t - lr * ((t - a) + g) for t, a, g in zip(ens.thetas, anchors, member_grads)]
        ens.center = ens.center - lr * center_grad
    return ens.thetas, ens.center


def check_quadratic_oracle(seed=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for J in (2, 3):
        for lam2 in (0.0, 0.1):
            anchors = [rng.normal(size=4) for _ in range(J)]
            members, center = hier.quadratic_map_oracle(anchors, 0.5, lam2)
            got_members, got_center = surrogate_descent(anchors, 0.5, lam2)
            errs = [np.max(np.abs(got_center - center))]
            errs += [np.max(np.abs(t - m)) for t, m in zip(got_members, members)]
            worst = max(worst, float(max(errs)))
    return "gradient descent reaches the closed-form surrogate optimum", worst <= 1e-6, \
        f"max coord err {worst:.2e}"


def check_limiting_cases(seed=4):
    rng = np.random.default_rng(seed)
    spec = NetSpec((2, 6, 3))
    sources = []
    for n in (30, 45):
        X = rng.normal(size=(n, 2))
        sources.append(Dataset("d", X, (X[:, 0] > 0).astype(int) + (X[:, 1] > 1)))
    ens = HierEnsemble.create(spec, 2, seed=seed)
    cfg = TrainConfig(epochs=3, batch_size=8, lambda1=0.0, seed=seed)
    trained, _ = train(ens, sources, cfg)
    alone = [train_single(spec, ens.thetas[j], sources[j], cfg, domain_index=j) for j in range(2)]
    independent = all(np.array_equal(a, b) for a, b in zip(alone, trained.thetas))
    shared, _ = train(ens, sources, TrainConfig(epochs=3, batch_size=8,
                                                lambda1=hier.INFINITY, seed=seed))
    spread = max(float(np.max(np.abs(t - shared.center))) for t in shared.thetas)
    ok = independent and spread == 0.0
    return "limiting cases lambda1 = 0 and inf", ok, \
        f"independent bit-identical={independent}, shared spread={spread}"


ALL_CHECKS = (check_data_grad, check_prior_grads, check_posterior_gap,
              check_quadratic_oracle, check_limiting_cases)


def run_all():
    return [check() for check in ALL_CHECKS]
