import math

import numpy as np
import pytest

from hiermda import netcore
from hiermda.data import Dataset, SynthConfig, gen_synth
from hiermda.hier import INFINITY, HierEnsemble
from hiermda.netcore import NetSpec
from hiermda.train import (OptimState, TrainConfig, adaptive_step, sgd_step, shuffle_rng,
                           train, train_single)


def toy_sources(rng, sizes=(40, 25, 33)):
    out = []
    for j, n in enumerate(sizes):
        X = rng.normal(size=(n, 2)) + 0.3 * j
        y = (X[:, 0] > 0.3 * j).astype(int) + 2 * (X[:, 1] > 0.3 * j)
        out.append(Dataset(f"s{j}", X, y))
    return out


class TestAdaptiveStep:
    def test_zero_grad_keeps_theta(self, backend):
        theta = np.array([0.5, -1.0])
        adaptive_step(OptimState.fresh(2), theta, np.zeros(2), 1e-3)
        np.testing.assert_array_equal(theta, [0.5, -1.0])

    def test_first_step_by_hand(self, backend):
        # t = 1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        g = np.array([0.3, -2.0, 1e-9])
        theta = np.zeros(3)
        state, theta = adaptive_step(OptimState.fresh(3), theta, g, 0.1)
        want = -0.1 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(theta, want, rtol=1e-12)
        assert theta[0] == pytest.approx(-0.1 * 0.3 / (0.3 + 1e-8), rel=1e-14)
        assert state.step == 1

    def test_constant_gradient_step_tends_to_lr(self, backend):
        theta = np.zeros(2)
        state = OptimState.fresh(2)
        g = np.array([0.7, -4.0])
        for _ in range(5000):
            prev = theta.copy()
            adaptive_step(state, theta, g, 1e-3)
        np.testing.assert_allclose(theta - prev, -1e-3 * np.sign(g), rtol=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(netcore.DimensionError):
            adaptive_step(OptimState.fresh(2), np.zeros(3), np.zeros(3), 0.1)


class TestSgdStep:
    def test_zero(self):
        np.testing.assert_array_equal(sgd_step(np.array([1.0, 2.0]), np.zeros(2), 0.5), [1.0, 2.0])

    def test_hand(self):
        np.testing.assert_array_equal(sgd_step(np.array([1.0, 1.0]), np.array([2.0, -2.0]), 0.5), [0.0, 2.0])

    def test_linearity(self):
        t, g1, g2 = np.array([0.25, -1.0]), np.array([1.0, 0.5]), np.array([-0.25, 2.0])
        np.testing.assert_allclose(sgd_step(sgd_step(t, g1, 0.5), g2, 0.5), sgd_step(t, g1 + g2, 0.5),
                                   rtol=1e-15)


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.epochs, cfg.batch_size, cfg.lr_data, cfg.lr_couple) == (70, 16, 1e-3, 1e-2)
        assert cfg.lambda2 == 0.0

    @pytest.mark.parametrize("lam,mode", [(0.0, "independent"), (1e-3, "hierarchical"),
                                          (INFINITY, "shared")])
    def test_mode(self, lam, mode):
        assert TrainConfig(lambda1=lam).mode == mode

    @pytest.mark.parametrize("kw", [{"epochs": 0}, {"batch_size": 0}, {"lr_data": 0.0},
                                    {"lambda1": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


class TestTrain:
    spec = NetSpec((2, 6, 4))

    def test_independent_matches_isolated_training(self, backend, rng):
        sources = toy_sources(rng)
        ens = HierEnsemble.create(self.spec, 3, seed=3)
        cfg = TrainConfig(epochs=4, batch_size=8, lambda1=0.0, seed=11)
        trained, _ = train(ens, sources, cfg)
        for j, ds in enumerate(sources):
            alone = train_single(self.spec, ens.thetas[j], ds, cfg, domain_index=j)
            assert alone.tobytes() == trained.thetas[j].tobytes()
        assert trained.center.tobytes() == ens.center.tobytes()

    def test_independent_center_decays_with_lambda2(self, rng):
        sources = toy_sources(rng)
        ens = HierEnsemble.create(self.spec, 3, seed=3)
        trained, _ = train(ens, sources, TrainConfig(epochs=2, lambda1=0.0, lambda2=0.5))
        steps = 2 * 3  # two epochs of ceil(40 / 16) steps
        np.testing.assert_allclose(trained.center, ens.center * (1 - 1e-2 * 2 * 0.5) ** steps,
                                   rtol=1e-12)

    def test_shared_members_track_center(self, backend, rng):
        sources = toy_sources(rng)
        ens = HierEnsemble.create(self.spec, 3, seed=3)
        trained, _ = train(ens, sources, TrainConfig(epochs=3, lambda1=INFINITY))
        assert max(float(np.max(np.abs(t - trained.center))) for t in trained.thetas) == 0.0
        assert not np.array_equal(trained.center, ens.center)

    def test_shared_equals_one_model_on_interleaved_batches(self, rng):
        sources = toy_sources(rng)
        ens = HierEnsemble.create(self.spec, 3, seed=3)
        cfg = TrainConfig(epochs=2, batch_size=8, lambda1=INFINITY, seed=2)
        trained, _ = train(ens, sources, cfg)
        theta = ens.center.copy()
        state = OptimState.fresh(self.spec.num_params)
        for epoch in range(2):
            perms = [shuffle_rng(2, epoch, j).permutation(len(ds)) for j, ds in enumerate(sources)]
            nb = [math.ceil(len(ds) / 8) for ds in sources]
            for s in range(max(nb)):
                for j, ds in enumerate(sources):
                    if s < nb[j]:
                        idx = perms[j][s * 8:(s + 1) * 8]
                        adaptive_step(state, theta, netcore.data_grad(self.spec, theta, ds.subset(idx)), 1e-3)
        assert theta.tobytes() == trained.center.tobytes()

    def test_one_step_composition(self, rng):
        # a single step, every domain fitting in one batch: data update then coupling
        sources = toy_sources(rng, sizes=(5, 7))
        ens = HierEnsemble.create(self.spec, 2, seed=8)
        ens.thetas = [t + 0.1 * rng.normal(size=t.size) for t in ens.thetas]
        cfg = TrainConfig(epochs=1, batch_size=16, lambda1=0.4, lambda2=0.2, lr_couple=0.05, seed=5)
        trained, _ = train(ens, sources, cfg)
        thetas = [t.copy() for t in ens.thetas]
        for j, ds in enumerate(sources):
            idx = shuffle_rng(5, 0, j).permutation(len(ds))
            adaptive_step(OptimState.fresh(self.spec.num_params), thetas[j],
                          netcore.data_grad(self.spec, thetas[j], ds.subset(idx)), 1e-3)
        c = ens.center
        want_members = [t - 0.05 * 2 * 0.4 * (t - c) for t in thetas]
        want_center = c - 0.05 * (-2 * 0.4 * sum(t - c for t in thetas) + 2 * 0.2 * c)
        for got, want in zip(trained.thetas, want_members):
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-15)
        np.testing.assert_allclose(trained.center, want_center, rtol=0, atol=1e-15)

    def test_deterministic(self, rng):
        sources = toy_sources(rng)
        ens = HierEnsemble.create(self.spec, 3, seed=1)
        cfg = TrainConfig(epochs=3, lambda1=1e-2, seed=4)
        a, ha = train(ens, sources, cfg)
        b, hb = train(ens, sources, cfg)
        assert ha == hb
        for x, y in zip([a.center, *a.thetas], [b.center, *b.thetas]):
            assert x.tobytes() == y.tobytes()

    def test_does_not_mutate_input(self, rng):
        sources = toy_sources(rng)
        ens = HierEnsemble.create(self.spec, 3, seed=1)
        before = [t.copy() for t in ens.thetas]
        train(ens, sources, TrainConfig(epochs=1, lambda1=0.1))
        for t, b in zip(ens.thetas, before):
            assert np.array_equal(t, b)

    def test_group_mode_trains(self, rng):
        spec = NetSpec((2, 6, 4), encoder_boundary=1)
        sources = toy_sources(rng)
        ens = HierEnsemble.create(spec, 3, seed=1)
        cfg = TrainConfig(epochs=2, group_lambdas=((0.0, 0.0), (0.5, 0.0)))
        trained, _ = train(ens, sources, cfg)
        ne = spec.num_encoder_params
        # encoder is uncoupled, so the center's encoder slice never moves
        np.testing.assert_array_equal(trained.center[:ne], ens.center[:ne])
        assert not np.array_equal(trained.center[ne:], ens.center[ne:])

    def test_dimension_errors_before_mutation(self, rng):
        ens = HierEnsemble.create(self.spec, 2, seed=1)
        bad = [Dataset("a", rng.normal(size=(4, 3)), np.zeros(4)), Dataset("b", rng.normal(size=(4, 2)), np.zeros(4))]
        with pytest.raises(netcore.DimensionError):
            train(ens, bad, TrainConfig(epochs=1))
        with pytest.raises(ValueError):
            train(ens, bad[:1], TrainConfig(epochs=1))

    def test_history_length_and_finiteness(self, rng):
        _, history = train(HierEnsemble.create(self.spec, 3, seed=2), toy_sources(rng),
                           TrainConfig(epochs=5, lambda1=1e-2))
        assert len(history) == 5 and all(math.isfinite(h) for h in history)


def dispersion(ens):
    return sum(float(np.sum((t - ens.center) ** 2)) for t in ens.thetas)


def test_stronger_coupling_shrinks_dispersion():
    corpus = gen_synth(SynthConfig(seed=0))
    spec = NetSpec((2, 32, 8))
    wins = 0
    for seed in range(5):
        ens = HierEnsemble.create(spec, 3, seed=seed)
        strong, _ = train(ens, corpus.sources, TrainConfig(lambda1=1e-3, seed=seed))
        weak, _ = train(ens, corpus.sources, TrainConfig(lambda1=1e-6, seed=seed))
        wins += dispersion(strong) < dispersion(weak)
    assert wins >= 3


def test_history_mostly_decreasing():
    corpus = gen_synth(SynthConfig(seed=0))
    ens = HierEnsemble.create(NetSpec((2, 32, 8)), 3, seed=0)
    _, history = train(ens, corpus.sources, TrainConfig(lambda1=1e-3))
    drops = sum(b <= a for a, b in zip(history, history[1:]))
    assert drops >= 0.8 * (len(history) - 1)


def test_unstable_coupling_rate_rejected(rng):
    ens = HierEnsemble.create(NetSpec((2, 6, 4)), 3, seed=0)
    with pytest.raises(ValueError, match="lr_couple"):
        train(ens, toy_sources(rng), TrainConfig(lambda1=1e2, lr_couple=1e-2))
