"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from hiermda import _backend
from hiermda.data import SynthConfig, gen_synth
from hiermda.hier import HierEnsemble
from hiermda.netcore import NetSpec
from hiermda.train import TrainConfig, train


def bench_grad(kernels, widths, batch, repeat):
    rng = np.random.default_rng(0)
    n = sum(widths[i] * widths[i + 1] + widths[i + 1] for i in range(len(widths) - 1))
    theta = rng.normal(size=n)
    X = rng.normal(size=(batch, widths[0]))
    y = rng.integers(0, widths[-1], batch)
    t = timeit.Timer(lambda: kernels.loss_and_grad(widths, _backend.RELU, theta, X, y))
    loops, _ = t.autorange()
    return min(t.repeat(repeat, loops)) / loops


def bench_train(name, repeat):
    corpus = gen_synth(SynthConfig(seed=0))
    ens = HierEnsemble.create(NetSpec((2, 32, 8)), 3, seed=0)
    cfg = TrainConfig(epochs=10, lambda1=1e-3)
    saved = _backend.kernels
    _backend.kernels = _backend.get(name)
    try:
        return min(timeit.repeat(lambda: train(ens, corpus.sources, cfg), number=1, repeat=repeat))
    finally:
        _backend.kernels = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    names = _backend.available()
    print(f"backends: {', '.join(names)} (default: {_backend.name})")
    header = f"{'case':<34}" + "".join(f"{n:>14}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    cases = [((2, 32, 8), 16), ((2, 64, 64, 8), 16), ((10, 128, 8), 64)]
    for widths, batch in cases:
        times = [bench_grad(_backend.get(n), widths, batch, args.repeat) for n in names]
        line = f"{'grad ' + 'x'.join(map(str, widths)) + f' batch {batch}':<34}"
        line += "".join(f"{1e6 * t:>12.1f}us" for t in times)
        if len(times) == 2:
            line += f"{times[1] / times[0]:>9.1f}x"
        print(line)
    times = [bench_train(n, args.repeat) for n in names]
    line = f"{'train 10 epochs, ring-shift':<34}" + "".join(f"{t:>13.2f}s" for t in times)
    if len(times) == 2:
        line += f"{times[1] / times[0]:>9.1f}x"
    print(line)


if __name__ == "__main__":
    main()
