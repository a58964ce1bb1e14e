"""Synthetic multi-domain data, CSV interchange and seeded splits.

Dataset CSV layout::

    format=1
    domain,label,f0,f1,...,f{d-1}
    D0,3,1.2345678901234567,-0.5
    ...

Floats are written with 17 significant digits so doubles round-trip exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .netcore import Sample

FORMAT_LINE = "format=1"


class DatasetParseError(ValueError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


@dataclass
class Dataset:
    """Labelled samples of one domain, stored as a feature matrix and label vector."""

    name: str
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.ascontiguousarray(np.atleast_2d(self.X), dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if len(self.X) != len(self.y):
            raise ValueError("feature rows and labels differ in length")

    def __len__(self):
        return len(self.y)

    def __iter__(self):
        for x, y in zip(self.X, self.y):
            yield Sample(x, int(y))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.name == other.name and self.X.shape == other.X.shape
                and np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y))

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.name, self.X[idx], self.y[idx])


@dataclass
class Domain:
    name: str
    train: Dataset
    test: Dataset


@dataclass
class Corpus:
    """A family of domains, one of which is the held-out target.

    ``sources`` are the training halves of every non-target domain; ``target``
    is the test half of the target domain and is only ever used for scoring.
    """

    domains: list[Domain]
    num_classes: int
    target_index: int = -1

    def __post_init__(self):
        if len(self.domains) < 2:
            raise ValueError("a corpus needs at least one source and one target")
        self.target_index %= len(self.domains)
        dims = set()
        for dom in self.domains:
            for ds in (dom.train, dom.test):
                if len(ds) == 0:
                    raise ValueError(f"domain {dom.name} has an empty split")
                if ds.y.min() < 0 or ds.y.max() >= self.num_classes:
                    raise ValueError(f"domain {dom.name} has labels outside [0, {self.num_classes})")
                dims.add(ds.feature_dim)
        if len(dims) != 1:
            raise ValueError(f"inconsistent feature dimensions {sorted(dims)}")

    @property
    def feature_dim(self) -> int:
        return self.domains[0].train.feature_dim

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.domains]

    @property
    def source_indices(self) -> list[int]:
        return [j for j in range(len(self.domains)) if j != self.target_index]

    @property
    def sources(self) -> list[Dataset]:
        return [self.domains[j].train for j in self.source_indices]

    @property
    def source_names(self) -> list[str]:
        return [self.domains[j].name for j in self.source_indices]

    @property
    def target(self) -> Dataset:
        return self.domains[self.target_index].test

    def with_target(self, index: int) -> "Corpus":
        return Corpus(self.domains, self.num_classes, index)


@dataclass(frozen=True)
class SynthConfig:
    """Gaussian class blobs on a ring, rotated and shifted per domain.

    The defaults are the ring-shift benchmark: three sources at 0, 15 and 30
    degrees and a target at 22.5 degrees.
    """

    num_domains: int = 4
    classes: int = 8
    feature_dim: int = 2
    class_radius: float = 3.0
    domain_rotations: tuple[float, ...] = (0.0, 15.0, 30.0, 22.5)
    domain_shifts: tuple[tuple[float, ...], ...] | None = None
    noise_sigma: float = 0.9
    samples_per_class: int = 100
    seed: int = 0
    train_fraction: float = 0.5
    domain_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be >= 2")
        if self.classes < 2 or self.samples_per_class < 1 or self.num_domains < 2:
            raise ValueError("need >= 2 classes, >= 2 domains and >= 1 sample per class")
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be positive")
        if len(self.domain_rotations) != self.num_domains:
            raise ValueError("one rotation per domain required")
        if not all(math.isfinite(a) for a in self.domain_rotations):
            raise ValueError("rotations must be finite")
        if self.domain_shifts is not None:
            if len(self.domain_shifts) != self.num_domains:
                raise ValueError("one shift per domain required")
            if any(len(s) != self.feature_dim for s in self.domain_shifts):
                raise ValueError("shift vectors must have feature_dim entries")
        if self.domain_names is not None and len(self.domain_names) != self.num_domains:
            raise ValueError("one name per domain required")

    def names(self) -> list[str]:
        if self.domain_names is not None:
            return list(self.domain_names)
        return [f"D{j}" for j in range(self.num_domains)]

    def class_means(self, domain: int) -> np.ndarray:
        K, d = self.classes, self.feature_dim
        angles = 2.0 * np.pi * np.arange(K) / K + np.deg2rad(self.domain_rotations[domain])
        means = np.zeros((K, d))
        means[:, 0] = self.class_radius * np.cos(angles)
        means[:, 1] = self.class_radius * np.sin(angles)
        if self.domain_shifts is not None:
            means += np.asarray(self.domain_shifts[domain], dtype=np.float64)
        return means


def gen_domain(cfg: SynthConfig, domain: int) -> Dataset:
    rng = np.random.default_rng([cfg.seed, domain])
    means = cfg.class_means(domain)
    n = cfg.samples_per_class
    X = np.concatenate([m + cfg.noise_sigma * rng.standard_normal((n, cfg.feature_dim))
                        for m in means])
    y = np.repeat(np.arange(cfg.classes), n)
    return Dataset(cfg.names()[domain], X, y)


def gen_synth(cfg: SynthConfig = SynthConfig()) -> Corpus:
    domains = []
    for j, name in enumerate(cfg.names()):
        full = gen_domain(cfg, j)
        train, test = split(full, cfg.train_fraction, seed=[cfg.seed, j, 1])
        domains.append(Domain(name, train, test))
    return Corpus(domains, cfg.classes)


def split(dataset: Dataset, fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Seeded permutation, then the first ``round(fraction * n)`` rows go to train."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(n)
    k = int(round(fraction * n))
    return dataset.subset(perm[:k]), dataset.subset(perm[k:])


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_csv(dataset: Dataset, path) -> None:
    d = dataset.feature_dim
    lines = [FORMAT_LINE, ",".join(["domain", "label"] + [f"f{i}" for i in range(d)])]
    for x, y in zip(dataset.X, dataset.y):
        lines.append(",".join([dataset.name, str(int(y))] + [_fmt(v) for v in x]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_csv(path, num_classes: int | None = None) -> Dataset:
    """Read a single-domain dataset; errors carry the 1-based line number."""
    path = Path(path)
    text = path.read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != FORMAT_LINE:
        raise DatasetParseError(path, 1, f"expected {FORMAT_LINE!r}")
    if len(text) < 2:
        raise DatasetParseError(path, 2, "missing header")
    header = text[1].strip().split(",")
    d = len(header) - 2
    if d < 1 or header[:2] != ["domain", "label"] or header[2:] != [f"f{i}" for i in range(d)]:
        raise DatasetParseError(path, 2, f"bad header {text[1]!r}")
    name = None
    X, y = [], []
    for lineno, line in enumerate(text[2:], start=3):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != d + 2:
            raise DatasetParseError(path, lineno, f"expected {d + 2} columns, got {len(cells)}")
        if name is None:
            name = cells[0]
        elif cells[0] != name:
            raise DatasetParseError(path, lineno, f"mixed domains {name!r} and {cells[0]!r}")
        try:
            label = int(cells[1])
            feats = [float(c) for c in cells[2:]]
        except ValueError as exc:
            raise DatasetParseError(path, lineno, str(exc)) from None
        if label < 0 or (num_classes is not None and label >= num_classes):
            raise DatasetParseError(path, lineno, f"label {label} outside [0, {num_classes})")
        if not all(math.isfinite(v) for v in feats):
            raise DatasetParseError(path, lineno, "non-finite feature")
        X.append(feats)
        y.append(label)
    if not y:
        raise DatasetParseError(path, len(text), "dataset has no rows")
    return Dataset(name, np.array(X, dtype=np.float64), np.array(y, dtype=np.int64))


def save_corpus(corpus: Corpus, directory) -> list[Path]:
    """One ``<name>.train.csv`` and ``<name>.test.csv`` per domain."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for dom in corpus.domains:
        for part in ("train", "test"):
            p = directory / f"{dom.name}.{part}.csv"
            save_csv(getattr(dom, part), p)
            written.append(p)
    return written


def load_corpus(directory, num_classes: int | None = None,
                names: Sequence[str] | None = None) -> Corpus:
    """Load domains from ``directory``; domain order is sorted by name unless given."""
    directory = Path(directory)
    if names is None:
        names = sorted(p.name[: -len(".train.csv")] for p in directory.glob("*.train.csv"))
    if not names:
        raise FileNotFoundError(f"no *.train.csv files in {directory}")
    parts = {}
    for name in names:
        for part in ("train", "test"):
            p = directory / f"{name}.{part}.csv"
            if not p.exists():
                raise FileNotFoundError(p)
            parts[name, part] = load_csv(p, num_classes)
    if num_classes is None:
        num_classes = int(max(ds.y.max() for ds in parts.values())) + 1
    domains = [Domain(n, parts[n, "train"], parts[n, "test"]) for n in names]
    return Corpus(domains, num_classes)
