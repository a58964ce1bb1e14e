"""Leave-one-domain-out ablation over the coupling strength, reports and
trained-ensemble files."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import infer
from .data import Corpus
from .hier import INFINITY, HierEnsemble
from .netcore import NetSpec
from .train import TrainConfig, train

FORMAT_LINE = "format=1"
DEFAULT_GRID = (INFINITY, 1e-1, 1e-3, 1e-5, 0.0)
DEFAULT_HIDDEN = (32,)
METHODS = ("center", "confidence")
NA = "N/A"


def format_lambda(lam: float) -> str:
    return "inf" if math.isinf(lam) else format(lam, "g")


def parse_grid(text: str) -> list[float]:
    try:
        grid = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"bad lambda grid {text!r}") from None
    if not grid or any(math.isnan(v) or v < 0 for v in grid):
        raise ValueError(f"bad lambda grid {text!r}")
    return grid


@dataclass
class ReportRow:
    lambda1: float
    method: str
    values: list  # accuracy in [0, 1] per target, or None for N/A

    @property
    def average(self):
        if any(v is None for v in self.values):
            return None
        return float(np.mean(self.values))


@dataclass
class Report:
    targets: list[str]
    rows: list[ReportRow]
    metadata: dict = field(default_factory=dict)

    def row(self, lambda1: float, method: str) -> ReportRow:
        for r in self.rows:
            if r.method == method and (r.lambda1 == lambda1):
                return r
        raise KeyError((lambda1, method))


def build_spec(corpus: Corpus, hidden: Sequence[int] = DEFAULT_HIDDEN,
               activation: str = "relu") -> NetSpec:
    return NetSpec((corpus.feature_dim, *hidden, corpus.num_classes), activation)


def config_digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def train_task(corpus: Corpus, spec: NetSpec, cfg: TrainConfig):
    """Train on the corpus' sources from the seeded common initialisation."""
    ens = HierEnsemble.create(spec, len(corpus.source_indices), cfg.seed,
                              lambda1=cfg.lambda1, lambda2=cfg.lambda2,
                              group_lambdas=cfg.group_lambdas,
                              domain_names=corpus.source_names)
    return train(ens, corpus.sources, cfg)


def run_loo(corpus: Corpus, cfg: TrainConfig, grid: Sequence[float] = DEFAULT_GRID,
            hidden: Sequence[int] = DEFAULT_HIDDEN, activation: str = "relu") -> Report:
    """Every domain in turn is the target; the others are the sources."""
    if len(corpus.domains) < 3:
        raise ValueError("leave-one-out needs at least 3 domains")
    grid = list(grid)
    spec = build_spec(corpus, hidden, activation)
    acc = {(lam, m): [] for lam in grid for m in METHODS}
    for t, name in enumerate(corpus.names):
        task = corpus.with_target(t)
        for lam in grid:
            task_cfg = replace(cfg, lambda1=lam)
            try:
                ens, _ = train_task(task, spec, task_cfg)
                acc[lam, "confidence"].append(infer.evaluate(ens, task.target, infer.CONFIDENCE))
                if ens.is_shared:
                    acc[lam, "center"].append(None)
                else:
                    acc[lam, "center"].append(infer.evaluate(ens, task.target, infer.CENTER))
            except Exception as exc:
                raise RuntimeError(f"task target={name} lambda1={format_lambda(lam)}: {exc}") from exc
    rows = [ReportRow(lam, m, acc[lam, m]) for m in METHODS for lam in grid]
    meta = {
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "widths": list(spec.layer_widths),
        "activation": activation,
        "grid": [format_lambda(v) for v in grid],
    }
    meta["digest"] = config_digest({**asdict(replace(cfg, lambda1=0.0)), **meta})
    return Report(list(corpus.names), rows, meta)


def average_reports(reports: Sequence[Report]) -> Report:
    """Cell-wise mean over reports with identical layout (e.g. several seeds)."""
    first = reports[0]
    rows = []
    for i, row in enumerate(first.rows):
        cells = []
        for t in range(len(first.targets)):
            vals = [rep.rows[i].values[t] for rep in reports]
            cells.append(None if any(v is None for v in vals) else float(np.mean(vals)))
        rows.append(ReportRow(row.lambda1, row.method, cells))
    meta = dict(first.metadata)
    meta["seed"] = [rep.metadata.get("seed") for rep in reports]
    return Report(list(first.targets), rows, meta)


def _pct(v) -> str:
    return NA if v is None else f"{100.0 * v:.2f}"


def report_csv(report: Report) -> str:
    lines = [FORMAT_LINE, ",".join(["lambda1", "method", *report.targets, "average"])]
    for r in report.rows:
        cells = [_pct(v) for v in r.values] + [_pct(r.average)]
        lines.append(",".join([format_lambda(r.lambda1), r.method, *cells]))
    return "\n".join(lines) + "\n"


_BLOCK_TITLES = {
    "center": "center model prediction",
    "confidence": "confidence-based prediction",
}


def _lambda_label(lam: float) -> str:
    if math.isinf(lam):
        return "λ₁ = inf (single model)"
    if lam == 0:
        return "λ₁ = 0 (independent models)"
    return f"λ₁ = {format_lambda(lam)}"


def report_markdown(report: Report) -> str:
    meta = report.metadata
    out = [FORMAT_LINE, ""]
    out.append(f"epochs: {meta.get('epochs')}  seed: {meta.get('seed')}  "
               f"config: {meta.get('digest')}")
    for method in METHODS:
        out.append("")
        out.append(f"| Ablation, {meta.get('epochs')} epochs ({_BLOCK_TITLES[method]}) | "
                   + " | ".join(report.targets) + " | Average |")
        out.append("|---" * (len(report.targets) + 2) + "|")
        for r in report.rows:
            if r.method != method:
                continue
            cells = [_pct(v) for v in r.values] + [_pct(r.average)]
            out.append(f"| {_lambda_label(r.lambda1)} | " + " | ".join(cells) + " |")
    return "\n".join(out) + "\n"


def emit_report(report: Report, fmt: str, path) -> Path:
    if fmt == "csv":
        text = report_csv(report)
    elif fmt in ("markdown", "md"):
        text = report_markdown(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


def parse_report_csv(path) -> Report:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != FORMAT_LINE:
        raise ValueError(f"{path}: missing {FORMAT_LINE!r}")
    header = lines[1].split(",")
    targets = header[2:-1]
    rows = []
    for line in lines[2:]:
        cells = line.split(",")
        vals = [None if c == NA else float(c) / 100.0 for c in cells[2:-1]]
        rows.append(ReportRow(float(cells[0]), cells[1], vals))
    return Report(targets, rows)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_ensemble(ens: HierEnsemble, path, seed: int | None = None) -> Path:
    """Header lines ``key=value`` then the center row and one row per member."""
    spec = ens.spec
    if ens.group_lambdas is None:
        groups = "none"
    else:
        groups = " ".join(_fmt(v) for pair in ens.group_lambdas for v in pair)
    lines = [
        FORMAT_LINE,
        "widths=" + " ".join(str(w) for w in spec.layer_widths),
        f"activation={spec.activation}",
        f"encoder_boundary={spec.encoder_boundary}",
        f"lambda1={'inf' if ens.is_shared else _fmt(ens.lambda1)}",
        f"lambda2={_fmt(ens.lambda2)}",
        f"group_lambdas={groups}",
        f"seed={'none' if seed is None else seed}",
        "domains=" + " ".join(ens.domain_names),
    ]
    for row in [ens.center, *ens.thetas]:
        lines.append(" ".join(_fmt(v) for v in row))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_ensemble(path) -> tuple[HierEnsemble, dict]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != FORMAT_LINE:
        raise ValueError(f"{path}: missing {FORMAT_LINE!r}")
    header = {}
    i = 1
    while i < len(lines) and "=" in lines[i]:
        key, _, value = lines[i].partition("=")
        header[key] = value
        i += 1
    try:
        widths = tuple(int(w) for w in header["widths"].split())
        spec = NetSpec(widths, header["activation"], int(header["encoder_boundary"]))
        lam1 = float(header["lambda1"])
        lam2 = float(header["lambda2"])
        groups = None
        if header.get("group_lambdas", "none") != "none":
            g = [float(v) for v in header["group_lambdas"].split()]
            groups = ((g[0], g[1]), (g[2], g[3]))
        names = header["domains"].split()
    except (KeyError, ValueError, IndexError) as exc:
        raise ValueError(f"{path}: bad ensemble header ({exc})") from None
    rows = [np.array([float(v) for v in line.split()]) for line in lines[i:] if line.strip()]
    if len(rows) != len(names) + 1:
        raise ValueError(f"{path}: expected {len(names) + 1} parameter rows, got {len(rows)}")
    ens = HierEnsemble(spec, rows[1:], rows[0], lam1, lam2, groups, names)
    seed = header.get("seed", "none")
    return ens, {"seed": None if seed == "none" else int(seed)}
