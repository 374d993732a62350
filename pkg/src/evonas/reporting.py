"""Run artifacts: manifests, ablation drivers, and report rendering.

Everything here is plumbing around the search and evaluation modules: content
hashes for reproducibility, two ablation drivers that sweep elimination rates
and compare evaluation modes, and a report renderer that turns a finished run
directory into text, delimited columns, and figures.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import arch as A
from .corpus import (BlockLibrary, DEFAULT_INPUT_SHAPE, DEFAULT_NUM_CLASSES,
                     DEFAULT_WIDTH_PALETTE, sample_architecture)
from .errors import ConfigError, ParseError, ReportError
from .evaluation import SurrogateEvaluator, correlation_report, surrogate_fitness
from .evolve import SearchResult
from .reconstruct import reconstruct

RESULT_FILE = "search_result.json"
MANIFEST_FILE = "manifest.json"
GENERATIONS_FILE = "generations.jsonl"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_json(obj, path) -> None:
    """Canonical JSON bytes: sorted keys, fixed separators, trailing newline."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


# --- run manifests ----------------------------------------------------------------


@dataclass
class RunManifest:
    """Everything needed to re-run a command bit-identically.

    Inputs and produced artifacts are referenced by content hash; timestamps
    are recorded but excluded from equality so two identical reruns compare
    clean.
    """

    command: str
    args: dict
    config: dict
    seeds: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ParseError(f"unknown manifest fields: {sorted(unknown)}")
        if "command" not in d or "args" not in d:
            raise ParseError("manifest lacks command/args")
        return cls(**d)

    def comparable(self) -> dict:
        d = self.to_dict()
        d.pop("timestamps", None)
        return d

    def record_input(self, name: str, path) -> None:
        self.inputs[str(name)] = sha256_file(path)

    def record_artifact(self, name: str, path) -> None:
        self.artifacts[str(name)] = sha256_file(path)


def save_manifest(manifest: RunManifest, path) -> None:
    dump_json(manifest.to_dict(), path)


def load_manifest(path) -> RunManifest:
    if not os.path.exists(path):
        raise ConfigError(f"manifest not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"malformed manifest {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ParseError(f"manifest {path} is not an object")
    return RunManifest.from_dict(d)


# --- elimination-rate ablation -------------------------------------------------------


@dataclass(frozen=True)
class AblationRateRow:
    rate: float
    mean_fitness: float
    plus: int
    equal: int
    minus: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


DEFAULT_ABLATION_RATES = (0.0, 0.2, 0.4, 0.6, 0.8)


def ablation_elimination(gpt, fcn, evaluator, *, rates=DEFAULT_ABLATION_RATES,
                         n_archs: int = 15, seed: int = 0, lib=None,
                         input_shape=DEFAULT_INPUT_SHAPE,
                         num_classes=DEFAULT_NUM_CLASSES,
                         width_palette=DEFAULT_WIDTH_PALETTE) -> list:
    """Reconstruct a fixed panel of architectures once per rate and score them.

    Returns one row per rate: mean fitness plus how many of the panel improved,
    tied, or regressed against the untouched baseline.  `gpt` is the usual
    (model, vocabulary) pair.
    """
    if lib is None:
        lib = BlockLibrary.default()
    for rate in rates:
        if not 0.0 <= rate <= 1.0:
            raise ConfigError(f"elimination rate {rate} outside [0, 1]")
    archs = [sample_architecture(random.Random((seed << 16) + i), lib,
                                 input_shape, num_classes,
                                 width_palette=width_palette)
             for i in range(n_archs)]
    baseline = [evaluator.evaluate(a).fitness for a in archs]

    rows = []
    for r_idx, rate in enumerate(rates):
        fits = []
        for i, arch in enumerate(archs):
            rng = np.random.default_rng([seed, r_idx, i])
            rebuilt, trace = reconstruct(arch, gpt, fcn, rate, rng, lib=lib,
                                         width_palette=width_palette)
            fits.append(evaluator.evaluate(rebuilt, trace).fitness)
        plus = sum(f > b for f, b in zip(fits, baseline))
        minus = sum(f < b for f, b in zip(fits, baseline))
        rows.append(AblationRateRow(rate=rate,
                                    mean_fitness=float(np.mean(fits)),
                                    plus=plus,
                                    equal=n_archs - plus - minus,
                                    minus=minus))
    return rows


def run_ablation_elimination(cfg: dict, gpt_path, fcn_path, *,
                             n_archs: int = 15, seed: Optional[int] = None,
                             rates=DEFAULT_ABLATION_RATES,
                             out_dir=None) -> list:
    """Checkpoint-loading driver for the rate sweep; writes table + figure."""
    from . import config as C
    from .fcn import load_fcn
    from .gpt import load_gpt

    for path in (gpt_path, fcn_path):
        if not os.path.exists(path):
            raise ConfigError(f"missing checkpoint: {path}")
    model, vocab = load_gpt(gpt_path)
    if vocab is None:
        raise ConfigError(f"checkpoint {gpt_path} carries no vocabulary")
    fcn = load_fcn(fcn_path)
    teacher = C.teacher_from_config(cfg)
    evaluator = SurrogateEvaluator(teacher, mode="full")
    settings = C.corpus_settings(cfg)
    if seed is None:
        seed = C.get_int(cfg, "ga", "seed")
    rows = ablation_elimination(
        (model, vocab), fcn, evaluator, rates=rates, n_archs=n_archs,
        seed=seed, input_shape=settings["input_shape"],
        num_classes=settings["num_classes"],
        width_palette=settings["width_palette"])
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_rate_table(rows, out_dir)
    return rows


def format_rate_table(rows: Sequence[AblationRateRow]) -> str:
    lines = ["rate    mean      +/=/-"]
    for r in rows:
        lines.append(f"{r.rate:<7.2f} {r.mean_fitness:<9.4f} "
                     f"{r.plus}/{r.equal}/{r.minus}")
    return "\n".join(lines) + "\n"


def write_rate_table(rows: Sequence[AblationRateRow], out_dir: Path) -> dict:
    csv_path = out_dir / "ablation_rates.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("rate,mean_fitness,plus,equal,minus\n")
        for r in rows:
            fh.write(f"{r.rate},{r.mean_fitness:.10f},{r.plus},{r.equal},"
                     f"{r.minus}\n")
    txt_path = out_dir / "ablation_rates.txt"
    txt_path.write_text(format_rate_table(rows), encoding="utf-8")
    fig_path = out_dir / "ablation_rates.png"
    _render_rate_figure(rows, fig_path)
    return {"csv": csv_path, "txt": txt_path, "figure": fig_path}


def _agg_pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def _render_rate_figure(rows, path) -> None:
    plt = _agg_pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    rates = [r.rate for r in rows]
    means = [r.mean_fitness for r in rows]
    ax.bar([str(r) for r in rates], means, color="#4878a8", width=0.6)
    ax.set_xlabel("elimination rate")
    ax.set_ylabel("mean fitness")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# --- evaluation-mode ablation --------------------------------------------------------


@dataclass(frozen=True)
class CorrelationRow:
    pair: str
    pcc: float
    p_value: float
    n: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def run_ablation_epochs(cfg: dict, *, n_archs: int = 60,
                        seed: Optional[int] = None,
                        mode_pairs=(("cheap", "full"),),
                        out_dir=None) -> list:
    """Correlate cheap-proxy fitness against full fitness over a seeded panel."""
    from . import config as C

    teacher = C.teacher_from_config(cfg)
    noise = C.get_float(cfg, "evaluator", "noise_amplitude")
    settings = C.corpus_settings(cfg)
    if seed is None:
        seed = C.get_int(cfg, "ga", "seed")
    lib = BlockLibrary.default()
    archs = [sample_architecture(random.Random((seed << 16) + i), lib,
                                 settings["input_shape"],
                                 settings["num_classes"],
                                 width_palette=settings["width_palette"])
             for i in range(n_archs)]

    def evaluate_mode(arch, mode):
        return surrogate_fitness(teacher, arch, mode, noise).fitness

    stats = correlation_report(evaluate_mode, archs, mode_pairs)
    rows = [CorrelationRow(pair=f"{m1}-{m2}", pcc=v["pcc"],
                           p_value=v["p_value"], n=v["n"])
            for (m1, m2), v in stats.items()]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "ablation_epochs.csv"
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("pair,pcc,p_value,n\n")
            for r in rows:
                fh.write(f"{r.pair},{r.pcc:.10f},{r.p_value:.6e},{r.n}\n")
        m1, m2 = mode_pairs[0]
        xs = [evaluate_mode(a, m1) for a in archs]
        ys = [evaluate_mode(a, m2) for a in archs]
        _render_scatter(xs, ys, m1, m2, out_dir / "ablation_epochs.png")
    return rows


def _render_scatter(xs, ys, xlabel, ylabel, path) -> None:
    plt = _agg_pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    ax.scatter(xs, ys, s=14, alpha=0.7, color="#4878a8")
    ax.set_xlabel(f"{xlabel} fitness")
    ax.set_ylabel(f"{ylabel} fitness")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# --- run reports --------------------------------------------------------------------


def save_search_result(result: SearchResult, run_dir) -> dict:
    """Writes the run directory's result and generation-log files.

    search_result.json holds only deterministic content (wall time stripped)
    so reruns can be compared byte for byte; generations.jsonl is one record
    per generation for streaming consumers.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    result_path = run_dir / RESULT_FILE
    dump_json(result.comparable(), result_path)
    gens_path = run_dir / GENERATIONS_FILE
    with open(gens_path, "w", encoding="utf-8") as fh:
        for g in result.generations:
            fh.write(json.dumps(g.to_dict(), sort_keys=True,
                                separators=(",", ":")) + "\n")
    return {"result": result_path, "generations": gens_path}


def load_search_result(run_dir) -> SearchResult:
    path = Path(run_dir) / RESULT_FILE
    if not path.exists():
        raise ReportError(f"no {RESULT_FILE} in {run_dir}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
        return SearchResult.from_dict(d)
    except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError,
            ValueError) as exc:
        raise ReportError(f"corrupt result file {path}: {exc}") from exc


def format_architecture(arch: A.Architecture) -> str:
    """Block-per-line rendering with tensor states and layer counts."""
    lines = [f"input {'x'.join(str(d) for d in arch.input_shape)}"]
    for i, block in enumerate(arch.blocks):
        ins = "x".join(str(d) for d in block.in_size)
        outs = "x".join(str(d) for d in block.out_size)
        lines.append(f"  {i:>2}. {block.kind.value:<20} w{block.width_param:<4}"
                     f" {ins} -> {outs}  ({len(block.layers)} layers)")
    lines.append(f"head -> {arch.num_classes} classes")
    return "\n".join(lines) + "\n"


def report(run_dir, out_dir=None) -> dict:
    """Renders a finished search run to text, CSV columns, and a figure.

    Cross-checks the budget accounting: the per-generation evaluation counts
    must sum to the result's total evaluator calls.
    """
    result = load_search_result(run_dir)
    if not result.generations:
        raise ReportError(f"result in {run_dir} has no generation records")
    logged = sum(g.new_evals for g in result.generations)
    if logged != result.eval_calls:
        raise ReportError(f"budget accounting mismatch: generation logs say "
                          f"{logged} evaluations, result says "
                          f"{result.eval_calls}")
    out_dir = Path(out_dir) if out_dir is not None else Path(run_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    series = [(g.gen, g.rate, g.best_fitness, g.best_so_far, g.new_evals,
               g.cache_hits) for g in result.generations]
    csv_path = out_dir / "fitness_curve.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("generation,rate,best_fitness,best_so_far,new_evals,"
                 "cache_hits\n")
        for row in series:
            fh.write(f"{row[0]},{row[1]:.6f},{row[2]:.10f},{row[3]:.10f},"
                     f"{row[4]},{row[5]}\n")

    fig_path = out_dir / "fitness_curve.png"
    _render_curve_figure(result, fig_path)

    cfg = result.config
    budget_bound = cfg.population * (cfg.generations + 1)
    param_count = A.param_count_estimate(result.best_arch)
    text_lines = [
        "search report",
        "=============",
        f"population        {cfg.population}",
        f"generations       {cfg.generations}",
        f"evaluator calls   {result.eval_calls}",
        f"cache hits        {result.cache_hits}",
        f"budget bound      {budget_bound}",
        f"best fitness      {result.best_fitness:.6f}  (individual "
        f"{result.best_id})",
        f"best arch hash    {A.arch_hash(result.best_arch)}",
        f"parameter count   {param_count}",
        "",
        "generation  rate     best       best_so_far  new  cached",
    ]
    for g in result.generations:
        text_lines.append(f"{g.gen:>10}  {g.rate:<7.4f}  {g.best_fitness:<9.4f}"
                          f"  {g.best_so_far:<11.4f}  {g.new_evals:>3}"
                          f"  {g.cache_hits:>5}")
    text_lines += ["", "final architecture", "------------------",
                   format_architecture(result.best_arch)]
    text = "\n".join(text_lines)
    txt_path = out_dir / "report.txt"
    txt_path.write_text(text, encoding="utf-8")

    return {"result": result,
            "best_so_far": [g.best_so_far for g in result.generations],
            "param_count": param_count,
            "eval_calls": result.eval_calls,
            "text": text,
            "files": {"txt": txt_path, "csv": csv_path, "figure": fig_path}}


def _render_curve_figure(result: SearchResult, path) -> None:
    plt = _agg_pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    gens = [g.gen for g in result.generations]
    ax.plot(gens, [g.best_fitness for g in result.generations],
            marker="o", ms=3, lw=1.0, label="generation best",
            color="#4878a8")
    ax.plot(gens, [g.best_so_far for g in result.generations],
            lw=1.8, label="best so far", color="#c05840")
    ax.set_xlabel("generation")
    ax.set_ylabel("fitness")
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
