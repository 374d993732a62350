"""Command-line surface for the search pipeline.

One binary, subcommand style.  The module top level imports nothing numeric:
--threads must pin the BLAS thread-pool environment variables before numpy is
first imported, so every heavy import happens inside a command body.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from .errors import EvonasError

log = logging.getLogger("evonas.cli")

# BLAS pools size themselves at import; set before numpy ever loads
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
              "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS")


class UsageError(Exception):
    """Bad invocation that argparse cannot catch (missing/conflicting values)."""


def _pin_threads(n: int) -> None:
    if n < 1:
        raise UsageError(f"--threads must be >= 1, got {n}")
    for var in _BLAS_VARS:
        os.environ[var] = str(n)


def _setup_logging(level_name) -> None:
    level = getattr(logging, (level_name or "warning").upper())
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


# --- parser ------------------------------------------------------------------------


def _add_global_flags(p, suppress: bool) -> None:
    # suppressed copies let the flags appear after the subcommand without
    # clobbering values parsed before it
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, metavar="PATH",
                   help="user config file layered over the shipped defaults")
    p.add_argument("--seed", type=int, default=d,
                   help="master seed; overrides the per-section config seeds")
    p.add_argument("--threads", type=int, default=d,
                   help="pin BLAS/OpenMP thread pools to N threads")
    p.add_argument("--log-level", default=d,
                   choices=("debug", "info", "warning", "error"))
    p.add_argument("--from-manifest", default=d, metavar="PATH",
                   help="re-run with the arguments and config recorded in a "
                        "previous run's manifest; explicit flags still win")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="evonas",
        description="Evolutionary architecture search with a generative "
                    "layer predictor.")
    _add_global_flags(top, suppress=False)
    subs = top.add_subparsers(dest="cmd", metavar="COMMAND")

    def sub(name, func, help_text):
        p = subs.add_parser(name, help=help_text)
        _add_global_flags(p, suppress=True)
        p.set_defaults(func=func, cmd=name)
        return p

    p = sub("build-corpus", cmd_build_corpus,
            "sample a architecture corpus and write it as JSON lines")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--count", type=int)
    p.add_argument("--source", choices=("teacher", "finetune"))

    p = sub("pretrain", cmd_pretrain,
            "train the layer predictor from scratch on a corpus")
    p.add_argument("--corpus", metavar="PATH")
    p.add_argument("--out", metavar="CKPT")
    p.add_argument("--epochs", type=int)
    p.add_argument("--checkpoint-dir", metavar="DIR")

    p = sub("finetune", cmd_finetune,
            "continue training a predictor checkpoint on another corpus")
    p.add_argument("--gpt", metavar="CKPT")
    p.add_argument("--corpus", metavar="PATH")
    p.add_argument("--out", metavar="CKPT")
    p.add_argument("--epochs", type=int)
    p.add_argument("--freeze-embeddings", action="store_const", const=True,
                   help="hold token and position embeddings fixed")

    p = sub("train-fcn", cmd_train_fcn,
            "train the block-kind classifier against a predictor's vocabulary")
    p.add_argument("--corpus", metavar="PATH")
    p.add_argument("--gpt", metavar="CKPT")
    p.add_argument("--out", metavar="CKPT")

    p = sub("reconstruct", cmd_reconstruct,
            "eliminate and rebuild blocks of one architecture")
    p.add_argument("--arch", metavar="PATH")
    p.add_argument("--gpt", metavar="CKPT")
    p.add_argument("--fcn", metavar="CKPT")
    p.add_argument("--rate", type=float)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--trace", metavar="PATH")

    p = sub("search", cmd_search, "run the evolutionary search")
    p.add_argument("--gpt", metavar="CKPT")
    p.add_argument("--fcn", metavar="CKPT")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--population", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--evaluator", choices=("surrogate", "tabular", "external"))
    p.add_argument("--mode", choices=("cheap", "full"))
    p.add_argument("--no-guided", dest="guided", action="store_const",
                   const=False, help="plain GA without elimination/refill")

    p = sub("eval", cmd_eval, "score one architecture file")
    p.add_argument("--arch", metavar="PATH")
    p.add_argument("--evaluator", choices=("surrogate", "tabular", "external"))
    p.add_argument("--mode", choices=("cheap", "full"))
    p.add_argument("--out", metavar="PATH")

    p = sub("correlate", cmd_correlate,
            "correlate two evaluation modes over a corpus")
    p.add_argument("--corpus", metavar="PATH")
    p.add_argument("--modes", metavar="M1,M2")
    p.add_argument("--out", metavar="DIR")

    p = sub("ablate-rates", cmd_ablate_rates,
            "sweep elimination rates over a fixed architecture panel")
    p.add_argument("--gpt", metavar="CKPT")
    p.add_argument("--fcn", metavar="CKPT")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--archs", type=int)
    p.add_argument("--rates", metavar="R1,R2,...")

    p = sub("ablate-epochs", cmd_ablate_epochs,
            "correlate cheap-proxy and full evaluation over a panel")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--archs", type=int)
    p.add_argument("--modes", metavar="M1,M2")

    p = sub("report", cmd_report, "render a finished run directory")
    p.add_argument("--run", metavar="DIR")
    p.add_argument("--out", metavar="DIR")

    return top


# --- shared helpers -----------------------------------------------------------------


def _require(args, *names) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{args.cmd} requires {flags}")


def _resolved_seed(args, cfg, section: str) -> int:
    from . import config as C

    if args.seed is not None:
        return args.seed
    return C.get_int(cfg, section, "seed")


def _payload(args, names) -> dict:
    return {n: getattr(args, n) for n in names}


def _start_manifest(args, cfg, payload: dict, seeds: dict):
    from .reporting import RunManifest, utc_now

    return RunManifest(command=args.cmd, args=payload, config=cfg,
                       seeds=seeds, timestamps={"started": utc_now()})


def _finish_manifest(manifest, path) -> None:
    from .reporting import save_manifest, utc_now

    manifest.timestamps["finished"] = utc_now()
    save_manifest(manifest, path)


def _load_json(path) -> dict:
    from .errors import ConfigError, ParseError

    if not os.path.exists(path):
        raise ConfigError(f"file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc


def _load_arch(path):
    from .corpus import arch_from_dict

    return arch_from_dict(_load_json(path))


def _load_gpt_with_vocab(path):
    from .errors import ConfigError
    from .gpt import load_gpt

    if not os.path.exists(path):
        raise ConfigError(f"missing checkpoint: {path}")
    model, vocab = load_gpt(path)
    if vocab is None:
        raise ConfigError(f"checkpoint {path} carries no vocabulary")
    return model, vocab


def _load_fcn_checked(path):
    from .errors import ConfigError
    from .fcn import load_fcn

    if not os.path.exists(path):
        raise ConfigError(f"missing checkpoint: {path}")
    return load_fcn(path)


def _make_evaluator(cfg, kind, mode):
    from . import config as C
    from .errors import ConfigError

    kind = kind or C.get_str(cfg, "evaluator", "kind")
    mode = mode or C.get_str(cfg, "evaluator", "mode")
    if kind == "surrogate":
        from .evaluation import SurrogateEvaluator

        return SurrogateEvaluator(
            C.teacher_from_config(cfg), mode=mode,
            noise_amplitude=C.get_float(cfg, "evaluator", "noise_amplitude"))
    if kind == "tabular":
        from .evaluation import TabularEvaluator, load_table

        path = C.get_str(cfg, "evaluator", "table_path")
        if not path:
            raise ConfigError("tabular evaluator needs [evaluator] table_path")
        return TabularEvaluator(load_table(path))
    if kind == "external":
        import shlex

        from .evaluation import ExternalEvaluator

        worker = C.get_str(cfg, "evaluator", "worker_cmd")
        port = C.get_int(cfg, "evaluator", "port")
        if worker:
            endpoint = {"worker_cmd": shlex.split(worker)}
        elif port:
            endpoint = {"connect": (C.get_str(cfg, "evaluator", "host"), port)}
        else:
            raise ConfigError("external evaluator needs [evaluator] "
                              "worker_cmd or host/port")
        return ExternalEvaluator(
            dataset=C.get_str(cfg, "evaluator", "dataset"),
            epochs=C.get_int(cfg, "evaluator", "epochs"),
            batch_size=C.get_int(cfg, "evaluator", "batch_size"),
            lr_target=C.get_float(cfg, "evaluator", "lr_target"),
            train_head=C.get_bool(cfg, "evaluator", "train_head"),
            handshake_timeout=C.get_float(cfg, "evaluator",
                                          "handshake_timeout"),
            eval_timeout=C.get_float(cfg, "evaluator", "eval_timeout"),
            protocol_version=C.get_int(cfg, "evaluator", "protocol_version"),
            **endpoint)
    raise ConfigError(f"unknown evaluator kind {kind!r}")


# --- commands ----------------------------------------------------------------------


def cmd_build_corpus(args, cfg) -> int:
    from . import config as C
    from .corpus import (BlockLibrary, build_finetune_corpus,
                         generate_teacher_corpus, save_corpus)

    _require(args, "out")
    settings = C.corpus_settings(cfg)
    count = args.count if args.count is not None else settings["count"]
    source = args.source or settings["source"]
    seed = args.seed if args.seed is not None else settings["seed"]
    lib = BlockLibrary.default()
    common = dict(input_shape=settings["input_shape"],
                  num_classes=settings["num_classes"],
                  depth_bounds=settings["depth_bounds"],
                  width_palette=settings["width_palette"])
    if source == "teacher":
        teacher = C.teacher_from_config(cfg)
        records = generate_teacher_corpus(teacher, count, seed, lib=lib,
                                          **common)
    else:
        records = build_finetune_corpus(lib, count, seed, **common)
    save_corpus(records, args.out)

    manifest = _start_manifest(
        args, cfg, _payload(args, ("out", "count", "source")) | {"seed": seed},
        seeds={"corpus": seed})
    manifest.record_artifact("corpus", args.out)
    _finish_manifest(manifest, args.out + ".manifest.json")
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _build_vocab(records, cfg):
    from . import arch as A
    from . import config as C
    from .corpus import BlockLibrary, extend_vocab_closure

    settings = C.corpus_settings(cfg)
    vocab = A.Vocabulary()
    for rec in records:
        A.encode_architecture(rec.arch, vocab)
    extend_vocab_closure(vocab, BlockLibrary.default(),
                         input_shape=settings["input_shape"],
                         width_palette=settings["width_palette"])
    vocab.freeze()
    return vocab


def cmd_pretrain(args, cfg) -> int:
    from . import config as C
    from . import gpt as G
    from .corpus import load_corpus, make_training_pairs

    _require(args, "corpus", "out")
    records = load_corpus(args.corpus)
    vocab = _build_vocab(records, cfg)
    settings = C.corpus_settings(cfg)
    pairs = make_training_pairs(records, vocab, k=settings["window"],
                                stride=settings["stride"])
    seed = _resolved_seed(args, cfg, "gpt")
    over = {"seed": seed}
    if args.epochs is not None:
        over["epochs"] = args.epochs
    gcfg = C.gpt_config(cfg, vocab.size, **over)
    log.info("pretraining on %d pairs, vocab %d", len(pairs), vocab.size)
    model = G.init_model(gcfg)
    report = G.train(model, pairs, gcfg, phase="pretrain",
                     checkpoint_dir=args.checkpoint_dir, vocab=vocab)
    G.save_gpt(model, args.out, vocab=vocab, phase="pretrain",
               epoch=gcfg.epochs)

    manifest = _start_manifest(
        args, cfg,
        _payload(args, ("corpus", "out", "epochs", "checkpoint_dir"))
        | {"seed": seed},
        seeds={"gpt": seed})
    manifest.record_input("corpus", args.corpus)
    manifest.record_artifact("gpt", args.out)
    _finish_manifest(manifest, args.out + ".manifest.json")
    print(f"pretrained {report.epochs} epochs: loss {report.losses[0]:.4f} "
          f"-> {report.losses[-1]:.4f}, accuracy {report.accuracies[-1]:.4f}")
    print(f"saved checkpoint {args.out}")
    return 0


def cmd_finetune(args, cfg) -> int:
    from . import config as C
    from . import gpt as G
    from .corpus import load_corpus, make_training_pairs

    _require(args, "gpt", "corpus", "out")
    model, vocab = _load_gpt_with_vocab(args.gpt)
    records = load_corpus(args.corpus)
    settings = C.corpus_settings(cfg)
    pairs = make_training_pairs(records, vocab, k=settings["window"],
                                stride=settings["stride"])
    seed = _resolved_seed(args, cfg, "gpt")
    epochs = args.epochs if args.epochs is not None \
        else C.get_int(cfg, "gpt", "finetune_epochs")
    gcfg = C.gpt_config(cfg, vocab.size, seed=seed, epochs=epochs)
    freeze = ("tok", "pos") if args.freeze_embeddings else ()
    report = G.train(model, pairs, gcfg, phase="finetune", vocab=vocab,
                     freeze=freeze)
    G.save_gpt(model, args.out, vocab=vocab, phase="finetune", epoch=epochs)

    manifest = _start_manifest(
        args, cfg,
        _payload(args, ("gpt", "corpus", "out", "epochs",
                        "freeze_embeddings")) | {"seed": seed},
        seeds={"gpt": seed})
    manifest.record_input("gpt", args.gpt)
    manifest.record_input("corpus", args.corpus)
    manifest.record_artifact("gpt", args.out)
    _finish_manifest(manifest, args.out + ".manifest.json")
    print(f"finetuned {report.epochs} epochs: loss {report.losses[0]:.4f} "
          f"-> {report.losses[-1]:.4f}, accuracy {report.accuracies[-1]:.4f}")
    print(f"saved checkpoint {args.out}")
    return 0


def cmd_train_fcn(args, cfg) -> int:
    from . import config as C
    from . import fcn as F
    from .corpus import BlockLibrary, load_corpus

    _require(args, "corpus", "gpt", "out")
    _, vocab = _load_gpt_with_vocab(args.gpt)
    records = load_corpus(args.corpus)
    seed = _resolved_seed(args, cfg, "fcn")
    fcfg = C.fcn_config(cfg, vocab.total_tokens, vocab.pad_id, seed=seed)
    pairs = F.make_fcn_pairs(records, vocab, k=fcfg.context_len)
    model = F.fcn_train(pairs, fcfg, lib=BlockLibrary.default())
    F.save_fcn(model, args.out)

    manifest = _start_manifest(
        args, cfg,
        _payload(args, ("corpus", "gpt", "out")) | {"seed": seed},
        seeds={"fcn": seed})
    manifest.record_input("corpus", args.corpus)
    manifest.record_input("gpt", args.gpt)
    manifest.record_artifact("fcn", args.out)
    _finish_manifest(manifest, args.out + ".manifest.json")
    print(f"trained classifier on {len(pairs)} pairs, saved {args.out}")
    return 0


def cmd_reconstruct(args, cfg) -> int:
    import numpy as np

    from . import config as C
    from .corpus import arch_to_dict
    from .reconstruct import reconstruct
    from .reporting import dump_json

    _require(args, "arch", "gpt", "fcn", "rate", "out")
    arch = _load_arch(args.arch)
    model, vocab = _load_gpt_with_vocab(args.gpt)
    fcn = _load_fcn_checked(args.fcn)
    seed = _resolved_seed(args, cfg, "ga")
    settings = C.corpus_settings(cfg)
    rebuilt, trace = reconstruct(arch, (model, vocab), fcn, args.rate,
                                 np.random.default_rng(seed),
                                 width_palette=settings["width_palette"])
    dump_json(arch_to_dict(rebuilt), args.out)
    if args.trace:
        dump_json(dataclasses.asdict(trace), args.trace)

    manifest = _start_manifest(
        args, cfg,
        _payload(args, ("arch", "gpt", "fcn", "rate", "out", "trace"))
        | {"seed": seed},
        seeds={"reconstruct": seed})
    for name in ("arch", "gpt", "fcn"):
        manifest.record_input(name, getattr(args, name))
    manifest.record_artifact("arch", args.out)
    _finish_manifest(manifest, args.out + ".manifest.json")
    print(f"eliminated {len(trace.eliminated)} of {arch.depth} blocks, "
          f"wrote {args.out}")
    return 0


def cmd_search(args, cfg) -> int:
    import numpy as np

    from . import config as C
    from .corpus import arch_to_dict
    from .evolve import run_search
    from .reporting import dump_json, save_search_result

    _require(args, "out")
    guided = args.guided if args.guided is not None else True
    model = vocab = fcn = None
    if guided:
        _require(args, "gpt", "fcn")
        model, vocab = _load_gpt_with_vocab(args.gpt)
        fcn = _load_fcn_checked(args.fcn)
    seed = _resolved_seed(args, cfg, "ga")
    over = {"seed": seed}
    if args.population is not None:
        over["population"] = args.population
    if args.generations is not None:
        over["generations"] = args.generations
    ga = C.ga_config(cfg, **over)
    evaluator = _make_evaluator(cfg, args.evaluator, args.mode)
    settings = C.corpus_settings(cfg)

    result = run_search(ga, (model, vocab), fcn, evaluator,
                        np.random.default_rng(seed), guided=guided,
                        input_shape=settings["input_shape"],
                        num_classes=settings["num_classes"],
                        width_palette=settings["width_palette"])
    files = save_search_result(result, args.out)
    best_path = os.path.join(args.out, "best_arch.json")
    dump_json(arch_to_dict(result.best_arch), best_path)

    manifest = _start_manifest(
        args, cfg,
        _payload(args, ("gpt", "fcn", "out", "population", "generations",
                        "evaluator", "mode", "guided")) | {"seed": seed},
        seeds={"master": seed})
    if guided:
        manifest.record_input("gpt", args.gpt)
        manifest.record_input("fcn", args.fcn)
    manifest.record_artifact("result", files["result"])
    manifest.record_artifact("generations", files["generations"])
    manifest.record_artifact("best_arch", best_path)
    _finish_manifest(manifest, os.path.join(args.out, "manifest.json"))
    print(f"best fitness {result.best_fitness:.6f} "
          f"(individual {result.best_id}) after {result.eval_calls} "
          f"evaluations, {result.cache_hits} cache hits")
    print(f"run directory {args.out}")
    return 0


def cmd_eval(args, cfg) -> int:
    from .reporting import dump_json

    _require(args, "arch")
    arch = _load_arch(args.arch)
    evaluator = _make_evaluator(cfg, args.evaluator, args.mode)
    try:
        rec = evaluator.evaluate(arch)
    finally:
        evaluator.close()
    print(f"fitness={rec.fitness:.6f} param_count={rec.param_count} "
          f"provenance={rec.provenance.value} mode={rec.mode}")
    if args.out:
        dump_json({"fitness": rec.fitness, "param_count": rec.param_count,
                   "provenance": rec.provenance.value, "mode": rec.mode,
                   "error": rec.error}, args.out)
        manifest = _start_manifest(
            args, cfg, _payload(args, ("arch", "evaluator", "mode", "out")),
            seeds={})
        manifest.record_input("arch", args.arch)
        manifest.record_artifact("record", args.out)
        _finish_manifest(manifest, args.out + ".manifest.json")
    return 0


def _parse_modes(text) -> tuple:
    modes = tuple(m.strip() for m in (text or "cheap,full").split(",")
                  if m.strip())
    if len(modes) != 2:
        raise UsageError(f"--modes needs exactly two modes, got {text!r}")
    return modes


def cmd_correlate(args, cfg) -> int:
    from . import config as C
    from .corpus import load_corpus
    from .evaluation import correlation_report, surrogate_fitness

    _require(args, "corpus")
    m1, m2 = _parse_modes(args.modes)
    records = load_corpus(args.corpus)
    teacher = C.teacher_from_config(cfg)
    noise = C.get_float(cfg, "evaluator", "noise_amplitude")

    def evaluate_mode(arch, mode):
        return surrogate_fitness(teacher, arch, mode, noise).fitness

    stats = correlation_report(evaluate_mode, [r.arch for r in records],
                               [(m1, m2)])
    row = stats[(m1, m2)]
    line = (f"pair={m1}-{m2} pcc={row['pcc']:.6f} "
            f"p_value={row['p_value']:.6e} n={row['n']}")
    print(line)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        csv_path = os.path.join(args.out, "correlation.csv")
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("pair,pcc,p_value,n\n")
            fh.write(f"{m1}-{m2},{row['pcc']:.10f},{row['p_value']:.6e},"
                     f"{row['n']}\n")
        manifest = _start_manifest(
            args, cfg, _payload(args, ("corpus", "modes", "out")), seeds={})
        manifest.record_input("corpus", args.corpus)
        manifest.record_artifact("correlation", csv_path)
        _finish_manifest(manifest,
                         os.path.join(args.out, "correlate.manifest.json"))
    return 0


def cmd_ablate_rates(args, cfg) -> int:
    from .reporting import format_rate_table, run_ablation_elimination

    _require(args, "gpt", "fcn", "out")
    seed = _resolved_seed(args, cfg, "ga")
    kw = {"seed": seed}
    if args.archs is not None:
        kw["n_archs"] = args.archs
    if args.rates is not None:
        kw["rates"] = tuple(float(r) for r in args.rates.split(","))
    rows = run_ablation_elimination(cfg, args.gpt, args.fcn, out_dir=args.out,
                                    **kw)
    print(format_rate_table(rows), end="")

    manifest = _start_manifest(
        args, cfg,
        _payload(args, ("gpt", "fcn", "out", "archs", "rates"))
        | {"seed": seed},
        seeds={"panel": seed})
    manifest.record_input("gpt", args.gpt)
    manifest.record_input("fcn", args.fcn)
    manifest.record_artifact("table",
                             os.path.join(args.out, "ablation_rates.csv"))
    _finish_manifest(manifest,
                     os.path.join(args.out, "ablate-rates.manifest.json"))
    return 0


def cmd_ablate_epochs(args, cfg) -> int:
    from .reporting import run_ablation_epochs

    _require(args, "out")
    seed = _resolved_seed(args, cfg, "ga")
    m1, m2 = _parse_modes(args.modes)
    kw = {"seed": seed, "mode_pairs": ((m1, m2),)}
    if args.archs is not None:
        kw["n_archs"] = args.archs
    rows = run_ablation_epochs(cfg, out_dir=args.out, **kw)
    for row in rows:
        print(f"pair={row.pair} pcc={row.pcc:.6f} "
              f"p_value={row.p_value:.6e} n={row.n}")

    manifest = _start_manifest(
        args, cfg,
        _payload(args, ("out", "archs", "modes")) | {"seed": seed},
        seeds={"panel": seed})
    manifest.record_artifact("table",
                             os.path.join(args.out, "ablation_epochs.csv"))
    _finish_manifest(manifest,
                     os.path.join(args.out, "ablate-epochs.manifest.json"))
    return 0


def cmd_report(args, cfg) -> int:
    from .reporting import report

    _require(args, "run")
    summary = report(args.run, args.out)
    print(summary["text"])

    out_dir = args.out if args.out is not None else args.run
    manifest = _start_manifest(args, cfg, _payload(args, ("run", "out")),
                               seeds={})
    for name, path in summary["files"].items():
        manifest.record_artifact(name, path)
    _finish_manifest(manifest,
                     os.path.join(out_dir, "report.manifest.json"))
    return 0


# --- entry point --------------------------------------------------------------------


def _apply_manifest(args):
    from .errors import ConfigError
    from .reporting import load_manifest, sha256_file

    manifest = load_manifest(args.from_manifest)
    if manifest.command != args.cmd:
        raise UsageError(f"manifest records command {manifest.command!r}, "
                         f"not {args.cmd!r}")
    for key, value in manifest.args.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    # inputs must be the exact artifacts the original run consumed
    for name, digest in manifest.inputs.items():
        path = getattr(args, name, None)
        if path is None or not os.path.exists(path):
            raise ConfigError(f"manifest input {name!r} missing: {path}")
        if sha256_file(path) != digest:
            raise ConfigError(f"manifest input {name!r} at {path} has "
                              f"changed since the recorded run")
    return manifest.config


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    if getattr(args, "cmd", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    _setup_logging(args.log_level)
    try:
        if args.threads is not None:
            _pin_threads(args.threads)
        if args.from_manifest is not None:
            cfg = _apply_manifest(args)
        else:
            from .config import load_config

            cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except EvonasError as exc:
        log.debug("data error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports everything
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
