"""Command-line entry point: ingest, train, sample, evaluate, serve.

Every flag has a config-file (YAML) equivalent; flags override the file. The
effective configuration is echoed into each command's output directory. Exit
codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .evaluation import ablation_runner, classifier_report_on_split, recognizability
from .model import ModelConfig
from .primitives import build_dictionary
from .render import to_svg, tokens_to_polylines
from .sampling import SamplerConfig, complete, generate
from .strokes import (
    load_corpus,
    normalize,
    parse_quickdraw_ndjson,
    save_corpus,
    sketch_from_arrays,
    DegenerateSketchError,
    SketchCorpus,
)
from .tokenizer import Vocabulary
from .training import (
    MetricsWriter,
    TrainPlan,
    finetune_classify,
    finetune_completion,
    labeled_dataset_from_corpus,
    pretrain,
    tokenize_corpus,
)

DEFAULTS = {
    "seed": 0,
    "classes": None,
    "k_primitives": 36,
    "prim_length": 0.05,
    "max_seq_len": 512,
    "layers": 4,
    "heads": 4,
    "hidden": 128,
    "epochs": 10,
    "batch": 32,
    "lr": 3e-4,
    "temperature": 1.0,
    "num_samples": 1,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--classes", help="comma-separated class filter")
    p.add_argument("--k-primitives", type=int, dest="k_primitives")
    p.add_argument("--prim-length", type=float, dest="prim_length")
    p.add_argument("--max-seq-len", type=int, dest="max_seq_len")
    p.add_argument("--layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--num-samples", type=int, dest="num_samples")
    p.add_argument("--out", help="output directory")


def _settings(args: argparse.Namespace) -> dict:
    merged = dict(DEFAULTS)
    file_cfg = {}
    if args.config:
        file_cfg = yaml.safe_load(Path(args.config).read_text()) or {}
        for key, value in file_cfg.items():
            if key in merged:
                merged[key] = value
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    merged["_file"] = file_cfg
    return merged


def _echo_config(settings: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    echo = {k: v for k, v in settings.items() if not k.startswith("_")}
    (out / "effective-config.yaml").write_text(yaml.safe_dump(echo, sort_keys=True))


def _model_config(settings: dict, num_classes: int | None = None) -> ModelConfig:
    return ModelConfig(
        layers=settings["layers"],
        heads=settings["heads"],
        hidden=settings["hidden"],
        max_seq_len=settings["max_seq_len"],
        vocab_size=settings["k_primitives"] + 4,
        num_classes=num_classes,
    )


def _plan(settings: dict) -> TrainPlan:
    return TrainPlan(
        epochs=settings["epochs"],
        batch_size=settings["batch"],
        lr=settings["lr"],
        seed=settings["seed"],
    )


def _dictionary(settings: dict):
    return build_dictionary(settings["k_primitives"], settings["prim_length"])


def _load_corpus_filtered(path: str, settings: dict) -> SketchCorpus:
    corpus = load_corpus(path)
    if settings["classes"]:
        names = (
            settings["classes"].split(",")
            if isinstance(settings["classes"], str)
            else list(settings["classes"])
        )
        corpus = corpus.subset([c.strip() for c in names])
    return corpus


def _strokes_from_file(path: str):
    triples = json.loads(Path(path).read_text())
    offsets = np.array([(t[0], t[1]) for t in triples], dtype=np.float64)
    pens = np.array([int(t[2]) for t in triples])
    return sketch_from_arrays(offsets, pens)


def _effective_seed(settings: dict, args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "seed" in settings["_file"]:
        return settings["seed"]
    seed = secrets.randbelow(2**31)
    print(f"seed: {seed} (chosen for this run; pass --seed to reproduce)")
    return seed


def cmd_ingest(args) -> int:
    settings = _settings(args)
    out = Path(args.out or "out/ingest")
    _echo_config(settings, out)
    sketches = []
    class_names: list[str] = []
    skipped = 0
    total_errors = []
    for path in args.inputs:
        with open(path, "rb") as fh:
            corpus, report = parse_quickdraw_ndjson(fh)
        total_errors.extend(report.errors)
        for sketch in corpus.sketches:
            try:
                sketches.append(normalize(sketch))
            except DegenerateSketchError:
                skipped += 1
        for name in corpus.class_names:
            if name not in class_names:
                class_names.append(name)
    corpus = SketchCorpus(sketches=sketches, class_names=class_names)
    if settings["classes"]:
        corpus = corpus.subset([c.strip() for c in settings["classes"].split(",")])
    corpus_path = out / "corpus.skc"
    save_corpus(corpus, corpus_path)
    print(f"ingested {len(corpus)} sketches ({skipped} degenerate skipped, "
          f"{len(total_errors)} malformed lines) -> {corpus_path}")
    for err in total_errors[:10]:
        print(f"  parse error: {err}", file=sys.stderr)
    return 0


def cmd_tokenize_stats(args) -> int:
    settings = _settings(args)
    corpus = _load_corpus_filtered(args.corpus, settings)
    dictionary = _dictionary(settings)
    vocab = Vocabulary(settings["k_primitives"])
    _, _, report = tokenize_corpus(corpus, dictionary, vocab, settings["max_seq_len"])
    lengths = np.array(report.lengths)
    print(f"sequences: {report.tokenized}  skipped degenerate: {report.skipped_degenerate}")
    if len(lengths):
        print(f"length min/median/max: {lengths.min()}/{int(np.median(lengths))}/{lengths.max()}")
        hist, edges = np.histogram(lengths, bins=10)
        for count, lo, hi in zip(hist, edges[:-1], edges[1:]):
            print(f"  [{int(lo):4d},{int(hi):4d}): {count}")
        rate = report.truncated / max(report.tokenized, 1)
        print(f"truncation rate at max_seq_len={settings['max_seq_len']}: {rate:.4f}")
    return 0


def cmd_pretrain(args) -> int:
    settings = _settings(args)
    out = Path(args.out or "out/pretrain")
    corpus = _load_corpus_filtered(args.corpus, settings)
    _echo_config(settings, out)
    config = _model_config(settings)
    ckpt = pretrain(
        corpus,
        config,
        _plan(settings),
        _dictionary(settings),
        metrics=MetricsWriter(out / "metrics.ndjson"),
    )
    save_checkpoint(ckpt, out / "checkpoint.ckpt")
    print(f"pretrained -> {out / 'checkpoint.ckpt'} (best val loss: {ckpt.best_metric})")
    return 0


def cmd_finetune(args) -> int:
    settings = _settings(args)
    out = Path(args.out or f"out/finetune-{args.task}")
    base = load_checkpoint(args.ckpt)
    corpus = _load_corpus_filtered(args.corpus, settings)
    _echo_config(settings, out)
    metrics = MetricsWriter(out / "metrics.ndjson")
    if args.task == "completion":
        if args.class_name:
            corpus = corpus.subset([args.class_name])
        ckpt = finetune_completion(base, corpus, _plan(settings), metrics=metrics)
    else:
        data = labeled_dataset_from_corpus(
            corpus, base.dictionary(), base.vocabulary(), base.config.max_seq_len
        )
        ckpt = finetune_classify(base, data, _plan(settings), metrics=metrics)
    save_checkpoint(ckpt, out / "checkpoint.ckpt")
    print(f"fine-tuned ({args.task}) -> {out / 'checkpoint.ckpt'} (best metric: {ckpt.best_metric})")
    return 0


def _resolve_generator_checkpoint(args, settings) -> Checkpoint:
    if args.ckpt:
        return load_checkpoint(args.ckpt)
    mapping = settings["_file"].get("service", {}).get("checkpoints", {})
    if not args.class_name or args.class_name not in mapping:
        known = ", ".join(sorted(mapping)) or "none"
        raise SystemExit2(f"no checkpoint for class {args.class_name!r} (configured: {known})")
    return load_checkpoint(mapping[args.class_name])


def _write_generation(result, ckpt, out: Path, seed: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    vocab = ckpt.vocabulary()
    dictionary = ckpt.dictionary()
    payload = []
    for i, (ids, stop) in enumerate(zip(result.sequences, result.stop_reasons)):
        polylines, _ = tokens_to_polylines(ids, dictionary, vocab, tolerant=True)
        svg = to_svg(polylines)
        (out / f"sample-{i:03d}.svg").write_text(svg)
        payload.append({"tokens": list(ids), "stop_reason": stop, "seed": result.seeds[i]})
    (out / "samples.json").write_text(json.dumps({"seed": seed, "samples": payload}, indent=2))
    print(f"wrote {len(payload)} samples to {out}")


def cmd_generate(args) -> int:
    settings = _settings(args)
    out = Path(args.out or "out/generate")
    ckpt = _resolve_generator_checkpoint(args, settings)
    _echo_config(settings, out)
    seed = _effective_seed(settings, args)
    sampler = SamplerConfig(
        temperature=settings["temperature"],
        max_new_tokens=settings["max_seq_len"],
        seed=seed,
        num_samples=settings["num_samples"],
    )
    result = generate(ckpt, sampler)
    _write_generation(result, ckpt, out, seed)
    return 0


def cmd_complete(args) -> int:
    settings = _settings(args)
    out = Path(args.out or "out/complete")
    ckpt = _resolve_generator_checkpoint(args, settings)
    prefix = normalize(_strokes_from_file(args.strokes))
    _echo_config(settings, out)
    seed = _effective_seed(settings, args)
    sampler = SamplerConfig(
        temperature=settings["temperature"],
        max_new_tokens=settings["max_seq_len"],
        seed=seed,
        num_samples=settings["num_samples"],
    )
    result = complete(ckpt, prefix, sampler)
    _write_generation(result, ckpt, out, seed)
    return 0


def cmd_classify(args) -> int:
    from .model import forward_classify
    from .training import tokenize_sketch

    ckpt = load_checkpoint(args.ckpt)
    sketch = _strokes_from_file(args.strokes)
    seq, _ = tokenize_sketch(sketch, ckpt.dictionary(), ckpt.vocabulary(), ckpt.config.max_seq_len)
    logits = forward_classify(seq, ckpt.params, ckpt.vocabulary())
    z = logits - logits.max()
    probs = np.exp(z)
    probs /= probs.sum()
    order = np.argsort(-probs, kind="stable")[: min(5, len(ckpt.class_names))]
    for i in order:
        print(f"{ckpt.class_names[i]:<20s} {probs[i]:.4f}")
    return 0


def cmd_eval(args) -> int:
    settings = _settings(args)
    out = Path(args.out or "out/eval")
    classifier = load_checkpoint(args.classifier)
    _echo_config(settings, out)
    if args.recognizability:
        mapping = settings["_file"].get("service", {}).get("checkpoints", {})
        generators = {name: load_checkpoint(path) for name, path in mapping.items()}
        report = recognizability(
            generators,
            classifier,
            n_per_class=args.n_per_class,
            temperature=settings["temperature"],
            seed=settings["seed"],
        )
    else:
        corpus = _load_corpus_filtered(args.corpus, settings)
        data = labeled_dataset_from_corpus(
            corpus, classifier.dictionary(), classifier.vocabulary(), classifier.config.max_seq_len
        )
        report = classifier_report_on_split(classifier, data, _plan(settings))
    print(report.table())
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_ablate(args) -> int:
    settings = _settings(args)
    out = Path(args.out or "out/ablate")
    corpus = _load_corpus_filtered(args.corpus, settings)
    _echo_config(settings, out)
    if args.axis == "network_size":
        grid = [tuple(int(v) for v in point.split("-")) for point in args.grid.split(",")]
    else:
        grid = [int(v) for v in args.grid.split(",")]
    pretrained = load_checkpoint(args.pretrained) if args.pretrained else None
    rows = ablation_runner(
        args.axis,
        grid,
        _plan(settings),
        corpus,
        _model_config(settings),
        _dictionary(settings),
        pretrained=pretrained,
    )
    table = []
    for row in rows:
        if row.skipped_reason:
            print(f"{row.point}: skipped ({row.skipped_reason})")
            table.append({"point": str(row.point), "skipped": row.skipped_reason})
        else:
            print(f"{row.point}: top1={row.report.top1:.4f} top5={row.report.top5:.4f} "
                  f"wall={row.wall_s:.1f}s")
            table.append(
                {
                    "point": str(row.point),
                    "top1": row.report.top1,
                    "top5": row.report.top5,
                    "wall_s": row.wall_s,
                }
            )
    (out / "ablation.json").write_text(json.dumps({"axis": args.axis, "rows": table}, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    settings = _settings(args)
    svc = settings["_file"].get("service", {})
    config = ServiceConfig(
        completion_checkpoints=svc.get("checkpoints", {}),
        classifier_checkpoint=svc.get("classifier"),
        max_num_samples=svc.get("max_num_samples", 5),
        max_prefix_points=svc.get("max_prefix_points", 2000),
        cors_origins=svc.get("cors_origins", []),
        host=args.host or svc.get("host", "127.0.0.1"),
        port=args.port or svc.get("port", 8470),
        static_dir=svc.get("static_dir"),
    )
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


class SystemExit2(RuntimeError):
    """Runtime failure that should exit with code 2."""


def build_parser() -> _Parser:
    parser = _Parser(prog="sketchlm", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse QuickDraw ndjson into a binary corpus")
    p.add_argument("inputs", nargs="+", help="ndjson files")
    _add_common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("tokenize-stats", help="sequence length histogram and truncation rate")
    p.add_argument("--corpus", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_tokenize_stats)

    p = sub.add_parser("pretrain", help="next-token pre-training over a corpus")
    p.add_argument("--corpus", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune for completion or classification")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", choices=["completion", "classify"], required=True)
    p.add_argument("--class", dest="class_name", help="class for completion fine-tuning")
    _add_common(p)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("generate", help="sample sketches from scratch")
    p.add_argument("--ckpt", help="checkpoint path (or use --class with a config map)")
    p.add_argument("--class", dest="class_name")
    _add_common(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("complete", help="sample completions of a stroke prefix")
    p.add_argument("--ckpt")
    p.add_argument("--class", dest="class_name")
    p.add_argument("--strokes", required=True, help="JSON file of [dx, dy, pen] triples")
    _add_common(p)
    p.set_defaults(fn=cmd_complete)

    p = sub.add_parser("classify", help="top-5 classes for a sketch")
    p.add_argument("--ckpt", required=True, help="classifier checkpoint")
    p.add_argument("--strokes", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("eval", help="accuracy report or recognizability scoring")
    p.add_argument("--classifier", required=True)
    p.add_argument("--corpus")
    p.add_argument("--recognizability", action="store_true")
    p.add_argument("--n-per-class", type=int, default=20, dest="n_per_class")
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="sweep class_count, train_size, or network_size")
    p.add_argument("--corpus", required=True)
    p.add_argument("--axis", choices=["class_count", "train_size", "network_size"], required=True)
    p.add_argument("--grid", required=True, help="e.g. 200,1000,5000 or 4-4-128,8-8-512")
    p.add_argument("--pretrained", help="start fine-tunes from this checkpoint")
    _add_common(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    _add_common(p)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
