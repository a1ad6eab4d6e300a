"""Command line entry point: ``absamamba {train,eval,synth,sweep}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .checkpoint import from_training, load_checkpoint, save_checkpoint
from .config import POOL_MODES, VARIANTS, ModelConfig, RunConfig, ablate, load_run_config
from .data import SynthConfig, attach_conllu, load_dataset, read_conllu, save_dataset, synth_longrange_generate
from .train import evaluate, format_table, layer_sweep, train

logger = logging.getLogger("absamamba")

# small model used by `sweep` when no config file is given
SWEEP_DEMO = dict(word_dim=16, pos_dim=4, tag_dim=4, hidden=8, heads=2, ssm_state=4, kan_grid=3,
                  dropout_embed=0.1, epochs=5, lr=0.01)


def _load_split(path: str | None, conllu: str | None):
    if not path:
        return None
    samples = load_dataset(path)
    if conllu:
        attach_conllu(samples, read_conllu(conllu))
    return samples


def _resolve(args) -> RunConfig:
    run = load_run_config(args.config)
    model = run.model
    if getattr(args, "seed", None) is not None:
        model = model.replace(seed=args.seed)
    if getattr(args, "ablate", None):
        model = ablate(model, args.ablate)
    if getattr(args, "pool", None):
        model = model.replace(pool=args.pool)
    if getattr(args, "epochs", None) is not None:
        model = model.replace(epochs=args.epochs)
    run.model = model
    if getattr(args, "out", None):
        run.out_dir = args.out
    return run


def _snapshot(run: RunConfig, out_dir: Path) -> None:
    data = dataclasses.asdict(run)
    (out_dir / "config.resolved.json").write_text(json.dumps(data, indent=2) + "\n")


def cmd_train(args) -> int:
    run = _resolve(args)
    out_dir = Path(run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _snapshot(run, out_dir)
    train_set = _load_split(run.train, run.train_conllu)
    if not train_set:
        raise SystemExit("config must name a non-empty `train` dataset")
    dev_set = _load_split(run.dev, run.dev_conllu)
    test_set = _load_split(run.test, run.test_conllu)
    result = train(run.model, train_set, dev_set, word_vectors=run.word_vectors,
                   log_path=out_dir / "metrics.jsonl")
    ckpt = from_training(result, run.model)
    save_checkpoint(ckpt, out_dir / "checkpoint.npz")
    result.restore_best()
    report = {"best_epoch": result.best_epoch}
    if test_set:
        report["test"] = evaluate(result.model, test_set, result.vocab, result.tag_vocab)
        (out_dir / "test_metrics.json").write_text(json.dumps(report["test"]) + "\n")
    print(json.dumps(report))
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    samples = _load_split(args.data, args.conllu)
    if not samples:
        raise SystemExit(f"{args.data}: no samples to evaluate")
    model = ckpt.build_model()
    result = evaluate(model, samples, ckpt.vocab, ckpt.tag_vocab)
    text = json.dumps(result)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(n=args.n, d_min=args.d_min, d_max=args.d_max, seed=args.seed,
                      min_len=args.min_len, max_len=args.max_len,
                      distractor_prob=args.distractor_prob, vocab_size=args.vocab_size)
    samples = synth_longrange_generate(cfg)
    save_dataset(samples, args.out)
    print(json.dumps({"written": len(samples), "out": args.out}))
    return 0


def cmd_sweep(args) -> int:
    counts = [int(c) for c in args.layers.split(",") if c.strip()]
    if args.config:
        run = _resolve(args)
        train_set = _load_split(run.train, run.train_conllu)
        dev_set = _load_split(run.dev, run.dev_conllu)
        test_set = _load_split(run.test, run.test_conllu)
        model = run.model
        out_dir = Path(run.out_dir)
    else:
        # self-contained demo on the synthetic long-range task
        model = ModelConfig(**SWEEP_DEMO)
        if args.seed is not None:
            model = model.replace(seed=args.seed)
        if args.epochs is not None:
            model = model.replace(epochs=args.epochs)
        train_set = synth_longrange_generate(SynthConfig(n=240, seed=1))
        dev_set = None
        test_set = synth_longrange_generate(SynthConfig(n=120, seed=2))
        out_dir = Path(args.out or "runs/sweep")
        run = RunConfig(model=model, out_dir=str(out_dir))
    out_dir.mkdir(parents=True, exist_ok=True)
    _snapshot(run, out_dir)
    rows = layer_sweep(model, counts, train_set, dev_set, test_set)
    with open(out_dir / "sweep.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    print(format_table(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="absamamba", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ablate", choices=VARIANTS[1:])
    p.add_argument("--pool", choices=POOL_MODES)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--conllu")
    p.add_argument("--out", help="also write the metrics JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate the synthetic long-range dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--d-min", type=int, required=True)
    p.add_argument("--d-max", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-len", type=int, default=SynthConfig.min_len)
    p.add_argument("--max-len", type=int, default=SynthConfig.max_len)
    p.add_argument("--distractor-prob", type=float, default=SynthConfig.distractor_prob)
    p.add_argument("--vocab-size", type=int, default=SynthConfig.vocab_size)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="accuracy vs number of layers")
    p.add_argument("--layers", required=True, help="comma separated, e.g. 1,2,3,4")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
