"""Command-line entry point: ``lgcm <command>`` or ``python -m lgcm <command>``.

Exit codes: 0 success, 1 usage/config error, 2 data or checkpoint error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, data, metrics
from .checkpoint import load_checkpoint, save_checkpoint
from .config import LGCMConfig
from .decoder import GenerationConfig, greedy_generate
from .errors import CheckpointError, ConfigError, DataError, NumericError
from .flops import count_flops
from .model import LGCM
from .runconfig import RunConfig, load_run_config
from .trainer import evaluate_ppl, train

log = logging.getLogger("lgcm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.resolve(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(cfg: RunConfig, out: Path, name: str = "config.ini") -> None:
    resolved = RunConfig(**{s: getattr(cfg, s) for s in ("run", "data", "model", "train", "generate", "metrics")})
    for key in ("train", "valid", "test", "vocab"):
        value = getattr(cfg.data, key)
        if value:
            setattr(resolved.data, key, str(cfg.resolve(value).resolve()))
    resolved.run.out_dir = str(out.resolve())
    resolved.write(out / name)


def _split_path(cfg: RunConfig | None, split: str) -> Path:
    if cfg is not None and split in ("train", "valid", "test"):
        value = getattr(cfg.data, split)
        if not value:
            raise ConfigError(f"no [data] {split} path in the config")
        return cfg.resolve(value)
    return Path(split)


def _vocab_from_checkpoint(ckpt, cfg: RunConfig | None = None) -> data.Vocabulary:
    if ckpt.vocab:
        return data.Vocabulary(ckpt.vocab)
    if cfg is not None and cfg.data.vocab:
        return data.Vocabulary.load(cfg.resolve(cfg.data.vocab))
    raise CheckpointError("checkpoint carries no vocabulary and none was configured")


def cmd_build_vocab(args) -> int:
    dialogs = data.load_jsonl(args.data)
    vocab = data.build_vocab(dialogs, args.min_freq)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    vocab.save(args.out)
    print(f"V={len(vocab)}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    out = _out_dir(cfg)
    train_dialogs = data.load_jsonl(cfg.resolve(cfg.data.train))
    valid_dialogs = data.load_jsonl(cfg.resolve(cfg.data.valid or cfg.data.train))
    vocab_path = cfg.resolve(cfg.data.vocab) if cfg.data.vocab else None
    if vocab_path is not None and vocab_path.exists():
        vocab = data.Vocabulary.load(vocab_path)
    else:
        vocab = data.build_vocab(train_dialogs, cfg.data.min_freq)
    vocab.save(out / "vocab.txt")
    if not cfg.data.vocab:
        cfg.data.vocab = str((out / "vocab.txt").resolve())
    model_cfg = cfg.model_config(len(vocab))
    train_set = data.make_dataset(train_dialogs, model_cfg.n_max, vocab)
    valid_set = data.make_dataset(valid_dialogs, model_cfg.n_max, vocab)
    _snapshot(cfg, out)
    print(f"# seed={cfg.run.seed} variant={model_cfg.variant.value} V={len(vocab)} "
          f"train_examples={len(train_set)} valid_examples={len(valid_set)}")
    model = LGCM(model_cfg)
    result = train(model, train_set, valid_set, cfg.train_config(), out_dir=out)
    result.best.vocab = vocab.itos
    save_checkpoint(result.best, out / "best.npz")
    for row in result.log:
        print(f"step {row['step']:6d}  train_loss {row['train_loss']:.4f}  valid_ppl {row['valid_ppl']:.4f}")
    print(f"best step {result.best.step} valid_ppl {result.best.valid_ppl:.4f} -> {out / 'best.npz'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    ckpt = load_checkpoint(args.checkpoint)
    vocab = _vocab_from_checkpoint(ckpt, cfg)
    model = ckpt.to_model()
    dialogs = data.load_jsonl(_split_path(cfg, args.split))
    examples = data.make_dataset(dialogs, model.config.n_max, vocab)
    ppl = evaluate_ppl(model, examples, cfg.train.batch_size)
    gen_cfg = GenerationConfig(cfg.generate.max_new_tokens)
    copy = args.copy_reference or cfg.metrics.copy_reference
    pairs = []
    for ex in examples:
        ref = vocab.decode(ex.response)
        hyp = ref if copy else vocab.decode(greedy_generate(model, ex.context, ex.context_roles, ex.response_role, gen_cfg))
        pairs.append((hyp, ref))
    report = metrics.evaluate_pairs(pairs, ppl=ppl)
    out = _out_dir(cfg)
    name = Path(args.split).stem
    (out / f"eval_{name}.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / f"eval_{name}.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    _snapshot(cfg, out, f"config_eval_{name}.ini")
    print(f"# seed={cfg.run.seed} split={args.split} checkpoint={args.checkpoint}" + (" copy_reference" if copy else ""))
    print(report.to_text())
    return EXIT_OK


def cmd_generate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    vocab = _vocab_from_checkpoint(ckpt)
    model = ckpt.to_model()
    dialogs = data.load_jsonl(args.context_file, min_turns=1)
    if len(dialogs) != 1:
        raise DataError(f"{args.context_file}: expected exactly one dialog, found {len(dialogs)}")
    turns = dialogs[0].utterances[-model.config.n_max:]
    context = [vocab.encode(u.tokens) for u in turns]
    roles = [data.ROLES[u.speaker] for u in turns]
    ids = greedy_generate(model, context, roles, config=GenerationConfig(args.max_new_tokens))
    print(data.detokenize(vocab.decode(ids)))
    return EXIT_OK


def cmd_inspect(args) -> int:
    cfg = load_run_config(args.config) if args.config else None
    ckpt = load_checkpoint(args.checkpoint)
    vocab = _vocab_from_checkpoint(ckpt, cfg)
    model = ckpt.to_model()
    path = _split_path(cfg, args.split)
    examples = data.make_dataset(data.load_jsonl(path), model.config.n_max, vocab)
    split = Path(args.split).stem
    try:
        report = analysis.combined_report(model, examples, split=split)
    except ConfigError:
        report = analysis.gate_heatmap(model, examples, split=split)
    out = Path(args.out)
    written = analysis.write_csvs(report, out)
    text = analysis.render_text(report)
    (out / f"heatmaps_{split}.txt").write_text(text, encoding="utf-8")
    print(f"# seed={model.config.seed} split={split} files={len(written) + 1}")
    print(text, end="")
    return EXIT_OK


def cmd_flops(args) -> int:
    if args.config:
        cfg = load_run_config(args.config)
        model_cfg = cfg.model_config(vocab_size=4)
    else:
        model_cfg = LGCMConfig.reference_scale(vocab_size=4)
    if args.d:
        model_cfg = model_cfg.replace(d=args.d, heads=1)
    report = count_flops(model_cfg, L_total=args.L, N=args.N, mode=args.mode)
    print(report.to_text())
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    if args.json:
        print(json.dumps(report.as_dict()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lgcm", description="Local-global hierarchical dialogue model.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-vocab", help="build a vocabulary file from a JSONL corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--min-freq", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", help="train a model and keep the best validation checkpoint")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="perplexity and generation metrics on a split")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", help="train/valid/test or a JSONL path")
    p.add_argument("--copy-reference", action="store_true", help="debug: score references against themselves")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="greedy response for the last turns of a one-dialog JSONL file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--context-file", required=True)
    p.add_argument("--max-new-tokens", type=int, default=30)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("inspect", help="export attention and gate heatmaps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", required=True, help="train/valid/test (needs --config) or a JSONL path")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("flops", help="encoder FLOP comparison, LGCM vs flat")
    p.add_argument("--config")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--d", type=int)
    p.add_argument("--mode", choices=("closed_form", "exact"), default="closed_form")
    p.add_argument("--csv")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_flops)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"lgcm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"lgcm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"lgcm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"lgcm: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"lgcm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
