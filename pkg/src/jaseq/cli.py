"""Command-line entry point.

One subcommand per pipeline stage.  Every command prints a JSON summary
on stdout and logs to stderr, exits 0 on success and nonzero with a
diagnostic otherwise.  ``--config FILE`` reads flat ``key = value``
lines that mirror the long flag names; explicit flags win over the file.
"""

import argparse
import glob
import json
import logging
import os
import sys
from dataclasses import dataclass

from . import corpus as corpus_io
from . import metrics, mixing, model as minimodel, objectives, subword
from .errors import ConfigError, JaseqError, ParseError
from .tokens import TASK_BMASS, TASK_BRSS, TASK_MASS, lang_token

logger = logging.getLogger("jaseq")

OBJECTIVES = ("mass", "bmass", "brss.f", "brss.r", "jass", "mass+jass")


@dataclass
class PipelineConfig:
    """Run-level settings shared by all commands."""

    seed: int = 0
    threads: int = 1
    config_path: str = None


def _existing_file(path):
    if not os.path.isfile(path):
        raise argparse.ArgumentTypeError(f"input path does not exist: {path}")
    return path


def _read_config_file(path):
    """Flat ``key = value`` lines; '#' starts a comment."""
    entries = []
    with open(path, encoding="utf-8") as f:
        for line_no, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            entries.append((key, value))
    return entries


def _config_to_argv(entries):
    argv = []
    for key, value in entries:
        flag = f"--{key}"
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                argv.append(flag)
        else:
            argv.extend([flag, value])
    return argv


def _inject_config(argv):
    """Splice config-file flags in right after the subcommand, so that
    flags typed on the command line override the file (last wins)."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise ConfigError("--config needs a file path")
    path = argv[i + 1]
    if not os.path.isfile(path):
        raise ConfigError(f"config file does not exist: {path}")
    rest = argv[:i] + argv[i + 2:]
    if not rest or rest[0].startswith("-"):
        raise ConfigError("--config requires a subcommand")
    return [rest[0]] + _config_to_argv(_read_config_file(path)) + rest[1:]


def _emit(summary):
    print(json.dumps(summary, ensure_ascii=False, indent=2))


def _common_flags(p):
    p.add_argument("--seed", type=int, default=0, help="global random seed")
    p.add_argument("--threads", type=int, default=1, help="worker count for parallel stages")
    p.add_argument("--config", help="flat key=value file mirroring these flags")


# ---------------------------------------------------------------- validate

def cmd_validate(args):
    report = corpus_io.ValidationReport()
    with open(args.input, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                s = corpus_io.parse_annotated_line(line, lang=args.lang, line_no=line_no)
            except ParseError as e:
                report.sentences += 1
                report.violations.append((line_no, str(e)))
                continue
            report.sentences += 1
            report.tokens += len(s.tokens)
            report.bunsetsus += len(s.bunsetsu)
    summary = report.to_dict()
    summary["input"] = args.input
    _emit(summary)
    return 0


# ---------------------------------------------------------------- learn-bpe

def cmd_learn_bpe(args):
    mono = []
    for path in args.input:
        mono.extend(corpus_io.read_annotated_corpus(path, lang=args.lang))
    finetune = None
    if args.finetune:
        finetune = list(corpus_io.read_annotated_corpus(args.finetune, lang=args.lang))
    model = subword.learn_bpe(mono, finetune=finetune,
                              oversample_factor=args.oversample,
                              vocab_size=args.vocab_size, workers=args.run.threads)
    model.save(args.output)
    _emit({
        "merges": len(model.merges),
        "vocab_entries": len(model.vocab),
        "vocab_size_target": model.vocab_size_target,
        "vocab_hash": model.vocab_hash(),
        "files": [f"{args.output}.merges", f"{args.output}.vocab"],
    })
    return 0


# ---------------------------------------------------------------- gen-pairs

def _route_components(sentences, objective, args):
    """Group (task, lang) component streams out of a self-describing corpus.

    Annotated sentences feed the bunsetsu objectives; under the joint
    objectives, unannotated sentences fall back to plain span masking,
    and ``bmass``/``brss`` alone reject them outright.  Per-sentence
    seeds mix in the task so joint objectives draw independent masks.
    """
    direction = "R" if objective == "brss.r" else args.brss_direction
    reorder_cfg = objectives.ReorderConfig(topic_signal_enabled=not args.no_topic_signal)
    components = {}

    def make_mass(s, idx):
        mask = objectives.sample_mass_mask(
            len(s.tokens), mask_ratio=args.mask_ratio,
            rng_seed=f"{args.seed}:{TASK_MASS}:{idx}", spans=args.mask_spans)
        return objectives.make_masked_pair(s, mask, TASK_MASS)

    def make_bmass(s, idx):
        mask = objectives.sample_bunsetsu_mask(
            s, bunsetsu_fraction=args.bunsetsu_fraction,
            rng_seed=f"{args.seed}:{TASK_BMASS}:{idx}")
        return objectives.make_masked_pair(s, mask, TASK_BMASS)

    def make_brss(s, idx):
        return objectives.make_brss_pair(s, cfg=reorder_cfg, direction=direction)

    def add(task, make, s, idx):
        components.setdefault((task, s.lang), []).append(make(s, idx))

    for idx, s in enumerate(sentences):
        annotated = s.has_bunsetsu
        if objective == "mass":
            add(TASK_MASS, make_mass, s, idx)
        elif objective == "bmass":
            add(TASK_BMASS, make_bmass, s, idx)
        elif objective in ("brss.f", "brss.r"):
            add(TASK_BRSS, make_brss, s, idx)
        elif objective == "jass":
            if annotated:
                add(TASK_BMASS, make_bmass, s, idx)
                add(TASK_BRSS, make_brss, s, idx)
            else:
                add(TASK_MASS, make_mass, s, idx)
        elif objective == "mass+jass":
            add(TASK_MASS, make_mass, s, idx)
            if annotated:
                add(TASK_BMASS, make_bmass, s, idx)
                add(TASK_BRSS, make_brss, s, idx)
        else:
            raise ConfigError(f"unknown objective {objective!r}")
    return components


def _parse_weights(spec_string):
    weights = {}
    if not spec_string:
        return weights
    for part in spec_string.split(","):
        fields = part.strip().split(":")
        if len(fields) != 3:
            raise ConfigError(f"weight must be task:lang:w, got {part!r}")
        task, lang, w = fields[0].upper(), fields[1].lower(), float(fields[2])
        weights[(task, lang)] = w
    return weights


def cmd_gen_pairs(args):
    sentences = []
    for path in args.input:
        sentences.extend(corpus_io.read_annotated_corpus(path, lang=args.lang))
    sentences = list(corpus_io.filter_by_length(sentences, args.max_len))
    if not sentences:
        raise ConfigError("no sentences left after the length filter")
    if args.bpe_model:
        bpe = subword.SubwordModel.load(args.bpe_model)
        sentences = [subword.apply_bpe(s, bpe) for s in sentences]

    component_pairs = _route_components(sentences, args.objective, args)
    weights = _parse_weights(args.weights)
    keys = sorted(component_pairs)
    schedule = mixing.MixSchedule(
        components=[(t, l, weights.get((t, l), 1.0)) for t, l in keys],
        shard_size=args.shard_size,
        global_seed=args.seed,
        on_exhaust=args.on_exhaust,
    )
    paths = mixing.build_shards([component_pairs[k] for k in keys], schedule, args.out_dir)
    stats = mixing.sample_stats(paths)
    _emit({
        "out_dir": args.out_dir,
        "shards": [os.path.basename(p) for p in paths],
        "records": sum(sum(s["counts"].values()) for s in stats),
        "components": [{"task": t, "lang": l, "pairs": len(component_pairs[(t, l)])}
                       for t, l in keys],
        "seed": args.seed,
    })
    return 0


# ---------------------------------------------------------------- training

def _load_shards(paths_or_dir):
    paths = []
    for entry in paths_or_dir:
        if os.path.isdir(entry):
            paths.extend(sorted(glob.glob(os.path.join(entry, "shard-*.tsv"))))
        else:
            paths.append(entry)
    if not paths:
        raise ConfigError(f"no shard files found in {paths_or_dir}")
    pairs = []
    for p in paths:
        pairs.extend(mixing.read_shard(p))
    return pairs


def _train_config(args):
    return minimodel.TrainConfig(
        learning_rate=args.learning_rate, max_steps=args.max_steps,
        batch_size=args.batch_size, seed=args.seed, patience=args.patience,
        checkpoint_interval=args.checkpoint_interval, dev_metric=args.dev_metric)


def cmd_train_toy(args):
    pairs = _load_shards(args.shards)
    dev = _load_shards([args.dev]) if args.dev else None
    vocab = minimodel.build_vocab([p.enc_input for p in pairs] + [p.dec_target for p in pairs])
    if args.bpe_model:
        vocab = subword.SubwordModel.load(args.bpe_model).vocab
    m = minimodel.TinyModel(vocab, embed_dim=args.embed_dim, hidden_dim=args.hidden_dim,
                            seed=args.seed)
    cfg = _train_config(args)
    m, log = minimodel.train(m, pairs, cfg, dev_pairs=dev)
    m.save(args.output)
    log_path = args.log_csv or f"{args.output}.log.csv"
    minimodel.checkpoint_log_to_csv(log, log_path)
    best = [row for row in log if row["best"]]
    _emit({
        "checkpoint": f"{args.output}.npz" if not args.output.endswith(".npz") else args.output,
        "log_csv": log_path,
        "pairs": len(pairs),
        "steps": log[-1]["step"] if log else 0,
        "best_step": best[-1]["step"] if best else 0,
        "best_dev": best[-1]["dev_value"] if best else None,
        "dev_metric": cfg.dev_metric,
        "params": m.n_params(),
        "seed": args.seed,
    })
    return 0


def cmd_finetune(args):
    m = minimodel.TinyModel.load(args.model)
    parallel = corpus_io.read_parallel_corpus(args.src, args.src_lang, args.tgt, args.tgt_lang)
    dev = None
    if args.dev_src and args.dev_tgt:
        dev = corpus_io.read_parallel_corpus(args.dev_src, args.src_lang,
                                             args.dev_tgt, args.tgt_lang)
    bpe = subword.SubwordModel.load(args.bpe_model) if args.bpe_model else None
    expected = subword.vocab_fingerprint(bpe.vocab) if bpe else None
    cfg = _train_config(args)
    m, log = minimodel.finetune(m, parallel, cfg, dev_pairs=dev, subword_model=bpe,
                                expected_vocab_hash=expected)
    m.save(args.output)
    log_path = args.log_csv or f"{args.output}.log.csv"
    minimodel.checkpoint_log_to_csv(log, log_path)
    _emit({
        "checkpoint": f"{args.output}.npz" if not args.output.endswith(".npz") else args.output,
        "log_csv": log_path,
        "pairs": len(parallel),
        "steps": log[-1]["step"] if log else 0,
        "dev_metric": cfg.dev_metric,
        "seed": args.seed,
    })
    return 0


def cmd_accuracy(args):
    m = minimodel.TinyModel.load(args.model)
    pairs = _load_shards(args.shards)
    acc = minimodel.unigram_accuracy(m, pairs)
    _emit({"accuracy": acc, "pairs": len(pairs),
           "positions": sum(len(p.loss_positions) for p in pairs)})
    return 0


def cmd_decode(args):
    m = minimodel.TinyModel.load(args.model)
    bpe = subword.SubwordModel.load(args.bpe_model) if args.bpe_model else None
    n = 0
    with open(args.input, encoding="utf-8") as fin, \
            open(args.output, "w", encoding="utf-8") as fout:
        for line in fin:
            tokens = line.split()
            if not tokens:
                fout.write("\n")
                continue
            s = corpus_io.AnnotatedSentence(lang=args.lang, tokens=tokens)
            if bpe is not None:
                s = subword.apply_bpe(s, bpe)
            hyp = m.greedy_decode([lang_token(args.lang)] + s.tokens, max_len=args.max_len)
            words = subword.detokenize(hyp, bpe) if bpe is not None else hyp
            fout.write(" ".join(words) + "\n")
            n += 1
    _emit({"sentences": n, "output": args.output})
    return 0


# ---------------------------------------------------------------- metrics

def _read_eval_corpus(hyp_path, ref_path):
    with open(hyp_path, encoding="utf-8") as f:
        hyps = [line.split() for line in f]
    with open(ref_path, encoding="utf-8") as f:
        refs = [line.split() for line in f]
    return metrics.EvalCorpus(hypotheses=hyps, references=refs)


def cmd_bleu(args):
    corpus = _read_eval_corpus(args.hyp, args.ref)
    _emit({"bleu": metrics.bleu(corpus, max_n=args.max_n, smooth=args.smooth),
           "sentences": len(corpus.hypotheses)})
    return 0


def cmd_significance(args):
    a = _read_eval_corpus(args.hyp_a, args.ref)
    b = _read_eval_corpus(args.hyp_b, args.ref)
    p = metrics.bootstrap_significance(a, b, samples=args.samples, seed=args.seed,
                                       max_n=args.max_n, smooth=args.smooth)
    _emit({
        "bleu_a": metrics.bleu(a, max_n=args.max_n, smooth=args.smooth),
        "bleu_b": metrics.bleu(b, max_n=args.max_n, smooth=args.smooth),
        "p_value": p,
        "samples": args.samples,
        "seed": args.seed,
    })
    return 0


# ---------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="jaseq",
        description="Masking/reordering pre-training data pipeline for Japanese "
                    "sequence-to-sequence models, with a tiny verification trainer.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an annotated corpus and report counts")
    p.add_argument("--input", type=_existing_file, required=True)
    p.add_argument("--lang", help="fallback language for records without a lang key")
    _common_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("learn-bpe", help="learn a joint subword vocabulary")
    p.add_argument("--input", type=_existing_file, action="append", required=True,
                   help="annotated corpus (repeatable)")
    p.add_argument("--finetune", type=_existing_file,
                   help="fine-tuning corpus to oversample during learning")
    p.add_argument("--oversample", type=int, default=1)
    p.add_argument("--vocab-size", type=int, default=60000)
    p.add_argument("--lang", help="fallback language for records without a lang key")
    p.add_argument("--output", required=True, help="model file prefix")
    _common_flags(p)
    p.set_defaults(func=cmd_learn_bpe)

    p = sub.add_parser("gen-pairs", help="generate tagged training pairs and shards")
    p.add_argument("--input", type=_existing_file, action="append", required=True)
    p.add_argument("--objective", choices=OBJECTIVES, required=True)
    p.add_argument("--lang", help="fallback language for records without a lang key")
    p.add_argument("--bpe-model", help="apply this subword model before pairing")
    p.add_argument("--max-len", type=int, default=corpus_io.DEFAULT_MAX_TOKENS,
                   help="drop sentences longer than this many words")
    p.add_argument("--mask-ratio", type=float, default=0.5)
    p.add_argument("--mask-spans", type=int, default=1)
    p.add_argument("--bunsetsu-fraction", type=float, default=0.5)
    p.add_argument("--brss-direction", choices=("F", "R"), default="F")
    p.add_argument("--no-topic-signal", action="store_true",
                   help="disable topic-particle chunk splits during reordering")
    p.add_argument("--shard-size", type=int, default=1000)
    p.add_argument("--weights", help="component weights, task:lang:w[,task:lang:w...]")
    p.add_argument("--on-exhaust", choices=("stop", "wrap"), default="stop")
    p.add_argument("--out-dir", required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_gen_pairs)

    def train_flags(p):
        p.add_argument("--learning-rate", type=float, default=0.5)
        p.add_argument("--max-steps", type=int, default=1000)
        p.add_argument("--batch-size", type=int, default=16)
        p.add_argument("--patience", type=int, default=5)
        p.add_argument("--checkpoint-interval", type=int, default=100)
        p.add_argument("--log-csv")
        _common_flags(p)

    p = sub.add_parser("train-toy", help="train the tiny verification model on shards")
    p.add_argument("--shards", action="append", required=True,
                   help="shard file or directory (repeatable)")
    p.add_argument("--dev", help="shard file used for checkpoint selection")
    p.add_argument("--bpe-model", help="take the vocabulary from this subword model")
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=32)
    p.add_argument("--dev-metric", choices=("accuracy", "loss", "bleu"), default="accuracy")
    p.add_argument("--output", required=True, help="checkpoint path")
    train_flags(p)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("finetune", help="fine-tune a checkpoint on a parallel corpus")
    p.add_argument("--model", type=_existing_file_npz, required=True)
    p.add_argument("--src", type=_existing_file, required=True)
    p.add_argument("--src-lang", required=True)
    p.add_argument("--tgt", type=_existing_file, required=True)
    p.add_argument("--tgt-lang", required=True)
    p.add_argument("--dev-src", type=_existing_file)
    p.add_argument("--dev-tgt", type=_existing_file)
    p.add_argument("--bpe-model")
    p.add_argument("--dev-metric", choices=("accuracy", "loss", "bleu"), default="loss")
    p.add_argument("--output", required=True)
    train_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("accuracy", help="teacher-forced 1-gram accuracy on shards")
    p.add_argument("--model", type=_existing_file_npz, required=True)
    p.add_argument("--shards", action="append", required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("decode", help="greedy-decode a plain text file")
    p.add_argument("--model", type=_existing_file_npz, required=True)
    p.add_argument("--input", type=_existing_file, required=True)
    p.add_argument("--lang", required=True)
    p.add_argument("--bpe-model")
    p.add_argument("--max-len", type=int, default=80)
    p.add_argument("--output", required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bleu", help="corpus BLEU between two plain text files")
    p.add_argument("--hyp", type=_existing_file, required=True)
    p.add_argument("--ref", type=_existing_file, required=True)
    p.add_argument("--max-n", type=int, default=4)
    p.add_argument("--smooth", action="store_true")
    _common_flags(p)
    p.set_defaults(func=cmd_bleu)

    p = sub.add_parser("significance", help="paired bootstrap test: is system B better?")
    p.add_argument("--hyp-a", type=_existing_file, required=True)
    p.add_argument("--hyp-b", type=_existing_file, required=True)
    p.add_argument("--ref", type=_existing_file, required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--max-n", type=int, default=4)
    p.add_argument("--smooth", action="store_true")
    _common_flags(p)
    p.set_defaults(func=cmd_significance)

    return parser


def _existing_file_npz(path):
    for candidate in (path, f"{path}.npz"):
        if os.path.isfile(candidate):
            return path
    raise argparse.ArgumentTypeError(f"checkpoint does not exist: {path}")


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _inject_config(argv)
        args = build_parser().parse_args(argv)
        args.run = PipelineConfig(seed=getattr(args, "seed", 0),
                                  threads=getattr(args, "threads", 1),
                                  config_path=getattr(args, "config", None))
        return args.func(args)
    except (JaseqError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
