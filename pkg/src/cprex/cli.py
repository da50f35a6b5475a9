"""Command-line interface.

Verbs: synth, ingest, folds, train, predict, evaluate, run-all.
Exit code 0 on success; corpus/validation problems exit 1 with a categorized
message; usage errors exit 2 (argparse).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .config import PROFILES, load_config
from .corpus import (CorpusError, generate_candidates, gold_relation_tuples,
                     parse_corpus, read_predictions, write_corpus)
from .metrics import micro_prf_tuples
from .synth import generate_synthetic_corpus


def _add_config_args(p):
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--config", default=None, help="TOML config overriding the profile")
    p.add_argument("--seed", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cprex",
                                     description="chemical-protein relation extraction")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--size", type=int, default=300)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="parse and validate a corpus file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default=None, help="rewrite in canonical form")

    p = sub.add_parser("folds", help="print the 5-fold plan for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed", type=int, default=1)

    p = sub.add_parser("train", help="train all models for one fold")
    p.add_argument("--corpus", required=True)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--outdir", required=True)
    _add_config_args(p)

    p = sub.add_parser("predict", help="predict with trained fold models")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True, help="fold directory written by train")
    p.add_argument("--combiner", default="voting",
                   choices=pipeline.BASE_SYSTEMS + pipeline.COMBINERS)
    p.add_argument("--unanimous", action="store_true",
                   help="voting requires all three models to agree")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score a prediction file against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True, help="corpus file with gold relations")

    p = sub.add_parser("run-all", help="synthesize, train, predict, and score")
    p.add_argument("--outdir", required=True)
    p.add_argument("--size", type=int, default=300)
    p.add_argument("--corpus", default=None, help="use this corpus instead of synthesizing")
    p.add_argument("--folds", default="0", help="comma-separated fold indices, or 'all'")
    _add_config_args(p)

    return parser


def _cmd_synth(args) -> int:
    corpus = generate_synthetic_corpus(args.size, args.seed)
    write_corpus(corpus, args.out)
    print("wrote %d documents to %s" % (len(corpus), args.out))
    return 0


def _cmd_ingest(args) -> int:
    corpus = parse_corpus(args.input)
    stats: dict = {}
    candidates = generate_candidates(corpus, stats)
    gold = gold_relation_tuples(corpus, stats)
    print("documents:  %d" % len(corpus))
    print("sentences:  %d" % sum(len(d.sentences) for d in corpus.documents))
    print("mentions:   %d" % sum(len(d.mentions) for d in corpus.documents))
    print("relations:  %d (%d dropped as cross-sentence or overlapping)"
          % (len(gold), stats.get("gold_relations_dropped", 0)))
    print("candidates: %d (%d overlapping pairs skipped)"
          % (len(candidates), stats.get("overlapping_pairs_skipped", 0)))
    if args.out:
        write_corpus(corpus, args.out)
        print("rewrote corpus to %s" % args.out)
    return 0


def _cmd_folds(args) -> int:
    corpus = parse_corpus(args.corpus)
    plan = pipeline.make_folds(corpus, args.seed)
    print(json.dumps(
        {"seed": plan.seed,
         "folds": [{"basetrain": list(f.basetrain), "metatrain": list(f.metatrain)}
                   for f in plan.folds]},
        indent=2))
    return 0


def _cmd_train(args) -> int:
    config = load_config(args.config, args.profile)
    corpus = parse_corpus(args.corpus, config.corpus.label_set())
    plan = pipeline.make_folds(corpus, args.seed)
    pipeline.train_fold(corpus, plan, args.fold, config, args.seed, outdir=args.outdir)
    print("wrote models to %s" % (Path(args.outdir) / ("fold%d" % args.fold)))
    return 0


def _cmd_predict(args) -> int:
    models = pipeline.FoldModels.load(args.models, vote_unanimous=args.unanimous)
    corpus = parse_corpus(args.corpus, models.label_set)
    result = pipeline.predict_run(corpus, models, args.combiner, out_path=args.out)
    print(result.metrics_line())
    return 0


def _cmd_evaluate(args) -> int:
    predictions = read_predictions(args.pred)
    gold = gold_relation_tuples(parse_corpus(args.gold))
    p, r, f = micro_prf_tuples(predictions, gold)
    print("P=%.4f R=%.4f F=%.4f" % (p, r, f))
    return 0


def _cmd_run_all(args) -> int:
    config = load_config(args.config, args.profile)
    folds = tuple(range(5)) if args.folds == "all" else tuple(
        int(x) for x in args.folds.split(","))
    pipeline.run_all(config, args.outdir, seed=args.seed, size=args.size,
                     corpus_path=args.corpus, folds=folds)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "folds": _cmd_folds,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "run-all": _cmd_run_all,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except CorpusError as exc:
        print("corpus error: %s" % exc, file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
