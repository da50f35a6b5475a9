"""Experiment orchestration: the 80/20 x 5-fold protocol, per-fold training of
the three base models plus the stacking forest, prediction runs with either
combiner, and micro-averaged scoring.

Per fold, the base models are trained on 80% of the documents and the stacker
on the remaining 20% (meta-features come from the trained base models). Folds
split at document level so no sentence leaks across splits.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import cnn as cnn_mod
from . import ensemble as ens
from . import neuralcore as nc
from . import rnn as rnn_mod
from . import svm as svm_mod
from .config import ExperimentConfig
from .corpus import (AnnotatedCorpus, RelationInstance, attach_gold_labels,
                     generate_candidates, gold_relation_tuples, parse_corpus,
                     write_corpus, write_predictions)
from .labels import NEG, LabelSet
from .metrics import micro_prf_tuples
from .synth import generate_synthetic_corpus

BASE_SYSTEMS = ("svm", "cnn", "rnn")
COMBINERS = ("voting", "stacking")


@dataclass(frozen=True)
class Fold:
    basetrain: tuple[str, ...]
    metatrain: tuple[str, ...]


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[Fold, ...]
    seed: int


def make_folds(corpus: AnnotatedCorpus, seed: int, n_folds: int = 5) -> FoldPlan:
    """Shuffle documents by seed and rotate 5 equal-as-possible slices: fold i
    holds out slice i as the ensemble (meta) training split."""
    ids = list(corpus.doc_ids())
    if len(ids) < n_folds:
        raise ValueError("need at least %d documents for %d folds, got %d"
                         % (n_folds, n_folds, len(ids)))
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    slices = [list(part) for part in np.array_split(np.array(shuffled, dtype=object), n_folds)]
    folds = []
    for i in range(n_folds):
        meta = tuple(slices[i])
        base = tuple(d for j, s in enumerate(slices) if j != i for d in s)
        folds.append(Fold(basetrain=base, metatrain=meta))
    return FoldPlan(folds=tuple(folds), seed=seed)


def split_test(corpus: AnnotatedCorpus, test_fraction: float, seed: int):
    """Document-level (pool, test) split used by run-all before folding."""
    ids = list(corpus.doc_ids())
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    n_test = max(1, round(test_fraction * len(ids)))
    test_ids = set(shuffled[:n_test])
    return corpus.subset(id_ for id_ in ids if id_ not in test_ids), corpus.subset(test_ids)


def evaluate(predictions, gold) -> tuple[float, float, float]:
    """Micro-averaged P/R/F over exact (docId, label, chemId, geneId) matches."""
    return micro_prf_tuples(predictions, gold)


# ---------------------------------------------------------------------------
# Fold training


@dataclass
class FoldModels:
    svm_model: svm_mod.LinearOvrModel
    cnn_model: cnn_mod.CnnModel
    rnn_model: rnn_mod.RnnModel
    forest: ens.RandomForest
    lexicon: list[str]
    label_set: LabelSet
    vote_unanimous: bool = False

    def base_outputs(self, instance: RelationInstance):
        """Scores and labels from the three base models on one instance."""
        svm_scores = self.svm_model.scores_for(instance, self.lexicon)
        cnn_probs, cnn_scores = self.cnn_model.scores_for(instance)
        rnn_scores = self.rnn_model.scores_for(instance)
        return {
            "svm_scores": svm_scores,
            "svm_label": self.label_set.label(int(np.argmax(svm_scores))),
            "cnn_scores": cnn_scores,
            "cnn_label": self.label_set.label(int(np.argmax(cnn_probs))),
            "rnn_scores": rnn_scores,
            "rnn_label": rnn_mod.rnn_predict(rnn_scores, self.label_set),
            "meta": ens.build_meta_features(svm_scores, cnn_scores, rnn_scores),
        }

    def combine(self, outputs, system: str) -> str:
        if system in ("svm", "cnn", "rnn"):
            return outputs["%s_label" % system]
        if system == "voting":
            return ens.vote(outputs["svm_label"], outputs["cnn_label"],
                            outputs["rnn_label"], unanimous=self.vote_unanimous)
        if system == "stacking":
            return self.label_set.label(ens.rf_predict(self.forest, outputs["meta"]))
        raise KeyError("unknown system %r" % system)

    def save(self, fold_dir):
        fold_dir = Path(fold_dir)
        fold_dir.mkdir(parents=True, exist_ok=True)
        svm_mod.save_svm(self.svm_model, fold_dir / "svm.json")
        cnn_mod.save_cnn(self.cnn_model, fold_dir / "cnn.npz")
        rnn_mod.save_rnn(self.rnn_model, fold_dir / "rnn.npz")
        ens.save_forest(self.forest, fold_dir / "rf.json",
                        ens.meta_feature_names(self.label_set))
        with open(fold_dir / "lexicon.txt", "w", encoding="utf-8", newline="\n") as fh:
            for entry in self.lexicon:
                fh.write(entry + "\n")

    @classmethod
    def load(cls, fold_dir, vote_unanimous: bool = False) -> "FoldModels":
        fold_dir = Path(fold_dir)
        svm_model = svm_mod.load_svm(fold_dir / "svm.json")
        label_set = svm_model.label_set
        forest = ens.load_forest(fold_dir / "rf.json", ens.meta_feature_names(label_set))
        with open(fold_dir / "lexicon.txt", "r", encoding="utf-8") as fh:
            lexicon = [line.strip() for line in fh if line.strip()]
        return cls(
            svm_model=svm_model,
            cnn_model=cnn_mod.load_cnn(fold_dir / "cnn.npz"),
            rnn_model=rnn_mod.load_rnn(fold_dir / "rnn.npz"),
            forest=forest, lexicon=lexicon, label_set=label_set,
            vote_unanimous=vote_unanimous,
        )


def _labeled_instances(corpus: AnnotatedCorpus):
    return attach_gold_labels(generate_candidates(corpus), corpus)


def train_fold(corpus: AnnotatedCorpus, plan: FoldPlan, fold_index: int,
               config: ExperimentConfig, seed: int, outdir=None) -> FoldModels:
    """Train the three base models on the fold's 80% split and the stacking
    forest on meta-features over the held-out 20%."""
    fold = plan.folds[fold_index]
    label_set = config.corpus.label_set()
    lexicon = (svm_mod.load_keyword_lexicon(config.corpus.keyword_lexicon)
               if config.corpus.keyword_lexicon else svm_mod.default_keyword_lexicon())
    fold_seed = seed + 1000 * fold_index

    base_corpus = corpus.subset(fold.basetrain)
    meta_corpus = corpus.subset(fold.metatrain)
    base_instances = _labeled_instances(base_corpus)
    meta_instances = _labeled_instances(meta_corpus)

    # inner document-level split of the 80% for neural early stopping
    rng = np.random.default_rng(fold_seed)
    base_ids = list(base_corpus.doc_ids())
    shuffled = [base_ids[i] for i in rng.permutation(len(base_ids))]
    n_dev = max(1, round(config.pipeline.dev_fraction * len(base_ids)))
    dev_ids = set(shuffled[:n_dev])
    inner_train = _labeled_instances(base_corpus.subset(
        id_ for id_ in base_ids if id_ not in dev_ids))
    inner_dev = _labeled_instances(base_corpus.subset(dev_ids))

    svm_model = svm_mod.train_svm(
        base_instances, label_set, lexicon, c=config.svm.c, tol=config.svm.tol,
        balanced=config.svm.balanced, max_epochs=config.svm.max_epochs, seed=fold_seed,
    )

    cnn_vectors = (nc.load_word_vectors(config.cnn.word_vectors)[0]
                   if config.cnn.word_vectors else None)
    cnn_tables = cnn_mod.build_cnn_tables(inner_train, config.cnn,
                                          np.random.default_rng(fold_seed + 1),
                                          pretrained=cnn_vectors)
    cnn_params, _ = cnn_mod.cnn_train(inner_train, inner_dev, cnn_tables, config.cnn,
                                      seed=fold_seed + 1, label_set=label_set)
    cnn_model = cnn_mod.CnnModel(config=config.cnn, tables=cnn_tables,
                                 params=cnn_params, label_set=label_set)

    rnn_vectors = (nc.load_word_vectors(config.rnn.word_vectors)[0]
                   if config.rnn.word_vectors else None)
    rnn_tables = rnn_mod.build_rnn_tables(inner_train, config.rnn,
                                          np.random.default_rng(fold_seed + 2),
                                          pretrained=rnn_vectors)
    rnn_params, _ = rnn_mod.rnn_train(inner_train, inner_dev, rnn_tables, config.rnn,
                                      seed=fold_seed + 2, label_set=label_set)
    rnn_model = rnn_mod.RnnModel(config=config.rnn, tables=rnn_tables,
                                 params=rnn_params, label_set=label_set)

    models = FoldModels(
        svm_model=svm_model, cnn_model=cnn_model, rnn_model=rnn_model,
        forest=_train_stacker(meta_instances, svm_model, cnn_model, rnn_model,
                              lexicon, label_set, config, fold_seed + 3),
        lexicon=lexicon, label_set=label_set,
        vote_unanimous=config.ensemble.vote_unanimous,
    )
    if outdir is not None:
        models.save(Path(outdir) / ("fold%d" % fold_index))
    return models


def _train_stacker(meta_instances, svm_model, cnn_model, rnn_model, lexicon,
                   label_set, config: ExperimentConfig, seed: int) -> ens.RandomForest:
    meta_x = np.empty((len(meta_instances), ens.META_FEATURE_COUNT), dtype=np.float64)
    meta_y = np.empty(len(meta_instances), dtype=np.int64)
    for i, inst in enumerate(meta_instances):
        svm_scores = svm_model.scores_for(inst, lexicon)
        _, cnn_scores = cnn_model.scores_for(inst)
        rnn_scores = rnn_model.scores_for(inst)
        meta_x[i] = ens.build_meta_features(svm_scores, cnn_scores, rnn_scores)
        meta_y[i] = label_set.index(inst.label)
    return ens.rf_train(meta_x, meta_y, n_classes=len(label_set),
                        tree_count=config.ensemble.tree_count, seed=seed,
                        bootstrap=config.ensemble.bootstrap)


# ---------------------------------------------------------------------------
# Prediction runs


@dataclass
class RunResult:
    run_id: int
    system: str
    fold: int
    precision: float | None
    recall: float | None
    f1: float | None
    prediction_path: str | None

    def metrics_line(self) -> str:
        if self.f1 is None:
            return "run %d fold %d %-8s (no gold annotations)" % (
                self.run_id, self.fold, self.system)
        return "run %d fold %d %-8s P=%.4f R=%.4f F=%.4f" % (
            self.run_id, self.fold, self.system, self.precision, self.recall, self.f1)


def predict_instances(models: FoldModels, instances, systems=None) -> dict[str, list[RelationInstance]]:
    """Labels for every requested system over the same base-model outputs."""
    systems = tuple(systems) if systems else BASE_SYSTEMS + COMBINERS
    labeled: dict[str, list[RelationInstance]] = {s: [] for s in systems}
    for inst in instances:
        outputs = models.base_outputs(inst)
        for system in systems:
            labeled[system].append(replace(inst, label=models.combine(outputs, system)))
    return labeled


def predict_run(test_corpus: AnnotatedCorpus, models: FoldModels, combiner: str,
                out_path=None, fold: int = 0, run_id: int = 0) -> RunResult:
    """One prediction run with one combiner; P/R/F computed when gold
    annotations are present."""
    instances = generate_candidates(test_corpus)
    labeled = predict_instances(models, instances, systems=(combiner,))[combiner]
    if out_path is not None:
        write_predictions(labeled, out_path)
    gold = gold_relation_tuples(test_corpus)
    if gold:
        p, r, f = evaluate({(i.doc_id, i.label, i.chem.id, i.gene.id)
                            for i in labeled if i.label != NEG}, gold)
    else:
        p = r = f = None
    return RunResult(run_id=run_id, system=combiner, fold=fold, precision=p,
                     recall=r, f1=f, prediction_path=str(out_path) if out_path else None)


# ---------------------------------------------------------------------------
# End-to-end run


def run_all(config: ExperimentConfig, outdir, seed: int = 1, size: int = 300,
            corpus_path=None, folds=(0,), quiet: bool = False) -> list[RunResult]:
    """Full protocol: corpus (synthetic unless a path is given), document-level
    test split, 5-fold plan over the pool, per-fold training, prediction runs
    for the base systems and both combiners, metrics, and a summary file."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.time()

    if corpus_path is not None:
        corpus = parse_corpus(corpus_path, config.corpus.label_set())
    else:
        corpus = generate_synthetic_corpus(size, seed)
    write_corpus(corpus, outdir / "corpus.jsonl")

    pool, test = split_test(corpus, config.pipeline.test_fraction, seed)
    plan = make_folds(pool, seed)

    results = []
    run_id = 0
    for fold_index in folds:
        models = train_fold(pool, plan, fold_index, config, seed, outdir=outdir)
        instances = generate_candidates(test)
        labeled = predict_instances(models, instances)
        gold = gold_relation_tuples(test)
        for system in BASE_SYSTEMS + COMBINERS:
            run_id += 1
            path = outdir / ("fold%d_%s.tsv" % (fold_index, system))
            write_predictions(labeled[system], path)
            if gold:
                p, r, f = evaluate({(i.doc_id, i.label, i.chem.id, i.gene.id)
                                    for i in labeled[system] if i.label != NEG}, gold)
            else:
                p = r = f = None
            result = RunResult(run_id=run_id, system=system, fold=fold_index,
                               precision=p, recall=r, f1=f, prediction_path=path.name)
            results.append(result)
            if not quiet:
                print(result.metrics_line())

    # no timing in the summary: identical seeds must give byte-identical files
    summary = {
        "seed": seed,
        "test_documents": len(test),
        "pool_documents": len(pool),
        "runs": [
            {
                "run": r.run_id, "system": r.system, "fold": r.fold,
                "precision": None if r.precision is None else round(r.precision, 4),
                "recall": None if r.recall is None else round(r.recall, 4),
                "f1": None if r.f1 is None else round(r.f1, 4),
                "predictions": r.prediction_path,
            }
            for r in results
        ],
    }
    with open(outdir / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not quiet:
        print("completed in %.1fs" % (time.time() - started))
    return results
