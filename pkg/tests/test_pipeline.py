from dataclasses import replace

import numpy as np
import pytest

from cprex import pipeline, svm as svm_mod
from cprex.cnn import CnnConfig, build_cnn_tables
from cprex.config import EnsembleConfig, ExperimentConfig, PipelineConfig
from cprex.corpus import (AnnotatedCorpus, Document, attach_gold_labels,
                          generate_candidates, gold_relation_tuples)
from cprex.labels import NEG
from cprex.metrics import micro_f1_labels
from cprex.pipeline import (FoldModels, evaluate, make_folds, predict_run,
                            run_all, split_test, train_fold)
from cprex.rnn import RnnConfig, build_rnn_tables
from cprex.synth import generate_synthetic_corpus


def mini_config() -> ExperimentConfig:
    """Small enough for fast pipeline tests, same code paths as desk scale."""
    return ExperimentConfig(
        cnn=CnnConfig(word_dim=8, pos_dim=4, chunk_dim=4, ne_dim=4, dep_dim=4,
                      position_dim=4, filters_per_window=4, epochs=2,
                      position_clip=10),
        rnn=RnnConfig(word_dim=8, pos_dim=4, chunk_dim=4, position_dim=4, hidden=8,
                      min_word_freq=2, epochs=2, position_clip=10),
        ensemble=EnsembleConfig(tree_count=20),
        pipeline=PipelineConfig(test_fraction=0.2, dev_fraction=0.15),
    )


# ---------------------------------------------------------------------------
# folds


def test_make_folds_partition_sizes():
    corpus = generate_synthetic_corpus(100, 1)
    plan = make_folds(corpus, seed=1)
    assert len(plan.folds) == 5
    for fold in plan.folds:
        assert len(fold.metatrain) == 20
        assert len(fold.basetrain) == 80
        assert set(fold.basetrain).isdisjoint(fold.metatrain)
        assert set(fold.basetrain) | set(fold.metatrain) == set(corpus.doc_ids())


def test_make_folds_metatrain_slices_partition_corpus():
    corpus = generate_synthetic_corpus(53, 2)
    plan = make_folds(corpus, seed=3)
    slices = [set(f.metatrain) for f in plan.folds]
    for i in range(5):
        for j in range(i + 1, 5):
            assert slices[i].isdisjoint(slices[j])
    assert set().union(*slices) == set(corpus.doc_ids())


def test_make_folds_deterministic():
    corpus = generate_synthetic_corpus(40, 5)
    assert make_folds(corpus, seed=7) == make_folds(corpus, seed=7)
    assert make_folds(corpus, seed=7) != make_folds(corpus, seed=8)


def test_make_folds_requires_five_documents():
    corpus = generate_synthetic_corpus(4, 1)
    with pytest.raises(ValueError, match="at least 5"):
        make_folds(corpus, seed=1)


def test_split_test_is_document_partition():
    corpus = generate_synthetic_corpus(30, 1)
    pool, test = split_test(corpus, 0.2, seed=1)
    assert len(test) == 6
    assert len(pool) == 24
    assert set(pool.doc_ids()).isdisjoint(test.doc_ids())
    assert set(pool.doc_ids()) | set(test.doc_ids()) == set(corpus.doc_ids())


# ---------------------------------------------------------------------------
# scorer


def test_evaluate_hand_computed_micro_example():
    gold = {("d", "CPR:4", "c%d" % i, "g") for i in range(7)}
    shared = sorted(gold)[:3]
    predictions = set(shared) | {("d", "CPR:3", "x%d" % i, "g") for i in range(2)}
    p, r, f = evaluate(predictions, gold)
    assert round(p, 4) == 0.6
    assert round(r, 4) == 0.4286
    assert round(f, 4) == 0.5


def test_evaluate_perfect_and_empty_conventions():
    gold = {("d", "CPR:4", "c", "g")}
    assert evaluate(gold, gold) == (1.0, 1.0, 1.0)
    assert evaluate(set(), gold) == (0.0, 0.0, 0.0)


def test_evaluate_set_semantics():
    gold = [("d", "CPR:4", "c", "g"), ("d", "CPR:4", "c", "g")]
    predictions = [("d", "CPR:4", "c", "g")]
    assert evaluate(predictions, gold) == (1.0, 1.0, 1.0)


def test_micro_f1_labels_ignores_negatives():
    gold = ["CPR:3", NEG, "CPR:4", NEG]
    assert micro_f1_labels(gold, gold) == 1.0
    assert micro_f1_labels([NEG] * 4, gold) == 0.0
    # one hit, one false positive, one miss
    predicted = ["CPR:3", "CPR:4", NEG, NEG]
    assert abs(micro_f1_labels(predicted, gold) - 0.5) < 1e-12


# ---------------------------------------------------------------------------
# vocabulary leak guard


def _inject_unique_token(corpus: AnnotatedCorpus, doc_id: str) -> AnnotatedCorpus:
    documents = []
    for doc in corpus.documents:
        if doc.doc_id != doc_id:
            documents.append(doc)
            continue
        first_sentence = tuple(
            replace(tok, surface="zzzleaked", lemma="zzzleaked") if ti == 0 else tok
            for ti, tok in enumerate(doc.sentences[0])
        )
        documents.append(Document(
            doc_id=doc.doc_id, sentences=(first_sentence,) + doc.sentences[1:],
            mentions=doc.mentions, relations=doc.relations,
        ))
    return AnnotatedCorpus(tuple(documents))


def test_basetrain_vocabularies_immune_to_metatrain_edits():
    corpus = generate_synthetic_corpus(25, 6)
    plan = make_folds(corpus, seed=2)
    fold = plan.folds[0]
    poisoned = _inject_unique_token(corpus, fold.metatrain[0])
    config = mini_config()

    def fit_vocabs(source):
        base = attach_gold_labels(
            generate_candidates(source.subset(fold.basetrain)), source.subset(fold.basetrain))
        features = [svm_mod.extract_features(inst) for inst in base]
        svm_vocab = svm_mod.FeatureVocabulary.fit(features)
        cnn_tables = build_cnn_tables(base, config.cnn, np.random.default_rng(0))
        rnn_tables = build_rnn_tables(base, config.rnn, np.random.default_rng(0))
        return svm_vocab.index, cnn_tables["word"].symbols, rnn_tables["word"].symbols

    assert fit_vocabs(corpus) == fit_vocabs(poisoned)
    # sanity: the poisoned token does exist in the metatrain split
    meta_doc = [d for d in poisoned.documents if d.doc_id == fold.metatrain[0]][0]
    assert meta_doc.sentences[0][0].surface == "zzzleaked"


# ---------------------------------------------------------------------------
# fold training and prediction


@pytest.fixture(scope="module")
def trained_fold(tmp_path_factory):
    corpus = generate_synthetic_corpus(60, 3)
    plan = make_folds(corpus, seed=3)
    outdir = tmp_path_factory.mktemp("models")
    config = mini_config()
    models = train_fold(corpus, plan, 0, config, seed=3, outdir=outdir)
    return corpus, plan, config, models, outdir


def test_train_fold_writes_four_model_files(trained_fold):
    _, _, _, _, outdir = trained_fold
    fold_dir = outdir / "fold0"
    for name in ("svm.json", "cnn.npz", "rnn.npz", "rf.json"):
        assert (fold_dir / name).exists(), name


def test_stacker_consumes_width_17_meta_features(trained_fold):
    _, _, _, models, _ = trained_fold
    assert models.forest.n_features == 17


def test_fold_models_round_trip(trained_fold):
    corpus, _, _, models, outdir = trained_fold
    loaded = FoldModels.load(outdir / "fold0")
    instances = generate_candidates(corpus)[:8]
    for inst in instances:
        fresh = models.base_outputs(inst)
        reloaded = loaded.base_outputs(inst)
        assert np.allclose(fresh["meta"], reloaded["meta"])
        for system in ("svm", "cnn", "rnn", "voting", "stacking"):
            assert models.combine(fresh, system) == loaded.combine(reloaded, system)


def test_retraining_same_seed_gives_identical_artifacts(trained_fold, tmp_path):
    corpus, plan, config, models, outdir = trained_fold
    again = train_fold(corpus, plan, 0, config, seed=3, outdir=tmp_path)
    assert (outdir / "fold0" / "svm.json").read_bytes() == \
        (tmp_path / "fold0" / "svm.json").read_bytes()
    assert (outdir / "fold0" / "rf.json").read_bytes() == \
        (tmp_path / "fold0" / "rf.json").read_bytes()
    for key in models.cnn_model.params:
        assert np.array_equal(models.cnn_model.params[key], again.cnn_model.params[key])
    for key in models.rnn_model.params:
        assert np.array_equal(models.rnn_model.params[key], again.rnn_model.params[key])


def test_predict_run_voting_unanimity_case(trained_fold, tmp_path):
    corpus, _, _, models, _ = trained_fold
    test_docs = corpus.subset(corpus.doc_ids()[:5])
    result = predict_run(test_docs, models, "voting", out_path=tmp_path / "p.tsv",
                         fold=0, run_id=1)
    assert result.system == "voting"
    assert (tmp_path / "p.tsv").exists()
    # wherever all three bases agree, voting emits exactly that label
    for inst in generate_candidates(test_docs):
        outputs = models.base_outputs(inst)
        if outputs["svm_label"] == outputs["cnn_label"] == outputs["rnn_label"]:
            assert models.combine(outputs, "voting") == outputs["svm_label"]


def test_predict_run_without_gold_omits_metrics(trained_fold, tmp_path):
    corpus, _, _, models, _ = trained_fold
    bare_docs = []
    for doc in corpus.documents[:4]:
        bare_docs.append(Document(doc_id=doc.doc_id, sentences=doc.sentences,
                                  mentions=doc.mentions, relations=()))
    bare = AnnotatedCorpus(tuple(bare_docs))
    result = predict_run(bare, models, "stacking", out_path=tmp_path / "p.tsv")
    assert result.precision is None and result.f1 is None
    assert (tmp_path / "p.tsv").exists()


def test_stacking_uses_score_features_not_labels(trained_fold):
    _, _, _, models, _ = trained_fold
    instance = generate_candidates(generate_synthetic_corpus(5, 8))[0]
    outputs = models.base_outputs(instance)
    from cprex.ensemble import rf_predict
    expected = models.label_set.label(rf_predict(models.forest, outputs["meta"]))
    assert models.combine(outputs, "stacking") == expected


def test_train_fold_accepts_pretrained_word_vectors(tmp_path):
    vec_path = tmp_path / "vectors.txt"
    dim = 8
    words = ["inhibits", "substrate", "agonism", "the"]
    with open(vec_path, "w") as fh:
        for i, word in enumerate(words):
            fh.write(word + " " + " ".join(str(0.1 * (i + j)) for j in range(dim)) + "\n")
    corpus = generate_synthetic_corpus(12, 4)
    plan = make_folds(corpus, seed=4)
    config = mini_config()
    config.cnn.word_vectors = str(vec_path)
    config.rnn.word_vectors = str(vec_path)
    models = train_fold(corpus, plan, 0, config, seed=4)
    assert models.forest.n_features == 17  # trained end to end without error


def test_run_all_mini(tmp_path):
    config = mini_config()
    results = run_all(config, tmp_path / "run", seed=5, size=25, folds=(0,), quiet=True)
    systems = [r.system for r in results]
    assert systems == ["svm", "cnn", "rnn", "voting", "stacking"]
    assert (tmp_path / "run" / "summary.json").exists()
    assert (tmp_path / "run" / "corpus.jsonl").exists()
    for r in results:
        assert r.f1 is not None
        assert (tmp_path / "run" / r.prediction_path).exists()
