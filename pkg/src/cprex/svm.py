"""Rich string features and a one-vs-rest linear SVM trained by dual coordinate
descent.

Feature namespaces:

    WIN    lemma/POS/chunk of the 5 tokens on each side of each mention,
           conjoined with mention role, side, and offset
    BOW    lemma + region (before/middle/after) for every sentence token
           outside the mention spans
    DIST   bucketed token count between the mention spans
    KEY    keyword-lexicon entries whose lemma occurs between the mentions
    VWALK  word-dep-word fragments of the shortest dependency path (lemmas)
    EWALK  dep-word-dep fragments of the shortest dependency path (lemmas)

The solver is dual coordinate descent for the L2-regularized L1-hinge SVM with
a bias term folded in as a constant augmented feature. Per-example costs are
scaled by N / (K * n_c) when class balancing is on.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import depgraph
from .corpus import RelationInstance
from .labels import DEFAULT_LABELS, LabelSet

WINDOW_SIZE = 5

NAMESPACES = ("WIN", "BOW", "DIST", "KEY", "VWALK", "EWALK")

FeatureSet = Counter


def feature_namespace(feature: str) -> str:
    for stop in (":", "="):
        pos = feature.find(stop)
        if pos > 0:
            return feature[:pos]
    return feature


def distance_bucket(gap: int) -> str:
    if gap <= 5:
        return str(gap)
    if gap <= 10:
        return "6-10"
    if gap <= 15:
        return "11-15"
    return "16+"


def load_keyword_lexicon(path) -> list[str]:
    """One entry per line, `lemma` or `lemma->hint`; '#' starts a comment."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                entries.append(line)
    return entries


def default_keyword_lexicon() -> list[str]:
    text = resources.files("cprex").joinpath("data/keywords.txt").read_text("utf-8")
    entries = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            entries.append(line)
    return entries


def extract_features(instance: RelationInstance, lexicon=()) -> FeatureSet:
    """Pure function instance -> multiset of namespaced string features."""
    sentence = instance.sentence
    chem, gene = instance.chem, instance.gene
    features: Counter = Counter()

    # WIN: 5 tokens to the left and right of each mention, truncated at the
    # sentence boundary
    for role, mention in (("CHEM", chem), ("GENE", gene)):
        for offset in range(1, WINDOW_SIZE + 1):
            left = mention.first_token - offset
            if left >= 0:
                tok = sentence[left]
                features["WIN:%s:L%d:LEMMA=%s" % (role, offset, tok.lemma)] += 1
                features["WIN:%s:L%d:POS=%s" % (role, offset, tok.pos)] += 1
                features["WIN:%s:L%d:CHUNK=%s" % (role, offset, tok.chunk)] += 1
            right = mention.last_token + offset
            if right < len(sentence):
                tok = sentence[right]
                features["WIN:%s:R%d:LEMMA=%s" % (role, offset, tok.lemma)] += 1
                features["WIN:%s:R%d:POS=%s" % (role, offset, tok.pos)] += 1
                features["WIN:%s:R%d:CHUNK=%s" % (role, offset, tok.chunk)] += 1

    # BOW with region tags; the two spans split the sentence into before,
    # middle, after, and mention-internal tokens are skipped
    first_m, second_m = sorted((chem, gene), key=lambda m: (m.first_token, m.last_token))
    middle_lemmas = set()
    for i, tok in enumerate(sentence):
        if chem.covers(i) or gene.covers(i):
            continue
        if i < first_m.first_token:
            region = "before"
        elif i > second_m.last_token:
            region = "after"
        else:
            region = "middle"
            middle_lemmas.add(tok.lemma)
        features["BOW:%s=%s" % (region, tok.lemma)] += 1

    gap = max(0, second_m.first_token - first_m.last_token - 1)
    features["DIST=%s" % distance_bucket(gap)] += 1

    for entry in lexicon:
        lemma = entry.split("->", 1)[0].strip()
        if lemma in middle_lemmas:
            features["KEY=%s" % entry] += 1

    # shortest-path walks over lemmas; a disconnected pair contributes nothing
    graph = depgraph.build_graph(sentence)
    path = depgraph.shortest_path(
        graph,
        depgraph.mention_head_token(sentence, chem),
        depgraph.mention_head_token(sentence, gene),
    )
    if path is not None:
        lemmas = [tok.lemma for tok in sentence]
        for walk in depgraph.v_walks(path, lemmas):
            features["VWALK=%s" % walk] += 1
        for walk in depgraph.e_walks(path, lemmas):
            features["EWALK=%s" % walk] += 1

    return features


# ---------------------------------------------------------------------------
# Vectorization


class FeatureVocabulary:
    """Frozen feature -> column mapping fitted on training data only."""

    def __init__(self, features):
        self.index: dict[str, int] = {f: i for i, f in enumerate(sorted(set(features)))}

    @classmethod
    def fit(cls, feature_sets) -> "FeatureVocabulary":
        seen = set()
        for fs in feature_sets:
            seen.update(fs)
        return cls(seen)

    def __len__(self) -> int:
        return len(self.index)

    def vectorize(self, features: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
        """Sparse (column indices, counts); unseen features are dropped."""
        pairs = sorted(
            (self.index[f], float(c)) for f, c in features.items() if f in self.index
        )
        if not pairs:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
        idx, val = zip(*pairs)
        return np.array(idx, dtype=np.int64), np.array(val, dtype=np.float64)


class SparseRows:
    """Row-major sparse matrix (CSR layout) for the dual solver."""

    def __init__(self, rows: list[tuple[np.ndarray, np.ndarray]], n_cols: int):
        self.n_cols = n_cols
        self.indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        for i, (idx, _) in enumerate(rows):
            self.indptr[i + 1] = self.indptr[i] + len(idx)
        total = int(self.indptr[-1])
        self.indices = np.empty(total, dtype=np.int64)
        self.data = np.empty(total, dtype=np.float64)
        for i, (idx, val) in enumerate(rows):
            self.indices[self.indptr[i]:self.indptr[i + 1]] = idx
            self.data[self.indptr[i]:self.indptr[i + 1]] = val

    @classmethod
    def from_features(cls, feature_sets, vocab: FeatureVocabulary) -> "SparseRows":
        return cls([vocab.vectorize(fs) for fs in feature_sets], len(vocab))

    def __len__(self) -> int:
        return len(self.indptr) - 1

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.indptr[i], self.indptr[i + 1]
        return self.indices[s:e], self.data[s:e]

    def squared_norms(self) -> np.ndarray:
        out = np.empty(len(self), dtype=np.float64)
        for i in range(len(self)):
            _, val = self.row(i)
            out[i] = float(val @ val)
        return out


# ---------------------------------------------------------------------------
# Training


def balanced_class_weights(labels, label_set: LabelSet, balanced: bool = True) -> dict[str, float]:
    """weight(c) = N / (K * n_c) over the classes present in `labels`."""
    counts = Counter(labels)
    if not balanced:
        return {c: 1.0 for c in counts}
    n = len(labels)
    k = len(counts)
    return {c: n / (k * counts[c]) for c in counts}


@dataclass
class LinearOvrModel:
    label_set: LabelSet
    vocabulary: FeatureVocabulary
    weights: np.ndarray  # (n_classes, vocab_size)
    biases: np.ndarray   # (n_classes,)
    dual_objective_history: list[list[float]] = field(default_factory=list, repr=False)

    def decision_scores(self, vector: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        idx, val = vector
        if len(idx) and int(idx.max()) >= self.weights.shape[1]:
            raise ValueError("feature index %d outside vocabulary of size %d"
                             % (int(idx.max()), self.weights.shape[1]))
        return self.weights[:, idx] @ val + self.biases

    def scores_for(self, instance: RelationInstance, lexicon=()) -> np.ndarray:
        return self.decision_scores(self.vocabulary.vectorize(extract_features(instance, lexicon)))

    def predict_index(self, vector) -> int:
        return int(np.argmax(self.decision_scores(vector)))

    def predict(self, instance: RelationInstance, lexicon=()) -> str:
        return self.label_set.label(int(np.argmax(self.scores_for(instance, lexicon))))


def _dual_cd_binary(x: SparseRows, y: np.ndarray, costs: np.ndarray, sq_norms: np.ndarray,
                    tol: float, max_epochs: int, rng: np.random.Generator):
    """Dual coordinate descent for min_a 0.5 a'Qa - e'a, 0 <= a_i <= cost_i,
    Q_ij = y_i y_j x_i.x_j (with the bias column folded in). Stops when the
    projected-gradient range over an epoch falls below tol.

    Returns (w, dual objective after each epoch)."""
    n = len(x)
    w = np.zeros(x.n_cols + 1, dtype=np.float64)  # last entry is the bias
    alpha = np.zeros(n, dtype=np.float64)
    qii = sq_norms + 1.0  # +1 for the augmented bias feature
    history = []
    for _ in range(max_epochs):
        pg_max = -np.inf
        pg_min = np.inf
        for i in rng.permutation(n):
            idx, val = x.row(i)
            g = y[i] * (w[idx] @ val + w[-1]) - 1.0
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= costs[i]:
                pg = max(g, 0.0)
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0:
                new_alpha = min(max(alpha[i] - g / qii[i], 0.0), costs[i])
                delta = (new_alpha - alpha[i]) * y[i]
                if delta != 0.0:
                    w[idx] += delta * val
                    w[-1] += delta
                    alpha[i] = new_alpha
        history.append(float(alpha.sum() - 0.5 * (w @ w)))
        if pg_max - pg_min < tol:
            break
    return w, history


def train_ovr(x: SparseRows, labels, label_set: LabelSet = DEFAULT_LABELS,
              c: float = 1.0, tol: float = 1e-3, balanced: bool = True,
              max_epochs: int = 1000, seed: int = 0,
              vocabulary: FeatureVocabulary | None = None) -> LinearOvrModel:
    """One binary L1-hinge classifier per label, in the fixed label order."""
    labels = list(labels)
    present = set(labels)
    if len(present) < 2:
        raise ValueError("training needs at least 2 classes, got %r" % sorted(present))
    weights_by_class = balanced_class_weights(labels, label_set, balanced)
    costs = np.array([c * weights_by_class[lab] for lab in labels], dtype=np.float64)
    sq_norms = x.squared_norms()

    w_all = np.zeros((len(label_set), x.n_cols), dtype=np.float64)
    b_all = np.zeros(len(label_set), dtype=np.float64)
    histories = []
    for ci, target in enumerate(label_set):
        if target not in present:
            warnings.warn("class %s absent from training data; its classifier is "
                          "trained as all-negative" % target)
        y = np.array([1.0 if lab == target else -1.0 for lab in labels])
        rng = np.random.default_rng(seed + ci)
        w, history = _dual_cd_binary(x, y, costs, sq_norms, tol, max_epochs, rng)
        w_all[ci] = w[:-1]
        b_all[ci] = w[-1]
        histories.append(history)

    return LinearOvrModel(
        label_set=label_set,
        vocabulary=vocabulary if vocabulary is not None else FeatureVocabulary(()),
        weights=w_all, biases=b_all, dual_objective_history=histories,
    )


def train_svm(instances: list[RelationInstance], label_set: LabelSet = DEFAULT_LABELS,
              lexicon=(), c: float = 1.0, tol: float = 1e-3, balanced: bool = True,
              max_epochs: int = 1000, seed: int = 0) -> LinearOvrModel:
    """Extract features, fit the vocabulary, and train, all on one split."""
    feature_sets = [extract_features(inst, lexicon) for inst in instances]
    vocab = FeatureVocabulary.fit(feature_sets)
    x = SparseRows.from_features(feature_sets, vocab)
    return train_ovr(x, [inst.label for inst in instances], label_set,
                     c=c, tol=tol, balanced=balanced, max_epochs=max_epochs,
                     seed=seed, vocabulary=vocab)


# ---------------------------------------------------------------------------
# Serialization

FORMAT = "cprex-svm/1"


def save_svm(model: LinearOvrModel, path):
    vocab_entries = [None] * len(model.vocabulary)
    for feat, i in model.vocabulary.index.items():
        vocab_entries[i] = feat
    payload = {
        "format": FORMAT,
        "labels": list(model.label_set.labels),
        "vocabulary": vocab_entries,
        "biases": [float(b) for b in model.biases],
        "weights": [
            [[int(j), float(model.weights[ci, j])] for j in np.nonzero(model.weights[ci])[0]]
            for ci in range(model.weights.shape[0])
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, ensure_ascii=False, sort_keys=True)
        fh.write("\n")


def load_svm(path) -> LinearOvrModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != FORMAT:
        raise ValueError("unsupported SVM model format %r" % payload.get("format"))
    label_set = LabelSet(tuple(payload["labels"][1:]))
    vocab = FeatureVocabulary(())
    vocab.index = {feat: i for i, feat in enumerate(payload["vocabulary"])}
    n_classes = len(label_set)
    weights = np.zeros((n_classes, len(vocab)), dtype=np.float64)
    for ci, pairs in enumerate(payload["weights"]):
        for j, wv in pairs:
            weights[ci, j] = wv
    return LinearOvrModel(
        label_set=label_set, vocabulary=vocab, weights=weights,
        biases=np.array(payload["biases"], dtype=np.float64),
    )
