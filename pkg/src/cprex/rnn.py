"""Bi-LSTM ranking model over sentences.

Preprocessing collapses the pair's chemical mention to a single CHEMICAL token
and the gene mention to a single PROTEIN token, and replaces words rarer than
the training-frequency threshold with an UNK token. The model concatenates
word, POS, chunk, and two position embeddings, runs a Bi-LSTM, max-over-time
pools the per-word states, and applies a linear output layer with 5 raw scores
(the negative class has no output). Training uses the pairwise ranking loss;
at prediction time all-negative scores mean NEG, otherwise the highest score
wins (score exactly 0 counts as non-negative, ties go to the lowest index).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, asdict, field

import numpy as np

from . import depgraph, neuralcore as nc
from .corpus import RelationInstance
from .labels import NEG, DEFAULT_LABELS, LabelSet
from .metrics import micro_f1_labels

UNK = "<UNK>"
CHEMICAL_TOKEN = "CHEMICAL"
PROTEIN_TOKEN = "PROTEIN"


@dataclass
class RnnConfig:
    word_dim: int = 300
    pos_dim: int = 32
    chunk_dim: int = 32
    position_dim: int = 32
    hidden: int = 2048
    recurrent_dropout: float = 0.2
    output_dropout: float = 0.2
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 32
    min_word_freq: int = 5
    epochs: int = 15
    position_clip: int = 30
    grad_clip: float = 5.0
    ranking_gamma: float = 2.0
    ranking_margin_pos: float = 2.5
    ranking_margin_neg: float = 0.5
    word_vectors: str | None = None  # pretrained embedding file, optional
    dtype: str = "float64"

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    @property
    def embedding_dim(self) -> int:
        return self.word_dim + self.pos_dim + self.chunk_dim + 2 * self.position_dim

    @property
    def position_rows(self) -> int:
        return 2 * self.position_clip + 1


# ---------------------------------------------------------------------------
# Preprocessing


@dataclass
class RnnSequence:
    words: list[str]
    pos: list[str]
    chunk: list[str]
    chem_index: int
    gene_index: int


def substitute_rare_words(words, known_words) -> list[str]:
    return [w if w in known_words else UNK for w in words]


def preprocess_sequence(words, pos, chunk, chem_span, gene_span,
                        chem_head: int, gene_head: int, known_words) -> RnnSequence:
    """Collapse both mention spans to single CHEMICAL / PROTEIN tokens (taking
    the head token's POS and chunk tags) and UNK-substitute rare words.
    Idempotent: reapplying to its own output is the identity."""
    spans = sorted([
        (chem_span[0], chem_span[1], chem_head, CHEMICAL_TOKEN),
        (gene_span[0], gene_span[1], gene_head, PROTEIN_TOKEN),
    ])
    out_words, out_pos, out_chunk = [], [], []
    positions = {}
    i = 0
    while i < len(words):
        for first, last, head, replacement in spans:
            if i == first:
                positions[replacement] = len(out_words)
                out_words.append(replacement)
                out_pos.append(pos[head])
                out_chunk.append(chunk[head])
                i = last + 1
                break
        else:
            out_words.append(words[i])
            out_pos.append(pos[i])
            out_chunk.append(chunk[i])
            i += 1
    # the substitution tokens themselves are never UNK'd
    known_words = set(known_words) | {UNK, CHEMICAL_TOKEN, PROTEIN_TOKEN}
    return RnnSequence(
        words=substitute_rare_words(out_words, known_words),
        pos=out_pos, chunk=out_chunk,
        chem_index=positions[CHEMICAL_TOKEN], gene_index=positions[PROTEIN_TOKEN],
    )


def rnn_preprocess(instance: RelationInstance, known_words) -> RnnSequence:
    sentence = instance.sentence
    return preprocess_sequence(
        [tok.surface.lower() for tok in sentence],
        [tok.pos for tok in sentence],
        [tok.chunk for tok in sentence],
        instance.chem.span(), instance.gene.span(),
        depgraph.mention_head_token(sentence, instance.chem),
        depgraph.mention_head_token(sentence, instance.gene),
        known_words,
    )


def build_rnn_tables(instances, config: RnnConfig, rng: np.random.Generator,
                     pretrained: dict[str, np.ndarray] | None = None) -> dict[str, nc.EmbeddingTable]:
    """Word/POS/chunk tables from the training split. Words below the frequency
    threshold fall out of the vocabulary (they hit the UNK row at lookup)."""
    counts: Counter = Counter()
    pos_tags, chunk_tags = set(), set()
    seen_sentences = set()
    for inst in instances:
        key = (inst.doc_id, inst.sentence_index)
        if key in seen_sentences:
            continue
        seen_sentences.add(key)
        for tok in inst.sentence:
            counts[tok.surface.lower()] += 1
            pos_tags.add(tok.pos)
            chunk_tags.add(tok.chunk)

    kept = sorted(w for w, c in counts.items() if c >= config.min_word_freq)
    word_symbols = [UNK, CHEMICAL_TOKEN, PROTEIN_TOKEN] + [
        w for w in kept if w not in (UNK, CHEMICAL_TOKEN, PROTEIN_TOKEN)
    ]
    tables = {
        "word": nc.EmbeddingTable(word_symbols, config.word_dim, rng, unk=UNK,
                                  dtype=config.np_dtype),
        "pos": nc.EmbeddingTable([UNK] + sorted(pos_tags), config.pos_dim, rng, unk=UNK,
                                 dtype=config.np_dtype),
        "chunk": nc.EmbeddingTable([UNK] + sorted(chunk_tags), config.chunk_dim, rng, unk=UNK,
                                   dtype=config.np_dtype),
    }
    if pretrained:
        tables["word"].load_pretrained(pretrained)
    return tables


@dataclass
class RnnEncoding:
    word: np.ndarray
    pos: np.ndarray
    chunk: np.ndarray
    pos_chem: np.ndarray
    pos_gene: np.ndarray


def encode_rnn_instance(instance: RelationInstance, tables, config: RnnConfig) -> RnnEncoding:
    seq = rnn_preprocess(instance, tables["word"].vocab)
    n = len(seq.words)
    clip = config.position_clip

    def offsets(anchor: int) -> np.ndarray:
        raw = np.arange(n) - anchor
        return np.clip(raw, -clip, clip) + clip

    return RnnEncoding(
        word=tables["word"].indices(seq.words),
        pos=tables["pos"].indices(seq.pos),
        chunk=tables["chunk"].indices(seq.chunk),
        pos_chem=offsets(seq.chem_index),
        pos_gene=offsets(seq.gene_index),
    )


# ---------------------------------------------------------------------------
# Model


def init_rnn_params(tables, config: RnnConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    dtype = config.np_dtype
    params = {
        "emb_word": tables["word"].matrix,
        "emb_pos": tables["pos"].matrix,
        "emb_chunk": tables["chunk"].matrix,
        "emb_pchem": nc.embedding_init(rng, config.position_rows, config.position_dim, dtype),
        "emb_pgene": nc.embedding_init(rng, config.position_rows, config.position_dim, dtype),
    }
    for direction in ("f", "b"):
        lstm = nc.lstm_param_init(rng, config.embedding_dim, config.hidden, dtype)
        for k, v in lstm.items():
            params["lstm_%s_%s" % (direction, k)] = v
    params["out_w"] = nc.glorot_uniform(rng, (2 * config.hidden, 5), dtype)
    params["out_b"] = np.zeros(5, dtype=dtype)
    return params


def _lstm_view(params, direction):
    return {k: params["lstm_%s_%s" % (direction, k)] for k in ("wx", "wh", "b")}


def rnn_forward(enc: RnnEncoding, params, config: RnnConfig,
                train: bool = False, rng: np.random.Generator | None = None):
    """Returns (scores: 5 raw class scores, cache)."""
    if len(enc.word) == 0:
        raise ValueError("empty sequence")
    xs = np.concatenate([
        params["emb_word"][enc.word],
        params["emb_pos"][enc.pos],
        params["emb_chunk"][enc.chunk],
        params["emb_pchem"][enc.pos_chem],
        params["emb_pgene"][enc.pos_gene],
    ], axis=1)
    mask_f = mask_b = None
    if train and config.recurrent_dropout > 0.0:
        # one mask per sequence and direction, reused across time steps
        mask_f = nc.make_dropout_mask(rng, (config.hidden,), config.recurrent_dropout)
        mask_b = nc.make_dropout_mask(rng, (config.hidden,), config.recurrent_dropout)
    pf, pb = _lstm_view(params, "f"), _lstm_view(params, "b")
    hs, bicache = nc.bilstm_forward(xs, pf, pb, mask_f, mask_b)
    pooled, pool_cache = nc.max_over_time_forward(hs)
    dropped, drop_mask = nc.dropout_forward(pooled, config.output_dropout, rng, train)
    scores, dense_cache = nc.dense_forward(dropped, params["out_w"], params["out_b"])
    cache = (enc, bicache, pool_cache, drop_mask, dense_cache, hs.shape)
    return scores, cache


def rnn_backward(dscores: np.ndarray, cache, params, config: RnnConfig) -> dict[str, np.ndarray]:
    enc, bicache, pool_cache, drop_mask, dense_cache, _ = cache
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dpooled, grads["out_w"], grads["out_b"] = nc.dense_backward(dscores, dense_cache)
    dpooled = nc.dropout_backward(dpooled, drop_mask)
    dhs = nc.max_over_time_backward(dpooled, pool_cache)
    pf, pb = _lstm_view(params, "f"), _lstm_view(params, "b")
    dxs, gf, gb = nc.bilstm_backward(dhs, bicache, pf, pb)
    for k in ("wx", "wh", "b"):
        grads["lstm_f_%s" % k] = gf[k]
        grads["lstm_b_%s" % k] = gb[k]
    splits = np.cumsum([config.word_dim, config.pos_dim, config.chunk_dim,
                        config.position_dim, config.position_dim])[:-1]
    parts = np.split(dxs, splits, axis=1)
    for key, idx, dcol in zip(
        ("emb_word", "emb_pos", "emb_chunk", "emb_pchem", "emb_pgene"),
        (enc.word, enc.pos, enc.chunk, enc.pos_chem, enc.pos_gene),
        parts,
    ):
        np.add.at(grads[key], idx, dcol)
    return grads


def rnn_predict(scores, label_set: LabelSet = DEFAULT_LABELS) -> str:
    """All scores strictly negative -> NEG; otherwise the best positive class.
    A score of exactly 0 counts as non-negative. Ties go to the lowest index."""
    scores = np.asarray(scores)
    if float(scores.max()) < 0.0:
        return NEG
    return label_set.positives[int(np.argmax(scores))]


# ---------------------------------------------------------------------------
# Training


def rnn_train(train_instances, dev_instances, tables, config: RnnConfig, seed: int,
              label_set: LabelSet = DEFAULT_LABELS):
    """Minibatch Adam on the pairwise ranking loss with global-norm gradient
    clipping; keeps the epoch with the best dev micro-F1."""
    if not train_instances:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    params = init_rnn_params(tables, config, rng)
    adam = nc.Adam(lr=config.learning_rate, beta1=config.beta1, beta2=config.beta2)

    train_enc = [encode_rnn_instance(inst, tables, config) for inst in train_instances]
    # ranking-loss gold: positive-class index, or None for NEG
    train_gold = [
        None if inst.label == NEG else label_set.index(inst.label) - 1
        for inst in train_instances
    ]
    dev_enc = [encode_rnn_instance(inst, tables, config) for inst in dev_instances]
    dev_gold = [inst.label for inst in dev_instances]

    best_f1 = -1.0
    best_params = {k: v.copy() for k, v in params.items()}
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_enc))
        total_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            for i in batch:
                scores, cache = rnn_forward(train_enc[i], params, config, train=True, rng=rng)
                loss, dscores = nc.ranking_loss(
                    scores, train_gold[i], config.ranking_gamma,
                    config.ranking_margin_pos, config.ranking_margin_neg,
                )
                total_loss += loss
                g = rnn_backward(dscores / len(batch), cache, params, config)
                for k in grads:
                    grads[k] += g[k]
            nc.clip_global_norm(grads, config.grad_clip)
            adam.step(params, grads)

        dev_pred = []
        for e in dev_enc:
            scores, _ = rnn_forward(e, params, config, train=False)
            dev_pred.append(rnn_predict(scores, label_set))
        dev_f1 = micro_f1_labels(dev_pred, dev_gold) if dev_enc else 0.0
        history.append({"epoch": epoch, "train_loss": total_loss / len(train_enc),
                        "dev_f1": dev_f1})
        if dev_f1 > best_f1:
            best_f1 = dev_f1
            best_params = {k: v.copy() for k, v in params.items()}

    if not dev_enc:
        best_params = {k: v.copy() for k, v in params.items()}
    for k in params:
        np.copyto(params[k], best_params[k])
    return params, history


# ---------------------------------------------------------------------------
# Checkpointing

FORMAT = "cprex-rnn/1"


@dataclass
class RnnModel:
    config: RnnConfig
    tables: dict[str, nc.EmbeddingTable] = field(repr=False)
    params: dict[str, np.ndarray] = field(repr=False)
    label_set: LabelSet = DEFAULT_LABELS

    def scores_for(self, instance: RelationInstance) -> np.ndarray:
        enc = encode_rnn_instance(instance, self.tables, self.config)
        scores, _ = rnn_forward(enc, self.params, self.config, train=False)
        return scores

    def predict(self, instance: RelationInstance) -> str:
        return rnn_predict(self.scores_for(instance), self.label_set)


def save_rnn(model: RnnModel, path):
    meta = {
        "format": FORMAT,
        "config": asdict(model.config),
        "labels": list(model.label_set.labels),
        "symbols": {name: list(t.symbols) for name, t in model.tables.items()},
    }
    np.savez(path, __meta__=np.array(json.dumps(meta, sort_keys=True)), **model.params)


def load_rnn(path) -> RnnModel:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["__meta__"]))
    if meta.get("format") != FORMAT:
        raise ValueError("unsupported RNN checkpoint format %r" % meta.get("format"))
    config = RnnConfig(**meta["config"])
    params = {k: data[k] for k in data.files if k != "__meta__"}
    rng = np.random.default_rng(0)
    tables = {}
    for name, symbols in meta["symbols"].items():
        table = nc.EmbeddingTable(symbols, 1, rng, unk=UNK, dtype=config.np_dtype)
        table.matrix = params["emb_%s" % name]
        tables[name] = table
    return RnnModel(config=config, tables=tables, params=params,
                    label_set=LabelSet(tuple(meta["labels"][1:])))
