"""Dual-input CNN: full sentence sequence plus shortest-path sequence, each run
through convolutions with windows 3 and 5, ReLU, and 1-max pooling; the pooled
features are concatenated and classified by a fully connected softmax layer
over the 6 classes. Pre-softmax scores are kept for the stacking ensemble.

Each token is the concatenation of word, POS, chunk, NE, dependency-label, and
two position embeddings (offsets to the chemical and to the gene mention).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field

import numpy as np

from . import depgraph, neuralcore as nc
from .corpus import RelationInstance
from .labels import DEFAULT_LABELS, LabelSet
from .metrics import micro_f1_labels

PAD = "<PAD>"
UNK = "<UNK>"


@dataclass
class CnnConfig:
    word_dim: int = 300
    pos_dim: int = 32
    chunk_dim: int = 32
    ne_dim: int = 32
    dep_dim: int = 32
    position_dim: int = 32
    filters_per_window: int = 200
    windows: tuple[int, ...] = (3, 5)
    dropout_rate: float = 0.5
    batch_size: int = 32
    epochs: int = 20
    position_clip: int = 30
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    finetune_word_embeddings: bool = True
    word_vectors: str | None = None  # pretrained embedding file, optional
    dtype: str = "float64"

    def __post_init__(self):
        self.windows = tuple(self.windows)
        if not self.windows:
            raise ValueError("at least one convolution window is required")

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    @property
    def embedding_dim(self) -> int:
        return (self.word_dim + self.pos_dim + self.chunk_dim + self.ne_dim
                + self.dep_dim + 2 * self.position_dim)

    @property
    def pooled_dim(self) -> int:
        return 2 * len(self.windows) * self.filters_per_window

    @property
    def position_rows(self) -> int:
        # offsets in [-clip, clip] plus one PAD bucket
        return 2 * self.position_clip + 2

    @property
    def position_pad_index(self) -> int:
        return self.position_rows - 1


@dataclass
class CnnEncoding:
    """Index matrices with columns (word, pos, chunk, ne, dep, pos_chem, pos_gene)."""

    sentence: np.ndarray
    path: np.ndarray


def build_cnn_tables(instances, config: CnnConfig, rng: np.random.Generator,
                     pretrained: dict[str, np.ndarray] | None = None) -> dict[str, nc.EmbeddingTable]:
    """Embedding tables fitted on the training instances' sentences. PAD is row
    0 and UNK row 1 in every table."""
    words, pos, chunk, ne, dep = set(), set(), set(), set(), set()
    for inst in instances:
        for tok in inst.sentence:
            words.add(tok.surface.lower())
            pos.add(tok.pos)
            chunk.add(tok.chunk)
            ne.add(tok.ne)
            dep.add(tok.dep_label)

    def table(symbols, dim):
        return nc.EmbeddingTable([PAD, UNK] + sorted(symbols), dim, rng, unk=UNK,
                                 dtype=config.np_dtype)

    tables = {
        "word": table(words, config.word_dim),
        "pos": table(pos, config.pos_dim),
        "chunk": table(chunk, config.chunk_dim),
        "ne": table(ne, config.ne_dim),
        "dep": table(dep, config.dep_dim),
    }
    tables["word"].trainable = config.finetune_word_embeddings
    if pretrained:
        tables["word"].load_pretrained(pretrained)
    return tables


def _position_index(token_index: int, first: int, last: int, config: CnnConfig) -> int:
    """Signed clipped offset to a mention span; tokens inside the span share
    the 0-offset bucket."""
    if token_index < first:
        offset = token_index - first
    elif token_index > last:
        offset = token_index - last
    else:
        offset = 0
    offset = max(-config.position_clip, min(config.position_clip, offset))
    return offset + config.position_clip


def encode_instance(instance: RelationInstance, tables: dict[str, nc.EmbeddingTable],
                    config: CnnConfig) -> CnnEncoding:
    sentence = instance.sentence
    chem, gene = instance.chem, instance.gene

    def token_row(i: int) -> list[int]:
        tok = sentence[i]
        return [
            tables["word"].index(tok.surface.lower()),
            tables["pos"].index(tok.pos),
            tables["chunk"].index(tok.chunk),
            tables["ne"].index(tok.ne),
            tables["dep"].index(tok.dep_label),
            _position_index(i, chem.first_token, chem.last_token, config),
            _position_index(i, gene.first_token, gene.last_token, config),
        ]

    pad_row = [tables[name].vocab[PAD] for name in ("word", "pos", "chunk", "ne", "dep")]
    pad_row += [config.position_pad_index, config.position_pad_index]

    sent_rows = [token_row(i) for i in range(len(sentence))]

    graph = depgraph.build_graph(sentence)
    path = depgraph.shortest_path(
        graph,
        depgraph.mention_head_token(sentence, chem),
        depgraph.mention_head_token(sentence, gene),
    )
    path_rows = [token_row(i) for i in path.nodes] if path is not None else []
    if not path_rows:
        path_rows = [list(pad_row)]

    min_len = max(config.windows)
    while len(sent_rows) < min_len:
        sent_rows.append(list(pad_row))
    while len(path_rows) < min_len:
        path_rows.append(list(pad_row))

    return CnnEncoding(
        sentence=np.array(sent_rows, dtype=np.int64),
        path=np.array(path_rows, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Parameters, forward, backward

EMB_KEYS = ("emb_word", "emb_pos", "emb_chunk", "emb_ne", "emb_dep", "emb_pchem", "emb_pgene")


def init_cnn_params(tables: dict[str, nc.EmbeddingTable], config: CnnConfig,
                    rng: np.random.Generator) -> dict[str, np.ndarray]:
    dtype = config.np_dtype
    params = {
        "emb_word": tables["word"].matrix,
        "emb_pos": tables["pos"].matrix,
        "emb_chunk": tables["chunk"].matrix,
        "emb_ne": tables["ne"].matrix,
        "emb_dep": tables["dep"].matrix,
        "emb_pchem": nc.embedding_init(rng, config.position_rows, config.position_dim, dtype),
        "emb_pgene": nc.embedding_init(rng, config.position_rows, config.position_dim, dtype),
    }
    d = config.embedding_dim
    f = config.filters_per_window
    for source in ("sent", "path"):
        for k in config.windows:
            params["conv_%s_w%d" % (source, k)] = nc.glorot_uniform(rng, (k, d, f), dtype)
            params["conv_%s_b%d" % (source, k)] = np.zeros(f, dtype=dtype)
    params["dense_w"] = nc.glorot_uniform(rng, (config.pooled_dim, 6), dtype)
    params["dense_b"] = np.zeros(6, dtype=dtype)
    return params


def _embed(matrix_idx: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate(
        [params[key][matrix_idx[:, col]] for col, key in enumerate(EMB_KEYS)], axis=1
    )


def cnn_forward(encoding: CnnEncoding, params: dict[str, np.ndarray], config: CnnConfig,
                train: bool = False, rng: np.random.Generator | None = None):
    """Returns (probabilities, pre-softmax scores, cache)."""
    blocks = []
    block_caches = []
    for source, matrix_idx in (("sent", encoding.sentence), ("path", encoding.path)):
        x = _embed(matrix_idx, params)
        for k in config.windows:
            conv, conv_cache = nc.conv1d_forward(
                x, params["conv_%s_w%d" % (source, k)], params["conv_%s_b%d" % (source, k)]
            )
            act, relu_cache = nc.relu_forward(conv)
            pooled, pool_cache = nc.max_over_time_forward(act)
            blocks.append(pooled)
            block_caches.append((source, k, matrix_idx, conv_cache, relu_cache, pool_cache))
    features = np.concatenate(blocks)
    dropped, drop_mask = nc.dropout_forward(features, config.dropout_rate, rng, train)
    scores, dense_cache = nc.dense_forward(dropped, params["dense_w"], params["dense_b"])
    probs = nc.softmax(scores)
    cache = (block_caches, drop_mask, dense_cache)
    return probs, scores, cache


def cnn_backward(dscores: np.ndarray, cache, params: dict[str, np.ndarray],
                 config: CnnConfig) -> dict[str, np.ndarray]:
    block_caches, drop_mask, dense_cache = cache
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dfeat, grads["dense_w"], grads["dense_b"] = nc.dense_backward(dscores, dense_cache)
    dfeat = nc.dropout_backward(dfeat, drop_mask)

    f = config.filters_per_window
    dim_slices = np.cumsum([config.word_dim, config.pos_dim, config.chunk_dim,
                            config.ne_dim, config.dep_dim,
                            config.position_dim, config.position_dim])[:-1]
    for bi, (source, k, matrix_idx, conv_cache, relu_cache, pool_cache) in enumerate(block_caches):
        dpool = dfeat[bi * f:(bi + 1) * f]
        dact = nc.max_over_time_backward(dpool, pool_cache)
        dconv = nc.relu_backward(dact, relu_cache)
        dx, dw, db = nc.conv1d_backward(dconv, conv_cache)
        grads["conv_%s_w%d" % (source, k)] += dw
        grads["conv_%s_b%d" % (source, k)] += db
        for col, (key, dcol) in enumerate(zip(EMB_KEYS, np.split(dx, dim_slices, axis=1))):
            np.add.at(grads[key], matrix_idx[:, col], dcol)
    return grads


def cnn_predict_index(encoding: CnnEncoding, params, config: CnnConfig) -> int:
    probs, _, _ = cnn_forward(encoding, params, config, train=False)
    return int(np.argmax(probs))


# ---------------------------------------------------------------------------
# Training


def cnn_train(train_instances, dev_instances, tables, config: CnnConfig, seed: int,
              label_set: LabelSet = DEFAULT_LABELS):
    """Minibatch Adam on cross entropy; returns (params, per-epoch history).
    The returned parameters are the snapshot of the epoch with the best
    dev micro-F1."""
    if not train_instances:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    params = init_cnn_params(tables, config, rng)
    adam = nc.Adam(lr=config.learning_rate, beta1=config.beta1, beta2=config.beta2)
    skip = frozenset() if config.finetune_word_embeddings else frozenset(["emb_word"])

    train_enc = [encode_instance(inst, tables, config) for inst in train_instances]
    train_gold = [label_set.index(inst.label) for inst in train_instances]
    dev_enc = [encode_instance(inst, tables, config) for inst in dev_instances]
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
                _, scores, cache = cnn_forward(train_enc[i], params, config, train=True, rng=rng)
                loss, dscores = nc.softmax_ce(scores, train_gold[i])
                total_loss += loss
                g = cnn_backward(dscores / len(batch), cache, params, config)
                for k in grads:
                    grads[k] += g[k]
            adam.step(params, grads, skip=skip)

        dev_pred = [label_set.label(cnn_predict_index(e, params, config)) for e in dev_enc]
        dev_f1 = micro_f1_labels(dev_pred, dev_gold) if dev_enc else 0.0
        history.append({"epoch": epoch, "train_loss": total_loss / len(train_enc),
                        "dev_f1": dev_f1})
        if dev_f1 > best_f1:
            best_f1 = dev_f1
            best_params = {k: v.copy() for k, v in params.items()}

    if not dev_enc:  # nothing to select on: keep the final epoch
        best_params = {k: v.copy() for k, v in params.items()}
    for k in params:  # copy back in place so the embedding tables stay aliased
        np.copyto(params[k], best_params[k])
    return params, history


# ---------------------------------------------------------------------------
# Checkpointing

FORMAT = "cprex-cnn/1"


@dataclass
class CnnModel:
    config: CnnConfig
    tables: dict[str, nc.EmbeddingTable] = field(repr=False)
    params: dict[str, np.ndarray] = field(repr=False)
    label_set: LabelSet = DEFAULT_LABELS

    def scores_for(self, instance: RelationInstance) -> tuple[np.ndarray, np.ndarray]:
        """(probabilities, pre-softmax scores) in eval mode."""
        enc = encode_instance(instance, self.tables, self.config)
        probs, scores, _ = cnn_forward(enc, self.params, self.config, train=False)
        return probs, scores

    def predict(self, instance: RelationInstance) -> str:
        probs, _ = self.scores_for(instance)
        return self.label_set.label(int(np.argmax(probs)))


def save_cnn(model: CnnModel, path):
    meta = {
        "format": FORMAT,
        "config": asdict(model.config),
        "labels": list(model.label_set.labels),
        "symbols": {name: list(t.symbols) for name, t in model.tables.items()},
    }
    np.savez(path, __meta__=np.array(json.dumps(meta, sort_keys=True)), **model.params)


def load_cnn(path) -> CnnModel:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["__meta__"]))
    if meta.get("format") != FORMAT:
        raise ValueError("unsupported CNN checkpoint format %r" % meta.get("format"))
    cfg_dict = dict(meta["config"])
    cfg_dict["windows"] = tuple(cfg_dict["windows"])
    config = CnnConfig(**cfg_dict)
    params = {k: data[k] for k in data.files if k != "__meta__"}
    rng = np.random.default_rng(0)
    tables = {}
    for name, symbols in meta["symbols"].items():
        table = nc.EmbeddingTable(symbols, 1, rng, unk=UNK, dtype=config.np_dtype)
        table.matrix = params["emb_%s" % name]
        tables[name] = table
    tables["word"].trainable = config.finetune_word_embeddings
    return CnnModel(config=config, tables=tables, params=params,
                    label_set=LabelSet(tuple(meta["labels"][1:])))
