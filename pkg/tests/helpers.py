"""Shared test fixtures: tiny sentence builders, finite-difference checking,
and the independent oracles the test suite verifies the implementations
against."""

from __future__ import annotations

import numpy as np

from cprex.corpus import EntityMention, RelationInstance, Token
from cprex.labels import NEG


def make_token(surface, head, dep, pos="NN", chunk="B-NP", ne="O", lemma=None,
               start=0) -> Token:
    return Token(
        surface=surface, lemma=lemma if lemma is not None else surface.lower(),
        pos=pos, chunk=chunk, ne=ne, dep_head=head, dep_label=dep,
        char_start=start, char_end=start + len(surface),
    )


def make_sentence(specs) -> tuple[Token, ...]:
    """specs: iterable of (surface, head, dep) or (surface, head, dep, pos)."""
    tokens = []
    cursor = 0
    for spec in specs:
        surface, head, dep = spec[0], spec[1], spec[2]
        pos = spec[3] if len(spec) > 3 else "NN"
        tokens.append(make_token(surface, head, dep, pos=pos, start=cursor))
        cursor += len(surface) + 1
    return tuple(tokens)


def make_instance(sentence, chem_span, gene_span, label=NEG, doc_id="D1",
                  sentence_index=0) -> RelationInstance:
    chem = EntityMention(id="C1", kind="CHEMICAL", sentence_index=sentence_index,
                         first_token=chem_span[0], last_token=chem_span[1],
                         text=" ".join(t.surface for t in sentence[chem_span[0]:chem_span[1] + 1]))
    gene = EntityMention(id="G1", kind="GENE", sentence_index=sentence_index,
                         first_token=gene_span[0], last_token=gene_span[1],
                         text=" ".join(t.surface for t in sentence[gene_span[0]:gene_span[1] + 1]))
    return RelationInstance(doc_id=doc_id, sentence_index=sentence_index,
                            chem=chem, gene=gene, label=label, sentence=sentence)


# Worked example with a known shortest path; the two-word gene mention is
# pre-merged into a single token so the path endpoint carries the full text.
GEMFIBROZIL_SPECS = [
    ("Gemfibrozil", 6, "nsubj"), (",", 0, "punct"), ("a", 4, "det"),
    ("lipid-lowering", 4, "amod"), ("drug", 0, "appos"), (",", 0, "punct"),
    ("inhibits", -1, "root", "VBZ"), ("the", 8, "det"), ("induction", 6, "dobj"),
    ("of", 10, "case"), ("nitric-oxide synthase", 8, "nmod:of"),
    ("in", 13, "case"), ("human", 13, "amod"), ("astrocytes", 6, "nmod"),
    (".", 6, "punct"),
]


def gemfibrozil_instance() -> RelationInstance:
    sentence = make_sentence(GEMFIBROZIL_SPECS)
    return make_instance(sentence, chem_span=(0, 0), gene_span=(10, 10))


def gemfibrozil_record() -> dict:
    """The same sentence as an ingestion-schema record."""
    sentence = make_sentence(GEMFIBROZIL_SPECS)
    return {
        "docId": "PAPER1",
        "sentences": [[
            {"surface": t.surface, "lemma": t.lemma, "pos": t.pos, "chunk": t.chunk,
             "ne": t.ne, "depHead": t.dep_head, "depLabel": t.dep_label,
             "charStart": t.char_start, "charEnd": t.char_end}
            for t in sentence
        ]],
        "mentions": [
            {"id": "T1", "kind": "CHEMICAL", "sentenceIndex": 0, "firstToken": 0,
             "lastToken": 0, "text": "Gemfibrozil"},
            {"id": "T2", "kind": "GENE", "sentenceIndex": 0, "firstToken": 10,
             "lastToken": 10, "text": "nitric-oxide synthase"},
        ],
        "relations": [{"label": "CPR:4", "chemId": "T1", "geneId": "T2"}],
    }


KEYWORD_LABELS = {
    "boosts": "CPR:3", "blocks": "CPR:4", "binds": "CPR:5",
    "stops": "CPR:6", "feeds": "CPR:9", "near": NEG,
}


def keyword_instances(n=40):
    """Instances where a single middle keyword determines the class:
    'the CHEM <kw> the GENE .' with the keyword as dependency root."""
    keywords = list(KEYWORD_LABELS)
    chems = ["amiloride", "begacine", "colupral", "dexarine"]
    genes = ["ABC1", "TNF2", "JAK5", "COX9"]
    instances = []
    for i in range(n):
        kw = keywords[i % len(keywords)]
        specs = [
            ("the", 1, "det", "DT"), (chems[i % 4], 2, "nsubj", "NN"),
            (kw, -1, "root", "VBZ"), ("the", 4, "det", "DT"),
            (genes[(i // 2) % 4], 2, "dobj", "NN"), (".", 2, "punct", "."),
        ]
        sentence = make_sentence(specs)
        instances.append(make_instance(sentence, (1, 1), (4, 4),
                                       label=KEYWORD_LABELS[kw],
                                       doc_id="K%d" % i))
    return instances


# ---------------------------------------------------------------------------
# Finite differences


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-4)


def finite_difference_check(loss_fn, arrays, grads, h=1e-5, tol=1e-4, max_coords=None,
                            rng=None):
    """Central finite differences against analytic gradients, array by array.
    Mutates and restores the arrays in place. Returns the worst relative error."""
    worst = 0.0
    for arr, grad in zip(arrays, grads):
        flat = arr.ravel()
        gflat = np.asarray(grad).ravel()
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            worst = max(worst, relative_error(float(gflat[i]), fd))
    assert worst < tol, "finite-difference mismatch: worst relative error %.3e" % worst
    return worst


# ---------------------------------------------------------------------------
# Independent oracles


def enumerate_shortest_length(n_nodes: int, edges, src: int, dst: int):
    """Brute-force shortest path length by exhaustive simple-path enumeration.
    `edges` is an iterable of undirected (a, b) pairs. Returns None when
    disconnected."""
    adj = {i: set() for i in range(n_nodes)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    best = [None]

    def walk(node, seen, length):
        if best[0] is not None and length >= best[0]:
            return
        if node == dst:
            best[0] = length
            return
        for nb in adj[node]:
            if nb not in seen:
                walk(nb, seen | {nb}, length + 1)

    walk(src, {src}, 0)
    return best[0]


def vote_count_oracle(labels, neg=NEG, unanimous=False) -> str:
    """Brute-force counting vote over any number of voters."""
    needed = len(labels) if unanimous else 2
    positives = sorted({lab for lab in labels if lab != neg})
    winners = [lab for lab in positives if list(labels).count(lab) >= needed]
    return winners[0] if winners else neg


def forest_walk_oracle(payload: dict, x) -> int:
    """Second, recursive traversal of a serialized forest file payload."""

    def walk(tree, node):
        if tree["feature"][node] < 0:
            hist = tree["histogram"][node]
            return max(range(len(hist)), key=lambda c: (hist[c], -c))
        child = tree["left"][node] if x[tree["feature"][node]] <= tree["threshold"][node] \
            else tree["right"][node]
        return walk(tree, child)

    votes = [0] * payload["n_classes"]
    for tree in payload["trees"]:
        votes[walk(tree, 0)] += 1
    return max(range(len(votes)), key=lambda c: (votes[c], -c))


def perceptron_separates(rows, labels, classes, epochs=200):
    """Multiclass perceptron over sparse rows [(indices, values), ...]; returns
    True when it reaches zero training errors, proving linear separability."""
    dim = 1 + max((int(idx.max()) for idx, _ in rows if len(idx)), default=0)
    w = {c: np.zeros(dim + 1) for c in classes}
    for _ in range(epochs):
        errors = 0
        for (idx, val), gold in zip(rows, labels):
            scores = {c: float(w[c][idx] @ val + w[c][-1]) for c in classes}
            pred = max(classes, key=lambda c: scores[c])
            if pred != gold:
                errors += 1
                w[gold][idx] += val
                w[gold][-1] += 1.0
                w[pred][idx] -= val
                w[pred][-1] -= 1.0
        if errors == 0:
            return True
    return False


def trigger_oracle_tuples(corpus) -> set:
    """Regex-style scan: first trigger lemma strictly between the mention spans
    decides the label; no trigger means NEG. Independent of the models."""
    import re

    from cprex.corpus import generate_candidates
    from cprex.synth import TRIGGER_LEMMAS

    pattern = re.compile(r"^(%s)$" % "|".join(TRIGGER_LEMMAS))
    out = set()
    for inst in generate_candidates(corpus):
        first, second = sorted((inst.chem, inst.gene), key=lambda m: m.first_token)
        label = None
        for i in range(first.last_token + 1, second.first_token):
            match = pattern.match(inst.sentence[i].lemma)
            if match:
                label = TRIGGER_LEMMAS[match.group(1)]
                break
        if label is not None:
            out.add((inst.doc_id, label, inst.chem.id, inst.gene.id))
    return out
