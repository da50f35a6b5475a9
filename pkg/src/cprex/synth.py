"""Synthetic desk-scale corpus generator.

Produces fully annotated documents in the ingestion schema: template sentences
with one chemical and one gene mention where a planted trigger lemma between
the mentions deterministically decides the relation label (e.g. "inhibit" for
CPR:4, "agonism" for CPR:5). Negative sentences carry no trigger. Dependency
trees are simple but valid: the main verb or predicate noun is the root and
governs both mention heads, so shortest-path features pass through the
trigger. Some sentences add a non-interacting second chemical after the gene
(extra NEG candidates) and some carry a single mention (no candidates).
"""

from __future__ import annotations

import numpy as np

from .corpus import AnnotatedCorpus, Document, EntityMention, GoldRelation, Token
from .labels import NEG

# the generator's label rule: trigger lemma between the mentions <=> label
TRIGGER_LEMMAS = {
    "activate": "CPR:3",
    "inhibit": "CPR:4",
    "agonism": "CPR:5",
    "antagonize": "CPR:6",
    "substrate": "CPR:9",
}
LABEL_TRIGGERS = {v: k for k, v in TRIGGER_LEMMAS.items()}

_CHEM_PREFIXES = ["flumar", "oxari", "tebra", "quina", "dorva", "melpha",
                  "rastu", "vola", "zepra", "nifo", "carbi", "saluta"]
_CHEM_SUFFIXES = ["zole", "dipine", "mycin", "statin", "profen", "sartan", "tinib", "cillin"]
_GENE_BASES = ["CYP", "ABC", "TNF", "MAPK", "AKT", "EGFR", "JAK", "STAT",
               "PPAR", "COX", "HMG", "GPR"]
_GENE_SUFFIXES = ["1A2", "2B6", "3A4", "1", "2", "5", "7", "9A"]
_GENE_KIND_NOUNS = ["receptor", "kinase", "synthase", "transporter"]
_ADVERBS = ["strongly", "markedly", "significantly", "potently", "selectively"]
_AGONISM_VERBS = ["displayed", "showed", "exhibited"]
_AGONISM_ADJS = ["clear", "partial", "potent"]
_SUBSTRATE_ADJS = ["selective", "specific", "typical"]
_NEG_VERBS = ["alter", "change", "affect"]
_TAIL_NOUNS = ["hepatocytes", "astrocytes", "fibroblasts", "lymphocytes"]
_TAIL_ADJS = ["human", "murine", "cultured"]

_LABEL_CYCLE = ("CPR:3", "CPR:4", "CPR:5", "CPR:6", "CPR:9", NEG)


class _Sent:
    """One template sentence under construction: parallel token/head/dep lists
    plus the mention spans."""

    def __init__(self):
        self.tokens: list[tuple[str, str, str, str, str]] = []
        self.heads: list[int | None] = []
        self.deps: list[str | None] = []
        self.chem_span = None
        self.gene_span = None
        self.extra_chem_span = None
        self.label = NEG

    def add(self, surface, pos, chunk, ne="O", lemma=None) -> int:
        self.tokens.append((surface, lemma if lemma is not None else surface.lower(),
                            pos, chunk, ne))
        self.heads.append(None)
        self.deps.append(None)
        return len(self.tokens) - 1

    def attach(self, token, head, dep):
        self.heads[token] = head
        self.deps[token] = dep

    def finish(self) -> "_Sent":
        for i, (head, dep) in enumerate(zip(self.heads, self.deps)):
            if head is None or dep is None:
                raise AssertionError("template left token %d unattached" % i)
            if head == i:
                raise AssertionError("template made token %d its own head" % i)
        return self


def _pick(rng: np.random.Generator, pool):
    return pool[int(rng.integers(len(pool)))]


def _chem_name(rng) -> str:
    return _pick(rng, _CHEM_PREFIXES) + _pick(rng, _CHEM_SUFFIXES)


def _gene_tokens(rng) -> list[str]:
    name = _pick(rng, _GENE_BASES) + _pick(rng, _GENE_SUFFIXES)
    if rng.random() < 0.35:
        return [name, _pick(rng, _GENE_KIND_NOUNS)]
    return [name]


def _add_chem(s: _Sent, name: str) -> int:
    i = s.add(name, "NN", "B-NP", ne="CHEMICAL")
    s.chem_span = (i, i)
    return i


def _add_gene(s: _Sent, tokens: list[str], chunk_start="B-NP") -> int:
    first = len(s.tokens)
    for j, g in enumerate(tokens):
        s.add(g, "NN", chunk_start if j == 0 else "I-NP", ne="GENE")
    last = len(s.tokens) - 1
    for j in range(first, last):
        s.attach(j, last, "compound")
    s.gene_span = (first, last)
    return last


def _add_tail(s: _Sent, rng, verb_index: int):
    if rng.random() >= 0.7:
        return
    prep = s.add("in", "IN", "B-PP")
    adj = None
    if rng.random() < 0.5:
        adj = s.add(_pick(rng, _TAIL_ADJS), "JJ", "B-NP")
    noun = s.add(_pick(rng, _TAIL_NOUNS), "NNS", "I-NP" if adj is not None else "B-NP")
    s.attach(prep, noun, "case")
    if adj is not None:
        s.attach(adj, noun, "amod")
    s.attach(noun, verb_index, "nmod")


def _add_distractor(s: _Sent, rng, chem_index: int, root: int, used_name: str):
    if rng.random() >= 0.25:
        return
    name = _chem_name(rng)
    if name == used_name:
        name += "ol"
    comma = s.add(",", ",", "O")
    but = s.add("but", "CC", "O")
    nt = s.add("not", "RB", "O")
    extra = s.add(name, "NN", "B-NP", ne="CHEMICAL")
    s.extra_chem_span = (extra, extra)
    s.attach(comma, root, "punct")
    s.attach(but, extra, "cc")
    s.attach(nt, extra, "advmod")
    s.attach(extra, chem_index, "conj")


def _finish_with_period(s: _Sent, root: int) -> _Sent:
    dot = s.add(".", ".", "O")
    s.attach(dot, root, "punct")
    return s.finish()


def _active_verb_sentence(rng, label: str) -> _Sent:
    trig = LABEL_TRIGGERS[label]
    s = _Sent()
    s.label = label
    chem_name = _chem_name(rng)
    i_chem = _add_chem(s, chem_name)
    if rng.random() < 0.5:
        adv = s.add(_pick(rng, _ADVERBS), "RB", "B-ADVP")
    else:
        adv = None
    i_trig = s.add(trig + "s", "VBZ", "B-VP", lemma=trig)
    det = s.add("the", "DT", "B-NP")
    gene_head = _add_gene(s, _gene_tokens(rng), chunk_start="I-NP")
    s.attach(i_chem, i_trig, "nsubj")
    if adv is not None:
        s.attach(adv, i_trig, "advmod")
    s.attach(i_trig, -1, "root")
    s.attach(det, gene_head, "det")
    s.attach(gene_head, i_trig, "dobj")
    _add_tail(s, rng, i_trig)
    _add_distractor(s, rng, i_chem, i_trig, chem_name)
    return _finish_with_period(s, i_trig)


def _passive_verb_sentence(rng, label: str) -> _Sent:
    trig = LABEL_TRIGGERS[label]
    s = _Sent()
    s.label = label
    gene_head = _add_gene(s, _gene_tokens(rng))
    aux = s.add("is", "VBZ", "B-VP", lemma="be")
    past = trig + "d" if trig.endswith("e") else trig + "ed"
    i_trig = s.add(past, "VBN", "I-VP", lemma=trig)
    by = s.add("by", "IN", "B-PP")
    i_chem = _add_chem(s, _chem_name(rng))
    s.attach(gene_head, i_trig, "nsubj:pass")
    s.attach(aux, i_trig, "aux:pass")
    s.attach(i_trig, -1, "root")
    s.attach(by, i_chem, "case")
    s.attach(i_chem, i_trig, "obl:agent")
    _add_tail(s, rng, i_trig)
    return _finish_with_period(s, i_trig)


def _agonism_sentence(rng) -> _Sent:
    s = _Sent()
    s.label = "CPR:5"
    chem_name = _chem_name(rng)
    i_chem = _add_chem(s, chem_name)
    verb = s.add(_pick(rng, _AGONISM_VERBS), "VBD", "B-VP")
    adj = s.add(_pick(rng, _AGONISM_ADJS), "JJ", "B-NP") if rng.random() < 0.6 else None
    i_ag = s.add("agonism", "NN", "I-NP" if adj is not None else "B-NP")
    toward = s.add("toward", "IN", "B-PP")
    gene_head = _add_gene(s, _gene_tokens(rng))
    s.attach(i_chem, verb, "nsubj")
    s.attach(verb, -1, "root")
    if adj is not None:
        s.attach(adj, i_ag, "amod")
    s.attach(i_ag, verb, "dobj")
    s.attach(toward, gene_head, "case")
    s.attach(gene_head, i_ag, "nmod:toward")
    _add_tail(s, rng, verb)
    _add_distractor(s, rng, i_chem, verb, chem_name)
    return _finish_with_period(s, verb)


def _substrate_sentence(rng) -> _Sent:
    s = _Sent()
    s.label = "CPR:9"
    chem_name = _chem_name(rng)
    i_chem = _add_chem(s, chem_name)
    cop = s.add("is", "VBZ", "B-VP", lemma="be")
    det = s.add("a", "DT", "B-NP")
    adj = s.add(_pick(rng, _SUBSTRATE_ADJS), "JJ", "I-NP") if rng.random() < 0.6 else None
    i_sub = s.add("substrate", "NN", "I-NP")
    of = s.add("of", "IN", "B-PP")
    gene_head = _add_gene(s, _gene_tokens(rng))
    s.attach(i_chem, i_sub, "nsubj")
    s.attach(cop, i_sub, "cop")
    s.attach(det, i_sub, "det")
    if adj is not None:
        s.attach(adj, i_sub, "amod")
    s.attach(i_sub, -1, "root")
    s.attach(of, gene_head, "case")
    s.attach(gene_head, i_sub, "nmod:of")
    _add_tail(s, rng, i_sub)
    _add_distractor(s, rng, i_chem, i_sub, chem_name)
    return _finish_with_period(s, i_sub)


def _neg_measured_sentence(rng) -> _Sent:
    s = _Sent()
    i_chem = _add_chem(s, _chem_name(rng))
    conj = s.add("and", "CC", "O")
    gene_head = _add_gene(s, _gene_tokens(rng))
    aux = s.add("were", "VBD", "B-VP", lemma="be")
    verb = s.add("measured", "VBN", "I-VP", lemma="measure")
    prep = s.add("in", "IN", "B-PP")
    n1 = s.add(_pick(rng, ["plasma", "serum"]), "NN", "B-NP")
    n2 = s.add(_pick(rng, ["samples", "extracts"]), "NNS", "I-NP", lemma="sample")
    s.attach(i_chem, verb, "nsubj:pass")
    s.attach(conj, gene_head, "cc")
    s.attach(gene_head, i_chem, "conj")
    s.attach(aux, verb, "aux:pass")
    s.attach(verb, -1, "root")
    s.attach(prep, n2, "case")
    s.attach(n1, n2, "compound")
    s.attach(n2, verb, "obl")
    return _finish_with_period(s, verb)


def _neg_no_effect_sentence(rng) -> _Sent:
    s = _Sent()
    levels = s.add(_pick(rng, ["levels", "concentrations"]), "NNS", "B-NP", lemma="level")
    of = s.add("of", "IN", "B-PP")
    i_chem = _add_chem(s, _chem_name(rng))
    did = s.add("did", "VBD", "B-VP", lemma="do")
    nt = s.add("not", "RB", "I-VP")
    verb_lemma = _pick(rng, _NEG_VERBS)
    verb = s.add(verb_lemma, "VB", "I-VP", lemma=verb_lemma)
    gene_head = _add_gene(s, _gene_tokens(rng))
    noun = s.add(_pick(rng, ["expression", "activity"]), "NN", "I-NP")
    s.attach(levels, verb, "nsubj")
    s.attach(of, i_chem, "case")
    s.attach(i_chem, levels, "nmod:of")
    s.attach(did, verb, "aux")
    s.attach(nt, verb, "advmod")
    s.attach(verb, -1, "root")
    s.attach(gene_head, noun, "compound")
    s.attach(noun, verb, "dobj")
    return _finish_with_period(s, verb)


def _neg_detected_sentence(rng) -> _Sent:
    s = _Sent()
    i_chem = _add_chem(s, _chem_name(rng))
    was = s.add("was", "VBD", "B-VP", lemma="be")
    verb = s.add("detected", "VBN", "I-VP", lemma="detect")
    near = s.add("near", "IN", "B-PP")
    gene_head = _add_gene(s, _gene_tokens(rng))
    noun = s.add(_pick(rng, ["sites", "promoters"]), "NNS", "I-NP", lemma="site")
    s.attach(i_chem, verb, "nsubj:pass")
    s.attach(was, verb, "aux:pass")
    s.attach(verb, -1, "root")
    s.attach(near, noun, "case")
    s.attach(gene_head, noun, "compound")
    s.attach(noun, verb, "obl")
    return _finish_with_period(s, verb)


def _single_entity_sentence(rng) -> _Sent:
    s = _Sent()
    if rng.random() < 0.5:
        i_chem = _add_chem(s, _chem_name(rng))
        was = s.add("was", "VBD", "B-VP", lemma="be")
        pred = s.add("stable", "JJ", "B-ADJP")
        s.attach(i_chem, pred, "nsubj")
        s.attach(was, pred, "cop")
        s.attach(pred, -1, "root")
        return _finish_with_period(s, pred)
    gene_head = _add_gene(s, _gene_tokens(rng))
    noun = s.add("activity", "NN", "I-NP")
    was = s.add("was", "VBD", "B-VP", lemma="be")
    verb = s.add("elevated", "VBN", "I-VP", lemma="elevate")
    s.attach(gene_head, noun, "compound")
    s.attach(noun, verb, "nsubj:pass")
    s.attach(was, verb, "aux:pass")
    s.attach(verb, -1, "root")
    return _finish_with_period(s, verb)


_NEG_TEMPLATES = (_neg_measured_sentence, _neg_no_effect_sentence, _neg_detected_sentence)


def _sentence_for_label(rng, label: str) -> _Sent:
    if label == NEG:
        return _pick(rng, _NEG_TEMPLATES)(rng)
    if label == "CPR:5":
        return _agonism_sentence(rng)
    if label == "CPR:9":
        return _substrate_sentence(rng)
    if rng.random() < 0.3:
        return _passive_verb_sentence(rng, label)
    return _active_verb_sentence(rng, label)


def generate_synthetic_corpus(size: int, seed: int) -> AnnotatedCorpus:
    """Generate `size` documents. All six labels are guaranteed to occur for
    size >= 12 (the first twelve sentences cycle through the label inventory)."""
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = np.random.default_rng(seed)
    documents = []
    sentence_serial = 0
    for d in range(size):
        n_sentences = int(rng.integers(1, 4))
        sents: list[_Sent] = []
        for _ in range(n_sentences):
            if sentence_serial < 2 * len(_LABEL_CYCLE):
                label = _LABEL_CYCLE[sentence_serial % len(_LABEL_CYCLE)]
                sent = _sentence_for_label(rng, label)
            elif rng.random() < 0.15:
                sent = _single_entity_sentence(rng)
            elif rng.random() < 0.40:
                sent = _sentence_for_label(rng, NEG)
            else:
                sent = _sentence_for_label(rng, _pick(rng, _LABEL_CYCLE[:-1]))
            sentence_serial += 1
            sents.append(sent)

        doc_id = "SYN%05d" % d
        sentences = []
        mentions = []
        relations = []
        cursor = 0
        mention_serial = 0
        for si, sent in enumerate(sents):
            tokens = []
            for surface, lemma, pos, chunk, ne in sent.tokens:
                tokens.append(Token(
                    surface=surface, lemma=lemma, pos=pos, chunk=chunk, ne=ne,
                    dep_head=sent.heads[len(tokens)], dep_label=sent.deps[len(tokens)],
                    char_start=cursor, char_end=cursor + len(surface),
                ))
                cursor += len(surface) + 1
            sentences.append(tuple(tokens))

            def mention(kind, span):
                nonlocal mention_serial
                mention_serial += 1
                first, last = span
                return EntityMention(
                    id="T%d" % mention_serial, kind=kind, sentence_index=si,
                    first_token=first, last_token=last,
                    text=" ".join(t.surface for t in tokens[first:last + 1]),
                )

            chem = mention("CHEMICAL", sent.chem_span) if sent.chem_span else None
            gene = mention("GENE", sent.gene_span) if sent.gene_span else None
            if chem:
                mentions.append(chem)
            if gene:
                mentions.append(gene)
            if sent.extra_chem_span:
                mentions.append(mention("CHEMICAL", sent.extra_chem_span))
            if sent.label != NEG and chem and gene:
                relations.append(GoldRelation(label=sent.label, chem_id=chem.id,
                                              gene_id=gene.id))
        documents.append(Document(
            doc_id=doc_id, sentences=tuple(sentences),
            mentions=tuple(mentions), relations=tuple(relations),
        ))
    return AnnotatedCorpus(tuple(documents))
