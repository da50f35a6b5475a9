"""Annotated corpus data model, ingestion, candidate generation, and prediction I/O.

The ingestion format is UTF-8 JSON lines, one document per line:

    {"docId": "...",
     "sentences": [[{"surface": ..., "lemma": ..., "pos": ..., "chunk": ..., "ne": ...,
                     "depHead": -1, "depLabel": "root", "charStart": 0, "charEnd": 11}, ...], ...],
     "mentions": [{"id": "T1", "kind": "CHEMICAL", "sentenceIndex": 0,
                   "firstToken": 0, "lastToken": 0, "text": "..."}, ...],
     "relations": [{"label": "CPR:4", "chemId": "T1", "geneId": "T2"}, ...]}

Tokenization, tagging, and parsing happen upstream; this module only validates.
Predictions are written as TSV rows `docId<TAB>label<TAB>Arg1:chemId<TAB>Arg2:geneId`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .labels import NEG, DEFAULT_LABELS, LabelSet

ROOT = -1

CHEMICAL = "CHEMICAL"
GENE = "GENE"


class CorpusError(Exception):
    """Base class for ingestion failures."""


class ParseError(CorpusError):
    """Record is not well-formed (bad JSON, missing field, wrong type)."""


class ValidationError(CorpusError):
    """Record is well-formed but violates a corpus invariant."""


@dataclass(frozen=True)
class Token:
    surface: str
    lemma: str
    pos: str
    chunk: str
    ne: str
    dep_head: int  # sentence-local index of the head token, ROOT (-1) for the root
    dep_label: str
    char_start: int
    char_end: int


Sentence = tuple  # tuple[Token, ...]


@dataclass(frozen=True)
class EntityMention:
    id: str
    kind: str  # CHEMICAL or GENE
    sentence_index: int
    first_token: int
    last_token: int
    text: str

    def span(self) -> tuple[int, int]:
        return (self.first_token, self.last_token)

    def covers(self, token_index: int) -> bool:
        return self.first_token <= token_index <= self.last_token


@dataclass(frozen=True)
class GoldRelation:
    label: str
    chem_id: str
    gene_id: str


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple[Sentence, ...]
    mentions: tuple[EntityMention, ...]
    relations: tuple[GoldRelation, ...]

    def mentions_by_id(self) -> dict[str, EntityMention]:
        return {m.id: m for m in self.mentions}


@dataclass(frozen=True)
class AnnotatedCorpus:
    documents: tuple[Document, ...]

    def __len__(self) -> int:
        return len(self.documents)

    def subset(self, doc_ids) -> "AnnotatedCorpus":
        """Sub-corpus containing the given documents, original order preserved."""
        wanted = set(doc_ids)
        return AnnotatedCorpus(tuple(d for d in self.documents if d.doc_id in wanted))

    def doc_ids(self) -> tuple[str, ...]:
        return tuple(d.doc_id for d in self.documents)


@dataclass
class RelationInstance:
    """One intra-sentence (chemical, gene) candidate pair.

    `sentence` is a direct reference to the token tuple for feature extraction.
    """

    doc_id: str
    sentence_index: int
    chem: EntityMention
    gene: EntityMention
    label: str = NEG
    sentence: Sentence = field(default=(), repr=False)

    def __post_init__(self):
        if self.chem.kind != CHEMICAL:
            raise ValueError("chem mention %s has kind %s" % (self.chem.id, self.chem.kind))
        if self.gene.kind != GENE:
            raise ValueError("gene mention %s has kind %s" % (self.gene.id, self.gene.kind))
        if self.chem.sentence_index != self.gene.sentence_index:
            raise ValueError(
                "mentions %s and %s are in different sentences" % (self.chem.id, self.gene.id)
            )

    def pair_key(self) -> tuple[str, str, str]:
        return (self.doc_id, self.chem.id, self.gene.id)


# ---------------------------------------------------------------------------
# Ingestion


def _require(record, key, type_, where):
    if key not in record:
        raise ParseError("%s: missing field %r" % (where, key))
    value = record[key]
    if not isinstance(value, type_):
        raise ParseError("%s: field %r has type %s, expected %s"
                         % (where, key, type(value).__name__, type_.__name__))
    return value


def _parse_token(obj, where) -> Token:
    surface = _require(obj, "surface", str, where)
    lemma = _require(obj, "lemma", str, where)
    if not lemma:
        lemma = surface.lower()  # missing lemma falls back to lowercased surface
    tok = Token(
        surface=surface,
        lemma=lemma,
        pos=_require(obj, "pos", str, where),
        chunk=_require(obj, "chunk", str, where),
        ne=_require(obj, "ne", str, where),
        dep_head=_require(obj, "depHead", int, where),
        dep_label=_require(obj, "depLabel", str, where),
        char_start=_require(obj, "charStart", int, where),
        char_end=_require(obj, "charEnd", int, where),
    )
    if tok.char_start >= tok.char_end:
        raise ValidationError("%s: charStart %d >= charEnd %d"
                              % (where, tok.char_start, tok.char_end))
    return tok


def _validate_sentence(tokens: tuple[Token, ...], where: str):
    n = len(tokens)
    for i, tok in enumerate(tokens):
        if tok.dep_head == i:
            raise ValidationError("%s: token %d (%r) is its own dependency head"
                                  % (where, i, tok.surface))
        if tok.dep_head != ROOT and not (0 <= tok.dep_head < n):
            raise ValidationError(
                "%s: token %d (%r) has depHead %d outside [0, %d)"
                % (where, i, tok.surface, tok.dep_head, n)
            )


def parse_document(record: dict, where: str = "document",
                   label_set: LabelSet = DEFAULT_LABELS) -> Document:
    doc_id = _require(record, "docId", str, where)
    where = "%s %r" % (where, doc_id)

    sentences = []
    for si, sent in enumerate(_require(record, "sentences", list, where)):
        if not isinstance(sent, list):
            raise ParseError("%s: sentence %d is not a token array" % (where, si))
        tokens = tuple(
            _parse_token(tok, "%s sentence %d token %d" % (where, si, ti))
            for ti, tok in enumerate(sent)
        )
        _validate_sentence(tokens, "%s sentence %d" % (where, si))
        sentences.append(tokens)

    mentions = []
    seen_ids = set()
    for mi, obj in enumerate(_require(record, "mentions", list, where)):
        mwhere = "%s mention %d" % (where, mi)
        mention = EntityMention(
            id=_require(obj, "id", str, mwhere),
            kind=_require(obj, "kind", str, mwhere),
            sentence_index=_require(obj, "sentenceIndex", int, mwhere),
            first_token=_require(obj, "firstToken", int, mwhere),
            last_token=_require(obj, "lastToken", int, mwhere),
            text=_require(obj, "text", str, mwhere),
        )
        if mention.kind not in (CHEMICAL, GENE):
            raise ValidationError("%s: unknown mention kind %r" % (mwhere, mention.kind))
        if mention.id in seen_ids:
            raise ValidationError("%s: duplicate mention id %r" % (mwhere, mention.id))
        seen_ids.add(mention.id)
        if not (0 <= mention.sentence_index < len(sentences)):
            raise ValidationError("%s: sentenceIndex %d out of range" % (mwhere, mention.sentence_index))
        n = len(sentences[mention.sentence_index])
        if not (0 <= mention.first_token <= mention.last_token < n):
            raise ValidationError(
                "%s: span [%d, %d] outside sentence of %d tokens"
                % (mwhere, mention.first_token, mention.last_token, n)
            )
        mentions.append(mention)

    by_id = {m.id: m for m in mentions}
    relations = []
    for ri, obj in enumerate(_require(record, "relations", list, where)):
        rwhere = "%s relation %d" % (where, ri)
        rel = GoldRelation(
            label=_require(obj, "label", str, rwhere),
            chem_id=_require(obj, "chemId", str, rwhere),
            gene_id=_require(obj, "geneId", str, rwhere),
        )
        if rel.label not in label_set or rel.label == NEG:
            raise ValidationError("%s: label %r not in positive label set" % (rwhere, rel.label))
        for mid, kind in ((rel.chem_id, CHEMICAL), (rel.gene_id, GENE)):
            if mid not in by_id:
                raise ValidationError("%s: unknown mention id %r" % (rwhere, mid))
            if by_id[mid].kind != kind:
                raise ValidationError("%s: mention %r has kind %s, expected %s"
                                      % (rwhere, mid, by_id[mid].kind, kind))
        relations.append(rel)

    return Document(doc_id=doc_id, sentences=tuple(sentences),
                    mentions=tuple(mentions), relations=tuple(relations))


def parse_corpus(path, label_set: LabelSet = DEFAULT_LABELS) -> AnnotatedCorpus:
    """Read and fully validate a JSON-lines corpus file. Empty file -> empty corpus."""
    documents = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError("line %d: malformed JSON: %s" % (lineno, exc)) from exc
            if not isinstance(record, dict):
                raise ParseError("line %d: record is not an object" % lineno)
            documents.append(parse_document(record, "line %d" % lineno, label_set))
    return AnnotatedCorpus(tuple(documents))


def _token_to_json(tok: Token) -> dict:
    return {
        "surface": tok.surface, "lemma": tok.lemma, "pos": tok.pos,
        "chunk": tok.chunk, "ne": tok.ne, "depHead": tok.dep_head,
        "depLabel": tok.dep_label, "charStart": tok.char_start, "charEnd": tok.char_end,
    }


def document_to_json(doc: Document) -> dict:
    return {
        "docId": doc.doc_id,
        "sentences": [[_token_to_json(t) for t in sent] for sent in doc.sentences],
        "mentions": [
            {"id": m.id, "kind": m.kind, "sentenceIndex": m.sentence_index,
             "firstToken": m.first_token, "lastToken": m.last_token, "text": m.text}
            for m in doc.mentions
        ],
        "relations": [
            {"label": r.label, "chemId": r.chem_id, "geneId": r.gene_id}
            for r in doc.relations
        ],
    }


def write_corpus(corpus: AnnotatedCorpus, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in corpus.documents:
            fh.write(json.dumps(document_to_json(doc), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Candidate generation and gold labels


def generate_candidates(corpus: AnnotatedCorpus, stats: dict | None = None) -> list[RelationInstance]:
    """All intra-sentence (chemical, gene) pairs in deterministic order
    (document, sentence, chem span start, gene span start).

    Pairs whose spans overlap are skipped and counted in `stats`.
    """
    overlapping = 0
    out = []
    for doc in corpus.documents:
        per_sentence: dict[int, tuple[list, list]] = {}
        for m in doc.mentions:
            chems, genes = per_sentence.setdefault(m.sentence_index, ([], []))
            (chems if m.kind == CHEMICAL else genes).append(m)
        for si in sorted(per_sentence):
            chems, genes = per_sentence[si]
            chems.sort(key=lambda m: (m.first_token, m.last_token, m.id))
            genes.sort(key=lambda m: (m.first_token, m.last_token, m.id))
            for chem in chems:
                for gene in genes:
                    if chem.first_token <= gene.last_token and gene.first_token <= chem.last_token:
                        overlapping += 1
                        continue
                    out.append(RelationInstance(
                        doc_id=doc.doc_id, sentence_index=si, chem=chem, gene=gene,
                        label=NEG, sentence=doc.sentences[si],
                    ))
    if stats is not None:
        stats["overlapping_pairs_skipped"] = overlapping
    return out


def attach_gold_labels(instances: list[RelationInstance], corpus: AnnotatedCorpus,
                       stats: dict | None = None) -> list[RelationInstance]:
    """Label candidates from the gold relations.

    Unlabeled pairs stay NEG. A pair with k > 1 gold labels is duplicated into
    k training instances. Gold relations whose pair produced no candidate
    (cross-sentence or overlapping pair) are counted as dropped, not errors.
    """
    gold: dict[tuple[str, str, str], list[str]] = {}
    for doc in corpus.documents:
        for rel in doc.relations:
            gold.setdefault((doc.doc_id, rel.chem_id, rel.gene_id), []).append(rel.label)

    matched = set()
    out = []
    for inst in instances:
        labels = gold.get(inst.pair_key())
        if not labels:
            out.append(inst)
            continue
        matched.add(inst.pair_key())
        for label in labels:
            out.append(RelationInstance(
                doc_id=inst.doc_id, sentence_index=inst.sentence_index,
                chem=inst.chem, gene=inst.gene, label=label, sentence=inst.sentence,
            ))
    if stats is not None:
        stats["gold_relations_dropped"] = sum(
            len(v) for k, v in gold.items() if k not in matched
        )
    return out


def gold_relation_tuples(corpus: AnnotatedCorpus, stats: dict | None = None) -> set[tuple]:
    """Gold (docId, label, chemId, geneId) tuples restricted to pairs a
    single-sentence system can produce; the rest are counted as dropped."""
    candidates = {inst.pair_key() for inst in generate_candidates(corpus)}
    kept = set()
    dropped = 0
    for doc in corpus.documents:
        for rel in doc.relations:
            if (doc.doc_id, rel.chem_id, rel.gene_id) in candidates:
                kept.add((doc.doc_id, rel.label, rel.chem_id, rel.gene_id))
            else:
                dropped += 1
    if stats is not None:
        stats["gold_relations_dropped"] = dropped
    return kept


# ---------------------------------------------------------------------------
# Prediction I/O


def prediction_tuples(instances: list[RelationInstance]) -> set[tuple]:
    return {
        (inst.doc_id, inst.label, inst.chem.id, inst.gene.id)
        for inst in instances if inst.label != NEG
    }


def write_predictions(instances: list[RelationInstance], path):
    """TSV output, NEG rows omitted, byte-stable for identical input."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            if inst.label == NEG:
                continue
            fh.write("%s\t%s\tArg1:%s\tArg2:%s\n"
                     % (inst.doc_id, inst.label, inst.chem.id, inst.gene.id))


def read_predictions(path) -> set[tuple]:
    out = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4 or not parts[2].startswith("Arg1:") or not parts[3].startswith("Arg2:"):
                raise ParseError("line %d: malformed prediction row %r" % (lineno, line))
            out.add((parts[0], parts[1], parts[2][5:], parts[3][5:]))
    return out
