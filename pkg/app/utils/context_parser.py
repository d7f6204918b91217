"""
Context parsing: marked sentences into bounded, masked term sequences.

Each sentence term falls into exactly one group:
- entity masks: $E_subj$ / $E_obj$ for the attitude participants, $E$ otherwise
- frames: lexicon matches carrying an A0->A1 polarity; a directly preceding
  negation particle is absorbed into the frame and inverts its polarity
- tokens: punctuation, numbers and urls, replaced by symbols
- words: everything else, lemmatized

A context keeps one sentence, both participants within `pair_distance` terms,
and at most `n_max` terms (a window centered on the participants).
"""
import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Protocol, Sequence, Tuple

from app.utils.document_processor import (
    CorpusDocument,
    EntityMention,
    FrameEntry,
    Label,
    parse_markup,
)

logger = logging.getLogger(__name__)

MASK_SUBJECT = "$E_subj$"
MASK_OBJECT = "$E_obj$"
MASK_OTHER = "$E$"

TOKEN_SYMBOLS = {",": "<COMMA>", ".": "<DOT>"}
TOKEN_PUNCT = "<PUNCT>"
TOKEN_NUMBER = "<NUM>"
TOKEN_URL = "<URL>"

WORD_PATTERN = re.compile(
    r"(?P<url>https?://\S+|www\.\S+)"
    r"|(?P<number>\d+(?:[.,]\d+)*)"
    r"|(?P<word>\w+(?:[-']\w+)*)"
    r"|(?P<punct>[^\w\s])"
)


class TermGroup(str, Enum):
    ENTITY_SUBJECT = "entity_subject"
    ENTITY_OBJECT = "entity_object"
    ENTITY_OTHER = "entity_other"
    FRAME = "frame"
    TOKEN = "token"
    WORD = "word"

    @property
    def is_entity(self) -> bool:
        return self in (TermGroup.ENTITY_SUBJECT, TermGroup.ENTITY_OBJECT, TermGroup.ENTITY_OTHER)


@dataclass(frozen=True)
class Term:
    group: TermGroup
    surface: str
    position: int
    polarity: Optional[Label] = None
    entity_id: Optional[str] = None
    synonym_group: Optional[str] = None


@dataclass
class Context:
    terms: List[Term]
    subj_pos: int
    obj_pos: int
    label: Label
    doc_id: str = ""
    sentence_id: int = 0
    subject_id: str = ""
    object_id: str = ""

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def subj_group(self) -> Optional[str]:
        return self.terms[self.subj_pos].synonym_group

    @property
    def obj_group(self) -> Optional[str]:
        return self.terms[self.obj_pos].synonym_group

    def surfaces(self) -> List[str]:
        return [term.surface for term in self.terms]


class ContextRejectedError(ValueError):
    """A candidate context violates the participant or distance bounds."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class Lemmatizer(Protocol):
    def lemmatize(self, word: str) -> str:
        ...


class IdentityLemmatizer:
    """Lowercasing stand-in for a morphological analyzer."""

    def lemmatize(self, word: str) -> str:
        return word.lower()


class TableLemmatizer:
    """Lookup-table lemmatizer falling back to lowercasing."""

    def __init__(self, table: Mapping[str, str]):
        self.table = {k.lower(): v.lower() for k, v in table.items()}

    def lemmatize(self, word: str) -> str:
        lowered = word.lower()
        return self.table.get(lowered, lowered)


class FrameLexicon:
    """Frame entries keyed by their lemmatized token sequence."""

    def __init__(self, entries: Iterable[FrameEntry], lemmatizer: Optional[Lemmatizer] = None):
        self.lemmatizer = lemmatizer or IdentityLemmatizer()
        self.entries: Dict[Tuple[str, ...], Label] = {}
        for entry in entries:
            key = tuple(self.lemmatizer.lemmatize(w) for w in entry.entry.split())
            if key:
                self.entries[key] = entry.polarity
        self.max_length = max((len(k) for k in self.entries), default=0)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str], lemmatizer: Optional[Lemmatizer] = None):
        return cls([FrameEntry(entry=k, polarity=Label(v)) for k, v in mapping.items()], lemmatizer)

    def __len__(self) -> int:
        return len(self.entries)

    def match(self, lemmas: Sequence[Optional[str]], start: int) -> Tuple[int, Optional[Label]]:
        """Longest entry starting at `start`; returns (length, polarity) or (0, None)."""
        for length in range(min(self.max_length, len(lemmas) - start), 0, -1):
            window = lemmas[start:start + length]
            if None in window:
                continue
            polarity = self.entries.get(tuple(window))
            if polarity is not None:
                return length, polarity
        return 0, None


def tokenize(text: str) -> List[Tuple[str, str]]:
    """Split plain text into (kind, surface) pairs; kind is url/number/word/punct."""
    return [(m.lastgroup, m.group()) for m in WORD_PATTERN.finditer(text)]


class TermParser:
    """
    Converts marked sentences into term sequences and contexts.

    Parsing is deterministic given the sentence, lexicon and lemmatizer.
    """

    def __init__(
        self,
        frame_lexicon: FrameLexicon,
        lemmatizer: Optional[Lemmatizer] = None,
        negation_particles: Sequence[str] = ("не", "not"),
        n_max: int = 50,
        pair_distance: int = 10,
    ):
        if pair_distance >= n_max:
            raise ValueError(f"pair_distance ({pair_distance}) must be below n_max ({n_max})")
        self.frame_lexicon = frame_lexicon
        self.lemmatizer = lemmatizer or IdentityLemmatizer()
        self.negation_particles = {p.lower() for p in negation_particles}
        self.n_max = n_max
        self.pair_distance = pair_distance

    def parse_terms(self, sentence: str) -> List[Term]:
        """Parse a marked sentence; every entity mention becomes an $E$ term."""
        raw: List[Tuple[str, str, Optional[EntityMention]]] = []
        for piece in parse_markup(sentence):
            if isinstance(piece, EntityMention):
                raw.append(("entity", piece.surface, piece))
            else:
                raw.extend((kind, surface, None) for kind, surface in tokenize(piece))

        lemmas = [self.lemmatizer.lemmatize(s) if kind == "word" else None for kind, s, _ in raw]
        terms: List[Term] = []
        i = 0
        while i < len(raw):
            kind, surface, mention = raw[i]
            if kind == "entity":
                terms.append(Term(
                    TermGroup.ENTITY_OTHER, MASK_OTHER, len(terms),
                    entity_id=mention.entity_id, synonym_group=mention.synonym_group,
                ))
                i += 1
                continue
            if kind == "word":
                length, polarity = self.frame_lexicon.match(lemmas, i)
                if length:
                    lemma = " ".join(lemmas[i:i + length])
                    if terms and terms[-1].group is TermGroup.WORD and terms[-1].surface in self.negation_particles:
                        negation = terms.pop()
                        lemma = f"{negation.surface}-{lemma}"
                        polarity = polarity.inverted()
                    terms.append(Term(TermGroup.FRAME, lemma, len(terms), polarity=polarity))
                    i += length
                    continue
                terms.append(Term(TermGroup.WORD, lemmas[i], len(terms)))
            elif kind == "number":
                terms.append(Term(TermGroup.TOKEN, TOKEN_NUMBER, len(terms)))
            elif kind == "url":
                terms.append(Term(TermGroup.TOKEN, TOKEN_URL, len(terms)))
            else:
                terms.append(Term(TermGroup.TOKEN, TOKEN_SYMBOLS.get(surface, TOKEN_PUNCT), len(terms)))
            i += 1
        return terms

    def parse_context(
        self,
        sentence,
        pair: Tuple[int, int],
        label: Label = Label.NEUTRAL,
        doc_id: str = "",
        sentence_id: int = 0,
    ) -> Context:
        """
        Build a context for one ordered participant pair.

        Args:
            sentence: marked sentence text, or its already parsed terms
            pair: (subject, object) ordinals among the sentence's entity mentions

        Raises:
            ContextRejectedError: missing participant or distance above the bound
        """
        terms = self.parse_terms(sentence) if isinstance(sentence, str) else list(sentence)
        entity_positions = [t.position for t in terms if t.group.is_entity]
        subj_ord, obj_ord = pair
        if not (0 <= subj_ord < len(entity_positions) and 0 <= obj_ord < len(entity_positions)):
            raise ContextRejectedError(
                f"participant ordinals {pair} outside the {len(entity_positions)} entity mentions"
            )
        if subj_ord == obj_ord:
            raise ContextRejectedError(f"subject and object are the same mention ({subj_ord})")

        subj_pos, obj_pos = entity_positions[subj_ord], entity_positions[obj_ord]
        distance = abs(subj_pos - obj_pos)
        if distance > self.pair_distance:
            raise ContextRejectedError(
                f"pair distance {distance} exceeds the bound {self.pair_distance}"
            )

        subject, obj = terms[subj_pos], terms[obj_pos]
        terms[subj_pos] = replace(subject, group=TermGroup.ENTITY_SUBJECT, surface=MASK_SUBJECT)
        terms[obj_pos] = replace(obj, group=TermGroup.ENTITY_OBJECT, surface=MASK_OBJECT)

        start = self._window_start(len(terms), subj_pos, obj_pos)
        window = [replace(t, position=t.position - start) for t in terms[start:start + self.n_max]]
        return Context(
            terms=window,
            subj_pos=subj_pos - start,
            obj_pos=obj_pos - start,
            label=label,
            doc_id=doc_id,
            sentence_id=sentence_id,
            subject_id=subject.entity_id or "",
            object_id=obj.entity_id or "",
        )

    def _window_start(self, length: int, subj_pos: int, obj_pos: int) -> int:
        if length <= self.n_max:
            return 0
        midpoint = (subj_pos + obj_pos) // 2
        return min(max(midpoint - self.n_max // 2, 0), length - self.n_max)

    def contexts_for_pair(
        self,
        parsed_sentences: Sequence[Tuple[int, List[Term]]],
        subject_group: str,
        object_group: str,
        label: Label,
        doc_id: str = "",
    ) -> Tuple[List[Context], int]:
        """
        One context per sentence in which both participants' synonym groups
        occur within the distance bound; the closest mention pair is used.

        Returns the contexts and the number of rejected candidate sentences.
        """
        contexts: List[Context] = []
        rejected = 0
        for sentence_id, terms in parsed_sentences:
            entities = [t for t in terms if t.group.is_entity]
            subjects = [k for k, t in enumerate(entities) if t.synonym_group == subject_group]
            objects = [k for k, t in enumerate(entities) if t.synonym_group == object_group]
            candidates = [(s, o) for s in subjects for o in objects if s != o]
            if not candidates:
                continue
            best = min(
                candidates,
                key=lambda p: (abs(entities[p[0]].position - entities[p[1]].position), p),
            )
            try:
                contexts.append(self.parse_context(terms, best, label, doc_id, sentence_id))
            except ContextRejectedError as e:
                rejected += 1
                logger.debug(f"Rejected context in {doc_id}#{sentence_id}: {e.reason}")
        return contexts, rejected


@dataclass
class DocumentContexts:
    """Contexts of one document keyed by ordered entity pair."""
    doc_id: str
    by_pair: Dict[Tuple[str, str], List[Context]] = field(default_factory=dict)
    rejected: int = 0


class ContextExtractor:
    """Main context extraction interface over corpus documents."""

    def __init__(self, parser: TermParser):
        self.parser = parser

    def parse_document(self, document: CorpusDocument) -> List[Tuple[int, List[Term]]]:
        return [(sid, self.parser.parse_terms(s)) for sid, s in zip(document.ids(), document.sentences)]

    def extract(
        self,
        document: CorpusDocument,
        pairs: Mapping[Tuple[str, str], Label],
        parsed: Optional[List[Tuple[int, List[Term]]]] = None,
    ) -> DocumentContexts:
        """Contexts for each (subject id, object id) pair with the given label."""
        parsed = parsed if parsed is not None else self.parse_document(document)
        groups = document.entity_groups()
        result = DocumentContexts(document.doc_id)
        for (subject, obj), label in pairs.items():
            subject_group = groups.get(subject, subject)
            object_group = groups.get(obj, obj)
            if subject_group == object_group:
                result.by_pair[(subject, obj)] = []
                continue
            contexts, rejected = self.parser.contexts_for_pair(
                parsed, subject_group, object_group, label, document.doc_id
            )
            for context in contexts:
                context.subject_id, context.object_id = subject, obj
            result.by_pair[(subject, obj)] = contexts
            result.rejected += rejected
        if result.rejected:
            logger.debug(f"{document.doc_id}: rejected {result.rejected} candidate contexts")
        return result
