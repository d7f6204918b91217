"""
Distant-supervision annotation of news documents.

Two factors label an attitude expressed in a news title:
- frame-based: the title has the structure `Subject {frame}_k Object` with
  k >= 1 frame entries between two neighbouring entity mentions; the
  attitude is positive iff every frame's A0->A1 polarity is positive
- pair-based: an ordered entity pair of the title (subject mentioned first)
  is present in a list of pairs with preassigned polarities

Content sentences that do not mention both participants (or members of their
synonym groups) are discarded; the title is always kept as a context.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from app.utils.context_parser import Term, TermGroup, TermParser
from app.utils.document_processor import (
    AttitudeRecord,
    CorpusDocument,
    EntityMention,
    Label,
    NewsDocument,
    parse_markup,
)

logger = logging.getLogger(__name__)

TITLE_SENTENCE_ID = 0


class Factor(str, Enum):
    FRAME_BASED = "frame_based"
    PAIR_BASED = "pair_based"
    BOTH = "both"


class AnnotationMode(str, Enum):
    BOTH_FACTORS = "both_factors"
    FRAME_ONLY = "frame_only"
    PAIR_ONLY = "pair_only"


@dataclass
class LabeledAttitude:
    subject: str
    object: str
    polarity: Label
    factor: Factor
    subject_group: str
    object_group: str
    sentence_ids: List[int] = field(default_factory=lambda: [TITLE_SENTENCE_ID])

    @property
    def key(self) -> Tuple[str, str]:
        return self.subject, self.object


@dataclass
class AnnotationStats:
    documents: int = 0
    attitudes: int = 0
    conflicts: int = 0
    by_polarity: Counter = field(default_factory=Counter)
    by_factor: Counter = field(default_factory=Counter)

    def add(self, attitude: LabeledAttitude):
        self.attitudes += 1
        self.by_polarity[attitude.polarity.value] += 1
        self.by_factor[attitude.factor.value] += 1

    def summary(self) -> str:
        polarity = ", ".join(f"{k}={v}" for k, v in sorted(self.by_polarity.items()))
        factor = ", ".join(f"{k}={v}" for k, v in sorted(self.by_factor.items()))
        return (
            f"documents={self.documents} attitudes={self.attitudes} conflicts={self.conflicts} "
            f"polarity[{polarity}] factor[{factor}]"
        )


class PairList:
    """Ordered entity pairs with preassigned polarities."""

    def __init__(self, entries: Iterable[Tuple[str, str, Label]] = ()):
        self.entries: Dict[Tuple[str, str], Label] = {}
        for subject, obj, polarity in entries:
            if (subject, obj) in self.entries:
                raise ValueError(f"Duplicate pair list entry {subject}->{obj}")
            self.entries[(subject, obj)] = polarity

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, subject: Term, obj: Term) -> Optional[Label]:
        """Match by entity id first, then by synonym group."""
        polarity = self.entries.get((subject.entity_id, obj.entity_id))
        if polarity is None:
            polarity = self.entries.get((subject.synonym_group, obj.synonym_group))
        return polarity


def _entities(terms: Sequence[Term]) -> List[Term]:
    return [t for t in terms if t.group.is_entity]


def frame_based_label(title_terms: Sequence[Term]) -> Optional[LabeledAttitude]:
    """First neighbouring entity pair of the title with at least one frame between them."""
    entities = _entities(title_terms)
    for subject, obj in zip(entities, entities[1:]):
        if subject.synonym_group == obj.synonym_group:
            continue
        frames = [
            t for t in title_terms[subject.position + 1:obj.position] if t.group is TermGroup.FRAME
        ]
        if not frames:
            continue
        positive = all(f.polarity is Label.POSITIVE for f in frames)
        return LabeledAttitude(
            subject.entity_id,
            obj.entity_id,
            Label.POSITIVE if positive else Label.NEGATIVE,
            Factor.FRAME_BASED,
            subject.synonym_group,
            obj.synonym_group,
        )
    return None


def pair_based_label(title_terms: Sequence[Term], pair_list: PairList) -> List[LabeledAttitude]:
    """Listed ordered pairs of title entities, the subject mentioned before the object."""
    entities = _entities(title_terms)
    result: List[LabeledAttitude] = []
    seen = set()
    for i, subject in enumerate(entities):
        for obj in entities[i + 1:]:
            key = (subject.synonym_group, obj.synonym_group)
            if key[0] == key[1] or key in seen:
                continue
            polarity = pair_list.lookup(subject, obj)
            if polarity is None:
                continue
            seen.add(key)
            result.append(LabeledAttitude(
                subject.entity_id, obj.entity_id, polarity, Factor.PAIR_BASED,
                subject.synonym_group, obj.synonym_group,
            ))
    return result


def filter_sentences(document: NewsDocument, attitude: LabeledAttitude) -> List[int]:
    """Ids (from 1) of content sentences mentioning both participants' synonym groups."""
    retained = []
    for sentence_id, sentence in enumerate(document.sentences, start=1):
        groups = {p.synonym_group for p in parse_markup(sentence) if isinstance(p, EntityMention)}
        if attitude.subject_group in groups and attitude.object_group in groups:
            retained.append(sentence_id)
    return retained


class Annotator:
    """Builds a distant-supervision corpus from news documents."""

    def __init__(
        self,
        parser: TermParser,
        pair_list: Optional[PairList] = None,
        mode: AnnotationMode = AnnotationMode.BOTH_FACTORS,
    ):
        self.parser = parser
        self.pair_list = pair_list or PairList()
        self.mode = AnnotationMode(mode)

    def label_title(self, document: NewsDocument) -> Tuple[List[LabeledAttitude], int]:
        """Attitudes of one title under the configured mode, and the number of conflicts."""
        terms = self.parser.parse_terms(document.title)
        by_frame = frame_based_label(terms)
        if self.mode is AnnotationMode.FRAME_ONLY:
            return ([by_frame] if by_frame else []), 0
        by_pair = pair_based_label(terms, self.pair_list)
        if self.mode is AnnotationMode.PAIR_ONLY:
            return by_pair, 0

        if by_frame is None:
            return [], 0
        for candidate in by_pair:
            if (candidate.subject_group, candidate.object_group) != (by_frame.subject_group, by_frame.object_group):
                continue
            if candidate.polarity is not by_frame.polarity:
                logger.debug(
                    f"{document.doc_id}: factors disagree on {by_frame.subject}->{by_frame.object} "
                    f"({by_frame.polarity.value} vs {candidate.polarity.value})"
                )
                return [], 1
            by_frame.factor = Factor.BOTH
            return [by_frame], 0
        return [], 0

    def annotate_document(self, document: NewsDocument) -> Tuple[Optional[CorpusDocument], List[LabeledAttitude], int]:
        attitudes, conflicts = self.label_title(document)
        if not attitudes:
            return None, [], conflicts

        retained = set()
        for attitude in attitudes:
            attitude.sentence_ids = [TITLE_SENTENCE_ID] + filter_sentences(document, attitude)
            retained.update(attitude.sentence_ids[1:])
            if len(attitude.sentence_ids) == 1:
                logger.debug(f"{document.doc_id}: {attitude.subject}->{attitude.object} supported by the title only")

        sentence_ids = [TITLE_SENTENCE_ID] + sorted(retained)
        sentences = [document.title] + [document.sentences[i - 1] for i in sentence_ids[1:]]
        corpus_document = CorpusDocument(
            doc_id=document.doc_id,
            sentences=sentences,
            sentence_ids=sentence_ids,
            attitudes=[AttitudeRecord(subject=a.subject, object=a.object, label=a.polarity) for a in attitudes],
            split="train",
            source="ds",
        )
        return corpus_document, attitudes, conflicts

    def annotate_corpus(self, documents: Iterable[NewsDocument]) -> Tuple[List[CorpusDocument], AnnotationStats]:
        stats = AnnotationStats()
        corpus: List[CorpusDocument] = []
        for document in documents:
            stats.documents += 1
            corpus_document, attitudes, conflicts = self.annotate_document(document)
            stats.conflicts += conflicts
            for attitude in attitudes:
                stats.add(attitude)
            if corpus_document is not None:
                corpus.append(corpus_document)
        logger.info(f"Annotation ({self.mode.value}): {stats.summary()}")
        if stats.conflicts:
            logger.warning(f"Dropped {stats.conflicts} attitudes with conflicting factor polarities")
        return corpus, stats
