"""
Seeded synthetic data for desk-scale runs.

A small "world" of directed relations between entity synonym groups fixes the
polarity of every attitude. From it the generator writes:
- news documents whose titles either follow `[Speaker:] Subject {frames} Object`
  (gold attitude implied by the frame polarities) or do not match it
- a manually-annotated-style corpus with train/test split markers, where
  attitude sentences carry frames of the relation's polarity and other entity
  pairs only co-occur in frame-free sentences
- the lexicons, pair list, POS table and a toy word embedding model needed to
  run every command end to end

Gold labels are decidable from frame polarities: a negative attitude always
has at least one negative (or negated positive) frame, a positive one has
only positive frames.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.services.embeddings.embedding_manager import EmbeddingModel
from app.utils.document_processor import (
    AttitudeRecord,
    CorpusDocument,
    DocumentProcessor,
    FrameEntry,
    Label,
    NewsDocument,
    mark_entity,
)

logger = logging.getLogger(__name__)

# (entity id, synonym group, surface)
ENTITIES = (
    ("usa", "usa", "USA"),
    ("america", "usa", "America"),
    ("russia", "russia", "Russia"),
    ("moscow", "russia", "Moscow"),
    ("georgia", "georgia", "Georgia"),
    ("ukraine", "ukraine", "Ukraine"),
    ("germany", "germany", "Germany"),
    ("berlin", "germany", "Berlin"),
    ("france", "france", "France"),
    ("china", "china", "China"),
    ("beijing", "china", "Beijing"),
    ("japan", "japan", "Japan"),
    ("nato", "nato", "NATO"),
    ("eu", "eu", "EU"),
    ("turkey", "turkey", "Turkey"),
    ("poland", "poland", "Poland"),
    ("mccain", "mccain", "McCain"),
    ("obama", "obama", "Obama"),
    ("putin", "putin", "Putin"),
    ("merkel", "merkel", "Merkel"),
)
SPEAKERS = ("mccain", "obama", "putin", "merkel")

POSITIVE_FRAMES = ("support", "praise", "welcome", "thank", "help", "approve", "trust", "continue")
NEGATIVE_FRAMES = ("condemn", "accuse", "criticize", "threaten", "sanction", "attack", "blame", "reject")
NEGATION = "not"

NOUNS = ("talks", "meeting", "statement", "border", "summit", "agreement", "troops", "minister", "plan", "report")
VERBS = ("said", "met", "visited", "discussed", "announced", "noted")
PREPOSITIONS = ("with", "about", "in", "on", "at", "for", "after")
SENTIMENT_WORDS = {
    "good": Label.POSITIVE,
    "great": Label.POSITIVE,
    "friendly": Label.POSITIVE,
    "bad": Label.NEGATIVE,
    "terrible": Label.NEGATIVE,
    "hostile": Label.NEGATIVE,
}
FILLERS = ("yesterday", "officials", "reported", "the", "also", "new")
FILLER_TAGS = {"yesterday": "adv", "officials": "noun", "reported": "verb", "also": "adv", "new": "adj"}

Relation = Tuple[str, str, Label]


class GeneratorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    documents: int = Field(default=200, ge=0)
    main_documents: int = Field(default=40, ge=0)
    attitudes_per_document: int = Field(default=3, ge=1)
    sentences_min: int = Field(default=3, ge=0)
    sentences_max: int = Field(default=8, ge=0)
    relation_count: int = Field(default=60, ge=1)
    match_rate: float = Field(default=0.8, ge=0.0, le=1.0)
    negation_rate: float = Field(default=0.1, ge=0.0, le=1.0)
    pair_coverage: float = Field(default=0.9, ge=0.0, le=1.0)
    sentiment_word_rate: float = Field(default=0.3, ge=0.0, le=1.0)
    test_share: float = Field(default=0.25, ge=0.0, lt=1.0)
    positive_only: bool = False
    d_word: int = Field(default=32, ge=1)


@dataclass
class GoldAttitude:
    doc_id: str
    subject: str
    object: str
    label: Label


@dataclass
class SyntheticBundle:
    news: List[NewsDocument] = field(default_factory=list)
    gold: List[GoldAttitude] = field(default_factory=list)
    corpus: List[CorpusDocument] = field(default_factory=list)
    frames: List[FrameEntry] = field(default_factory=list)
    pair_list: List[Relation] = field(default_factory=list)
    pos_table: Dict[str, str] = field(default_factory=dict)
    sentiment_lexicon: Dict[str, Label] = field(default_factory=dict)
    embeddings: Optional[EmbeddingModel] = None

    def write(self, out_dir: Path, processor: Optional[DocumentProcessor] = None) -> Dict[str, Path]:
        """Write every artifact into `out_dir`; returns the path of each."""
        processor = processor or DocumentProcessor()
        out_dir = Path(out_dir)
        paths = {
            "news": out_dir / "news.jsonl",
            "gold": out_dir / "gold.tsv",
            "corpus": out_dir / "corpus.jsonl",
            "frames": out_dir / "frames.jsonl",
            "pairs": out_dir / "pairs.tsv",
            "pos": out_dir / "pos.tsv",
            "sentiment": out_dir / "sentiment.tsv",
            "embeddings": out_dir / "embeddings.txt",
        }
        processor.write_news(paths["news"], self.news)
        processor.write_tsv(
            paths["gold"], [(g.doc_id, g.subject, g.object, g.label.value) for g in self.gold],
            ["doc_id", "subject", "object", "label"],
        )
        processor.write_corpus(paths["corpus"], self.corpus)
        processor.write_frame_lexicon(paths["frames"], self.frames)
        processor.write_tsv(paths["pairs"], [(s, o, p.value) for s, o, p in self.pair_list], ["subject", "object", "polarity"])
        processor.write_tsv(paths["pos"], sorted(self.pos_table.items()), ["word", "tag"])
        processor.write_tsv(
            paths["sentiment"], [(w, l.value) for w, l in sorted(self.sentiment_lexicon.items())], ["term", "label"]
        )
        self.embeddings.save(paths["embeddings"])
        logger.info(f"Wrote synthetic bundle to {out_dir}")
        return paths


class SyntheticGenerator:
    """All randomness flows from one seed."""

    def __init__(self, seed: int, config: Optional[GeneratorConfig] = None):
        self.seed = seed
        self.config = config or GeneratorConfig()
        if self.config.sentences_max < self.config.sentences_min:
            raise ValueError(
                f"sentences_max ({self.config.sentences_max}) is below sentences_min ({self.config.sentences_min})"
            )
        self.rng = np.random.default_rng(seed)
        self.groups: Dict[str, List[Tuple[str, str]]] = {}
        for entity_id, group, surface in ENTITIES:
            self.groups.setdefault(group, []).append((entity_id, surface))
        self.world = self._build_world()

    def _choice(self, items: Sequence):
        return items[int(self.rng.integers(len(items)))]

    def _build_world(self) -> List[Relation]:
        groups = sorted(self.groups)
        candidates = [(a, b) for a in groups for b in groups if a != b]
        count = min(self.config.relation_count, len(candidates))
        picked = self.rng.choice(len(candidates), size=count, replace=False)
        world = []
        for index in sorted(int(i) for i in picked):
            a, b = candidates[index]
            if self.config.positive_only:
                label = Label.POSITIVE
            else:
                label = Label.POSITIVE if self.rng.random() < 0.5 else Label.NEGATIVE
            world.append((a, b, label))
        return world

    def mention(self, group: str) -> Tuple[str, str]:
        """(marked text, entity id) of a random member of the group."""
        entity_id, surface = self._choice(self.groups[group])
        return mark_entity(surface, entity_id, group), entity_id

    def frame_phrase(self, label: Label) -> str:
        k = int(self.rng.integers(1, 3))
        if label is Label.POSITIVE:
            return " ".join(self._choice(POSITIVE_FRAMES) for _ in range(k))
        words = [self._choice(POSITIVE_FRAMES if self.rng.random() < 0.5 else NEGATIVE_FRAMES) for _ in range(k)]
        slot = int(self.rng.integers(k))
        if self.rng.random() < self.config.negation_rate:
            words[slot] = f"{NEGATION} {self._choice(POSITIVE_FRAMES)}"
        else:
            words[slot] = self._choice(NEGATIVE_FRAMES)
        return " ".join(words)

    def _decoration(self) -> str:
        words = [self._choice(PREPOSITIONS), self._choice(NOUNS)]
        if self.rng.random() < self.config.sentiment_word_rate:
            words.insert(1, self._choice(sorted(SENTIMENT_WORDS)))
        return " ".join(words)

    def attitude_sentence(self, relation: Relation) -> str:
        subject, _ = self.mention(relation[0])
        obj, _ = self.mention(relation[1])
        prefix = f"{self._choice(FILLERS)} " if self.rng.random() < 0.5 else ""
        return f"{prefix}{subject} {self.frame_phrase(relation[2])} {obj} {self._decoration()} ."

    def cooccurrence_sentence(self, a: str, b: str) -> str:
        first, _ = self.mention(a)
        second, _ = self.mention(b)
        return f"{first} {self._choice(VERBS)} {self._choice(PREPOSITIONS)} {second} {self._decoration()} ."

    def single_sentence(self, group: str) -> str:
        entity, _ = self.mention(group)
        return f"{entity} {self._choice(VERBS)} {self._decoration()} ."

    def filler_sentence(self) -> str:
        return f"{self._choice(FILLERS)} {self._choice(NOUNS)} {self._choice(VERBS)} {self._decoration()} ."

    def _free_pair(self, blocked: set) -> Tuple[str, str]:
        groups = sorted(self.groups)
        for _ in range(100):
            a, b = self._choice(groups), self._choice(groups)
            if a != b and (a, b) not in blocked and (b, a) not in blocked:
                return a, b
        raise ValueError("No entity pair left for a neutral co-occurrence sentence")

    def _sentence_count(self) -> int:
        return int(self.rng.integers(self.config.sentences_min, self.config.sentences_max + 1))

    def news_document(self, index: int) -> Tuple[NewsDocument, List[GoldAttitude]]:
        doc_id = f"news-{index:05d}"
        relation = self._choice(self.world)
        subject, subject_id = self.mention(relation[0])
        obj, object_id = self.mention(relation[1])
        gold = []
        if self.rng.random() < self.config.match_rate:
            title = f"{subject} {self.frame_phrase(relation[2])} {obj}"
            speakers = [s for s in SPEAKERS if s not in relation[:2]]
            if self.rng.random() < 0.5:
                speaker, _ = self.mention(self._choice(speakers))
                title = f"{speaker}: {title}"
            gold.append(GoldAttitude(doc_id, subject_id, object_id, relation[2]))
        else:
            title = f"{subject} {self._choice(VERBS)} {self._choice(PREPOSITIONS)} {obj}"

        blocked = {relation[:2]}
        sentences = []
        for _ in range(self._sentence_count()):
            draw = self.rng.random()
            if draw < 0.35:
                sentences.append(self.attitude_sentence(relation))
            elif draw < 0.55:
                sentences.append(self.cooccurrence_sentence(*self._free_pair(blocked)))
            elif draw < 0.8:
                sentences.append(self.single_sentence(self._choice(relation[:2])))
            else:
                sentences.append(self.filler_sentence())
        return NewsDocument(doc_id=doc_id, title=title, sentences=sentences), gold

    def corpus_document(self, index: int, split: str) -> CorpusDocument:
        relations: List[Relation] = []
        blocked = set()
        for position in self.rng.permutation(len(self.world)):
            relation = self.world[int(position)]
            if relation[:2] in blocked or relation[1::-1] in blocked:
                continue
            relations.append(relation)
            blocked.add(relation[:2])
            if len(relations) == self.config.attitudes_per_document:
                break

        sentences = []
        for relation in relations:
            sentences.extend(self.attitude_sentence(relation) for _ in range(int(self.rng.integers(1, 3))))
        for _ in range(self._sentence_count()):
            draw = self.rng.random()
            if draw < 0.5:
                sentences.append(self.cooccurrence_sentence(*self._free_pair(blocked)))
            elif draw < 0.8:
                sentences.append(self.single_sentence(self._choice(sorted(self.groups))))
            else:
                sentences.append(self.filler_sentence())
        order = self.rng.permutation(len(sentences))
        return CorpusDocument(
            doc_id=f"doc-{index:04d}",
            sentences=[sentences[int(i)] for i in order],
            attitudes=[AttitudeRecord(subject=a, object=b, label=label) for a, b, label in relations],
            split=split,
            source="main",
        )

    def embedding_model(self) -> EmbeddingModel:
        """Gaussian word vectors; frames and sentiment words share a polarity direction."""
        d = self.config.d_word
        rng = np.random.default_rng([self.seed, 2])
        directions = {
            Label.POSITIVE: rng.normal(0.0, 1.0, d),
            Label.NEGATIVE: rng.normal(0.0, 1.0, d),
        }
        vocabulary = {}
        words = NOUNS + VERBS + PREPOSITIONS + FILLERS + (NEGATION,) + tuple(sorted(SENTIMENT_WORDS))
        for word in words + POSITIVE_FRAMES + NEGATIVE_FRAMES:
            vocabulary[word] = rng.normal(0.0, 1.0 / np.sqrt(d), d)
        for word in POSITIVE_FRAMES:
            vocabulary[word] = vocabulary[word] + directions[Label.POSITIVE] / np.sqrt(d)
        for word in NEGATIVE_FRAMES:
            vocabulary[word] = vocabulary[word] + directions[Label.NEGATIVE] / np.sqrt(d)
        for word, label in SENTIMENT_WORDS.items():
            vocabulary[word] = vocabulary[word] + 0.5 * directions[label] / np.sqrt(d)
        return EmbeddingModel(vocabulary, d)

    def news(self) -> Tuple[List[NewsDocument], List[GoldAttitude]]:
        documents, gold = [], []
        for index in range(self.config.documents):
            document, attitudes = self.news_document(index)
            documents.append(document)
            gold.extend(attitudes)
        return documents, gold

    def bundle(self) -> SyntheticBundle:
        news, gold = self.news()
        test_count = int(round(self.config.main_documents * self.config.test_share))
        train_count = self.config.main_documents - test_count
        corpus = [
            self.corpus_document(i, "train" if i < train_count else "test")
            for i in range(self.config.main_documents)
        ]
        pair_list = [r for r in self.world if self.rng.random() < self.config.pair_coverage]
        pos_table = {w: "noun" for w in NOUNS}
        pos_table.update({w: "verb" for w in VERBS})
        pos_table.update({w: "prep" for w in PREPOSITIONS})
        pos_table.update({w: "adj" for w in SENTIMENT_WORDS})
        pos_table.update(FILLER_TAGS)
        frames = [FrameEntry(entry=w, polarity=Label.POSITIVE) for w in POSITIVE_FRAMES]
        frames += [FrameEntry(entry=w, polarity=Label.NEGATIVE) for w in NEGATIVE_FRAMES]
        bundle = SyntheticBundle(
            news=news,
            gold=gold,
            corpus=corpus,
            frames=frames,
            pair_list=pair_list,
            pos_table=pos_table,
            sentiment_lexicon=dict(SENTIMENT_WORDS),
            embeddings=self.embedding_model(),
        )
        logger.info(
            f"Generated {len(news)} news documents ({len(gold)} gold attitudes), "
            f"{len(corpus)} corpus documents, {len(pair_list)} listed pairs"
        )
        return bundle


def generate_synthetic(seed: int, config: Optional[GeneratorConfig] = None) -> Tuple[List[NewsDocument], List[GoldAttitude]]:
    """News corpus and the gold attitudes implied by its titles."""
    return SyntheticGenerator(seed, config).news()


def generate_bundle(seed: int, config: Optional[GeneratorConfig] = None) -> SyntheticBundle:
    return SyntheticGenerator(seed, config).bundle()
