"""
Corpus, news and lexicon file formats.

Supported inputs:
- Corpus (JSON lines): one document per record with marked sentences and
  labeled attitudes; the training, evaluation and DS-annotator output format.
- News (JSON lines): doc_id, title and content sentences for the annotator.
- Frame lexicon (JSON lines): entry text, A0->A1 polarity, weight.
- Sentiment lexicon, POS table, lemma table, pair list (tab-separated).

Entities are marked inline as [[surface|entity_id|synonym_group]]; the
synonym group may be omitted, in which case it equals the entity id.
"""
import csv
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

ENTITY_MARKUP = re.compile(r"\[\[([^|\]]+)\|([^|\]]+)(?:\|([^|\]]+))?\]\]")


class Label(str, Enum):
    POSITIVE = "pos"
    NEGATIVE = "neg"
    NEUTRAL = "neu"

    def inverted(self) -> "Label":
        if self is Label.POSITIVE:
            return Label.NEGATIVE
        if self is Label.NEGATIVE:
            return Label.POSITIVE
        return self


@dataclass(frozen=True)
class EntityMention:
    """An inline-marked named entity occurrence."""
    surface: str
    entity_id: str
    synonym_group: str


def parse_markup(text: str) -> List[Union[str, EntityMention]]:
    """Split a marked sentence into plain text chunks and entity mentions."""
    pieces: List[Union[str, EntityMention]] = []
    cursor = 0
    for match in ENTITY_MARKUP.finditer(text):
        if match.start() > cursor:
            pieces.append(text[cursor:match.start()])
        surface, entity_id, group = match.group(1), match.group(2), match.group(3)
        pieces.append(EntityMention(surface.strip(), entity_id.strip(), (group or entity_id).strip()))
        cursor = match.end()
    if cursor < len(text):
        pieces.append(text[cursor:])
    return pieces


def mark_entity(surface: str, entity_id: str, synonym_group: Optional[str] = None) -> str:
    return f"[[{surface}|{entity_id}|{synonym_group or entity_id}]]"


class Record(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AttitudeRecord(Record):
    subject: str
    object: str
    label: Label

    @property
    def key(self) -> Tuple[str, str]:
        return self.subject, self.object


class CorpusDocument(Record):
    """A document of the training/evaluation corpus."""
    doc_id: str
    sentences: List[str]
    sentence_ids: Optional[List[int]] = None
    attitudes: List[AttitudeRecord] = Field(default_factory=list)
    split: str = "train"
    source: str = "main"

    @property
    def sentence_count(self) -> int:
        return len(self.sentences)

    def ids(self) -> List[int]:
        return self.sentence_ids if self.sentence_ids is not None else list(range(len(self.sentences)))

    def entity_groups(self) -> Dict[str, str]:
        """Map every entity id mentioned in the document to its synonym group."""
        groups: Dict[str, str] = {}
        for sentence in self.sentences:
            for piece in parse_markup(sentence):
                if isinstance(piece, EntityMention):
                    groups.setdefault(piece.entity_id, piece.synonym_group)
        return groups


class NewsDocument(Record):
    """A news item for distant-supervision annotation; title has sentence id 0."""
    doc_id: str
    title: str
    sentences: List[str] = Field(default_factory=list)


class FrameEntry(Record):
    entry: str
    polarity: Label
    weight: float = 1.0


class DocumentProcessor:
    """Reads and writes every file format used by the toolkit."""

    def read_corpus(self, file_path: Path) -> List[CorpusDocument]:
        documents = [CorpusDocument.model_validate(r) for r in self._read_jsonl(file_path)]
        logger.info(f"Read {len(documents)} corpus documents from {file_path}")
        return documents

    def write_corpus(self, file_path: Path, documents: Iterable[CorpusDocument]) -> int:
        return self._write_jsonl(file_path, documents)

    def read_news(self, file_path: Path) -> List[NewsDocument]:
        documents = [NewsDocument.model_validate(r) for r in self._read_jsonl(file_path)]
        logger.info(f"Read {len(documents)} news documents from {file_path}")
        return documents

    def write_news(self, file_path: Path, documents: Iterable[NewsDocument]) -> int:
        return self._write_jsonl(file_path, documents)

    def read_frame_lexicon(self, file_path: Path) -> List[FrameEntry]:
        entries = [FrameEntry.model_validate(r) for r in self._read_jsonl(file_path)]
        for entry in entries:
            if entry.polarity is Label.NEUTRAL:
                raise ValueError(f"Frame entry '{entry.entry}' must be pos or neg, got neu")
        logger.info(f"Read {len(entries)} frame entries from {file_path}")
        return entries

    def write_frame_lexicon(self, file_path: Path, entries: Iterable[FrameEntry]) -> int:
        return self._write_jsonl(file_path, entries)

    def read_sentiment_lexicon(self, file_path: Path) -> Dict[str, Label]:
        table = self._read_tsv(file_path, ["term", "label"])
        return {row.term: Label(row.label) for row in table.itertuples(index=False)}

    def read_pos_table(self, file_path: Path) -> Dict[str, str]:
        table = self._read_tsv(file_path, ["word", "tag"])
        return dict(zip(table["word"], table["tag"]))

    def read_lemma_table(self, file_path: Path) -> Dict[str, str]:
        table = self._read_tsv(file_path, ["word", "lemma"])
        return dict(zip(table["word"], table["lemma"]))

    def read_pair_list(self, file_path: Path) -> List[Tuple[str, str, Label]]:
        table = self._read_tsv(file_path, ["subject", "object", "polarity"])
        return [(r.subject, r.object, Label(r.polarity)) for r in table.itertuples(index=False)]

    def write_tsv(self, file_path: Path, rows: Iterable[Tuple], columns: List[str]):
        frame = pd.DataFrame(list(rows), columns=columns)
        Path(file_path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(file_path, sep="\t", header=False, index=False, quoting=csv.QUOTE_NONE)

    def _read_jsonl(self, file_path: Path) -> List[dict]:
        records = []
        with open(file_path, "r", encoding="utf-8") as file:
            for line_number, line in enumerate(file, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise ValueError(f"{file_path}:{line_number}: invalid JSON record: {e}")
        return records

    def _write_jsonl(self, file_path: Path, records: Iterable[BaseModel]) -> int:
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        count = 0
        with open(file_path, "w", encoding="utf-8") as file:
            for record in records:
                payload = record.model_dump(mode="json", exclude_none=True)
                file.write(json.dumps(payload, ensure_ascii=False) + "\n")
                count += 1
        logger.info(f"Wrote {count} records to {file_path}")
        return count

    def _read_tsv(self, file_path: Path, columns: List[str]) -> pd.DataFrame:
        try:
            return pd.read_csv(
                file_path,
                sep="\t",
                header=None,
                names=columns,
                dtype=str,
                quoting=csv.QUOTE_NONE,
                keep_default_na=False,
                comment="#",
            )
        except pd.errors.EmptyDataError:
            return pd.DataFrame(columns=columns)
